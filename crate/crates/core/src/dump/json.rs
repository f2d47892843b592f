//! JSON dump encoding.
//!
//! Schema (unknown fields are ignored):
//! ```json
//! {"version":1,"source":"tag","frames":[
//!   {"index":0,"width":64,"height":64,"type":"INTRA","refs":{},
//!    "blocks":[[x0,y0,w,h,mode,ref_slot,dx8,dy8], ...]}]}
//! ```
//! `mode`: 0=INTER, 1=INTRA, 2=SKIP. `ref_slot`: -1 when absent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    BlockMode, BlockRecord, DumpError, Frame, FrameMeta, FrameType, MVDumpSequence, Warning,
};

pub const JSON_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct JsonDump {
    version: u32,
    #[serde(default)]
    source: String,
    #[serde(default)]
    frames: Vec<JsonFrame>,
}

#[derive(Serialize, Deserialize)]
struct JsonFrame {
    index: u32,
    width: u32,
    height: u32,
    #[serde(rename = "type")]
    frame_type: String,
    #[serde(default)]
    refs: BTreeMap<String, u32>,
    #[serde(default)]
    blocks: Vec<[i32; 8]>,
}

pub fn parse_json(bytes: &[u8]) -> Result<(MVDumpSequence, Vec<Warning>), DumpError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| DumpError::Malformed(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DumpError::Malformed("missing version".into()))?;
    if version != JSON_VERSION as u64 {
        return Err(DumpError::VersionUnsupported(version as u32));
    }
    let raw: JsonDump =
        serde_json::from_value(value).map_err(|e| DumpError::Malformed(e.to_string()))?;

    let mut frames = Vec::with_capacity(raw.frames.len());
    for jf in raw.frames {
        let frame_type = match jf.frame_type.as_str() {
            "INTRA" => FrameType::Intra,
            "INTER" => FrameType::Inter,
            other => {
                return Err(DumpError::Malformed(format!(
                    "unknown frame type {other:?}"
                )));
            }
        };
        let mut ref_map = BTreeMap::new();
        for (slot, target) in jf.refs {
            let slot: u8 = slot
                .parse()
                .map_err(|_| DumpError::Malformed(format!("bad ref slot key {slot:?}")))?;
            ref_map.insert(slot, target);
        }
        let mut blocks = Vec::with_capacity(jf.blocks.len());
        for b in jf.blocks {
            let [x0, y0, w, h, mode, ref_slot, dx8, dy8] = b;
            let in_u16 = |v: i32, what: &str| -> Result<u16, DumpError> {
                u16::try_from(v)
                    .map_err(|_| DumpError::Malformed(format!("{what} {v} out of range")))
            };
            let in_u8 = |v: i32, what: &str| -> Result<u8, DumpError> {
                u8::try_from(v)
                    .map_err(|_| DumpError::Malformed(format!("{what} {v} out of range")))
            };
            let in_i16 = |v: i32, what: &str| -> Result<i16, DumpError> {
                i16::try_from(v)
                    .map_err(|_| DumpError::Malformed(format!("{what} {v} out of range")))
            };
            blocks.push(BlockRecord {
                x0: in_u16(x0, "x0")?,
                y0: in_u16(y0, "y0")?,
                w: in_u8(w, "w")?,
                h: in_u8(h, "h")?,
                mode: BlockMode::from_wire(mode as i64)?,
                ref_slot: if ref_slot < 0 {
                    None
                } else {
                    Some(in_u8(ref_slot, "ref_slot")?)
                },
                mv_raw: (in_i16(dx8, "dx8")?, in_i16(dy8, "dy8")?),
            });
        }
        frames.push(Frame {
            meta: FrameMeta {
                frame_index: jf.index,
                width_px: jf.width,
                height_px: jf.height,
                frame_type,
                ref_map,
            },
            blocks,
        });
    }
    MVDumpSequence::new(raw.source, frames)
}

pub fn write_json(seq: &MVDumpSequence) -> Vec<u8> {
    let frames = seq
        .frames
        .iter()
        .map(|f| JsonFrame {
            index: f.meta.frame_index,
            width: f.meta.width_px,
            height: f.meta.height_px,
            frame_type: f.meta.frame_type.to_string(),
            refs: f
                .meta
                .ref_map
                .iter()
                .map(|(slot, target)| (slot.to_string(), *target))
                .collect(),
            blocks: f
                .blocks
                .iter()
                .map(|b| {
                    [
                        b.x0 as i32,
                        b.y0 as i32,
                        b.w as i32,
                        b.h as i32,
                        b.mode.to_wire() as i32,
                        b.ref_slot.map_or(-1, |s| s as i32),
                        b.mv_raw.0 as i32,
                        b.mv_raw.1 as i32,
                    ]
                })
                .collect(),
        })
        .collect();
    let dump = JsonDump {
        version: JSON_VERSION,
        source: seq.source_tag.clone(),
        frames,
    };
    let mut out = serde_json::to_vec(&dump).expect("dump serialization cannot fail");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_gate() {
        let err = parse_json(br#"{"version":2,"frames":[]}"#).unwrap_err();
        assert!(matches!(err, DumpError::VersionUnsupported(2)));
    }

    #[test]
    fn unknown_fields_ignored() {
        let (seq, _) =
            parse_json(br#"{"version":1,"source":"x","frames":[],"extra":{"a":1}}"#).unwrap();
        assert_eq!(seq.source_tag, "x");
    }

    #[test]
    fn syntax_error_is_malformed() {
        assert!(matches!(
            parse_json(b"{not json").unwrap_err(),
            DumpError::Malformed(_)
        ));
    }
}
