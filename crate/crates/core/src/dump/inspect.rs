//! Adapter for AOM inspect-tool output.
//!
//! The inspect tool reports decoder state per 4x4 unit as 2D arrays indexed
//! `[row][col]`. This adapter accepts the subset we need and coalesces
//! identical adjacent units back into their declared codec blocks:
//!
//! - `motionVectors`: `[dx8, dy8]` per unit (or `[dx8, dy8, dx8_1, dy8_1]`,
//!   first reference taken), integer 1/8-pel units.
//! - `blockSize`: AV1 `BLOCK_SIZE` enum value per unit, or a `[w, h]` pair.
//! - `referenceFrame`: reference index per unit (scalar or pair, first
//!   taken); `0` is INTRA_FRAME, `1..=7` map to slots `0..=6`.
//! - optional `skip`: nonzero marks skipped blocks.
//!
//! Input is either a JSON array of frame objects or one JSON object per
//! line. Frames are reindexed densely from 0 in input order. Reference maps
//! are synthesized assuming a streaming layout (every used slot points at
//! the previous frame) unless the frame carries an explicit `"refs"` map.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{
    BlockMode, BlockRecord, DumpError, Frame, FrameMeta, FrameType, MVDumpSequence, Warning,
};

/// AV1 BLOCK_SIZE enum, in specification order.
const BLOCK_SIZE_TABLE: [(u8, u8); 22] = [
    (4, 4),
    (4, 8),
    (8, 4),
    (8, 8),
    (8, 16),
    (16, 8),
    (16, 16),
    (16, 32),
    (32, 16),
    (32, 32),
    (32, 64),
    (64, 32),
    (64, 64),
    (64, 128),
    (128, 64),
    (128, 128),
    (4, 16),
    (16, 4),
    (8, 32),
    (32, 8),
    (16, 64),
    (64, 16),
];

pub fn normalize_aom_inspect(text: &[u8]) -> Result<(MVDumpSequence, Vec<Warning>), DumpError> {
    let frames_json = split_frames(text)?;
    let mut warnings = Vec::new();
    let mut frames = Vec::with_capacity(frames_json.len());
    for (dense_index, obj) in frames_json.iter().enumerate() {
        let frame = convert_frame(obj, dense_index as u32, &mut warnings)?;
        frames.push(frame);
    }
    let (seq, mut more) = MVDumpSequence::new("aom-inspect".into(), frames)?;
    warnings.append(&mut more);
    Ok((seq, warnings))
}

fn split_frames(text: &[u8]) -> Result<Vec<Value>, DumpError> {
    let parsed: Result<Value, _> = serde_json::from_slice(text);
    if let Ok(v) = parsed {
        return match v {
            Value::Array(items) => Ok(items),
            obj @ Value::Object(_) => Ok(vec![obj]),
            _ => Err(DumpError::Malformed("expected object or array".into())),
        };
    }
    // fall back to one JSON object per line
    let text =
        std::str::from_utf8(text).map_err(|_| DumpError::Malformed("input is not utf-8".into()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim().trim_end_matches(',');
        if line.is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .map_err(|e| DumpError::Malformed(format!("bad frame object: {e}")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(DumpError::Malformed("no frame objects found".into()));
    }
    Ok(out)
}

fn convert_frame(
    obj: &Value,
    dense_index: u32,
    warnings: &mut Vec<Warning>,
) -> Result<Frame, DumpError> {
    let width = get_u32(obj, &["width", "frameWidth"])
        .ok_or_else(|| DumpError::Malformed("frame missing width".into()))?;
    let height = get_u32(obj, &["height", "frameHeight"])
        .ok_or_else(|| DumpError::Malformed("frame missing height".into()))?;

    let mv = layer(obj, "motionVectors")?;
    let bs = layer(obj, "blockSize")?;
    let rf = layer(obj, "referenceFrame")?;
    let skip = obj.get("skip").and_then(Value::as_array);

    let rows = (height as usize).div_ceil(4);
    let cols = (width as usize).div_ceil(4);
    if mv.len() < rows || bs.len() < rows || rf.len() < rows {
        return Err(DumpError::Malformed(format!(
            "layer shorter than {rows} unit rows"
        )));
    }

    let declared_type = get_u32(obj, &["frameType", "type"]);
    let frame_type = match declared_type {
        Some(0) => FrameType::Intra, // KEY_FRAME
        Some(_) => FrameType::Inter,
        None => {
            if dense_index == 0 {
                FrameType::Intra
            } else {
                FrameType::Inter
            }
        }
    };

    let mut visited = vec![false; rows * cols];
    let mut blocks = Vec::new();
    let mut used_slots: BTreeMap<u8, ()> = BTreeMap::new();
    let mut mv_disagreements = 0u64;

    for r in 0..rows {
        for c in 0..cols {
            if visited[r * cols + c] {
                continue;
            }
            let (w, h) = unit_block_size(bs, r, c)?;
            let ref_val = unit_ref(rf, r, c)?;
            let (dx8, dy8) = unit_mv(mv, r, c)?;
            let skipped = skip
                .map(|s| unit_scalar(s, r, c).unwrap_or(0) != 0)
                .unwrap_or(false);

            let h_units = (h as usize) / 4;
            let w_units = (w as usize) / 4;
            for rr in r..(r + h_units).min(rows) {
                for cc in c..(c + w_units).min(cols) {
                    visited[rr * cols + cc] = true;
                    if !(rr == r && cc == c) {
                        if let Ok(other) = unit_mv(mv, rr, cc) {
                            if other != (dx8, dy8) {
                                mv_disagreements += 1;
                            }
                        }
                    }
                }
            }

            let (mode, ref_slot, mv_raw) = if ref_val <= 0 || frame_type == FrameType::Intra {
                (BlockMode::Intra, None, (0, 0))
            } else if skipped {
                (BlockMode::Skip, None, (0, 0))
            } else {
                let slot = ((ref_val - 1) as u8).min(super::MAX_REF_SLOT);
                used_slots.insert(slot, ());
                (BlockMode::Inter, Some(slot), (dx8, dy8))
            };
            blocks.push(BlockRecord {
                x0: (c * 4) as u16,
                y0: (r * 4) as u16,
                w,
                h,
                mode,
                ref_slot,
                mv_raw,
            });
        }
    }

    if mv_disagreements > 0 {
        warnings.push(format!(
            "frame {dense_index}: {mv_disagreements} units disagree with their block's top-left motion vector"
        ));
    }

    // explicit refs win; otherwise every used slot points at the previous frame
    let ref_map: BTreeMap<u8, u32> = if frame_type == FrameType::Intra {
        BTreeMap::new()
    } else if let Some(refs) = obj.get("refs").and_then(Value::as_object) {
        refs.iter()
            .filter_map(|(k, v)| Some((k.parse().ok()?, v.as_u64()? as u32)))
            .collect()
    } else {
        used_slots
            .keys()
            .map(|&slot| (slot, dense_index.saturating_sub(1)))
            .collect()
    };

    Ok(Frame {
        meta: FrameMeta {
            frame_index: dense_index,
            width_px: width,
            height_px: height,
            frame_type,
            ref_map,
        },
        blocks,
    })
}

fn layer<'a>(obj: &'a Value, name: &'static str) -> Result<&'a Vec<Value>, DumpError> {
    obj.get(name)
        .and_then(Value::as_array)
        .ok_or(DumpError::MissingLayer(name))
}

fn get_u32(obj: &Value, keys: &[&str]) -> Option<u32> {
    keys.iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_u64))
        .map(|v| v as u32)
}

fn unit(layer: &[Value], r: usize, c: usize) -> Result<&Value, DumpError> {
    layer
        .get(r)
        .and_then(Value::as_array)
        .and_then(|row| row.get(c))
        .ok_or_else(|| DumpError::Malformed(format!("layer missing unit ({r},{c})")))
}

fn unit_scalar(layer: &[Value], r: usize, c: usize) -> Result<i64, DumpError> {
    let v = unit(layer, r, c)?;
    match v {
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| DumpError::Malformed("non-integer unit".into())),
        Value::Array(a) => a
            .first()
            .and_then(Value::as_i64)
            .ok_or_else(|| DumpError::Malformed("empty unit array".into())),
        _ => Err(DumpError::Malformed("unexpected unit value".into())),
    }
}

fn unit_mv(layer: &[Value], r: usize, c: usize) -> Result<(i16, i16), DumpError> {
    let v = unit(layer, r, c)?;
    let arr = v
        .as_array()
        .ok_or_else(|| DumpError::Malformed("motion vector unit is not an array".into()))?;
    if arr.len() < 2 {
        return Err(DumpError::Malformed("motion vector unit too short".into()));
    }
    let dx = arr[0]
        .as_i64()
        .ok_or_else(|| DumpError::Malformed("non-integer motion vector".into()))?;
    let dy = arr[1]
        .as_i64()
        .ok_or_else(|| DumpError::Malformed("non-integer motion vector".into()))?;
    Ok((dx as i16, dy as i16))
}

fn unit_block_size(layer: &[Value], r: usize, c: usize) -> Result<(u8, u8), DumpError> {
    let v = unit(layer, r, c)?;
    match v {
        Value::Number(n) => {
            let idx = n
                .as_u64()
                .ok_or_else(|| DumpError::Malformed("bad block size".into()))?;
            BLOCK_SIZE_TABLE
                .get(idx as usize)
                .copied()
                .ok_or_else(|| DumpError::Malformed(format!("block size enum {idx} out of range")))
        }
        Value::Array(a) if a.len() >= 2 => {
            let w = a[0].as_u64().unwrap_or(0) as u8;
            let h = a[1].as_u64().unwrap_or(0) as u8;
            Ok((w, h))
        }
        _ => Err(DumpError::Malformed("unexpected block size value".into())),
    }
}

fn unit_ref(layer: &[Value], r: usize, c: usize) -> Result<i64, DumpError> {
    unit_scalar(layer, r, c)
}
