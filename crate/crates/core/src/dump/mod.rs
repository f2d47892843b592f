//! Motion-vector dump interchange format.
//!
//! A dump is the decoded-metadata stand-in for an AV1 bitstream: per frame,
//! the block partition plus one raw motion vector per block in 1/8-pel
//! integer units. Two encodings are supported (JSON and a packed binary
//! layout) plus an adapter for the AOM inspect tool output.

mod binary;
mod inspect;
mod json;

pub use binary::{parse_binary, write_binary};
pub use inspect::normalize_aom_inspect;
pub use json::{parse_json, write_json};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed block edge lengths in pixels.
pub const BLOCK_SIZES: [u8; 6] = [4, 8, 16, 32, 64, 128];

/// Highest reference slot index a block may use.
pub const MAX_REF_SLOT: u8 = 6;

#[derive(Debug, Error)]
pub enum DumpError {
    /// Input bytes do not form a syntactically valid dump.
    #[error("malformed dump: {0}")]
    Malformed(String),
    /// Structurally valid input that violates a sequence invariant.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("unsupported dump version {0}")]
    VersionUnsupported(u32),
    /// A required inspect layer is absent.
    #[error("missing inspect layer: {0}")]
    MissingLayer(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// On-disk encoding of a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    Json,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameType {
    Intra,
    Inter,
}

/// Prediction mode of one block. Wire values: 0=INTER, 1=INTRA, 2=SKIP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockMode {
    Inter,
    Intra,
    Skip,
}

impl BlockMode {
    pub fn to_wire(self) -> u8 {
        match self {
            BlockMode::Inter => 0,
            BlockMode::Intra => 1,
            BlockMode::Skip => 2,
        }
    }

    pub fn from_wire(v: i64) -> Result<Self, DumpError> {
        match v {
            0 => Ok(BlockMode::Inter),
            1 => Ok(BlockMode::Intra),
            2 => Ok(BlockMode::Skip),
            other => Err(DumpError::Malformed(format!("unknown block mode {other}"))),
        }
    }
}

/// One codec block: grid position, size, reference slot and raw MV.
///
/// `mv_raw` is in 1/8-pel integer units exactly as carried by the bitstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub x0: u16,
    pub y0: u16,
    pub w: u8,
    pub h: u8,
    pub mode: BlockMode,
    /// Reference slot 0..=6, `None` for blocks without inter prediction.
    pub ref_slot: Option<u8>,
    pub mv_raw: (i16, i16),
}

impl BlockRecord {
    /// True when the block carries a usable motion vector.
    pub fn emits(&self) -> bool {
        self.mode == BlockMode::Inter && self.mv_raw != (0, 0) && self.ref_slot.is_some()
    }
}

/// Per-frame metadata: dimensions, type and the slot-to-frame reference map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMeta {
    pub frame_index: u32,
    pub width_px: u32,
    pub height_px: u32,
    pub frame_type: FrameType,
    /// ref slot -> frame index of the reference. Backward prediction only.
    pub ref_map: BTreeMap<u8, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub meta: FrameMeta,
    pub blocks: Vec<BlockRecord>,
}

/// A full dump: ordered frames plus a free-form source tag.
#[derive(Debug, Clone, PartialEq)]
pub struct MVDumpSequence {
    pub source_tag: String,
    pub frames: Vec<Frame>,
}

/// Non-fatal validation findings (e.g. extra intra frames).
pub type Warning = String;

impl MVDumpSequence {
    /// Builds a sequence, canonicalizing block order and checking every
    /// invariant. Returns warnings for conditions that are tolerated.
    pub fn new(source_tag: String, frames: Vec<Frame>) -> Result<(Self, Vec<Warning>), DumpError> {
        let mut seq = MVDumpSequence { source_tag, frames };
        let warnings = seq.validate_and_canonicalize()?;
        Ok((seq, warnings))
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    fn validate_and_canonicalize(&mut self) -> Result<Vec<Warning>, DumpError> {
        let mut warnings = Vec::new();
        for (pos, frame) in self.frames.iter_mut().enumerate() {
            let meta = &frame.meta;
            if meta.frame_index as usize != pos {
                return Err(DumpError::InvariantViolation(format!(
                    "frame index {} at position {pos}; indices must be dense from 0",
                    meta.frame_index
                )));
            }
            if meta.width_px == 0 || meta.height_px == 0 {
                return Err(DumpError::InvariantViolation(format!(
                    "frame {}: zero dimension",
                    meta.frame_index
                )));
            }
            if !meta.width_px.is_multiple_of(4) || !meta.height_px.is_multiple_of(4) {
                return Err(DumpError::InvariantViolation(format!(
                    "frame {}: dimensions {}x{} not divisible by 4",
                    meta.frame_index, meta.width_px, meta.height_px
                )));
            }
            if meta.frame_type == FrameType::Intra && !meta.ref_map.is_empty() {
                return Err(DumpError::InvariantViolation(format!(
                    "intra frame {} has a non-empty reference map",
                    meta.frame_index
                )));
            }
            for (&slot, &target) in &meta.ref_map {
                if slot > MAX_REF_SLOT {
                    return Err(DumpError::InvariantViolation(format!(
                        "frame {}: reference slot {slot} out of range",
                        meta.frame_index
                    )));
                }
                if target >= meta.frame_index {
                    return Err(DumpError::InvariantViolation(format!(
                        "frame {} references frame {target}; only previously decoded frames are valid",
                        meta.frame_index
                    )));
                }
            }

            for b in &frame.blocks {
                if !BLOCK_SIZES.contains(&b.w) || !BLOCK_SIZES.contains(&b.h) {
                    return Err(DumpError::InvariantViolation(format!(
                        "frame {}: block {}x{} outside the 4..128 size set",
                        meta.frame_index, b.w, b.h
                    )));
                }
                if (b.x0 as u32) >= meta.width_px || (b.y0 as u32) >= meta.height_px {
                    return Err(DumpError::InvariantViolation(format!(
                        "frame {}: block origin ({},{}) outside the frame",
                        meta.frame_index, b.x0, b.y0
                    )));
                }
                if b.mode != BlockMode::Inter && (b.mv_raw != (0, 0) || b.ref_slot.is_some()) {
                    return Err(DumpError::InvariantViolation(format!(
                        "frame {}: non-inter block at ({},{}) carries mv or ref",
                        meta.frame_index, b.x0, b.y0
                    )));
                }
                if let Some(slot) = b.ref_slot {
                    if !meta.ref_map.contains_key(&slot) {
                        return Err(DumpError::InvariantViolation(format!(
                            "frame {}: block at ({},{}) uses unmapped ref slot {slot}",
                            meta.frame_index, b.x0, b.y0
                        )));
                    }
                } else if b.emits() {
                    unreachable!();
                }
            }

            // Canonical raster order keeps downstream iteration deterministic
            // regardless of the order the producer wrote blocks in.
            frame.blocks.sort_by_key(|b| (b.y0, b.x0));
            check_tiling(frame)?;
        }

        let n_intra = self
            .frames
            .iter()
            .filter(|f| f.meta.frame_type == FrameType::Intra)
            .count();
        if !self.frames.is_empty() {
            if self.frames[0].meta.frame_type != FrameType::Intra {
                warnings.push("first frame is not intra".to_string());
            }
            if n_intra > 1 {
                warnings.push(format!(
                    "{n_intra} intra frames; streaming configs carry exactly one"
                ));
            }
        }
        Ok(warnings)
    }
}

/// Sweep-line tiling check: blocks must not overlap and must cover the whole
/// frame rectangle once clipped to it. Padding blocks may extend past the
/// right/bottom edge.
fn check_tiling(frame: &Frame) -> Result<(), DumpError> {
    let w = frame.meta.width_px;
    let h = frame.meta.height_px;
    let idx = frame.meta.frame_index;
    if frame.blocks.is_empty() {
        return Err(DumpError::InvariantViolation(format!(
            "frame {idx}: no blocks"
        )));
    }

    let mut ys: Vec<u32> = Vec::with_capacity(frame.blocks.len() * 2);
    for b in &frame.blocks {
        ys.push(b.y0 as u32);
        ys.push((b.y0 as u32 + b.h as u32).min(h));
    }
    ys.push(0);
    ys.push(h);
    ys.sort_unstable();
    ys.dedup();

    for band in ys.windows(2) {
        let (y_lo, y_hi) = (band[0], band[1]);
        if y_lo >= h || y_lo == y_hi {
            continue;
        }
        let mut spans: Vec<(u32, u32)> = frame
            .blocks
            .iter()
            .filter(|b| (b.y0 as u32) <= y_lo && b.y0 as u32 + b.h as u32 > y_lo)
            .map(|b| (b.x0 as u32, (b.x0 as u32 + b.w as u32).min(w)))
            .collect();
        spans.sort_unstable();
        let mut cursor = 0u32;
        for (x_lo, x_hi) in spans {
            if x_lo != cursor {
                return Err(DumpError::InvariantViolation(format!(
                    "frame {idx}: tiling {} at x={} in rows {}..{}",
                    if x_lo > cursor { "gap" } else { "overlap" },
                    cursor.min(x_lo),
                    y_lo,
                    y_hi
                )));
            }
            cursor = x_hi;
        }
        if cursor != w {
            return Err(DumpError::InvariantViolation(format!(
                "frame {idx}: rows {}..{} covered only to x={}",
                y_lo, y_hi, cursor
            )));
        }
    }
    Ok(())
}

/// Parses a dump in the given format, validating all invariants.
pub fn parse_dump(
    bytes: &[u8],
    format: DumpFormat,
) -> Result<(MVDumpSequence, Vec<Warning>), DumpError> {
    match format {
        DumpFormat::Json => parse_json(bytes),
        DumpFormat::Binary => parse_binary(bytes),
    }
}

/// Serializes a valid sequence. `parse_dump(write_dump(s)) == s`, bit-exact
/// for the binary encoding.
pub fn write_dump(seq: &MVDumpSequence, format: DumpFormat) -> Vec<u8> {
    match format {
        DumpFormat::Json => write_json(seq),
        DumpFormat::Binary => write_binary(seq),
    }
}

/// Sniffs the encoding from leading bytes.
pub fn detect_format(bytes: &[u8]) -> DumpFormat {
    if bytes.starts_with(binary::MAGIC) {
        DumpFormat::Binary
    } else {
        DumpFormat::Json
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameType::Intra => write!(f, "INTRA"),
            FrameType::Inter => write!(f, "INTER"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;
    use proptest::prelude::*;

    fn single_frame_seq() -> (MVDumpSequence, Vec<Warning>) {
        let frame0 = Frame {
            meta: FrameMeta {
                frame_index: 0,
                width_px: 16,
                height_px: 16,
                frame_type: FrameType::Intra,
                ref_map: BTreeMap::new(),
            },
            blocks: vec![BlockRecord {
                x0: 0,
                y0: 0,
                w: 16,
                h: 16,
                mode: BlockMode::Intra,
                ref_slot: None,
                mv_raw: (0, 0),
            }],
        };
        let frame1 = Frame {
            meta: FrameMeta {
                frame_index: 1,
                width_px: 16,
                height_px: 16,
                frame_type: FrameType::Inter,
                ref_map: [(0u8, 0u32)].into_iter().collect(),
            },
            blocks: vec![BlockRecord {
                x0: 0,
                y0: 0,
                w: 16,
                h: 16,
                mode: BlockMode::Inter,
                ref_slot: Some(0),
                mv_raw: (8, -16),
            }],
        };
        MVDumpSequence::new("test".into(), vec![frame0, frame1]).unwrap()
    }

    #[test]
    fn minimal_inter_block_parses() {
        let (seq, warnings) = single_frame_seq();
        assert!(warnings.is_empty());
        let bytes = write_dump(&seq, DumpFormat::Json);
        let (parsed, _) = parse_dump(&bytes, DumpFormat::Json).unwrap();
        assert_eq!(parsed.n_frames(), 2);
        assert_eq!(parsed.frames[1].blocks[0].mv_raw, (8, -16));
        assert_eq!(parsed, seq);
    }

    #[test]
    fn forward_reference_rejected() {
        let frame0 = Frame {
            meta: FrameMeta {
                frame_index: 0,
                width_px: 16,
                height_px: 16,
                frame_type: FrameType::Intra,
                ref_map: BTreeMap::new(),
            },
            blocks: vec![BlockRecord {
                x0: 0,
                y0: 0,
                w: 16,
                h: 16,
                mode: BlockMode::Intra,
                ref_slot: None,
                mv_raw: (0, 0),
            }],
        };
        let mut frame1 = frame0.clone();
        frame1.meta.frame_index = 1;
        frame1.meta.frame_type = FrameType::Inter;
        frame1.meta.ref_map = [(0u8, 2u32)].into_iter().collect();
        let err = MVDumpSequence::new("t".into(), vec![frame0, frame1]).unwrap_err();
        assert!(matches!(err, DumpError::InvariantViolation(_)), "{err}");
    }

    #[test]
    fn overlap_and_gap_rejected() {
        let make = |blocks: Vec<BlockRecord>| {
            MVDumpSequence::new(
                "t".into(),
                vec![Frame {
                    meta: FrameMeta {
                        frame_index: 0,
                        width_px: 16,
                        height_px: 8,
                        frame_type: FrameType::Intra,
                        ref_map: BTreeMap::new(),
                    },
                    blocks,
                }],
            )
        };
        let intra = |x0: u16, y0: u16, w: u8, h: u8| BlockRecord {
            x0,
            y0,
            w,
            h,
            mode: BlockMode::Intra,
            ref_slot: None,
            mv_raw: (0, 0),
        };
        // full cover
        assert!(make(vec![intra(0, 0, 8, 8), intra(8, 0, 8, 8)]).is_ok());
        // overlap
        assert!(make(vec![intra(0, 0, 16, 8), intra(8, 0, 8, 8)]).is_err());
        // gap
        assert!(make(vec![intra(0, 0, 8, 8)]).is_err());
        // padding past the right edge is fine
        assert!(make(vec![intra(0, 0, 8, 8), intra(8, 0, 16, 8)]).is_ok());
    }

    #[test]
    fn non_streaming_layouts_warn_but_parse() {
        let intra = |index: u32| Frame {
            meta: FrameMeta {
                frame_index: index,
                width_px: 16,
                height_px: 16,
                frame_type: FrameType::Intra,
                ref_map: BTreeMap::new(),
            },
            blocks: vec![BlockRecord {
                x0: 0,
                y0: 0,
                w: 16,
                h: 16,
                mode: BlockMode::Intra,
                ref_slot: None,
                mv_raw: (0, 0),
            }],
        };
        // second intra frame: tolerated with a warning
        let (_, warnings) = MVDumpSequence::new("t".into(), vec![intra(0), intra(1)]).unwrap();
        assert_eq!(warnings.len(), 1, "{warnings:?}");
        // inter-first layout: also just a warning
        let mut first = intra(0);
        first.meta.frame_type = FrameType::Inter;
        let (_, warnings) = MVDumpSequence::new("t".into(), vec![first]).unwrap();
        assert!(
            warnings.iter().any(|w| w.contains("not intra")),
            "{warnings:?}"
        );
    }

    #[test]
    fn empty_sequence_round_trips() {
        let (seq, _) = MVDumpSequence::new("empty".into(), vec![]).unwrap();
        for fmt in [DumpFormat::Json, DumpFormat::Binary] {
            let bytes = write_dump(&seq, fmt);
            let (parsed, _) = parse_dump(&bytes, fmt).unwrap();
            assert_eq!(parsed, seq);
        }
    }

    #[test]
    fn cross_format_equality() {
        let (seq, _) = single_frame_seq();
        let j = write_dump(&seq, DumpFormat::Json);
        let b = write_dump(&seq, DumpFormat::Binary);
        let (from_json, _) = parse_dump(&j, DumpFormat::Json).unwrap();
        let (from_bin, _) = parse_dump(&b, DumpFormat::Binary).unwrap();
        assert_eq!(from_json, from_bin);
        // binary round trip is bit exact
        assert_eq!(write_dump(&from_bin, DumpFormat::Binary), b);
    }

    #[test]
    fn format_detection() {
        let (seq, _) = single_frame_seq();
        assert_eq!(
            detect_format(&write_dump(&seq, DumpFormat::Binary)),
            DumpFormat::Binary
        );
        assert_eq!(
            detect_format(&write_dump(&seq, DumpFormat::Json)),
            DumpFormat::Json
        );
    }

    proptest! {
        #[test]
        fn parse_write_identity(seed in any::<u64>()) {
            let seq = testutil::random_valid_sequence(seed);
            for fmt in [DumpFormat::Json, DumpFormat::Binary] {
                let bytes = write_dump(&seq, fmt);
                let (parsed, _) = parse_dump(&bytes, fmt).unwrap();
                prop_assert_eq!(&parsed, &seq);
            }
        }

        #[test]
        fn random_tilings_validate(seed in any::<u64>()) {
            // the generator must always produce sequences the validator accepts
            let seq = testutil::random_valid_sequence(seed);
            prop_assert!(seq.frames.iter().all(|f| !f.blocks.is_empty()));
        }
    }
}
