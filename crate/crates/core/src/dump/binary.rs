//! Packed binary dump encoding.
//!
//! Little-endian layout:
//! ```text
//! "MVD1"  u32 version  u32 source_len  source bytes  u32 n_frames
//! per frame:
//!   u32 index  u16 width  u16 height  u8 type(0=INTRA,1=INTER)  u8 n_refs
//!   n_refs * (u8 slot, u32 target)
//!   u32 n_blocks
//!   n_blocks * 16-byte records:
//!     u16 x0  u16 y0  u8 w  u8 h  u8 mode  i8 ref_slot(-1=none)
//!     i16 dx8  i16 dy8  u32 reserved=0
//! ```

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{
    BlockMode, BlockRecord, DumpError, Frame, FrameMeta, FrameType, MVDumpSequence, Warning,
};

pub(super) const MAGIC: &[u8; 4] = b"MVD1";
const VERSION: u32 = 1;

pub fn write_binary(seq: &MVDumpSequence) -> Vec<u8> {
    let mut out = Vec::new();
    out.write_all(MAGIC).unwrap();
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u32::<LittleEndian>(seq.source_tag.len() as u32)
        .unwrap();
    out.write_all(seq.source_tag.as_bytes()).unwrap();
    out.write_u32::<LittleEndian>(seq.frames.len() as u32)
        .unwrap();
    for f in &seq.frames {
        out.write_u32::<LittleEndian>(f.meta.frame_index).unwrap();
        out.write_u16::<LittleEndian>(f.meta.width_px as u16)
            .unwrap();
        out.write_u16::<LittleEndian>(f.meta.height_px as u16)
            .unwrap();
        out.write_u8(match f.meta.frame_type {
            FrameType::Intra => 0,
            FrameType::Inter => 1,
        })
        .unwrap();
        out.write_u8(f.meta.ref_map.len() as u8).unwrap();
        for (&slot, &target) in &f.meta.ref_map {
            out.write_u8(slot).unwrap();
            out.write_u32::<LittleEndian>(target).unwrap();
        }
        out.write_u32::<LittleEndian>(f.blocks.len() as u32)
            .unwrap();
        for b in &f.blocks {
            out.write_u16::<LittleEndian>(b.x0).unwrap();
            out.write_u16::<LittleEndian>(b.y0).unwrap();
            out.write_u8(b.w).unwrap();
            out.write_u8(b.h).unwrap();
            out.write_u8(b.mode.to_wire()).unwrap();
            out.write_i8(b.ref_slot.map_or(-1, |s| s as i8)).unwrap();
            out.write_i16::<LittleEndian>(b.mv_raw.0).unwrap();
            out.write_i16::<LittleEndian>(b.mv_raw.1).unwrap();
            out.write_u32::<LittleEndian>(0).unwrap();
        }
    }
    out
}

pub fn parse_binary(bytes: &[u8]) -> Result<(MVDumpSequence, Vec<Warning>), DumpError> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)
        .map_err(|_| DumpError::Malformed("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(DumpError::Malformed("bad magic".into()));
    }
    let version = read_u32(&mut cur)?;
    if version != VERSION {
        return Err(DumpError::VersionUnsupported(version));
    }
    let source_len = read_u32(&mut cur)? as usize;
    let mut source = vec![0u8; source_len];
    cur.read_exact(&mut source)
        .map_err(|_| DumpError::Malformed("truncated source tag".into()))?;
    let source_tag = String::from_utf8(source)
        .map_err(|_| DumpError::Malformed("source tag is not utf-8".into()))?;

    let n_frames = read_u32(&mut cur)? as usize;
    let mut frames = Vec::with_capacity(n_frames.min(1 << 20));
    for _ in 0..n_frames {
        let frame_index = read_u32(&mut cur)?;
        let width_px = read_u16(&mut cur)? as u32;
        let height_px = read_u16(&mut cur)? as u32;
        let frame_type = match read_u8(&mut cur)? {
            0 => FrameType::Intra,
            1 => FrameType::Inter,
            other => return Err(DumpError::Malformed(format!("bad frame type {other}"))),
        };
        let n_refs = read_u8(&mut cur)? as usize;
        let mut ref_map = BTreeMap::new();
        for _ in 0..n_refs {
            let slot = read_u8(&mut cur)?;
            let target = read_u32(&mut cur)?;
            ref_map.insert(slot, target);
        }
        let n_blocks = read_u32(&mut cur)? as usize;
        let mut blocks = Vec::with_capacity(n_blocks.min(1 << 24));
        for _ in 0..n_blocks {
            let x0 = read_u16(&mut cur)?;
            let y0 = read_u16(&mut cur)?;
            let w = read_u8(&mut cur)?;
            let h = read_u8(&mut cur)?;
            let mode = BlockMode::from_wire(read_u8(&mut cur)? as i64)?;
            let ref_slot = match read_i8(&mut cur)? {
                -1 => None,
                s if s >= 0 => Some(s as u8),
                s => return Err(DumpError::Malformed(format!("bad ref slot {s}"))),
            };
            let dx8 = read_i16(&mut cur)?;
            let dy8 = read_i16(&mut cur)?;
            let _reserved = read_u32(&mut cur)?;
            blocks.push(BlockRecord {
                x0,
                y0,
                w,
                h,
                mode,
                ref_slot,
                mv_raw: (dx8, dy8),
            });
        }
        frames.push(Frame {
            meta: FrameMeta {
                frame_index,
                width_px,
                height_px,
                frame_type,
                ref_map,
            },
            blocks,
        });
    }
    MVDumpSequence::new(source_tag, frames)
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32, DumpError> {
    cur.read_u32::<LittleEndian>()
        .map_err(|_| DumpError::Malformed("truncated input".into()))
}
fn read_u16(cur: &mut Cursor<&[u8]>) -> Result<u16, DumpError> {
    cur.read_u16::<LittleEndian>()
        .map_err(|_| DumpError::Malformed("truncated input".into()))
}
fn read_i16(cur: &mut Cursor<&[u8]>) -> Result<i16, DumpError> {
    cur.read_i16::<LittleEndian>()
        .map_err(|_| DumpError::Malformed("truncated input".into()))
}
fn read_u8(cur: &mut Cursor<&[u8]>) -> Result<u8, DumpError> {
    cur.read_u8()
        .map_err(|_| DumpError::Malformed("truncated input".into()))
}
fn read_i8(cur: &mut Cursor<&[u8]>) -> Result<i8, DumpError> {
    cur.read_i8()
        .map_err(|_| DumpError::Malformed("truncated input".into()))
}
