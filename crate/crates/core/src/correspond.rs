//! Sub-pixel correspondences from block motion vectors.
//!
//! Every inter block with a nonzero motion vector emits a source keypoint at
//! its center and a target keypoint displaced by the scaled vector in the
//! referenced frame; the target joins that frame's keypoint set. Because
//! frames are processed in decreasing index order, targets injected into a
//! frame are themselves re-emitted through whatever block contains them,
//! chaining correspondences across many frames.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dump::{BlockRecord, Frame, MVDumpSequence};

#[derive(Debug, Error)]
pub enum CorrespondError {
    #[error("store serialization: {0}")]
    Serde(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Converts a raw 1/8-pel integer vector to pixels. Exact: the results are
/// binary fractions.
#[inline]
pub fn scale_mv(mv_raw: (i16, i16)) -> Vector2<f64> {
    Vector2::new(mv_raw.0 as f64 / 8.0, mv_raw.1 as f64 / 8.0)
}

/// Largest representable offset below a frame edge. Keeps clamped centers on
/// a binary fraction so displacement arithmetic stays exact.
const EDGE_INSET: f64 = 1.0 / 1024.0;

/// Center of a block on the continuous pixel grid, clamped just inside the
/// frame for padding blocks that extend past the right/bottom edge.
pub fn block_center(b: &BlockRecord, width_px: u32, height_px: u32) -> Vector2<f64> {
    let cx = b.x0 as f64 + b.w as f64 / 2.0;
    let cy = b.y0 as f64 + b.h as f64 / 2.0;
    Vector2::new(
        cx.min(width_px as f64 - EDGE_INSET),
        cy.min(height_px as f64 - EDGE_INSET),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeypointOrigin {
    /// Center of the block with this raster index in its frame.
    BlockCenter { block: u32 },
    /// Motion-vector target injected from a keypoint of a later frame.
    Injected { from_frame: u32, from_id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub frame: u32,
    pub id: u32,
    pub pos: Vector2<f64>,
    pub origin: KeypointOrigin,
}

/// One source-to-target match. `dst` always lies in an earlier frame and
/// `mv_px == dst.pos - src.pos` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src_frame: u32,
    pub src_id: u32,
    pub dst_frame: u32,
    pub dst_id: u32,
    pub mv_px: Vector2<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StoreStats {
    pub emitted_from_centers: u64,
    pub emitted_from_injected: u64,
    pub dropped_out_of_bounds: u64,
    pub merged_keypoints: u64,
    pub duplicate_correspondences: u64,
    /// Histogram of src_frame - dst_frame over emitted correspondences.
    pub ref_gap_counts: BTreeMap<u32, u64>,
}

/// Per-frame keypoint sets plus all correspondences between them.
#[derive(Debug, Clone, Default)]
pub struct KeypointStore {
    pub frames: Vec<Vec<Keypoint>>,
    pub correspondences: Vec<Correspondence>,
    pub stats: StoreStats,
}

impl KeypointStore {
    pub fn n_keypoints(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn keypoint(&self, frame: u32, id: u32) -> &Keypoint {
        &self.frames[frame as usize][id as usize]
    }
}

/// Keypoints closer than this (Chebyshev) merge into one. Half the 1/8-pel
/// grid step, so distinct quantized positions never collide.
const MERGE_RADIUS: f64 = 1.0 / 16.0;

/// Sparse position index used to merge near-duplicate keypoints.
#[derive(Default)]
struct PosIndex {
    cells: HashMap<(i64, i64), u32>,
}

impl PosIndex {
    fn key(pos: &Vector2<f64>) -> (i64, i64) {
        ((pos.x * 16.0).round() as i64, (pos.y * 16.0).round() as i64)
    }

    fn find(&self, pos: &Vector2<f64>, frame: &[Keypoint]) -> Option<u32> {
        let (kx, ky) = Self::key(pos);
        let mut best: Option<u32> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&id) = self.cells.get(&(kx + dx, ky + dy)) {
                    let p = frame[id as usize].pos;
                    if (p.x - pos.x).abs() <= MERGE_RADIUS && (p.y - pos.y).abs() <= MERGE_RADIUS {
                        best = Some(best.map_or(id, |b| b.min(id)));
                    }
                }
            }
        }
        best
    }

    fn insert(&mut self, pos: &Vector2<f64>, id: u32) {
        self.cells.entry(Self::key(pos)).or_insert(id);
    }
}

/// Banded interval index over one frame's block tiling. Lookup is a binary
/// search on the row band followed by one on the x spans.
pub struct BlockIndex {
    band_starts: Vec<u32>,
    bands: Vec<Vec<(u16, u32)>>, // (x0, block index), sorted by x0
    height: u32,
}

impl BlockIndex {
    pub fn build(frame: &Frame) -> Self {
        let h = frame.meta.height_px;
        let mut ys: Vec<u32> = frame
            .blocks
            .iter()
            .flat_map(|b| [b.y0 as u32, (b.y0 as u32 + b.h as u32).min(h)])
            .collect();
        ys.push(0);
        ys.sort_unstable();
        ys.dedup();
        ys.retain(|&y| y < h);

        let mut bands: Vec<Vec<(u16, u32)>> = vec![Vec::new(); ys.len()];
        for (bi, b) in frame.blocks.iter().enumerate() {
            let y_lo = b.y0 as u32;
            let y_hi = (b.y0 as u32 + b.h as u32).min(h);
            let start = ys.partition_point(|&y| y < y_lo);
            for (band, &y) in ys.iter().enumerate().skip(start) {
                if y >= y_hi {
                    break;
                }
                bands[band].push((b.x0, bi as u32));
            }
        }
        for band in &mut bands {
            band.sort_unstable();
        }
        BlockIndex {
            band_starts: ys,
            bands,
            height: h,
        }
    }

    /// Block whose half-open span `[x0, x0+w) x [y0, y0+h)` contains `pos`.
    pub fn containing_block(&self, pos: &Vector2<f64>) -> Option<u32> {
        if pos.y < 0.0 || pos.y >= self.height as f64 {
            return None;
        }
        let band = self.band_starts.partition_point(|&y| (y as f64) <= pos.y);
        let band = band.checked_sub(1)?;
        let spans = &self.bands[band];
        let i = spans.partition_point(|&(x0, _)| (x0 as f64) <= pos.x);
        let (_, bi) = *spans.get(i.checked_sub(1)?)?;
        Some(bi)
    }
}

/// Builds the full keypoint/correspondence store for a sequence.
///
/// Frames are visited from last to first so that injected targets are in
/// place before their frame is processed.
pub fn build_store(seq: &MVDumpSequence) -> KeypointStore {
    let mut builder = StoreBuilder::new(seq.frames.len());
    for frame in seq.frames.iter().rev() {
        builder.emit_correspondences(seq, frame);
    }
    builder.finish()
}

/// Incremental store construction; frames must be fed in decreasing index
/// order so injected targets precede their frame's own emissions.
pub struct StoreBuilder {
    store: KeypointStore,
    indices: Vec<PosIndex>,
    seen_pairs: HashSet<(u32, u32, u32, u32)>,
}

impl StoreBuilder {
    pub fn new(n_frames: usize) -> Self {
        StoreBuilder {
            store: KeypointStore {
                frames: vec![Vec::new(); n_frames],
                ..Default::default()
            },
            indices: (0..n_frames).map(|_| PosIndex::default()).collect(),
            seen_pairs: HashSet::new(),
        }
    }

    pub fn finish(self) -> KeypointStore {
        self.store
    }

    /// Emits all correspondences rooted in one frame: block centers first,
    /// then every injected keypoint already present, chained through its
    /// containing block. Blocks without a usable motion vector emit nothing.
    pub fn emit_correspondences(&mut self, seq: &MVDumpSequence, frame: &Frame) {
        let n = frame.meta.frame_index;
        let block_index = BlockIndex::build(frame);
        let n_injected = self.store.frames[n as usize].len();

        for (bi, b) in frame.blocks.iter().enumerate() {
            if !b.emits() {
                continue;
            }
            let center = block_center(b, frame.meta.width_px, frame.meta.height_px);
            let src_id =
                self.resolve_keypoint(n, center, KeypointOrigin::BlockCenter { block: bi as u32 });
            self.emit_one(seq, n, src_id, b, true);
        }

        // chain targets that later frames injected here
        for kid in 0..n_injected {
            let pos = self.store.frames[n as usize][kid].pos;
            let Some(bi) = block_index.containing_block(&pos) else {
                continue;
            };
            let b = frame.blocks[bi as usize];
            if !b.emits() {
                continue;
            }
            self.emit_one(seq, n, kid as u32, &b, false);
        }
    }

    fn emit_one(
        &mut self,
        seq: &MVDumpSequence,
        n: u32,
        src_id: u32,
        b: &BlockRecord,
        from_center: bool,
    ) {
        let slot = b.ref_slot.expect("emitting block has a ref slot");
        let m = seq.frames[n as usize].meta.ref_map[&slot];
        let mv = scale_mv(b.mv_raw);
        let src_pos = self.store.frames[n as usize][src_id as usize].pos;
        let target = src_pos + mv;

        let ref_meta = &seq.frames[m as usize].meta;
        if target.x < 0.0
            || target.y < 0.0
            || target.x >= ref_meta.width_px as f64
            || target.y >= ref_meta.height_px as f64
        {
            self.store.stats.dropped_out_of_bounds += 1;
            return;
        }

        let dst_id = self.resolve_keypoint(
            m,
            target,
            KeypointOrigin::Injected {
                from_frame: n,
                from_id: src_id,
            },
        );
        if !self.seen_pairs.insert((n, src_id, m, dst_id)) {
            self.store.stats.duplicate_correspondences += 1;
            return;
        }
        let dst_pos = self.store.frames[m as usize][dst_id as usize].pos;
        self.store.correspondences.push(Correspondence {
            src_frame: n,
            src_id,
            dst_frame: m,
            dst_id,
            mv_px: dst_pos - src_pos,
        });
        if from_center {
            self.store.stats.emitted_from_centers += 1;
        } else {
            self.store.stats.emitted_from_injected += 1;
        }
        *self.store.stats.ref_gap_counts.entry(n - m).or_insert(0) += 1;
    }

    fn resolve_keypoint(&mut self, frame: u32, pos: Vector2<f64>, origin: KeypointOrigin) -> u32 {
        let kps = &mut self.store.frames[frame as usize];
        if let Some(id) = self.indices[frame as usize].find(&pos, kps) {
            self.store.stats.merged_keypoints += 1;
            return id;
        }
        let id = kps.len() as u32;
        kps.push(Keypoint {
            frame,
            id,
            pos,
            origin,
        });
        self.indices[frame as usize].insert(&pos, id);
        id
    }
}

// ---------------------------------------------------------------------------
// JSON-lines serialization (debugging / stage handoff)

#[derive(Serialize, Deserialize)]
struct KpLine {
    t: String,
    frame: u32,
    id: u32,
    x: f64,
    y: f64,
    origin: KeypointOrigin,
}

#[derive(Serialize, Deserialize)]
struct CorrLine {
    t: String,
    sf: u32,
    si: u32,
    df: u32,
    di: u32,
    dx: f64,
    dy: f64,
}

#[derive(Serialize, Deserialize)]
struct StatsLine {
    t: String,
    stats: StoreStats,
}

pub fn write_store<W: Write>(store: &KeypointStore, mut out: W) -> Result<(), CorrespondError> {
    for frame in &store.frames {
        for kp in frame {
            let line = KpLine {
                t: "kp".into(),
                frame: kp.frame,
                id: kp.id,
                x: kp.pos.x,
                y: kp.pos.y,
                origin: kp.origin,
            };
            writeln!(out, "{}", serde_json::to_string(&line).map_err(serde_err)?)?;
        }
    }
    for c in &store.correspondences {
        let line = CorrLine {
            t: "corr".into(),
            sf: c.src_frame,
            si: c.src_id,
            df: c.dst_frame,
            di: c.dst_id,
            dx: c.mv_px.x,
            dy: c.mv_px.y,
        };
        writeln!(out, "{}", serde_json::to_string(&line).map_err(serde_err)?)?;
    }
    let line = StatsLine {
        t: "stats".into(),
        stats: store.stats.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&line).map_err(serde_err)?)?;
    Ok(())
}

fn serde_err(e: serde_json::Error) -> CorrespondError {
    CorrespondError::Serde(e.to_string())
}

pub fn read_store<R: BufRead>(input: R) -> Result<KeypointStore, CorrespondError> {
    let mut store = KeypointStore::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(serde_err)?;
        match value.get("t").and_then(|t| t.as_str()) {
            Some("kp") => {
                let kp: KpLine = serde_json::from_value(value).map_err(serde_err)?;
                if store.frames.len() <= kp.frame as usize {
                    store.frames.resize(kp.frame as usize + 1, Vec::new());
                }
                let kps = &mut store.frames[kp.frame as usize];
                if kps.len() != kp.id as usize {
                    return Err(CorrespondError::Serde(format!(
                        "keypoint ids must be dense; frame {} got id {} at {}",
                        kp.frame,
                        kp.id,
                        kps.len()
                    )));
                }
                kps.push(Keypoint {
                    frame: kp.frame,
                    id: kp.id,
                    pos: Vector2::new(kp.x, kp.y),
                    origin: kp.origin,
                });
            }
            Some("corr") => {
                let c: CorrLine = serde_json::from_value(value).map_err(serde_err)?;
                store.correspondences.push(Correspondence {
                    src_frame: c.sf,
                    src_id: c.si,
                    dst_frame: c.df,
                    dst_id: c.di,
                    mv_px: Vector2::new(c.dx, c.dy),
                });
            }
            Some("stats") => {
                let s: StatsLine = serde_json::from_value(value).map_err(serde_err)?;
                store.stats = s.stats;
            }
            other => {
                return Err(CorrespondError::Serde(format!(
                    "unknown store line tag {other:?}"
                )));
            }
        }
    }
    Ok(store)
}
