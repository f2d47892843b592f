//! Multi-frame tracks: chaining, the cosine consistency gate, pruning and
//! match propagation to non-adjacent pairs.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspond::{CorrespondError, KeypointStore};

/// One detection of a tracked point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub keypoint: u32,
    pub pos: Vector2<f64>,
}

/// Ordered detections of one point across strictly increasing frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u32,
    pub detections: Vec<Detection>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn span(&self) -> u32 {
        match (self.detections.first(), self.detections.last()) {
            (Some(a), Some(b)) => b.frame - a.frame,
            _ => 0,
        }
    }

    /// Motion segments between consecutive detections.
    pub fn segments(&self) -> impl Iterator<Item = Vector2<f64>> + '_ {
        self.detections.windows(2).map(|w| w[1].pos - w[0].pos)
    }
}

/// Cosine gate parameters. `epsilon` is the tolerance on 1 - cos; segments
/// shorter than `tau` skip the test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CosineParams {
    pub epsilon: f64,
    pub tau: f64,
}

impl Default for CosineParams {
    fn default() -> Self {
        CosineParams {
            epsilon: 0.1,
            tau: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateResult {
    Pass,
    Fail,
    Skipped,
}

/// Directional consistency of two adjacent motion segments: passes when
/// cos(v1, v2) >= 1 - epsilon, skipped when either vector is shorter than
/// tau. With epsilon = 1 the threshold is zero, which still rejects
/// reversals; use `cosine_off` in [`TrackFilterConfig`] for a true bypass.
pub fn cosine_gate(v1: &Vector2<f64>, v2: &Vector2<f64>, params: &CosineParams) -> GateResult {
    let n1 = v1.norm();
    let n2 = v2.norm();
    if n1 < params.tau || n2 < params.tau {
        return GateResult::Skipped;
    }
    let cos = v1.dot(v2) / (n1 * n2);
    if cos >= 1.0 - params.epsilon {
        GateResult::Pass
    } else {
        GateResult::Fail
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TrackFilterConfig {
    pub cosine: CosineParams,
    /// Bypass the gate entirely (distinct from epsilon = 1).
    pub cosine_off: bool,
    /// Retain two-detection tracks instead of discarding them.
    pub keep_pairs: bool,
}

/// Links chained correspondences into maximal tracks. Every correspondence
/// lands in exactly one track; chains start at keypoints that are not the
/// target of any correspondence (block centers).
pub fn build_tracks(store: &KeypointStore) -> Vec<Track> {
    // unique outgoing correspondence per keypoint (store construction
    // dedupes same-source duplicates)
    let mut outgoing: HashMap<(u32, u32), usize> =
        HashMap::with_capacity(store.correspondences.len());
    let mut has_incoming: HashMap<(u32, u32), bool> = HashMap::new();
    for (ci, c) in store.correspondences.iter().enumerate() {
        outgoing.entry((c.src_frame, c.src_id)).or_insert(ci);
        has_incoming.insert((c.dst_frame, c.dst_id), true);
    }

    let mut claimed = vec![false; store.correspondences.len()];
    let mut tracks = Vec::new();
    for (ci, c) in store.correspondences.iter().enumerate() {
        if claimed[ci] || has_incoming.contains_key(&(c.src_frame, c.src_id)) {
            continue;
        }
        // walk from this root towards earlier frames
        let mut chain = Vec::new();
        let mut cur = ci;
        loop {
            claimed[cur] = true;
            chain.push(cur);
            let corr = &store.correspondences[cur];
            match outgoing.get(&(corr.dst_frame, corr.dst_id)) {
                Some(&next) if !claimed[next] => cur = next,
                _ => break,
            }
        }
        // chain runs later -> earlier; reverse into ascending frames
        let mut detections = Vec::with_capacity(chain.len() + 1);
        let last = &store.correspondences[*chain.last().unwrap()];
        detections.push(Detection {
            frame: last.dst_frame,
            keypoint: last.dst_id,
            pos: store.keypoint(last.dst_frame, last.dst_id).pos,
        });
        for &ci in chain.iter().rev() {
            let corr = &store.correspondences[ci];
            detections.push(Detection {
                frame: corr.src_frame,
                keypoint: corr.src_id,
                pos: store.keypoint(corr.src_frame, corr.src_id).pos,
            });
        }
        tracks.push(Track {
            id: tracks.len() as u32,
            detections,
        });
    }

    // a second-arriving chain into a merge point terminates there; any
    // correspondence left unclaimed would be a store invariant violation
    debug_assert!(claimed.iter().all(|&c| c));
    tracks
}

/// Applies the cosine gate along each track, splitting before every failing
/// segment, then discards short tracks (length < 3 detections, or < 2 with
/// `keep_pairs`). Surviving tracks are renumbered in deterministic order.
pub fn filter_tracks(tracks: Vec<Track>, cfg: &TrackFilterConfig) -> Vec<Track> {
    let min_len = if cfg.keep_pairs { 2 } else { 3 };
    let mut out: Vec<Track> = tracks
        .into_par_iter()
        .map(|t| split_track(t, cfg))
        .flatten()
        .filter(|t| t.detections.len() >= min_len)
        .collect();
    for (i, t) in out.iter_mut().enumerate() {
        t.id = i as u32;
    }
    out
}

fn split_track(track: Track, cfg: &TrackFilterConfig) -> Vec<Track> {
    if cfg.cosine_off || track.detections.len() < 3 {
        return vec![track];
    }
    let segments: Vec<Vector2<f64>> = track.segments().collect();
    let mut pieces = Vec::new();
    let mut start = 0usize; // detection index opening the current piece
    for i in 0..segments.len() - 1 {
        if cosine_gate(&segments[i], &segments[i + 1], &cfg.cosine) == GateResult::Fail {
            // split before the failing segment i+1; boundary detection i+1
            // closes this piece and opens the next
            pieces.push(track.detections[start..=i + 1].to_vec());
            start = i + 1;
        }
    }
    pieces.push(track.detections[start..].to_vec());
    pieces
        .into_iter()
        .map(|detections| Track { id: 0, detections })
        .collect()
}

/// Matches per ordered image pair (i < j): keypoint id pairs.
pub type PairMatches = BTreeMap<(u32, u32), Vec<(u32, u32)>>;

/// Emits a match for every frame pair covered by each track: a track over k
/// frames yields k(k-1)/2 matches.
pub fn propagate_pairs(tracks: &[Track]) -> PairMatches {
    let mut out = PairMatches::new();
    for t in tracks {
        for a in 0..t.detections.len() {
            for b in a + 1..t.detections.len() {
                let da = &t.detections[a];
                let db = &t.detections[b];
                out.entry((da.frame, db.frame))
                    .or_default()
                    .push((da.keypoint, db.keypoint));
            }
        }
    }
    canonicalize(&mut out);
    out
}

/// Adjacent-detection matches only, without propagation.
pub fn adjacent_pairs(tracks: &[Track]) -> PairMatches {
    let mut out = PairMatches::new();
    for t in tracks {
        for w in t.detections.windows(2) {
            out.entry((w[0].frame, w[1].frame))
                .or_default()
                .push((w[0].keypoint, w[1].keypoint));
        }
    }
    canonicalize(&mut out);
    out
}

fn canonicalize(matches: &mut PairMatches) {
    for v in matches.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
}

pub fn total_matches(matches: &PairMatches) -> usize {
    matches.values().map(Vec::len).sum()
}

/// Resolves match id pairs into pixel positions for geometric verification.
pub fn to_pair_observations(
    matches: &PairMatches,
    store: &KeypointStore,
) -> Vec<crate::geometry::PairObservations> {
    matches
        .iter()
        .map(|(&(i, j), pairs)| crate::geometry::PairObservations {
            i,
            j,
            points_px: pairs
                .iter()
                .map(|&(a, b)| (store.keypoint(i, a).pos, store.keypoint(j, b).pos))
                .collect(),
        })
        .collect()
}

/// Symmetric per-pair match counts with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    pub n: usize,
    counts: Vec<u64>,
}

impl AdjacencyMatrix {
    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

pub fn adjacency(matches: &PairMatches, n_frames: usize) -> AdjacencyMatrix {
    let mut counts = vec![0u64; n_frames * n_frames];
    for (&(i, j), v) in matches {
        let c = v.len() as u64;
        counts[i as usize * n_frames + j as usize] += c;
        counts[j as usize * n_frames + i as usize] += c;
    }
    AdjacencyMatrix {
        n: n_frames,
        counts,
    }
}

// ---------------------------------------------------------------------------
// JSON-lines track store

#[derive(Serialize, Deserialize)]
struct TrackLine {
    id: u32,
    detections: Vec<(u32, u32, f64, f64)>,
}

pub fn write_tracks<W: Write>(tracks: &[Track], mut out: W) -> Result<(), CorrespondError> {
    for t in tracks {
        let line = TrackLine {
            id: t.id,
            detections: t
                .detections
                .iter()
                .map(|d| (d.frame, d.keypoint, d.pos.x, d.pos.y))
                .collect(),
        };
        let s = serde_json::to_string(&line).map_err(|e| CorrespondError::Serde(e.to_string()))?;
        writeln!(out, "{s}")?;
    }
    Ok(())
}

pub fn read_tracks<R: BufRead>(input: R) -> Result<Vec<Track>, CorrespondError> {
    let mut tracks = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrackLine =
            serde_json::from_str(&line).map_err(|e| CorrespondError::Serde(e.to_string()))?;
        tracks.push(Track {
            id: parsed.id,
            detections: parsed
                .detections
                .into_iter()
                .map(|(frame, keypoint, x, y)| Detection {
                    frame,
                    keypoint,
                    pos: Vector2::new(x, y),
                })
                .collect(),
        });
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspond::build_store;
    use crate::synth::{gen_sequence, CameraIntrinsics, MotionKind, MotionSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn track_from_segments(segments: &[(f64, f64)]) -> Track {
        let mut pos = Vector2::new(100.0, 100.0);
        let mut detections = vec![Detection {
            frame: 0,
            keypoint: 0,
            pos,
        }];
        for (i, &(dx, dy)) in segments.iter().enumerate() {
            pos += Vector2::new(dx, dy);
            detections.push(Detection {
                frame: (i + 1) as u32,
                keypoint: 0,
                pos,
            });
        }
        Track { id: 0, detections }
    }

    #[test]
    fn gate_basic_cases() {
        let p = CosineParams::default();
        let g = |a: (f64, f64), b: (f64, f64), p: &CosineParams| {
            cosine_gate(&Vector2::new(a.0, a.1), &Vector2::new(b.0, b.1), p)
        };
        assert_eq!(g((1.0, 0.0), (1.0, 0.0), &p), GateResult::Pass);
        assert_eq!(g((1.0, 0.0), (0.0, 1.0), &p), GateResult::Fail);
        assert_eq!(g((1e-4, 0.0), (0.0, 1.0), &p), GateResult::Skipped);
        assert_eq!(g((3.0, 4.0), (6.0, 8.0), &p), GateResult::Pass);
        // epsilon = 1 keeps anything with nonnegative cosine
        let wide = CosineParams {
            epsilon: 1.0,
            tau: 1e-3,
        };
        assert_eq!(g((1.0, 0.0), (0.0, 1.0), &wide), GateResult::Pass);
        assert_eq!(g((1.0, 0.0), (-1.0, 0.1), &wide), GateResult::Fail);
    }

    #[test]
    fn gate_matches_direct_cosine_and_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = CosineParams::default();
        for _ in 0..10_000 {
            let v1 = Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let v2 = Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let got = cosine_gate(&v1, &v2, &p);
            let expect = if v1.norm() < p.tau || v2.norm() < p.tau {
                GateResult::Skipped
            } else if v1.dot(&v2) / (v1.norm() * v2.norm()) >= 0.9 {
                GateResult::Pass
            } else {
                GateResult::Fail
            };
            assert_eq!(got, expect);
            // scaling both vectors up never changes the verdict
            if got != GateResult::Skipped {
                let a = rng.gen_range(1.0..20.0);
                let b = rng.gen_range(1.0..20.0);
                assert_eq!(cosine_gate(&(v1 * a), &(v2 * b), &p), got);
            }
        }
    }

    #[test]
    fn split_keeps_prefix_and_discards_short_suffix() {
        let t = track_from_segments(&[(1.0, 0.0), (1.0, 0.0), (-1.0, 0.0)]);
        let cfg = TrackFilterConfig::default();
        let out = filter_tracks(vec![t], &cfg);
        // prefix of 3 detections survives; suffix of 2 is dropped
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].detections.len(), 3);
        assert_eq!(out[0].detections[0].frame, 0);
        assert_eq!(out[0].detections[2].frame, 2);
    }

    #[test]
    fn constant_direction_never_splits() {
        let t = track_from_segments(&[(1.0, 2.0); 6]);
        let out = filter_tracks(vec![t.clone()], &TrackFilterConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].detections, t.detections);
    }

    #[test]
    fn epsilon_one_keeps_right_angles() {
        let t = track_from_segments(&[(1.0, 0.0), (0.0, 1.0), (0.0, 1.0)]);
        let cfg = TrackFilterConfig {
            cosine: CosineParams {
                epsilon: 1.0,
                tau: 1e-3,
            },
            ..Default::default()
        };
        let out = filter_tracks(vec![t], &cfg);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].detections.len(), 4);
    }

    #[test]
    fn keep_pairs_retains_two_detection_tracks() {
        let t = track_from_segments(&[(1.0, 0.0)]);
        assert!(filter_tracks(vec![t.clone()], &TrackFilterConfig::default()).is_empty());
        let cfg = TrackFilterConfig {
            keep_pairs: true,
            ..Default::default()
        };
        assert_eq!(filter_tracks(vec![t], &cfg).len(), 1);
    }

    #[test]
    fn skipped_segments_do_not_split() {
        // middle segment below tau, direction change across it
        let t = track_from_segments(&[(1.0, 0.0), (1e-6, 0.0), (0.0, 1.0)]);
        let out = filter_tracks(vec![t], &TrackFilterConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].detections.len(), 4);
    }

    fn synth_store(n_frames: u32, t: (f64, f64)) -> (KeypointStore, usize) {
        let spec = MotionSpec {
            kind: MotionKind::Translation2D {
                t: Vector2::new(t.0, t.1),
            },
            n_frames,
            width: 160,
            height: 96,
            block_size: 16,
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
        };
        let k = CameraIntrinsics::new(100.0, 100.0, 80.0, 48.0);
        let (seq, _) = gen_sequence(&spec, &k, 1).unwrap();
        let blocks_per_frame = (160 / 16) * (96 / 16);
        (build_store(&seq), blocks_per_frame)
    }

    #[test]
    fn three_frame_translation_gives_full_span_tracks() {
        let (store, blocks) = synth_store(3, (1.0, -2.0));
        let tracks = build_tracks(&store);
        // every frame-2 block roots a track spanning frames 0..2; frame-1
        // blocks root 2-detection tracks
        let full: Vec<_> = tracks.iter().filter(|t| t.len() == 3).collect();
        assert_eq!(full.len(), blocks);
        for t in &full {
            let frames: Vec<u32> = t.detections.iter().map(|d| d.frame).collect();
            assert_eq!(frames, vec![0, 1, 2]);
        }
        // correspondences partition into tracks
        let total: usize = tracks.iter().map(|t| t.len() - 1).sum();
        assert_eq!(total, store.correspondences.len());
    }

    #[test]
    fn empty_store_gives_no_tracks() {
        let store = KeypointStore::default();
        assert!(build_tracks(&store).is_empty());
    }

    #[test]
    fn propagation_counts_are_k_choose_2() {
        let (store, _) = synth_store(5, (1.0, -2.0));
        let tracks = filter_tracks(build_tracks(&store), &TrackFilterConfig::default());
        let matches = propagate_pairs(&tracks);
        let expected: usize = tracks.iter().map(|t| t.len() * (t.len() - 1) / 2).sum();
        assert_eq!(total_matches(&matches), expected);
        // single track sanity: one track over frames {0,1,2} gives 3 pairs
        let t = track_from_segments(&[(1.0, 0.0), (1.0, 0.0)]);
        let m = propagate_pairs(&[t]);
        assert_eq!(m.len(), 3);
        assert!(m.contains_key(&(0, 1)) && m.contains_key(&(0, 2)) && m.contains_key(&(1, 2)));
    }

    #[test]
    fn adjacency_patterns() {
        let n = 6;
        let (store, _) = synth_store(n, (1.0, -2.0));
        let tracks_all = filter_tracks(build_tracks(&store), &TrackFilterConfig::default());
        let adj_full = adjacency(&propagate_pairs(&tracks_all), n as usize);
        // propagation fills the whole upper triangle for unbroken chains
        for i in 0..n as usize {
            for j in 0..n as usize {
                if i == j {
                    assert_eq!(adj_full.at(i, j), 0);
                } else {
                    assert!(adj_full.at(i, j) > 0, "({i},{j}) empty");
                    assert_eq!(adj_full.at(i, j), adj_full.at(j, i));
                }
            }
        }
        // adjacent-only matches sit on the first off-diagonal
        let cfg = TrackFilterConfig {
            keep_pairs: true,
            ..Default::default()
        };
        let tracks_pairs = filter_tracks(build_tracks(&store), &cfg);
        let adj_band = adjacency(&adjacent_pairs(&tracks_pairs), n as usize);
        for i in 0..n as usize {
            for j in 0..n as usize {
                if i.abs_diff(j) == 1 {
                    assert!(adj_band.at(i, j) > 0);
                } else {
                    assert_eq!(adj_band.at(i, j), 0);
                }
            }
        }
    }

    #[test]
    fn noiseless_translation_never_splits() {
        let (store, blocks) = synth_store(6, (1.5, 0.5));
        let tracks = build_tracks(&store);
        let n_before = tracks.len();
        let filtered = filter_tracks(tracks, &TrackFilterConfig::default());
        // splits would increase the count before pruning; pruning only
        // removes the 2-detection tracks rooted at frame 1
        assert_eq!(filtered.len(), n_before - blocks);
        for t in &filtered {
            assert!(t.len() >= 3);
            let segs: Vec<_> = t.segments().collect();
            for w in segs.windows(2) {
                assert_ne!(
                    cosine_gate(&w[0], &w[1], &CosineParams::default()),
                    GateResult::Fail
                );
            }
        }
    }

    #[test]
    fn tracks_round_trip_jsonl() {
        let (store, _) = synth_store(4, (1.0, -2.0));
        let tracks = filter_tracks(build_tracks(&store), &TrackFilterConfig::default());
        let mut buf = Vec::new();
        write_tracks(&tracks, &mut buf).unwrap();
        let back = read_tracks(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, tracks);
    }
}
