//! Synthetic dump generation with exact ground truth.
//!
//! Every generated sequence follows a known per-step motion model mapping
//! frame n coordinates onto frame n-1, so the true correspondence of every
//! block center is available in closed form before 1/8-pel quantization.
//! The generator doubles as the independent oracle for the downstream
//! stages: correspondence extraction, track building and robust geometry.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::correspond::block_center;
use crate::dump::{
    BlockMode, BlockRecord, Frame, FrameMeta, FrameType, MVDumpSequence, BLOCK_SIZES,
};
pub use crate::geometry::CameraIntrinsics;
use crate::geometry::{EssentialModel, HomographyModel};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate motion spec: {0}")]
    DegenerateSpec(String),
}

/// Per-step motion model. Maps are backward: a point at `x` in frame n sits
/// at `map(x)` in frame n-1.
#[derive(Debug, Clone)]
pub enum MotionKind {
    /// Uniform pixel translation per frame step.
    Translation2D { t: Vector2<f64> },
    /// Projective pixel map per frame step.
    Homography { h_step: Matrix3<f64> },
    /// Camera motion per step (x_n = R x_{n-1} + t in camera coordinates)
    /// over a plane-free cloud: every block center gets its own depth drawn
    /// from `depth_range`.
    Epipolar {
        rot_step: Matrix3<f64>,
        t_step: Vector3<f64>,
        depth_range: (f64, f64),
    },
}

#[derive(Debug, Clone)]
pub struct MotionSpec {
    pub kind: MotionKind,
    pub n_frames: u32,
    pub width: u32,
    pub height: u32,
    pub block_size: u8,
    pub noise_sigma_px: f64,
    pub outlier_fraction: f64,
}

impl MotionSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_frames == 0 {
            return Err(SynthError::DegenerateSpec("zero frames".into()));
        }
        if self.width == 0
            || self.height == 0
            || !self.width.is_multiple_of(4)
            || !self.height.is_multiple_of(4)
        {
            return Err(SynthError::DegenerateSpec(format!(
                "frame size {}x{} must be positive and divisible by 4",
                self.width, self.height
            )));
        }
        if !BLOCK_SIZES.contains(&self.block_size) {
            return Err(SynthError::DegenerateSpec(format!(
                "block size {} outside the 4..128 set",
                self.block_size
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SynthError::DegenerateSpec(
                "outlier fraction must be in [0,1)".into(),
            ));
        }
        if self.noise_sigma_px < 0.0 {
            return Err(SynthError::DegenerateSpec("negative noise".into()));
        }
        match &self.kind {
            MotionKind::Translation2D { t } => {
                if !t.x.is_finite() || !t.y.is_finite() {
                    return Err(SynthError::DegenerateSpec("non-finite translation".into()));
                }
            }
            MotionKind::Homography { h_step } => {
                if h_step.determinant().abs() < 1e-12 {
                    return Err(SynthError::DegenerateSpec(
                        "singular homography step".into(),
                    ));
                }
            }
            MotionKind::Epipolar {
                t_step,
                depth_range,
                ..
            } => {
                if t_step.norm() == 0.0 {
                    return Err(SynthError::DegenerateSpec("zero translation step".into()));
                }
                if !(depth_range.0 > 0.0 && depth_range.1 > depth_range.0) {
                    return Err(SynthError::DegenerateSpec("bad depth range".into()));
                }
            }
        }
        Ok(())
    }
}

/// One true correspondence between adjacent frames, before quantization.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruthCorr {
    /// Block center in the later frame.
    pub src: Vector2<f64>,
    /// Exact model-consistent target in the earlier frame.
    pub dst_exact: Vector2<f64>,
    /// The dump block carries a random vector instead of the true one.
    pub outlier: bool,
    /// The dump block ended up with a usable (inter, nonzero) vector.
    pub emitted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairTruth {
    pub earlier: u32,
    pub later: u32,
    pub corrs: Vec<TruthCorr>,
}

/// Exact correspondences and labels for every adjacent frame pair.
#[derive(Debug, Clone, Default, Serialize)]
pub struct GroundTruth {
    pub pairs: Vec<PairTruth>,
}

pub enum TrueModel {
    Essential(EssentialModel),
    Homography(HomographyModel),
}

/// Margin (pixels) by which drawn outlier vectors must violate the true
/// pair model. Robust estimation accepts any model whose residuals stay
/// within the threshold on every inlier, and such a model can sit a full
/// threshold away from the generating one; four times the default
/// threshold keeps labeled outliers outside all of them.
const OUTLIER_MARGIN_PX: f64 = 16.0;

/// Outlier vectors are drawn uniformly in this range per axis, in pixels.
/// The box must dwarf the inlier acceptance strip: the strip of any single
/// model sweeps roughly (2 * threshold * diagonal) of the box area, and a
/// consensus search over thousands of models will find the one catching
/// the most stray vectors. At +-256 px an arbitrary model picks up about
/// 2% of the outliers, keeping 20%-inlier data safely below a 0.25
/// consensus floor.
const OUTLIER_RANGE_PX: f64 = 256.0;

/// Generates a dump plus its exact ground truth. Deterministic for a fixed
/// seed. Inter blocks carry `round(8 * displacement) + round(8 * noise)`;
/// blocks whose vector quantizes to zero become skip blocks.
pub fn gen_sequence(
    spec: &MotionSpec,
    k: &CameraIntrinsics,
    seed: u64,
) -> Result<(MVDumpSequence, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = block_grid(spec);
    let mut frames = Vec::with_capacity(spec.n_frames as usize);
    let mut truth = GroundTruth::default();

    frames.push(make_frame(
        spec,
        0,
        FrameType::Intra,
        grid.iter()
            .map(|&(x0, y0)| BlockRecord {
                x0,
                y0,
                w: spec.block_size,
                h: spec.block_size,
                mode: BlockMode::Intra,
                ref_slot: None,
                mv_raw: (0, 0),
            })
            .collect(),
    ));

    for n in 1..spec.n_frames {
        let mut blocks = Vec::with_capacity(grid.len());
        let mut corrs = Vec::with_capacity(grid.len());
        for &(x0, y0) in &grid {
            let proto = BlockRecord {
                x0,
                y0,
                w: spec.block_size,
                h: spec.block_size,
                mode: BlockMode::Inter,
                ref_slot: Some(0),
                mv_raw: (0, 0),
            };
            let c = block_center(&proto, spec.width, spec.height);
            let Some(dst_exact) = step_map(spec, k, &mut rng, &c) else {
                // target behind the camera; nothing usable to encode
                blocks.push(BlockRecord {
                    mode: BlockMode::Intra,
                    ref_slot: None,
                    ..proto
                });
                continue;
            };
            let delta = dst_exact - c;
            let outlier = spec.outlier_fraction > 0.0 && rng.gen_bool(spec.outlier_fraction);
            let mv_px = if outlier {
                draw_outlier_vector(spec, k, &mut rng, &c, &dst_exact)
            } else {
                if delta.x.abs() >= spec.width as f64 || delta.y.abs() >= spec.height as f64 {
                    return Err(SynthError::DegenerateSpec(format!(
                        "step displacement {delta:?} exceeds the frame size"
                    )));
                }
                delta
            };
            let mut mv_raw = (
                (8.0 * mv_px.x).round() as i32,
                (8.0 * mv_px.y).round() as i32,
            );
            if !outlier && spec.noise_sigma_px > 0.0 {
                let nx: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sigma_px;
                let ny: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sigma_px;
                mv_raw.0 += (8.0 * nx).round() as i32;
                mv_raw.1 += (8.0 * ny).round() as i32;
            }
            let mv_raw = (mv_raw.0 as i16, mv_raw.1 as i16);
            let emitted = mv_raw != (0, 0);
            blocks.push(if emitted {
                BlockRecord { mv_raw, ..proto }
            } else {
                BlockRecord {
                    mode: BlockMode::Skip,
                    ref_slot: None,
                    ..proto
                }
            });
            corrs.push(TruthCorr {
                src: c,
                dst_exact,
                outlier,
                emitted,
            });
        }
        truth.pairs.push(PairTruth {
            earlier: n - 1,
            later: n,
            corrs,
        });
        frames.push(make_frame(spec, n, FrameType::Inter, blocks));
    }

    let (seq, _) = MVDumpSequence::new(format!("synth-seed{seed}"), frames)
        .map_err(|e| SynthError::DegenerateSpec(format!("generator bug: {e}")))?;
    Ok((seq, truth))
}

fn make_frame(
    spec: &MotionSpec,
    index: u32,
    frame_type: FrameType,
    blocks: Vec<BlockRecord>,
) -> Frame {
    let ref_map: BTreeMap<u8, u32> = if frame_type == FrameType::Inter {
        [(0u8, index - 1)].into_iter().collect()
    } else {
        BTreeMap::new()
    };
    Frame {
        meta: FrameMeta {
            frame_index: index,
            width_px: spec.width,
            height_px: spec.height,
            frame_type,
            ref_map,
        },
        blocks,
    }
}

fn block_grid(spec: &MotionSpec) -> Vec<(u16, u16)> {
    let mut grid = Vec::new();
    let bs = spec.block_size as u32;
    let mut y = 0;
    while y < spec.height {
        let mut x = 0;
        while x < spec.width {
            grid.push((x as u16, y as u16));
            x += bs;
        }
        y += bs;
    }
    grid
}

/// Exact position of `c` (in frame n) in frame n-1, or None when the
/// back-projected point falls behind the earlier camera.
fn step_map(
    spec: &MotionSpec,
    k: &CameraIntrinsics,
    rng: &mut ChaCha8Rng,
    c: &Vector2<f64>,
) -> Option<Vector2<f64>> {
    match &spec.kind {
        MotionKind::Translation2D { t } => Some(c + t),
        MotionKind::Homography { h_step } => {
            let v = h_step * Vector3::new(c.x, c.y, 1.0);
            (v.z.abs() > 1e-12).then(|| Vector2::new(v.x / v.z, v.y / v.z))
        }
        MotionKind::Epipolar {
            rot_step,
            t_step,
            depth_range,
        } => {
            for _ in 0..10 {
                let depth = rng.gen_range(depth_range.0..depth_range.1);
                let ray = k.k_inverse() * Vector3::new(c.x, c.y, 1.0);
                let x_n = ray * (depth / ray.z);
                let x_prev = rot_step.transpose() * (x_n - t_step);
                if x_prev.z > 0.1 {
                    let px = k.k_matrix() * x_prev;
                    return Some(Vector2::new(px.x / px.z, px.y / px.z));
                }
            }
            None
        }
    }
}

/// Uniform vector in the outlier box, redrawn until the implied target
/// violates the true pair model by `OUTLIER_MARGIN_PX` in the residual the
/// verifier scores with. Keeps labels unambiguous: a labeled outlier can
/// never score as an inlier of the generating model at the verification
/// threshold.
fn draw_outlier_vector(
    spec: &MotionSpec,
    k: &CameraIntrinsics,
    rng: &mut ChaCha8Rng,
    c: &Vector2<f64>,
    dst_exact: &Vector2<f64>,
) -> Vector2<f64> {
    let margin_sq = (OUTLIER_MARGIN_PX / k.mean_focal()).powi(2);
    let mut last = Vector2::new(OUTLIER_RANGE_PX, OUTLIER_RANGE_PX);
    for _ in 0..100 {
        let u = Vector2::new(
            rng.gen_range(-OUTLIER_RANGE_PX..OUTLIER_RANGE_PX),
            rng.gen_range(-OUTLIER_RANGE_PX..OUTLIER_RANGE_PX),
        );
        last = u;
        let target = c + u;
        let violated = match &spec.kind {
            MotionKind::Translation2D { .. } | MotionKind::Homography { .. } => {
                (target - dst_exact).norm() >= OUTLIER_MARGIN_PX
            }
            MotionKind::Epipolar {
                rot_step, t_step, ..
            } => step_sampson(k, rot_step, t_step, &target, c) >= margin_sq,
        };
        if violated {
            return u;
        }
    }
    last
}

/// First-order epipolar residual of (target in frame n-1, source in frame n)
/// under the generating step motion, in squared normalized units. Written
/// out locally so the generator stays an independent oracle for the
/// verifier's own residual code.
fn step_sampson(
    k: &CameraIntrinsics,
    rot_step: &Matrix3<f64>,
    t_step: &Vector3<f64>,
    target: &Vector2<f64>,
    src: &Vector2<f64>,
) -> f64 {
    let t_cross = Matrix3::new(
        0.0, -t_step.z, t_step.y, t_step.z, 0.0, -t_step.x, -t_step.y, t_step.x, 0.0,
    );
    let mut e = t_cross * rot_step;
    e /= e.norm();
    let xn = k.normalize(target);
    let xpn = k.normalize(src);
    let x = Vector3::new(xn.x, xn.y, 1.0);
    let xp = Vector3::new(xpn.x, xpn.y, 1.0);
    let l = e * x;
    let lp = e.transpose() * xp;
    let num = xp.dot(&l);
    let den = l.x * l.x + l.y * l.y + lp.x * lp.x + lp.y * lp.y;
    if den < 1e-18 {
        return f64::INFINITY;
    }
    num * num / den
}

/// Exact generating model between frames i < j, in normalized coordinates.
/// Essential matrices satisfy x_j^T E x_i = 0 with unit Frobenius norm;
/// homographies map image-i points onto image-j points with unit
/// bottom-right entry.
pub fn true_model(spec: &MotionSpec, k: &CameraIntrinsics, i: u32, j: u32) -> TrueModel {
    assert!(i < j, "pair must be ordered");
    let steps = (j - i) as i32;
    match &spec.kind {
        MotionKind::Translation2D { t } => {
            // pixel map i -> j is a translation by -(j-i) t
            let h_px = Matrix3::new(
                1.0,
                0.0,
                -steps as f64 * t.x,
                0.0,
                1.0,
                -steps as f64 * t.y,
                0.0,
                0.0,
                1.0,
            );
            let h = k.k_inverse() * h_px * k.k_matrix();
            TrueModel::Homography(HomographyModel::new(h).expect("translation map is regular"))
        }
        MotionKind::Homography { h_step } => {
            let mut back = Matrix3::identity();
            for _ in 0..steps {
                back *= h_step; // maps frame j pixels onto frame i pixels
            }
            let fwd = back.try_inverse().expect("validated nonsingular step");
            let h = k.k_inverse() * fwd * k.k_matrix();
            TrueModel::Homography(HomographyModel::new(h).expect("nonsingular composition"))
        }
        MotionKind::Epipolar {
            rot_step, t_step, ..
        } => {
            let mut r = Matrix3::identity();
            let mut t = Vector3::zeros();
            for _ in 0..steps {
                t = rot_step * t + t_step;
                r = rot_step * r;
            }
            TrueModel::Essential(EssentialModel::from_rt(&r, &t))
        }
    }
}

// ---------------------------------------------------------------------------
// ground-truth sidecar

#[derive(Serialize)]
struct Sidecar<'a> {
    kind: &'static str,
    n_frames: u32,
    width: u32,
    height: u32,
    block_size: u8,
    noise_sigma_px: f64,
    outlier_fraction: f64,
    intrinsics: &'a CameraIntrinsics,
    /// True adjacent-pair models, row-major 3x3, tagged E or H.
    adjacent_models: Vec<(String, [f64; 9])>,
    pairs: &'a [PairTruth],
}

/// JSON ground-truth sidecar written next to synthetic dumps.
pub fn write_ground_truth(spec: &MotionSpec, k: &CameraIntrinsics, truth: &GroundTruth) -> Vec<u8> {
    let kind = match spec.kind {
        MotionKind::Translation2D { .. } => "translation",
        MotionKind::Homography { .. } => "homography",
        MotionKind::Epipolar { .. } => "epipolar",
    };
    let adjacent_models = truth
        .pairs
        .iter()
        .map(|p| {
            let (tag, m) = match true_model(spec, k, p.earlier, p.later) {
                TrueModel::Essential(e) => ("E", e.e),
                TrueModel::Homography(h) => ("H", h.h),
            };
            let mut flat = [0.0; 9];
            for r in 0..3 {
                for c in 0..3 {
                    flat[3 * r + c] = m[(r, c)];
                }
            }
            (tag.to_string(), flat)
        })
        .collect();
    let sidecar = Sidecar {
        kind,
        n_frames: spec.n_frames,
        width: spec.width,
        height: spec.height,
        block_size: spec.block_size,
        noise_sigma_px: spec.noise_sigma_px,
        outlier_fraction: spec.outlier_fraction,
        intrinsics: k,
        adjacent_models,
        pairs: &truth.pairs,
    };
    let mut out = serde_json::to_vec_pretty(&sidecar).expect("sidecar serialization");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::{write_dump, DumpFormat};
    use crate::geometry::sampson_error;

    fn default_k() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0)
    }

    fn translation_spec(t: (f64, f64), n_frames: u32) -> MotionSpec {
        MotionSpec {
            kind: MotionKind::Translation2D {
                t: Vector2::new(t.0, t.1),
            },
            n_frames,
            width: 640,
            height: 480,
            block_size: 16,
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
        }
    }

    #[test]
    fn uniform_translation_quantizes_to_constant_mv() {
        let (seq, _) = gen_sequence(&translation_spec((1.0, -2.0), 3), &default_k(), 0).unwrap();
        for frame in &seq.frames[1..] {
            for b in &frame.blocks {
                assert_eq!(b.mv_raw, (8, -16));
            }
        }
    }

    #[test]
    fn identity_homography_becomes_all_skip() {
        let spec = MotionSpec {
            kind: MotionKind::Homography {
                h_step: Matrix3::identity(),
            },
            ..translation_spec((0.0, 0.0), 3)
        };
        let (seq, truth) = gen_sequence(&spec, &default_k(), 0).unwrap();
        for frame in &seq.frames[1..] {
            for b in &frame.blocks {
                assert_eq!(b.mode, BlockMode::Skip);
                assert_eq!(b.mv_raw, (0, 0));
            }
        }
        assert!(truth
            .pairs
            .iter()
            .all(|p| p.corrs.iter().all(|c| !c.emitted)));
    }

    #[test]
    fn epipolar_truth_satisfies_constraint_before_quantization() {
        let spec = MotionSpec {
            kind: MotionKind::Epipolar {
                rot_step: Matrix3::identity(),
                t_step: Vector3::new(1.0, 0.0, 0.0),
                depth_range: (20.0, 60.0),
            },
            n_frames: 3,
            width: 640,
            height: 480,
            block_size: 16,
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
        };
        let k = default_k();
        let (_, truth) = gen_sequence(&spec, &k, 7).unwrap();
        let TrueModel::Essential(e) = true_model(&spec, &k, 0, 1) else {
            panic!("epipolar spec must give an essential model");
        };
        let mut checked = 0;
        for pair in &truth.pairs {
            for c in &pair.corrs {
                let x = k.normalize(&c.dst_exact); // earlier frame
                let xp = k.normalize(&c.src); // later frame
                assert!(sampson_error(&e.e, &x, &xp) < 1e-18);
                let xh = Vector3::new(x.x, x.y, 1.0);
                let xph = Vector3::new(xp.x, xp.y, 1.0);
                assert!(xph.dot(&(e.e * xh)).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(
            checked >= 500,
            "want at least 500 checked depths, got {checked}"
        );
    }

    #[test]
    fn quantization_error_bounded_without_noise() {
        let spec = MotionSpec {
            kind: MotionKind::Epipolar {
                rot_step: Matrix3::identity(),
                t_step: Vector3::new(0.4, 0.2, 0.1),
                depth_range: (15.0, 40.0),
            },
            ..translation_spec((0.0, 0.0), 4)
        };
        let k = default_k();
        let (seq, truth) = gen_sequence(&spec, &k, 3).unwrap();
        for (pair, frame) in truth.pairs.iter().zip(&seq.frames[1..]) {
            for (c, b) in pair.corrs.iter().zip(&frame.blocks) {
                if !c.emitted {
                    continue;
                }
                let mv = crate::correspond::scale_mv(b.mv_raw);
                let delta = c.dst_exact - c.src;
                assert!((mv.x - delta.x).abs() <= 1.0 / 16.0 + 1e-12);
                assert!((mv.y - delta.y).abs() <= 1.0 / 16.0 + 1e-12);
            }
        }
    }

    #[test]
    fn outlier_counts_stay_in_binomial_band() {
        let spec = MotionSpec {
            outlier_fraction: 0.3,
            ..translation_spec((2.0, 1.0), 6)
        };
        let (_, truth) = gen_sequence(&spec, &default_k(), 11).unwrap();
        let n: usize = truth.pairs.iter().map(|p| p.corrs.len()).sum();
        let outliers: usize = truth
            .pairs
            .iter()
            .map(|p| p.corrs.iter().filter(|c| c.outlier).count())
            .sum();
        let expected = 0.3 * n as f64;
        let band = 3.0 * (n as f64).sqrt();
        assert!(
            (outliers as f64 - expected).abs() <= band,
            "outliers {outliers} outside {expected} +- {band}"
        );
    }

    #[test]
    fn outliers_violate_the_true_model() {
        let k = default_k();
        let spec = MotionSpec {
            kind: MotionKind::Epipolar {
                rot_step: Matrix3::identity(),
                t_step: Vector3::new(1.0, 0.0, 0.0),
                depth_range: (20.0, 60.0),
            },
            outlier_fraction: 0.3,
            noise_sigma_px: 0.5,
            ..translation_spec((0.0, 0.0), 4)
        };
        let (seq, truth) = gen_sequence(&spec, &k, 23).unwrap();
        let TrueModel::Essential(e) = true_model(&spec, &k, 0, 1) else {
            unreachable!()
        };
        let thr = (4.0 / k.mean_focal()).powi(2);
        for (pair, frame) in truth.pairs.iter().zip(&seq.frames[1..]) {
            for (c, b) in pair.corrs.iter().zip(&frame.blocks) {
                if !c.outlier || !c.emitted {
                    continue;
                }
                let target = c.src + crate::correspond::scale_mv(b.mv_raw);
                let s = sampson_error(&e.e, &k.normalize(&target), &k.normalize(&c.src));
                assert!(s > thr, "outlier scored as inlier: {s} <= {thr}");
            }
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let spec = MotionSpec {
            outlier_fraction: 0.2,
            noise_sigma_px: 0.7,
            ..translation_spec((1.5, 0.25), 5)
        };
        let k = default_k();
        let (a, _) = gen_sequence(&spec, &k, 99).unwrap();
        let (b, _) = gen_sequence(&spec, &k, 99).unwrap();
        assert_eq!(
            write_dump(&a, DumpFormat::Binary),
            write_dump(&b, DumpFormat::Binary)
        );
        let (c, _) = gen_sequence(&spec, &k, 100).unwrap();
        assert_ne!(
            write_dump(&a, DumpFormat::Binary),
            write_dump(&c, DumpFormat::Binary)
        );
    }

    #[test]
    fn translation_true_model_is_normalized_shift() {
        let k = default_k();
        let spec = translation_spec((1.0, -2.0), 4);
        let TrueModel::Homography(h) = true_model(&spec, &k, 0, 2) else {
            panic!("translation gives a homography");
        };
        // identity rotation part and a -(j-i) t / f shift
        assert!((h.h[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((h.h[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((h.h[(0, 1)]).abs() < 1e-12);
        assert!((h.h[(0, 2)] - (-2.0 * 1.0 / 1000.0)).abs() < 1e-12);
        assert!((h.h[(1, 2)] - (-2.0 * -2.0 / 1000.0)).abs() < 1e-12);
    }

    #[test]
    fn composed_homography_transfers_ground_truth() {
        let k = default_k();
        let h_step = Matrix3::new(1.01, 0.002, 0.5, -0.001, 0.99, -0.3, 1e-6, -2e-6, 1.0);
        let spec = MotionSpec {
            kind: MotionKind::Homography { h_step },
            ..translation_spec((0.0, 0.0), 3)
        };
        let (_, truth) = gen_sequence(&spec, &k, 5).unwrap();
        let TrueModel::Homography(h02) = true_model(&spec, &k, 0, 2) else {
            unreachable!()
        };
        // chain each frame-2 center through both stored adjacent pairs and
        // compare with the direct pair (0,2) transfer
        let p21 = &truth.pairs[1]; // later=2 -> earlier=1
        let p10 = &truth.pairs[0];
        for c in &p21.corrs {
            // find where that point continues in pair (1,0): positions differ,
            // so recompute via the step map directly
            let v = h_step * Vector3::new(c.dst_exact.x, c.dst_exact.y, 1.0);
            let in_frame0 = Vector2::new(v.x / v.z, v.y / v.z);
            // transfer frame-0 position forward through the true (0,2) model
            let n0 = k.normalize(&in_frame0);
            let t = h02.h * Vector3::new(n0.x, n0.y, 1.0);
            let forward = Vector2::new(t.x / t.z, t.y / t.z);
            let expect = k.normalize(&c.src);
            assert!((forward - expect).norm() < 1e-9);
        }
        assert!(!p10.corrs.is_empty());
    }

    #[test]
    fn epipolar_composition_matches_two_step_transfer() {
        let k = default_k();
        let rot = nalgebra::Rotation3::from_euler_angles(0.01, -0.02, 0.005).into_inner();
        let spec = MotionSpec {
            kind: MotionKind::Epipolar {
                rot_step: rot,
                t_step: Vector3::new(0.5, 0.1, 0.05),
                depth_range: (20.0, 50.0),
            },
            ..translation_spec((0.0, 0.0), 3)
        };
        let TrueModel::Essential(e02) = true_model(&spec, &k, 0, 2) else {
            unreachable!()
        };
        // project a cloud through the composed pose and check the constraint
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r2 = rot * rot;
        let t2 = rot * Vector3::new(0.5, 0.1, 0.05) + Vector3::new(0.5, 0.1, 0.05);
        for _ in 0..200 {
            let p = Vector3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(20.0..50.0),
            );
            let q = r2 * p + t2;
            let x = Vector2::new(p.x / p.z, p.y / p.z);
            let xp = Vector2::new(q.x / q.z, q.y / q.z);
            assert!(sampson_error(&e02.e, &x, &xp) < 1e-16);
        }
        assert!((e02.e.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_specs_rejected() {
        let mut spec = translation_spec((1.0, 0.0), 3);
        spec.outlier_fraction = 1.0;
        assert!(matches!(
            gen_sequence(&spec, &default_k(), 0),
            Err(SynthError::DegenerateSpec(_))
        ));
        let huge = translation_spec((10_000.0, 0.0), 2);
        assert!(matches!(
            gen_sequence(&huge, &default_k(), 0),
            Err(SynthError::DegenerateSpec(_))
        ));
    }

    #[test]
    fn sidecar_is_valid_json() {
        let spec = translation_spec((1.0, -2.0), 3);
        let k = default_k();
        let (_, truth) = gen_sequence(&spec, &k, 0).unwrap();
        let bytes = write_ground_truth(&spec, &k, &truth);
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["kind"], "translation");
        assert_eq!(v["pairs"].as_array().unwrap().len(), 2);
        assert_eq!(v["adjacent_models"][0][0], "H");
    }
}
