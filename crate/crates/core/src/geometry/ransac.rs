//! Hypothesize-and-verify model estimation with local optimization, plus
//! essential-vs-homography selection and per-pair scoring.

use nalgebra::{Matrix3, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::five_point::{eight_point_refit, five_point_essential};
use super::homography::{dlt_homography, homography_residual_prepared};
use super::{sampson_error, CameraIntrinsics, EssentialModel, GeomError, HomographyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Essential,
    Homography,
}

impl ModelKind {
    fn sample_size(self) -> usize {
        match self {
            ModelKind::Essential => 5,
            ModelKind::Homography => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Essential(EssentialModel),
    Homography(HomographyModel),
}

/// Fixed estimation hyperparameters. The defaults are shared across every
/// run so methods stay comparable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Inlier threshold in pixels; compared in normalized units as
    /// (max_error_px / mean focal)^2 against squared residuals.
    pub max_error_px: f64,
    pub min_inlier_ratio: f64,
    pub max_num_trials: u32,
    /// Least-squares refit rounds applied to each new best model.
    pub lo_refit_rounds: u32,
    /// Confidence for the adaptive trial bound.
    pub confidence: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            max_error_px: 4.0,
            min_inlier_ratio: 0.25,
            max_num_trials: 10_000,
            lo_refit_rounds: 2,
            confidence: 0.99,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RansacOutcome {
    pub model: FittedModel,
    pub inliers: Vec<bool>,
    pub n_inliers: usize,
    /// Median squared residual over inliers, normalized units.
    pub median_residual: f64,
    pub trials_used: u32,
}

enum Prepared {
    Essential(Matrix3<f64>),
    Homography {
        h: Matrix3<f64>,
        h_inv: Matrix3<f64>,
    },
}

impl Prepared {
    fn build(model: &FittedModel) -> Option<Prepared> {
        match model {
            FittedModel::Essential(e) => Some(Prepared::Essential(e.e)),
            FittedModel::Homography(h) => Some(Prepared::Homography {
                h: h.h,
                h_inv: h.h.try_inverse()?,
            }),
        }
    }

    #[inline]
    fn residual(&self, x: &Vector2<f64>, xp: &Vector2<f64>) -> f64 {
        match self {
            Prepared::Essential(e) => sampson_error(e, x, xp),
            Prepared::Homography { h, h_inv } => homography_residual_prepared(h, h_inv, x, xp),
        }
    }
}

struct Scored {
    inliers: Vec<bool>,
    count: usize,
    median: f64,
}

fn score(prepared: &Prepared, pts: &[(Vector2<f64>, Vector2<f64>)], thr: f64) -> Scored {
    let mut inliers = vec![false; pts.len()];
    let mut inlier_residuals = Vec::new();
    for (i, (x, xp)) in pts.iter().enumerate() {
        let r = prepared.residual(x, xp);
        if r <= thr {
            inliers[i] = true;
            inlier_residuals.push(r);
        }
    }
    let count = inlier_residuals.len();
    Scored {
        inliers,
        count,
        median: median_of(&mut inlier_residuals),
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn adaptive_trials(inlier_ratio: f64, sample_size: usize, confidence: f64) -> u32 {
    let w_s = inlier_ratio.powi(sample_size as i32);
    if w_s >= 1.0 {
        return 1;
    }
    if w_s <= 0.0 {
        return u32::MAX;
    }
    let denom = (1.0 - w_s).ln();
    if denom >= 0.0 {
        return u32::MAX;
    }
    let needed = ((1.0 - confidence).ln() / denom).ceil();
    if needed >= u32::MAX as f64 {
        u32::MAX
    } else {
        (needed as u32).max(1)
    }
}

/// Robust two-view estimation on pixel matches.
///
/// Points are moved to normalized camera coordinates, the minimal solver
/// (five-point or DLT) proposes models, the residual (Sampson or symmetric
/// transfer) is thresholded at `(max_error_px / mean focal)^2`, and each new
/// best consensus is refit by least squares on its inliers. Fails with
/// `NoModel` when the final inlier ratio stays below the floor.
pub fn lo_ransac(
    matches_px: &[(Vector2<f64>, Vector2<f64>)],
    kind: ModelKind,
    cfg: &RansacConfig,
    k: &CameraIntrinsics,
) -> Result<RansacOutcome, GeomError> {
    let sample_size = kind.sample_size();
    let n = matches_px.len();
    if n < sample_size {
        return Err(GeomError::TooFewMatches {
            needed: sample_size,
            got: n,
        });
    }
    let pts: Vec<(Vector2<f64>, Vector2<f64>)> = matches_px
        .iter()
        .map(|(a, b)| (k.normalize(a), k.normalize(b)))
        .collect();
    let thr = (cfg.max_error_px / k.mean_focal()).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut best: Option<(FittedModel, Scored)> = None;
    let mut trials = 0u32;
    let mut needed = cfg.max_num_trials;

    while trials < needed {
        trials += 1;
        let idx = rand::seq::index::sample(&mut rng, n, sample_size);
        let sample: Vec<(Vector2<f64>, Vector2<f64>)> = idx.iter().map(|i| pts[i]).collect();
        let candidates: Vec<FittedModel> = match kind {
            ModelKind::Essential => five_point_essential(&sample)
                .map(|v| v.into_iter().map(FittedModel::Essential).collect())
                .unwrap_or_default(),
            ModelKind::Homography => dlt_homography(&sample)
                .map(|h| vec![FittedModel::Homography(h)])
                .unwrap_or_default(),
        };
        for cand in candidates {
            let Some(prepared) = Prepared::build(&cand) else {
                continue;
            };
            let scored = score(&prepared, &pts, thr);
            let improves = match &best {
                None => scored.count > 0,
                Some((_, b)) => {
                    scored.count > b.count || (scored.count == b.count && scored.median < b.median)
                }
            };
            if !improves {
                continue;
            }
            let mut current = (cand, scored);
            for _ in 0..cfg.lo_refit_rounds {
                let inlier_pts: Vec<(Vector2<f64>, Vector2<f64>)> = pts
                    .iter()
                    .zip(&current.1.inliers)
                    .filter(|(_, &inl)| inl)
                    .map(|(p, _)| *p)
                    .collect();
                let refit = match kind {
                    ModelKind::Essential if inlier_pts.len() >= 8 => eight_point_refit(&inlier_pts)
                        .ok()
                        .map(FittedModel::Essential),
                    ModelKind::Homography if inlier_pts.len() >= 4 => dlt_homography(&inlier_pts)
                        .ok()
                        .map(FittedModel::Homography),
                    _ => None,
                };
                let Some(refit) = refit else { break };
                let Some(prepared) = Prepared::build(&refit) else {
                    break;
                };
                let rescored = score(&prepared, &pts, thr);
                if rescored.count > current.1.count
                    || (rescored.count == current.1.count && rescored.median < current.1.median)
                {
                    current = (refit, rescored);
                } else {
                    break;
                }
            }
            needed = adaptive_trials(
                current.1.count as f64 / n as f64,
                sample_size,
                cfg.confidence,
            )
            .min(cfg.max_num_trials);
            best = Some(current);
        }
    }

    let Some((model, scored)) = best else {
        return Err(GeomError::NoModel {
            best: 0.0,
            floor: cfg.min_inlier_ratio,
        });
    };
    let ratio = scored.count as f64 / n as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(GeomError::NoModel {
            best: ratio,
            floor: cfg.min_inlier_ratio,
        });
    }
    Ok(RansacOutcome {
        model,
        inliers: scored.inliers,
        n_inliers: scored.count,
        median_residual: scored.median,
        trials_used: trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChosenModel {
    E,
    H,
    None,
}

impl std::fmt::Display for ChosenModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChosenModel::E => write!(f, "E"),
            ChosenModel::H => write!(f, "H"),
            ChosenModel::None => write!(f, "NONE"),
        }
    }
}

/// Verdict for one image pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairReport {
    pub i: u32,
    pub j: u32,
    pub chosen: ChosenModel,
    pub n_matches: usize,
    pub n_inliers: usize,
    pub inlier_ratio: f64,
    /// Median squared residual of the chosen model over its inliers,
    /// normalized units. Infinite when no model was accepted.
    pub median_sampson: f64,
    pub trials_used: u32,
}

/// How much larger the homography consensus must be before it wins over the
/// essential model.
const HOMOGRAPHY_PREFERENCE_FACTOR: f64 = 1.2;

/// Picks between the two fitted models. The larger inlier set wins, with the
/// essential model kept unless the homography explains substantially more
/// matches; exact count ties go to the lower median residual.
pub fn select_model(
    i: u32,
    j: u32,
    n_matches: usize,
    e: Option<&RansacOutcome>,
    h: Option<&RansacOutcome>,
) -> PairReport {
    let report = |chosen: ChosenModel, out: Option<&RansacOutcome>| {
        let (n_inliers, median, trials) = match out {
            Some(o) => (o.n_inliers, o.median_residual, o.trials_used),
            None => (0, f64::INFINITY, 0),
        };
        PairReport {
            i,
            j,
            chosen,
            n_matches,
            n_inliers,
            inlier_ratio: if n_matches == 0 {
                0.0
            } else {
                n_inliers as f64 / n_matches as f64
            },
            median_sampson: median,
            trials_used: trials,
        }
    };
    match (e, h) {
        (None, None) => report(ChosenModel::None, None),
        (Some(eo), None) => report(ChosenModel::E, Some(eo)),
        (None, Some(ho)) => report(ChosenModel::H, Some(ho)),
        (Some(eo), Some(ho)) => {
            let substantially_more =
                ho.n_inliers as f64 > HOMOGRAPHY_PREFERENCE_FACTOR * eo.n_inliers as f64;
            let tie_on_residual =
                ho.n_inliers == eo.n_inliers && ho.median_residual < eo.median_residual;
            if substantially_more || tie_on_residual {
                report(ChosenModel::H, Some(ho))
            } else {
                report(ChosenModel::E, Some(eo))
            }
        }
    }
}

/// Matches of one image pair in pixel coordinates.
#[derive(Debug, Clone)]
pub struct PairObservations {
    pub i: u32,
    pub j: u32,
    pub points_px: Vec<(Vector2<f64>, Vector2<f64>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub ransac: RansacConfig,
    /// Independent estimation repeats; reported metrics are medians over
    /// the repeated runs.
    pub repeats: usize,
    /// Also report the median over all inlier residuals pooled across
    /// pairs, instead of only the per-pair-median aggregation.
    pub pooled_median: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            ransac: RansacConfig::default(),
            repeats: 3,
            pooled_median: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub median_inlier_ratio: f64,
    pub median_sampson: f64,
    pub pooled_median_sampson: Option<f64>,
}

/// Sequence-level metrics: medians over pairs, then medians over runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub n_pairs: usize,
    pub n_none: usize,
    pub repeats: usize,
    pub median_inlier_ratio: f64,
    pub median_sampson: f64,
    pub pooled_median_sampson: Option<f64>,
    pub runs: Vec<RunSummary>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for one (pair, run, model) estimation, so parallel and
/// serial schedules agree bit for bit.
fn derive_seed(base: u64, i: u32, j: u32, run: u32, model_tag: u32) -> u64 {
    let mut s = splitmix64(base);
    s = splitmix64(s ^ i as u64);
    s = splitmix64(s ^ j as u64);
    s = splitmix64(s ^ ((run as u64) << 32 | model_tag as u64));
    s
}

/// Verifies every pair independently, repeating each estimation
/// `cfg.repeats` times with derived seeds. The per-pair report is the
/// median run (ordered by inlier ratio, then median residual); sequence
/// metrics are medians over runs of per-run medians.
pub fn verify_all_pairs(
    pairs: &[PairObservations],
    k: &CameraIntrinsics,
    cfg: &VerifyConfig,
) -> (Vec<PairReport>, SequenceSummary) {
    let repeats = cfg.repeats.max(1);
    let per_pair: Vec<(Vec<PairReport>, Vec<Vec<f64>>)> = pairs
        .par_iter()
        .map(|p| {
            let mut runs = Vec::with_capacity(repeats);
            let mut residuals_per_run = Vec::with_capacity(repeats);
            for run in 0..repeats {
                let mut run_cfg = cfg.ransac.clone();
                run_cfg.rng_seed = derive_seed(cfg.ransac.rng_seed, p.i, p.j, run as u32, 0);
                let e_out = lo_ransac(&p.points_px, ModelKind::Essential, &run_cfg, k).ok();
                run_cfg.rng_seed = derive_seed(cfg.ransac.rng_seed, p.i, p.j, run as u32, 1);
                let h_out = lo_ransac(&p.points_px, ModelKind::Homography, &run_cfg, k).ok();
                let report =
                    select_model(p.i, p.j, p.points_px.len(), e_out.as_ref(), h_out.as_ref());
                if cfg.pooled_median {
                    let chosen_out = match report.chosen {
                        ChosenModel::E => e_out.as_ref(),
                        ChosenModel::H => h_out.as_ref(),
                        ChosenModel::None => None,
                    };
                    residuals_per_run.push(inlier_residuals(chosen_out, p, k));
                } else {
                    residuals_per_run.push(Vec::new());
                }
                runs.push(report);
            }
            (runs, residuals_per_run)
        })
        .collect();

    // per-run sequence metrics
    let mut run_summaries = Vec::with_capacity(repeats);
    for run in 0..repeats {
        let mut ratios = Vec::new();
        let mut sampsons = Vec::new();
        let mut pooled = Vec::new();
        for (runs, residuals) in &per_pair {
            let r = &runs[run];
            if r.chosen != ChosenModel::None {
                ratios.push(r.inlier_ratio);
                sampsons.push(r.median_sampson);
            }
            if cfg.pooled_median {
                pooled.extend_from_slice(&residuals[run]);
            }
        }
        run_summaries.push(RunSummary {
            run,
            median_inlier_ratio: median_of(&mut ratios),
            median_sampson: median_of(&mut sampsons),
            pooled_median_sampson: cfg.pooled_median.then(|| median_of(&mut pooled)),
        });
    }

    // median run per pair
    let reports: Vec<PairReport> = per_pair
        .iter()
        .map(|(runs, _)| {
            let mut order: Vec<usize> = (0..runs.len()).collect();
            order.sort_by(|&a, &b| {
                runs[a]
                    .inlier_ratio
                    .total_cmp(&runs[b].inlier_ratio)
                    .then(runs[a].median_sampson.total_cmp(&runs[b].median_sampson))
            });
            runs[order[(runs.len() - 1) / 2]].clone()
        })
        .collect();

    let n_none = reports
        .iter()
        .filter(|r| r.chosen == ChosenModel::None)
        .count();
    let mut ratio_medians: Vec<f64> = run_summaries
        .iter()
        .map(|r| r.median_inlier_ratio)
        .collect();
    let mut sampson_medians: Vec<f64> = run_summaries.iter().map(|r| r.median_sampson).collect();
    let mut pooled_medians: Vec<f64> = run_summaries
        .iter()
        .filter_map(|r| r.pooled_median_sampson)
        .collect();
    let summary = SequenceSummary {
        n_pairs: pairs.len(),
        n_none,
        repeats,
        median_inlier_ratio: median_of(&mut ratio_medians),
        median_sampson: median_of(&mut sampson_medians),
        pooled_median_sampson: cfg.pooled_median.then(|| median_of(&mut pooled_medians)),
        runs: run_summaries,
    };
    (reports, summary)
}

fn inlier_residuals(
    out: Option<&RansacOutcome>,
    p: &PairObservations,
    k: &CameraIntrinsics,
) -> Vec<f64> {
    let Some(out) = out else { return Vec::new() };
    let Some(prepared) = Prepared::build(&out.model) else {
        return Vec::new();
    };
    p.points_px
        .iter()
        .zip(&out.inliers)
        .filter(|(_, &inl)| inl)
        .map(|((a, b), _)| prepared.residual(&k.normalize(a), &k.normalize(b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{epipolar_scene, random_rotation, random_unit_translation};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    type PixelMatches = Vec<(Vector2<f64>, Vector2<f64>)>;

    fn pixel_scene(
        rng: &mut ChaCha8Rng,
        k: &CameraIntrinsics,
        n: usize,
    ) -> (PixelMatches, EssentialModel) {
        let r = random_rotation(rng);
        let t = random_unit_translation(rng);
        let normalized = epipolar_scene(rng, &r, &t, n);
        let px = normalized
            .iter()
            .map(|(a, b)| (k.denormalize(a), k.denormalize(b)))
            .collect();
        (px, EssentialModel::from_rt(&r, &t))
    }

    #[test]
    fn clean_data_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0);
        let (px, true_e) = pixel_scene(&mut rng, &k, 200);
        let cfg = RansacConfig::default();
        let out = lo_ransac(&px, ModelKind::Essential, &cfg, &k).unwrap();
        assert_eq!(out.n_inliers, 200);
        assert!(out.trials_used < 20);
        match &out.model {
            FittedModel::Essential(e) => assert!(e.distance(&true_e) < 1e-6),
            _ => unreachable!(),
        }
    }

    #[test]
    fn no_model_below_inlier_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0);
        let (mut px, _) = pixel_scene(&mut rng, &k, 60);
        // replace 80% with junk far from any epipolar structure
        for (i, (_, b)) in px.iter_mut().enumerate() {
            if i % 5 != 0 {
                b.x = rng.gen_range(0.0..1920.0);
                b.y = rng.gen_range(0.0..1080.0);
            }
        }
        let cfg = RansacConfig {
            max_num_trials: 2000,
            ..RansacConfig::default()
        };
        match lo_ransac(&px, ModelKind::Essential, &cfg, &k) {
            Err(GeomError::NoModel { best, floor }) => {
                assert!(best < floor, "best {best} floor {floor}");
            }
            other => panic!("expected NoModel, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let k = CameraIntrinsics::new(800.0, 820.0, 320.0, 240.0);
        let (px, _) = pixel_scene(&mut rng, &k, 120);
        let cfg = RansacConfig::default();
        let a = lo_ransac(&px, ModelKind::Essential, &cfg, &k).unwrap();
        let b = lo_ransac(&px, ModelKind::Essential, &cfg, &k).unwrap();
        assert_eq!(a.inliers, b.inliers);
        assert_eq!(a.trials_used, b.trials_used);
        match (&a.model, &b.model) {
            (FittedModel::Essential(x), FittedModel::Essential(y)) => assert_eq!(x.e, y.e),
            _ => unreachable!(),
        }
    }

    #[test]
    fn inlier_set_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0);
        let (px, true_e) = pixel_scene(&mut rng, &k, 150);
        let pts: Vec<_> = px
            .iter()
            .map(|(a, b)| (k.normalize(a), k.normalize(b)))
            .collect();
        let prepared = Prepared::Essential(true_e.e);
        let mut last_count = 0;
        for max_err in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let thr = (max_err / k.mean_focal()).powi(2);
            let s = score(&prepared, &pts, thr);
            assert!(s.count >= last_count);
            last_count = s.count;
        }
    }

    #[test]
    fn selection_rules() {
        let outcome = |n: usize, median: f64| RansacOutcome {
            model: FittedModel::Essential(EssentialModel::project_from(Matrix3::new(
                0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ))),
            inliers: Vec::new(),
            n_inliers: n,
            median_residual: median,
            trials_used: 1,
        };
        // 950 < 1.2 * 900: essential retained
        let r = select_model(
            0,
            1,
            1000,
            Some(&outcome(900, 1e-9)),
            Some(&outcome(950, 1e-9)),
        );
        assert_eq!(r.chosen, ChosenModel::E);
        // 700 > 1.2 * 500: homography wins
        let r = select_model(
            0,
            1,
            1000,
            Some(&outcome(500, 1e-9)),
            Some(&outcome(700, 1e-9)),
        );
        assert_eq!(r.chosen, ChosenModel::H);
        // essential failed entirely
        let r = select_model(0, 1, 1000, None, Some(&outcome(700, 1e-9)));
        assert_eq!(r.chosen, ChosenModel::H);
        // exact tie goes to the lower median residual
        let r = select_model(
            0,
            1,
            1000,
            Some(&outcome(700, 1e-9)),
            Some(&outcome(700, 1e-12)),
        );
        assert_eq!(r.chosen, ChosenModel::H);
        let r = select_model(
            0,
            1,
            1000,
            Some(&outcome(700, 1e-12)),
            Some(&outcome(700, 1e-9)),
        );
        assert_eq!(r.chosen, ChosenModel::E);
        // both failed
        let r = select_model(0, 1, 0, None, None);
        assert_eq!(r.chosen, ChosenModel::None);
        assert_eq!(r.n_matches, 0);
    }

    #[test]
    fn empty_pair_reports_none() {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0);
        let pairs = vec![PairObservations {
            i: 0,
            j: 1,
            points_px: Vec::new(),
        }];
        let (reports, summary) = verify_all_pairs(&pairs, &k, &VerifyConfig::default());
        assert_eq!(reports[0].chosen, ChosenModel::None);
        assert_eq!(reports[0].n_matches, 0);
        assert_eq!(reports[0].n_inliers, 0);
        assert_eq!(summary.n_none, 1);
    }

    #[test]
    fn summary_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0);
        let mut pairs = Vec::new();
        for j in 1..5u32 {
            let (px, _) = pixel_scene(&mut rng, &k, 60 + 10 * j as usize);
            pairs.push(PairObservations {
                i: j - 1,
                j,
                points_px: px,
            });
        }
        let cfg = VerifyConfig::default();
        let (_, forward) = verify_all_pairs(&pairs, &k, &cfg);
        pairs.reverse();
        let (_, reversed) = verify_all_pairs(&pairs, &k, &cfg);
        assert_eq!(forward.median_inlier_ratio, reversed.median_inlier_ratio);
        assert_eq!(forward.median_sampson, reversed.median_sampson);
    }

    #[test]
    fn verify_reports_are_parallel_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0);
        let mut pairs = Vec::new();
        for j in 1..4u32 {
            let (px, _) = pixel_scene(&mut rng, &k, 80);
            pairs.push(PairObservations {
                i: j - 1,
                j,
                points_px: px,
            });
        }
        let cfg = VerifyConfig::default();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let (serial, _) = pool.install(|| verify_all_pairs(&pairs, &k, &cfg));
        let (parallel, summary) = verify_all_pairs(&pairs, &k, &cfg);
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.n_inliers, b.n_inliers);
            assert_eq!(a.median_sampson, b.median_sampson);
            assert_eq!(a.trials_used, b.trials_used);
        }
        assert_eq!(summary.n_pairs, 3);
        assert_eq!(summary.n_none, 0);
    }
}
