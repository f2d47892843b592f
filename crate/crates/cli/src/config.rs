//! Configuration resolution: defaults, config file, then explicit flags.

use std::path::PathBuf;

use mvcorr_core::geometry::{CameraIntrinsics, RansacConfig, VerifyConfig};
use mvcorr_core::synth::{MotionKind, MotionSpec};
use mvcorr_core::tracks::{CosineParams, TrackFilterConfig};
use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{IntrinsicsArgs, RansacArgs, TrackArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Fully resolved pipeline configuration; serialized beside the outputs so
/// a run can be reproduced from its echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dump: Option<PathBuf>,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    /// Radial distortion coefficient of the source camera, recorded for
    /// provenance; correspondences are treated as undistorted.
    pub radial_k: Option<f64>,
    pub epsilon: f64,
    pub tau: f64,
    pub cosine_off: bool,
    pub keep_pairs: bool,
    pub no_propagate: bool,
    pub max_error: f64,
    pub min_inlier_ratio: f64,
    pub max_num_trials: u32,
    pub lo_refit_rounds: u32,
    pub repeats: usize,
    pub pooled_median: bool,
    pub seed: u64,
    pub names: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dump: None,
            fx: None,
            fy: None,
            cx: None,
            cy: None,
            radial_k: None,
            epsilon: 0.1,
            tau: 1e-3,
            cosine_off: false,
            keep_pairs: false,
            no_propagate: false,
            max_error: 4.0,
            min_inlier_ratio: 0.25,
            max_num_trials: 10_000,
            lo_refit_rounds: 2,
            repeats: 3,
            pooled_median: false,
            seed: 0,
            names: None,
            out: PathBuf::from("out"),
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn track_filter(&self) -> TrackFilterConfig {
        TrackFilterConfig {
            cosine: CosineParams {
                epsilon: self.epsilon,
                tau: self.tau,
            },
            cosine_off: self.cosine_off,
            keep_pairs: self.keep_pairs,
        }
    }

    pub fn verify(&self) -> VerifyConfig {
        VerifyConfig {
            ransac: RansacConfig {
                max_error_px: self.max_error,
                min_inlier_ratio: self.min_inlier_ratio,
                max_num_trials: self.max_num_trials,
                lo_refit_rounds: self.lo_refit_rounds,
                confidence: 0.99,
                rng_seed: self.seed,
            },
            repeats: self.repeats,
            pooled_median: self.pooled_median,
        }
    }
}

/// Overlays explicit flags on a config-file base.
#[allow(clippy::too_many_arguments)]
pub fn resolve_run_config(
    base: RunConfig,
    dump: Option<PathBuf>,
    intrinsics: &IntrinsicsArgs,
    track: &TrackArgs,
    ransac: &RansacArgs,
    names: Option<PathBuf>,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> Result<RunConfig, CliError> {
    let cfg = RunConfig {
        dump: dump.or(base.dump),
        fx: intrinsics.fx.or(base.fx),
        fy: intrinsics.fy.or(base.fy),
        cx: intrinsics.cx.or(base.cx),
        cy: intrinsics.cy.or(base.cy),
        radial_k: intrinsics.radial_k.or(base.radial_k),
        epsilon: track.epsilon.unwrap_or(base.epsilon),
        tau: track.tau.unwrap_or(base.tau),
        cosine_off: track.cosine_off || base.cosine_off,
        keep_pairs: track.keep_pairs || base.keep_pairs,
        no_propagate: track.no_propagate || base.no_propagate,
        max_error: ransac.max_error.unwrap_or(base.max_error),
        min_inlier_ratio: ransac.min_inlier_ratio.unwrap_or(base.min_inlier_ratio),
        max_num_trials: ransac.max_num_trials.unwrap_or(base.max_num_trials),
        lo_refit_rounds: ransac.lo_refit_rounds.unwrap_or(base.lo_refit_rounds),
        repeats: ransac.repeats.unwrap_or(base.repeats),
        pooled_median: ransac.pooled_median || base.pooled_median,
        seed: ransac.seed.unwrap_or(base.seed),
        names: names.or(base.names),
        out: out.unwrap_or(base.out),
        threads: threads.unwrap_or(base.threads),
    };
    if cfg.dump.is_none() {
        return Err(CliError::Usage(
            "run needs --dump (or a config with one)".into(),
        ));
    }
    if cfg.fx.is_none() || cfg.fy.is_none() {
        return Err(CliError::Usage("run needs --fx and --fy".into()));
    }
    Ok(cfg)
}

pub fn track_config(args: &TrackArgs) -> TrackFilterConfig {
    TrackFilterConfig {
        cosine: CosineParams {
            epsilon: args.epsilon.unwrap_or(0.1),
            tau: args.tau.unwrap_or(1e-3),
        },
        cosine_off: args.cosine_off,
        keep_pairs: args.keep_pairs,
    }
}

pub fn verify_config(args: &RansacArgs) -> VerifyConfig {
    VerifyConfig {
        ransac: RansacConfig {
            max_error_px: args.max_error.unwrap_or(4.0),
            min_inlier_ratio: args.min_inlier_ratio.unwrap_or(0.25),
            max_num_trials: args.max_num_trials.unwrap_or(10_000),
            lo_refit_rounds: args.lo_refit_rounds.unwrap_or(2),
            confidence: 0.99,
            rng_seed: args.seed.unwrap_or(0),
        },
        repeats: args.repeats.unwrap_or(3),
        pooled_median: args.pooled_median,
    }
}

/// Intrinsics from flags. With `synth_defaults` the focal length falls back
/// to 1000 px and the principal point to the frame center; otherwise all
/// four values are required.
pub fn resolve_intrinsics(
    args: &IntrinsicsArgs,
    width: u32,
    height: u32,
    synth_defaults: bool,
) -> Result<CameraIntrinsics, CliError> {
    if synth_defaults {
        Ok(CameraIntrinsics::new(
            args.fx.unwrap_or(1000.0),
            args.fy.unwrap_or(1000.0),
            args.cx.unwrap_or(width as f64 / 2.0),
            args.cy.unwrap_or(height as f64 / 2.0),
        ))
    } else {
        match (args.fx, args.fy, args.cx, args.cy) {
            (Some(fx), Some(fy), Some(cx), Some(cy)) => Ok(CameraIntrinsics::new(fx, fy, cx, cy)),
            _ => Err(CliError::Usage(
                "verification needs --fx, --fy, --cx and --cy".into(),
            )),
        }
    }
}

fn parse_floats(text: &str, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(CliError::Usage(format!(
            "{what} wants {n} comma-separated numbers, got {text:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_motion_spec(
    kind: &str,
    frames: u32,
    width: u32,
    height: u32,
    block: u8,
    t: &str,
    hmat: Option<&str>,
    rot: &str,
    trans: &str,
    depth_range: (f64, f64),
    noise: f64,
    outliers: f64,
) -> Result<MotionSpec, CliError> {
    let kind = match kind {
        "translation" => {
            let v = parse_floats(t, 2, "--t")?;
            MotionKind::Translation2D {
                t: Vector2::new(v[0], v[1]),
            }
        }
        "homography" => {
            let text = hmat.ok_or_else(|| {
                CliError::Usage("homography kind needs --hmat with nine values".into())
            })?;
            let v = parse_floats(text, 9, "--hmat")?;
            MotionKind::Homography {
                h_step: Matrix3::from_row_slice(&v),
            }
        }
        "epipolar" => {
            let r = parse_floats(rot, 3, "--rot")?;
            let tr = parse_floats(trans, 3, "--trans")?;
            MotionKind::Epipolar {
                rot_step: nalgebra::Rotation3::from_euler_angles(r[0], r[1], r[2]).into_inner(),
                t_step: Vector3::new(tr[0], tr[1], tr[2]),
                depth_range,
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown motion kind {other:?}; expected translation, homography or epipolar"
            )));
        }
    };
    Ok(MotionSpec {
        kind,
        n_frames: frames,
        width,
        height,
        block_size: block,
        noise_sigma_px: noise,
        outlier_fraction: outliers,
    })
}
