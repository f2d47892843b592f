//! `mvcorr`: motion-vector correspondence pipeline.
//!
//! Subcommands mirror the pipeline stages; `run` chains them all on one
//! dump. Exit codes: 0 success, 2 usage error, 3 data error, 4 when more
//! than half of the verified pairs end without an accepted model.

mod config;
mod pipeline;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "mvcorr",
    version,
    about = "AV1 motion vectors to verified SfM correspondences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (0 = auto). Env fallback: MVCORR_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct IntrinsicsArgs {
    /// Focal length x in pixels.
    #[arg(long)]
    fx: Option<f64>,
    /// Focal length y in pixels.
    #[arg(long)]
    fy: Option<f64>,
    /// Principal point x (default: width / 2).
    #[arg(long)]
    cx: Option<f64>,
    /// Principal point y (default: height / 2).
    #[arg(long)]
    cy: Option<f64>,
    /// Radial distortion coefficient; recorded in the config echo but not
    /// applied (points are treated as undistorted).
    #[arg(long)]
    radial_k: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct TrackArgs {
    /// Cosine gate tolerance on 1 - cos (default 0.1).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Minimum segment length for the gate, pixels (default 1e-3).
    #[arg(long)]
    tau: Option<f64>,
    /// Bypass the cosine gate entirely.
    #[arg(long)]
    cosine_off: bool,
    /// Keep two-detection tracks.
    #[arg(long)]
    keep_pairs: bool,
    /// Emit only adjacent-detection matches instead of all track pairs.
    #[arg(long)]
    no_propagate: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct RansacArgs {
    /// Inlier threshold in pixels (default 4.0).
    #[arg(long)]
    max_error: Option<f64>,
    /// Consensus floor (default 0.25).
    #[arg(long)]
    min_inlier_ratio: Option<f64>,
    /// Trial cap (default 10000).
    #[arg(long)]
    max_num_trials: Option<u32>,
    /// Least-squares refit rounds per new best model (default 2).
    #[arg(long)]
    lo_refit_rounds: Option<u32>,
    /// Independent estimation repeats; metrics are medians over runs
    /// (default 3).
    #[arg(long)]
    repeats: Option<usize>,
    /// Also aggregate the pooled median over all inlier residuals.
    #[arg(long)]
    pooled_median: bool,
    /// Base RNG seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert AOM inspect output (or re-encode an existing dump) into the
    /// dump format.
    Ingest {
        /// Input file: inspect JSON, dump JSON or binary dump (sniffed).
        #[arg(long)]
        input: PathBuf,
        /// Treat the input as AOM inspect output.
        #[arg(long)]
        inspect: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the binary encoding next to the JSON one.
        #[arg(long)]
        binary: bool,
    },
    /// Generate a synthetic dump plus its ground-truth sidecar.
    Synth {
        /// Motion kind: translation, homography or epipolar.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 10)]
        frames: u32,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        #[arg(long, default_value_t = 16)]
        block: u8,
        /// Per-step pixel translation "dx,dy" (translation kind).
        #[arg(long, default_value = "1.0,-2.0", allow_hyphen_values = true)]
        t: String,
        /// Per-step row-major 3x3 homography, nine comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        hmat: Option<String>,
        /// Per-step camera rotation as euler angles "rx,ry,rz" (radians).
        #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
        rot: String,
        /// Per-step camera translation "tx,ty,tz" (epipolar kind).
        #[arg(long, default_value = "1.0,0,0", allow_hyphen_values = true)]
        trans: String,
        #[arg(long, default_value_t = 20.0)]
        depth_min: f64,
        #[arg(long, default_value_t = 60.0)]
        depth_max: f64,
        /// Motion-vector noise sigma in pixels.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Fraction of blocks carrying random vectors.
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the binary dump encoding instead of JSON.
        #[arg(long)]
        binary: bool,
    },
    /// Extract keypoints and correspondences from a dump.
    Match {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Build, filter and propagate tracks from a correspondence store.
    Tracks {
        #[arg(long)]
        store: PathBuf,
        #[command(flatten)]
        track_args: TrackArgs,
        /// File with one image name per line (default frame%06d.png).
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Robust pairwise geometry verification of propagated matches.
    Verify {
        #[arg(long)]
        store: PathBuf,
        /// COLMAP-format match file produced by `tracks`.
        #[arg(long)]
        matches: PathBuf,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        #[command(flatten)]
        ransac: RansacArgs,
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write COLMAP feature and match files for a store and match set.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Full pipeline: dump -> correspondences -> tracks -> verification ->
    /// export, with timing stats and a resolved-config echo.
    Run {
        /// Dump file (JSON or binary, sniffed).
        #[arg(long)]
        dump: Option<PathBuf>,
        /// JSON config file with flat keys mirroring the flags; explicit
        /// flags win over file values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        intrinsics: IntrinsicsArgs,
        #[command(flatten)]
        track_args: TrackArgs,
        #[command(flatten)]
        ransac: RansacArgs,
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match dispatch(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("MVCORR_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        // a failure here means a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Ingest {
            input,
            inspect,
            out,
            binary,
        } => pipeline::cmd_ingest(&input, inspect, &out, binary),
        Command::Synth {
            kind,
            frames,
            width,
            height,
            block,
            t,
            hmat,
            rot,
            trans,
            depth_min,
            depth_max,
            noise,
            outliers,
            seed,
            intrinsics,
            out,
            binary,
        } => {
            let spec = config::build_motion_spec(
                &kind,
                frames,
                width,
                height,
                block,
                &t,
                hmat.as_deref(),
                &rot,
                &trans,
                (depth_min, depth_max),
                noise,
                outliers,
            )?;
            let k = config::resolve_intrinsics(&intrinsics, width, height, true)?;
            pipeline::cmd_synth(&spec, &k, seed, &out, binary)
        }
        Command::Match { dump, out } => pipeline::cmd_match(&dump, &out),
        Command::Tracks {
            store,
            track_args,
            names,
            out,
        } => pipeline::cmd_tracks(
            &store,
            &config::track_config(&track_args),
            track_args.no_propagate,
            names.as_deref(),
            &out,
        ),
        Command::Verify {
            store,
            matches,
            intrinsics,
            ransac,
            names,
            out,
        } => {
            let k = config::resolve_intrinsics(&intrinsics, 0, 0, false)?;
            pipeline::cmd_verify(
                &store,
                &matches,
                &k,
                &config::verify_config(&ransac),
                names.as_deref(),
                &out,
            )
        }
        Command::Export {
            store,
            matches,
            names,
            out,
        } => pipeline::cmd_export(&store, &matches, names.as_deref(), &out),
        Command::Run {
            dump,
            config: config_path,
            intrinsics,
            track_args,
            ransac,
            names,
            out,
        } => {
            let file_cfg = match &config_path {
                Some(p) => {
                    let raw = fs::read_to_string(p)
                        .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<RunConfig>(&raw)
                        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))?
                }
                None => RunConfig::default(),
            };
            let cfg = config::resolve_run_config(
                file_cfg,
                dump,
                &intrinsics,
                &track_args,
                &ransac,
                names,
                out,
                cli.threads,
            )?;
            pipeline::cmd_run(&cfg)
        }
    }
}
