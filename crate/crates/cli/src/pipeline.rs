//! Stage implementations shared by the stage subcommands and `run`.

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use mvcorr_core::correspond::{build_store, read_store, write_store, KeypointStore};
use mvcorr_core::dump::{
    detect_format, normalize_aom_inspect, parse_dump, write_dump, DumpFormat, MVDumpSequence,
};
use mvcorr_core::export::{
    export_adjacency_pgm, export_colmap, matches_to_text, process_cpu_seconds, read_colmap_matches,
    reports_to_csv, summarize, RunStats,
};
use mvcorr_core::geometry::{verify_all_pairs, CameraIntrinsics, PairReport, VerifyConfig};
use mvcorr_core::synth::{gen_sequence, write_ground_truth, MotionSpec};
use mvcorr_core::tracks::{
    adjacency, adjacent_pairs, build_tracks, filter_tracks, propagate_pairs, to_pair_observations,
    total_matches, write_tracks, PairMatches, Track, TrackFilterConfig,
};

use crate::config::{CliError, RunConfig};

const SUCCESS: ExitCode = ExitCode::SUCCESS;

fn degraded_exit() -> ExitCode {
    ExitCode::from(4)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn load_dump(path: &Path) -> Result<MVDumpSequence, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (seq, warnings) = parse_dump(&bytes, detect_format(&bytes))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(seq)
}

fn load_store(path: &Path) -> Result<KeypointStore, CliError> {
    let file =
        fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(read_store(BufReader::new(file))?)
}

fn resolve_names(names: Option<&Path>, n: usize) -> Result<Vec<String>, CliError> {
    match names {
        None => Ok((0..n).map(|i| format!("frame{i:06}.png")).collect()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let names: Vec<String> = text
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            if names.len() < n {
                return Err(CliError::Data(format!(
                    "name file lists {} images, sequence has {n}",
                    names.len()
                )));
            }
            Ok(names[..n].to_vec())
        }
    }
}

pub fn cmd_ingest(
    input: &Path,
    inspect: bool,
    out: &Path,
    binary: bool,
) -> Result<ExitCode, CliError> {
    let bytes = fs::read(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let (seq, warnings) = if inspect {
        normalize_aom_inspect(&bytes)?
    } else {
        parse_dump(&bytes, detect_format(&bytes))?
    };
    for w in warnings {
        eprintln!("warning: {w}");
    }
    ensure_dir(out)?;
    fs::write(out.join("dump.json"), write_dump(&seq, DumpFormat::Json))?;
    if binary {
        fs::write(out.join("dump.mvd"), write_dump(&seq, DumpFormat::Binary))?;
    }
    println!("ingested {} frames -> {}", seq.n_frames(), out.display());
    Ok(SUCCESS)
}

pub fn cmd_synth(
    spec: &MotionSpec,
    k: &CameraIntrinsics,
    seed: u64,
    out: &Path,
    binary: bool,
) -> Result<ExitCode, CliError> {
    let (seq, truth) = gen_sequence(spec, k, seed)?;
    ensure_dir(out)?;
    if binary {
        fs::write(out.join("dump.mvd"), write_dump(&seq, DumpFormat::Binary))?;
    } else {
        fs::write(out.join("dump.json"), write_dump(&seq, DumpFormat::Json))?;
    }
    fs::write(out.join("gt.json"), write_ground_truth(spec, k, &truth))?;
    println!(
        "synthesized {} frames of {}x{} -> {}",
        spec.n_frames,
        spec.width,
        spec.height,
        out.display()
    );
    Ok(SUCCESS)
}

pub fn cmd_match(dump: &Path, out: &Path) -> Result<ExitCode, CliError> {
    let seq = load_dump(dump)?;
    let store = build_store(&seq);
    ensure_dir(out)?;
    let mut buf = Vec::new();
    write_store(&store, &mut buf)?;
    fs::write(out.join("store.jsonl"), buf)?;
    println!(
        "{} keypoints, {} correspondences ({} dropped out of bounds)",
        store.n_keypoints(),
        store.correspondences.len(),
        store.stats.dropped_out_of_bounds
    );
    Ok(SUCCESS)
}

fn tracks_and_matches(
    store: &KeypointStore,
    cfg: &TrackFilterConfig,
    no_propagate: bool,
) -> (Vec<Track>, PairMatches) {
    let tracks = filter_tracks(build_tracks(store), cfg);
    let matches = if no_propagate {
        adjacent_pairs(&tracks)
    } else {
        propagate_pairs(&tracks)
    };
    (tracks, matches)
}

pub fn cmd_tracks(
    store_path: &Path,
    cfg: &TrackFilterConfig,
    no_propagate: bool,
    names: Option<&Path>,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let store = load_store(store_path)?;
    let (tracks, matches) = tracks_and_matches(&store, cfg, no_propagate);
    let names = resolve_names(names, store.frames.len())?;
    ensure_dir(out)?;
    let mut buf = Vec::new();
    write_tracks(&tracks, &mut buf)?;
    fs::write(out.join("tracks.jsonl"), buf)?;
    fs::write(out.join("matches.txt"), matches_to_text(&matches, &names))?;
    export_adjacency_pgm(
        &adjacency(&matches, store.frames.len()),
        &out.join("adjacency.pgm"),
    )?;
    println!(
        "{} tracks, {} matches",
        tracks.len(),
        total_matches(&matches)
    );
    Ok(SUCCESS)
}

fn verify_and_write(
    store: &KeypointStore,
    matches: &PairMatches,
    k: &CameraIntrinsics,
    cfg: &VerifyConfig,
    n_tracks: u64,
    out: &Path,
) -> Result<(Vec<PairReport>, usize, usize), CliError> {
    let pairs = to_pair_observations(matches, store);
    let (reports, summary) = verify_all_pairs(&pairs, k, cfg);
    ensure_dir(out)?;
    fs::write(out.join("pairs.csv"), reports_to_csv(&reports))?;
    let doc = summarize(
        &reports,
        &summary,
        store.frames.len(),
        store.n_keypoints() as u64,
        n_tracks,
    );
    let mut json = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Data(e.to_string()))?;
    json.push(b'\n');
    fs::write(out.join("summary.json"), json)?;
    Ok((reports, summary.n_pairs, summary.n_none))
}

fn degraded(n_pairs: usize, n_none: usize) -> bool {
    n_pairs > 0 && 2 * n_none > n_pairs
}

pub fn cmd_verify(
    store_path: &Path,
    matches_path: &Path,
    k: &CameraIntrinsics,
    cfg: &VerifyConfig,
    names: Option<&Path>,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let store = load_store(store_path)?;
    let names = resolve_names(names, store.frames.len())?;
    let text = fs::read_to_string(matches_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", matches_path.display())))?;
    let matches = read_colmap_matches(&text, &names)?;
    let (_, n_pairs, n_none) = verify_and_write(&store, &matches, k, cfg, 0, out)?;
    println!("{n_pairs} pairs verified, {n_none} without a model");
    Ok(if degraded(n_pairs, n_none) {
        degraded_exit()
    } else {
        SUCCESS
    })
}

pub fn cmd_export(
    store_path: &Path,
    matches_path: &Path,
    names: Option<&Path>,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let store = load_store(store_path)?;
    let names = resolve_names(names, store.frames.len())?;
    let text = fs::read_to_string(matches_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", matches_path.display())))?;
    let matches = read_colmap_matches(&text, &names)?;
    ensure_dir(out)?;
    export_colmap(&store, &matches, &names, out)?;
    println!("exported {} pairs -> {}", matches.len(), out.display());
    Ok(SUCCESS)
}

pub fn cmd_run(cfg: &RunConfig) -> Result<ExitCode, CliError> {
    let out = cfg.out.clone();
    ensure_dir(&out)?;
    let cpu_start = process_cpu_seconds();
    let total_start = Instant::now();

    // ingest
    let t = Instant::now();
    let dump_path = cfg.dump.as_ref().expect("resolved config has a dump");
    let seq = load_dump(dump_path)?;
    fs::write(out.join("dump.json"), write_dump(&seq, DumpFormat::Json))?;
    let ingest_s = t.elapsed().as_secs_f64();

    let (width, height) = match seq.frames.first() {
        Some(f) => (f.meta.width_px, f.meta.height_px),
        None => return Err(CliError::Data("dump has no frames".into())),
    };
    let k = CameraIntrinsics::new(
        cfg.fx.expect("resolved config has fx"),
        cfg.fy.expect("resolved config has fy"),
        cfg.cx.unwrap_or(width as f64 / 2.0),
        cfg.cy.unwrap_or(height as f64 / 2.0),
    );

    // correspondences
    let t = Instant::now();
    let store = build_store(&seq);
    let mut buf = Vec::new();
    write_store(&store, &mut buf)?;
    fs::write(out.join("store.jsonl"), buf)?;
    let correspond_s = t.elapsed().as_secs_f64();

    // tracks and matches
    let t = Instant::now();
    let (tracks, matches) = tracks_and_matches(&store, &cfg.track_filter(), cfg.no_propagate);
    let names = resolve_names(cfg.names.as_deref(), store.frames.len())?;
    let mut buf = Vec::new();
    write_tracks(&tracks, &mut buf)?;
    fs::write(out.join("tracks.jsonl"), buf)?;
    export_adjacency_pgm(
        &adjacency(&matches, store.frames.len()),
        &out.join("adjacency.pgm"),
    )?;
    let tracks_s = t.elapsed().as_secs_f64();

    // verification
    let t = Instant::now();
    let (_, n_pairs, n_none) = verify_and_write(
        &store,
        &matches,
        &k,
        &cfg.verify(),
        tracks.len() as u64,
        &out,
    )?;
    let verify_s = t.elapsed().as_secs_f64();

    // exports
    let t = Instant::now();
    export_colmap(&store, &matches, &names, &out)?;
    let export_s = t.elapsed().as_secs_f64();

    let stats = RunStats {
        ingest_s,
        correspond_s,
        tracks_s,
        verify_s,
        export_s,
        total_s: total_start.elapsed().as_secs_f64(),
        cpu_seconds: process_cpu_seconds() - cpu_start,
        peak_keypoints: store.n_keypoints() as u64,
        peak_matches: total_matches(&matches) as u64,
    };
    let mut json = serde_json::to_vec_pretty(&stats).map_err(|e| CliError::Data(e.to_string()))?;
    json.push(b'\n');
    fs::write(out.join("stats.json"), json)?;

    let mut echo = serde_json::to_vec_pretty(cfg).map_err(|e| CliError::Data(e.to_string()))?;
    echo.push(b'\n');
    fs::write(out.join("config.json"), echo)?;

    println!(
        "{} frames, {} keypoints, {} matches over {} pairs ({} without a model) in {:.2}s",
        seq.n_frames(),
        stats.peak_keypoints,
        stats.peak_matches,
        n_pairs,
        n_none,
        stats.total_s
    );
    Ok(if degraded(n_pairs, n_none) {
        degraded_exit()
    } else {
        SUCCESS
    })
}
