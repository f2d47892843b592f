//! COLMAP-compatible exports, adjacency images, summaries and run statistics.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspond::KeypointStore;
use crate::geometry::{PairReport, SequenceSummary};
use crate::tracks::{AdjacencyMatrix, PairMatches};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("duplicate image name: {0}")]
    NameCollision(String),
    #[error("match index {index} out of range for image {image} ({n_keypoints} keypoints)")]
    IndexOutOfRange {
        image: String,
        index: u32,
        n_keypoints: usize,
    },
    #[error("need {expected} image names, got {got}")]
    NameCount { expected: usize, got: usize },
    #[error("malformed match file: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-image feature text files plus one match file, in the text layout
/// COLMAP imports. Feature lines carry placeholder scale/orientation and a
/// 128-dim zero descriptor; match indices reference feature line order,
/// which equals keypoint id order.
pub fn export_colmap(
    store: &KeypointStore,
    matches: &PairMatches,
    image_names: &[String],
    dir: &Path,
) -> Result<(), ExportError> {
    if image_names.len() != store.frames.len() {
        return Err(ExportError::NameCount {
            expected: store.frames.len(),
            got: image_names.len(),
        });
    }
    let mut seen = HashMap::new();
    for (i, name) in image_names.iter().enumerate() {
        if seen.insert(name.clone(), i).is_some() {
            return Err(ExportError::NameCollision(name.clone()));
        }
    }

    let feature_dir = dir.join("features");
    fs::create_dir_all(&feature_dir)?;
    for (frame, name) in store.frames.iter().zip(image_names) {
        let mut text = String::with_capacity(frame.len() * 64 + 16);
        writeln!(text, "{} 128", frame.len()).unwrap();
        for kp in frame {
            write!(text, "{} {} 1.0 0.0", kp.pos.x, kp.pos.y).unwrap();
            for _ in 0..128 {
                text.push_str(" 0");
            }
            text.push('\n');
        }
        fs::write(feature_dir.join(format!("{name}.txt")), text)?;
    }

    for (&(i, j), pairs) in matches {
        for &(a, b) in pairs {
            for (frame, idx) in [(i, a), (j, b)] {
                let n = store.frames[frame as usize].len();
                if idx as usize >= n {
                    return Err(ExportError::IndexOutOfRange {
                        image: image_names[frame as usize].clone(),
                        index: idx,
                        n_keypoints: n,
                    });
                }
            }
        }
    }
    fs::write(
        dir.join("matches.txt"),
        matches_to_text(matches, image_names),
    )?;
    Ok(())
}

/// Match file body: per pair a `name_i name_j` header, one `idx_i idx_j`
/// line per match, blank-line separated. Empty pairs are omitted.
pub fn matches_to_text(matches: &PairMatches, image_names: &[String]) -> String {
    let mut text = String::new();
    for (&(i, j), pairs) in matches {
        if pairs.is_empty() {
            continue;
        }
        writeln!(
            text,
            "{} {}",
            image_names[i as usize], image_names[j as usize]
        )
        .unwrap();
        for &(a, b) in pairs {
            writeln!(text, "{a} {b}").unwrap();
        }
        text.push('\n');
    }
    text
}

/// Re-reads an exported match file back into id pairs, resolving image
/// names through `image_names` order.
pub fn read_colmap_matches(
    match_text: &str,
    image_names: &[String],
) -> Result<PairMatches, ExportError> {
    let index_of: HashMap<&str, u32> = image_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u32))
        .collect();
    let mut out = PairMatches::new();
    let mut current: Option<(u32, u32)> = None;
    for line in match_text.lines() {
        let line = line.trim();
        if line.is_empty() {
            current = None;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(ExportError::Malformed(format!("bad line: {line}")));
        }
        match current {
            None => {
                let i = *index_of.get(fields[0]).ok_or_else(|| {
                    ExportError::Malformed(format!("unknown image {}", fields[0]))
                })?;
                let j = *index_of.get(fields[1]).ok_or_else(|| {
                    ExportError::Malformed(format!("unknown image {}", fields[1]))
                })?;
                current = Some((i, j));
            }
            Some((i, j)) => {
                let a: u32 = fields[0]
                    .parse()
                    .map_err(|_| ExportError::Malformed(format!("bad index: {line}")))?;
                let b: u32 = fields[1]
                    .parse()
                    .map_err(|_| ExportError::Malformed(format!("bad index: {line}")))?;
                out.entry((i, j)).or_default().push((a, b));
            }
        }
    }
    Ok(out)
}

/// Binary P5 PGM of the match-count matrix, scaled so the densest pair is
/// white. All black when there are no matches.
pub fn adjacency_to_pgm(adj: &AdjacencyMatrix) -> Vec<u8> {
    let n = adj.n;
    let max = adj.max_count();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.reserve(n * n);
    for i in 0..n {
        for j in 0..n {
            let v = if max == 0 {
                0
            } else {
                ((255.0 * adj.at(i, j) as f64 / max as f64).round()) as u8
            };
            out.push(v);
        }
    }
    out
}

pub fn export_adjacency_pgm(adj: &AdjacencyMatrix, path: &Path) -> Result<(), ExportError> {
    fs::write(path, adjacency_to_pgm(adj))?;
    Ok(())
}

/// Parses a P5 PGM back into (size, pixels); test and inspection helper.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), ExportError> {
    let header_err = || ExportError::Malformed("bad pgm header".into());
    let text_end = bytes
        .windows(1)
        .enumerate()
        .scan(0, |newlines, (i, w)| {
            if w[0] == b'\n' {
                *newlines += 1;
            }
            Some((i, *newlines))
        })
        .find(|&(_, n)| n == 3)
        .map(|(i, _)| i + 1)
        .ok_or_else(header_err)?;
    let header = std::str::from_utf8(&bytes[..text_end]).map_err(|_| header_err())?;
    let mut lines = header.lines();
    if lines.next() != Some("P5") {
        return Err(header_err());
    }
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(header_err)?
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    if dims.len() != 2 || lines.next() != Some("255") {
        return Err(header_err());
    }
    let (w, h) = (dims[0], dims[1]);
    let pixels = bytes[text_end..].to_vec();
    if pixels.len() != w * h {
        return Err(ExportError::Malformed("pgm payload size mismatch".into()));
    }
    Ok((w, h, pixels))
}

/// Wall-clock seconds per pipeline stage plus process-wide counters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub ingest_s: f64,
    pub correspond_s: f64,
    pub tracks_s: f64,
    pub verify_s: f64,
    pub export_s: f64,
    pub total_s: f64,
    pub cpu_seconds: f64,
    pub peak_keypoints: u64,
    pub peak_matches: u64,
}

impl RunStats {
    pub fn stage_sum(&self) -> f64 {
        self.ingest_s + self.correspond_s + self.tracks_s + self.verify_s + self.export_s
    }
}

/// User+system CPU seconds consumed by this process so far.
pub fn process_cpu_seconds() -> f64 {
    fn read() -> Option<f64> {
        let stat = fs::read_to_string("/proc/self/stat").ok()?;
        // fields 14 and 15 (1-based) are utime and stime in clock ticks;
        // skip past the parenthesized command name first
        let after = stat.rsplit_once(')')?.1;
        let fields: Vec<&str> = after.split_whitespace().collect();
        let utime: f64 = fields.get(11)?.parse().ok()?;
        let stime: f64 = fields.get(12)?.parse().ok()?;
        // _SC_CLK_TCK is 100 on mainstream Linux
        Some((utime + stime) / 100.0)
    }
    read().unwrap_or(0.0)
}

/// One CSV line per pair:
/// `pair_i,pair_j,model,n_matches,n_inliers,inlier_ratio,median_sampson,trials`.
pub fn reports_to_csv(reports: &[PairReport]) -> String {
    let mut out = String::from(
        "pair_i,pair_j,model,n_matches,n_inliers,inlier_ratio,median_sampson,trials\n",
    );
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.i,
            r.j,
            r.chosen,
            r.n_matches,
            r.n_inliers,
            r.inlier_ratio,
            r.median_sampson,
            r.trials_used
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub summary: SequenceSummary,
    /// Matches touching each image, summed over its pairs.
    pub per_image_matches: Vec<u64>,
    pub n_keypoints: u64,
    pub n_tracks: u64,
}

/// Sequence summary JSON combining verification metrics with match counts.
pub fn summarize(
    reports: &[PairReport],
    summary: &SequenceSummary,
    n_frames: usize,
    n_keypoints: u64,
    n_tracks: u64,
) -> SummaryDocument {
    let mut per_image = vec![0u64; n_frames];
    for r in reports {
        per_image[r.i as usize] += r.n_matches as u64;
        per_image[r.j as usize] += r.n_matches as u64;
    }
    SummaryDocument {
        summary: summary.clone(),
        per_image_matches: per_image,
        n_keypoints,
        n_tracks,
    }
}
