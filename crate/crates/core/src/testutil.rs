//! Shared generators for unit tests.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dump::{BlockMode, BlockRecord, Frame, FrameMeta, FrameType, MVDumpSequence};

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-6 {
        Vector3::x()
    } else {
        axis
    };
    let angle = rng.gen_range(-0.5..0.5);
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
}

pub fn random_unit_translation(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let t = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if t.norm() > 1e-3 {
            return t.normalize();
        }
    }
}

/// Exact normalized correspondences of a free 3D point cloud seen from two
/// cameras related by x' = R x + t.
pub fn epipolar_scene(
    rng: &mut ChaCha8Rng,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    n: usize,
) -> Vec<(Vector2<f64>, Vector2<f64>)> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Vector3::new(
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(2.0..8.0),
        );
        let q = r * p + t;
        if q.z < 0.5 {
            continue;
        }
        out.push((
            Vector2::new(p.x / p.z, p.y / p.z),
            Vector2::new(q.x / q.z, q.y / q.z),
        ));
    }
    out
}

/// Recursively splits the frame rectangle into a valid block tiling.
/// Splits keep every edge in the allowed {4..128} set.
pub fn random_tiling(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Vec<(u16, u16, u8, u8)> {
    // tile the frame with 64x64 superblocks (padding allowed), then split each
    let mut out = Vec::new();
    let mut y = 0;
    while y < height {
        let mut x = 0;
        while x < width {
            split_rect(rng, x, y, 64, 64, width, height, &mut out);
            x += 64;
        }
        y += 64;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn split_rect(
    rng: &mut ChaCha8Rng,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    width: u32,
    height: u32,
    out: &mut Vec<(u16, u16, u8, u8)>,
) {
    // sub-rects created by splitting padding area can start past the frame
    if x >= width || y >= height {
        return;
    }
    let can_split = w > 4 && h > 4;
    if !can_split || rng.gen_bool(0.45) {
        out.push((x as u16, y as u16, w as u8, h as u8));
        return;
    }
    match rng.gen_range(0..3u8) {
        0 => {
            // horizontal
            split_rect(rng, x, y, w, h / 2, width, height, out);
            split_rect(rng, x, y + h / 2, w, h / 2, width, height, out);
        }
        1 => {
            // vertical
            split_rect(rng, x, y, w / 2, h, width, height, out);
            split_rect(rng, x + w / 2, y, w / 2, h, width, height, out);
        }
        _ => {
            // quad
            split_rect(rng, x, y, w / 2, h / 2, width, height, out);
            split_rect(rng, x + w / 2, y, w / 2, h / 2, width, height, out);
            split_rect(rng, x, y + h / 2, w / 2, h / 2, width, height, out);
            split_rect(rng, x + w / 2, y + h / 2, w / 2, h / 2, width, height, out);
        }
    }
}

/// Deterministic random sequence that satisfies every dump invariant.
pub fn random_valid_sequence(seed: u64) -> MVDumpSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_frames = rng.gen_range(0..4u32);
    let width = 4 * rng.gen_range(1..40u32);
    let height = 4 * rng.gen_range(1..40u32);
    let mut frames = Vec::new();
    for index in 0..n_frames {
        let frame_type = if index == 0 {
            FrameType::Intra
        } else {
            FrameType::Inter
        };
        let mut ref_map = BTreeMap::new();
        if frame_type == FrameType::Inter {
            ref_map.insert(0u8, index - 1);
            if index >= 2 && rng.gen_bool(0.3) {
                ref_map.insert(1u8, rng.gen_range(0..index - 1));
            }
        }
        let blocks = random_tiling(&mut rng, width, height)
            .into_iter()
            .map(|(x0, y0, w, h)| {
                let (mode, ref_slot, mv_raw) = if frame_type == FrameType::Intra {
                    (BlockMode::Intra, None, (0, 0))
                } else {
                    match rng.gen_range(0..10u8) {
                        0 => (BlockMode::Intra, None, (0, 0)),
                        1 => (BlockMode::Skip, None, (0, 0)),
                        _ => {
                            let slot = if ref_map.len() > 1 && rng.gen_bool(0.25) {
                                1
                            } else {
                                0
                            };
                            (
                                BlockMode::Inter,
                                Some(slot),
                                (rng.gen_range(-512..=512i16), rng.gen_range(-512..=512i16)),
                            )
                        }
                    }
                };
                BlockRecord {
                    x0,
                    y0,
                    w,
                    h,
                    mode,
                    ref_slot,
                    mv_raw,
                }
            })
            .collect();
        frames.push(Frame {
            meta: FrameMeta {
                frame_index: index,
                width_px: width,
                height_px: height,
                frame_type,
                ref_map,
            },
            blocks,
        });
    }
    let (seq, _) = MVDumpSequence::new(format!("testgen-{seed}"), frames)
        .expect("generator must emit valid sequences");
    seq
}
