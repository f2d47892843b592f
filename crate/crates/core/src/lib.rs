//! Compressed-domain correspondence toolkit.
//!
//! Turns codec motion-vector dumps into sub-pixel point correspondences,
//! links them into multi-frame tracks with a cosine consistency gate,
//! verifies every image pair with robust essential/homography estimation,
//! and exports COLMAP-compatible feature and match files.
//!
//! Pipeline stages map onto the modules below:
//!
//! ```text
//! dump ─▶ correspond ─▶ tracks ─▶ geometry ─▶ export
//!   ▲
//! synth (ground-truth generator used as the test oracle)
//! ```

pub mod correspond;
pub mod dump;
pub mod export;
pub mod geometry;
pub mod synth;
pub mod tracks;

#[cfg(test)]
pub(crate) mod testutil;
