//! Pairwise two-view geometry: essential/homography estimation, robust
//! fitting and scoring on normalized camera coordinates.

mod five_point;
mod homography;
mod ransac;

pub use five_point::{eight_point_refit, five_point_essential};
pub use homography::{dlt_homography, homography_residual};
pub use ransac::{
    lo_ransac, select_model, verify_all_pairs, ChosenModel, FittedModel, ModelKind,
    PairObservations, PairReport, RansacConfig, RansacOutcome, RunSummary, SequenceSummary,
    VerifyConfig,
};

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    /// Minimal or refit sample does not constrain the model.
    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),
    #[error("need at least {needed} matches, got {got}")]
    TooFewMatches { needed: usize, got: usize },
    /// Consensus stayed below the inlier-ratio floor.
    #[error("no model: best inlier ratio {best:.3} below {floor:.3}")]
    NoModel { best: f64, floor: f64 },
}

/// Pinhole intrinsics. Distortion is not modeled; a radial coefficient in
/// the input, when present, is recorded by the caller and ignored here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        CameraIntrinsics { fx, fy, cx, cy }
    }

    /// Pixel point to normalized camera coordinates (K^-1 x).
    #[inline]
    pub fn normalize(&self, x: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((x.x - self.cx) / self.fx, (x.y - self.cy) / self.fy)
    }

    #[inline]
    pub fn denormalize(&self, x: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(x.x * self.fx + self.cx, x.y * self.fy + self.cy)
    }

    pub fn mean_focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    pub fn k_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn k_inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Pixel point to normalized camera coordinates.
pub fn normalize(k: &CameraIntrinsics, x: &Vector2<f64>) -> Vector2<f64> {
    k.normalize(x)
}

/// Calibrated essential matrix, rank 2 with equal nonzero singular values,
/// held at unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialModel {
    pub e: Matrix3<f64>,
}

impl EssentialModel {
    /// Projects an arbitrary 3x3 matrix onto the essential manifold
    /// (singular values (s, s, 0)) and rescales to unit Frobenius norm.
    pub fn project_from(m: Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("3x3 svd has u");
        let v_t = svd.v_t.expect("3x3 svd has v_t");
        // averaging the two leading singular values and renormalizing to unit
        // Frobenius norm collapses to diag(1/sqrt(2), 1/sqrt(2), 0)
        let inv = 1.0 / (2.0f64).sqrt();
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(inv, inv, 0.0));
        EssentialModel { e: u * d * v_t }
    }

    /// Skew-symmetric cross-product matrix of t times R, normalized. The
    /// generating form of an essential matrix.
    pub fn from_rt(r: &Matrix3<f64>, t: &nalgebra::Vector3<f64>) -> Self {
        let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
        let e = tx * r;
        EssentialModel { e: e / e.norm() }
    }

    /// Frobenius distance to another essential matrix, minimized over sign.
    pub fn distance(&self, other: &EssentialModel) -> f64 {
        let d1 = (self.e - other.e).norm();
        let d2 = (self.e + other.e).norm();
        d1.min(d2)
    }
}

/// Plane-induced or rotation-only projective map between two views,
/// normalized so the bottom-right entry is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyModel {
    pub h: Matrix3<f64>,
}

impl HomographyModel {
    pub fn new(h: Matrix3<f64>) -> Result<Self, GeomError> {
        if h[(2, 2)].abs() < 1e-12 {
            return Err(GeomError::DegenerateSample(
                "homography with vanishing scale",
            ));
        }
        Ok(HomographyModel { h: h / h[(2, 2)] })
    }
}

/// First-order approximation of the squared epipolar distance of a match
/// under `e`, on normalized coordinates. Returns +inf when both points sit
/// at both epipoles (denominator underflow), so such matches never count as
/// inliers.
#[inline]
pub fn sampson_error(e: &Matrix3<f64>, x: &Vector2<f64>, xp: &Vector2<f64>) -> f64 {
    let ex0 = e[(0, 0)] * x.x + e[(0, 1)] * x.y + e[(0, 2)];
    let ex1 = e[(1, 0)] * x.x + e[(1, 1)] * x.y + e[(1, 2)];
    let ex2 = e[(2, 0)] * x.x + e[(2, 1)] * x.y + e[(2, 2)];
    let etx0 = e[(0, 0)] * xp.x + e[(1, 0)] * xp.y + e[(2, 0)];
    let etx1 = e[(0, 1)] * xp.x + e[(1, 1)] * xp.y + e[(2, 1)];
    let num = xp.x * ex0 + xp.y * ex1 + ex2;
    let den = ex0 * ex0 + ex1 * ex1 + etx0 * etx0 + etx1 * etx1;
    if den < 1e-18 {
        return f64::INFINITY;
    }
    (num * num) / den
}
