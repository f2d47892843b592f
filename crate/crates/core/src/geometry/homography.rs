//! Homography estimation and its symmetric transfer residual.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use super::{GeomError, HomographyModel};

/// Isotropic conditioning transform: centroid to the origin, mean distance
/// sqrt(2).
fn conditioning_transform(pts: &[Vector2<f64>]) -> Result<Matrix3<f64>, GeomError> {
    let n = pts.len() as f64;
    let centroid = pts.iter().sum::<Vector2<f64>>() / n;
    let mean_dist = pts.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if mean_dist < 1e-12 {
        return Err(GeomError::DegenerateSample("coincident points"));
    }
    let s = (2.0f64).sqrt() / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * centroid.x,
        0.0,
        s,
        -s * centroid.y,
        0.0,
        0.0,
        1.0,
    ))
}

fn collinear(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> bool {
    let ab = b - a;
    let ac = c - a;
    (ab.x * ac.y - ab.y * ac.x).abs() < 1e-12
}

/// Direct linear transform from four or more correspondences, with isotropic
/// conditioning of both point sets. The result maps the first point of each
/// pair onto the second and carries a unit bottom-right entry.
pub fn dlt_homography(
    corrs: &[(Vector2<f64>, Vector2<f64>)],
) -> Result<HomographyModel, GeomError> {
    let n = corrs.len();
    if n < 4 {
        return Err(GeomError::TooFewMatches { needed: 4, got: n });
    }
    if n == 4 {
        for skip in 0..4 {
            let kept: Vec<&Vector2<f64>> = corrs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, (a, _))| a)
                .collect();
            if collinear(kept[0], kept[1], kept[2]) {
                return Err(GeomError::DegenerateSample("three collinear sample points"));
            }
        }
    }

    let src: Vec<Vector2<f64>> = corrs.iter().map(|(a, _)| *a).collect();
    let dst: Vec<Vector2<f64>> = corrs.iter().map(|(_, b)| *b).collect();
    let t_src = conditioning_transform(&src)?;
    let t_dst = conditioning_transform(&dst)?;
    let apply = |t: &Matrix3<f64>, p: &Vector2<f64>| {
        let v = t * Vector3::new(p.x, p.y, 1.0);
        Vector2::new(v.x / v.z, v.y / v.z)
    };

    let mut design = DMatrix::<f64>::zeros(2 * n, 9);
    for (k, (a, b)) in corrs.iter().enumerate() {
        let p = apply(&t_src, a);
        let q = apply(&t_dst, b);
        let r0 = 2 * k;
        design[(r0, 0)] = -p.x;
        design[(r0, 1)] = -p.y;
        design[(r0, 2)] = -1.0;
        design[(r0, 6)] = q.x * p.x;
        design[(r0, 7)] = q.x * p.y;
        design[(r0, 8)] = q.x;
        let r1 = r0 + 1;
        design[(r1, 3)] = -p.x;
        design[(r1, 4)] = -p.y;
        design[(r1, 5)] = -1.0;
        design[(r1, 6)] = q.y * p.x;
        design[(r1, 7)] = q.y * p.y;
        design[(r1, 8)] = q.y;
    }

    let ata = design.transpose() * &design;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let lmax = eig.eigenvalues[order[8]].max(1e-300);
    if eig.eigenvalues[order[1]] < 1e-12 * lmax {
        return Err(GeomError::DegenerateSample(
            "homography system rank deficient",
        ));
    }
    let h_vec = eig.eigenvectors.column(order[0]);
    let h_cond = Matrix3::new(
        h_vec[0], h_vec[1], h_vec[2], h_vec[3], h_vec[4], h_vec[5], h_vec[6], h_vec[7], h_vec[8],
    );
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(GeomError::DegenerateSample("conditioning not invertible"))?;
    let h = t_dst_inv * h_cond * t_src;
    HomographyModel::new(h)
}

fn transfer(h: &Matrix3<f64>, p: &Vector2<f64>) -> Option<Vector2<f64>> {
    let v = h * Vector3::new(p.x, p.y, 1.0);
    if v.z.abs() < 1e-12 {
        return None;
    }
    Some(Vector2::new(v.x / v.z, v.y / v.z))
}

/// Symmetric squared transfer error of a match under `h`, averaged over
/// both directions. +inf when either transfer lands at infinity.
pub fn homography_residual(model: &HomographyModel, x: &Vector2<f64>, xp: &Vector2<f64>) -> f64 {
    match model.h.try_inverse() {
        Some(h_inv) => homography_residual_prepared(&model.h, &h_inv, x, xp),
        None => f64::INFINITY,
    }
}

/// Residual with a precomputed inverse, for scoring loops.
#[inline]
pub(super) fn homography_residual_prepared(
    h: &Matrix3<f64>,
    h_inv: &Matrix3<f64>,
    x: &Vector2<f64>,
    xp: &Vector2<f64>,
) -> f64 {
    let (Some(fwd), Some(bwd)) = (transfer(h, x), transfer(h_inv, xp)) else {
        return f64::INFINITY;
    };
    0.5 * ((fwd - xp).norm_squared() + (bwd - x).norm_squared())
}
