//! Minimal and least-squares essential matrix solvers.
//!
//! The five-point solver follows the elimination route: the 4-dimensional
//! nullspace of the epipolar design matrix parameterizes E = xE1 + yE2 +
//! zE3 + E4, the rank and trace constraints give ten cubic polynomials in
//! (x, y, z), Gauss-Jordan reduction plus three z-scaled row differences
//! leave a 3x3 polynomial matrix whose determinant is a degree-10
//! polynomial in z, solved through the eigenvalues of its companion matrix.

use nalgebra::{Complex, DMatrix, Matrix3, Vector2};

use super::{EssentialModel, GeomError};

/// Degree <= 1 polynomial in (x, y, z).
#[derive(Clone, Copy, Default)]
struct Lin {
    x: f64,
    y: f64,
    z: f64,
    c: f64,
}

/// Degree <= 2, over [x2, xy, y2, xz, yz, z2, x, y, z, 1].
type Quad = [f64; 10];

/// Degree <= 3, over the elimination monomial order below.
type Cub = [f64; 20];

/// Monomial order used by the elimination: the first ten are the leading
/// monomials removed by Gauss-Jordan, the last ten group as x*(z2,z,1),
/// y*(z2,z,1), (z3,z2,z,1).
/// [x3, y3, x2y, xy2, x2z, x2, y2z, y2, xyz, xy,
///  xz2, xz, x, yz2, yz, y, z3, z2, z, 1]
fn elim_idx(dx: u32, dy: u32, dz: u32) -> usize {
    match (dx, dy, dz) {
        (3, 0, 0) => 0,
        (0, 3, 0) => 1,
        (2, 1, 0) => 2,
        (1, 2, 0) => 3,
        (2, 0, 1) => 4,
        (2, 0, 0) => 5,
        (0, 2, 1) => 6,
        (0, 2, 0) => 7,
        (1, 1, 1) => 8,
        (1, 1, 0) => 9,
        (1, 0, 2) => 10,
        (1, 0, 1) => 11,
        (1, 0, 0) => 12,
        (0, 1, 2) => 13,
        (0, 1, 1) => 14,
        (0, 1, 0) => 15,
        (0, 0, 3) => 16,
        (0, 0, 2) => 17,
        (0, 0, 1) => 18,
        (0, 0, 0) => 19,
        _ => unreachable!("monomial degree above 3"),
    }
}

const QUAD_EXPS: [(u32, u32, u32); 10] = [
    (2, 0, 0),
    (1, 1, 0),
    (0, 2, 0),
    (1, 0, 1),
    (0, 1, 1),
    (0, 0, 2),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (0, 0, 0),
];

const LIN_EXPS: [(u32, u32, u32); 4] = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0)];

fn mul_lin(a: &Lin, b: &Lin) -> Quad {
    [
        a.x * b.x,
        a.x * b.y + a.y * b.x,
        a.y * b.y,
        a.x * b.z + a.z * b.x,
        a.y * b.z + a.z * b.y,
        a.z * b.z,
        a.x * b.c + a.c * b.x,
        a.y * b.c + a.c * b.y,
        a.z * b.c + a.c * b.z,
        a.c * b.c,
    ]
}

fn mul_quad_lin(q: &Quad, l: &Lin) -> Cub {
    let lc = [l.x, l.y, l.z, l.c];
    let mut out = [0.0; 20];
    for (qi, &qc) in q.iter().enumerate() {
        if qc == 0.0 {
            continue;
        }
        let (qx, qy, qz) = QUAD_EXPS[qi];
        for (li, &c) in lc.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let (lx, ly, lz) = LIN_EXPS[li];
            out[elim_idx(qx + lx, qy + ly, qz + lz)] += qc * c;
        }
    }
    out
}

fn quad_sub(a: &Quad, b: &Quad) -> Quad {
    std::array::from_fn(|i| a[i] - b[i])
}

fn quad_add(a: &Quad, b: &Quad) -> Quad {
    std::array::from_fn(|i| a[i] + b[i])
}

fn cub_add(a: &Cub, b: &Cub) -> Cub {
    std::array::from_fn(|i| a[i] + b[i])
}

fn cub_sub(a: &Cub, b: &Cub) -> Cub {
    std::array::from_fn(|i| a[i] - b[i])
}

// -------------------------------------------------------------------------
// univariate polynomials, ascending coefficients

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn poly_eval(p: &[f64], z: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

fn poly_deriv(p: &[f64]) -> Vec<f64> {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * i as f64)
        .collect()
}

/// Roots via the companion matrix of the monic polynomial.
fn poly_roots(p: &[f64]) -> Vec<Complex<f64>> {
    let scale = p.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = p.len() - 1;
    while deg > 0 && p[deg].abs() < 1e-13 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = p[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 0..deg {
        comp[(i, deg - 1)] = -p[i] / lead;
        if i + 1 < deg {
            comp[(i + 1, i)] = 1.0;
        }
    }
    comp.complex_eigenvalues().iter().copied().collect()
}

// -------------------------------------------------------------------------

fn essential_design_rows(corrs: &[(Vector2<f64>, Vector2<f64>)]) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::zeros(corrs.len(), 9);
    for (i, (x, xp)) in corrs.iter().enumerate() {
        d[(i, 0)] = xp.x * x.x;
        d[(i, 1)] = xp.x * x.y;
        d[(i, 2)] = xp.x;
        d[(i, 3)] = xp.y * x.x;
        d[(i, 4)] = xp.y * x.y;
        d[(i, 5)] = xp.y;
        d[(i, 6)] = x.x;
        d[(i, 7)] = x.y;
        d[(i, 8)] = 1.0;
    }
    d
}

/// Eigen-decomposition of D^T D with eigenvalues sorted ascending.
fn normal_matrix_eigen(d: &DMatrix<f64>) -> (Vec<f64>, Vec<[f64; 9]>) {
    let ata = d.transpose() * d;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let col = eig.eigenvectors.column(i);
            std::array::from_fn(|k| col[k])
        })
        .collect();
    (values, vectors)
}

fn mat_from_vec9(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8])
}

/// All essential matrices consistent with exactly five normalized
/// correspondences. Up to ten solutions; each returned matrix is projected
/// onto the essential manifold, unit Frobenius norm, and satisfies the
/// epipolar constraint on the five inputs to 1e-8.
pub fn five_point_essential(
    corrs: &[(Vector2<f64>, Vector2<f64>)],
) -> Result<Vec<EssentialModel>, GeomError> {
    if corrs.len() != 5 {
        return Err(GeomError::TooFewMatches {
            needed: 5,
            got: corrs.len(),
        });
    }
    let d = essential_design_rows(corrs);
    let (vals, vecs) = normal_matrix_eigen(&d);
    // rank must be exactly 5 so the nullspace is the 4 smallest eigenvectors
    if vals[4] < 1e-16 * vals[8].max(1e-300) {
        return Err(GeomError::DegenerateSample(
            "rank-deficient five-point design",
        ));
    }
    let basis: [Matrix3<f64>; 4] = [
        mat_from_vec9(&vecs[0]),
        mat_from_vec9(&vecs[1]),
        mat_from_vec9(&vecs[2]),
        mat_from_vec9(&vecs[3]),
    ];

    // E(x,y,z) = x*B0 + y*B1 + z*B2 + B3, entries linear in (x,y,z)
    let e_lin: [[Lin; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| Lin {
            x: basis[0][(r, c)],
            y: basis[1][(r, c)],
            z: basis[2][(r, c)],
            c: basis[3][(r, c)],
        })
    });

    let mut constraints: Vec<Cub> = Vec::with_capacity(10);
    constraints.push(det_poly(&e_lin));
    trace_constraint_polys(&e_lin, &mut constraints);

    let mut rows: [[f64; 20]; 10] = [[0.0; 20]; 10];
    for (r, c) in constraints.iter().enumerate() {
        rows[r] = *c;
    }
    gauss_jordan(&mut rows)?;

    // leading monomials after reduction: row4 = x2z, row5 = x2, row6 = y2z,
    // row7 = y2, row8 = xyz, row9 = xy; pair each z-variant with its plain
    // partner to eliminate the quadratic leads
    let eqs = [
        build_equation(&rows[4], &rows[5]),
        build_equation(&rows[6], &rows[7]),
        build_equation(&rows[8], &rows[9]),
    ];

    let det_z = det3_poly(&eqs);
    let roots = poly_roots(&det_z);
    let deriv = poly_deriv(&det_z);

    let mut out = Vec::new();
    for root in roots {
        if root.im.abs() > 1e-8 * (1.0 + root.re.abs()) {
            continue;
        }
        let mut z = root.re;
        for _ in 0..3 {
            let dv = poly_eval(&deriv, z);
            if dv.abs() < 1e-300 {
                break;
            }
            z -= poly_eval(&det_z, z) / dv;
        }
        let Some((x, y)) = solve_xy(&eqs, z) else {
            continue;
        };
        let e_raw = basis[0] * x + basis[1] * y + basis[2] * z + basis[3];
        let model = EssentialModel::project_from(e_raw);
        let fits = corrs.iter().all(|(a, b)| {
            let v = nalgebra::Vector3::new(b.x, b.y, 1.0)
                .dot(&(model.e * nalgebra::Vector3::new(a.x, a.y, 1.0)));
            v.abs() <= 1e-8
        });
        if fits {
            out.push(model);
        }
    }
    Ok(out)
}

fn det_poly(e: &[[Lin; 3]; 3]) -> Cub {
    let minor = |a: &Lin, b: &Lin, c: &Lin, d: &Lin| quad_sub(&mul_lin(a, d), &mul_lin(b, c));
    let m0 = minor(&e[1][1], &e[1][2], &e[2][1], &e[2][2]);
    let m1 = minor(&e[1][0], &e[1][2], &e[2][0], &e[2][2]);
    let m2 = minor(&e[1][0], &e[1][1], &e[2][0], &e[2][1]);
    cub_add(
        &cub_sub(&mul_quad_lin(&m0, &e[0][0]), &mul_quad_lin(&m1, &e[0][1])),
        &mul_quad_lin(&m2, &e[0][2]),
    )
}

/// The nine entries of 2*E*E^T*E - tr(E*E^T)*E.
#[allow(clippy::needless_range_loop)]
fn trace_constraint_polys(e: &[[Lin; 3]; 3], out: &mut Vec<Cub>) {
    // G = E * E^T, symmetric quadratic entries
    let mut g = [[Quad::default(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = Quad::default();
            for k in 0..3 {
                acc = quad_add(&acc, &mul_lin(&e[i][k], &e[j][k]));
            }
            g[i][j] = acc;
        }
    }
    let trace = quad_add(&quad_add(&g[0][0], &g[1][1]), &g[2][2]);
    for i in 0..3 {
        for j in 0..3 {
            // M1 = 2G - tr*I
            let mut m1 = g[i][j].map(|v| 2.0 * v);
            if i == j {
                m1 = quad_sub(&m1, &trace);
            }
            g[i][j] = m1;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = [0.0; 20];
            for k in 0..3 {
                acc = cub_add(&acc, &mul_quad_lin(&g[i][k], &e[k][j]));
            }
            out.push(acc);
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn gauss_jordan(rows: &mut [[f64; 20]; 10]) -> Result<(), GeomError> {
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(GeomError::DegenerateSample("zero constraint system"));
    }
    for col in 0..10 {
        let pivot = (col..10)
            .max_by(|&a, &b| rows[a][col].abs().partial_cmp(&rows[b][col].abs()).unwrap())
            .unwrap();
        if rows[pivot][col].abs() < 1e-12 * scale {
            return Err(GeomError::DegenerateSample("elimination pivot underflow"));
        }
        rows.swap(col, pivot);
        let p = rows[col][col];
        for v in rows[col].iter_mut() {
            *v /= p;
        }
        for r in 0..10 {
            if r == col {
                continue;
            }
            let f = rows[r][col];
            if f == 0.0 {
                continue;
            }
            for c in col..20 {
                rows[r][c] -= f * rows[col][c];
            }
        }
    }
    Ok(())
}

/// One row of the 3x3 polynomial system: x*P(z) + y*Q(z) + R(z) = 0.
struct PolyEq {
    p: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
}

/// Combines the reduced row with leading monomial m*z and the row with
/// leading monomial m through the identity (m*z) - z*(m) = 0.
fn build_equation(row_mz: &[f64; 20], row_m: &[f64; 20]) -> PolyEq {
    // tail layout: [xz2, xz, x, yz2, yz, y, z3, z2, z, 1] at columns 10..20
    let xp = |t: &[f64; 20]| vec![t[12], t[11], t[10]];
    let yp = |t: &[f64; 20]| vec![t[15], t[14], t[13]];
    let cp = |t: &[f64; 20]| vec![t[19], t[18], t[17], t[16]];
    let shift = |mut v: Vec<f64>| {
        v.insert(0, 0.0);
        v
    };
    PolyEq {
        p: poly_sub(&shift(xp(row_m)), &xp(row_mz)),
        q: poly_sub(&shift(yp(row_m)), &yp(row_mz)),
        r: poly_sub(&shift(cp(row_m)), &cp(row_mz)),
    }
}

fn det3_poly(eqs: &[PolyEq; 3]) -> Vec<f64> {
    let [a, b, c] = eqs;
    let t0 = poly_sub(&poly_mul(&b.q, &c.r), &poly_mul(&b.r, &c.q));
    let t1 = poly_sub(&poly_mul(&b.p, &c.r), &poly_mul(&b.r, &c.p));
    let t2 = poly_sub(&poly_mul(&b.p, &c.q), &poly_mul(&b.q, &c.p));
    poly_add(
        &poly_sub(&poly_mul(&a.p, &t0), &poly_mul(&a.q, &t1)),
        &poly_mul(&a.r, &t2),
    )
}

fn solve_xy(eqs: &[PolyEq; 3], z: f64) -> Option<(f64, f64)> {
    let b = DMatrix::<f64>::from_row_slice(
        3,
        3,
        &[
            poly_eval(&eqs[0].p, z),
            poly_eval(&eqs[0].q, z),
            poly_eval(&eqs[0].r, z),
            poly_eval(&eqs[1].p, z),
            poly_eval(&eqs[1].q, z),
            poly_eval(&eqs[1].r, z),
            poly_eval(&eqs[2].p, z),
            poly_eval(&eqs[2].q, z),
            poly_eval(&eqs[2].r, z),
        ],
    );
    let svd = b.svd(false, true);
    let v_t = svd.v_t?;
    let null = v_t.row(2);
    let w = null[2];
    let norm = (null[0] * null[0] + null[1] * null[1] + w * w).sqrt();
    if w.abs() < 1e-10 * norm {
        return None;
    }
    Some((null[0] / w, null[1] / w))
}

/// Least-squares essential estimate from eight or more inlier matches,
/// projected onto the essential manifold.
pub fn eight_point_refit(
    corrs: &[(Vector2<f64>, Vector2<f64>)],
) -> Result<EssentialModel, GeomError> {
    if corrs.len() < 8 {
        return Err(GeomError::TooFewMatches {
            needed: 8,
            got: corrs.len(),
        });
    }
    let d = essential_design_rows(corrs);
    let (vals, vecs) = normal_matrix_eigen(&d);
    // a second vanishing eigenvalue means the solution is not unique
    if vals[1] < 1e-12 * vals[8].max(1e-300) {
        return Err(GeomError::DegenerateSample("rank-deficient refit system"));
    }
    Ok(EssentialModel::project_from(mat_from_vec9(&vecs[0])))
}
