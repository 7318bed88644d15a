//! Test-only oracles, independent of the library's solver and proximal
//! implementation paths.
//!
//! The group-LASSO oracle runs consensus ADMM with one duplicated variable
//! per group: it never exploits the nested structure or the composed
//! proximal operator, only single-group soft-thresholding of independent
//! duplicates, so it is a fair reference for both the proximal operator
//! (quadratic part = identity) and the full objective (quadratic part =
//! scaled Gram matrix).

use arlag::design::DesignSystem;
use arlag::hiergroup::HierGroupStructure;
use nalgebra::{Cholesky, DMatrix, DVector};

/// Coordinates of group `G_l` (1-based `l`) in layout order.
fn group_coords(structure: &HierGroupStructure, l: usize) -> Vec<usize> {
    let (m, lag) = (structure.num_series(), structure.lag_bound());
    let mut coords = Vec::new();
    for mi in 0..m {
        for j in (l - 1)..lag {
            coords.push(mi * lag + j);
        }
    }
    coords
}

/// Minimizes `1/2 x' Q x - b' x + t * sum_l w_l ||x_{G_l}||_2` by ADMM over
/// duplicated group variables. `Q` must be positive semidefinite.
pub fn oracle_group_lasso(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    structure: &HierGroupStructure,
    t: f64,
) -> Vec<f64> {
    let p = structure.num_coeffs();
    assert_eq!(q.nrows(), p);
    let lag = structure.lag_bound();
    let rho = 1.0;

    let groups: Vec<Vec<usize>> = (1..=lag).map(|l| group_coords(structure, l)).collect();

    // coordinate (m, lag j) belongs to groups 1..=j
    let mut counts = vec![0.0_f64; p];
    for g in &groups {
        for &c in g {
            counts[c] += 1.0;
        }
    }
    let mut lhs = q.clone();
    for i in 0..p {
        lhs[(i, i)] += rho * counts[i];
    }
    let chol = Cholesky::new(lhs).expect("ADMM system matrix is positive definite");

    let mut x = DVector::zeros(p);
    let mut z: Vec<Vec<f64>> = groups.iter().map(|g| vec![0.0; g.len()]).collect();
    let mut u: Vec<Vec<f64>> = groups.iter().map(|g| vec![0.0; g.len()]).collect();

    for _ in 0..200_000 {
        // x-update
        let mut rhs = b.clone();
        for (gi, g) in groups.iter().enumerate() {
            for (k, &c) in g.iter().enumerate() {
                rhs[c] += rho * (z[gi][k] - u[gi][k]);
            }
        }
        x = chol.solve(&rhs);

        // z-update: per-group soft threshold of independent duplicates
        let mut primal_sq = 0.0;
        let mut dual_sq_accum = vec![0.0_f64; p];
        for (gi, g) in groups.iter().enumerate() {
            let tau = t * structure.group_weight(gi + 1) / rho;
            let mut norm_sq = 0.0;
            for (k, &c) in g.iter().enumerate() {
                let v = x[c] + u[gi][k];
                norm_sq += v * v;
            }
            let r = norm_sq.sqrt();
            let scale = if r <= tau { 0.0 } else { 1.0 - tau / r };
            for (k, &c) in g.iter().enumerate() {
                let v = x[c] + u[gi][k];
                let z_new = scale * v;
                dual_sq_accum[c] += z_new - z[gi][k];
                z[gi][k] = z_new;
                u[gi][k] = v - z_new;
                let pr = x[c] - z_new;
                primal_sq += pr * pr;
            }
        }
        let dual = rho * dual_sq_accum.iter().map(|d| d * d).sum::<f64>().sqrt();
        if primal_sq.sqrt() <= 1e-11 && dual <= 1e-11 {
            break;
        }
    }
    x.iter().cloned().collect()
}

/// Proximal-operator oracle: `argmin 1/2 ||x - beta||^2 + t N(x)`.
pub fn oracle_prox(structure: &HierGroupStructure, beta: &[f64], t: f64) -> Vec<f64> {
    let p = structure.num_coeffs();
    let q = DMatrix::identity(p, p);
    let b = DVector::from_column_slice(beta);
    oracle_group_lasso(&q, &b, structure, t)
}

/// Full-objective oracle: `argmin (1/D)||y - X beta||^2 + lambda N(beta)`.
pub fn oracle_objective_minimizer(
    design: &DesignSystem,
    structure: &HierGroupStructure,
    lambda: f64,
) -> Vec<f64> {
    let p = design.num_coeffs();
    let lag = design.lag();
    let scale = 2.0 / design.d() as f64;
    // dense block-diagonal Gram matrix, scaled
    let mut q = DMatrix::zeros(p, p);
    for (m, block) in design.blocks().iter().enumerate() {
        for a in 0..lag {
            for bcol in 0..lag {
                let mut s = 0.0;
                for r in 0..block.rows() {
                    s += block.get(r, a) * block.get(r, bcol);
                }
                q[(m * lag + a, m * lag + bcol)] = scale * s;
            }
        }
    }
    let mut xty = vec![0.0; p];
    design.apply_transpose(design.y(), &mut xty);
    let b = DVector::from_iterator(p, xty.iter().map(|v| scale * v));
    oracle_group_lasso(&q, &b, structure, lambda)
}

/// Euclidean projection onto the unit ball of the group norm, computed by
/// bisection on the proximal parameter: the projection of a point outside
/// the ball is the prox at the multiplier that makes the constraint active.
pub fn project_group_norm_ball(structure: &HierGroupStructure, x: &[f64]) -> Vec<f64> {
    let n = structure.group_norm(x).expect("dimension ok");
    if n <= 1.0 {
        return x.to_vec();
    }
    let mut hi = 1.0_f64;
    while structure.group_norm(&structure.prox_hier(x, hi)).unwrap() > 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if structure.group_norm(&structure.prox_hier(x, mid)).unwrap() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    structure.prox_hier(x, hi)
}

/// Maximizes `<alpha, beta>` over the unit ball of the group norm by ascent
/// along `alpha` with projection, sweeping geometrically growing step sizes
/// (the projected value is nondecreasing in the step and converges to the
/// dual norm from below).
pub fn dual_norm_projected_ascent(structure: &HierGroupStructure, alpha: &[f64]) -> f64 {
    let scale = alpha.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut best = 0.0_f64;
    let mut c = 1e-3 / scale;
    for _ in 0..50 {
        let point: Vec<f64> = alpha.iter().map(|a| c * a).collect();
        let proj = project_group_norm_ball(structure, &point);
        let val: f64 = alpha.iter().zip(&proj).map(|(a, b)| a * b).sum();
        best = best.max(val);
        c *= 2.0;
    }
    best
}
