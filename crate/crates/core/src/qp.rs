//! A small primal active-set solver for convex quadratic programs of the form
//!
//! ```text
//! minimize   1/2 u' Q u + q' u
//! subject to u >= 0,  sum of u over a designated index set = 1 (optional)
//! ```
//!
//! with `Q` positive semidefinite. This covers the two quadratic subproblems
//! the scheduler needs: the min-norm point of `conv(D) + cone(N)` and the
//! Euclidean projection onto the coupling polytope (through its dual).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("active-set iteration limit exceeded")]
    IterationLimit,
    #[error("numerical failure in QP: {0}")]
    Numerical(String),
}

pub struct ConvexQp {
    pub q_mat: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    /// Indices constrained to sum to one; empty for a pure nonnegative QP.
    pub simplex: Vec<usize>,
}

pub struct QpSolution {
    pub u: DVector<f64>,
}

pub fn solve_qp(qp: &ConvexQp) -> Result<QpSolution, QpError> {
    let dim = qp.q_lin.len();
    let scale = 1.0 + qp.q_mat.amax() + qp.q_lin.amax();
    let tol_step = 1e-13 * scale;
    let tol_mult = 1e-10 * scale;

    let mut u = DVector::zeros(dim);
    if !qp.simplex.is_empty() {
        // Cheapest simplex vertex as the starting point.
        let mut best = qp.simplex[0];
        let mut best_val = f64::INFINITY;
        for &j in &qp.simplex {
            let val = 0.5 * qp.q_mat[(j, j)] + qp.q_lin[j];
            if val < best_val {
                best_val = val;
                best = j;
            }
        }
        u[best] = 1.0;
    }
    let in_simplex = |i: usize| qp.simplex.contains(&i);
    // Indices clamped at zero.
    let mut working: Vec<bool> = (0..dim).map(|i| u[i] == 0.0).collect();

    let max_iters = 100 * dim + 1000;
    for _ in 0..max_iters {
        let free: Vec<usize> = (0..dim).filter(|&i| !working[i]).collect();
        let grad = &qp.q_mat * &u + &qp.q_lin;

        // Step restricted to the free set, holding the simplex sum fixed.
        let (p, is_ray) = eqp_step(qp, &u, &free, &in_simplex)?;

        if is_ray {
            // The reduced problem is unbounded along p; walk the ray to its
            // blocking bound.
            let mut tau = f64::INFINITY;
            let mut block = usize::MAX;
            for &i in &free {
                if p[i] < -tol_step {
                    let t = u[i] / (-p[i]);
                    if t < tau {
                        tau = t;
                        block = i;
                    }
                }
            }
            if block == usize::MAX {
                return Err(QpError::Numerical(
                    "descent ray without a blocking bound (empty polytope?)".into(),
                ));
            }
            for &i in &free {
                u[i] += tau * p[i];
                if u[i] < 0.0 {
                    u[i] = 0.0;
                }
            }
            u[block] = 0.0;
            working[block] = true;
            continue;
        }

        if p.amax() <= tol_step {
            let free_simplex: Vec<usize> =
                free.iter().copied().filter(|&i| in_simplex(i)).collect();
            let nu = if free_simplex.is_empty() {
                0.0
            } else {
                free_simplex.iter().map(|&i| grad[i]).sum::<f64>() / free_simplex.len() as f64
            };
            let mut release = usize::MAX;
            let mut worst = -tol_mult;
            for i in 0..dim {
                if working[i] {
                    let mult = grad[i] - if in_simplex(i) { nu } else { 0.0 };
                    if mult < worst {
                        worst = mult;
                        release = i;
                    }
                }
            }
            if release == usize::MAX {
                return Ok(QpSolution { u });
            }
            working[release] = false;
            continue;
        }

        // Longest feasible step along p, adding the blocking bound to the
        // working set.
        let mut tau = 1.0;
        let mut block = usize::MAX;
        for &i in &free {
            if p[i] < -tol_step {
                let t = u[i] / (-p[i]);
                if t < tau {
                    tau = t;
                    block = i;
                }
            }
        }
        for &i in &free {
            u[i] += tau * p[i];
            if u[i] < 0.0 {
                u[i] = 0.0;
            }
        }
        if block != usize::MAX {
            u[block] = 0.0;
            working[block] = true;
        }
    }
    Err(QpError::IterationLimit)
}

/// Equality-constrained step over the free variables via a nullspace basis
/// and a minimal-norm least-squares solve. Returns the step and whether it
/// is an unbounded descent ray (gradient component in the reduced Hessian's
/// null space), which the caller must cut at a blocking bound.
fn eqp_step(
    qp: &ConvexQp,
    u: &DVector<f64>,
    free: &[usize],
    in_simplex: &impl Fn(usize) -> bool,
) -> Result<(DVector<f64>, bool), QpError> {
    let dim = u.len();
    let p = DVector::zeros(dim);
    if free.is_empty() {
        return Ok((p, false));
    }
    let free_simplex: Vec<usize> = free.iter().copied().filter(|&i| in_simplex(i)).collect();

    // Columns of the nullspace basis Z, expressed in full coordinates.
    let mut cols: Vec<DVector<f64>> = Vec::new();
    if free_simplex.is_empty() {
        for &i in free {
            cols.push(DVector::from_fn(dim, |k, _| if k == i { 1.0 } else { 0.0 }));
        }
    } else {
        let pivot = free_simplex[0];
        for &i in free {
            if i == pivot {
                continue;
            }
            let mut col = DVector::zeros(dim);
            col[i] = 1.0;
            if in_simplex(i) {
                col[pivot] = -1.0;
            }
            cols.push(col);
        }
    }
    if cols.is_empty() {
        return Ok((p, false));
    }
    let z = DMatrix::from_columns(&cols);
    let grad = &qp.q_mat * u + &qp.q_lin;
    let h = z.transpose() * &qp.q_mat * &z;
    let g_red = z.transpose() * grad;
    let rhs = -g_red.clone();
    let w = solve_psd_min_norm(&h, &rhs)
        .map_err(|e| QpError::Numerical(format!("EQP subproblem: {e}")))?;
    // Residual = projection of the reduced gradient onto null(H). Nonzero
    // means the EQP is unbounded along that null direction.
    let resid = &h * &w + &g_red;
    let scale = 1.0 + g_red.amax() + h.amax();
    if resid.amax() > 1e-9 * scale {
        let ray = -(&z * &resid);
        let norm = ray.amax().max(1e-300);
        return Ok((ray / norm, true));
    }
    Ok((z * w, false))
}

fn solve_psd_min_norm(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, String> {
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max().max(1e-300);
    svd.solve(rhs, 1e-12 * smax)
        .map(|m| m.column(0).into())
        .map_err(|e| e.to_string())
}

/// Euclidean projection of `point` onto `{ z : G z <= h }`, through the dual
/// nonnegative QP `min 1/2 l' G G' l - l' (G p - h)` with `z = p - G' l`.
pub fn project_onto_polytope(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    point: &DVector<f64>,
) -> Result<DVector<f64>, QpError> {
    let qp = ConvexQp {
        q_mat: g * g.transpose(),
        q_lin: -(g * point - h),
        simplex: Vec::new(),
    };
    let sol = solve_qp(&qp)?;
    let z = point - g.transpose() * &sol.u;
    let viol = (g * &z - h).iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let scale = 1.0 + h.amax();
    if viol > 1e-7 * scale {
        return Err(QpError::Numerical(format!(
            "projection violates the polytope by {viol}"
        )));
    }
    Ok(z)
}
