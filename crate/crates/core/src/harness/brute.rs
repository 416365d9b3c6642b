//! Brute-force reference computations: vertex enumeration for small LPs and
//! hit-and-run sampling of polytopes. These deliberately avoid the simplex
//! code path so they can serve as independent oracles in tests.

use crate::lp::{LpError, LpProblem, RowKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All basic feasible points of `A z <= b`: solutions of square subsystems
/// that satisfy every row within `tol` on unit-scaled rows.
pub fn enumerate_basic_points(p: &LpProblem, tol: f64) -> Vec<DVector<f64>> {
    let n = p.num_vars();
    let m = p.num_rows();
    let scales: Vec<f64> = (0..m)
        .map(|j| {
            let a = p.a.row(j).amax();
            if a > 0.0 {
                1.0 / a
            } else {
                1.0
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut subset: Vec<usize> = (0..n).collect();
    if n == 0 || m < n {
        return out;
    }
    loop {
        let mat = DMatrix::from_fn(n, n, |i, j| p.a[(subset[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| p.b[subset[i]]);
        if let Some(z) = mat.lu().solve(&rhs) {
            let mut feasible = z.iter().all(|v| v.is_finite());
            if feasible {
                for j in 0..m {
                    let r = (p.a.row(j).dot(&z.transpose()) - p.b[j]) * scales[j];
                    let ok = match p.kinds[j] {
                        RowKind::Le => r <= tol,
                        RowKind::Eq => r.abs() <= tol,
                    };
                    if !ok {
                        feasible = false;
                        break;
                    }
                }
            }
            if feasible {
                out.push(z);
            }
        }
        // Next n-combination of row indices in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if subset[i] != i + m - n {
                subset[i] += 1;
                for k in i + 1..n {
                    subset[k] = subset[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Minimum of `c . z` over the basic feasible points, with the optimal
/// vertices. Returns `None` when no basic feasible point exists.
pub fn brute_lp_min(p: &LpProblem, tol: f64) -> Option<(f64, Vec<DVector<f64>>)> {
    let points = enumerate_basic_points(p, tol);
    let best = points
        .iter()
        .map(|z| p.c.dot(z))
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let opt: Vec<DVector<f64>> = points
        .into_iter()
        .filter(|z| p.c.dot(z) <= best + tol * (1.0 + best.abs()))
        .collect();
    Some((best, opt))
}

fn lex_less(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    for k in 0..a.len() {
        if (a[k] - b[k]).abs() > tol {
            return a[k] < b[k];
        }
    }
    false
}

/// Lexicographically smallest optimal vertex, by full enumeration.
pub fn brute_lex_min(p: &LpProblem, tol: f64) -> Option<DVector<f64>> {
    let (_, opt) = brute_lp_min(p, tol)?;
    let mut best: Option<DVector<f64>> = None;
    for z in opt {
        match &best {
            None => best = Some(z),
            Some(cur) => {
                if lex_less(&z, cur, tol) {
                    best = Some(z);
                }
            }
        }
    }
    best
}

/// Chebyshev center of `{ z : G z <= h }` and its inradius.
pub fn chebyshev_center(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    cfg: &crate::lp::LpConfig,
) -> Result<(DVector<f64>, f64), LpError> {
    let n = g.ncols();
    let m = g.nrows();
    let mut a = DMatrix::zeros(m, n + 1);
    for j in 0..m {
        for k in 0..n {
            a[(j, k)] = g[(j, k)];
        }
        a[(j, n)] = g.row(j).norm();
    }
    let mut c = DVector::zeros(n + 1);
    c[n] = -1.0;
    let p = LpProblem {
        c,
        a,
        kinds: vec![RowKind::Le; m],
        b: h.clone(),
    };
    let s = crate::lp::solve_expect_optimal(&p, cfg)?;
    let center = DVector::from_fn(n, |k, _| s.z[k]);
    Ok((center, s.z[n]))
}

/// Deterministic hit-and-run samples from `{ z : G z <= h }`, seeded. The
/// polytope must have a nonempty interior.
pub fn sample_polytope(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    count: usize,
    seed: u64,
    cfg: &crate::lp::LpConfig,
) -> Result<Vec<DVector<f64>>, LpError> {
    let n = g.ncols();
    let (center, radius) = chebyshev_center(g, h, cfg)?;
    if radius <= 0.0 {
        // Degenerate polytope: every "sample" is its center.
        return Ok(vec![center; count]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = center.clone();
    let mut out = Vec::with_capacity(count);
    let burn_in = 5;
    for i in 0..count * burn_in {
        let mut dir = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64));
        let norm = dir.norm();
        if norm < 1e-12 {
            continue;
        }
        dir /= norm;
        let gu = g * &dir;
        let gz = g * &z;
        let mut t_lo = f64::NEG_INFINITY;
        let mut t_hi = f64::INFINITY;
        for j in 0..g.nrows() {
            let slack = h[j] - gz[j];
            if gu[j] > 1e-12 {
                t_hi = t_hi.min(slack / gu[j]);
            } else if gu[j] < -1e-12 {
                t_lo = t_lo.max(slack / gu[j]);
            }
        }
        if !(t_lo.is_finite() && t_hi.is_finite() && t_hi > t_lo) {
            continue;
        }
        // Stay off the boundary so samples are usable as strict-interior
        // query points.
        let t = rng.gen_range(0.02..0.98f64);
        z = &z + dir * (t_lo + t * (t_hi - t_lo));
        if i % burn_in == burn_in - 1 {
            out.push(z.clone());
        }
    }
    while out.len() < count {
        out.push(center.clone());
    }
    Ok(out)
}
