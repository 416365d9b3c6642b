//! Ground-truth solvers the scheduling loops are checked against. Both are
//! single monolithic LPs, independent of the critical-region code path.

use crate::harness::HarnessError;
use crate::lp::{self, LpConfig, LpProblem, RowKind};
use crate::netmodel::{AreaModel, CouplingPolytope};
use crate::robust::UncertaintyBox;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct JointSolution {
    pub value: f64,
    pub y: DVector<f64>,
    pub x: Vec<DVector<f64>>,
}

/// Centralized deterministic problem: one LP over every area's dispatch and
/// the boundary angles.
pub fn oracle_joint(
    areas: &[AreaModel],
    coupling: &CouplingPolytope,
    xis: &[DVector<f64>],
    cfg: &LpConfig,
) -> Result<JointSolution, crate::Error> {
    assert_eq!(areas.len(), xis.len());
    let y_dim = coupling.dim;
    let x_offsets: Vec<usize> = areas
        .iter()
        .scan(0usize, |acc, a| {
            let off = *acc;
            *acc += a.x_dim();
            Some(off)
        })
        .collect();
    let n_x: usize = areas.iter().map(|a| a.x_dim()).sum();
    let n_vars = n_x + y_dim;
    let n_rows: usize = areas.iter().map(|a| a.num_rows()).sum::<usize>() + coupling.g.nrows();

    let mut a = DMatrix::zeros(n_rows, n_vars);
    let mut b = DVector::zeros(n_rows);
    let mut c = DVector::zeros(n_vars);
    let mut row = 0;
    let mut constant = 0.0;
    for (i, area) in areas.iter().enumerate() {
        let off = x_offsets[i];
        for r in 0..area.num_rows() {
            for k in 0..area.x_dim() {
                a[(row, off + k)] = area.a_x[(r, k)];
            }
            for k in 0..y_dim {
                a[(row, n_x + k)] = area.a_y[(r, k)];
            }
            b[row] = area.b[r] - area.a_xi.row(r).transpose().dot(&xis[i]);
            row += 1;
        }
        for k in 0..area.x_dim() {
            c[off + k] = area.c_x[k];
        }
        constant += area.c0 + area.c_xi.dot(&xis[i]);
    }
    for r in 0..coupling.g.nrows() {
        for k in 0..y_dim {
            a[(row, n_x + k)] = coupling.g[(r, k)];
        }
        b[row] = coupling.h[r];
        row += 1;
    }
    debug_assert_eq!(row, n_rows);
    let p = LpProblem {
        c,
        a,
        kinds: vec![RowKind::Le; n_rows],
        b,
    };
    let sol = lp::solve_expect_optimal(&p, cfg)?;
    let y = DVector::from_fn(y_dim, |k, _| sol.z[n_x + k]);
    let x = areas
        .iter()
        .enumerate()
        .map(|(i, area)| DVector::from_fn(area.x_dim(), |k, _| sol.z[x_offsets[i] + k]))
        .collect();
    Ok(JointSolution {
        value: sol.value + constant,
        y,
        x,
    })
}

/// Exact robust optimum by scenario replication: enumerate each area's box
/// vertices, replicate that area's constraint block once per vertex with its
/// own dispatch copy, and minimize the sum of per-area epigraph variables
/// over the shared boundary angles. Exact because a convex cost attains its
/// box maximum at a vertex.
pub fn oracle_robust_enum(
    areas: &[AreaModel],
    coupling: &CouplingPolytope,
    boxes: &[UncertaintyBox],
    cap: usize,
    cfg: &LpConfig,
) -> Result<(f64, DVector<f64>), crate::Error> {
    assert_eq!(areas.len(), boxes.len());
    let total_uncertain: usize = boxes.iter().map(|b| b.uncertain_coords().len()).sum();
    if total_uncertain > cap {
        return Err(HarnessError::EnumerationCap {
            coords: total_uncertain,
            cap,
        }
        .into());
    }

    // Vertex scenarios per area (zero-width coordinates pinned low).
    let mut scenarios: Vec<Vec<DVector<f64>>> = Vec::with_capacity(areas.len());
    for box_ in boxes {
        let coords = box_.uncertain_coords();
        let mut list = Vec::with_capacity(1 << coords.len());
        for mask in 0..(1u64 << coords.len()) {
            let mut w = vec![0u8; box_.dim()];
            for (bit, &j) in coords.iter().enumerate() {
                w[j] = ((mask >> bit) & 1) as u8;
            }
            list.push(box_.vertex(&w));
        }
        scenarios.push(list);
    }

    let y_dim = coupling.dim;
    let n_areas = areas.len();
    let n_copies: usize = scenarios.iter().map(|s| s.len()).sum();
    let _ = n_copies;
    let mut x_off = Vec::new();
    let mut next = n_areas; // epigraph variables first
    for (i, area) in areas.iter().enumerate() {
        let mut offs = Vec::new();
        for _ in 0..scenarios[i].len() {
            offs.push(next);
            next += area.x_dim();
        }
        x_off.push(offs);
    }
    let y_off = next;
    let n_vars = next + y_dim;
    let n_rows: usize = areas
        .iter()
        .enumerate()
        .map(|(i, a)| scenarios[i].len() * (a.num_rows() + 1))
        .sum::<usize>()
        + coupling.g.nrows();

    let mut a = DMatrix::zeros(n_rows, n_vars);
    let mut b = DVector::zeros(n_rows);
    let mut c = DVector::zeros(n_vars);
    for i in 0..n_areas {
        c[i] = 1.0;
    }
    let mut row = 0;
    for (i, area) in areas.iter().enumerate() {
        for (v, xi) in scenarios[i].iter().enumerate() {
            let off = x_off[i][v];
            for r in 0..area.num_rows() {
                for k in 0..area.x_dim() {
                    a[(row, off + k)] = area.a_x[(r, k)];
                }
                for k in 0..y_dim {
                    a[(row, y_off + k)] = area.a_y[(r, k)];
                }
                b[row] = area.b[r] - area.a_xi.row(r).transpose().dot(xi);
                row += 1;
            }
            // c_x . x - t_i <= -(c0 + c_xi . xi)
            for k in 0..area.x_dim() {
                a[(row, off + k)] = area.c_x[k];
            }
            a[(row, i)] = -1.0;
            b[row] = -(area.c0 + area.c_xi.dot(xi));
            row += 1;
        }
    }
    for r in 0..coupling.g.nrows() {
        for k in 0..y_dim {
            a[(row, y_off + k)] = coupling.g[(r, k)];
        }
        b[row] = coupling.h[r];
        row += 1;
    }
    debug_assert_eq!(row, n_rows);
    let p = LpProblem {
        c,
        a,
        kinds: vec![RowKind::Le; n_rows],
        b,
    };
    let sol = lp::solve_expect_optimal(&p, cfg)?;
    let y = DVector::from_fn(y_dim, |k, _| sol.z[y_off + k]);
    Ok((sol.value, y))
}
