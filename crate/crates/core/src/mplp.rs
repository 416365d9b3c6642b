//! Critical regions of the per-area parametric dispatch problem.
//!
//! At a query point `y`, the area LP's optimal active set stays optimal over
//! a polytope of boundary angles. With the active rows `S` (square and
//! invertible over the dispatch variables) and inactive rows `I`, the region
//! and its affine value description follow in closed form:
//!
//! ```text
//! x*(z) = r - K z,   K = Ax_S^-1 Ay_S,   r = Ax_S^-1 (b_S - Axi_S xi)
//! D = Ay_I - Ax_I K,   d = b_I - Axi_I xi - Ax_I r
//! alpha = -K' c_x,     beta = c0 + c_xi . xi + c_x . r
//! ```
//!
//! so that `J(z) = alpha . z + beta` wherever `D z <= d` inside the coupling
//! polytope.

use crate::lp::{self, LpConfig, LpError, LpProblem, LpStatus, RowKind};
use crate::netmodel::{AreaModel, CouplingPolytope};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("active set does not reduce to an invertible square block (rank {rank} of {need})")]
    DegenerateActiveSet { rank: usize, need: usize },
    #[error("region row {row} is violated at its own query point by {violation}")]
    QueryPointOutside { row: usize, violation: f64 },
    #[error("region is empty")]
    EmptyRegion,
    #[error("regions to combine have an empty intersection")]
    EmptyIntersection,
    #[error("no vertices supplied for the max query")]
    NoVertices,
}

/// A polytope `{ z : D z <= d }` of boundary angles over which the area (or
/// aggregate) cost is the affine function `alpha . z + beta`.
#[derive(Debug, Clone)]
pub struct CriticalRegion {
    pub d_mat: DMatrix<f64>,
    pub d_vec: DVector<f64>,
    pub alpha: DVector<f64>,
    pub beta: f64,
    /// Identity of the active set (and scenario selection) that produced the
    /// region. Equal fingerprints imply equal `(alpha, beta)`.
    pub fingerprint: Vec<u64>,
    /// Set when the optimal vertex had more distinct tight hyperplanes than
    /// dispatch dimensions, so the square block was one of several choices.
    pub degenerate: bool,
}

impl CriticalRegion {
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        if self.d_mat.nrows() == 0 {
            return true;
        }
        let r = &self.d_mat * z - &self.d_vec;
        r.iter().all(|&v| v <= tol)
    }

    pub fn value_at(&self, z: &DVector<f64>) -> f64 {
        self.alpha.dot(z) + self.beta
    }

    /// Digest of the wire payload `(D, d, alpha, beta)`; what a coordinator
    /// can use to recognize a region without seeing area internals.
    pub fn payload_digest(&self) -> u64 {
        let dims = [
            self.d_mat.nrows() as f64,
            self.d_mat.ncols() as f64,
            self.beta,
        ];
        crate::fnv1a_f64s(
            dims.into_iter()
                .chain(self.d_mat.transpose().iter().copied().collect::<Vec<_>>())
                .chain(self.d_vec.iter().copied().collect::<Vec<_>>())
                .chain(self.alpha.iter().copied().collect::<Vec<_>>()),
        )
    }
}

struct RawRegion {
    d_rows: Vec<(DVector<f64>, f64)>,
    alpha: DVector<f64>,
    beta: f64,
    fingerprint: Vec<u64>,
    degenerate: bool,
}

/// Closed-form region data from the lexicographically selected optimal basis,
/// before intersection with the coupling polytope and redundancy removal.
fn raw_area_region(
    area: &AreaModel,
    y: &DVector<f64>,
    xi: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<RawRegion, RegionError> {
    let point = lp::solve_parametric_point_lex(area, y, xi, cfg)?;
    let sol = &point.lp;
    let n = area.a_x.ncols();
    let m = area.num_rows();

    // Candidate rows: basis-tight first, then the rest of the active set.
    let mut candidates: Vec<usize> = sol
        .basis_active_rows
        .iter()
        .copied()
        .filter(|j| sol.active_set.contains(j))
        .collect();
    for &j in &sol.active_set {
        if !candidates.contains(&j) {
            candidates.push(j);
        }
    }

    // Greedy maximal independent subset of the active rows over the dispatch
    // columns.
    let selected = lp::greedy_independent_rows(&area.a_x, &candidates, n);
    if selected.len() < n {
        return Err(RegionError::DegenerateActiveSet {
            rank: selected.len(),
            need: n,
        });
    }

    // Distinct tight hyperplanes beyond the dispatch dimension flag a
    // degenerate vertex (the paired encoding of an equality counts once).
    let mut planes = std::collections::BTreeSet::new();
    for &j in &sol.active_set {
        let mut row: Vec<f64> = area
            .a_x
            .row(j)
            .iter()
            .chain(area.a_xi.row(j).iter())
            .chain(area.a_y.row(j).iter())
            .copied()
            .collect();
        row.push(area.b[j]);
        let amax = row.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if amax < 1e-12 {
            continue;
        }
        let lead = row.iter().find(|v| v.abs() > 1e-9 * amax).copied().unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        let key: Vec<u64> = row
            .iter()
            .map(|&v| ((sign * v / amax * 1e12).round() as i64) as u64)
            .collect();
        planes.insert(key);
    }
    let degenerate = planes.len() > n;

    let ax_s = DMatrix::from_fn(n, n, |i, j| area.a_x[(selected[i], j)]);
    let lu = ax_s.lu();
    let ay_s = DMatrix::from_fn(n, area.a_y.ncols(), |i, j| area.a_y[(selected[i], j)]);
    let rhs_s = DVector::from_fn(n, |i, _| {
        area.b[selected[i]] - area.a_xi.row(selected[i]).transpose().dot(xi)
    });
    let k_mat = lu
        .solve(&ay_s)
        .ok_or(RegionError::DegenerateActiveSet { rank: n - 1, need: n })?;
    let r_vec = lu
        .solve(&rhs_s)
        .ok_or(RegionError::DegenerateActiveSet { rank: n - 1, need: n })?;

    let alpha = -(k_mat.transpose() * &area.c_x);
    let beta = area.c0 + area.c_xi.dot(xi) + area.c_x.dot(&r_vec);

    let mut d_rows = Vec::with_capacity(m - n);
    for j in 0..m {
        if selected.contains(&j) {
            continue;
        }
        let ax_j: DVector<f64> = area.a_x.row(j).transpose();
        let dj: DVector<f64> = area.a_y.row(j).transpose() - k_mat.transpose() * &ax_j;
        let rhs_j = area.b[j] - area.a_xi.row(j).transpose().dot(xi) - ax_j.dot(&r_vec);
        d_rows.push((dj, rhs_j));
    }

    let mut fingerprint: Vec<u64> = selected.iter().map(|&j| j as u64).collect();
    fingerprint.sort_unstable();
    Ok(RawRegion {
        d_rows,
        alpha,
        beta,
        fingerprint,
        degenerate,
    })
}

/// Normalize rows, drop trivial ones, and collapse duplicates.
fn cleanup_rows(rows: Vec<(DVector<f64>, f64)>) -> Result<Vec<(DVector<f64>, f64)>, RegionError> {
    let mut map: std::collections::BTreeMap<Vec<u64>, (DVector<f64>, f64)> =
        std::collections::BTreeMap::new();
    for (row, rhs) in rows {
        let amax = row.amax();
        if amax <= 1e-11 {
            if rhs < -1e-9 {
                return Err(RegionError::EmptyRegion);
            }
            continue;
        }
        let row = row / amax;
        let rhs = rhs / amax;
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        match map.get_mut(&key) {
            Some(existing) => {
                if rhs < existing.1 {
                    existing.1 = rhs;
                }
            }
            None => {
                map.insert(key, (row, rhs));
            }
        }
    }
    Ok(map.into_values().collect())
}

/// Drop every row implied by the others: maximize the row over the rest and
/// keep it only if the maximum exceeds its own bound.
fn remove_redundant_rows(
    rows: Vec<(DVector<f64>, f64)>,
    cfg: &LpConfig,
) -> Result<Vec<(DVector<f64>, f64)>, RegionError> {
    let mut kept = rows;
    let mut j = 0;
    while j < kept.len() {
        if kept.len() <= 1 {
            break;
        }
        let dim = kept[j].0.len();
        let mut a = DMatrix::zeros(kept.len() - 1, dim);
        let mut b = DVector::zeros(kept.len() - 1);
        let mut r = 0;
        for (i, (row, rhs)) in kept.iter().enumerate() {
            if i == j {
                continue;
            }
            for k in 0..dim {
                a[(r, k)] = row[k];
            }
            b[r] = *rhs;
            r += 1;
        }
        let p = LpProblem {
            c: -kept[j].0.clone(),
            a,
            kinds: vec![RowKind::Le; kept.len() - 1],
            b,
        };
        let sol = lp::solve_with(&p, cfg)?;
        let redundant = match sol.status {
            LpStatus::Optimal => -sol.value <= kept[j].1 + cfg.tol_feas * (1.0 + kept[j].1.abs()),
            LpStatus::Unbounded => false,
            LpStatus::Infeasible => return Err(RegionError::EmptyRegion),
        };
        if redundant {
            kept.remove(j);
        } else {
            j += 1;
        }
    }
    Ok(kept)
}

fn coupling_rows(coupling: &CouplingPolytope) -> Vec<(DVector<f64>, f64)> {
    (0..coupling.g.nrows())
        .map(|j| (coupling.g.row(j).transpose(), coupling.h[j]))
        .collect()
}

fn finish_region(
    mut rows: Vec<(DVector<f64>, f64)>,
    alpha: DVector<f64>,
    beta: f64,
    fingerprint: Vec<u64>,
    degenerate: bool,
    y: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<CriticalRegion, RegionError> {
    rows = cleanup_rows(rows)?;
    rows = remove_redundant_rows(rows, cfg)?;
    let dim = y.len();
    let mut d_mat = DMatrix::zeros(rows.len(), dim);
    let mut d_vec = DVector::zeros(rows.len());
    for (i, (row, rhs)) in rows.iter().enumerate() {
        for k in 0..dim {
            d_mat[(i, k)] = row[k];
        }
        d_vec[i] = *rhs;
    }
    let region = CriticalRegion {
        d_mat,
        d_vec,
        alpha,
        beta,
        fingerprint,
        degenerate,
    };
    for j in 0..region.d_mat.nrows() {
        let v = region.d_mat.row(j).dot(&y.transpose()) - region.d_vec[j];
        if v > cfg.tol_feas * 100.0 * (1.0 + region.d_vec[j].abs()) {
            return Err(RegionError::QueryPointOutside { row: j, violation: v });
        }
    }
    Ok(region)
}

/// Critical region of one area at `(y, xi)`, intersected with the coupling
/// polytope, with redundant rows removed.
pub fn area_region(
    area: &AreaModel,
    coupling: &CouplingPolytope,
    y: &DVector<f64>,
    xi: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<CriticalRegion, RegionError> {
    let raw = raw_area_region(area, y, xi, cfg)?;
    let mut rows = raw.d_rows;
    rows.extend(coupling_rows(coupling));
    finish_region(rows, raw.alpha, raw.beta, raw.fingerprint, raw.degenerate, y, cfg)
}

/// Intersection of regions sharing a query point, with summed affine parts.
pub fn combine(
    regions: &[CriticalRegion],
    y: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<CriticalRegion, RegionError> {
    let first = regions.first().ok_or(RegionError::NoVertices)?;
    let mut alpha = first.alpha.clone();
    let mut beta = first.beta;
    let mut rows = Vec::new();
    let mut fingerprint = Vec::new();
    let mut degenerate = first.degenerate;
    for (i, r) in regions.iter().enumerate() {
        if i > 0 {
            alpha += &r.alpha;
            beta += r.beta;
            degenerate |= r.degenerate;
        }
        for j in 0..r.d_mat.nrows() {
            rows.push((r.d_mat.row(j).transpose(), r.d_vec[j]));
        }
        fingerprint.push(crate::fnv1a(
            &r.fingerprint
                .iter()
                .flat_map(|v| v.to_le_bytes())
                .collect::<Vec<u8>>(),
        ));
    }
    let rows = cleanup_rows(rows)?;
    // Combining valid responses can only fail if the inputs were inconsistent.
    let feas = LpProblem {
        c: DVector::zeros(y.len()),
        a: DMatrix::from_fn(rows.len(), y.len(), |i, j| rows[i].0[j]),
        kinds: vec![RowKind::Le; rows.len()],
        b: DVector::from_fn(rows.len(), |i, _| rows[i].1),
    };
    if lp::solve_with(&feas, cfg)?.status == LpStatus::Infeasible {
        return Err(RegionError::EmptyIntersection);
    }
    finish_region(rows, alpha, beta, fingerprint, degenerate, y, cfg)
}

/// Affine segment at `y` of `F(z) = max over vertices of J(z, xi_v)`: the
/// intersection of the per-vertex critical regions with the dominance
/// half-spaces of the vertex attaining the maximum at `y`. Ties pick the
/// lowest vertex index. Returns the segment and the argmax index.
pub fn max_over_vertices_region(
    area: &AreaModel,
    coupling: &CouplingPolytope,
    y: &DVector<f64>,
    vertices: &[DVector<f64>],
    cfg: &LpConfig,
) -> Result<(CriticalRegion, usize), RegionError> {
    if vertices.is_empty() {
        return Err(RegionError::NoVertices);
    }
    let raws = crate::exec::map_collect(vertices, |xi| raw_area_region(area, y, xi, cfg));
    let mut parts = Vec::with_capacity(raws.len());
    for r in raws {
        parts.push(r?);
    }
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (k, part) in parts.iter().enumerate() {
        let val = part.alpha.dot(y) + part.beta;
        if val > best_val {
            best_val = val;
            best = k;
        }
    }
    let mut rows = Vec::new();
    let mut fingerprint = Vec::new();
    let mut degenerate = false;
    for (k, part) in parts.iter().enumerate() {
        rows.extend(part.d_rows.iter().cloned());
        degenerate |= part.degenerate;
        let mut bytes: Vec<u8> = (k as u64).to_le_bytes().to_vec();
        for v in &part.fingerprint {
            bytes.extend(v.to_le_bytes());
        }
        fingerprint.push(crate::fnv1a(&bytes));
        if k != best {
            // alpha_k . z + beta_k <= alpha_best . z + beta_best
            rows.push((
                &part.alpha - &parts[best].alpha,
                parts[best].beta - part.beta,
            ));
        }
    }
    fingerprint.push(best as u64);
    rows.extend(coupling_rows(coupling));
    let alpha = parts[best].alpha.clone();
    let beta = parts[best].beta;
    let region = finish_region(rows, alpha, beta, fingerprint, degenerate, y, cfg)?;
    Ok((region, best))
}
