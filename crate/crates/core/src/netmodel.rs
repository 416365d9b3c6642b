//! Per-area constraint data and the boundary-angle coupling polytope.
//!
//! `assemble` turns a validated case into, for each area, the inequality
//! block `A_x x + A_xi xi + A_y y <= b` over the area's dispatch vector
//! `x = (g, w, d, theta)` and uncertain vector `xi = (wind cap, demand lo,
//! demand hi)`, plus the linear cost data `(c0, c_x, c_xi)`. Power-balance
//! equalities are emitted as paired inequality rows. The slack boundary-bus
//! angle is fixed to zero by dropping its column from `y`.

use crate::casefile::{BusRef, CaseSpec};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("internal bus {0} has no path to a boundary bus of its area")]
    Disconnected(BusRef),
    #[error("boundary bus {0} is unreachable from the slack bus")]
    UnreachableBoundary(BusRef),
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// One area's constraint and cost data. Quantities are per-unit; costs are
/// $/h for per-unit decision variables.
#[derive(Debug, Clone)]
pub struct AreaModel {
    pub id: u32,
    pub n_internal: usize,
    pub n_boundary: usize,
    pub n_branches: usize,
    /// Internal / boundary bus ids, in model order.
    pub internal_ids: Vec<u32>,
    pub boundary_ids: Vec<u32>,
    /// `y` column of each boundary bus; `None` for the slack bus.
    pub boundary_cols: Vec<Option<usize>>,
    pub a_x: DMatrix<f64>,
    pub a_xi: DMatrix<f64>,
    pub a_y: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c0: f64,
    pub c_x: DVector<f64>,
    pub c_xi: DVector<f64>,
    pub xi_lo: DVector<f64>,
    pub xi_hi: DVector<f64>,
}

impl AreaModel {
    pub fn x_dim(&self) -> usize {
        self.a_x.ncols()
    }

    pub fn xi_dim(&self) -> usize {
        self.a_xi.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Right-hand side of the dispatch feasible set at fixed parameters:
    /// `b - A_xi xi - A_y y`.
    pub fn rhs_at(&self, y: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a_xi * xi - &self.a_y * y
    }

    /// Midpoint of the uncertainty box, the nominal scenario.
    pub fn xi_mid(&self) -> DVector<f64> {
        (&self.xi_lo + &self.xi_hi) * 0.5
    }

    /// Count of coordinates with a nonzero uncertainty width.
    pub fn uncertain_coords(&self) -> usize {
        (0..self.xi_dim())
            .filter(|&j| self.xi_hi[j] > self.xi_lo[j])
            .count()
    }
}

/// Evaluate the dispatch cost `c0 + c_x . x + c_xi . xi` in $/h.
pub fn dispatch_cost(area: &AreaModel, x: &DVector<f64>, xi: &DVector<f64>) -> Result<f64, NetError> {
    if x.len() != area.x_dim() {
        return Err(NetError::Dimension {
            what: "x entries",
            expected: area.x_dim(),
            got: x.len(),
        });
    }
    if xi.len() != area.xi_dim() {
        return Err(NetError::Dimension {
            what: "xi entries",
            expected: area.xi_dim(),
            got: xi.len(),
        });
    }
    Ok(area.c0 + area.c_x.dot(x) + area.c_xi.dot(xi))
}

/// The feasible set of boundary angles: `{ y : G y <= h }`, bounded.
#[derive(Debug, Clone)]
pub struct CouplingPolytope {
    pub dim: usize,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl CouplingPolytope {
    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        let r = &self.g * y - &self.h;
        r.iter().all(|&v| v <= tol)
    }

    /// Rows active at `y` within `tol` on unit-scaled rows.
    pub fn active_rows(&self, y: &DVector<f64>, tol: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for j in 0..self.g.nrows() {
            let row = self.g.row(j);
            let scale = row.amax().max(1e-300);
            if (row.dot(&y.transpose()) - self.h[j]).abs() <= tol * scale.max(self.h[j].abs().max(1.0)) {
                out.push(j);
            }
        }
        out
    }
}

struct BusIndex {
    /// (area index, true if boundary, local position)
    nodes: Vec<(usize, bool, usize)>,
}

impl BusIndex {
    fn node(&self, area_idx: usize, boundary: bool, pos: usize) -> usize {
        self.nodes
            .iter()
            .position(|&t| t == (area_idx, boundary, pos))
            .expect("node indexed at construction")
    }
}

/// Build the per-area models and the coupling polytope.
pub fn assemble(case: &CaseSpec) -> Result<(Vec<AreaModel>, CouplingPolytope), NetError> {
    let base = case.base_mva;

    // y layout: boundary buses in area order, then bus order, slack dropped.
    let mut y_cols: Vec<Vec<Option<usize>>> = Vec::new();
    let mut next = 0usize;
    for area in &case.areas {
        let mut cols = Vec::new();
        for &bid in &area.boundary {
            if area.id == case.slack.0 && bid == case.slack.1 {
                cols.push(None);
            } else {
                cols.push(Some(next));
                next += 1;
            }
        }
        y_cols.push(cols);
    }
    let y_dim = next;

    // Whole-interconnection node list for connectivity and angle bounds.
    let mut index = BusIndex { nodes: Vec::new() };
    for (ai, area) in case.areas.iter().enumerate() {
        for (p, _) in area.buses.iter().enumerate() {
            index.nodes.push((ai, false, p));
        }
        for (p, _) in area.boundary.iter().enumerate() {
            index.nodes.push((ai, true, p));
        }
    }
    // Edges: (node, node, capacity_pu * reactance_pu) for angle bounds.
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let local = |area: &crate::casefile::AreaSpec, ai: usize, bus: u32| -> (usize, bool, usize) {
        if let Some(p) = area.buses.iter().position(|b| b.id == bus) {
            (ai, false, p)
        } else {
            let p = area.boundary.iter().position(|&b| b == bus).unwrap();
            (ai, true, p)
        }
    };
    for (ai, area) in case.areas.iter().enumerate() {
        for br in &area.branches {
            let (fa, fb, fp) = local(area, ai, br.from);
            let (ta, tb, tp) = local(area, ai, br.to);
            let u = index.node(fa, fb, fp);
            let v = index.node(ta, tb, tp);
            edges.push((u, v, (br.capacity / base) * br.reactance));
        }
    }
    for tie in &case.tielines {
        let fai = case.areas.iter().position(|a| a.id == tie.from.0).unwrap();
        let tai = case.areas.iter().position(|a| a.id == tie.to.0).unwrap();
        let fp = case.areas[fai]
            .boundary
            .iter()
            .position(|&b| b == tie.from.1)
            .unwrap();
        let tp = case.areas[tai]
            .boundary
            .iter()
            .position(|&b| b == tie.to.1)
            .unwrap();
        let u = index.node(fai, true, fp);
        let v = index.node(tai, true, tp);
        edges.push((u, v, (tie.capacity / base) * tie.reactance));
    }

    // Per-area connectivity: every internal bus must reach a boundary bus
    // through branches of its own area.
    for (ai, area) in case.areas.iter().enumerate() {
        let n = area.buses.len();
        let nb = area.boundary.len();
        let mut seen = vec![false; n + nb];
        let mut stack: Vec<usize> = (n..n + nb).collect();
        for &s in &stack {
            seen[s] = true;
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + nb];
        for br in &area.branches {
            let a = match local(area, ai, br.from) {
                (_, false, p) => p,
                (_, true, p) => n + p,
            };
            let b = match local(area, ai, br.to) {
                (_, false, p) => p,
                (_, true, p) => n + p,
            };
            adj[a].push(b);
            adj[b].push(a);
        }
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        for (p, bus) in area.buses.iter().enumerate() {
            if !seen[p] {
                return Err(NetError::Disconnected(BusRef(area.id, bus.id)));
            }
        }
    }

    // Angle bounds: shortest path from the slack bus with admittance-weighted
    // capacities as edge lengths. O(V^2) Dijkstra; systems here are small.
    let slack_ai = case
        .areas
        .iter()
        .position(|a| a.id == case.slack.0)
        .unwrap();
    let slack_p = case.areas[slack_ai]
        .boundary
        .iter()
        .position(|&b| b == case.slack.1)
        .unwrap();
    let src = index.node(slack_ai, true, slack_p);
    let nn = index.nodes.len();
    let mut dist = vec![f64::INFINITY; nn];
    dist[src] = 0.0;
    let mut done = vec![false; nn];
    for _ in 0..nn {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..nn {
            if !done[i] && dist[i] < best {
                best = dist[i];
                u = i;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for &(a, b, w) in &edges {
            if a == u && dist[u] + w < dist[b] {
                dist[b] = dist[u] + w;
            }
            if b == u && dist[u] + w < dist[a] {
                dist[a] = dist[u] + w;
            }
        }
    }

    // Coupling polytope: tie-line capacity rows plus the per-coordinate
    // angle box.
    let n_tie_rows = 2 * case.tielines.len();
    let mut g = DMatrix::zeros(n_tie_rows + 2 * y_dim, y_dim);
    let mut h = DVector::zeros(n_tie_rows + 2 * y_dim);
    for (t, tie) in case.tielines.iter().enumerate() {
        let fai = case.areas.iter().position(|a| a.id == tie.from.0).unwrap();
        let tai = case.areas.iter().position(|a| a.id == tie.to.0).unwrap();
        let fp = case.areas[fai]
            .boundary
            .iter()
            .position(|&b| b == tie.from.1)
            .unwrap();
        let tp = case.areas[tai]
            .boundary
            .iter()
            .position(|&b| b == tie.to.1)
            .unwrap();
        let susceptance = 1.0 / tie.reactance;
        let cap = tie.capacity / base;
        for (row, sign) in [(2 * t, 1.0), (2 * t + 1, -1.0)] {
            if let Some(c) = y_cols[fai][fp] {
                g[(row, c)] = sign * susceptance;
            }
            if let Some(c) = y_cols[tai][tp] {
                g[(row, c)] -= sign * susceptance;
            }
            h[row] = cap;
        }
    }
    for (ai, area) in case.areas.iter().enumerate() {
        for (p, &bid) in area.boundary.iter().enumerate() {
            if let Some(c) = y_cols[ai][p] {
                let node = index.node(ai, true, p);
                let bound = dist[node];
                if !bound.is_finite() {
                    return Err(NetError::UnreachableBoundary(BusRef(area.id, bid)));
                }
                g[(n_tie_rows + 2 * c, c)] = 1.0;
                h[n_tie_rows + 2 * c] = bound;
                g[(n_tie_rows + 2 * c + 1, c)] = -1.0;
                h[n_tie_rows + 2 * c + 1] = bound;
            }
        }
    }
    let coupling = CouplingPolytope { dim: y_dim, g, h };

    // Per-area blocks.
    let mut models = Vec::new();
    for (ai, area) in case.areas.iter().enumerate() {
        let n = area.buses.len();
        let nb = area.boundary.len();
        let m = 2 * (n + nb) + 6 * n + 2 * area.branches.len();
        let mut a_x = DMatrix::zeros(m, 4 * n);
        let mut a_xi = DMatrix::zeros(m, 3 * n);
        let mut a_y = DMatrix::zeros(m, y_dim);
        let mut b = DVector::zeros(m);

        // Balance expressions: one per bus of this area, as (coefficients
        // over theta/g/w/d, coefficients over y). Sign convention:
        // sum_br susceptance * (theta_self - theta_other) - g - w + d = 0.
        let theta_col = |bus: u32| -> Option<usize> {
            area.buses.iter().position(|bb| bb.id == bus).map(|p| 3 * n + p)
        };
        let y_col = |aidx: usize, bus: u32| -> Option<usize> {
            let p = case.areas[aidx].boundary.iter().position(|&bb| bb == bus)?;
            y_cols[aidx][p]
        };

        let mut row = 0usize;
        let balance_pair = |ax_row: &Vec<(usize, f64)>,
                                ay_row: &Vec<(usize, f64)>,
                                a_x: &mut DMatrix<f64>,
                                a_y: &mut DMatrix<f64>,
                                row: &mut usize| {
            for sign in [1.0, -1.0] {
                for &(c, v) in ax_row {
                    a_x[(*row, c)] += sign * v;
                }
                for &(c, v) in ay_row {
                    a_y[(*row, c)] += sign * v;
                }
                *row += 1;
            }
        };

        // Internal bus balance rows.
        for (p, bus) in area.buses.iter().enumerate() {
            let mut ax_row: Vec<(usize, f64)> = vec![(p, -1.0), (n + p, -1.0), (2 * n + p, 1.0)];
            let mut ay_row: Vec<(usize, f64)> = Vec::new();
            for br in &area.branches {
                let (u, v) = (br.from, br.to);
                let other = if u == bus.id {
                    v
                } else if v == bus.id {
                    u
                } else {
                    continue;
                };
                let susceptance = 1.0 / br.reactance;
                ax_row.push((3 * n + p, susceptance));
                if let Some(c) = theta_col(other) {
                    ax_row.push((c, -susceptance));
                } else if let Some(c) = y_col(ai, other) {
                    ay_row.push((c, -susceptance));
                }
                // Slack angle contributes nothing.
            }
            balance_pair(&ax_row, &ay_row, &mut a_x, &mut a_y, &mut row);
        }
        // Boundary bus balance rows (zero injection).
        for &bid in &area.boundary {
            let mut ax_row: Vec<(usize, f64)> = Vec::new();
            let mut ay_row: Vec<(usize, f64)> = Vec::new();
            let self_col = y_col(ai, bid);
            for br in &area.branches {
                let other = if br.from == bid {
                    br.to
                } else if br.to == bid {
                    br.from
                } else {
                    continue;
                };
                let susceptance = 1.0 / br.reactance;
                if let Some(c) = self_col {
                    ay_row.push((c, susceptance));
                }
                if let Some(c) = theta_col(other) {
                    ax_row.push((c, -susceptance));
                } else if let Some(c) = y_col(ai, other) {
                    ay_row.push((c, -susceptance));
                }
            }
            for tie in &case.tielines {
                let (other_area, other_bus) = if tie.from.0 == area.id && tie.from.1 == bid {
                    (tie.to.0, tie.to.1)
                } else if tie.to.0 == area.id && tie.to.1 == bid {
                    (tie.from.0, tie.from.1)
                } else {
                    continue;
                };
                let susceptance = 1.0 / tie.reactance;
                if let Some(c) = self_col {
                    ay_row.push((c, susceptance));
                }
                let oai = case.areas.iter().position(|a| a.id == other_area).unwrap();
                if let Some(c) = y_col(oai, other_bus) {
                    ay_row.push((c, -susceptance));
                }
            }
            balance_pair(&ax_row, &ay_row, &mut a_x, &mut a_y, &mut row);
        }
        // Injection boxes.
        for (p, bus) in area.buses.iter().enumerate() {
            // g <= G_hi ; -g <= -G_lo
            a_x[(row, p)] = 1.0;
            b[row] = bus.gen.max / base;
            row += 1;
            a_x[(row, p)] = -1.0;
            b[row] = -bus.gen.min / base;
            row += 1;
            // w <= OW (uncertain) ; -w <= 0
            a_x[(row, n + p)] = 1.0;
            a_xi[(row, p)] = -1.0;
            row += 1;
            a_x[(row, n + p)] = -1.0;
            row += 1;
            // d <= D_hi (uncertain) ; -d <= -D_lo (uncertain)
            a_x[(row, 2 * n + p)] = 1.0;
            a_xi[(row, 2 * n + p)] = -1.0;
            row += 1;
            a_x[(row, 2 * n + p)] = -1.0;
            a_xi[(row, n + p)] = 1.0;
            row += 1;
        }
        // Branch thermal limits.
        for br in &area.branches {
            let susceptance = 1.0 / br.reactance;
            let cap = br.capacity / base;
            for sign in [1.0, -1.0] {
                for (bus, s) in [(br.from, sign), (br.to, -sign)] {
                    if let Some(c) = theta_col(bus) {
                        a_x[(row, c)] += s * susceptance;
                    } else if let Some(c) = y_col(ai, bus) {
                        a_y[(row, c)] += s * susceptance;
                    }
                }
                b[row] = cap;
                row += 1;
            }
        }
        debug_assert_eq!(row, m);

        let mut c_x = DVector::zeros(4 * n);
        let mut c_xi = DVector::zeros(3 * n);
        let mut xi_lo = DVector::zeros(3 * n);
        let mut xi_hi = DVector::zeros(3 * n);
        for (p, bus) in area.buses.iter().enumerate() {
            c_x[p] = bus.gen.price * base;
            c_x[n + p] = -bus.wind.price * base;
            c_x[2 * n + p] = -bus.load.price * base;
            c_xi[p] = bus.wind.price * base;
            c_xi[2 * n + p] = bus.load.price * base;
            xi_lo[p] = bus.wind.cap[0] / base;
            xi_hi[p] = bus.wind.cap[1] / base;
            xi_lo[n + p] = bus.load.min[0] / base;
            xi_hi[n + p] = bus.load.min[1] / base;
            xi_lo[2 * n + p] = bus.load.max[0] / base;
            xi_hi[2 * n + p] = bus.load.max[1] / base;
        }

        models.push(AreaModel {
            id: area.id,
            n_internal: n,
            n_boundary: nb,
            n_branches: area.branches.len(),
            internal_ids: area.buses.iter().map(|b| b.id).collect(),
            boundary_ids: area.boundary.clone(),
            boundary_cols: y_cols[ai].clone(),
            a_x,
            a_xi,
            a_y,
            b,
            c0: 0.0,
            c_x,
            c_xi,
            xi_lo,
            xi_hi,
        });
    }

    Ok((models, coupling))
}
