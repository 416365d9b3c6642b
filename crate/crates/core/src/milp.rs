//! Branch-and-bound mixed-integer linear programming, sized for the
//! worst-case scenario programs: tens of binaries over a dense LP relaxation.
//!
//! Best-first search with deterministic tie-breaks (bound, then node id),
//! branching on the lowest fractional binary with the down-branch explored
//! first. No cuts and no presolve; node relaxations are solved from scratch
//! by the simplex core, which keeps the tree reproducible bit for bit.

use crate::lp::{self, LpConfig, LpProblem, LpStatus, RowKind};
use nalgebra::DVector;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("malformed MILP: {0}")]
    BadProblem(String),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error("no integral feasible point")]
    Infeasible,
    #[error("relaxation unbounded")]
    UnboundedRelaxation,
    #[error("node cap {cap} exceeded (incumbent {incumbent:?}, bound {bound})")]
    NodeCap {
        cap: usize,
        incumbent: Option<f64>,
        bound: f64,
    },
}

/// Minimization MILP: the relaxation plus a set of binary variable indices.
/// The relaxation must already bound every binary to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub lp: LpProblem,
    pub binaries: Vec<usize>,
}

impl MilpProblem {
    fn check(&self) -> Result<(), MilpError> {
        let n = self.lp.num_vars();
        for &j in &self.binaries {
            if j >= n {
                return Err(MilpError::BadProblem(format!("binary index {j} out of range")));
            }
            let mut upper = false;
            let mut lower = false;
            for r in 0..self.lp.num_rows() {
                let row = self.lp.a.row(r);
                let only_j = row
                    .iter()
                    .enumerate()
                    .all(|(k, &v)| k == j || v == 0.0);
                if !only_j || self.lp.kinds[r] != RowKind::Le {
                    continue;
                }
                if row[j] > 0.0 && self.lp.b[r] / row[j] <= 1.0 + 1e-9 {
                    upper = true;
                }
                if row[j] < 0.0 && self.lp.b[r] / row[j] >= -1e-9 {
                    lower = true;
                }
            }
            if !(upper && lower) {
                return Err(MilpError::BadProblem(format!(
                    "binary {j} is not boxed to [0,1] by the relaxation"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOutcome {
    Branched,
    PrunedInfeasible,
    PrunedBound,
    Incumbent,
}

#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: u64,
    pub depth: usize,
    pub bound: f64,
    pub outcome: NodeOutcome,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub z: DVector<f64>,
    pub value: f64,
    pub node_count: usize,
    /// `incumbent - best remaining bound` at exit; zero when the tree was
    /// exhausted.
    pub bound_gap: f64,
    pub ledger: Vec<NodeRecord>,
}

struct Node {
    id: u64,
    bound: f64,
    fixed: Vec<(usize, u8)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Node {}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert for best-first on the bound.
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.id.cmp(&self.id))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const INT_TOL: f64 = 1e-7;

fn with_fixed(p: &MilpProblem, fixed: &[(usize, u8)]) -> LpProblem {
    let mut q = p.lp.clone();
    let n = q.num_vars();
    for &(j, v) in fixed {
        let m = q.a.nrows();
        q.a = q.a.clone().insert_row(m, 0.0);
        for k in 0..n {
            q.a[(m, k)] = if k == j { 1.0 } else { 0.0 };
        }
        q.kinds.push(RowKind::Eq);
        q.b = q.b.clone().insert_row(m, v as f64);
    }
    q
}

/// Global minimum within `gap` (relative; default callers pass 0, leaving
/// only solver tolerance slack).
pub fn solve_milp(p: &MilpProblem, gap: f64, cfg: &LpConfig) -> Result<MilpSolution, MilpError> {
    solve_milp_capped(p, gap, cfg, 200_000)
}

pub fn solve_milp_capped(
    p: &MilpProblem,
    gap: f64,
    cfg: &LpConfig,
    node_cap: usize,
) -> Result<MilpSolution, MilpError> {
    p.check()?;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 0u64;
    heap.push(Node {
        id: next_id,
        bound: f64::NEG_INFINITY,
        fixed: Vec::new(),
    });
    next_id += 1;

    let mut incumbent: Option<(f64, DVector<f64>)> = None;
    let mut ledger: Vec<NodeRecord> = Vec::new();
    let mut processed = 0usize;

    while let Some(node) = heap.pop() {
        processed += 1;
        if processed > node_cap {
            let best_bound = node.bound;
            return Err(MilpError::NodeCap {
                cap: node_cap,
                incumbent: incumbent.map(|(v, _)| v),
                bound: best_bound,
            });
        }
        let prune_at = incumbent.as_ref().map(|(v, _)| {
            v - gap * (1.0 + v.abs()) - 1e-12 * (1.0 + v.abs())
        });
        if let Some(cut) = prune_at {
            if node.bound >= cut {
                ledger.push(NodeRecord {
                    id: node.id,
                    depth: node.fixed.len(),
                    bound: node.bound,
                    outcome: NodeOutcome::PrunedBound,
                });
                continue;
            }
        }
        let relax = lp::solve_with(&with_fixed(p, &node.fixed), cfg)?;
        match relax.status {
            LpStatus::Infeasible => {
                ledger.push(NodeRecord {
                    id: node.id,
                    depth: node.fixed.len(),
                    bound: f64::INFINITY,
                    outcome: NodeOutcome::PrunedInfeasible,
                });
                continue;
            }
            LpStatus::Unbounded => return Err(MilpError::UnboundedRelaxation),
            LpStatus::Optimal => {}
        }
        let bound = relax.value;
        if let Some(cut) = prune_at {
            if bound >= cut {
                ledger.push(NodeRecord {
                    id: node.id,
                    depth: node.fixed.len(),
                    bound,
                    outcome: NodeOutcome::PrunedBound,
                });
                continue;
            }
        }
        let frac = p
            .binaries
            .iter()
            .copied()
            .find(|&j| (relax.z[j] - relax.z[j].round()).abs() > INT_TOL);
        match frac {
            None => {
                // Integral: pin the rounded binaries and resolve for an exact
                // candidate.
                let mut fixed = node.fixed.clone();
                for &j in &p.binaries {
                    if !fixed.iter().any(|&(k, _)| k == j) {
                        fixed.push((j, relax.z[j].round() as u8));
                    }
                }
                let exact = lp::solve_with(&with_fixed(p, &fixed), cfg)?;
                let outcome = if exact.status == LpStatus::Optimal
                    && incumbent.as_ref().map_or(true, |(v, _)| exact.value < *v)
                {
                    let mut z = exact.z.clone();
                    for &j in &p.binaries {
                        z[j] = z[j].round();
                    }
                    incumbent = Some((exact.value, z));
                    NodeOutcome::Incumbent
                } else {
                    NodeOutcome::PrunedBound
                };
                ledger.push(NodeRecord {
                    id: node.id,
                    depth: node.fixed.len(),
                    bound,
                    outcome,
                });
            }
            Some(j) => {
                ledger.push(NodeRecord {
                    id: node.id,
                    depth: node.fixed.len(),
                    bound,
                    outcome: NodeOutcome::Branched,
                });
                for v in [0u8, 1u8] {
                    let mut fixed = node.fixed.clone();
                    fixed.push((j, v));
                    heap.push(Node {
                        id: next_id,
                        bound,
                        fixed,
                    });
                    next_id += 1;
                }
            }
        }
    }

    let (value, z) = incumbent.ok_or(MilpError::Infeasible)?;
    Ok(MilpSolution {
        z,
        value,
        node_count: processed,
        bound_gap: 0.0,
        ledger,
    })
}
