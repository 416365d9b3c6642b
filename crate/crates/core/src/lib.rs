//! Optimal tie-line scheduling for multi-area DC power systems.
//!
//! A coordinator schedules the power flows on tie-lines joining independently
//! operated areas. Each area's system operator (SO) keeps its cost structure,
//! network constraints, and uncertainty ranges private; the coordinator only
//! ever sees critical regions of the boundary-angle space together with the
//! affine description of the dispatch cost over each region.
//!
//! The crate is organized around that split:
//!
//! * [`casefile`] — the on-disk case and run-report formats,
//! * [`netmodel`] — per-area constraint matrices and the coupling polytope,
//! * [`lp`] — a dense simplex solver with duals and lexicographic selection,
//! * [`mplp`] — critical regions of the parametric per-area dispatch problem,
//! * [`direction`] — the min-norm descent direction over collected subgradients,
//! * [`coordinator`] — the deterministic critical-region exploration loop,
//! * [`milp`] — a small branch-and-bound solver,
//! * [`robust`] — the worst-case scenario MILP and the alternating min-max loop,
//! * [`harness`] — brute-force oracles, shipped cases, and scenario sampling.
//!
//! With the default `parallel` feature, batch work (scenario sweeps, vertex
//! enumeration, concurrent SO queries) runs on rayon; without it everything
//! falls back to sequential execution with identical results.

pub mod casefile;
pub mod coordinator;
pub mod direction;
mod exec;
pub mod harness;
pub mod lp;
pub mod milp;
pub mod mplp;
pub mod netmodel;
mod qp;
pub mod robust;

use thiserror::Error;

/// Any failure surfaced by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] casefile::CaseError),
    #[error(transparent)]
    Net(#[from] netmodel::NetError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Qp(#[from] qp::QpError),
    #[error(transparent)]
    Region(#[from] mplp::RegionError),
    #[error(transparent)]
    Coordinator(#[from] coordinator::CoordError),
    #[error(transparent)]
    Milp(#[from] milp::MilpError),
    #[error(transparent)]
    Robust(#[from] robust::RobustError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}

pub type Result<T> = std::result::Result<T, Error>;

/// 64-bit FNV-1a over raw bytes. Stable across platforms and releases, which
/// keeps region digests in reports reproducible.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

pub(crate) fn fnv1a_f64s(values: impl IntoIterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for &b in v.to_bits().to_le_bytes().iter() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}
