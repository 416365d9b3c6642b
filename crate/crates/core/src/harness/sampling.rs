//! Scenario sampling against a frozen robust schedule: for each sampled
//! scenario, the deterministic optimum (full foresight) and the re-dispatch
//! cost with tie-line flows pinned at the robust `y*`.

use crate::harness::oracles::oracle_joint;
use crate::lp::{self, LpConfig};
use crate::netmodel::{AreaModel, CouplingPolytope};
use crate::robust::UncertaintyBox;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub n: usize,
    pub seed: u64,
    pub j_rob: f64,
    /// Per sample `(deterministic optimum, fixed-schedule re-dispatch)`.
    pub rows: Vec<(f64, f64)>,
    pub max_p2: f64,
}

/// Draw `n` scenarios uniformly from the boxes and price them both ways.
/// Requires the robust schedule `y_star` (and its cost) from a prior robust
/// solve.
pub fn sample_and_compare(
    areas: &[AreaModel],
    coupling: &CouplingPolytope,
    boxes: &[UncertaintyBox],
    y_star: &DVector<f64>,
    j_rob: f64,
    n: usize,
    seed: u64,
    cfg: &LpConfig,
) -> Result<SampleOutcome, crate::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenarios: Vec<Vec<DVector<f64>>> = Vec::with_capacity(n);
    for _ in 0..n {
        let draw: Vec<DVector<f64>> = boxes
            .iter()
            .map(|b| {
                DVector::from_fn(b.dim(), |j, _| {
                    if b.hi[j] > b.lo[j] {
                        rng.gen_range(b.lo[j]..=b.hi[j])
                    } else {
                        b.lo[j]
                    }
                })
            })
            .collect();
        scenarios.push(draw);
    }

    let results = crate::exec::map_collect(&scenarios, |xis| -> Result<(f64, f64), crate::Error> {
        let p1 = oracle_joint(areas, coupling, xis, cfg)?.value;
        let mut p2 = 0.0;
        for (area, xi) in areas.iter().zip(xis) {
            p2 += lp::solve_parametric_point(area, y_star, xi, cfg)?.j_star;
        }
        Ok((p1, p2))
    });
    let mut rows = Vec::with_capacity(n);
    for r in results {
        rows.push(r?);
    }
    let max_p2 = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(SampleOutcome {
        n,
        seed,
        j_rob,
        rows,
        max_p2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::shipped;
    use crate::netmodel;
    use crate::robust;

    #[test]
    fn zero_width_boxes_make_both_problems_agree() {
        let case = shipped::tiny2();
        let (areas, coupling) = netmodel::assemble(&case).unwrap();
        let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
        let cfg = LpConfig::default();
        let out = robust::solve_robust(&areas, &coupling, &boxes, &case.options).unwrap();
        let s = sample_and_compare(
            &areas, &coupling, &boxes, &out.y_star, out.j_rob, 8, 1, &cfg,
        )
        .unwrap();
        let first = s.rows[0];
        for &(p1, p2) in &s.rows {
            assert_eq!(p1.to_bits(), first.0.to_bits());
            assert!((p1 - p2).abs() <= 1e-6 * (1.0 + p1.abs()));
        }
    }

    #[test]
    fn foresight_never_hurts_and_the_robust_cost_caps_redispatch() {
        let case = shipped::small2();
        let (areas, coupling) = netmodel::assemble(&case).unwrap();
        let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
        let cfg = LpConfig::default();
        let out = robust::solve_robust(&areas, &coupling, &boxes, &case.options).unwrap();
        let s = sample_and_compare(
            &areas, &coupling, &boxes, &out.y_star, out.j_rob, 25, 42, &cfg,
        )
        .unwrap();
        for &(p1, p2) in &s.rows {
            assert!(p1 <= p2 + 1e-6 * (1.0 + p2.abs()), "{p1} vs {p2}");
            assert!(
                p2 <= out.j_rob + 1e-6 * (1.0 + out.j_rob.abs()),
                "{p2} vs robust {}",
                out.j_rob
            );
        }
        assert!(s.max_p2 <= out.j_rob + 1e-6 * (1.0 + out.j_rob.abs()));
    }

    #[test]
    fn sampling_is_reproducible_bit_for_bit() {
        let case = shipped::small2();
        let (areas, coupling) = netmodel::assemble(&case).unwrap();
        let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
        let cfg = LpConfig::default();
        let y = DVector::zeros(coupling.dim);
        let a = sample_and_compare(&areas, &coupling, &boxes, &y, 0.0, 10, 7, &cfg).unwrap();
        let b = sample_and_compare(&areas, &coupling, &boxes, &y, 0.0, 10, 7, &cfg).unwrap();
        for (x, y) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(x.0.to_bits(), y.0.to_bits());
            assert_eq!(x.1.to_bits(), y.1.to_bits());
        }
    }
}
