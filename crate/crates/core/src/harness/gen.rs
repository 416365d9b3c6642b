//! Seeded random multi-area cases for cross-checking the schedulers against
//! the oracles. Generation is deterministic in the seed, and every case is
//! screened so the per-area dispatch stays feasible across the coupling
//! polytope and the uncertainty box.

use crate::casefile::{
    AreaSpec, BranchSpec, BusRef, BusSpec, CaseSpec, GenSpec, LoadSpec, SolverOptions,
    TieLineSpec, WindSpec,
};
use crate::harness::brute;
use crate::lp::{self, LpConfig};
use crate::netmodel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GenParams {
    pub num_areas: usize,
    pub max_internal: usize,
    pub max_ties: usize,
    /// Uncertain coordinates spread over wind capacities and demand caps.
    pub uncertain_total: usize,
}

impl GenParams {
    pub fn deterministic(num_areas: usize, max_internal: usize, max_ties: usize) -> Self {
        GenParams {
            num_areas,
            max_internal,
            max_ties,
            uncertain_total: 0,
        }
    }

    pub fn robust(num_areas: usize, max_internal: usize, uncertain_total: usize) -> Self {
        GenParams {
            num_areas,
            max_internal,
            max_ties: num_areas,
            uncertain_total,
        }
    }
}

/// Build a feasible random case. Internal capacities and generation margins
/// are widened between attempts until the screening passes.
pub fn random_case(seed: u64, params: &GenParams) -> CaseSpec {
    for attempt in 0..6 {
        let margin = 1.5f64.powi(attempt);
        let case = build(seed, params, margin);
        if screen(&case, seed) {
            return case;
        }
    }
    // The margin growth makes internal limits non-binding well before this.
    panic!("case generation failed to reach feasibility for seed {seed}");
}

fn build(seed: u64, params: &GenParams, margin: f64) -> CaseSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_areas = params.num_areas;
    let mut areas = Vec::with_capacity(num_areas);
    let mut load_lo_totals = vec![0.0f64; num_areas];
    let mut load_hi_totals = vec![0.0f64; num_areas];
    let mut gen_buses: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut wind_buses: Vec<Vec<usize>> = Vec::new();

    for ai in 0..num_areas {
        let n = rng.gen_range(2..=params.max_internal.max(2));
        // One boundary bus per area: the angle box then has a uniform-shift
        // zero-flow mode, which keeps the dispatch feasible over all of Y.
        // Parallel tie-lines still give the coupling polytope several faces.
        let nb = 1;
        let mut buses = Vec::with_capacity(n);
        let mut genb = Vec::new();
        let mut windb = Vec::new();
        for bi in 0..n {
            let nominal = rng.gen_range(20.0..60.0f64);
            load_lo_totals[ai] += nominal;
            load_hi_totals[ai] += nominal;
            let has_gen = bi == 0 || rng.gen_bool(0.7);
            if has_gen {
                genb.push((bi, rng.gen_range(10.0..80.0f64)));
            }
            let wind = if rng.gen_bool(0.4) {
                windb.push(bi);
                rng.gen_range(5.0..20.0f64)
            } else {
                0.0
            };
            buses.push(BusSpec {
                id: (bi + 1) as u32,
                gen: GenSpec {
                    min: 0.0,
                    max: 0.0, // sized after tie capacities are known
                    price: 0.0,
                },
                wind: WindSpec {
                    cap: [wind, wind],
                    price: 0.0,
                },
                load: LoadSpec {
                    min: [0.0, 0.0],
                    max: [nominal, nominal],
                    price: 100.0,
                },
            });
        }
        gen_buses.push(genb);
        wind_buses.push(windb);

        let boundary: Vec<u32> = (0..nb).map(|k| 90 + k as u32).collect();
        let mut branches = Vec::new();
        // Chain over the internal buses, boundary buses hooked to random
        // internal ones, then a few extra edges.
        for bi in 1..n {
            branches.push(BranchSpec {
                from: bi as u32,
                to: (bi + 1) as u32,
                reactance: rng.gen_range(0.1..0.4),
                capacity: 0.0,
            });
        }
        for &bid in &boundary {
            let target = rng.gen_range(1..=n) as u32;
            branches.push(BranchSpec {
                from: target,
                to: bid,
                reactance: rng.gen_range(0.1..0.3),
                capacity: 0.0,
            });
        }
        for _ in 0..rng.gen_range(0..=n / 2) {
            let a = rng.gen_range(1..=n) as u32;
            let b = rng.gen_range(1..=n) as u32;
            if a != b {
                branches.push(BranchSpec {
                    from: a,
                    to: b,
                    reactance: rng.gen_range(0.15..0.45),
                    capacity: 0.0,
                });
            }
        }
        areas.push(AreaSpec {
            id: (ai + 1) as u32,
            buses,
            boundary,
            branches,
        });
    }

    // Tie-lines: a spanning path over the areas plus random extras.
    let n_ties = rng
        .gen_range(num_areas.saturating_sub(1).max(1)..=params.max_ties.max(num_areas - 1));
    let mut pairs: Vec<(usize, usize)> = (1..num_areas).map(|i| (i - 1, i)).collect();
    while pairs.len() < n_ties {
        let a = rng.gen_range(0..num_areas);
        let b = rng.gen_range(0..num_areas);
        if a != b {
            pairs.push((a.min(b), a.max(b)));
        } else if num_areas == 1 {
            break;
        }
    }
    let mut ties_at = vec![0usize; num_areas];
    for &(a, b) in &pairs {
        ties_at[a] += 1;
        ties_at[b] += 1;
    }
    let mut tielines = Vec::new();
    for &(a, b) in &pairs {
        let pick = |rng: &mut ChaCha8Rng, area: &AreaSpec| {
            area.boundary[rng.gen_range(0..area.boundary.len())]
        };
        let from_bus = pick(&mut rng, &areas[a]);
        let to_bus = pick(&mut rng, &areas[b]);
        // Keep any area's total import well under its sheddable load.
        let cap_a = 0.7 * load_lo_totals[a] / ties_at[a] as f64;
        let cap_b = 0.7 * load_lo_totals[b] / ties_at[b] as f64;
        let cap = cap_a.min(cap_b).clamp(15.0, 100.0);
        tielines.push(TieLineSpec {
            from: BusRef(areas[a].id, from_bus),
            to: BusRef(areas[b].id, to_bus),
            reactance: 0.25,
            capacity: (cap * 4.0).round() / 4.0,
        });
    }

    // Size generation and internal capacities now that tie imports are known.
    let mut tie_cap_at = vec![0.0f64; num_areas];
    for t in &tielines {
        let a = (t.from.0 - 1) as usize;
        let b = (t.to.0 - 1) as usize;
        tie_cap_at[a] += t.capacity;
        tie_cap_at[b] += t.capacity;
    }
    let mut tie_cap_at_bus: std::collections::BTreeMap<(u32, u32), f64> =
        std::collections::BTreeMap::new();
    for t in &tielines {
        *tie_cap_at_bus.entry((t.from.0, t.from.1)).or_insert(0.0) += t.capacity;
        *tie_cap_at_bus.entry((t.to.0, t.to.1)).or_insert(0.0) += t.capacity;
    }
    for ai in 0..num_areas {
        let need = 1.3 * load_hi_totals[ai] + tie_cap_at[ai] + 20.0;
        let weights: Vec<f64> = gen_buses[ai].iter().map(|_| rng.gen_range(0.5..1.5)).collect();
        let wsum: f64 = weights.iter().sum();
        for ((bi, price), w) in gen_buses[ai].iter().zip(&weights) {
            let bus = &mut areas[ai].buses[*bi];
            bus.gen.max = (need * margin * w / wsum).round();
            bus.gen.price = *price;
        }
        let branch_cap = (1.5 * (load_hi_totals[ai] + tie_cap_at[ai]) * margin).max(150.0);
        let area_id = areas[ai].id;
        let boundary = areas[ai].boundary.clone();
        for br in &mut areas[ai].branches {
            // A boundary bus's gateway branch is sized against its tie
            // capacity; otherwise the angle box admits boundary spreads
            // whose forced through-flows no dispatch can absorb.
            let gateway = [br.from, br.to]
                .into_iter()
                .find(|b| boundary.contains(b))
                .and_then(|b| tie_cap_at_bus.get(&(area_id, b)));
            br.capacity = match gateway {
                Some(t) => t + 20.0,
                None => branch_cap,
            };
        }
    }

    // Uncertainty: widen wind capacities and demand caps, distributed
    // round-robin over the areas so no single area concentrates the
    // enumeration burden of the robust oracle.
    let mut queues: Vec<std::collections::VecDeque<usize>> = Vec::new();
    for ai in 0..num_areas {
        let mut q: std::collections::VecDeque<usize> = wind_buses[ai].iter().copied().collect();
        for bi in 0..areas[ai].buses.len() {
            q.push_back(areas[ai].buses.len() + bi); // demand-cap marker
        }
        queues.push(q);
    }
    let mut remaining = params.uncertain_total;
    let mut ai = 0;
    let mut stuck = 0;
    let mut winds_marked = 0;
    while remaining > 0 && stuck < num_areas {
        match queues[ai].pop_front() {
            Some(marker) => {
                let n = areas[ai].buses.len();
                if marker < n {
                    areas[ai].buses[marker].wind.cap = [15.0, 25.0];
                    // Alternate spillage prices: priced spillage makes the
                    // dispatch cost non-monotone in the wind capacity, so
                    // the worst-case vertex is not always the seeded one.
                    areas[ai].buses[marker].wind.price =
                        if winds_marked % 2 == 1 { 12.0 } else { 0.0 };
                    winds_marked += 1;
                } else {
                    let nominal = areas[ai].buses[marker - n].load.max[0];
                    areas[ai].buses[marker - n].load.max = [0.98 * nominal, 1.02 * nominal];
                }
                remaining -= 1;
                stuck = 0;
            }
            None => stuck += 1,
        }
        ai = (ai + 1) % num_areas;
    }

    let slack = BusRef(areas[0].id, areas[0].boundary[0]);
    let case = CaseSpec {
        base_mva: 100.0,
        areas,
        tielines,
        slack,
        options: SolverOptions {
            seed,
            ..SolverOptions::default()
        },
    };
    case.validate().expect("generated case violates its own invariants");
    case
}

/// Feasibility screen: per-area dispatch must stay solvable over sampled
/// boundary angles at both uncertainty extremes. Coordinate-extreme points
/// of the polytope are screened too; corners are where capacity conflicts
/// surface.
fn screen(case: &CaseSpec, seed: u64) -> bool {
    let cfg = LpConfig::default();
    let Ok((areas, coupling)) = netmodel::assemble(case) else {
        return false;
    };
    let mut ys = match brute::sample_polytope(&coupling.g, &coupling.h, 12, seed ^ 0x5eed, &cfg) {
        Ok(v) => v,
        Err(_) => return false,
    };
    for k in 0..coupling.dim {
        for sign in [1.0, -1.0] {
            let mut c = nalgebra::DVector::zeros(coupling.dim);
            c[k] = sign;
            let p = lp::LpProblem {
                c,
                a: coupling.g.clone(),
                kinds: vec![lp::RowKind::Le; coupling.g.nrows()],
                b: coupling.h.clone(),
            };
            match lp::solve_expect_optimal(&p, &cfg) {
                Ok(s) => ys.push(s.z),
                Err(_) => return false,
            }
        }
    }
    for y in &ys {
        for area in &areas {
            for xi in [&area.xi_lo, &area.xi_hi] {
                if lp::solve_parametric_point(area, y, xi, &cfg).is_err() {
                    return false;
                }
            }
        }
    }
    true
}
