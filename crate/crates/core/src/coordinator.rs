//! The coordinator's critical-region exploration loop and the SO-facing
//! message protocol.
//!
//! The coordinator never sees an area's constraint matrices, cost vectors, or
//! uncertainty data. Each round it sends a boundary-angle query and receives
//! a critical region `(D, d)` with the affine cost pair `(alpha, beta)`; it
//! minimizes the aggregate affine cost over the combined region, maintains a
//! partial subdifferential at the incumbent, and probes along the min-norm
//! descent direction until that direction vanishes.

use crate::casefile::SolverOptions;
use crate::direction::{min_norm_direction, NormalCone, SubgradientSet};
use crate::lp::{self, LpConfig};
use crate::mplp::{self, CriticalRegion};
use crate::netmodel::{AreaModel, CouplingPolytope};
use crate::qp;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoordError {
    #[error("SO {area} returned a region that does not contain the query point")]
    ResponseRejected { area: u32 },
    #[error("iteration cap {cap} exceeded; step length or tolerances are inconsistent")]
    IterationCap { cap: u32 },
    #[error("probe step guard exhausted after {halvings} halvings")]
    GuardExhausted { halvings: u32 },
    #[error("descent invariant violated: alpha . v = {worst:.3e} <= 0 for a collected subgradient")]
    DescentViolated { worst: f64 },
    #[error("coupling polytope has no interior point to start from")]
    NoStartingPoint,
}

/// Wire messages between the coordinator and the SOs. The payloads carry
/// only boundary angles, region rows, affine cost pairs, and worst-case cost
/// scalars.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Message {
    #[serde(rename = "cr_query")]
    CrQuery { area: u32, y: Vec<f64> },
    #[serde(rename = "cr_response")]
    CrResponse {
        area: u32,
        d: Vec<Vec<f64>>,
        d_rhs: Vec<f64>,
        alpha: Vec<f64>,
        beta: f64,
    },
    #[serde(rename = "worst_case_query")]
    WorstCaseQuery { area: u32, y: Vec<f64> },
    #[serde(rename = "worst_case_reply")]
    WorstCaseReply { area: u32, j_opt: f64 },
}

/// Recorded protocol messages, one JSON document per line.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serialization cannot fail"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Transcript, serde_json::Error> {
        let mut messages = Vec::new();
        for line in text.lines() {
            if !line.trim().is_empty() {
                messages.push(serde_json::from_str(line)?);
            }
        }
        Ok(Transcript { messages })
    }
}

/// What an SO optimizes against when answering queries: a fixed scenario, or
/// a privately held set of uncertainty-box vertices.
#[derive(Debug, Clone)]
pub enum Scenario {
    Fixed(DVector<f64>),
    Vertices(Vec<DVector<f64>>),
}

/// One area's system operator. Owns all area-private data.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    pub area: AreaModel,
    pub scenario: Scenario,
}

/// An SO's answer: the critical region containing the query point, carrying
/// its affine cost description.
#[derive(Debug, Clone)]
pub struct CrResponse {
    pub area: u32,
    pub region: CriticalRegion,
}

impl SystemOperator {
    pub fn fixed(area: AreaModel, xi: DVector<f64>) -> Self {
        SystemOperator {
            area,
            scenario: Scenario::Fixed(xi),
        }
    }

    pub fn with_vertices(area: AreaModel, initial: Vec<DVector<f64>>) -> Self {
        SystemOperator {
            area,
            scenario: Scenario::Vertices(initial),
        }
    }

    /// Optimal dispatch at fixed boundary angles; for a vertex set this is
    /// the dispatch under the currently worst collected scenario.
    pub fn optimal_dispatch(
        &self,
        y: &DVector<f64>,
        cfg: &LpConfig,
    ) -> Result<(DVector<f64>, f64), crate::Error> {
        match &self.scenario {
            Scenario::Fixed(xi) => {
                let p = lp::solve_parametric_point(&self.area, y, xi, cfg)?;
                Ok((p.lp.z, p.j_star))
            }
            Scenario::Vertices(vs) => {
                let mut best: Option<(DVector<f64>, f64)> = None;
                for xi in vs {
                    let p = lp::solve_parametric_point(&self.area, y, xi, cfg)?;
                    if best.as_ref().map_or(true, |(_, j)| p.j_star > *j) {
                        best = Some((p.lp.z, p.j_star));
                    }
                }
                Ok(best.expect("vertex set is nonempty"))
            }
        }
    }
}

/// Answer a critical-region query: the region of the fixed scenario, or the
/// affine segment of the max over the SO's vertex set.
pub fn so_answer_cr(
    so: &SystemOperator,
    coupling: &CouplingPolytope,
    y: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<CrResponse, crate::Error> {
    let region = match &so.scenario {
        Scenario::Fixed(xi) => mplp::area_region(&so.area, coupling, y, xi, cfg)?,
        Scenario::Vertices(vs) => {
            mplp::max_over_vertices_region(&so.area, coupling, y, vs, cfg)?.0
        }
    };
    Ok(CrResponse {
        area: so.area.id,
        region,
    })
}

/// Coordinator-side validation: a response must contain the query point.
pub fn validate_response(
    resp: &CrResponse,
    y: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<(), CoordError> {
    if resp.region.contains(y, cfg.tol_feas * 1e3) {
        Ok(())
    } else {
        Err(CoordError::ResponseRejected { area: resp.area })
    }
}

/// One inner iteration of the exploration loop, as recorded in the ledger.
#[derive(Debug, Clone)]
pub struct DetIteration {
    pub iter: u32,
    pub y_probe: Vec<f64>,
    /// Digest of the combined region's wire payload.
    pub region_digest: u64,
    pub new_region: bool,
    pub j_opt: f64,
    pub improved: bool,
    pub j_star: f64,
    pub v_norm: f64,
    pub normalized_v: f64,
    /// Worst `alpha . v` over the collected subgradients (positive while
    /// descending).
    pub min_alpha_v: f64,
    pub eps: f64,
    pub halvings: u32,
    pub time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct DetOutcome {
    pub y_star: DVector<f64>,
    pub j_star: f64,
    /// Per-area optimal dispatch recovered by one parametric solve at `y*`.
    pub x_star: Vec<DVector<f64>>,
    pub per_area_cost: Vec<f64>,
    pub ledger: Vec<DetIteration>,
    pub transcript: Transcript,
    pub regions_explored: usize,
    pub eps_halvings: u32,
    pub degenerate_regions: u32,
}

fn query_all(
    sos: &[SystemOperator],
    coupling: &CouplingPolytope,
    y: &DVector<f64>,
    cfg: &LpConfig,
    transcript: &mut Transcript,
) -> Result<Vec<CrResponse>, crate::Error> {
    let results = crate::exec::map_collect(sos, |so| so_answer_cr(so, coupling, y, cfg));
    let mut responses = Vec::with_capacity(results.len());
    for r in results {
        responses.push(r?);
    }
    for resp in &responses {
        transcript.messages.push(Message::CrQuery {
            area: resp.area,
            y: y.as_slice().to_vec(),
        });
        let region = &resp.region;
        transcript.messages.push(Message::CrResponse {
            area: resp.area,
            d: (0..region.d_mat.nrows())
                .map(|i| region.d_mat.row(i).iter().copied().collect())
                .collect(),
            d_rhs: region.d_vec.iter().copied().collect(),
            alpha: region.alpha.iter().copied().collect(),
            beta: region.beta,
        });
        validate_response(resp, y, cfg)?;
    }
    Ok(responses)
}

/// Run the deterministic scheduling loop over the given SO endpoints.
/// `warm_start` seeds the first probe; the all-zeros angle vector otherwise.
pub fn solve_deterministic(
    sos: &[SystemOperator],
    coupling: &CouplingPolytope,
    opts: &SolverOptions,
    warm_start: Option<DVector<f64>>,
) -> Result<DetOutcome, crate::Error> {
    let cfg = LpConfig::from(opts);
    let dim = coupling.dim;
    let mut transcript = Transcript::default();

    // Degenerate boundary-angle space: the schedule is the empty vector and
    // each area dispatches independently.
    if dim == 0 {
        let y = DVector::zeros(0);
        let responses = query_all(sos, coupling, &y, &cfg, &mut transcript)?;
        let j_star: f64 = responses.iter().map(|r| r.region.beta).sum();
        let mut x_star = Vec::new();
        let mut per_area_cost = Vec::new();
        for so in sos {
            let (x, j) = so.optimal_dispatch(&y, &cfg)?;
            x_star.push(x);
            per_area_cost.push(j);
        }
        return Ok(DetOutcome {
            y_star: y,
            j_star,
            x_star,
            per_area_cost,
            ledger: vec![],
            transcript,
            regions_explored: 1,
            eps_halvings: 0,
            degenerate_regions: 0,
        });
    }

    let mut y = match warm_start {
        Some(w) => {
            if coupling.contains(&w, cfg.tol_feas) {
                w
            } else {
                qp::project_onto_polytope(&coupling.g, &coupling.h, &w)?
            }
        }
        None => DVector::zeros(dim),
    };
    if !coupling.contains(&y, 1e-6) {
        return Err(CoordError::NoStartingPoint.into());
    }

    let mut y_star = y.clone();
    let mut j_star = f64::INFINITY;
    let mut alphas: Vec<DVector<f64>> = Vec::new();
    let mut visited: std::collections::BTreeSet<Vec<u64>> = std::collections::BTreeSet::new();
    let mut eps = opts.epsilon;
    let mut eps_halvings = 0u32;
    let mut halvings_this_step = 0u32;
    let mut last_direction: Option<DVector<f64>> = None;
    let mut ledger: Vec<DetIteration> = Vec::new();
    let mut degenerate_regions = 0u32;

    for iter in 1..=opts.max_inner_iters {
        let t0 = std::time::Instant::now();
        let responses = query_all(sos, coupling, &y, &cfg, &mut transcript)?;
        let regions: Vec<CriticalRegion> = responses.iter().map(|r| r.region.clone()).collect();
        let fingerprint: Vec<u64> = regions.iter().map(|r| r.payload_digest()).collect();
        let new_region = !visited.contains(&fingerprint);

        if !new_region {
            if let Some(v) = &last_direction {
                // Probe overshot into a known region: halve the step and
                // retry from the incumbent.
                if halvings_this_step >= 20 {
                    return Err(CoordError::GuardExhausted {
                        halvings: halvings_this_step,
                    }
                    .into());
                }
                eps *= 0.5;
                eps_halvings += 1;
                halvings_this_step += 1;
                let probe = &y_star - v * eps;
                y = if coupling.contains(&probe, cfg.tol_feas) {
                    probe
                } else {
                    qp::project_onto_polytope(&coupling.g, &coupling.h, &probe)?
                };
                ledger.push(DetIteration {
                    iter,
                    y_probe: y.as_slice().to_vec(),
                    region_digest: crate::fnv1a(
                        &fingerprint
                            .iter()
                            .flat_map(|v| v.to_le_bytes())
                            .collect::<Vec<u8>>(),
                    ),
                    new_region: false,
                    j_opt: f64::NAN,
                    improved: false,
                    j_star,
                    v_norm: v.norm(),
                    normalized_v: f64::NAN,
                    min_alpha_v: f64::NAN,
                    eps,
                    halvings: halvings_this_step,
                    time_ms: t0.elapsed().as_secs_f64() * 1e3,
                });
                continue;
            }
        }
        let combined = mplp::combine(&regions, &y, &cfg)?;

        // Minimize the affine aggregate cost over the combined region with
        // lexicographic vertex selection.
        let master = lp::LpProblem {
            c: combined.alpha.clone(),
            a: combined.d_mat.clone(),
            kinds: vec![lp::RowKind::Le; combined.d_mat.nrows()],
            b: combined.d_vec.clone(),
        };
        let master_sol = lp::solve_lex_smallest(&master, &cfg)?;
        let y_opt = master_sol.z.clone();
        let j_opt = master_sol.value + combined.beta;

        let improved = if j_star.is_finite() {
            j_opt < j_star - 1e-10 * (1.0 + j_star.abs())
        } else {
            j_opt.is_finite()
        };

        // A non-improving region that does not touch the incumbent cannot
        // contribute a subgradient at it: the probe overshot. Shrink the
        // step and retry.
        if !improved && !combined.contains(&y_star, 1e-6) {
            if let Some(v) = &last_direction {
                if halvings_this_step >= 20 {
                    return Err(CoordError::GuardExhausted {
                        halvings: halvings_this_step,
                    }
                    .into());
                }
                eps *= 0.5;
                eps_halvings += 1;
                halvings_this_step += 1;
                let probe = &y_star - v * eps;
                y = if coupling.contains(&probe, cfg.tol_feas) {
                    probe
                } else {
                    qp::project_onto_polytope(&coupling.g, &coupling.h, &probe)?
                };
                ledger.push(DetIteration {
                    iter,
                    y_probe: y.as_slice().to_vec(),
                    region_digest: crate::fnv1a(
                        &fingerprint
                            .iter()
                            .flat_map(|v| v.to_le_bytes())
                            .collect::<Vec<u8>>(),
                    ),
                    new_region: false,
                    j_opt,
                    improved: false,
                    j_star,
                    v_norm: v.norm(),
                    normalized_v: f64::NAN,
                    min_alpha_v: f64::NAN,
                    eps,
                    halvings: halvings_this_step,
                    time_ms: t0.elapsed().as_secs_f64() * 1e3,
                });
                continue;
            }
        }
        visited.insert(fingerprint.clone());
        halvings_this_step = 0;
        if combined.degenerate {
            degenerate_regions += 1;
        }

        if improved {
            y_star = y_opt.clone();
            j_star = j_opt;
            alphas.clear();
            alphas.push(combined.alpha.clone());
            visited.clear();
            visited.insert(fingerprint.clone());
            eps = opts.epsilon;
        } else {
            let bits: Vec<u64> = combined.alpha.iter().map(|v| v.to_bits()).collect();
            let dup = alphas
                .iter()
                .any(|a| a.iter().map(|v| v.to_bits()).collect::<Vec<u64>>() == bits);
            if !dup {
                alphas.push(combined.alpha.clone());
            }
        }

        let cone = NormalCone {
            generators: coupling
                .active_rows(&y_star, cfg.tol_feas * 1e3)
                .into_iter()
                .map(|j| coupling.g.row(j).transpose())
                .collect(),
        };
        let dset = SubgradientSet {
            anchor: y_star.clone(),
            alphas: alphas.clone(),
            j_star,
        };
        let (v, cert) = min_norm_direction(&dset, &cone, opts.tol_v)?;
        let min_alpha_v = alphas
            .iter()
            .map(|a| a.dot(&v))
            .fold(f64::INFINITY, f64::min);

        ledger.push(DetIteration {
            iter,
            y_probe: y.as_slice().to_vec(),
            region_digest: crate::fnv1a(
                &fingerprint
                    .iter()
                    .flat_map(|v| v.to_le_bytes())
                    .collect::<Vec<u8>>(),
            ),
            new_region,
            j_opt,
            improved,
            j_star,
            v_norm: v.norm(),
            normalized_v: cert.normalized_norm,
            min_alpha_v,
            eps,
            halvings: 0,
            time_ms: t0.elapsed().as_secs_f64() * 1e3,
        });

        if cert.declared_zero {
            let mut x_star = Vec::new();
            let mut per_area_cost = Vec::new();
            for so in sos {
                let (x, j) = so.optimal_dispatch(&y_star, &cfg)?;
                x_star.push(x);
                per_area_cost.push(j);
            }
            let regions_explored = ledger.iter().filter(|r| r.new_region).count();
            return Ok(DetOutcome {
                y_star,
                j_star,
                x_star,
                per_area_cost,
                ledger,
                transcript,
                regions_explored,
                eps_halvings,
                degenerate_regions,
            });
        }

        // Descent property of the min-norm direction: every collected
        // subgradient must make positive progress, otherwise the incumbent
        // bookkeeping is inconsistent.
        if min_alpha_v <= 0.0 {
            return Err(CoordError::DescentViolated { worst: min_alpha_v }.into());
        }

        let probe = &y_star - &v * eps;
        y = if coupling.contains(&probe, cfg.tol_feas) {
            probe
        } else {
            qp::project_onto_polytope(&coupling.g, &coupling.h, &probe)?
        };
        last_direction = Some(v);
    }

    Err(CoordError::IterationCap {
        cap: opts.max_inner_iters,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::shipped;
    use crate::netmodel;

    fn det_sos(case: &crate::casefile::CaseSpec) -> (Vec<SystemOperator>, CouplingPolytope) {
        let (areas, coupling) = netmodel::assemble(case).unwrap();
        let sos = areas
            .into_iter()
            .map(|a| {
                let xi = a.xi_mid();
                SystemOperator::fixed(a, xi)
            })
            .collect();
        (sos, coupling)
    }

    #[test]
    fn tiny_case_matches_the_joint_oracle() {
        let case = shipped::tiny2();
        let (sos, coupling) = det_sos(&case);
        let out = solve_deterministic(&sos, &coupling, &case.options, None).unwrap();
        let (areas, _) = netmodel::assemble(&case).unwrap();
        let xis: Vec<_> = areas.iter().map(|a| a.xi_mid()).collect();
        let joint =
            crate::harness::oracle_joint(&areas, &coupling, &xis, &LpConfig::default()).unwrap();
        assert!(
            (out.j_star - joint.value).abs() <= 1e-6 * (1.0 + joint.value.abs()),
            "loop {} vs oracle {}",
            out.j_star,
            joint.value
        );
        assert!(out.regions_explored <= 10, "{}", out.regions_explored);
        // Ledger costs never increase.
        let stars: Vec<f64> = out.ledger.iter().map(|r| r.j_star).collect();
        for w in stars.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn near_zero_tie_capacity_decouples_the_areas() {
        let mut case = shipped::tiny2();
        case.tielines[0].capacity = 1e-6;
        let (sos, coupling) = det_sos(&case);
        let out = solve_deterministic(&sos, &coupling, &case.options, None).unwrap();
        // The scheduled flows are pinned to zero and the cost is the sum of
        // the isolated dispatches.
        assert!(out.y_star.amax() < 1e-6);
        let (areas, _) = netmodel::assemble(&case).unwrap();
        let mut isolated = 0.0;
        for i in 0..2 {
            let mut single = case.clone();
            single.areas = vec![case.areas[i].clone()];
            single.tielines.clear();
            single.slack = crate::casefile::BusRef(case.areas[i].id, 9);
            let (sa, sc) = netmodel::assemble(&single).unwrap();
            isolated += crate::harness::oracle_joint(&sa, &sc, &[sa[0].xi_mid()], &LpConfig::default())
                .unwrap()
                .value;
        }
        assert!(
            (out.j_star - isolated).abs() <= 1e-6 * (1.0 + isolated.abs()),
            "loop {} vs isolated {}",
            out.j_star,
            isolated
        );
        let _ = areas;
    }

    #[test]
    fn random_start_reaches_the_same_cost() {
        let case = shipped::tiny2();
        let (sos, coupling) = det_sos(&case);
        let a = solve_deterministic(&sos, &coupling, &case.options, None).unwrap();
        let start = DVector::from_vec(vec![-0.11]);
        let b = solve_deterministic(&sos, &coupling, &case.options, Some(start)).unwrap();
        assert!((a.j_star - b.j_star).abs() <= 1e-6 * (1.0 + a.j_star.abs()));
    }

    #[test]
    fn single_vertex_so_matches_fixed_so() {
        let case = shipped::small2();
        let (areas, coupling) = netmodel::assemble(&case).unwrap();
        let cfg = LpConfig::default();
        let area = areas[0].clone();
        let xi = area.xi_hi.clone();
        let fixed = SystemOperator::fixed(area.clone(), xi.clone());
        let vert = SystemOperator::with_vertices(area, vec![xi]);
        let y = DVector::zeros(coupling.dim);
        let a = so_answer_cr(&fixed, &coupling, &y, &cfg).unwrap();
        let b = so_answer_cr(&vert, &coupling, &y, &cfg).unwrap();
        assert!((a.region.alpha.clone() - &b.region.alpha).amax() < 1e-10);
        assert!((a.region.beta - b.region.beta).abs() < 1e-10 * (1.0 + a.region.beta.abs()));
    }

    #[test]
    fn tampered_responses_are_rejected() {
        let case = shipped::tiny2();
        let (sos, coupling) = det_sos(&case);
        let cfg = LpConfig::default();
        let y = DVector::zeros(coupling.dim);
        let mut resp = so_answer_cr(&sos[0], &coupling, &y, &cfg).unwrap();
        // Shift the region strictly away from the query point.
        let far = DVector::from_vec(vec![5.0]);
        resp.region.d_mat = nalgebra::DMatrix::from_row_slice(1, 1, &[1.0]);
        resp.region.d_vec = nalgebra::DVector::from_vec(vec![-1.0]);
        let err = validate_response(&resp, &y, &cfg).unwrap_err();
        assert!(matches!(err, CoordError::ResponseRejected { area: 1 }));
        let _ = far;
    }

    #[test]
    fn transcript_roundtrips_and_carries_no_internals() {
        let case = shipped::tiny2();
        let (sos, coupling) = det_sos(&case);
        let out = solve_deterministic(&sos, &coupling, &case.options, None).unwrap();
        let text = out.transcript.dump();
        let back = Transcript::parse(&text).unwrap();
        assert_eq!(back.messages.len(), out.transcript.messages.len());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let obj = v.as_object().unwrap();
            let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
            keys.sort_unstable();
            match obj["kind"].as_str().unwrap() {
                "cr_query" | "worst_case_query" => {
                    assert_eq!(keys, ["area", "kind", "y"]);
                }
                "cr_response" => {
                    assert_eq!(keys, ["alpha", "area", "beta", "d", "d_rhs", "kind"]);
                }
                "worst_case_reply" => {
                    assert_eq!(keys, ["area", "j_opt", "kind"]);
                }
                other => panic!("unexpected message kind {other}"),
            }
        }
    }
}
