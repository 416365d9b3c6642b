//! End-to-end run entry points shared by the CLI and the acceptance suite:
//! solve / oracle / sample / check over a parsed case, producing run
//! records in the report format.

use crate::casefile::{
    CaseSpec, GuardEvents, ReportRow, RunMode, RunRecord, SampleRow, SampleStats, Timings,
};
use crate::coordinator::{self, SystemOperator, Transcript};
use crate::harness::{oracle_joint, oracle_robust_enum, sample_and_compare};
use crate::lp::LpConfig;
use crate::netmodel;
use crate::robust::{self, UncertaintyBox};

pub const ENUMERATION_CAP: usize = 12;

fn base_record(case: &CaseSpec, mode: RunMode) -> RunRecord {
    RunRecord {
        case_digest: case.digest(),
        mode,
        iterations: Vec::new(),
        y_star: Vec::new(),
        cost: f64::NAN,
        bounds: Vec::new(),
        timings: Timings::default(),
        guards: GuardEvents::default(),
        samples: None,
    }
}

/// Deterministic or robust solve; deterministic runs use the nominal
/// (box-midpoint) scenario.
pub fn run_solve(case: &CaseSpec, robust: bool) -> Result<(RunRecord, Transcript), crate::Error> {
    let t0 = std::time::Instant::now();
    let (areas, coupling) = netmodel::assemble(case)?;
    let mut rec = base_record(
        case,
        if robust { RunMode::Robust } else { RunMode::Det },
    );
    let transcript;
    if robust {
        let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
        let out = robust::solve_robust(&areas, &coupling, &boxes, &case.options)?;
        for step in &out.ledger {
            rec.iterations.push(ReportRow {
                iteration: step.outer,
                step: "min".into(),
                cost: step.j_min,
                time_ms: step.min_ms,
            });
            rec.iterations.push(ReportRow {
                iteration: step.outer,
                step: "max".into(),
                cost: step.j_max,
                time_ms: step.max_ms,
            });
            rec.bounds.push([step.j_min, step.j_max]);
        }
        rec.y_star = out.y_star.as_slice().to_vec();
        rec.cost = out.j_rob;
        rec.guards = GuardEvents {
            eps_halvings: out.eps_halvings,
            big_m_fallbacks: out.big_m_fallbacks,
            degenerate_bases: out.degenerate_regions,
        };
        transcript = out.transcript;
    } else {
        let sos: Vec<SystemOperator> = areas
            .iter()
            .map(|a| SystemOperator::fixed(a.clone(), a.xi_mid()))
            .collect();
        let out = coordinator::solve_deterministic(&sos, &coupling, &case.options, None)?;
        for row in &out.ledger {
            rec.iterations.push(ReportRow {
                iteration: row.iter,
                step: "explore".into(),
                cost: row.j_star,
                time_ms: row.time_ms,
            });
        }
        rec.y_star = out.y_star.as_slice().to_vec();
        rec.cost = out.j_star;
        rec.guards = GuardEvents {
            eps_halvings: out.eps_halvings,
            big_m_fallbacks: 0,
            degenerate_bases: out.degenerate_regions,
        };
        transcript = out.transcript;
    }
    rec.timings.total_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok((rec, transcript))
}

/// Ground-truth solve: the joint LP (deterministic) or the
/// scenario-replicated epigraph LP (robust).
pub fn run_oracle(case: &CaseSpec, robust: bool) -> Result<RunRecord, crate::Error> {
    let t0 = std::time::Instant::now();
    let (areas, coupling) = netmodel::assemble(case)?;
    let cfg = LpConfig::from(&case.options);
    let mut rec = base_record(
        case,
        if robust {
            RunMode::OracleRobust
        } else {
            RunMode::OracleDet
        },
    );
    if robust {
        let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
        let (value, y) = oracle_robust_enum(&areas, &coupling, &boxes, ENUMERATION_CAP, &cfg)?;
        rec.cost = value;
        rec.y_star = y.as_slice().to_vec();
    } else {
        let xis: Vec<_> = areas.iter().map(|a| a.xi_mid()).collect();
        let joint = oracle_joint(&areas, &coupling, &xis, &cfg)?;
        rec.cost = joint.value;
        rec.y_star = joint.y.as_slice().to_vec();
    }
    rec.timings.total_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

/// Robust solve followed by a seeded scenario sweep.
pub fn run_sample(case: &CaseSpec, n: usize, seed: u64) -> Result<RunRecord, crate::Error> {
    let t0 = std::time::Instant::now();
    let (areas, coupling) = netmodel::assemble(case)?;
    let cfg = LpConfig::from(&case.options);
    let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
    let out = robust::solve_robust(&areas, &coupling, &boxes, &case.options)?;
    let sweep = sample_and_compare(
        &areas, &coupling, &boxes, &out.y_star, out.j_rob, n, seed, &cfg,
    )?;
    let mut rec = base_record(case, RunMode::Sample);
    rec.y_star = out.y_star.as_slice().to_vec();
    rec.cost = out.j_rob;
    rec.samples = Some(SampleStats {
        n: n as u32,
        seed,
        j_rob: out.j_rob,
        max_p2: sweep.max_p2,
        rows: sweep
            .rows
            .iter()
            .map(|&(j_p1, j_p2)| SampleRow { j_p1, j_p2 })
            .collect(),
    });
    rec.timings.total_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Cross-check the schedulers against the oracles on one case.
pub fn run_check(case: &CaseSpec) -> Result<Vec<CheckLine>, crate::Error> {
    let mut lines = Vec::new();
    let (areas, coupling) = netmodel::assemble(case)?;
    let cfg = LpConfig::from(&case.options);

    let (det_rec, _) = run_solve(case, false)?;
    let xis: Vec<_> = areas.iter().map(|a| a.xi_mid()).collect();
    let joint = oracle_joint(&areas, &coupling, &xis, &cfg)?;
    let gap = rel_gap(det_rec.cost, joint.value);
    lines.push(CheckLine {
        name: "deterministic-vs-joint-oracle".into(),
        pass: gap <= 1e-6,
        detail: format!("{} vs {} (gap {gap:.3e})", det_rec.cost, joint.value),
    });

    let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
    let total_uncertain: usize = boxes.iter().map(|b| b.uncertain_coords().len()).sum();
    if total_uncertain > 0 && total_uncertain <= ENUMERATION_CAP {
        let (rob_rec, _) = run_solve(case, true)?;
        let (enum_value, _) = oracle_robust_enum(&areas, &coupling, &boxes, ENUMERATION_CAP, &cfg)?;
        let gap = rel_gap(rob_rec.cost, enum_value);
        lines.push(CheckLine {
            name: "robust-vs-enumeration-oracle".into(),
            pass: gap <= 1e-6,
            detail: format!("{} vs {} (gap {gap:.3e})", rob_rec.cost, enum_value),
        });
        let sandwich = rob_rec
            .bounds
            .iter()
            .all(|b| b[0] <= b[1] + 1e-7 * (1.0 + b[0].abs()));
        lines.push(CheckLine {
            name: "robust-bound-sandwich".into(),
            pass: sandwich,
            detail: format!("{} outer iterations", rob_rec.bounds.len()),
        });

        let sample = run_sample(case, 50, case.options.seed)?;
        let stats = sample.samples.as_ref().expect("sample mode fills stats");
        let ok = stats.rows.iter().all(|r| {
            r.j_p1 <= r.j_p2 + 1e-6 * (1.0 + r.j_p2.abs())
                && r.j_p2 <= stats.j_rob + 1e-6 * (1.0 + stats.j_rob.abs())
        });
        lines.push(CheckLine {
            name: "sampling-order".into(),
            pass: ok,
            detail: format!("{} samples, max re-dispatch {}", stats.n, stats.max_p2),
        });
    }
    Ok(lines)
}
