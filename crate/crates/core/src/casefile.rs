//! Case and report documents.
//!
//! A case is a single JSON document describing the areas, tie-lines, slack
//! bus, and solver options. Quantities are in MW against a declared MVA base;
//! reactances are in per-unit. Uncertain quantities (available wind capacity,
//! demand limits) are `[lo, hi]` ranges; a range with equal endpoints is a
//! known value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A `(area id, bus id)` reference, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusRef(pub u32, pub u32);

impl std::fmt::Display for BusRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "area {} bus {}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    pub areas: Vec<AreaSpec>,
    #[serde(default)]
    pub tielines: Vec<TieLineSpec>,
    pub slack: BusRef,
    #[serde(default)]
    pub options: SolverOptions,
}

fn default_base_mva() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaSpec {
    pub id: u32,
    /// Internal buses. Boundary buses are listed separately and carry no
    /// generation, wind, or load.
    pub buses: Vec<BusSpec>,
    pub boundary: Vec<u32>,
    #[serde(default)]
    pub branches: Vec<BranchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: u32,
    #[serde(default)]
    pub gen: GenSpec,
    #[serde(default)]
    pub wind: WindSpec,
    #[serde(default)]
    pub load: LoadSpec,
}

/// Dispatchable generation limits (MW) and its price ($/MWh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    #[serde(default)]
    pub min: f64,
    #[serde(default)]
    pub max: f64,
    #[serde(default)]
    pub price: f64,
}

/// Available wind capacity range (MW) and the spillage price ($/MWh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct WindSpec {
    #[serde(default)]
    pub cap: [f64; 2],
    #[serde(default)]
    pub price: f64,
}

/// Controllable load: ranges for the lower and upper demand limits (MW) and
/// the price of unserved demand ($/MWh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default)]
    pub min: [f64; 2],
    #[serde(default)]
    pub max: [f64; 2],
    #[serde(default)]
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub from: u32,
    pub to: u32,
    /// Reactance in p.u.
    pub reactance: f64,
    /// Thermal capacity in MW.
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLineSpec {
    pub from: BusRef,
    pub to: BusRef,
    pub reactance: f64,
    pub capacity: f64,
}

/// Big-M selection for the worst-case scenario MILP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BigM {
    Auto,
    Fixed(f64),
}

impl Serialize for BigM {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BigM::Auto => s.serialize_str("auto"),
            BigM::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for BigM {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Value(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t == "auto" => Ok(BigM::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "big_m must be \"auto\" or a number, got {t:?}"
            ))),
            Raw::Value(v) => Ok(BigM::Fixed(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Probe step length in boundary-angle units.
    pub epsilon: f64,
    /// Relative optimality tolerance.
    pub tol_opt: f64,
    /// Absolute constraint tolerance on unit-scaled rows.
    pub tol_feas: f64,
    /// Normalized direction-norm threshold that declares termination.
    pub tol_v: f64,
    pub big_m: BigM,
    pub max_outer_iters: u32,
    pub max_inner_iters: u32,
    /// Tie-breaking rule for degenerate optimizers. Only "lexicographic" is
    /// defined.
    pub lex_tiebreak: String,
    /// Seed for scenario sampling in the harness.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            epsilon: 1e-5,
            tol_opt: 1e-7,
            tol_feas: 1e-8,
            tol_v: 1e-6,
            big_m: BigM::Auto,
            max_outer_iters: 25,
            max_inner_iters: 500,
            lex_tiebreak: "lexicographic".to_string(),
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("base_mva must be positive, got {0}")]
    BadBaseMva(f64),
    #[error("no areas declared")]
    NoAreas,
    #[error("duplicate area id {0}")]
    DuplicateAreaId(u32),
    #[error("duplicate bus id {bus} in area {area}")]
    DuplicateBusId { area: u32, bus: u32 },
    #[error("area {area} has no boundary bus")]
    NoBoundaryBus { area: u32 },
    #[error("gen limits inverted at {0}: min > max")]
    GenBoundsInverted(BusRef),
    #[error("uncertain range for {field} inverted at {bus}: lo > hi")]
    XiBoundsInverted { bus: BusRef, field: &'static str },
    #[error("uncertain range for {field} negative at {bus}")]
    XiNegative { bus: BusRef, field: &'static str },
    #[error("branch {from}-{to} in area {area} references an undeclared bus")]
    BranchEndpointUnknown { area: u32, from: u32, to: u32 },
    #[error("branch {from}-{to} in area {area} must have positive reactance")]
    BranchBadReactance { area: u32, from: u32, to: u32 },
    #[error("branch {from}-{to} in area {area} must have positive capacity")]
    BranchBadCapacity { area: u32, from: u32, to: u32 },
    #[error("tie endpoint not boundary: {0}")]
    TieEndpointNotBoundary(BusRef),
    #[error("tie endpoint references undeclared area {0}")]
    TieEndpointUnknownArea(u32),
    #[error("tie-line joins two buses of the same area {0}")]
    TieSameArea(u32),
    #[error("tie-line {from}-{to} must have positive reactance")]
    TieBadReactance { from: BusRef, to: BusRef },
    #[error("tie-line {from}-{to} must have positive capacity")]
    TieBadCapacity { from: BusRef, to: BusRef },
    #[error("slack {0} must be a boundary bus of the first declared area")]
    BadSlack(BusRef),
    #[error("option {0} must be positive")]
    NonPositiveOption(&'static str),
    #[error("unsupported lex_tiebreak {0:?}; only \"lexicographic\" is defined")]
    BadTieBreak(String),
}

/// Parse a case document and check every structural invariant.
pub fn parse_case(text: &str) -> Result<CaseSpec, CaseError> {
    let case: CaseSpec = serde_json::from_str(text).map_err(|e| CaseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    case.validate()?;
    Ok(case)
}

/// Serialize a case canonically (pretty JSON, declaration key order).
pub fn emit_case(case: &CaseSpec) -> String {
    let mut s = serde_json::to_string_pretty(case).expect("case serialization cannot fail");
    s.push('\n');
    s
}

impl CaseSpec {
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::BadBaseMva(self.base_mva));
        }
        if self.areas.is_empty() {
            return Err(CaseError::NoAreas);
        }
        let mut area_ids = std::collections::BTreeSet::new();
        for area in &self.areas {
            if !area_ids.insert(area.id) {
                return Err(CaseError::DuplicateAreaId(area.id));
            }
            let mut bus_ids = std::collections::BTreeSet::new();
            for bus in &area.buses {
                if !bus_ids.insert(bus.id) {
                    return Err(CaseError::DuplicateBusId {
                        area: area.id,
                        bus: bus.id,
                    });
                }
                let r = BusRef(area.id, bus.id);
                if bus.gen.min > bus.gen.max {
                    return Err(CaseError::GenBoundsInverted(r));
                }
                for (field, range) in [
                    ("wind.cap", bus.wind.cap),
                    ("load.min", bus.load.min),
                    ("load.max", bus.load.max),
                ] {
                    if range[0] < 0.0 {
                        return Err(CaseError::XiNegative { bus: r, field });
                    }
                    if range[0] > range[1] {
                        return Err(CaseError::XiBoundsInverted { bus: r, field });
                    }
                }
            }
            if area.boundary.is_empty() {
                return Err(CaseError::NoBoundaryBus { area: area.id });
            }
            for &b in &area.boundary {
                if !bus_ids.insert(b) {
                    // Also boundary listed twice, or clashing with an internal id.
                    return Err(CaseError::DuplicateBusId {
                        area: area.id,
                        bus: b,
                    });
                }
            }
            for br in &area.branches {
                if !bus_ids.contains(&br.from) || !bus_ids.contains(&br.to) {
                    return Err(CaseError::BranchEndpointUnknown {
                        area: area.id,
                        from: br.from,
                        to: br.to,
                    });
                }
                if !(br.reactance > 0.0) {
                    return Err(CaseError::BranchBadReactance {
                        area: area.id,
                        from: br.from,
                        to: br.to,
                    });
                }
                if !(br.capacity > 0.0) {
                    return Err(CaseError::BranchBadCapacity {
                        area: area.id,
                        from: br.from,
                        to: br.to,
                    });
                }
            }
        }
        for tie in &self.tielines {
            for end in [tie.from, tie.to] {
                let area = self
                    .areas
                    .iter()
                    .find(|a| a.id == end.0)
                    .ok_or(CaseError::TieEndpointUnknownArea(end.0))?;
                if !area.boundary.contains(&end.1) {
                    return Err(CaseError::TieEndpointNotBoundary(end));
                }
            }
            if tie.from.0 == tie.to.0 {
                return Err(CaseError::TieSameArea(tie.from.0));
            }
            if !(tie.reactance > 0.0) {
                return Err(CaseError::TieBadReactance {
                    from: tie.from,
                    to: tie.to,
                });
            }
            if !(tie.capacity > 0.0) {
                return Err(CaseError::TieBadCapacity {
                    from: tie.from,
                    to: tie.to,
                });
            }
        }
        let first = &self.areas[0];
        if self.slack.0 != first.id || !first.boundary.contains(&self.slack.1) {
            return Err(CaseError::BadSlack(self.slack));
        }
        let o = &self.options;
        for (name, v) in [
            ("epsilon", o.epsilon),
            ("tol_opt", o.tol_opt),
            ("tol_feas", o.tol_feas),
            ("tol_v", o.tol_v),
        ] {
            if !(v > 0.0) {
                return Err(CaseError::NonPositiveOption(name));
            }
        }
        if let BigM::Fixed(m) = o.big_m {
            if !(m > 0.0) {
                return Err(CaseError::NonPositiveOption("big_m"));
            }
        }
        if o.lex_tiebreak != "lexicographic" {
            return Err(CaseError::BadTieBreak(o.lex_tiebreak.clone()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialization; identifies the case in
    /// reports.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(emit_case(self).as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

// ---------------------------------------------------------------------------
// Run reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    #[serde(rename = "det")]
    Det,
    #[serde(rename = "robust")]
    Robust,
    #[serde(rename = "oracle-det")]
    OracleDet,
    #[serde(rename = "oracle-robust")]
    OracleRobust,
    #[serde(rename = "sample")]
    Sample,
}

/// One ledger row: for robust runs there are two rows per outer iteration
/// (the min step over collected scenarios, then the per-area worst-case max
/// step); deterministic runs log one exploration row per inner iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub iteration: u32,
    pub step: String,
    pub cost: f64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GuardEvents {
    /// Probe step halvings taken when a probe re-entered a known region.
    pub eps_halvings: u32,
    /// Worst-case MILPs that fell back to a fixed big-M.
    pub big_m_fallbacks: u32,
    /// Critical regions built from a degenerate active set.
    pub degenerate_bases: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRow {
    /// Deterministic optimum for the sampled scenario.
    pub j_p1: f64,
    /// Re-dispatch cost with the tie-line schedule frozen at the robust y*.
    pub j_p2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleStats {
    pub n: u32,
    pub seed: u64,
    pub j_rob: f64,
    pub max_p2: f64,
    pub rows: Vec<SampleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub case_digest: String,
    pub mode: RunMode,
    pub iterations: Vec<ReportRow>,
    pub y_star: Vec<f64>,
    pub cost: f64,
    /// Robust runs: per outer iteration `[min-step cost, max-step cost]`.
    pub bounds: Vec<[f64; 2]>,
    pub timings: Timings,
    pub guards: GuardEvents,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampleStats>,
}

impl RunRecord {
    /// Wall-clock fields are machine dependent; zero them when comparing
    /// reports for reproducibility.
    pub fn zero_timings(&mut self) {
        self.timings = Timings::default();
        for row in &mut self.iterations {
            row.time_ms = 0.0;
        }
    }
}

/// Serialize a run record deterministically (declaration key order, shortest
/// round-trip float form).
pub fn emit_report(run: &RunRecord) -> String {
    let mut s = serde_json::to_string_pretty(run).expect("report serialization cannot fail");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<RunRecord, CaseError> {
    serde_json::from_str(text).map_err(|e| CaseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}
