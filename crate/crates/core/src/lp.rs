//! Dense linear programming over free variables in row form:
//! minimize `c . z` subject to `A z <= b`, with rows optionally flagged as
//! equalities.
//!
//! The solver is a two-phase primal simplex on a dense tableau with Bland's
//! rule, which makes every solve deterministic and finitely terminating. On
//! termination the solution, duals, and active set are recomputed from the
//! final basis with a fresh LU factorization of the original (row-scaled)
//! data, so accumulated tableau error does not leak into downstream
//! active-set geometry.

use crate::netmodel::AreaModel;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    BadProblem(String),
    #[error("LP infeasible")]
    Infeasible,
    #[error("LP unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("simplex iteration limit exceeded")]
    IterationLimit,
    #[error("lexicographic selection left a degenerate optimizer (rank {rank} of {vars} vars, {rows} rows)")]
    LexDegenerate { rank: usize, vars: usize, rows: usize },
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub kinds: Vec<RowKind>,
    pub b: DVector<f64>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    fn check(&self) -> Result<(), LpError> {
        if self.a.nrows() != self.b.len() || self.a.nrows() != self.kinds.len() {
            return Err(LpError::BadProblem("row count mismatch".into()));
        }
        if self.a.ncols() != self.c.len() {
            return Err(LpError::BadProblem("column count mismatch".into()));
        }
        let finite = self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite());
        if !finite {
            return Err(LpError::BadProblem("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Incremental construction of an [`LpProblem`].
#[derive(Debug, Clone)]
pub struct LpBuilder {
    num_vars: usize,
    c: Vec<f64>,
    rows: Vec<Vec<f64>>,
    kinds: Vec<RowKind>,
    b: Vec<f64>,
}

impl LpBuilder {
    pub fn new(num_vars: usize) -> Self {
        LpBuilder {
            num_vars,
            c: vec![0.0; num_vars],
            rows: Vec::new(),
            kinds: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn objective(&mut self, coeffs: &[(usize, f64)]) -> &mut Self {
        for &(j, v) in coeffs {
            self.c[j] += v;
        }
        self
    }

    pub fn row(&mut self, kind: RowKind, coeffs: &[(usize, f64)], rhs: f64) -> &mut Self {
        let mut r = vec![0.0; self.num_vars];
        for &(j, v) in coeffs {
            r[j] += v;
        }
        self.rows.push(r);
        self.kinds.push(kind);
        self.b.push(rhs);
        self
    }

    pub fn build(self) -> LpProblem {
        let m = self.rows.len();
        let n = self.num_vars;
        let mut a = DMatrix::zeros(m, n);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        LpProblem {
            c: DVector::from_vec(self.c),
            a,
            kinds: self.kinds,
            b: DVector::from_vec(self.b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub z: DVector<f64>,
    pub value: f64,
    /// One multiplier per row; nonnegative on `Le` rows, free on `Eq` rows,
    /// satisfying `c + A^T duals = 0` at optimality.
    pub duals: DVector<f64>,
    /// Rows tight at `z` within the feasibility tolerance, sorted.
    pub active_set: Vec<usize>,
    /// Rows tight in the basis sense: `Eq` rows plus `Le` rows whose slack is
    /// nonbasic in the final basis. A subset of `active_set` up to tolerance.
    pub basis_active_rows: Vec<usize>,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, n: usize, m: usize) -> Self {
        LpSolution {
            status,
            z: DVector::zeros(n),
            value: f64::NAN,
            duals: DVector::zeros(m),
            active_set: Vec::new(),
            basis_active_rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LpConfig {
    /// Absolute feasibility tolerance on unit-scaled rows.
    pub tol_feas: f64,
    /// Relative optimality tolerance.
    pub tol_opt: f64,
    /// Reduced-cost / pivot-element threshold.
    pub tol_pivot: f64,
    pub max_iters: usize,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            tol_feas: 1e-8,
            tol_opt: 1e-7,
            tol_pivot: 1e-9,
            max_iters: 200_000,
        }
    }
}

impl From<&crate::casefile::SolverOptions> for LpConfig {
    fn from(o: &crate::casefile::SolverOptions) -> Self {
        LpConfig {
            tol_feas: o.tol_feas,
            tol_opt: o.tol_opt,
            ..LpConfig::default()
        }
    }
}

pub fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    solve_with(p, &LpConfig::default())
}

/// Solve and treat infeasible/unbounded outcomes as errors.
pub fn solve_expect_optimal(p: &LpProblem, cfg: &LpConfig) -> Result<LpSolution, LpError> {
    let s = solve_with(p, cfg)?;
    match s.status {
        LpStatus::Optimal => Ok(s),
        LpStatus::Infeasible => Err(LpError::Infeasible),
        LpStatus::Unbounded => Err(LpError::Unbounded),
    }
}

pub fn solve_with(p: &LpProblem, cfg: &LpConfig) -> Result<LpSolution, LpError> {
    p.check()?;
    Simplex::new(p, cfg).run()
}

struct Simplex<'a> {
    p: &'a LpProblem,
    cfg: &'a LpConfig,
    n: usize,
    m: usize,
    /// Per-row scale applied to (A, b).
    scale: Vec<f64>,
    /// Per-row sign applied so the stored RHS is nonnegative.
    sign: Vec<f64>,
    /// Stored row-major tableau body: m rows of `ncols + 1` entries.
    t: Vec<f64>,
    ncols: usize,
    /// Column of the slack variable of each `Le` row.
    slack_col: Vec<Option<usize>>,
    n_struct: usize,
    first_art: usize,
    basis: Vec<usize>,
    cost: Vec<f64>,
    cost_rhs: f64,
}

impl<'a> Simplex<'a> {
    fn new(p: &'a LpProblem, cfg: &'a LpConfig) -> Self {
        let n = p.num_vars();
        let m = p.num_rows();
        let mut scale = vec![1.0; m];
        let mut sign = vec![1.0; m];
        for j in 0..m {
            let a_inf = p.a.row(j).amax();
            if a_inf > 0.0 {
                scale[j] = 1.0 / a_inf;
            }
            if p.b[j] * scale[j] < 0.0 {
                sign[j] = -1.0;
            }
        }
        let n_le = p.kinds.iter().filter(|k| **k == RowKind::Le).count();
        // Artificials: every Eq row, plus Le rows whose slack starts negative.
        let mut n_art = 0;
        for j in 0..m {
            if p.kinds[j] == RowKind::Eq || sign[j] < 0.0 {
                n_art += 1;
            }
        }
        let n_struct = 2 * n + n_le;
        let ncols = n_struct + n_art;
        let mut t = vec![0.0; m * (ncols + 1)];
        let mut slack_col = vec![None; m];
        let mut basis = vec![usize::MAX; m];
        let mut next_slack = 2 * n;
        let mut next_art = n_struct;
        for j in 0..m {
            let row = &mut t[j * (ncols + 1)..(j + 1) * (ncols + 1)];
            let f = scale[j] * sign[j];
            for k in 0..n {
                let v = p.a[(j, k)] * f;
                row[k] = v;
                row[n + k] = -v;
            }
            if p.kinds[j] == RowKind::Le {
                row[next_slack] = sign[j];
                slack_col[j] = Some(next_slack);
                next_slack += 1;
            }
            row[ncols] = p.b[j] * f;
            if p.kinds[j] == RowKind::Eq || sign[j] < 0.0 {
                row[next_art] = 1.0;
                basis[j] = next_art;
                next_art += 1;
            } else {
                basis[j] = slack_col[j].expect("feasible Le row keeps its slack basic");
            }
        }
        Simplex {
            p,
            cfg,
            n,
            m,
            scale,
            sign,
            t,
            ncols,
            slack_col,
            n_struct,
            first_art: n_struct,
            basis,
            cost: vec![0.0; ncols],
            cost_rhs: 0.0,
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.ncols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.ncols + 1) + self.ncols]
    }

    /// Reduced costs for the given extended objective, from scratch.
    fn load_cost(&mut self, ext: &[f64]) {
        let w = self.ncols + 1;
        let mut cost = ext.to_vec();
        let mut rhs = 0.0;
        for r in 0..self.m {
            let cb = ext[self.basis[r]];
            if cb != 0.0 {
                let row = &self.t[r * w..(r + 1) * w];
                for k in 0..self.ncols {
                    cost[k] -= cb * row[k];
                }
                rhs -= cb * row[self.ncols];
            }
        }
        self.cost = cost;
        self.cost_rhs = rhs;
    }

    fn pivot(&mut self, enter: usize, leave_row: usize) {
        let w = self.ncols + 1;
        let piv = self.at(leave_row, enter);
        let inv = 1.0 / piv;
        {
            let row = &mut self.t[leave_row * w..(leave_row + 1) * w];
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        let pivot_row: Vec<f64> = self.t[leave_row * w..(leave_row + 1) * w].to_vec();
        for r in 0..self.m {
            if r == leave_row {
                continue;
            }
            let f = self.at(r, enter);
            if f != 0.0 {
                let row = &mut self.t[r * w..(r + 1) * w];
                for (v, pv) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * pv;
                }
            }
        }
        let f = self.cost[enter];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(pivot_row.iter()) {
                *v -= f * pv;
            }
            self.cost_rhs -= f * pivot_row[self.ncols];
        }
        self.basis[leave_row] = enter;
    }

    /// Bland's rule iteration for the loaded cost row. `allow` filters the
    /// entering candidates.
    fn iterate(&mut self, allow: impl Fn(usize) -> bool) -> Result<bool, LpError> {
        let mut iters = 0usize;
        loop {
            iters += 1;
            if iters > self.cfg.max_iters {
                return Err(LpError::IterationLimit);
            }
            let mut enter = usize::MAX;
            for k in 0..self.ncols {
                if self.cost[k] < -self.cfg.tol_pivot && allow(k) {
                    enter = k;
                    break;
                }
            }
            if enter == usize::MAX {
                return Ok(true);
            }
            let mut leave = usize::MAX;
            let mut best = f64::INFINITY;
            for r in 0..self.m {
                let a = self.at(r, enter);
                if a > self.cfg.tol_pivot {
                    let ratio = self.rhs(r) / a;
                    if ratio < best
                        || (ratio == best
                            && leave != usize::MAX
                            && self.basis[r] < self.basis[leave])
                    {
                        best = ratio;
                        leave = r;
                    }
                }
            }
            if leave == usize::MAX {
                return Ok(false); // unbounded for this cost row
            }
            self.pivot(enter, leave);
        }
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        // Artificial columns never re-enter once nonbasic.
        let first_art = self.first_art;
        let allow = move |k: usize| k < first_art;

        // Phase 1: drive artificials to zero.
        if self.first_art < self.ncols {
            let mut ext = vec![0.0; self.ncols];
            for k in self.first_art..self.ncols {
                ext[k] = 1.0;
            }
            self.load_cost(&ext);
            let bounded = self.iterate(allow)?;
            debug_assert!(bounded, "phase-1 objective is bounded below by zero");
            let phase1 = -self.cost_rhs;
            if phase1 > self.cfg.tol_feas * (10.0 + self.m as f64) {
                return Ok(LpSolution::non_optimal(LpStatus::Infeasible, self.n, self.m));
            }
            // Pivot leftover artificials out where a structural pivot exists.
            for r in 0..self.m {
                if self.basis[r] >= self.first_art {
                    let mut col = usize::MAX;
                    for k in 0..self.first_art {
                        if self.at(r, k).abs() > 1e-7 {
                            col = k;
                            break;
                        }
                    }
                    if col != usize::MAX {
                        self.pivot(col, r);
                    }
                }
            }
        }

        // Phase 2: original objective over structural columns.
        let mut ext = vec![0.0; self.ncols];
        for k in 0..self.n {
            ext[k] = self.p.c[k];
            ext[self.n + k] = -self.p.c[k];
        }
        self.load_cost(&ext);
        let bounded = self.iterate(allow)?;
        if !bounded {
            return Ok(LpSolution::non_optimal(LpStatus::Unbounded, self.n, self.m));
        }
        self.extract()
    }

    /// Recompute the solution exactly from the final basis.
    fn extract(&self) -> Result<LpSolution, LpError> {
        // Scaled, sign-normalized original column for each basis member.
        let col_of = |k: usize, j: usize| -> f64 {
            let f = self.scale[j] * self.sign[j];
            if k < self.n {
                self.p.a[(j, k)] * f
            } else if k < 2 * self.n {
                -self.p.a[(j, k - self.n)] * f
            } else if k < self.n_struct {
                if self.slack_col[j] == Some(k) {
                    self.sign[j]
                } else {
                    0.0
                }
            } else {
                // Leftover basic artificial on a redundant row.
                let art_row = self.art_row(k);
                if art_row == j {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let mut bmat = DMatrix::zeros(self.m, self.m);
        for (i, &k) in self.basis.iter().enumerate() {
            for j in 0..self.m {
                bmat[(j, i)] = col_of(k, j);
            }
        }
        let mut rhs = DVector::zeros(self.m);
        for j in 0..self.m {
            rhs[j] = self.p.b[j] * self.scale[j] * self.sign[j];
        }
        let lu = bmat.clone().lu();
        let xb = lu
            .solve(&rhs)
            .ok_or_else(|| LpError::Numerical("singular final basis".into()))?;
        let mut cb = DVector::zeros(self.m);
        for (i, &k) in self.basis.iter().enumerate() {
            cb[i] = if k < self.n {
                self.p.c[k]
            } else if k < 2 * self.n {
                -self.p.c[k - self.n]
            } else {
                0.0
            };
        }
        let pi = bmat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| LpError::Numerical("singular final basis".into()))?;

        let mut z = DVector::zeros(self.n);
        for (i, &k) in self.basis.iter().enumerate() {
            if k < self.n {
                z[k] += xb[i];
            } else if k < 2 * self.n {
                z[k - self.n] -= xb[i];
            }
        }
        let value = self.p.c.dot(&z);
        let mut duals = DVector::zeros(self.m);
        for j in 0..self.m {
            duals[j] = -pi[j] * self.scale[j] * self.sign[j];
        }
        // Clip dual noise on Le rows.
        for j in 0..self.m {
            if self.p.kinds[j] == RowKind::Le && duals[j] < 0.0 {
                if duals[j] < -1e-6 * (1.0 + self.p.c.amax()) {
                    return Err(LpError::Numerical(format!(
                        "negative inequality dual {}",
                        duals[j]
                    )));
                }
                duals[j] = 0.0;
            }
        }

        // Feasibility and stationarity checks on the recomputed point.
        let resid = &self.p.a * &z - &self.p.b;
        let mut active_set = Vec::new();
        for j in 0..self.m {
            let rs = resid[j] * self.scale[j];
            match self.p.kinds[j] {
                RowKind::Le => {
                    if rs > self.cfg.tol_feas * 100.0 {
                        return Err(LpError::Numerical(format!(
                            "primal residual {rs} on row {j}"
                        )));
                    }
                }
                RowKind::Eq => {
                    if rs.abs() > self.cfg.tol_feas * 100.0 {
                        return Err(LpError::Numerical(format!(
                            "equality residual {rs} on row {j}"
                        )));
                    }
                }
            }
            if rs.abs() <= self.cfg.tol_feas || self.p.kinds[j] == RowKind::Eq {
                active_set.push(j);
            }
        }
        let grad = &self.p.c + self.p.a.transpose() * &duals;
        let stat = grad.amax();
        if stat > self.cfg.tol_opt * (1.0 + self.p.c.amax()) {
            return Err(LpError::Numerical(format!("stationarity residual {stat}")));
        }

        let mut basis_active_rows = Vec::new();
        for j in 0..self.m {
            match self.slack_col[j] {
                None => basis_active_rows.push(j),
                Some(sc) => {
                    if !self.basis.contains(&sc) {
                        basis_active_rows.push(j);
                    }
                }
            }
        }

        Ok(LpSolution {
            status: LpStatus::Optimal,
            z,
            value,
            duals,
            active_set,
            basis_active_rows,
        })
    }

    /// Which row an artificial column was created for.
    fn art_row(&self, col: usize) -> usize {
        let mut next = self.first_art;
        for j in 0..self.m {
            if self.p.kinds[j] == RowKind::Eq || self.sign[j] < 0.0 {
                if next == col {
                    return j;
                }
                next += 1;
            }
        }
        unreachable!("artificial column {col} not mapped")
    }
}

/// Among all optimizers, return the one minimal in lexicographic order,
/// realized as sequential re-optimization: pin the objective, then minimize
/// each coordinate in index order.
pub fn solve_lex_smallest(p: &LpProblem, cfg: &LpConfig) -> Result<LpSolution, LpError> {
    let first = solve_with(p, cfg)?;
    if first.status != LpStatus::Optimal {
        return Ok(first);
    }
    let n = p.num_vars();
    let mut aug = p.clone();
    let push_row = |aug: &mut LpProblem, coeffs: DVector<f64>, rhs: f64| {
        let m = aug.a.nrows();
        aug.a = aug.a.clone().insert_row(m, 0.0);
        for k in 0..aug.a.ncols() {
            aug.a[(m, k)] = coeffs[k];
        }
        aug.kinds.push(RowKind::Le);
        aug.b = aug.b.clone().insert_row(m, rhs);
    };
    push_row(
        &mut aug,
        p.c.clone(),
        first.value + 1e-9 * (1.0 + first.value.abs()),
    );
    let mut point = DVector::zeros(n);
    let mut last = None;
    for k in 0..n {
        let mut q = aug.clone();
        q.c = DVector::zeros(n);
        q.c[k] = 1.0;
        let sol = solve_with(&q, cfg)?;
        if sol.status != LpStatus::Optimal {
            return Err(LpError::Numerical(
                "lexicographic pass lost optimality".into(),
            ));
        }
        point[k] = sol.z[k];
        let mut coeffs = DVector::zeros(n);
        coeffs[k] = 1.0;
        push_row(&mut aug, coeffs, sol.z[k] + 1e-9 * (1.0 + sol.z[k].abs()));
        last = Some(sol);
    }
    let last = last.ok_or_else(|| LpError::BadProblem("zero-variable problem".into()))?;

    // The sequential pins leave the point a hair off the exact vertex. Snap
    // back: pick independent tight rows (final-basis rows first) and solve
    // the square system.
    let row_scale = |j: usize| -> f64 {
        let a_inf = p.a.row(j).amax();
        if a_inf > 0.0 {
            1.0 / a_inf
        } else {
            1.0
        }
    };
    let resid = &p.a * &point - &p.b;
    let mut loose_active: Vec<usize> = Vec::new();
    for j in 0..p.num_rows() {
        if (resid[j] * row_scale(j)).abs() <= 1e-6 || p.kinds[j] == RowKind::Eq {
            loose_active.push(j);
        }
    }
    let mut candidates: Vec<usize> = last
        .basis_active_rows
        .iter()
        .copied()
        .filter(|&j| j < p.num_rows() && loose_active.contains(&j))
        .collect();
    for &j in &loose_active {
        if !candidates.contains(&j) {
            candidates.push(j);
        }
    }
    let mut selected = greedy_independent_rows(&p.a, &candidates, n);
    // The pin slacks can leave the point a hair off the exact vertex along
    // an edge whose closing hyperplane then reads as "not tight". Walk the
    // remaining null directions to the nearest blocking rows until the
    // vertex system is square.
    let mut walk_point = point.clone();
    while selected.len() < n {
        let d = null_direction(&p.a, &selected, n).ok_or(LpError::LexDegenerate {
            rank: selected.len(),
            vars: n,
            rows: p.num_rows(),
        })?;
        let slack = &p.b - &p.a * &walk_point;
        let along = &p.a * &d;
        let mut best_t = f64::INFINITY;
        let mut best_row = usize::MAX;
        for j in 0..p.num_rows() {
            if selected.contains(&j) || along[j].abs() <= 1e-9 {
                continue;
            }
            let t = slack[j] / along[j];
            if t.abs() < best_t.abs() || (t.abs() == best_t.abs() && j < best_row) {
                best_t = t;
                best_row = j;
            }
        }
        if best_row == usize::MAX || best_t.abs() > 1e-4 * (1.0 + walk_point.amax()) {
            return Err(LpError::LexDegenerate {
                rank: selected.len(),
                vars: n,
                rows: p.num_rows(),
            });
        }
        walk_point += d * best_t;
        selected.push(best_row);
    }
    let square = DMatrix::from_fn(n, n, |i, j| p.a[(selected[i], j)]);
    let rhs = DVector::from_fn(n, |i, _| p.b[selected[i]]);
    let z = square
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LpError::Numerical("singular lexicographic vertex system".into()))?;
    if (&z - &point).amax() > 1e-5 * (1.0 + point.amax()) {
        return Err(LpError::Numerical(
            "lexicographic vertex snap moved the point".into(),
        ));
    }
    let resid = &p.a * &z - &p.b;
    let mut active_set = Vec::new();
    for j in 0..p.num_rows() {
        let rs = resid[j] * row_scale(j);
        match p.kinds[j] {
            RowKind::Le => {
                if rs > cfg.tol_feas * 100.0 {
                    return Err(LpError::Numerical(format!(
                        "lexicographic point violates row {j} by {rs}"
                    )));
                }
            }
            RowKind::Eq => {
                if rs.abs() > cfg.tol_feas * 100.0 {
                    return Err(LpError::Numerical(format!(
                        "lexicographic point violates equality {j} by {rs}"
                    )));
                }
            }
        }
        if rs.abs() <= cfg.tol_feas || p.kinds[j] == RowKind::Eq {
            active_set.push(j);
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        z: z.clone(),
        value: p.c.dot(&z),
        duals: first.duals,
        active_set,
        basis_active_rows: selected,
    })
}

/// A unit vector orthogonal to the given rows, or `None` if they already
/// span the space.
fn null_direction(a: &DMatrix<f64>, rows: &[usize], n: usize) -> Option<DVector<f64>> {
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    for &j in rows {
        let mut v: DVector<f64> = a.row(j).transpose();
        for q in &ortho {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm > 1e-12 {
            ortho.push(v / norm);
        }
    }
    for k in 0..n {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        for q in &ortho {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm > 1e-7 {
            return Some(v / norm);
        }
    }
    None
}

/// Greedy maximal independent row subset (by incremental orthonormalization)
/// in candidate order, stopping at `target` rows.
pub(crate) fn greedy_independent_rows(
    a: &DMatrix<f64>,
    candidates: &[usize],
    target: usize,
) -> Vec<usize> {
    let mut selected = Vec::new();
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    for &j in candidates {
        if selected.len() == target {
            break;
        }
        let row: DVector<f64> = a.row(j).transpose();
        let norm = row.norm();
        if norm < 1e-12 {
            continue;
        }
        let mut res = row / norm;
        for q in &ortho {
            let proj = q.dot(&res);
            res -= q * proj;
        }
        let rn = res.norm();
        if rn > 1e-8 {
            ortho.push(res / rn);
            selected.push(j);
        }
    }
    selected
}

/// One area's dispatch problem at fixed `(y, xi)`.
#[derive(Debug, Clone)]
pub struct AreaPoint {
    pub lp: LpSolution,
    /// Full dispatch cost `J_i(y, xi)` including the constant terms.
    pub j_star: f64,
}

fn area_problem(area: &AreaModel, y: &DVector<f64>, xi: &DVector<f64>) -> LpProblem {
    let rhs = area.rhs_at(y, xi);
    LpProblem {
        c: area.c_x.clone(),
        a: area.a_x.clone(),
        kinds: vec![RowKind::Le; area.num_rows()],
        b: rhs,
    }
}

fn finish_area_point(
    area: &AreaModel,
    xi: &DVector<f64>,
    sol: Result<LpSolution, LpError>,
) -> Result<AreaPoint, LpError> {
    let lp = sol?;
    match lp.status {
        LpStatus::Optimal => {
            let j_star = lp.value + area.c0 + area.c_xi.dot(xi);
            Ok(AreaPoint { lp, j_star })
        }
        LpStatus::Infeasible => Err(LpError::Infeasible),
        LpStatus::Unbounded => Err(LpError::Unbounded),
    }
}

/// Solve one area's dispatch at fixed boundary angles and scenario.
pub fn solve_parametric_point(
    area: &AreaModel,
    y: &DVector<f64>,
    xi: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<AreaPoint, LpError> {
    let p = area_problem(area, y, xi);
    finish_area_point(area, xi, solve_with(&p, cfg))
}

/// Same, but with the lexicographically smallest optimal dispatch, which
/// pins a unique vertex for critical-region construction.
pub fn solve_parametric_point_lex(
    area: &AreaModel,
    y: &DVector<f64>,
    xi: &DVector<f64>,
    cfg: &LpConfig,
) -> Result<AreaPoint, LpError> {
    let p = area_problem(area, y, xi);
    finish_area_point(area, xi, solve_lex_smallest(&p, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::brute;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_lp(c: Vec<f64>, extra: Vec<(Vec<f64>, f64)>) -> LpProblem {
        let n = c.len();
        let mut builder = LpBuilder::new(n);
        for k in 0..n {
            builder.row(RowKind::Le, &[(k, 1.0)], 1.0);
            builder.row(RowKind::Le, &[(k, -1.0)], 0.0);
        }
        for (coeffs, rhs) in extra {
            let sparse: Vec<(usize, f64)> =
                coeffs.iter().enumerate().map(|(j, &v)| (j, v)).collect();
            builder.row(RowKind::Le, &sparse, rhs);
        }
        let mut p = builder.build();
        p.c = DVector::from_vec(c);
        p
    }

    #[test]
    fn unit_interval_minimum_sits_on_lower_bound() {
        let p = box_lp(vec![1.0], vec![]);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.z[0]).abs() < 1e-12);
        assert!((s.value).abs() < 1e-12);
        // Lower bound row (-x <= 0) is row 1 and must be active with a
        // positive multiplier.
        assert!(s.active_set.contains(&1));
        assert!(s.duals[1] > 0.5);
    }

    #[test]
    fn one_sided_problem_is_unbounded() {
        let mut b = LpBuilder::new(1);
        b.row(RowKind::Le, &[(0, 1.0)], 5.0);
        let mut p = b.build();
        p.c[0] = 1.0; // minimize x with only x <= 5
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut b = LpBuilder::new(1);
        b.row(RowKind::Le, &[(0, 1.0)], -1.0);
        b.row(RowKind::Le, &[(0, -1.0)], 0.0);
        let p = b.build();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_rows_are_honored() {
        let mut b = LpBuilder::new(2);
        b.row(RowKind::Eq, &[(0, 1.0), (1, 1.0)], 1.0);
        b.row(RowKind::Le, &[(0, -1.0)], 0.0);
        b.row(RowKind::Le, &[(1, -1.0)], 0.0);
        let mut p = b.build();
        p.c = DVector::from_vec(vec![2.0, 1.0]);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.z[0]).abs() < 1e-9);
        assert!((s.z[1] - 1.0).abs() < 1e-9);
        assert!((s.value - 1.0).abs() < 1e-9);
    }

    fn random_feasible_lp(seed: u64) -> LpProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..=6);
        let m_extra = rng.gen_range(4..=6);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let extra: Vec<(Vec<f64>, f64)> = (0..m_extra)
            .map(|_| {
                let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // Origin stays feasible and the unit box keeps it bounded.
                (row, rng.gen_range(0.1..1.5))
            })
            .collect();
        box_lp(c, extra)
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        for seed in 0..25u64 {
            let p = random_feasible_lp(seed);
            let s = solve(&p).unwrap();
            assert_eq!(s.status, LpStatus::Optimal, "seed {seed}");
            let (best, _) = brute::brute_lp_min(&p, 1e-9).expect("bounded feasible");
            assert!(
                (s.value - best).abs() <= 1e-9 * (1.0 + best.abs()),
                "seed {seed}: simplex {} vs brute {}",
                s.value,
                best
            );
            // Strong duality against the row multipliers.
            let dual_val = -s.duals.dot(&p.b);
            assert!(
                (s.value - dual_val).abs() <= 1e-7 * (1.0 + s.value.abs()),
                "seed {seed}: duality gap {} vs {}",
                s.value,
                dual_val
            );
            // Complementary slackness.
            for j in 0..p.num_rows() {
                if s.duals[j] > 1e-7 {
                    assert!(s.active_set.contains(&j), "seed {seed} row {j}");
                }
            }
        }
    }

    #[test]
    fn lex_prefers_smaller_leading_coordinates() {
        // min x1 + x2 s.t. x1 + x2 >= 1 on the unit box: optimal face is the
        // segment between (0, 1) and (1, 0); the lexicographic rule takes
        // (0, 1).
        let p = box_lp(vec![1.0, 1.0], vec![(vec![-1.0, -1.0], -1.0)]);
        let s = solve_lex_smallest(&p, &LpConfig::default()).unwrap();
        assert!((s.z[0]).abs() < 1e-8, "{:?}", s.z);
        assert!((s.z[1] - 1.0).abs() < 1e-8);
        assert!((s.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lex_agrees_with_solve_on_unique_optima() {
        let p = box_lp(vec![1.0, 2.0, 3.0], vec![(vec![-1.0, -1.0, -1.0], -0.5)]);
        let a = solve(&p).unwrap();
        let b = solve_lex_smallest(&p, &LpConfig::default()).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
        assert!((a.z - b.z).amax() < 1e-8);
    }

    #[test]
    fn lex_matches_enumerated_optimal_vertices_on_degenerate_lps() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut p = random_feasible_lp(seed);
            // Align the objective with a random row to force an optimal face.
            let row = rng.gen_range(0..p.num_rows());
            for k in 0..p.num_vars() {
                p.c[k] = -p.a[(row, k)];
            }
            let s = match solve_lex_smallest(&p, &LpConfig::default()) {
                Ok(s) => s,
                Err(LpError::LexDegenerate { .. }) => continue,
                Err(e) => panic!("seed {seed}: {e}"),
            };
            let lex = brute::brute_lex_min(&p, 1e-7).expect("bounded feasible");
            assert!(
                (s.z.clone() - &lex).amax() < 1e-6,
                "seed {seed}: got {:?} want {:?}",
                s.z,
                lex
            );
        }
    }

    #[test]
    fn identical_inputs_give_identical_bits() {
        let p = random_feasible_lp(7);
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        assert_eq!(a.z.as_slice(), b.z.as_slice());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.duals.as_slice(), b.duals.as_slice());
        assert_eq!(a.active_set, b.active_set);
    }

    #[test]
    fn zero_boundary_angles_give_the_isolated_dispatch() {
        // At y = 0 every tie flow vanishes and the area solves its own
        // economic dispatch: all demand served by the cheapest unit.
        let case = crate::harness::shipped::tiny2();
        let (areas, _) = crate::netmodel::assemble(&case).unwrap();
        let area = &areas[0];
        let y = nalgebra::DVector::zeros(1);
        let point = solve_parametric_point(area, &y, &area.xi_mid(), &LpConfig::default()).unwrap();
        // 120 MW of demand at $15/MWh from the 120 MW unit.
        assert!((point.j_star - 1800.0).abs() < 1e-6 * 1800.0, "{}", point.j_star);
    }

    #[test]
    fn tight_supply_makes_the_upper_scenario_costlier() {
        // Put the demand cap beyond the generation fleet: the upper scenario
        // pays the unserved-demand price.
        let mut case = crate::harness::shipped::tiny2();
        case.areas[0].buses[0].load.max = [170.0, 200.0];
        let (areas, _) = crate::netmodel::assemble(&case).unwrap();
        let area = &areas[0];
        let y = nalgebra::DVector::zeros(1);
        let cfg = LpConfig::default();
        let j_lo = solve_parametric_point(area, &y, &area.xi_lo, &cfg).unwrap().j_star;
        let j_hi = solve_parametric_point(area, &y, &area.xi_hi, &cfg).unwrap().j_star;
        assert!(j_hi >= j_lo + 1.0, "lo {j_lo} hi {j_hi}");
    }

    #[test]
    fn binding_tie_flow_activates_the_gateway_row() {
        // Area 2 of the two-bus case: at the far end of the coupling box the
        // tie imports 100 MW, which saturates the 100 MW gateway branch, so
        // the branch-limit row (the one carrying boundary-angle terms)
        // becomes active.
        let case = crate::casefile::parse_case(
            r#"{
            "areas": [
                {"id": 1,
                 "buses": [{"id": 1, "gen": {"min": 0, "max": 220, "price": 10}, "load": {"max": [40, 40], "price": 100}}],
                 "boundary": [2],
                 "branches": [{"from": 1, "to": 2, "reactance": 0.2, "capacity": 200}]},
                {"id": 2,
                 "buses": [{"id": 1, "gen": {"min": 0, "max": 100, "price": 30}, "load": {"max": [110, 110], "price": 100}}],
                 "boundary": [2],
                 "branches": [{"from": 1, "to": 2, "reactance": 0.2, "capacity": 100}]}
            ],
            "tielines": [{"from": [1, 2], "to": [2, 2], "reactance": 0.25, "capacity": 100}],
            "slack": [1, 2]
        }"#,
        )
        .unwrap();
        let (areas, coupling) = crate::netmodel::assemble(&case).unwrap();
        let area = &areas[1];
        let cfg = LpConfig::default();
        // Full import into area 2: tie flow 4(0 - y) = 1.0 at y = -0.25.
        let y = nalgebra::DVector::from_vec(vec![-0.25]);
        assert!(coupling.contains(&y, 1e-9));
        let point = solve_parametric_point(area, &y, &area.xi_mid(), &cfg).unwrap();
        let gateway_rows: Vec<usize> = (2 * (1 + 1) + 6..area.num_rows()).collect();
        let active_gateway = gateway_rows
            .iter()
            .any(|r| point.lp.active_set.contains(r) && area.a_y.row(*r).amax() > 0.0);
        assert!(active_gateway, "active set {:?}", point.lp.active_set);
    }
}
