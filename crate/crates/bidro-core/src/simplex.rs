//! Dense bounded-variable primal simplex and the box-constrained proximal step.
//!
//! Self-contained: no external solver. Two-phase method with explicit
//! artificials, product-form basis updates on top of a dense LU, Dantzig
//! pricing with a Bland fallback after a stall threshold. Ties in the ratio
//! test break toward the lowest variable index so runs are deterministic.
//!
//! Dual sign convention: at an optimum of a minimization, the row dual
//! `y_i` satisfies `y_i ≤ 0` for `≤` rows, `y_i ≥ 0` for `≥` rows and is
//! free for equalities. The dual objective is
//! `Σ_i y_i·rhs_i + Σ_j (d_j > 0 ? d_j·lower_j : d_j·upper_j)`
//! with `d = c − Aᵀy` the reduced costs.

use thiserror::Error;

/// Default primal/dual feasibility tolerance.
pub const DEFAULT_FEAS_TOL: f64 = 1e-7;
/// Pivot elements smaller than this are treated as zero.
pub const PIVOT_TOL: f64 = 1e-9;

const REFACTOR_EVERY: usize = 64;
const STALL_THRESHOLD: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("objective coefficient {index} is not finite")]
    NonFiniteObjective { index: usize },
    #[error("variable {index} has lower bound {lower} > upper bound {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("proximal step size must be positive, got {0}")]
    NonPositiveStep(f64),
}

/// A dense linear program `min c·x  s.t.  A x (sense) rhs,  lower ≤ x ≤ upper`.
///
/// Bounds default to `[0, +inf)`. `±inf` bounds are allowed.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Appends a variable with the given cost and bounds, returning its column index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        let j = self.objective.len();
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        for row in &mut self.rows {
            row.push(0.0);
        }
        j
    }

    /// Appends a dense row, returning its index.
    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> usize {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(coeffs);
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    /// Appends a sparse row given as (column, coefficient) pairs.
    pub fn add_row_sparse(&mut self, entries: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, v) in entries {
            row[j] += v;
        }
        self.add_row(row, sense, rhs)
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn set_objective(&mut self, j: usize, cost: f64) {
        self.objective[j] = cost;
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "bounds have lengths {}/{} for {} variables",
                self.lower.len(),
                self.upper.len(),
                n
            )));
        }
        let m = self.rows.len();
        if self.senses.len() != m || self.rhs.len() != m {
            return Err(LpError::DimensionMismatch(format!(
                "{} rows but {} senses / {} rhs entries",
                m,
                self.senses.len(),
                self.rhs.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(LpError::DimensionMismatch(format!(
                    "row {} has {} coefficients for {} variables",
                    i,
                    row.len(),
                    n
                )));
            }
        }
        for (j, &c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(LpError::NonFiniteObjective { index: j });
            }
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] {
                return Err(LpError::InvertedBounds {
                    index: j,
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        Ok(())
    }

    /// Plain-text tableau dump for bug reports.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "min {:?}", self.objective);
        for i in 0..self.num_rows() {
            let sense = match self.senses[i] {
                RowSense::Le => "<=",
                RowSense::Eq => "==",
                RowSense::Ge => ">=",
            };
            let _ = writeln!(out, "r{:<4} {:?} {} {}", i, self.rows[i], sense, self.rhs[i]);
        }
        let _ = writeln!(out, "lower {:?}", self.lower);
        let _ = writeln!(out, "upper {:?}", self.upper);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// Row duals under the convention documented at module level.
    pub duals: Vec<f64>,
    /// Reduced costs `c − Aᵀy` of the structural variables.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Diagnostic note set when the solve degraded (IterLimit / breakdown).
    pub note: Option<String>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual objective value for `lp` under the module's sign convention.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let mut v = 0.0;
        for i in 0..lp.num_rows() {
            v += self.duals[i] * lp.rhs[i];
        }
        for j in 0..lp.num_vars() {
            let d = self.reduced_costs[j];
            if d > 0.0 {
                if lp.lower[j].is_finite() {
                    v += d * lp.lower[j];
                }
            } else if lp.upper[j].is_finite() {
                v += d * lp.upper[j];
            }
        }
        v
    }
}

/// Component-wise proximal step `max(lower, center − η·gradient)`.
///
/// Closed form of `argmin_{λ ≥ lb} ⟨g, λ⟩ + (1/2η)‖λ − center‖²`.
pub fn solve_box_qp_prox(
    center: &[f64],
    gradient: &[f64],
    eta: f64,
    lower_bounds: &[f64],
) -> Result<Vec<f64>, LpError> {
    if eta <= 0.0 {
        return Err(LpError::NonPositiveStep(eta));
    }
    if center.len() != gradient.len() || center.len() != lower_bounds.len() {
        return Err(LpError::DimensionMismatch(format!(
            "prox dimensions {}/{}/{}",
            center.len(),
            gradient.len(),
            lower_bounds.len()
        )));
    }
    Ok(center
        .iter()
        .zip(gradient)
        .zip(lower_bounds)
        .map(|((&c, &g), &lb)| (c - eta * g).max(lb))
        .collect())
}

/// Solves `lp` with the bounded-variable primal simplex.
pub fn solve_lp(lp: &LinearProgram, feas_tol: f64, max_iters: usize) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut s = Simplex::new(lp, feas_tol, max_iters);
    Ok(s.run())
}

// ── dense LU with partial pivoting ───────────────────────────────────────

struct Lu {
    n: usize,
    a: Vec<f64>, // row-major, holds L (unit diag implied) and U
    perm: Vec<usize>,
}

impl Lu {
    fn factor(n: usize, cols: &mut dyn FnMut(usize, &mut [f64])) -> Option<Lu> {
        let mut a = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            cols(j, &mut col);
            for i in 0..n {
                a[i * n + j] = col[i];
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best < 1e-13 {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let diag = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / diag;
                a[i * n + k] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Some(Lu { n, a, perm })
    }

    /// Solves `B x = b` in place (b permuted, forward, back).
    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for i in 0..n {
            let mut v = x[i];
            for j in 0..i {
                v -= self.a[i * n + j] * x[j];
            }
            x[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for j in (i + 1)..n {
                v -= self.a[i * n + j] * x[j];
            }
            x[i] = v / self.a[i * n + i];
        }
        b.copy_from_slice(&x);
    }

    /// Solves `Bᵀ y = c` in place.
    fn solve_t(&self, b: &mut [f64]) {
        let n = self.n;
        // Uᵀ z = c (forward), then Lᵀ w = z (backward), then undo permutation.
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut v = b[i];
            for j in 0..i {
                v -= self.a[j * n + i] * z[j];
            }
            z[i] = v / self.a[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for j in (i + 1)..n {
                v -= self.a[j * n + i] * z[j];
            }
            z[i] = v;
        }
        for i in 0..n {
            b[self.perm[i]] = z[i];
        }
    }
}

// Product-form eta: after a pivot with direction w = B⁻¹A_q and leaving slot r,
// the new inverse applies E⁻¹ with E = I except column r = w.
struct Eta {
    r: usize,
    w: Vec<f64>,
}

// ── simplex core ─────────────────────────────────────────────────────────

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    n: usize,
    m: usize,
    feas_tol: f64,
    max_iters: usize,
    // variable space: [structural | slack | artificial]
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost2: Vec<f64>, // phase-2 costs
    cost1: Vec<f64>, // phase-1 costs
    value: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    lu: Option<Lu>,
    etas: Vec<Eta>,
    pivots_since_refactor: usize,
    iterations: usize,
    degen_streak: usize,
    bland: bool,
    note: Option<String>,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, feas_tol: f64, max_iters: usize) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let total = n + 2 * m;
        let mut lo = vec![0.0; total];
        let mut hi = vec![0.0; total];
        lo[..n].copy_from_slice(&lp.lower);
        hi[..n].copy_from_slice(&lp.upper);
        for i in 0..m {
            let (slo, shi) = match lp.senses[i] {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lo[n + i] = slo;
            hi[n + i] = shi;
            // artificials are pinned until phase 1 opens them
            lo[n + m + i] = 0.0;
            hi[n + m + i] = 0.0;
        }
        let mut cost2 = vec![0.0; total];
        cost2[..n].copy_from_slice(&lp.objective);
        Simplex {
            lp,
            n,
            m,
            feas_tol,
            max_iters,
            lo,
            hi,
            cost2,
            cost1: vec![0.0; total],
            value: vec![0.0; total],
            basis: Vec::new(),
            in_basis: vec![false; total],
            lu: None,
            etas: Vec::new(),
            pivots_since_refactor: 0,
            iterations: 0,
            degen_streak: 0,
            bland: false,
            note: None,
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for i in 0..self.m {
                out[i] = self.lp.rows[i][j];
            }
        } else if j < self.n + self.m {
            out[j - self.n] = 1.0;
        } else {
            out[j - self.n - self.m] = 1.0;
        }
    }

    fn refactor(&mut self) -> bool {
        let m = self.m;
        let basis = self.basis.clone();
        let lp_rows = &self.lp.rows;
        let n = self.n;
        let mut cols = |k: usize, out: &mut [f64]| {
            let j = basis[k];
            out.iter_mut().for_each(|v| *v = 0.0);
            if j < n {
                for i in 0..m {
                    out[i] = lp_rows[i][j];
                }
            } else if j < n + m {
                out[j - n] = 1.0;
            } else {
                out[j - n - m] = 1.0;
            }
        };
        match Lu::factor(m, &mut cols) {
            Some(lu) => {
                self.lu = Some(lu);
                self.etas.clear();
                self.pivots_since_refactor = 0;
                self.recompute_basics();
                true
            }
            None => false,
        }
    }

    /// Recomputes basic values from nonbasic values: x_B = B⁻¹(rhs − N x_N).
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut r = self.lp.rhs.clone();
        for j in 0..self.n + 2 * m {
            if !self.in_basis[j] && self.value[j] != 0.0 {
                let v = self.value[j];
                if j < self.n {
                    for i in 0..m {
                        r[i] -= self.lp.rows[i][j] * v;
                    }
                } else if j < self.n + m {
                    r[j - self.n] -= v;
                } else {
                    r[j - self.n - m] -= v;
                }
            }
        }
        self.ftran(&mut r);
        for k in 0..m {
            self.value[self.basis[k]] = r[k];
        }
    }

    fn ftran(&self, v: &mut Vec<f64>) {
        if let Some(lu) = &self.lu {
            lu.solve(v);
        }
        for e in &self.etas {
            let vr = v[e.r] / e.w[e.r];
            for i in 0..v.len() {
                if i == e.r {
                    continue;
                }
                v[i] -= e.w[i] * vr;
            }
            v[e.r] = vr;
        }
    }

    fn btran(&self, v: &mut Vec<f64>) {
        for e in self.etas.iter().rev() {
            let mut dot = 0.0;
            for i in 0..v.len() {
                if i != e.r {
                    dot += e.w[i] * v[i];
                }
            }
            v[e.r] = (v[e.r] - dot) / e.w[e.r];
        }
        if let Some(lu) = &self.lu {
            lu.solve_t(v);
        }
    }

    fn run(&mut self) -> LpSolution {
        // Initial point: structurals at the bound nearest zero, free vars at 0.
        for j in 0..self.n {
            self.value[j] = initial_value(self.lo[j], self.hi[j]);
        }
        // Row residuals decide slack-vs-artificial basis membership.
        let mut need_phase1 = false;
        for i in 0..self.m {
            let mut r = self.lp.rhs[i];
            for j in 0..self.n {
                r -= self.lp.rows[i][j] * self.value[j];
            }
            let (slo, shi) = (self.lo[self.n + i], self.hi[self.n + i]);
            if r >= slo - self.feas_tol && r <= shi + self.feas_tol {
                self.basis.push(self.n + i);
                self.in_basis[self.n + i] = true;
                self.value[self.n + i] = r;
            } else {
                // slack parked at its nearest bound, artificial absorbs the rest
                let sb = if r > shi { shi } else { slo };
                self.value[self.n + i] = sb;
                let a = self.n + self.m + i;
                let av = r - sb;
                if av > 0.0 {
                    self.lo[a] = 0.0;
                    self.hi[a] = f64::INFINITY;
                    self.cost1[a] = 1.0;
                } else {
                    self.lo[a] = f64::NEG_INFINITY;
                    self.hi[a] = 0.0;
                    self.cost1[a] = -1.0;
                }
                self.value[a] = av;
                self.basis.push(a);
                self.in_basis[a] = true;
                need_phase1 = true;
            }
        }
        if !self.refactor() {
            return self.breakdown("initial basis is singular");
        }

        if need_phase1 {
            match self.iterate(Phase::One) {
                IterOutcome::Optimal => {
                    let infeas = self.phase1_objective();
                    if infeas > self.feas_tol * (1.0 + self.rhs_scale()) {
                        return self.finish(LpStatus::Infeasible);
                    }
                    // pin artificials for phase 2
                    for i in 0..self.m {
                        let a = self.n + self.m + i;
                        if !self.in_basis[a] {
                            self.value[a] = 0.0;
                        }
                        self.lo[a] = 0.0;
                        self.hi[a] = 0.0;
                    }
                }
                IterOutcome::Unbounded => {
                    return self.breakdown("phase 1 unbounded (numerical breakdown)")
                }
                IterOutcome::IterLimit => return self.finish(LpStatus::IterLimit),
                IterOutcome::Breakdown(msg) => return self.breakdown(&msg),
            }
        }

        match self.iterate(Phase::Two) {
            IterOutcome::Optimal => {
                // Guard against drifting off feasibility during phase 2.
                if self.primal_infeasibility() > self.feas_tol * (1.0 + self.rhs_scale()) {
                    return self.breakdown("final point violates feasibility tolerance");
                }
                self.finish(LpStatus::Optimal)
            }
            IterOutcome::Unbounded => self.finish(LpStatus::Unbounded),
            IterOutcome::IterLimit => self.finish(LpStatus::IterLimit),
            IterOutcome::Breakdown(msg) => self.breakdown(&msg),
        }
    }

    fn rhs_scale(&self) -> f64 {
        self.lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()))
    }

    fn phase1_objective(&self) -> f64 {
        let mut v = 0.0;
        for i in 0..self.m {
            let a = self.n + self.m + i;
            v += self.cost1[a] * self.value[a];
        }
        v
    }

    fn primal_infeasibility(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m {
            let mut ax = 0.0;
            for j in 0..self.n {
                ax += self.lp.rows[i][j] * self.value[j];
            }
            let r = ax - self.lp.rhs[i];
            let viol = match self.lp.senses[i] {
                RowSense::Le => r.max(0.0),
                RowSense::Ge => (-r).max(0.0),
                RowSense::Eq => r.abs(),
            };
            worst = worst.max(viol);
        }
        for j in 0..self.n {
            worst = worst.max(self.lo[j] - self.value[j]);
            worst = worst.max(self.value[j] - self.hi[j]);
        }
        worst
    }

    fn iterate(&mut self, phase: Phase) -> IterOutcome {
        let total = self.n + 2 * self.m;
        loop {
            if self.iterations >= self.max_iters {
                return IterOutcome::IterLimit;
            }
            self.iterations += 1;

            // duals for the current phase costs
            let cost: &Vec<f64> = match phase {
                Phase::One => &self.cost1,
                Phase::Two => &self.cost2,
            };
            let mut y = vec![0.0; self.m];
            for k in 0..self.m {
                y[k] = cost[self.basis[k]];
            }
            self.btran(&mut y);

            // pricing: reduced costs of nonbasic columns
            let mut at_y = vec![0.0; self.n];
            for i in 0..self.m {
                let yi = y[i];
                if yi != 0.0 {
                    let row = &self.lp.rows[i];
                    for j in 0..self.n {
                        at_y[j] += yi * row[j];
                    }
                }
            }
            let price_limit = if phase == Phase::One { total } else { self.n + self.m };
            let mut enter: Option<(usize, f64, i8)> = None; // (var, score, direction)
            for j in 0..price_limit {
                if self.in_basis[j] {
                    continue;
                }
                if self.lo[j] == self.hi[j] {
                    continue; // fixed (includes pinned artificials)
                }
                let d = cost[j]
                    - if j < self.n {
                        at_y[j]
                    } else if j < self.n + self.m {
                        y[j - self.n]
                    } else {
                        y[j - self.n - self.m]
                    };
                let at_lower = self.value[j] <= self.lo[j] + self.feas_tol;
                let at_upper = self.value[j] >= self.hi[j] - self.feas_tol;
                let free = !self.lo[j].is_finite() && !self.hi[j].is_finite();
                let (score, dir) = if free {
                    (d.abs(), if d > 0.0 { -1i8 } else { 1i8 })
                } else if at_lower && d < 0.0 {
                    (-d, 1)
                } else if at_upper && d > 0.0 {
                    (d, -1)
                } else {
                    continue;
                };
                if score <= self.feas_tol {
                    continue;
                }
                match (&enter, self.bland) {
                    (_, true) => {
                        enter = Some((j, score, dir));
                        break; // Bland: lowest eligible index
                    }
                    (None, _) => enter = Some((j, score, dir)),
                    (Some((_, best, _)), _) if score > *best => enter = Some((j, score, dir)),
                    _ => {}
                }
            }

            let (q, _, dir) = match enter {
                Some(e) => e,
                None => return IterOutcome::Optimal,
            };

            // direction of basic variables: x_B(t) = x_B − dir·t·w
            let mut w = vec![0.0; self.m];
            self.column(q, &mut w);
            self.ftran(&mut w);

            let dirf = dir as f64;
            let mut t_max = f64::INFINITY;
            let mut leave: Option<usize> = None; // slot in basis
            for k in 0..self.m {
                let delta = -dirf * w[k]; // d x_Bk / dt
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[k];
                let xv = self.value[bj];
                let room = if delta > 0.0 {
                    if self.hi[bj].is_finite() {
                        (self.hi[bj] - xv) / delta
                    } else {
                        continue;
                    }
                } else if self.lo[bj].is_finite() {
                    (self.lo[bj] - xv) / delta
                } else {
                    continue;
                };
                let room = room.max(0.0);
                let replace = match leave {
                    None => true,
                    Some(cur) => {
                        let tie = (room - t_max).abs() <= 1e-12 * (1.0 + t_max.abs());
                        room < t_max - 1e-12 || (tie && self.basis[k] < self.basis[cur])
                    }
                };
                if replace {
                    t_max = t_max.min(room);
                    leave = Some(k);
                }
            }
            // bound flip of the entering variable itself
            let flip = self.hi[q] - self.lo[q];
            let use_flip = flip.is_finite() && flip <= t_max + 1e-12;

            let step = if use_flip { flip } else { t_max };
            if step.is_infinite() {
                return IterOutcome::Unbounded;
            }

            // apply the move
            if step != 0.0 {
                for k in 0..self.m {
                    let bj = self.basis[k];
                    self.value[bj] -= dirf * step * w[k];
                }
                self.value[q] += dirf * step;
            }

            if step <= 1e-11 {
                self.degen_streak += 1;
                if self.degen_streak > STALL_THRESHOLD {
                    self.bland = true;
                }
            } else {
                self.degen_streak = 0;
                self.bland = false;
            }

            if use_flip {
                // entering variable flipped to its other bound; basis unchanged
                continue;
            }

            let r = leave.expect("finite step without leaving variable");
            let out_var = self.basis[r];
            // snap the leaving variable exactly onto its bound
            let delta_r = -dirf * w[r];
            self.value[out_var] = if delta_r > 0.0 { self.hi[out_var] } else { self.lo[out_var] };
            self.in_basis[out_var] = false;
            if out_var >= self.n + self.m {
                // artificials never re-enter
                self.lo[out_var] = 0.0;
                self.hi[out_var] = 0.0;
                self.value[out_var] = 0.0;
            }
            self.in_basis[q] = true;
            self.basis[r] = q;

            if w[r].abs() <= PIVOT_TOL {
                if !self.refactor() {
                    return IterOutcome::Breakdown("singular basis after pivot".into());
                }
                continue;
            }
            self.etas.push(Eta { r, w });
            self.pivots_since_refactor += 1;
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                if !self.refactor() {
                    return IterOutcome::Breakdown("singular basis at refactor".into());
                }
            }
        }
    }

    fn finish(&mut self, status: LpStatus) -> LpSolution {
        // refresh basics for an accurate extraction
        if self.lu.is_some() {
            self.recompute_basics();
        }
        let mut y = vec![0.0; self.m];
        for k in 0..self.m {
            y[k] = self.cost2[self.basis[k]];
        }
        self.btran(&mut y);
        let mut reduced = vec![0.0; self.n];
        for j in 0..self.n {
            let mut ay = 0.0;
            for i in 0..self.m {
                ay += y[i] * self.lp.rows[i][j];
            }
            reduced[j] = self.lp.objective[j] - ay;
        }
        let primal: Vec<f64> = self.value[..self.n].to_vec();
        let objective: f64 = primal
            .iter()
            .zip(&self.lp.objective)
            .map(|(x, c)| x * c)
            .sum();
        let mut status = status;
        if status == LpStatus::Optimal {
            // enforce the advertised invariants; degrade loudly, never silently
            let feas = self.primal_infeasibility();
            let cs = self.complementarity_residual(&y);
            let scale = 1.0 + self.rhs_scale();
            if feas > self.feas_tol * scale || cs > self.feas_tol * (1.0 + objective.abs()).max(scale)
            {
                status = LpStatus::IterLimit;
                self.note = Some(format!(
                    "numerical breakdown: feasibility residual {feas:.3e}, complementarity residual {cs:.3e}"
                ));
            }
        }
        LpSolution {
            status,
            primal,
            duals: y,
            reduced_costs: reduced,
            objective,
            iterations: self.iterations,
            note: self.note.clone(),
        }
    }

    fn complementarity_residual(&self, y: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m {
            let mut ax = 0.0;
            for j in 0..self.n {
                ax += self.lp.rows[i][j] * self.value[j];
            }
            let slack = self.lp.rhs[i] - ax;
            worst = worst.max((y[i] * slack).abs() / (1.0 + y[i].abs()));
        }
        worst
    }

    fn breakdown(&mut self, msg: &str) -> LpSolution {
        self.note = Some(msg.to_string());
        self.finish(LpStatus::IterLimit)
    }
}

enum IterOutcome {
    Optimal,
    Unbounded,
    IterLimit,
    Breakdown(String),
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() && hi.is_finite() {
        if lo.abs() <= hi.abs() {
            lo
        } else {
            hi
        }
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}
