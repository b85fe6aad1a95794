//! The outer solve loop: cutting-plane primal updates alternating with
//! proximal dual updates.
//!
//! Each iteration solves a master LP over the leader variables in which the
//! worst-case expectation term is replaced by its accumulated affine
//! under-estimators (the cutting-plane model) and the per-sample follower
//! values by Benders-style cuts from dual-feasible multipliers. The
//! supremum is then evaluated exactly at the new primal point through the
//! Wasserstein dual block, which yields the next cut, the per-sample
//! epigraph values, and the dual gradient; the Wasserstein multiplier is
//! updated by the proximal step (the box prox with the implicit gradient at
//! the prox-point, so fixed points of the update are exact minimizers of
//! the dual function). Follower subproblems go through their KKT systems
//! under the configured complementarity strategy.
//!
//! Reported bounds: `upper` is the incumbent (best true objective so far,
//! non-increasing by construction), `lower` the cut-model bound (valid
//! because every retained cut under-estimates its term), and the gap
//! between them certifies optimality at termination.

use crate::kkt::{
    self, network_follower, solve_network_follower, KktError, NetworkLeader, RelaxAnchors,
};
use crate::problem::{
    AmbiguitySet, FollowerDecision, LeaderDecision, NetworkInstance, ProblemError,
    UncertaintySample,
};
use crate::simplex::{self, solve_box_qp_prox, LinearProgram, LpStatus, RowSense};
use crate::wasserstein::{self, DroError, SeparableLoss};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Kkt(#[from] KktError),
    #[error(transparent)]
    Dro(#[from] DroError),
    #[error("subsolver failure at iteration {iteration}: {message}\n--- failing LP ---\n{dump}")]
    Subsolver {
        iteration: usize,
        message: String,
        dump: String,
    },
    #[error("ambiguity set has dimension {amb}, instance has {inst} nodes")]
    DimensionMismatch { amb: usize, inst: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Exact per-sample KKT points from optimal bases (active-set route).
    Enumerate,
    /// Penalty relaxation of complementarity driven by the τ schedule.
    Relax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EtaSchedule {
    Constant(f64),
    /// η₀/√t.
    InverseSqrt(f64),
}

impl EtaSchedule {
    fn at(&self, t: usize) -> f64 {
        match *self {
            EtaSchedule::Constant(e) => e,
            EtaSchedule::InverseSqrt(e) => e / (t as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Termination tolerance on the residuals and the cut-model gap.
    pub tolerance: f64,
    pub max_iters: usize,
    pub eta: EtaSchedule,
    pub tau_initial: f64,
    pub tau_decay: f64,
    pub tau_min: f64,
    pub strategy: Strategy,
    pub feas_tol: f64,
    /// Drop a cut after this many consecutive inactive iterations.
    pub cut_drop_after: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-6,
            max_iters: 500,
            eta: EtaSchedule::Constant(0.5),
            tau_initial: 1.0,
            tau_decay: 0.1,
            tau_min: 1e-8,
            strategy: Strategy::Relax,
            feas_tol: simplex::DEFAULT_FEAS_TOL,
            cut_drop_after: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    ResidualsBelowTol,
    IterLimit,
    SubsolverFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Incumbent true objective (non-increasing).
    pub upper: f64,
    /// Cut-model lower bound (non-decreasing).
    pub lower: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub lambda: f64,
    pub mu_norm: f64,
    pub tau: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: Vec<IterationRecord>,
    pub termination: TerminationReason,
    /// Incumbent objective value.
    pub objective: f64,
    pub leader: LeaderDecision,
    /// Per-sample follower responses at the incumbent.
    pub followers: Vec<FollowerDecision>,
    pub lambda: f64,
    /// Per-sample inequality multipliers (cap rows then service rows).
    pub multipliers: Vec<Vec<f64>>,
    pub failure: Option<String>,
}

impl SolverReport {
    /// One CSV row per iteration:
    /// `iter,upper,lower,primal_res,dual_res,lambda,mu_norm,tau,ms`.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("iter,upper,lower,primal_res,dual_res,lambda,mu_norm,tau,ms\n");
        for r in &self.iterations {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.iter,
                r.upper,
                r.lower,
                r.primal_res,
                r.dual_res,
                r.lambda,
                r.mu_norm,
                r.tau,
                r.wall_ms
            ));
        }
        out
    }

    pub fn gap(&self) -> f64 {
        self.iterations
            .last()
            .map(|r| (r.upper - r.lower).max(0.0))
            .unwrap_or(f64::INFINITY)
    }
}

/// Residuals of a recorded iteration (primal, dual).
pub fn residuals(report: &SolverReport, iter_index: usize) -> Option<(f64, f64)> {
    report
        .iterations
        .get(iter_index)
        .map(|r| (r.primal_res, r.dual_res))
}

// ── cut pool ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct Cut {
    constant: f64,
    x_coefs: Vec<f64>,
    y_coefs: Vec<f64>,
    last_active: usize,
}

impl Cut {
    fn value_at(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v = self.constant;
        for (c, xv) in self.x_coefs.iter().zip(x) {
            v += c * xv;
        }
        for (c, yv) in self.y_coefs.iter().zip(y) {
            v += c * yv;
        }
        v
    }

    fn close_to(&self, other: &Cut) -> bool {
        let tol = 1e-11;
        (self.constant - other.constant).abs() <= tol * (1.0 + self.constant.abs())
            && self
                .x_coefs
                .iter()
                .zip(&other.x_coefs)
                .all(|(a, b)| (a - b).abs() <= tol * (1.0 + a.abs()))
            && self
                .y_coefs
                .iter()
                .zip(&other.y_coefs)
                .all(|(a, b)| (a - b).abs() <= tol * (1.0 + a.abs()))
    }
}

struct CutPool {
    sup_cuts: Vec<Cut>,
    follower_cuts: Vec<Vec<Cut>>, // per sample
}

impl CutPool {
    fn add_sup(&mut self, cut: Cut) {
        if !self.sup_cuts.iter().any(|c| c.close_to(&cut)) {
            self.sup_cuts.push(cut);
        }
    }

    fn add_follower(&mut self, sample: usize, cut: Cut) {
        if !self.follower_cuts[sample].iter().any(|c| c.close_to(&cut)) {
            self.follower_cuts[sample].push(cut);
        }
    }

    fn drop_stale(&mut self, iter: usize, keep_for: usize) {
        self.sup_cuts
            .retain(|c| iter.saturating_sub(c.last_active) < keep_for);
        for cuts in &mut self.follower_cuts {
            cuts.retain(|c| iter.saturating_sub(c.last_active) < keep_for);
        }
    }
}

// ── per-sample subproblem ────────────────────────────────────────────────

struct SampleSolve {
    decision: FollowerDecision,
    served: Vec<f64>,
    /// Follower objective value at the returned point.
    value: f64,
    /// Dual objective at the returned multipliers (cut constant base).
    dual_value: f64,
    mu_cap: Vec<f64>,
    sigma: Vec<f64>,
    pi: Vec<f64>,
    max_violation: f64,
    comp_residual: f64,
}

/// Arithmetic KKT check for the network follower: feasibility, stationarity
/// slacks (the multipliers of v ≥ 0), and the complementarity residual.
fn check_network_kkt(
    inst: &NetworkInstance,
    xi: &UncertaintySample,
    cover: &[f64],
    s: &SampleSolve,
) -> (f64, f64) {
    let n = inst.node_count;
    let mut viol = 0.0f64;
    let mut comp = 0.0f64;
    // flows per node
    let mut net_out = vec![0.0; n];
    for (k, &(tail, head)) in inst.arcs.iter().enumerate() {
        net_out[tail] += s.decision.flow[k];
        net_out[head] -= s.decision.flow[k];
    }
    for i in 0..n {
        let resid = xi.demand[i] - cover[i];
        // balance: net_out − z + w = 0
        viol = viol.max((net_out[i] - s.decision.allocation[i] + s.served[i]).abs());
        // service: w ≥ resid
        let srv_slack = s.served[i] - resid;
        viol = viol.max(-srv_slack);
        // cap: z ≤ d
        let cap_slack = xi.demand[i] - s.decision.allocation[i];
        viol = viol.max(-cap_slack);
        viol = viol.max(-s.decision.allocation[i]);
        viol = viol.max(-s.served[i]);
        // stationarity slacks
        let nu_z = inst.alloc_cost[i] + s.mu_cap[i] - s.pi[i];
        let nu_w = -s.sigma[i] + s.pi[i];
        viol = viol.max(-nu_z).max(-nu_w);
        comp = comp.max(s.decision.allocation[i].max(0.0).min(nu_z.max(0.0)));
        comp = comp.max(s.served[i].max(0.0).min(nu_w.max(0.0)));
        comp = comp.max(s.mu_cap[i].max(0.0).min(cap_slack.max(0.0)));
        comp = comp.max(s.sigma[i].max(0.0).min(srv_slack.max(0.0)));
    }
    for (k, &(tail, head)) in inst.arcs.iter().enumerate() {
        let nu_f = inst.flow_cost[k] + s.pi[tail] - s.pi[head];
        viol = viol.max(-nu_f).max(-s.decision.flow[k]);
        comp = comp.max(s.decision.flow[k].max(0.0).min(nu_f.max(0.0)));
    }
    (viol, comp)
}

fn follower_dual_value(
    inst: &NetworkInstance,
    xi: &UncertaintySample,
    cover: &[f64],
    mu_cap: &[f64],
    sigma: &[f64],
) -> f64 {
    let mut v = 0.0;
    for i in 0..inst.node_count {
        v -= mu_cap[i] * xi.demand[i];
        v += sigma[i] * (xi.demand[i] - cover[i]);
    }
    v
}

fn solve_sample(
    inst: &NetworkInstance,
    xi: &UncertaintySample,
    x: &LeaderDecision,
    cover: &[f64],
    strategy: Strategy,
    tau: f64,
    feas_tol: f64,
) -> Result<SampleSolve, KktError> {
    let mut out = match strategy {
        Strategy::Enumerate => {
            let fs = solve_network_follower(inst, xi, x, feas_tol)?;
            SampleSolve {
                value: fs.objective,
                dual_value: 0.0,
                decision: fs.decision,
                served: fs.served,
                mu_cap: fs.mu_cap,
                sigma: fs.sigma,
                pi: fs.pi,
                max_violation: 0.0,
                comp_residual: 0.0,
            }
        }
        Strategy::Relax => {
            let f = network_follower(inst, xi, NetworkLeader::Fixed(x));
            let sys = kkt::build_kkt(&f)?;
            // two penalty passes: pure relaxation, then re-anchored
            let mut anchors = RelaxAnchors::zeros(sys.block.pairs.len());
            let mut point: Option<Vec<f64>> = None;
            for _ in 0..2 {
                let (lp, _) = kkt::relax_on(&sys.lp, &sys.block.pairs, tau, &anchors)?;
                let sol = simplex::solve_lp(&lp, feas_tol, 100_000)
                    .map_err(|e| KktError::Subsolver(e.to_string()))?;
                if sol.status != LpStatus::Optimal {
                    return Err(KktError::Subsolver(format!(
                        "relaxed follower pass terminated with {:?}",
                        sol.status
                    )));
                }
                anchors = RelaxAnchors::from_point(&sys.lp, &sys.block.pairs, &sol.primal);
                let res = kkt::complementarity_residual(&sys.lp, &sys.block.pairs, &sol.primal);
                point = Some(sol.primal);
                if res <= 1e-9 {
                    break;
                }
            }
            let p = point.expect("at least one relaxation pass");
            let n = inst.node_count;
            let na = inst.num_arcs();
            let b = &sys.block;
            let value: f64 = p
                .iter()
                .zip(&sys.lp.objective)
                .map(|(v, c)| v * c)
                .sum();
            SampleSolve {
                value,
                dual_value: 0.0,
                decision: FollowerDecision {
                    allocation: (0..n).map(|i| p[b.vars[i]]).collect(),
                    flow: (0..na).map(|k| p[b.vars[2 * n + k]]).collect(),
                },
                served: (0..n).map(|i| p[b.vars[n + i]]).collect(),
                mu_cap: (0..n).map(|i| p[b.ineq_duals[i]]).collect(),
                sigma: (0..n).map(|i| p[b.ineq_duals[n + i]]).collect(),
                pi: (0..n).map(|i| p[b.eq_duals[i]]).collect(),
                max_violation: 0.0,
                comp_residual: 0.0,
            }
        }
    };
    let (viol, comp) = check_network_kkt(inst, xi, cover, &out);
    out.max_violation = viol;
    out.comp_residual = comp;
    out.dual_value = follower_dual_value(inst, xi, cover, &out.mu_cap, &out.sigma);
    Ok(out)
}

// ── the loop ─────────────────────────────────────────────────────────────

/// Runs the solve loop on an instance under a Wasserstein ambiguity set.
pub fn solve(
    inst: &NetworkInstance,
    amb: &AmbiguitySet,
    cfg: &SolverConfig,
) -> Result<SolverReport, SolverError> {
    inst.validate()?;
    amb.validate()?;
    if amb.dim() != inst.node_count {
        return Err(SolverError::DimensionMismatch {
            amb: amb.dim(),
            inst: inst.node_count,
        });
    }
    let started = Instant::now();
    let n = inst.node_count;
    let na = inst.num_arcs();
    let samples = &amb.center.samples;
    let nsamples = samples.len();

    // η normalization to unit cost scale
    let cost_scale = inst
        .penalty_cost
        .iter()
        .chain(&inst.inventory_cost)
        .chain(&inst.alloc_cost)
        .fold(1.0f64, |a, &b| a.max(b));

    let mut pool = CutPool {
        sup_cuts: Vec::new(),
        follower_cuts: vec![Vec::new(); nsamples],
    };
    let mut lambda = 0.0f64;
    let mut prev_dual: Option<(f64, Vec<f64>)> = None;
    let mut lower_best = f64::NEG_INFINITY;
    let mut incumbent: Option<(f64, LeaderDecision, Vec<FollowerDecision>, Vec<Vec<f64>>, f64)> =
        None;
    let mut tau = cfg.tau_initial;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut termination = TerminationReason::IterLimit;
    let mut failure = None;

    for t in 1..=cfg.max_iters {
        let iter_start = Instant::now();
        let eta = cfg.eta.at(t) / cost_scale;

        // primal update: master LP over (x, y, θ_i, Θ) with the linearized
        // supremum term and the follower cuts
        let mut master = LinearProgram::new(0);
        let x_cols: Vec<usize> = (0..n)
            .map(|i| master.add_var(inst.inventory_cost[i], 0.0, inst.storage_cap[i]))
            .collect();
        let y_cols: Vec<usize> = (0..na)
            .map(|k| master.add_var(inst.transport_cost[k], 0.0, inst.transport_cap[k]))
            .collect();
        let theta_cols: Vec<usize> = (0..nsamples)
            .map(|_| master.add_var(1.0 / nsamples as f64, 0.0, f64::INFINITY))
            .collect();
        let sup_col = master.add_var(1.0, 0.0, f64::INFINITY);
        let mut sup_rows = Vec::with_capacity(pool.sup_cuts.len());
        for cut in &pool.sup_cuts {
            let mut entries: Vec<(usize, f64)> = vec![(sup_col, 1.0)];
            for (j, &c) in cut.x_coefs.iter().enumerate() {
                if c != 0.0 {
                    entries.push((x_cols[j], -c));
                }
            }
            for (k, &c) in cut.y_coefs.iter().enumerate() {
                if c != 0.0 {
                    entries.push((y_cols[k], -c));
                }
            }
            sup_rows.push(master.add_row_sparse(&entries, RowSense::Ge, cut.constant));
        }
        let mut follower_rows: Vec<Vec<usize>> = Vec::with_capacity(nsamples);
        for (i, cuts) in pool.follower_cuts.iter().enumerate() {
            let mut rows = Vec::with_capacity(cuts.len());
            for cut in cuts {
                let mut entries: Vec<(usize, f64)> = vec![(theta_cols[i], 1.0)];
                for (j, &c) in cut.x_coefs.iter().enumerate() {
                    if c != 0.0 {
                        entries.push((x_cols[j], -c));
                    }
                }
                for (k, &c) in cut.y_coefs.iter().enumerate() {
                    if c != 0.0 {
                        entries.push((y_cols[k], -c));
                    }
                }
                rows.push(master.add_row_sparse(&entries, RowSense::Ge, cut.constant));
            }
            follower_rows.push(rows);
        }

        let master_sol = simplex::solve_lp(&master, cfg.feas_tol, 200_000).map_err(|e| {
            SolverError::Subsolver {
                iteration: t,
                message: e.to_string(),
                dump: master.dump(),
            }
        })?;
        if master_sol.status != LpStatus::Optimal {
            failure = Some(format!("master LP terminated with {:?}", master_sol.status));
            termination = TerminationReason::SubsolverFailure;
            if records.is_empty() {
                return Err(SolverError::Subsolver {
                    iteration: t,
                    message: failure.clone().unwrap(),
                    dump: master.dump(),
                });
            }
            break;
        }
        let master_value = master_sol.objective;
        let x_t = LeaderDecision {
            inventory: x_cols.iter().map(|&c| master_sol.primal[c]).collect(),
            shipment: y_cols.iter().map(|&c| master_sol.primal[c]).collect(),
        };
        let cover = inst.coverage(&x_t);

        // cut activity bookkeeping at the master optimum
        let act_tol = 1e-7 * (1.0 + master_value.abs());
        let xs = &x_t.inventory;
        let ys = &x_t.shipment;
        for (cut, _row) in pool.sup_cuts.iter_mut().zip(&sup_rows) {
            if master_sol.primal[sup_col] - cut.value_at(xs, ys) <= act_tol {
                cut.last_active = t;
            }
        }
        for (i, cuts) in pool.follower_cuts.iter_mut().enumerate() {
            for cut in cuts.iter_mut() {
                if master_sol.primal[theta_cols[i]] - cut.value_at(xs, ys) <= act_tol {
                    cut.last_active = t;
                }
            }
        }

        // follower subproblems (Eq. (3)–(5) blocks under the strategy)
        let mut follower_avg = 0.0;
        let mut max_violation = 0.0f64;
        let mut comp_residual = 0.0f64;
        let mut followers = Vec::with_capacity(nsamples);
        let mut multipliers = Vec::with_capacity(nsamples);
        let mut mu_stack: Vec<f64> = Vec::with_capacity(nsamples * 2 * n);
        for (i, xi) in samples.iter().enumerate() {
            let s = solve_sample(inst, xi, &x_t, &cover, cfg.strategy, tau, cfg.feas_tol)
                .map_err(|e| SolverError::Subsolver {
                    iteration: t,
                    message: format!("sample {i}: {e}"),
                    dump: String::new(),
                })?;
            follower_avg += s.value / nsamples as f64;
            max_violation = max_violation.max(s.max_violation);
            comp_residual = comp_residual.max(s.comp_residual);

            // Benders cut from the dual objective: θ_i ≥ −μ·d + σ·(d − x − y_in)
            let mut xco = vec![0.0; n];
            for j in 0..n {
                xco[j] = -s.sigma[j];
            }
            let mut yco = vec![0.0; na];
            for (k, &(_, head)) in inst.arcs.iter().enumerate() {
                yco[k] = -s.sigma[head];
            }
            let mut constant = s.dual_value;
            for j in 0..n {
                constant -= xco[j] * x_t.inventory[j];
            }
            for k in 0..na {
                constant -= yco[k] * x_t.shipment[k];
            }
            pool.add_follower(
                i,
                Cut {
                    constant,
                    x_coefs: xco,
                    y_coefs: yco,
                    last_active: t,
                },
            );

            mu_stack.extend_from_slice(&s.mu_cap);
            mu_stack.extend_from_slice(&s.sigma);
            let mut mults = s.mu_cap.clone();
            mults.extend_from_slice(&s.sigma);
            multipliers.push(mults);
            followers.push(s.decision);
        }

        // supremum evaluation at the new primal point
        let loss = kkt::penalty_loss_fixed(inst, &x_t);
        let eval = wasserstein::evaluate_worst_case(&loss, amb)?;
        let sup_cut = supremum_cut(inst, &x_t, &eval, t);
        let cut_tightness = sup_cut.value_at(&x_t.inventory, &x_t.shipment);
        debug_assert!(
            (cut_tightness - eval.value).abs() <= 1e-6 * (1.0 + eval.value.abs()),
            "supremum cut not tight at its origin: {} vs {}",
            cut_tightness,
            eval.value
        );
        pool.add_sup(sup_cut);

        // true objective and incumbent
        let det_cost: f64 = x_t
            .inventory
            .iter()
            .zip(&inst.inventory_cost)
            .map(|(v, c)| v * c)
            .sum::<f64>()
            + x_t
                .shipment
                .iter()
                .zip(&inst.transport_cost)
                .map(|(v, c)| v * c)
                .sum::<f64>();
        let objective = det_cost + follower_avg + eval.value;
        let improved = incumbent
            .as_ref()
            .map_or(true, |(best, ..)| objective < best - 1e-12);
        if improved {
            incumbent = Some((objective, x_t.clone(), followers, multipliers, eval.lambda));
        }
        let upper = incumbent.as_ref().map(|(v, ..)| *v).unwrap();

        lower_best = lower_best.max(master_value);
        let gap = (upper - lower_best).max(0.0);

        // proximal dual update on λ: prox-point via the implicit gradient
        let prox_grad = {
            let lambda_next = prox_point_lambda(&loss, amb, lambda, eta)?;
            (lambda - lambda_next) / eta
        };
        let lambda_next = solve_box_qp_prox(&[lambda], &[prox_grad], eta, &[0.0])
            .map_err(|e| SolverError::Subsolver {
                iteration: t,
                message: e.to_string(),
                dump: String::new(),
            })?[0];

        // residuals
        let primal_res = max_violation.max(comp_residual) + gap;
        let dual_res = match &prev_dual {
            None => {
                let dl = lambda_next - lambda;
                let dm: f64 = mu_stack.iter().map(|m| m * m).sum::<f64>();
                ((dl * dl + dm).sqrt() / eta).max(f64::MIN_POSITIVE)
            }
            Some((pl, pm)) => {
                let dl = lambda_next - *pl;
                let dm: f64 = mu_stack
                    .iter()
                    .zip(pm)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (dl * dl + dm).sqrt() / eta
            }
        };
        let mu_norm = mu_stack.iter().map(|m| m * m).sum::<f64>().sqrt();
        prev_dual = Some((lambda_next, mu_stack));
        lambda = lambda_next;

        records.push(IterationRecord {
            iter: t,
            upper,
            lower: lower_best,
            primal_res,
            dual_res,
            lambda,
            mu_norm,
            tau,
            wall_ms: iter_start.elapsed().as_secs_f64() * 1e3,
        });

        pool.drop_stale(t, cfg.cut_drop_after);
        tau = (tau * cfg.tau_decay).max(cfg.tau_min);

        let feasible = max_violation <= cfg.feas_tol * 10.0;
        if (primal_res.max(dual_res) < cfg.tolerance && feasible)
            || (gap < cfg.tolerance && feasible && comp_residual <= cfg.tolerance)
        {
            termination = TerminationReason::ResidualsBelowTol;
            break;
        }
    }

    let (objective, leader, followers, multipliers, inc_lambda) = incumbent.ok_or_else(|| {
        SolverError::Subsolver {
            iteration: 0,
            message: "no iterate produced".into(),
            dump: String::new(),
        }
    })?;
    let _ = started;
    Ok(SolverReport {
        iterations: records,
        termination,
        objective,
        leader,
        followers,
        lambda: inc_lambda,
        multipliers,
        failure,
    })
}

/// Affine under-estimator of the supremum term from the certified
/// worst-case distribution: freeze per-scenario piece choices and worst
/// points, so the cut is exact at the generating decision and below the
/// true supremum everywhere.
fn supremum_cut(
    inst: &NetworkInstance,
    x_t: &LeaderDecision,
    eval: &wasserstein::WorstCaseEval,
    iter: usize,
) -> Cut {
    let n = inst.node_count;
    let na = inst.num_arcs();
    let nsamples = eval.scenarios.len();
    let mut constant = 0.0;
    let mut x_coefs = vec![0.0; n];
    let mut y_coefs = vec![0.0; na];
    for sample_mix in &eval.scenarios {
        for s in sample_mix {
            let w = s.weight / nsamples as f64;
            for ch in &s.choices {
                // per-term pieces: index 0 is the zero piece, 1 the penalty
                if ch.piece == 1 {
                    let j = ch.coords[0].0;
                    let xi_star = ch.coords[0].1;
                    let p = inst.penalty_cost[j];
                    constant += w * p * xi_star;
                    x_coefs[j] -= w * p;
                    for (k, &(_, head)) in inst.arcs.iter().enumerate() {
                        if head == j {
                            y_coefs[k] -= w * p;
                        }
                    }
                }
            }
        }
    }
    let _ = x_t;
    Cut {
        constant,
        x_coefs,
        y_coefs,
        last_active: iter,
    }
}

/// Exact proximal point of the dual function at anchor `center`:
/// `argmin_{λ ≥ 0} D(λ) + (λ − center)²/(2η)`, found by monotone bisection
/// on the optimality inclusion.
fn prox_point_lambda(
    loss: &SeparableLoss,
    amb: &AmbiguitySet,
    center: f64,
    eta: f64,
) -> Result<f64, DroError> {
    let grad = |lam: f64| -> Result<f64, DroError> {
        let (_, g, _) = wasserstein::dual_function(loss, amb, lam)?;
        Ok(g)
    };
    // h(λ) = (λ − center)/η + D'(λ) is strictly increasing
    let h0 = -center / eta + grad(0.0)?;
    if h0 >= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0f64;
    let mut hi = (loss.max_dual_norm() + 1e-9).max(center);
    // D'(λ) = ε ≥ 0 beyond the max slope, so h(hi) ≥ (hi−center)/η ≥ 0
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (mid - center) / eta + grad(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
