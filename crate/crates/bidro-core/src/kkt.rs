//! KKT systems for linear followers and the single-level MPEC assembly.
//!
//! A follower `min c·v s.t. G v ≤ g, E v = e, v ≥ 0` is replaced by its KKT
//! conditions: stationarity rows `c + Gᵀμ + Eᵀπ ≥ 0` (the slack is the
//! multiplier of `v ≥ 0` and pairs with `v`), primal feasibility rows, the
//! multiplier bounds `μ ≥ 0`, and the complementarity pairs. Everything but
//! complementarity is linear, so the assembled program is an LP plus a pair
//! list; two strategies handle the pairs:
//!
//! - [`enumerate_complementarity`] — exact search over the active-set
//!   dichotomies (`μ_j = 0` vs `k_j = 0`) with relaxation pruning and a
//!   complementarity repair step at the root; the test oracle.
//! - [`relax_complementarity`] / [`solve_relaxation_path`] — a τ-weighted
//!   linear penalty on the complementarity products `μ_j·slack_j`,
//!   linearized at an anchor and re-anchored as τ decreases. For linear
//!   programs the penalty is exact at finite τ, so the path terminates with
//!   exact complementarity on well-posed instances.
//!
//! The scenario's follower (allocation capped by realized demand, served
//! residual demand, arc flows, node balance) is concretized by
//! [`network_follower`] and always admits the zero decision.

use crate::problem::{
    AmbiguitySet, FollowerDecision, LeaderDecision, NetworkInstance, UncertaintySample,
};
use crate::simplex::{self, LinearProgram, LpSolution, LpStatus, RowSense};
use crate::wasserstein::{append_dro_block, DroBlock, LossPiece, PiecewiseAffineLoss, SeparableLoss};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KktError {
    #[error("follower data is not finite/affine: {0}")]
    BadFollower(String),
    #[error("{pairs} complementarity pairs exceed the enumeration limit {limit}")]
    TooManyPairs { pairs: usize, limit: usize },
    #[error("every complementarity branch is infeasible")]
    AllBranchesInfeasible,
    #[error("relaxation parameter must be positive, got {0}")]
    BadTau(f64),
    #[error("subsolver failed: {0}")]
    Subsolver(String),
    #[error("dro block failed: {0}")]
    Dro(#[from] crate::wasserstein::DroError),
}

/// One complementarity pair: a nonnegative LP column and a row whose slack
/// it multiplies (`var · slack(row) = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplementarityPair {
    pub var: usize,
    pub row: usize,
}

/// A linear follower constraint with an affine right-hand side: the
/// `rhs_ambient` part references columns of the ambient LP (leader
/// variables) and is moved onto the left-hand side at emission.
#[derive(Debug, Clone)]
pub struct FollowerConstraint {
    pub coeffs: Vec<f64>,
    pub rhs_constant: f64,
    pub rhs_ambient: Vec<(usize, f64)>,
}

impl FollowerConstraint {
    pub fn fixed(coeffs: Vec<f64>, rhs: f64) -> Self {
        FollowerConstraint {
            coeffs,
            rhs_constant: rhs,
            rhs_ambient: Vec::new(),
        }
    }
}

/// Follower LP `min c·v  s.t.  G v ≤ g,  E v = e,  v ≥ 0`.
#[derive(Debug, Clone)]
pub struct FollowerLp {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub ineq: Vec<FollowerConstraint>,
    pub eq: Vec<FollowerConstraint>,
}

impl FollowerLp {
    pub fn validate(&self) -> Result<(), KktError> {
        if self.objective.len() != self.num_vars {
            return Err(KktError::BadFollower(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.num_vars
            )));
        }
        for c in self.ineq.iter().chain(&self.eq) {
            if c.coeffs.len() != self.num_vars {
                return Err(KktError::BadFollower(format!(
                    "constraint has {} coefficients for {} variables",
                    c.coeffs.len(),
                    self.num_vars
                )));
            }
            if !c.rhs_constant.is_finite()
                || c.coeffs.iter().any(|v| !v.is_finite())
                || c.rhs_ambient.iter().any(|(_, v)| !v.is_finite())
            {
                return Err(KktError::BadFollower("non-finite coefficient".into()));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(KktError::BadFollower("non-finite objective".into()));
        }
        Ok(())
    }
}

/// Column/row map of one follower block emitted into an LP.
#[derive(Debug, Clone)]
pub struct KktBlock {
    /// Follower variable columns, in the follower's ordering.
    pub vars: Vec<usize>,
    /// μ columns for the inequality rows (bounds give μ ≥ 0).
    pub ineq_duals: Vec<usize>,
    /// π columns for the equality rows (free).
    pub eq_duals: Vec<usize>,
    pub stationarity_rows: Vec<usize>,
    pub ineq_rows: Vec<usize>,
    pub eq_rows: Vec<usize>,
    pub pairs: Vec<ComplementarityPair>,
}

/// The follower's KKT system as a standalone program: the follower
/// objective is kept so optimizing over the system (with complementarity
/// handled by a strategy) recovers the follower's optimum.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub lp: LinearProgram,
    pub block: KktBlock,
}

/// Emits one follower block into `lp`. With `with_kkt` the dual columns,
/// stationarity rows, and complementarity pairs are emitted too; otherwise
/// only primal feasibility. The follower objective enters with `obj_weight`.
pub fn append_kkt_block(
    lp: &mut LinearProgram,
    f: &FollowerLp,
    obj_weight: f64,
    with_kkt: bool,
) -> Result<KktBlock, KktError> {
    f.validate()?;
    let vars: Vec<usize> = (0..f.num_vars)
        .map(|r| lp.add_var(obj_weight * f.objective[r], 0.0, f64::INFINITY))
        .collect();

    let mut ineq_rows = Vec::with_capacity(f.ineq.len());
    for c in &f.ineq {
        let mut entries: Vec<(usize, f64)> = c
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(r, &v)| (vars[r], v))
            .collect();
        for &(col, coef) in &c.rhs_ambient {
            entries.push((col, -coef));
        }
        ineq_rows.push(lp.add_row_sparse(&entries, RowSense::Le, c.rhs_constant));
    }
    let mut eq_rows = Vec::with_capacity(f.eq.len());
    for c in &f.eq {
        let mut entries: Vec<(usize, f64)> = c
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(r, &v)| (vars[r], v))
            .collect();
        for &(col, coef) in &c.rhs_ambient {
            entries.push((col, -coef));
        }
        eq_rows.push(lp.add_row_sparse(&entries, RowSense::Eq, c.rhs_constant));
    }

    let mut block = KktBlock {
        vars,
        ineq_duals: Vec::new(),
        eq_duals: Vec::new(),
        stationarity_rows: Vec::new(),
        ineq_rows,
        eq_rows,
        pairs: Vec::new(),
    };
    if !with_kkt {
        return Ok(block);
    }

    block.ineq_duals = (0..f.ineq.len())
        .map(|_| lp.add_var(0.0, 0.0, f64::INFINITY))
        .collect();
    block.eq_duals = (0..f.eq.len())
        .map(|_| lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY))
        .collect();

    // stationarity per follower variable r:
    //   c_r + Σ_j G[j,r]·μ_j + Σ_m E[m,r]·π_m ≥ 0,
    // slack = multiplier of v_r ≥ 0, pairing with v_r.
    for r in 0..f.num_vars {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (j, c) in f.ineq.iter().enumerate() {
            if c.coeffs[r] != 0.0 {
                entries.push((block.ineq_duals[j], c.coeffs[r]));
            }
        }
        for (m, c) in f.eq.iter().enumerate() {
            if c.coeffs[r] != 0.0 {
                entries.push((block.eq_duals[m], c.coeffs[r]));
            }
        }
        let row = lp.add_row_sparse(&entries, RowSense::Ge, -f.objective[r]);
        block.stationarity_rows.push(row);
        block.pairs.push(ComplementarityPair {
            var: block.vars[r],
            row,
        });
    }
    for (j, &row) in block.ineq_rows.iter().enumerate() {
        block.pairs.push(ComplementarityPair {
            var: block.ineq_duals[j],
            row,
        });
    }
    Ok(block)
}

/// Builds the standalone KKT system of a follower.
pub fn build_kkt(f: &FollowerLp) -> Result<KktSystem, KktError> {
    let mut lp = LinearProgram::new(0);
    let block = append_kkt_block(&mut lp, f, 1.0, true)?;
    Ok(KktSystem { lp, block })
}

/// How the leader enters a network follower: fixed values or LP columns.
pub enum NetworkLeader<'a> {
    Fixed(&'a LeaderDecision),
    Columns { x: &'a [usize], y: &'a [usize] },
}

/// The scenario follower at a demand sample. Variables are ordered
/// `[z (allocation, n) | w (served residual, n) | f (arc flow, |A|)]`:
///
/// - allocation caps `z_i ≤ d_i(ξ)` (capacity scales with local demand),
/// - service rows `w_i ≥ d_i(ξ) − x_i − Σ_{(j,i)} y_ji`,
/// - node balance `Σ_out f − Σ_in f − z_i + w_i = 0`,
/// - objective `q·z + r·f`.
///
/// `z = w = max(0, residual)`, `f = 0` is always feasible.
pub fn network_follower(
    inst: &NetworkInstance,
    xi: &UncertaintySample,
    leader: NetworkLeader<'_>,
) -> FollowerLp {
    let n = inst.node_count;
    let na = inst.num_arcs();
    let nv = 2 * n + na;
    let mut objective = vec![0.0; nv];
    objective[..n].copy_from_slice(&inst.alloc_cost);
    objective[2 * n..].copy_from_slice(&inst.flow_cost);

    let mut ineq = Vec::with_capacity(2 * n);
    // caps: z_i ≤ d_i
    for i in 0..n {
        let mut coeffs = vec![0.0; nv];
        coeffs[i] = 1.0;
        ineq.push(FollowerConstraint::fixed(coeffs, xi.demand[i]));
    }
    // service: −w_i ≤ −(d_i − x_i − Σ_in y)
    for i in 0..n {
        let mut coeffs = vec![0.0; nv];
        coeffs[n + i] = -1.0;
        let mut c = FollowerConstraint::fixed(coeffs, -xi.demand[i]);
        match leader {
            NetworkLeader::Fixed(ld) => {
                c.rhs_constant += ld.inventory[i];
                for (k, &(_, head)) in inst.arcs.iter().enumerate() {
                    if head == i {
                        c.rhs_constant += ld.shipment[k];
                    }
                }
            }
            NetworkLeader::Columns { x, y } => {
                c.rhs_ambient.push((x[i], 1.0));
                for (k, &(_, head)) in inst.arcs.iter().enumerate() {
                    if head == i {
                        c.rhs_ambient.push((y[k], 1.0));
                    }
                }
            }
        }
        ineq.push(c);
    }
    // balance: Σ_out f − Σ_in f − z_i + w_i = 0
    let mut eq = Vec::with_capacity(n);
    for i in 0..n {
        let mut coeffs = vec![0.0; nv];
        coeffs[i] = -1.0;
        coeffs[n + i] = 1.0;
        for (k, &(tail, head)) in inst.arcs.iter().enumerate() {
            if tail == i {
                coeffs[2 * n + k] += 1.0;
            }
            if head == i {
                coeffs[2 * n + k] -= 1.0;
            }
        }
        eq.push(FollowerConstraint::fixed(coeffs, 0.0));
    }

    FollowerLp {
        num_vars: nv,
        objective,
        ineq,
        eq,
    }
}

/// Solves one network follower at a fixed leader decision: an exact KKT
/// point extracted from the optimal simplex basis (primal, multipliers, and
/// complementarity all at LP accuracy).
pub struct FollowerSolve {
    pub decision: FollowerDecision,
    pub served: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the cap rows, service rows, balance rows.
    pub mu_cap: Vec<f64>,
    pub sigma: Vec<f64>,
    pub pi: Vec<f64>,
}

pub fn solve_network_follower(
    inst: &NetworkInstance,
    xi: &UncertaintySample,
    x: &LeaderDecision,
    feas_tol: f64,
) -> Result<FollowerSolve, KktError> {
    let f = network_follower(inst, xi, NetworkLeader::Fixed(x));
    let mut lp = LinearProgram::new(0);
    let block = append_kkt_block(&mut lp, &f, 1.0, false)?;
    let sol = simplex::solve_lp(&lp, feas_tol, 50_000)
        .map_err(|e| KktError::Subsolver(e.to_string()))?;
    if sol.status != LpStatus::Optimal {
        return Err(KktError::Subsolver(format!(
            "follower LP terminated with {:?}\n{}",
            sol.status,
            lp.dump()
        )));
    }
    let n = inst.node_count;
    let na = inst.num_arcs();
    let v = &sol.primal;
    // row duals: caps are rows 0..n (Le ⇒ duals ≤ 0 under the subsolver's
    // convention; KKT μ = −dual), service n..2n (Le with −w ⇒ σ = −dual),
    // balance 2n..3n (free)
    let mu_cap: Vec<f64> = (0..n).map(|i| (-sol.duals[block.ineq_rows[i]]).max(0.0)).collect();
    let sigma: Vec<f64> = (0..n)
        .map(|i| (-sol.duals[block.ineq_rows[n + i]]).max(0.0))
        .collect();
    let pi: Vec<f64> = (0..n).map(|i| -sol.duals[block.eq_rows[i]]).collect();
    Ok(FollowerSolve {
        decision: FollowerDecision {
            allocation: v[block.vars[0]..block.vars[0] + n].to_vec(),
            flow: v[block.vars[2 * n]..block.vars[2 * n] + na].to_vec(),
        },
        served: v[block.vars[n]..block.vars[n] + n].to_vec(),
        objective: sol.objective,
        mu_cap,
        sigma,
        pi,
    })
}

// ── the single-level MPEC ────────────────────────────────────────────────

/// The assembled single-level program: leader variables, per-sample
/// follower KKT blocks, the DRO epigraph block, and the complementarity
/// pair list (handled by a strategy, not by LP rows).
#[derive(Debug, Clone)]
pub struct MpecProgram {
    pub lp: LinearProgram,
    pub pairs: Vec<ComplementarityPair>,
    pub leader_x: Vec<usize>,
    pub leader_y: Vec<usize>,
    pub sample_blocks: Vec<KktBlock>,
    pub dro: DroBlock,
    pub node_count: usize,
    pub arc_count: usize,
}

impl MpecProgram {
    pub fn leader_of(&self, primal: &[f64]) -> LeaderDecision {
        LeaderDecision {
            inventory: self.leader_x.iter().map(|&c| primal[c]).collect(),
            shipment: self.leader_y.iter().map(|&c| primal[c]).collect(),
        }
    }

    pub fn follower_of(&self, primal: &[f64], sample: usize) -> FollowerDecision {
        let b = &self.sample_blocks[sample];
        let n = self.node_count;
        FollowerDecision {
            allocation: (0..n).map(|i| primal[b.vars[i]]).collect(),
            flow: (0..self.arc_count).map(|k| primal[b.vars[2 * n + k]]).collect(),
        }
    }

    pub fn multipliers_of(&self, primal: &[f64], sample: usize) -> Vec<f64> {
        self.sample_blocks[sample]
            .ineq_duals
            .iter()
            .map(|&c| primal[c])
            .collect()
    }
}

/// Parametric per-node penalty loss pieces over leader columns: for node j,
/// `max(0, p_j·(ξ_j − x_j − Σ_in y))` as a two-piece affine loss in ξ whose
/// intercept is affine in the leader columns.
pub fn penalty_loss_columns(
    inst: &NetworkInstance,
    x_cols: &[usize],
    y_cols: &[usize],
) -> SeparableLoss {
    let n = inst.node_count;
    let mut terms = Vec::with_capacity(n);
    for j in 0..n {
        let p = inst.penalty_cost[j];
        let zero = LossPiece::numeric(vec![0.0; n], 0.0);
        let mut slope = vec![0.0; n];
        slope[j] = p;
        let mut coeffs = vec![(x_cols[j], -p)];
        for (k, &(_, head)) in inst.arcs.iter().enumerate() {
            if head == j {
                coeffs.push((y_cols[k], -p));
            }
        }
        let lin = LossPiece {
            slope,
            intercept: 0.0,
            decision_coeffs: coeffs,
        };
        terms.push(PiecewiseAffineLoss {
            pieces: vec![zero, lin],
        });
    }
    SeparableLoss { terms }
}

/// Numeric twin of [`penalty_loss_columns`] at a fixed leader decision.
pub fn penalty_loss_fixed(inst: &NetworkInstance, x: &LeaderDecision) -> SeparableLoss {
    let n = inst.node_count;
    let cov = inst.coverage(x);
    let mut terms = Vec::with_capacity(n);
    for j in 0..n {
        let p = inst.penalty_cost[j];
        let zero = LossPiece::numeric(vec![0.0; n], 0.0);
        let mut slope = vec![0.0; n];
        slope[j] = p;
        let lin = LossPiece::numeric(slope, -p * cov[j]);
        terms.push(PiecewiseAffineLoss {
            pieces: vec![zero, lin],
        });
    }
    SeparableLoss { terms }
}

/// Assembles the full single-level program over (leader, follower copies,
/// DRO epigraph): objective
/// `c·x + t·y + (1/N)Σ_i (q·z_i + r·f_i) + λε + (1/N)Σ_i s_i`
/// subject to leader bounds, per-sample KKT rows, and the DRO rows; the
/// complementarity pairs ride along in [`MpecProgram::pairs`].
pub fn assemble_mpec(inst: &NetworkInstance, amb: &AmbiguitySet) -> Result<MpecProgram, KktError> {
    let n = inst.node_count;
    let na = inst.num_arcs();
    let mut lp = LinearProgram::new(0);
    let leader_x: Vec<usize> = (0..n)
        .map(|i| lp.add_var(inst.inventory_cost[i], 0.0, inst.storage_cap[i]))
        .collect();
    let leader_y: Vec<usize> = (0..na)
        .map(|k| lp.add_var(inst.transport_cost[k], 0.0, inst.transport_cap[k]))
        .collect();

    let nsamples = amb.center.samples.len();
    let mut pairs = Vec::new();
    let mut sample_blocks = Vec::with_capacity(nsamples);
    for sample in &amb.center.samples {
        let f = network_follower(
            inst,
            sample,
            NetworkLeader::Columns {
                x: &leader_x,
                y: &leader_y,
            },
        );
        let block = append_kkt_block(&mut lp, &f, 1.0 / nsamples as f64, true)?;
        pairs.extend(block.pairs.iter().copied());
        sample_blocks.push(block);
    }

    let loss = penalty_loss_columns(inst, &leader_x, &leader_y);
    let dro = append_dro_block(&mut lp, &loss, amb, 1.0)?;

    Ok(MpecProgram {
        lp,
        pairs,
        leader_x,
        leader_y,
        sample_blocks,
        dro,
        node_count: n,
        arc_count: na,
    })
}

// ── complementarity handling ─────────────────────────────────────────────

fn row_slack(lp: &LinearProgram, primal: &[f64], row: usize) -> f64 {
    let ax: f64 = lp.rows[row].iter().zip(primal).map(|(a, x)| a * x).sum();
    match lp.senses[row] {
        RowSense::Le => lp.rhs[row] - ax,
        RowSense::Ge => ax - lp.rhs[row],
        RowSense::Eq => 0.0,
    }
}

/// Worst complementarity violation `max_j min(var_j, slack_j)` at a point.
pub fn complementarity_residual(
    lp: &LinearProgram,
    pairs: &[ComplementarityPair],
    primal: &[f64],
) -> f64 {
    pairs
        .iter()
        .map(|p| primal[p.var].max(0.0).min(row_slack(lp, primal, p.row).max(0.0)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct MpecSolution {
    pub objective: f64,
    pub primal: Vec<f64>,
    pub complementarity_residual: f64,
    /// LP solves performed (enumeration nodes or relaxation passes).
    pub solves: usize,
}

const COMP_TOL: f64 = 1e-7;

/// Exact solution over the active-set dichotomies: depth-first search where
/// each node solves the relaxed LP (complementarity dropped, branch pins
/// applied), prunes on bound/infeasibility, and branches on the most
/// violated pair. A repair step first pins the dual side of violated pairs,
/// which certifies optimality immediately whenever the relaxed optimum
/// admits complementary multipliers.
pub fn enumerate_complementarity(
    mpec: &MpecProgram,
    limit: usize,
) -> Result<MpecSolution, KktError> {
    enumerate_on(&mpec.lp, &mpec.pairs, limit)
}

/// Same search over a bare (lp, pairs) system, e.g. a standalone [`KktSystem`].
pub fn enumerate_on(
    lp: &LinearProgram,
    pairs: &[ComplementarityPair],
    limit: usize,
) -> Result<MpecSolution, KktError> {
    if pairs.len() > limit {
        return Err(KktError::TooManyPairs {
            pairs: pairs.len(),
            limit,
        });
    }
    let scale = 1.0 + lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let ctol = COMP_TOL * scale;
    let mut solves = 0usize;

    let solve = |lp: &LinearProgram, solves: &mut usize| -> Result<LpSolution, KktError> {
        *solves += 1;
        simplex::solve_lp(lp, simplex::DEFAULT_FEAS_TOL, 200_000)
            .map_err(|e| KktError::Subsolver(e.to_string()))
    };

    // root relaxation
    let root = solve(lp, &mut solves)?;
    if root.status == LpStatus::Infeasible {
        return Err(KktError::AllBranchesInfeasible);
    }
    if root.status != LpStatus::Optimal {
        return Err(KktError::Subsolver(format!(
            "root relaxation terminated with {:?}",
            root.status
        )));
    }
    let root_obj = root.objective;
    let res = complementarity_residual(lp, pairs, &root.primal);
    if res <= ctol {
        return Ok(MpecSolution {
            objective: root.objective,
            primal: root.primal,
            complementarity_residual: res,
            solves,
        });
    }

    // repair: pin the dual side of every violated pair, keeping the primal
    // feasible region intact
    {
        let mut repaired = lp.clone();
        for p in pairs {
            let v = root.primal[p.var];
            let slack = row_slack(lp, &root.primal, p.row);
            if v > ctol && slack > ctol {
                match lp.senses[p.row] {
                    RowSense::Ge => repaired.senses[p.row] = RowSense::Eq,
                    _ => repaired.set_bounds(p.var, 0.0, 0.0),
                }
            }
        }
        let fixed = solve(&repaired, &mut solves)?;
        if fixed.status == LpStatus::Optimal
            && fixed.objective <= root_obj + 1e-9 * (1.0 + root_obj.abs())
        {
            let res = complementarity_residual(lp, pairs, &fixed.primal);
            if res <= ctol {
                return Ok(MpecSolution {
                    objective: fixed.objective,
                    primal: fixed.primal,
                    complementarity_residual: res,
                    solves,
                });
            }
        }
    }

    // depth-first branch and prune
    #[derive(Clone)]
    enum Pin {
        VarZero(usize),
        RowTight(usize),
    }
    let apply = |lp: &LinearProgram, pins: &[Pin]| -> LinearProgram {
        let mut out = lp.clone();
        for pin in pins {
            match *pin {
                Pin::VarZero(v) => out.set_bounds(v, 0.0, 0.0),
                Pin::RowTight(r) => out.senses[r] = RowSense::Eq,
            }
        }
        out
    };

    let mut best: Option<MpecSolution> = None;
    let mut stack: Vec<Vec<Pin>> = vec![Vec::new()];
    while let Some(pins) = stack.pop() {
        let node_lp = apply(lp, &pins);
        let sol = solve(&node_lp, &mut solves)?;
        if sol.status == LpStatus::Infeasible {
            continue;
        }
        if sol.status != LpStatus::Optimal {
            continue;
        }
        if let Some(b) = &best {
            if sol.objective >= b.objective - 1e-12 * (1.0 + b.objective.abs()) {
                continue;
            }
        }
        // most violated pair
        let mut worst = (0.0f64, None);
        for p in pairs {
            let v = sol.primal[p.var].max(0.0);
            let s = row_slack(lp, &sol.primal, p.row).max(0.0);
            let viol = v.min(s);
            if viol > worst.0 {
                worst = (viol, Some(*p));
            }
        }
        match worst {
            (viol, Some(p)) if viol > ctol => {
                let mut left = pins.clone();
                left.push(Pin::VarZero(p.var));
                let mut right = pins;
                right.push(Pin::RowTight(p.row));
                stack.push(left);
                stack.push(right);
            }
            _ => {
                let res = complementarity_residual(lp, pairs, &sol.primal);
                let cand = MpecSolution {
                    objective: sol.objective,
                    primal: sol.primal,
                    complementarity_residual: res,
                    solves,
                };
                if best.as_ref().map_or(true, |b| cand.objective < b.objective) {
                    best = Some(cand);
                }
            }
        }
        if solves > 4 * (1 << pairs.len().min(20)) {
            break;
        }
    }
    let mut best = best.ok_or(KktError::AllBranchesInfeasible)?;
    best.solves = solves;
    Ok(best)
}

/// Anchors for the linearized complementarity penalty: previous values of
/// each pair's variable and row slack.
#[derive(Debug, Clone)]
pub struct RelaxAnchors {
    pub var_values: Vec<f64>,
    pub slack_values: Vec<f64>,
}

impl RelaxAnchors {
    pub fn zeros(pairs: usize) -> Self {
        RelaxAnchors {
            var_values: vec![0.0; pairs],
            slack_values: vec![0.0; pairs],
        }
    }

    pub fn from_point(lp: &LinearProgram, pairs: &[ComplementarityPair], primal: &[f64]) -> Self {
        RelaxAnchors {
            var_values: pairs.iter().map(|p| primal[p.var].max(0.0)).collect(),
            slack_values: pairs
                .iter()
                .map(|p| row_slack(lp, primal, p.row).max(0.0))
                .collect(),
        }
    }
}

/// The relaxed program at level τ: the bilinear complementarity products
/// `μ_j·slack_j` are replaced by their linearization at the anchors and
/// charged at weight 1/τ. Returns the LP and the objective constant the
/// penalty introduces.
pub fn relax_complementarity(
    mpec: &MpecProgram,
    tau: f64,
    anchors: &RelaxAnchors,
) -> Result<(LinearProgram, f64), KktError> {
    relax_on(&mpec.lp, &mpec.pairs, tau, anchors)
}

pub fn relax_on(
    lp: &LinearProgram,
    pairs: &[ComplementarityPair],
    tau: f64,
    anchors: &RelaxAnchors,
) -> Result<(LinearProgram, f64), KktError> {
    if tau <= 0.0 {
        return Err(KktError::BadTau(tau));
    }
    let weight = 1.0 / tau;
    let mut out = lp.clone();
    let mut constant = 0.0;
    for (idx, p) in pairs.iter().enumerate() {
        let vbar = anchors.var_values[idx];
        let sbar = anchors.slack_values[idx];
        // + (1/τ)·s̄·var
        out.objective[p.var] += weight * sbar;
        // + (1/τ)·v̄·slack, with slack = ±(rhs − a·x) by row sense
        if vbar != 0.0 {
            let sign = match lp.senses[p.row] {
                RowSense::Le => 1.0,
                RowSense::Ge => -1.0,
                RowSense::Eq => 0.0,
            };
            for (j, &a) in lp.rows[p.row].iter().enumerate() {
                if a != 0.0 {
                    out.objective[j] += -weight * vbar * sign * a;
                }
            }
            constant += weight * vbar * sign * lp.rhs[p.row];
        }
    }
    Ok((out, constant))
}

/// Geometric τ schedule for the relaxation path.
#[derive(Debug, Clone, Copy)]
pub struct TauSchedule {
    pub initial: f64,
    pub decay: f64,
    pub min: f64,
}

impl Default for TauSchedule {
    fn default() -> Self {
        TauSchedule {
            initial: 1.0,
            decay: 0.1,
            min: 1e-6,
        }
    }
}

/// Drives τ down the schedule, re-anchoring the penalty at each pass, and
/// returns the final point with its true (unpenalized) objective.
pub fn solve_relaxation_path(
    lp: &LinearProgram,
    pairs: &[ComplementarityPair],
    schedule: TauSchedule,
) -> Result<MpecSolution, KktError> {
    let scale = 1.0 + lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut anchors = RelaxAnchors::zeros(pairs.len());
    let mut tau = schedule.initial;
    let mut solves = 0;
    let last: MpecSolution;
    loop {
        let (relaxed, _constant) = relax_on(lp, pairs, tau, &anchors)?;
        let sol = simplex::solve_lp(&relaxed, simplex::DEFAULT_FEAS_TOL, 200_000)
            .map_err(|e| KktError::Subsolver(e.to_string()))?;
        solves += 1;
        if sol.status == LpStatus::Infeasible {
            return Err(KktError::AllBranchesInfeasible);
        }
        if sol.status != LpStatus::Optimal {
            return Err(KktError::Subsolver(format!(
                "relaxation pass at tau={tau} terminated with {:?}",
                sol.status
            )));
        }
        let true_obj: f64 = sol
            .primal
            .iter()
            .zip(&lp.objective)
            .map(|(x, c)| x * c)
            .sum();
        let res = complementarity_residual(lp, pairs, &sol.primal);
        anchors = RelaxAnchors::from_point(lp, pairs, &sol.primal);
        if res <= COMP_TOL * scale || tau <= schedule.min {
            last = MpecSolution {
                objective: true_obj,
                primal: sol.primal,
                complementarity_residual: res,
                solves,
            };
            break;
        }
        tau = (tau * schedule.decay).max(schedule.min * 0.999_999);
    }
    Ok(last)
}
