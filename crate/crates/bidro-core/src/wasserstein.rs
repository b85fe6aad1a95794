//! Worst-case expectations over a Wasserstein ball, reduced to finite convex
//! programs for piecewise-affine losses, plus an exact discrete-transport
//! oracle and Wasserstein distances between discrete distributions.
//!
//! For a loss `ℓ(ξ) = max_k ⟨a_k, ξ⟩ + b_k` and an L1 ground metric the
//! worst-case expectation over the ball of radius ε equals
//!
//! ```text
//!   min_{λ ≥ 0}  λ·ε + (1/N) Σ_i  max_k  [ b_k + min_{‖w‖∞ ≤ λ} σ_Ω(a_k − w) + ⟨w, ξ̂_i⟩ ]
//! ```
//!
//! with σ_Ω the support function of the box Ω. Writing v = a_k − w recovers
//! the per-piece conjugate form `s_i ≥ b_k + ⟨a_k, ξ̂_i⟩ + σ_Ω(v) − ⟨v, ξ̂_i⟩`
//! with the dual-norm rows `‖a_k − v‖_* ≤ λ`; the sign-split of σ_Ω keeps the
//! whole block a linear program. Sums of losses on disjoint coordinates
//! decompose exactly under the L1 metric, which is what keeps the per-node
//! penalty terms of the benchmark tractable.

use crate::problem::{AmbiguitySet, GroundNorm};
use crate::simplex::{self, LinearProgram, LpStatus, RowSense};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DroError {
    #[error("loss has no pieces")]
    EmptyLoss,
    #[error("sample {index} lies outside the support box")]
    SampleOutsideSupport { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("ground norm L2 has no linear dual-norm rows; use L1 or Linf")]
    UnsupportedNorm,
    #[error("loss terms touch overlapping coordinates; the separable reduction needs disjoint supports")]
    OverlappingTerms,
    #[error("parametric intercepts are not allowed on this path")]
    ParametricLoss,
    #[error("grid of {points} points exceeds the {max} point budget")]
    GridTooLarge { points: usize, max: usize },
    #[error("subsolver failed: {0}")]
    Subsolver(String),
    #[error("distribution weights sum to {sum}, expected 1")]
    BadWeights { sum: f64 },
}

/// One affine piece `⟨slope, ξ⟩ + intercept`, where the intercept may carry
/// affine terms over ambient LP decision columns (used when the block is
/// embedded in a larger program).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPiece {
    pub slope: Vec<f64>,
    pub intercept: f64,
    /// (column, coefficient) pairs over decision columns of an ambient LP.
    pub decision_coeffs: Vec<(usize, f64)>,
}

impl LossPiece {
    pub fn numeric(slope: Vec<f64>, intercept: f64) -> Self {
        LossPiece {
            slope,
            intercept,
            decision_coeffs: Vec::new(),
        }
    }
}

/// Loss `ℓ(ξ) = max_k ⟨a_k, ξ⟩ + b_k`: convex in ξ by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineLoss {
    pub pieces: Vec<LossPiece>,
}

impl PiecewiseAffineLoss {
    pub fn numeric(pieces: Vec<(Vec<f64>, f64)>) -> Self {
        PiecewiseAffineLoss {
            pieces: pieces
                .into_iter()
                .map(|(s, b)| LossPiece::numeric(s, b))
                .collect(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.pieces.iter().all(|p| p.decision_coeffs.is_empty())
    }

    /// Coordinates any piece touches.
    pub fn support_coords(&self) -> Vec<usize> {
        let dim = self.pieces.first().map_or(0, |p| p.slope.len());
        (0..dim)
            .filter(|&j| self.pieces.iter().any(|p| p.slope[j] != 0.0))
            .collect()
    }

    pub fn value_at(&self, xi: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.intercept + dot(&p.slope, xi))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_dual_norm(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.slope.iter().fold(0.0f64, |a, b| a.max(b.abs())))
            .fold(0.0, f64::max)
    }
}

/// A sum of max-affine losses on pairwise disjoint coordinate sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableLoss {
    pub terms: Vec<PiecewiseAffineLoss>,
}

impl SeparableLoss {
    pub fn single(loss: PiecewiseAffineLoss) -> Self {
        SeparableLoss { terms: vec![loss] }
    }

    pub fn validate(&self, dim: usize) -> Result<(), DroError> {
        if self.terms.is_empty() || self.terms.iter().any(|t| t.pieces.is_empty()) {
            return Err(DroError::EmptyLoss);
        }
        let mut seen = vec![false; dim];
        for term in &self.terms {
            for piece in &term.pieces {
                if piece.slope.len() != dim {
                    return Err(DroError::DimensionMismatch(format!(
                        "piece slope has length {}, expected {dim}",
                        piece.slope.len()
                    )));
                }
            }
            if self.terms.len() > 1 {
                for j in term.support_coords() {
                    if seen[j] {
                        return Err(DroError::OverlappingTerms);
                    }
                    seen[j] = true;
                }
            }
        }
        Ok(())
    }

    pub fn value_at(&self, xi: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value_at(xi)).sum()
    }

    pub fn max_dual_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(PiecewiseAffineLoss::max_dual_norm)
            .fold(0.0, f64::max)
    }

    pub fn is_numeric(&self) -> bool {
        self.terms.iter().all(PiecewiseAffineLoss::is_numeric)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Support function of a box: `sup_{ξ ∈ Ω} ⟨v, ξ⟩ = Σ_j u_j·max(v_j,0) + l_j·min(v_j,0)`.
pub fn support_function_box(v: &[f64], omega: &crate::problem::SupportBox) -> Result<f64, DroError> {
    if v.len() != omega.dim() {
        return Err(DroError::DimensionMismatch(format!(
            "vector has dim {}, box has dim {}",
            v.len(),
            omega.dim()
        )));
    }
    Ok(v
        .iter()
        .enumerate()
        .map(|(j, &vj)| omega.upper[j] * vj.max(0.0) + omega.lower[j] * vj.min(0.0))
        .sum())
}

fn check_samples(amb: &AmbiguitySet) -> Result<(), DroError> {
    for (i, s) in amb.center.samples.iter().enumerate() {
        if !amb.support.contains(&s.demand, 1e-9) {
            return Err(DroError::SampleOutsideSupport { index: i });
        }
    }
    Ok(())
}

// ── closed-form evaluation (L1 ground metric) ───────────────────────────

/// Per-coordinate inner minimum of `σ_Ω(a − w) + w·ξ̂` over `|w| ≤ λ`,
/// together with the worst-case coordinate value it certifies.
fn coord_term(a: f64, lambda: f64, xi: f64, lo: f64, hi: f64) -> (f64, f64) {
    if a > lambda {
        (hi * (a - lambda) + lambda * xi, hi)
    } else if a < -lambda {
        (lo * (a + lambda) - lambda * xi, lo)
    } else {
        (a * xi, xi)
    }
}

#[derive(Debug, Clone)]
pub struct TermChoice {
    pub term: usize,
    pub piece: usize,
    /// Worst-case values for the term's support coordinates.
    pub coords: Vec<(usize, f64)>,
    /// L1 transport spent on those coordinates.
    pub transport: f64,
}

/// One weighted worst-case realization for a sample.
#[derive(Debug, Clone)]
pub struct WorstScenario {
    pub weight: f64,
    pub choices: Vec<TermChoice>,
}

impl WorstScenario {
    /// Full-dimensional worst-case point: sample coordinates overwritten by
    /// the per-term choices.
    pub fn full_point(&self, sample: &[f64]) -> Vec<f64> {
        let mut p = sample.to_vec();
        for ch in &self.choices {
            for &(j, v) in &ch.coords {
                p[j] = v;
            }
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct WorstCaseEval {
    /// The worst-case expectation.
    pub value: f64,
    /// Optimal Wasserstein multiplier.
    pub lambda: f64,
    /// Per-sample supremum values at the optimal multiplier.
    pub sample_values: Vec<f64>,
    /// Mean transport of the certified worst-case distribution.
    pub mean_transport: f64,
    /// Per-sample worst-case mixture (weights sum to 1 per sample).
    pub scenarios: Vec<Vec<WorstScenario>>,
}

struct SampleSup {
    value: f64,
    transport: f64,
    choices: Vec<TermChoice>,
}

fn sample_sup(
    loss: &SeparableLoss,
    supports: &[Vec<usize>],
    amb: &AmbiguitySet,
    sample: &[f64],
    lambda: f64,
) -> SampleSup {
    let mut value = 0.0;
    let mut transport = 0.0;
    let mut choices = Vec::with_capacity(loss.terms.len());
    for (ti, term) in loss.terms.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut best_piece = 0;
        let mut best_coords: Vec<(usize, f64)> = Vec::new();
        let mut best_transport = 0.0;
        for (ki, piece) in term.pieces.iter().enumerate() {
            let mut v = piece.intercept;
            let mut tr = 0.0;
            let mut coords = Vec::with_capacity(supports[ti].len());
            for &j in &supports[ti] {
                let (cv, wx) = coord_term(
                    piece.slope[j],
                    lambda,
                    sample[j],
                    amb.support.lower[j],
                    amb.support.upper[j],
                );
                v += cv;
                tr += (wx - sample[j]).abs();
                coords.push((j, wx));
            }
            if v > best + 1e-15 {
                best = v;
                best_piece = ki;
                best_coords = coords;
                best_transport = tr;
            }
        }
        value += best;
        transport += best_transport;
        choices.push(TermChoice {
            term: ti,
            piece: best_piece,
            coords: best_coords,
            transport: best_transport,
        });
    }
    SampleSup {
        value,
        transport,
        choices,
    }
}

/// The dual function `D(λ) = λ·ε + (1/N) Σ_i sup_ξ [ℓ(ξ) − λ‖ξ − ξ̂_i‖₁]`
/// with a subgradient `ε − mean transport` and the per-sample sup values.
pub fn dual_function(
    loss: &SeparableLoss,
    amb: &AmbiguitySet,
    lambda: f64,
) -> Result<(f64, f64, Vec<f64>), DroError> {
    loss.validate(amb.dim())?;
    if !loss.is_numeric() {
        return Err(DroError::ParametricLoss);
    }
    if amb.ground_norm != GroundNorm::L1 {
        return Err(DroError::UnsupportedNorm);
    }
    check_samples(amb)?;
    let supports: Vec<Vec<usize>> = loss.terms.iter().map(|t| t.support_coords()).collect();
    let n = amb.center.samples.len() as f64;
    let mut total = 0.0;
    let mut transport = 0.0;
    let mut per_sample = Vec::with_capacity(amb.center.samples.len());
    for s in &amb.center.samples {
        let sup = sample_sup(loss, &supports, amb, &s.demand, lambda);
        total += sup.value;
        transport += sup.transport;
        per_sample.push(sup.value);
    }
    Ok((
        lambda * amb.radius + total / n,
        amb.radius - transport / n,
        per_sample,
    ))
}

/// Exact worst-case expectation by minimizing the dual function over λ,
/// with the certified worst-case distribution extracted at the optimum.
pub fn evaluate_worst_case(loss: &SeparableLoss, amb: &AmbiguitySet) -> Result<WorstCaseEval, DroError> {
    loss.validate(amb.dim())?;
    if !loss.is_numeric() {
        return Err(DroError::ParametricLoss);
    }
    if amb.ground_norm != GroundNorm::L1 {
        return Err(DroError::UnsupportedNorm);
    }
    check_samples(amb)?;
    let supports: Vec<Vec<usize>> = loss.terms.iter().map(|t| t.support_coords()).collect();
    let samples = &amb.center.samples;
    let n = samples.len() as f64;
    let lambda_max = loss.max_dual_norm();

    let mean_sup = |lambda: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut t = 0.0;
        for s in samples {
            let sup = sample_sup(loss, &supports, amb, &s.demand, lambda);
            v += sup.value;
            t += sup.transport;
        }
        (v / n, t / n)
    };

    // subgradient of D is ε − meanTransport(λ), nondecreasing in λ
    let lambda_star = if amb.radius <= 0.0 {
        lambda_max
    } else {
        let (_, t0) = mean_sup(0.0);
        if amb.radius >= t0 {
            0.0
        } else {
            let mut lo = 0.0f64;
            let mut hi = lambda_max.max(1e-12);
            for _ in 0..120 {
                let mid = 0.5 * (lo + hi);
                let (_, t) = mean_sup(mid);
                if amb.radius - t < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };

    // worst-case mixture: bracket the kink at λ* and mix the two candidate
    // families so the transport budget is met exactly
    let delta = 1e-9 * (1.0 + lambda_max);
    let (lam_lo, lam_hi) = if lambda_star <= delta {
        (lambda_star, lambda_star)
    } else {
        ((lambda_star - delta).max(0.0), lambda_star + delta)
    };
    let mut sups_lo = Vec::with_capacity(samples.len());
    let mut sups_hi = Vec::with_capacity(samples.len());
    let mut t_lo = 0.0;
    let mut t_hi = 0.0;
    for s in samples {
        let a = sample_sup(loss, &supports, amb, &s.demand, lam_lo);
        let b = sample_sup(loss, &supports, amb, &s.demand, lam_hi);
        t_lo += a.transport;
        t_hi += b.transport;
        sups_lo.push(a);
        sups_hi.push(b);
    }
    t_lo /= n;
    t_hi /= n;
    let theta = if lambda_star == 0.0 || (t_lo - t_hi).abs() < 1e-15 {
        1.0
    } else {
        ((amb.radius - t_hi) / (t_lo - t_hi)).clamp(0.0, 1.0)
    };

    let (value, _, sample_values) = {
        let (v, t, per) = {
            let mut v = 0.0;
            let mut t = 0.0;
            let mut per = Vec::with_capacity(samples.len());
            for s in samples {
                let sup = sample_sup(loss, &supports, amb, &s.demand, lambda_star);
                v += sup.value;
                t += sup.transport;
                per.push(sup.value);
            }
            (v / n, t / n, per)
        };
        (lambda_star * amb.radius + v, t, per)
    };

    let mut scenarios = Vec::with_capacity(samples.len());
    let mut mean_transport = 0.0;
    for (a, b) in sups_lo.into_iter().zip(sups_hi) {
        let mut mix = Vec::new();
        if theta > 0.0 {
            mean_transport += theta * a.transport / n;
            mix.push(WorstScenario {
                weight: theta,
                choices: a.choices,
            });
        }
        if theta < 1.0 {
            mean_transport += (1.0 - theta) * b.transport / n;
            mix.push(WorstScenario {
                weight: 1.0 - theta,
                choices: b.choices,
            });
        }
        scenarios.push(mix);
    }

    Ok(WorstCaseEval {
        value,
        lambda: lambda_star,
        sample_values,
        mean_transport,
        scenarios,
    })
}

// ── LP emission of the Theorem-1 block ───────────────────────────────────

/// Extraction map for an emitted DRO block.
#[derive(Debug, Clone)]
pub struct DroBlock {
    pub lambda_col: usize,
    /// Per-sample, per-term epigraph columns; the sample's s_i is their sum.
    pub epigraph_cols: Vec<Vec<usize>>,
    /// Per (sample, term, piece): sign-split dual columns (g⁺, g⁻) per
    /// support coordinate, in support order. v_ik = g⁺ − g⁻, z_ik = v − a_k.
    pub dual_cols: Vec<Vec<Vec<Vec<(usize, usize)>>>>,
    /// Row range occupied by the block.
    pub rows: (usize, usize),
    /// 1/N weight baked into the epigraph objective coefficients.
    pub objective_weight: f64,
}

impl DroBlock {
    /// `λ·ε + (1/N)Σ_i s_i` at an LP solution, i.e. the block's value share.
    pub fn value(&self, primal: &[f64], radius: f64) -> f64 {
        let mut v = primal[self.lambda_col] * radius * self.objective_weight_lambda();
        let n = self.epigraph_cols.len() as f64;
        for cols in &self.epigraph_cols {
            for &c in cols {
                v += primal[c] / n * self.objective_weight;
            }
        }
        v
    }

    fn objective_weight_lambda(&self) -> f64 {
        self.objective_weight
    }

    pub fn lambda(&self, primal: &[f64]) -> f64 {
        primal[self.lambda_col]
    }

    pub fn sample_epigraph(&self, primal: &[f64], i: usize) -> f64 {
        self.epigraph_cols[i].iter().map(|&c| primal[c]).sum()
    }
}

/// Appends the finite convex (LP) reformulation of the worst-case
/// expectation of `loss` over `amb` to `lp`, weighting its objective share
/// by `weight` (1.0 for standalone use).
///
/// Per sample i and piece k the emitted rows are the per-piece conjugate
/// form: `s_i ≥ b_k + ⟨a_k, ξ̂_i⟩ + σ_Ω(v_ik) − ⟨v_ik, ξ̂_i⟩` with σ_Ω
/// expanded through nonnegative sign-split auxiliaries and the dual-norm
/// rows `‖a_k − v_ik‖_* ≤ λ`. Intercept decision coefficients land on their
/// ambient columns, which must already exist in `lp`.
pub fn append_dro_block(
    lp: &mut LinearProgram,
    loss: &SeparableLoss,
    amb: &AmbiguitySet,
    weight: f64,
) -> Result<DroBlock, DroError> {
    loss.validate(amb.dim())?;
    check_samples(amb)?;
    let linf_dual = match amb.ground_norm {
        GroundNorm::L1 => true,
        GroundNorm::Linf => false,
        GroundNorm::L2 => return Err(DroError::UnsupportedNorm),
    };
    let supports: Vec<Vec<usize>> = loss.terms.iter().map(|t| t.support_coords()).collect();
    let n = amb.center.samples.len();
    let row_start = lp.num_rows();

    let lambda_col = lp.add_var(weight * amb.radius, 0.0, f64::INFINITY);
    let mut epigraph_cols = Vec::with_capacity(n);
    let mut dual_cols = Vec::with_capacity(n);

    for (i, sample) in amb.center.samples.iter().enumerate() {
        let xi = &sample.demand;
        let mut sample_s = Vec::with_capacity(loss.terms.len());
        let mut sample_duals = Vec::with_capacity(loss.terms.len());
        for (ti, term) in loss.terms.iter().enumerate() {
            let s_col = lp.add_var(
                weight / n as f64,
                f64::NEG_INFINITY,
                f64::INFINITY,
            );
            sample_s.push(s_col);
            let mut term_duals = Vec::with_capacity(term.pieces.len());
            for piece in &term.pieces {
                let coords = &supports[ti];
                // sign-split duals per support coordinate
                let mut gp_gm = Vec::with_capacity(coords.len());
                for _ in coords {
                    let gp = lp.add_var(0.0, 0.0, f64::INFINITY);
                    let gm = lp.add_var(0.0, 0.0, f64::INFINITY);
                    gp_gm.push((gp, gm));
                }
                // epigraph row:
                // s − Σ_j g⁺_j(u_j − ξ̂_j) − Σ_j g⁻_j(ξ̂_j − l_j) − Σ_c coef·x_c
                //   ≥ b_k + ⟨a_k, ξ̂⟩
                let mut entries: Vec<(usize, f64)> = vec![(s_col, 1.0)];
                for (idx, &j) in coords.iter().enumerate() {
                    let (gp, gm) = gp_gm[idx];
                    entries.push((gp, -(amb.support.upper[j] - xi[j])));
                    entries.push((gm, -(xi[j] - amb.support.lower[j])));
                }
                for &(col, coef) in &piece.decision_coeffs {
                    entries.push((col, -coef));
                }
                let rhs = piece.intercept + dot(&piece.slope, xi);
                lp.add_row_sparse(&entries, RowSense::Ge, rhs);

                // dual-norm rows on z = v − a_k = (g⁺ − g⁻) − a_k
                if linf_dual {
                    // |a_kj − g⁺_j + g⁻_j| ≤ λ per coordinate
                    for (idx, &j) in coords.iter().enumerate() {
                        let (gp, gm) = gp_gm[idx];
                        lp.add_row_sparse(
                            &[(gp, -1.0), (gm, 1.0), (lambda_col, -1.0)],
                            RowSense::Le,
                            -piece.slope[j],
                        );
                        lp.add_row_sparse(
                            &[(gp, -1.0), (gm, 1.0), (lambda_col, 1.0)],
                            RowSense::Ge,
                            -piece.slope[j],
                        );
                    }
                } else {
                    // Σ_j |a_kj − g⁺_j + g⁻_j| ≤ λ via absolute-value epigraphs
                    let mut sum_entries: Vec<(usize, f64)> = vec![(lambda_col, -1.0)];
                    for (idx, &j) in coords.iter().enumerate() {
                        let (gp, gm) = gp_gm[idx];
                        let t = lp.add_var(0.0, 0.0, f64::INFINITY);
                        lp.add_row_sparse(
                            &[(t, 1.0), (gp, 1.0), (gm, -1.0)],
                            RowSense::Ge,
                            piece.slope[j],
                        );
                        lp.add_row_sparse(
                            &[(t, 1.0), (gp, -1.0), (gm, 1.0)],
                            RowSense::Ge,
                            -piece.slope[j],
                        );
                        sum_entries.push((t, 1.0));
                    }
                    lp.add_row_sparse(&sum_entries, RowSense::Le, 0.0);
                }
                term_duals.push(gp_gm);
            }
            sample_duals.push(term_duals);
        }
        let _ = i;
        epigraph_cols.push(sample_s);
        dual_cols.push(sample_duals);
    }

    Ok(DroBlock {
        lambda_col,
        epigraph_cols,
        dual_cols,
        rows: (row_start, lp.num_rows()),
        objective_weight: weight,
    })
}

/// Builds the standalone LP for the block of a single max-affine loss.
pub fn build_dro_constraints(
    loss: &PiecewiseAffineLoss,
    amb: &AmbiguitySet,
) -> Result<(LinearProgram, DroBlock), DroError> {
    if !loss.is_numeric() {
        return Err(DroError::ParametricLoss);
    }
    let mut lp = LinearProgram::new(0);
    let block = append_dro_block(&mut lp, &SeparableLoss::single(loss.clone()), amb, 1.0)?;
    Ok((lp, block))
}

/// Optimal value of the standalone block, via the LP subsolver.
pub fn dro_block_value(loss: &PiecewiseAffineLoss, amb: &AmbiguitySet) -> Result<f64, DroError> {
    let (lp, _) = build_dro_constraints(loss, amb)?;
    let sol = simplex::solve_lp(&lp, simplex::DEFAULT_FEAS_TOL, 200_000)
        .map_err(|e| DroError::Subsolver(e.to_string()))?;
    if sol.status != LpStatus::Optimal {
        return Err(DroError::Subsolver(format!(
            "block LP terminated with {:?}: {}",
            sol.status,
            sol.note.unwrap_or_default()
        )));
    }
    Ok(sol.objective)
}

/// Same for a separable sum of losses.
pub fn dro_block_value_sum(loss: &SeparableLoss, amb: &AmbiguitySet) -> Result<f64, DroError> {
    let mut lp = LinearProgram::new(0);
    append_dro_block(&mut lp, loss, amb, 1.0)?;
    let sol = simplex::solve_lp(&lp, simplex::DEFAULT_FEAS_TOL, 200_000)
        .map_err(|e| DroError::Subsolver(e.to_string()))?;
    if sol.status != LpStatus::Optimal {
        return Err(DroError::Subsolver(format!(
            "block LP terminated with {:?}",
            sol.status
        )));
    }
    Ok(sol.objective)
}

// ── grid transport oracle ────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value: f64,
    /// Certified bound on `true − grid` (the grid value never exceeds truth).
    pub certified_gap: f64,
    pub grid_points: usize,
}

const MAX_GRID_POINTS: usize = 4_000_000;

/// Maximizes `E_P[loss]` over distributions supported on a finite grid in Ω
/// subject to `d_W(P̂_N, P) ≤ ε`, solved exactly as a transport-constrained
/// LP. Intended for low dimension (≤ 3). `grid_resolution` is the grid
/// spacing as a fraction of each axis width.
pub fn worst_case_oracle(
    loss: &SeparableLoss,
    amb: &AmbiguitySet,
    grid_resolution: f64,
) -> Result<OracleResult, DroError> {
    loss.validate(amb.dim())?;
    if !loss.is_numeric() {
        return Err(DroError::ParametricLoss);
    }
    check_samples(amb)?;
    let dim = amb.dim();
    let per_axis = (1.0 / grid_resolution).round() as usize + 1;
    let total: usize = per_axis
        .checked_pow(dim as u32)
        .filter(|&t| t <= MAX_GRID_POINTS)
        .ok_or(DroError::GridTooLarge {
            points: per_axis.pow(dim.min(9) as u32),
            max: MAX_GRID_POINTS,
        })?;

    // grid points plus each sample's exact location
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(total + amb.center.samples.len());
    let mut idx = vec![0usize; dim];
    loop {
        let p: Vec<f64> = (0..dim)
            .map(|j| {
                let w = amb.support.upper[j] - amb.support.lower[j];
                amb.support.lower[j] + w * idx[j] as f64 / (per_axis - 1).max(1) as f64
            })
            .collect();
        points.push(p);
        let mut carry = dim;
        loop {
            if carry == 0 {
                break;
            }
            carry -= 1;
            idx[carry] += 1;
            if idx[carry] < per_axis {
                break;
            }
            idx[carry] = 0;
            if carry == 0 {
                carry = usize::MAX;
                break;
            }
        }
        if carry == usize::MAX {
            break;
        }
    }
    for s in &amb.center.samples {
        points.push(s.demand.clone());
    }

    let n = amb.center.samples.len();
    let g = points.len();
    let values: Vec<f64> = points.iter().map(|p| loss.value_at(p)).collect();

    // transport LP: vars T_{i,g} ≥ 0; per-sample mass rows; one budget row
    let mut lp = LinearProgram::new(n * g);
    for (col, _) in (0..n * g).enumerate() {
        let gi = col % g;
        lp.set_objective(col, -values[gi]); // maximize
    }
    for i in 0..n {
        let mut row = vec![0.0; n * g];
        for k in 0..g {
            row[i * g + k] = 1.0;
        }
        lp.add_row(row, RowSense::Eq, 1.0 / n as f64);
    }
    let mut budget = vec![0.0; n * g];
    for i in 0..n {
        let s = &amb.center.samples[i].demand;
        for (k, p) in points.iter().enumerate() {
            budget[i * g + k] = amb.ground_norm.distance(s, p);
        }
    }
    lp.add_row(budget, RowSense::Le, amb.radius);

    let sol = simplex::solve_lp(&lp, simplex::DEFAULT_FEAS_TOL, 500_000)
        .map_err(|e| DroError::Subsolver(e.to_string()))?;
    if sol.status != LpStatus::Optimal {
        return Err(DroError::Subsolver(format!(
            "oracle transport LP terminated with {:?}",
            sol.status
        )));
    }

    let slope = loss.max_dual_norm();
    let spacing_sum: f64 = (0..dim)
        .map(|j| (amb.support.upper[j] - amb.support.lower[j]) * grid_resolution)
        .sum();
    Ok(OracleResult {
        value: -sol.objective,
        certified_gap: slope * spacing_sum,
        grid_points: g,
    })
}

// ── discrete Wasserstein distance ────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, DroError> {
        if points.len() != weights.len() {
            return Err(DroError::DimensionMismatch(format!(
                "{} points, {} weights",
                points.len(),
                weights.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DroError::BadWeights { sum });
        }
        Ok(DiscreteDistribution { points, weights })
    }

    pub fn point_masses(points: Vec<Vec<f64>>) -> Result<Self, DroError> {
        let n = points.len();
        let w = vec![1.0 / n as f64; n];
        DiscreteDistribution::new(points, w)
    }
}

/// Optimal transport cost between two discrete distributions under the
/// ground norm, via the transportation LP.
pub fn wasserstein_distance(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    ground: GroundNorm,
) -> Result<f64, DroError> {
    let sp: f64 = p.weights.iter().sum();
    let sq: f64 = q.weights.iter().sum();
    if (sp - 1.0).abs() > 1e-9 {
        return Err(DroError::BadWeights { sum: sp });
    }
    if (sq - 1.0).abs() > 1e-9 {
        return Err(DroError::BadWeights { sum: sq });
    }
    let (np, nq) = (p.points.len(), q.points.len());
    if np == 0 || nq == 0 {
        return Err(DroError::DimensionMismatch("empty distribution".into()));
    }
    let dim = p.points[0].len();
    if p.points.iter().chain(&q.points).any(|pt| pt.len() != dim) {
        return Err(DroError::DimensionMismatch(
            "distribution points have mixed dimensions".into(),
        ));
    }
    let mut lp = LinearProgram::new(np * nq);
    for a in 0..np {
        for b in 0..nq {
            lp.set_objective(a * nq + b, ground.distance(&p.points[a], &q.points[b]));
        }
    }
    for a in 0..np {
        let mut row = vec![0.0; np * nq];
        for b in 0..nq {
            row[a * nq + b] = 1.0;
        }
        lp.add_row(row, RowSense::Eq, p.weights[a]);
    }
    for b in 0..nq {
        let mut row = vec![0.0; np * nq];
        for a in 0..np {
            row[a * nq + b] = 1.0;
        }
        lp.add_row(row, RowSense::Eq, q.weights[b]);
    }
    let sol = simplex::solve_lp(&lp, simplex::DEFAULT_FEAS_TOL, 200_000)
        .map_err(|e| DroError::Subsolver(e.to_string()))?;
    if sol.status != LpStatus::Optimal {
        return Err(DroError::Subsolver(format!(
            "transport LP terminated with {:?}",
            sol.status
        )));
    }
    Ok(sol.objective.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{EmpiricalDistribution, SupportBox, UncertaintySample};

    fn amb_1d(samples: &[f64], eps: f64, lo: f64, hi: f64) -> AmbiguitySet {
        AmbiguitySet {
            center: EmpiricalDistribution {
                samples: samples
                    .iter()
                    .map(|&d| UncertaintySample { demand: vec![d] })
                    .collect(),
            },
            radius: eps,
            ground_norm: GroundNorm::L1,
            support: SupportBox {
                lower: vec![lo],
                upper: vec![hi],
            },
        }
    }

    fn mix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_loss(seed: &mut u64, dim: usize, pieces: usize) -> PiecewiseAffineLoss {
        PiecewiseAffineLoss::numeric(
            (0..pieces)
                .map(|_| {
                    (
                        (0..dim).map(|_| mix(seed) - 0.5).collect::<Vec<f64>>(),
                        mix(seed) - 0.5,
                    )
                })
                .collect(),
        )
    }

    fn random_amb(seed: &mut u64, dim: usize, n: usize, eps: f64) -> AmbiguitySet {
        let samples = (0..n)
            .map(|_| UncertaintySample {
                demand: (0..dim).map(|_| mix(seed)).collect(),
            })
            .collect();
        AmbiguitySet {
            center: EmpiricalDistribution { samples },
            radius: eps,
            ground_norm: GroundNorm::L1,
            support: SupportBox {
                lower: vec![0.0; dim],
                upper: vec![1.0; dim],
            },
        }
    }

    #[test]
    fn support_function_examples() {
        let omega = SupportBox {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        assert_eq!(support_function_box(&[0.0, 0.0], &omega).unwrap(), 0.0);
        assert_eq!(support_function_box(&[1.0, -1.0], &omega).unwrap(), 1.0);
        assert!(support_function_box(&[1.0], &omega).is_err());
    }

    #[test]
    fn support_function_matches_grid_maximization() {
        let mut seed = 901u64;
        for _ in 0..50 {
            let dim = 1 + (mix(&mut seed) * 3.0) as usize;
            let lower: Vec<f64> = (0..dim).map(|_| mix(&mut seed) * 2.0 - 1.5).collect();
            let upper: Vec<f64> = lower.iter().map(|l| l + mix(&mut seed) * 2.0).collect();
            let omega = SupportBox {
                lower: lower.clone(),
                upper: upper.clone(),
            };
            let v: Vec<f64> = (0..dim).map(|_| mix(&mut seed) * 4.0 - 2.0).collect();
            let exact = support_function_box(&v, &omega).unwrap();
            // dense grid over the box (the max sits at a corner, which the
            // grid contains)
            let steps = 8;
            let mut best = f64::NEG_INFINITY;
            let mut idx = vec![0usize; dim];
            'outer: loop {
                let val: f64 = (0..dim)
                    .map(|j| {
                        let x = lower[j] + (upper[j] - lower[j]) * idx[j] as f64 / steps as f64;
                        v[j] * x
                    })
                    .sum();
                best = best.max(val);
                let mut c = 0;
                loop {
                    if c == dim {
                        break 'outer;
                    }
                    idx[c] += 1;
                    if idx[c] <= steps {
                        break;
                    }
                    idx[c] = 0;
                    c += 1;
                }
            }
            assert!((exact - best).abs() < 1e-6, "exact {exact} grid {best}");
        }
    }

    #[test]
    fn zero_radius_gives_sample_average() {
        let mut seed = 11u64;
        for _ in 0..20 {
            let loss = random_loss(&mut seed, 2, 3);
            let amb = random_amb(&mut seed, 2, 4, 0.0);
            let avg: f64 = amb
                .center
                .samples
                .iter()
                .map(|s| loss.value_at(&s.demand))
                .sum::<f64>()
                / 4.0;
            let lp_val = dro_block_value(&loss, &amb).unwrap();
            assert!((lp_val - avg).abs() < 1e-8, "lp {lp_val} avg {avg}");
            let cf = evaluate_worst_case(&SeparableLoss::single(loss), &amb).unwrap();
            assert!((cf.value - avg).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_example_two_samples() {
        // single piece a=1, b=0 over Ω=[0,10], samples {2,4}, ε=1 → 4
        let loss = PiecewiseAffineLoss::numeric(vec![(vec![1.0], 0.0)]);
        let amb = amb_1d(&[2.0, 4.0], 1.0, 0.0, 10.0);
        let v = dro_block_value(&loss, &amb).unwrap();
        assert!((v - 4.0).abs() < 1e-8, "got {v}");
        let cf = evaluate_worst_case(&SeparableLoss::single(loss), &amb).unwrap();
        assert!((cf.value - 4.0).abs() < 1e-10);
        assert!((cf.lambda - 1.0).abs() < 1e-6);
    }

    #[test]
    fn oracle_hinge_example() {
        // loss = max(0, ξ−2), sample {2}, ε=0.5, Ω=[0,4] → 0.5
        let loss = SeparableLoss::single(PiecewiseAffineLoss::numeric(vec![
            (vec![0.0], 0.0),
            (vec![1.0], -2.0),
        ]));
        let amb = amb_1d(&[2.0], 0.5, 0.0, 4.0);
        let oracle = worst_case_oracle(&loss, &amb, 1e-3).unwrap();
        assert!(
            (oracle.value - 0.5).abs() <= oracle.certified_gap + 1e-9,
            "oracle {} gap {}",
            oracle.value,
            oracle.certified_gap
        );
        let cf = evaluate_worst_case(&loss, &amb).unwrap();
        assert!((cf.value - 0.5).abs() < 1e-10);
        // the worst case moves half the budget×slope: mass to ξ=2.5 … ξ=4
        // splits; transport budget must be spent exactly
        assert!((cf.mean_transport - 0.5).abs() < 1e-7);
    }

    #[test]
    fn closed_form_matches_lp_block() {
        let mut seed = 2024u64;
        for case in 0..40 {
            let dim = 1 + (case % 2);
            let loss = random_loss(&mut seed, dim, 1 + (case % 3));
            let amb = random_amb(&mut seed, dim, 1 + (case % 4), mix(&mut seed) * 0.4);
            let lp_val = dro_block_value(&loss, &amb).unwrap();
            let cf = evaluate_worst_case(&SeparableLoss::single(loss), &amb).unwrap();
            assert!(
                (lp_val - cf.value).abs() < 1e-7 * (1.0 + cf.value.abs()),
                "case {case}: lp {lp_val} closed-form {}",
                cf.value
            );
        }
    }

    #[test]
    fn worst_case_mixture_attains_value() {
        let mut seed = 555u64;
        for case in 0..30 {
            let dim = 1 + (case % 2);
            let loss = SeparableLoss::single(random_loss(&mut seed, dim, 2));
            let amb = random_amb(&mut seed, dim, 3, 0.05 + mix(&mut seed) * 0.3);
            let cf = evaluate_worst_case(&loss, &amb).unwrap();
            let mut mix_value = 0.0;
            for (i, s) in amb.center.samples.iter().enumerate() {
                for scen in &cf.scenarios[i] {
                    let p = scen.full_point(&s.demand);
                    mix_value += scen.weight * loss.value_at(&p) / 3.0;
                }
            }
            assert!(
                (mix_value - cf.value).abs() < 1e-7 * (1.0 + cf.value.abs()),
                "case {case}: mixture {mix_value} vs dual {}",
                cf.value
            );
            assert!(cf.mean_transport <= amb.radius + 1e-7);
        }
    }

    #[test]
    fn separable_sum_matches_expanded_product() {
        // two 1-coordinate hinge terms vs their 4-piece joint expansion
        let mut seed = 808u64;
        for _ in 0..15 {
            let c0 = mix(&mut seed);
            let c1 = mix(&mut seed);
            let p0 = 0.2 + mix(&mut seed) * 0.3;
            let p1 = 0.2 + mix(&mut seed) * 0.3;
            let term0 = PiecewiseAffineLoss::numeric(vec![
                (vec![0.0, 0.0], 0.0),
                (vec![p0, 0.0], -p0 * c0),
            ]);
            let term1 = PiecewiseAffineLoss::numeric(vec![
                (vec![0.0, 0.0], 0.0),
                (vec![0.0, p1], -p1 * c1),
            ]);
            let sum = SeparableLoss {
                terms: vec![term0, term1],
            };
            let joint = PiecewiseAffineLoss::numeric(vec![
                (vec![0.0, 0.0], 0.0),
                (vec![p0, 0.0], -p0 * c0),
                (vec![0.0, p1], -p1 * c1),
                (vec![p0, p1], -p0 * c0 - p1 * c1),
            ]);
            let amb = random_amb(&mut seed, 2, 3, mix(&mut seed) * 0.5);
            let a = evaluate_worst_case(&sum, &amb).unwrap().value;
            let b = evaluate_worst_case(&SeparableLoss::single(joint.clone()), &amb)
                .unwrap()
                .value;
            assert!((a - b).abs() < 1e-9, "separable {a} joint {b}");
            let lp_a = dro_block_value_sum(&sum, &amb).unwrap();
            let lp_b = dro_block_value(&joint, &amb).unwrap();
            assert!((lp_a - lp_b).abs() < 1e-7);
            assert!((lp_a - a).abs() < 1e-7);
        }
    }

    #[test]
    fn monotone_in_radius_and_dominance() {
        let mut seed = 31u64;
        for _ in 0..10 {
            let loss = random_loss(&mut seed, 2, 3);
            let sep = SeparableLoss::single(loss.clone());
            let amb0 = random_amb(&mut seed, 2, 4, 0.0);
            let avg: f64 = amb0
                .center
                .samples
                .iter()
                .map(|s| loss.value_at(&s.demand))
                .sum::<f64>()
                / 4.0;
            let mut prev = f64::NEG_INFINITY;
            for &eps in &[0.0, 0.05, 0.1, 0.2] {
                let mut amb = amb0.clone();
                amb.radius = eps;
                let v = evaluate_worst_case(&sep, &amb).unwrap().value;
                assert!(v >= prev - 1e-10, "not monotone at eps={eps}");
                assert!(v >= avg - 1e-8, "below sample average at eps={eps}");
                assert!(
                    v <= avg + eps * loss.max_dual_norm() + 1e-8,
                    "above the dual-norm growth cap at eps={eps}"
                );
                if eps == 0.0 {
                    assert!((v - avg).abs() < 1e-8);
                }
                prev = v;
            }
        }
    }

    #[test]
    fn oracle_cross_checks_block_on_random_cases() {
        let mut seed = 77u64;
        for case in 0..12 {
            let dim = 1 + (case % 2);
            let loss = random_loss(&mut seed, dim, 2);
            let amb = random_amb(&mut seed, dim, 2, 0.05 + mix(&mut seed) * 0.2);
            let res = if dim == 1 { 1e-3 } else { 4e-3 };
            let oracle = worst_case_oracle(&SeparableLoss::single(loss.clone()), &amb, res).unwrap();
            let block = dro_block_value(&loss, &amb).unwrap();
            assert!(
                (block - oracle.value).abs() <= 2.0 * oracle.certified_gap + 1e-9,
                "case {case}: block {block} oracle {} gap {}",
                oracle.value,
                oracle.certified_gap
            );
        }
    }

    #[test]
    fn wasserstein_distance_examples() {
        let p = DiscreteDistribution::point_masses(vec![vec![0.0]]).unwrap();
        let q = DiscreteDistribution::point_masses(vec![vec![3.0]]).unwrap();
        let d = wasserstein_distance(&p, &q, GroundNorm::L1).unwrap();
        assert!((d - 3.0).abs() < 1e-9);
        let same = wasserstein_distance(&p, &p, GroundNorm::L1).unwrap();
        assert!(same.abs() < 1e-9);
        let bad = DiscreteDistribution {
            points: vec![vec![0.0]],
            weights: vec![0.7],
        };
        assert!(wasserstein_distance(&bad, &q, GroundNorm::L1).is_err());
    }

    /// 1-D W1 has a closed form: ∫|F_P − F_Q|, computed here by sweeping the
    /// merged support. Independent of the LP path.
    fn w1_1d_oracle(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
        let mut xs: Vec<f64> = p
            .points
            .iter()
            .chain(&q.points)
            .map(|v| v[0])
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let cdf = |d: &DiscreteDistribution, x: f64| -> f64 {
            d.points
                .iter()
                .zip(&d.weights)
                .filter(|(pt, _)| pt[0] <= x + 1e-15)
                .map(|(_, w)| w)
                .sum()
        };
        let mut total = 0.0;
        for w in xs.windows(2) {
            total += (cdf(p, w[0]) - cdf(q, w[0])).abs() * (w[1] - w[0]);
        }
        total
    }

    #[test]
    fn wasserstein_matches_1d_quantile_oracle() {
        let mut seed = 99u64;
        for _ in 0..25 {
            let p = DiscreteDistribution::point_masses(
                (0..5).map(|_| vec![mix(&mut seed) * 10.0]).collect(),
            )
            .unwrap();
            let q = DiscreteDistribution::point_masses(
                (0..5).map(|_| vec![mix(&mut seed) * 10.0]).collect(),
            )
            .unwrap();
            let lp = wasserstein_distance(&p, &q, GroundNorm::L1).unwrap();
            let oracle = w1_1d_oracle(&p, &q);
            assert!((lp - oracle).abs() < 1e-7, "lp {lp} oracle {oracle}");
        }
    }

    #[test]
    fn wasserstein_triangle_inequality() {
        let mut seed = 3030u64;
        for _ in 0..20 {
            let gen = |seed: &mut u64| {
                DiscreteDistribution::point_masses(
                    (0..4)
                        .map(|_| vec![mix(seed) * 5.0, mix(seed) * 5.0])
                        .collect(),
                )
                .unwrap()
            };
            let (a, b, c) = (gen(&mut seed), gen(&mut seed), gen(&mut seed));
            for ground in [GroundNorm::L1, GroundNorm::L2, GroundNorm::Linf] {
                let ab = wasserstein_distance(&a, &b, ground).unwrap();
                let bc = wasserstein_distance(&b, &c, ground).unwrap();
                let ac = wasserstein_distance(&a, &c, ground).unwrap();
                assert!(ac <= ab + bc + 1e-7);
                let ba = wasserstein_distance(&b, &a, ground).unwrap();
                assert!((ab - ba).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn l2_ground_rejected_by_block() {
        let loss = PiecewiseAffineLoss::numeric(vec![(vec![1.0], 0.0)]);
        let mut amb = amb_1d(&[1.0], 0.1, 0.0, 2.0);
        amb.ground_norm = GroundNorm::L2;
        assert!(matches!(
            build_dro_constraints(&loss, &amb),
            Err(DroError::UnsupportedNorm)
        ));
    }

    #[test]
    fn linf_ground_block_matches_direct_dual() {
        // L∞ ground (dual L1): single sample point mass, single piece; the
        // worst case moves the point along the steepest coordinate only.
        let loss = PiecewiseAffineLoss::numeric(vec![(vec![1.0, 0.25], 0.0)]);
        let amb = AmbiguitySet {
            center: EmpiricalDistribution {
                samples: vec![UncertaintySample {
                    demand: vec![0.5, 0.5],
                }],
            },
            radius: 0.3,
            ground_norm: GroundNorm::Linf,
            support: SupportBox {
                lower: vec![0.0, 0.0],
                upper: vec![2.0, 2.0],
            },
        };
        // moving (δ, δ) costs max = δ; best response raises both coords:
        // value = 0.75 + 0.3·(1 + 0.25) = 1.125
        let v = dro_block_value(&loss, &amb).unwrap();
        assert!((v - 1.125).abs() < 1e-7, "got {v}");
    }

    #[test]
    fn sample_outside_support_rejected() {
        let loss = PiecewiseAffineLoss::numeric(vec![(vec![1.0], 0.0)]);
        let amb = amb_1d(&[5.0], 0.1, 0.0, 2.0);
        assert!(matches!(
            build_dro_constraints(&loss, &amb),
            Err(DroError::SampleOutsideSupport { .. })
        ));
    }
}
