//! Comparison methods on the identical instance: deterministic planning at
//! a nominal demand, stochastic programming by sample average
//! approximation, and robust optimization over a demand box.
//!
//! All three reuse the bi-level structure (followers still optimize) by
//! running the same solve loop with a degenerate ambiguity set, so the
//! methods differ only in their treatment of uncertainty: DET sees one
//! nominal scenario, SAA the empirical samples at radius zero, and RO the
//! single worst corner of its demand box (the cost is monotone in demand
//! for fixed follower responses, so the box collapses to its upper corner).

use crate::problem::{
    AmbiguitySet, EmpiricalDistribution, GroundNorm, LeaderDecision, NetworkInstance, SupportBox,
    UncertaintySample,
};
use crate::solver::{self, SolverConfig, SolverError, SolverReport};
use serde::{Deserialize, Serialize};

/// Baseline selector with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineKind {
    Deterministic,
    StochasticSAA,
    /// Per-node demand interval half-widths ρ_i around the nominal demand;
    /// `None` defaults to the empirical demand range.
    RobustBox { rho: Option<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselinePlan {
    pub leader: LeaderDecision,
    pub objective: f64,
    pub report: SolverReport,
}

fn degenerate_ambiguity(
    dist: EmpiricalDistribution,
    support: &SupportBox,
) -> Result<AmbiguitySet, SolverError> {
    Ok(AmbiguitySet::new(
        dist,
        0.0,
        GroundNorm::L1,
        support.clone(),
    )?)
}

/// Single-scenario plan at a nominal demand vector.
pub fn solve_deterministic(
    inst: &NetworkInstance,
    nominal_demand: &[f64],
    support: &SupportBox,
    cfg: &SolverConfig,
) -> Result<BaselinePlan, SolverError> {
    let mut demand = nominal_demand.to_vec();
    support.clamp(&mut demand);
    let dist = EmpiricalDistribution {
        samples: vec![UncertaintySample { demand }],
    };
    let amb = degenerate_ambiguity(dist, support)?;
    let report = solver::solve(inst, &amb, cfg)?;
    Ok(BaselinePlan {
        leader: report.leader.clone(),
        objective: report.objective,
        report,
    })
}

/// Sample average approximation: minimizes the empirical average of the
/// merged objective. Shares the solve loop with the DRO path at ε = 0.
pub fn solve_saa(
    inst: &NetworkInstance,
    samples: &EmpiricalDistribution,
    support: &SupportBox,
    cfg: &SolverConfig,
) -> Result<BaselinePlan, SolverError> {
    let amb = degenerate_ambiguity(samples.clone(), support)?;
    let report = solver::solve(inst, &amb, cfg)?;
    Ok(BaselinePlan {
        leader: report.leader.clone(),
        objective: report.objective,
        report,
    })
}

/// Robust plan over per-node demand intervals `[d̄ − ρ, d̄ + ρ]`: by
/// monotonicity of the cost in demand this is the plan for the upper
/// corner, clamped into the support box.
pub fn solve_robust_box(
    inst: &NetworkInstance,
    nominal_demand: &[f64],
    rho: &[f64],
    support: &SupportBox,
    cfg: &SolverConfig,
) -> Result<BaselinePlan, SolverError> {
    let corner: Vec<f64> = nominal_demand
        .iter()
        .zip(rho)
        .map(|(&d, &r)| d + r.max(0.0))
        .collect();
    solve_deterministic(inst, &corner, support, cfg)
}

/// Runs a baseline with its defaults against a training distribution.
pub fn solve_baseline(
    kind: &BaselineKind,
    inst: &NetworkInstance,
    training: &EmpiricalDistribution,
    support: &SupportBox,
    cfg: &SolverConfig,
) -> Result<BaselinePlan, SolverError> {
    match kind {
        BaselineKind::Deterministic => {
            solve_deterministic(inst, &training.mean(), support, cfg)
        }
        BaselineKind::StochasticSAA => solve_saa(inst, training, support, cfg),
        BaselineKind::RobustBox { rho } => {
            let mean = training.mean();
            let rho = match rho {
                Some(r) => r.clone(),
                None => {
                    let (lo, hi) = training.range();
                    mean.iter()
                        .zip(lo.iter().zip(&hi))
                        .map(|(&m, (&l, &h))| (h - m).max(m - l).max(0.0))
                        .collect()
                }
            };
            solve_robust_box(inst, &mean, &rho, support, cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem;
    use crate::scenario;
    use crate::solver::Strategy;

    fn cfg() -> SolverConfig {
        SolverConfig {
            tolerance: 1e-7,
            strategy: Strategy::Enumerate,
            ..SolverConfig::default()
        }
    }

    fn one_node(cap: f64) -> (NetworkInstance, SupportBox) {
        (
            NetworkInstance {
                node_count: 1,
                arcs: vec![],
                inventory_cost: vec![1.0],
                transport_cost: vec![],
                penalty_cost: vec![2.0],
                alloc_cost: vec![0.0],
                flow_cost: vec![],
                storage_cap: vec![cap],
                transport_cap: vec![],
            },
            SupportBox {
                lower: vec![0.0],
                upper: vec![10.0],
            },
        )
    }

    #[test]
    fn deterministic_zero_demand_zero_cost() {
        let (inst, support) = one_node(10.0);
        let plan = solve_deterministic(&inst, &[0.0], &support, &cfg()).unwrap();
        assert!(plan.objective.abs() < 1e-9);
        assert!(plan.leader.inventory[0].abs() < 1e-9);
    }

    #[test]
    fn deterministic_penalty_dominated_stocks_demand() {
        // d=5, c=1 < p=2, C ≥ 5 → stock exactly 5, cost 5
        let (inst, support) = one_node(10.0);
        let plan = solve_deterministic(&inst, &[5.0], &support, &cfg()).unwrap();
        assert!((plan.objective - 5.0).abs() < 1e-6, "obj {}", plan.objective);
        assert!((plan.leader.inventory[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_matches_monolithic_at_point_distribution() {
        let inst = scenario::tiny2_instance();
        let spec = scenario::ScenarioSpec::new(scenario::Topology::Tiny2, 3);
        let support = spec.support();
        let nominal = vec![1.4, 2.2];
        let plan = solve_deterministic(&inst, &nominal, &support, &cfg()).unwrap();
        let amb = AmbiguitySet::new(
            EmpiricalDistribution {
                samples: vec![UncertaintySample {
                    demand: nominal.clone(),
                }],
            },
            0.0,
            GroundNorm::L1,
            support,
        )
        .unwrap();
        let mpec = crate::kkt::assemble_mpec(&inst, &amb).unwrap();
        let mono = crate::kkt::enumerate_complementarity(&mpec, 24).unwrap();
        assert!(
            (plan.objective - mono.objective).abs() < 1e-5,
            "plan {} vs monolithic {}",
            plan.objective,
            mono.objective
        );
    }

    #[test]
    fn saa_single_sample_equals_deterministic() {
        let inst = scenario::tiny2_instance();
        let spec = scenario::ScenarioSpec::new(scenario::Topology::Tiny2, 3);
        let support = spec.support();
        let sample = vec![1.7, 0.9];
        let dist = EmpiricalDistribution {
            samples: vec![UncertaintySample {
                demand: sample.clone(),
            }],
        };
        let a = solve_saa(&inst, &dist, &support, &cfg()).unwrap();
        let b = solve_deterministic(&inst, &sample, &support, &cfg()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
    }

    #[test]
    fn saa_one_node_two_samples_grid_oracle() {
        // samples {2, 4}, c=1, p=2: optimal stock anywhere in [2, 4] at
        // objective 4 (verified by 1-d grid search)
        let (inst, support) = one_node(10.0);
        let dist = EmpiricalDistribution {
            samples: vec![
                UncertaintySample { demand: vec![2.0] },
                UncertaintySample { demand: vec![4.0] },
            ],
        };
        let plan = solve_saa(&inst, &dist, &support, &cfg()).unwrap();
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        for k in 0..=10_000 {
            let x = 10.0 * k as f64 / 10_000.0;
            let v = x + 0.5 * (2.0 * (2.0f64 - x).max(0.0) + 2.0 * (4.0f64 - x).max(0.0));
            if v < best {
                best = v;
                arg = x;
            }
        }
        assert!((plan.objective - best).abs() < 1e-6, "obj {} grid {best}", plan.objective);
        let x = plan.leader.inventory[0];
        assert!((2.0 - 1e-6..=4.0 + 1e-6).contains(&x), "stock {x} [grid argmin {arg}]");
    }

    #[test]
    fn robust_zero_rho_equals_deterministic() {
        let inst = scenario::tiny2_instance();
        let spec = scenario::ScenarioSpec::new(scenario::Topology::Tiny2, 3);
        let support = spec.support();
        let nominal = vec![1.0, 1.5];
        let a = solve_robust_box(&inst, &nominal, &[0.0, 0.0], &support, &cfg()).unwrap();
        let b = solve_deterministic(&inst, &nominal, &support, &cfg()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
    }

    #[test]
    fn robust_plans_for_upper_corner() {
        // 1 node, d̄=3, ρ=2 → plans for d=5
        let (inst, support) = one_node(10.0);
        let plan = solve_robust_box(&inst, &[3.0], &[2.0], &support, &cfg()).unwrap();
        assert!((plan.leader.inventory[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn ordering_of_methods_on_tiny2() {
        // det ≤ SAA ≤ DRO(ε) ≤ RO when the robust box spans the support
        let inst = scenario::tiny2_instance();
        let spec = scenario::ScenarioSpec::new(scenario::Topology::Tiny2, 3);
        let support = spec.support();
        let dist = scenario::tiny2_canonical_samples();
        let det = solve_deterministic(&inst, &dist.mean(), &support, &cfg()).unwrap();
        let saa = solve_saa(&inst, &dist, &support, &cfg()).unwrap();
        let amb = AmbiguitySet::new(dist.clone(), 0.2, GroundNorm::L1, support.clone()).unwrap();
        let dro = solver::solve(&inst, &amb, &cfg()).unwrap();
        let mean = dist.mean();
        let rho: Vec<f64> = mean
            .iter()
            .zip(&support.upper)
            .map(|(&m, &u)| u - m)
            .collect();
        let ro = solve_robust_box(&inst, &mean, &rho, &support, &cfg()).unwrap();
        assert!(det.objective <= saa.objective + 1e-6);
        assert!(saa.objective <= dro.objective + 1e-6);
        assert!(dro.objective <= ro.objective + 1e-6);
    }

    #[test]
    fn saa_dro_consistency_on_fixtures() {
        let inst = scenario::tiny2_instance();
        let spec = scenario::ScenarioSpec::new(scenario::Topology::Tiny2, 17);
        let support = spec.support();
        let dist = scenario::sample_demands(&spec, 12).unwrap();
        let saa = solve_saa(&inst, &dist, &support, &cfg()).unwrap();
        let amb = AmbiguitySet::new(dist, 0.0, GroundNorm::L1, support).unwrap();
        let dro0 = solver::solve(&inst, &amb, &cfg()).unwrap();
        assert!((saa.objective - dro0.objective).abs() <= 1e-5);
    }

    #[test]
    fn saa_dominates_deterministic_on_shared_samples() {
        // SAA optimizes the empirical objective, so its in-sample cost is no
        // worse than the deterministic plan evaluated on the same samples
        let inst = scenario::tiny2_instance();
        let spec = scenario::ScenarioSpec::new(scenario::Topology::Tiny2, 23);
        let support = spec.support();
        let dist = scenario::sample_demands(&spec, 50).unwrap();
        let saa = solve_saa(&inst, &dist, &support, &cfg()).unwrap();
        let det = solve_deterministic(&inst, &dist.mean(), &support, &cfg()).unwrap();
        // evaluate the deterministic plan on the sample set
        let mut det_cost = 0.0;
        for s in &dist.samples {
            let fs =
                crate::kkt::solve_network_follower(&inst, s, &det.leader, 1e-9).unwrap();
            det_cost += problem::leader_cost(&inst, &det.leader, &fs.decision, s).unwrap()
                / dist.samples.len() as f64;
        }
        assert!(saa.objective <= det_cost + 1e-6);
    }
}
