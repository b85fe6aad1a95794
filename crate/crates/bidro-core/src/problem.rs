//! Domain types for bi-level DRO supply-chain problems and exact evaluators
//! for objectives, constraints, and realized costs.
//!
//! Naming follows the concrete scenario: the leader holds inventory `x` and
//! ships `y` along arcs; the follower allocates resources `z` and routes
//! flows after demand realizes. Demand coverage at a node is inventory plus
//! shipped-in quantity, `x_i + Σ_{(j,i)} y_ji`; unmet demand is penalized at
//! `p_i` per unit. All types are immutable value objects after construction
//! and every operation here is a pure function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid ambiguity set: {0}")]
    InvalidAmbiguity(String),
    #[error("empty sample list")]
    EmptySamples,
}

/// Supply-chain network with all leader- and follower-side parameters.
///
/// Per-node vectors have length `node_count`; per-arc vectors parallel `arcs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub node_count: usize,
    /// Directed arcs as (tail, head) node indices.
    pub arcs: Vec<(usize, usize)>,
    /// Inventory cost per unit, c_i.
    pub inventory_cost: Vec<f64>,
    /// Transport cost per unit shipped, t_ij.
    pub transport_cost: Vec<f64>,
    /// Penalty per unit of unmet demand, p_i.
    pub penalty_cost: Vec<f64>,
    /// Follower allocation cost per unit, q_i.
    pub alloc_cost: Vec<f64>,
    /// Follower flow cost per unit, r_ij.
    pub flow_cost: Vec<f64>,
    /// Storage capacity, C_i.
    pub storage_cap: Vec<f64>,
    /// Transport capacity, T_ij.
    pub transport_cap: Vec<f64>,
}

/// Validation knobs. The penalty-dominates-inventory requirement keeps the
/// benchmark meaningful (stocking is never strictly dominated by paying the
/// shortage penalty) but can be bypassed for deliberately odd instances.
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub require_penalty_dominates: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            require_penalty_dominates: true,
        }
    }
}

impl NetworkInstance {
    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        self.validate_with(ValidationOptions::default())
    }

    pub fn validate_with(&self, opts: ValidationOptions) -> Result<(), ProblemError> {
        let n = self.node_count;
        let a = self.arcs.len();
        let node_vecs = [
            ("c", self.inventory_cost.len()),
            ("p", self.penalty_cost.len()),
            ("q", self.alloc_cost.len()),
            ("C", self.storage_cap.len()),
        ];
        for (name, len) in node_vecs {
            if len != n {
                return Err(ProblemError::DimensionMismatch(format!(
                    "per-node vector {name} has length {len}, expected {n}"
                )));
            }
        }
        let arc_vecs = [
            ("t", self.transport_cost.len()),
            ("r", self.flow_cost.len()),
            ("T", self.transport_cap.len()),
        ];
        for (name, len) in arc_vecs {
            if len != a {
                return Err(ProblemError::DimensionMismatch(format!(
                    "per-arc vector {name} has length {len}, expected {a}"
                )));
            }
        }
        for (k, &(tail, head)) in self.arcs.iter().enumerate() {
            if tail >= n || head >= n {
                return Err(ProblemError::InvalidInstance(format!(
                    "arc {k} endpoints ({tail}, {head}) out of range for {n} nodes"
                )));
            }
            if tail == head {
                return Err(ProblemError::InvalidInstance(format!(
                    "arc {k} is a self-loop at node {tail}"
                )));
            }
        }
        let nonneg = |name: &str, v: &[f64]| -> Result<(), ProblemError> {
            for (i, &x) in v.iter().enumerate() {
                if !(x >= 0.0) {
                    return Err(ProblemError::InvalidInstance(format!(
                        "{name}[{i}] = {x} must be nonnegative"
                    )));
                }
            }
            Ok(())
        };
        nonneg("c", &self.inventory_cost)?;
        nonneg("t", &self.transport_cost)?;
        nonneg("p", &self.penalty_cost)?;
        nonneg("q", &self.alloc_cost)?;
        nonneg("r", &self.flow_cost)?;
        nonneg("C", &self.storage_cap)?;
        nonneg("T", &self.transport_cap)?;
        if opts.require_penalty_dominates {
            for i in 0..n {
                if self.penalty_cost[i] < self.inventory_cost[i] {
                    return Err(ProblemError::InvalidInstance(format!(
                        "penalty p[{i}] = {} is below inventory cost c[{i}] = {}; \
                         shortage would always dominate stocking",
                        self.penalty_cost[i], self.inventory_cost[i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Demand coverage per node for a leader decision: `x_i + Σ_{(j,i)∈A} y_ji`.
    pub fn coverage(&self, x: &LeaderDecision) -> Vec<f64> {
        let mut cov = x.inventory.clone();
        for (k, &(_, head)) in self.arcs.iter().enumerate() {
            cov[head] += x.shipment[k];
        }
        cov
    }

    fn check_leader_dims(&self, x: &LeaderDecision) -> Result<(), ProblemError> {
        if x.inventory.len() != self.node_count || x.shipment.len() != self.arcs.len() {
            return Err(ProblemError::DimensionMismatch(format!(
                "leader decision has {} inventories / {} shipments for instance with {} nodes / {} arcs",
                x.inventory.len(),
                x.shipment.len(),
                self.node_count,
                self.arcs.len()
            )));
        }
        Ok(())
    }

    fn check_follower_dims(&self, z: &FollowerDecision) -> Result<(), ProblemError> {
        if z.allocation.len() != self.node_count || z.flow.len() != self.arcs.len() {
            return Err(ProblemError::DimensionMismatch(format!(
                "follower decision has {} allocations / {} flows for instance with {} nodes / {} arcs",
                z.allocation.len(),
                z.flow.len(),
                self.node_count,
                self.arcs.len()
            )));
        }
        Ok(())
    }

    fn check_sample_dims(&self, xi: &UncertaintySample) -> Result<(), ProblemError> {
        if xi.demand.len() != self.node_count {
            return Err(ProblemError::DimensionMismatch(format!(
                "sample has {} demands for instance with {} nodes",
                xi.demand.len(),
                self.node_count
            )));
        }
        Ok(())
    }
}

/// Leader decision: inventory per node, shipment per arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderDecision {
    pub inventory: Vec<f64>,
    pub shipment: Vec<f64>,
}

impl LeaderDecision {
    pub fn zeros(inst: &NetworkInstance) -> Self {
        LeaderDecision {
            inventory: vec![0.0; inst.node_count],
            shipment: vec![0.0; inst.num_arcs()],
        }
    }

    pub fn within_bounds(&self, inst: &NetworkInstance, tol: f64) -> bool {
        self.inventory
            .iter()
            .zip(&inst.storage_cap)
            .all(|(&x, &cap)| x >= -tol && x <= cap + tol)
            && self
                .shipment
                .iter()
                .zip(&inst.transport_cap)
                .all(|(&y, &cap)| y >= -tol && y <= cap + tol)
    }
}

/// Follower decision: allocation per node (the scenario's z_i realizes the
/// general model's follower variable), flow per arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerDecision {
    pub allocation: Vec<f64>,
    pub flow: Vec<f64>,
}

impl FollowerDecision {
    pub fn zeros(inst: &NetworkInstance) -> Self {
        FollowerDecision {
            allocation: vec![0.0; inst.node_count],
            flow: vec![0.0; inst.num_arcs()],
        }
    }
}

/// Realization of the uncertain demand vector ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySample {
    pub demand: Vec<f64>,
}

/// N equally-weighted demand samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub samples: Vec<UncertaintySample>,
}

impl EmpiricalDistribution {
    pub fn new(samples: Vec<UncertaintySample>) -> Result<Self, ProblemError> {
        if samples.is_empty() {
            return Err(ProblemError::EmptySamples);
        }
        Ok(EmpiricalDistribution { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.samples.len() as f64
    }

    /// Component-wise mean demand.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.samples[0].demand.len();
        let mut m = vec![0.0; dim];
        for s in &self.samples {
            for (mi, d) in m.iter_mut().zip(&s.demand) {
                *mi += d;
            }
        }
        let w = self.weight();
        m.iter_mut().for_each(|v| *v *= w);
        m
    }

    /// Component-wise [min, max] envelope of the samples.
    pub fn range(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.samples[0].demand.len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for s in &self.samples {
            for j in 0..dim {
                lo[j] = lo[j].min(s.demand[j]);
                hi[j] = hi[j].max(s.demand[j]);
            }
        }
        (lo, hi)
    }
}

/// Per-component box support Ω for the uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SupportBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ProblemError> {
        if lower.len() != upper.len() {
            return Err(ProblemError::DimensionMismatch(format!(
                "support bounds have lengths {} / {}",
                lower.len(),
                upper.len()
            )));
        }
        for j in 0..lower.len() {
            if lower[j] > upper[j] {
                return Err(ProblemError::InvalidAmbiguity(format!(
                    "support lower[{j}] = {} exceeds upper[{j}] = {}",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(SupportBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .enumerate()
                .all(|(j, &v)| v >= self.lower[j] - tol && v <= self.upper[j] + tol)
    }

    pub fn clamp(&self, point: &mut [f64]) {
        for (j, v) in point.iter_mut().enumerate() {
            *v = v.max(self.lower[j]).min(self.upper[j]);
        }
    }
}

/// Ground metric on demand space. All dual reformulations here use L1
/// (dual norm L∞), which keeps every dual-norm row linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundNorm {
    L1,
    L2,
    Linf,
}

impl GroundNorm {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundNorm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            GroundNorm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            GroundNorm::Linf => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Wasserstein ball of radius ε around an empirical distribution, with box
/// support Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySet {
    pub center: EmpiricalDistribution,
    pub radius: f64,
    pub ground_norm: GroundNorm,
    pub support: SupportBox,
}

impl AmbiguitySet {
    pub fn new(
        center: EmpiricalDistribution,
        radius: f64,
        ground_norm: GroundNorm,
        support: SupportBox,
    ) -> Result<Self, ProblemError> {
        let set = AmbiguitySet {
            center,
            radius,
            ground_norm,
            support,
        };
        set.validate()?;
        Ok(set)
    }

    /// Builds the set with the default support box `[0, 2·max empirical demand]`
    /// per component.
    pub fn with_default_support(
        center: EmpiricalDistribution,
        radius: f64,
        ground_norm: GroundNorm,
    ) -> Result<Self, ProblemError> {
        let (_, hi) = center.range();
        let upper: Vec<f64> = hi.iter().map(|&v| 2.0 * v.max(0.0)).collect();
        let support = SupportBox::new(vec![0.0; upper.len()], upper)?;
        AmbiguitySet::new(center, radius, ground_norm, support)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.radius < 0.0 {
            return Err(ProblemError::InvalidAmbiguity(format!(
                "radius {} is negative",
                self.radius
            )));
        }
        for (i, s) in self.center.samples.iter().enumerate() {
            if !self.support.contains(&s.demand, 1e-9) {
                return Err(ProblemError::InvalidAmbiguity(format!(
                    "center sample {i} lies outside the support box"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }
}

/// Per-node unmet demand `max(0, d_i − x_i − Σ_{(j,i)} y_ji)`.
pub fn unmet_demand(
    inst: &NetworkInstance,
    x: &LeaderDecision,
    xi: &UncertaintySample,
) -> Result<Vec<f64>, ProblemError> {
    inst.check_leader_dims(x)?;
    inst.check_sample_dims(xi)?;
    let cov = inst.coverage(x);
    Ok(xi
        .demand
        .iter()
        .zip(&cov)
        .map(|(&d, &c)| (d - c).max(0.0))
        .collect())
}

/// Full realized leader cost
/// `c·x + t·y + Σ_i p_i·max(0, d_i − x_i − Σ_j y_ji) + (q·z + r·z_flow)`.
pub fn leader_cost(
    inst: &NetworkInstance,
    x: &LeaderDecision,
    z: &FollowerDecision,
    xi: &UncertaintySample,
) -> Result<f64, ProblemError> {
    let unmet = unmet_demand(inst, x, xi)?;
    let penalty: f64 = unmet
        .iter()
        .zip(&inst.penalty_cost)
        .map(|(&u, &p)| p * u)
        .sum();
    let inventory: f64 = x
        .inventory
        .iter()
        .zip(&inst.inventory_cost)
        .map(|(&v, &c)| c * v)
        .sum();
    let transport: f64 = x
        .shipment
        .iter()
        .zip(&inst.transport_cost)
        .map(|(&v, &t)| t * v)
        .sum();
    Ok(inventory + transport + penalty + follower_cost(inst, z)?)
}

/// Follower operating cost `q·z + r·z_flow`.
pub fn follower_cost(inst: &NetworkInstance, z: &FollowerDecision) -> Result<f64, ProblemError> {
    inst.check_follower_dims(z)?;
    let alloc: f64 = z
        .allocation
        .iter()
        .zip(&inst.alloc_cost)
        .map(|(&v, &q)| q * v)
        .sum();
    let flow: f64 = z
        .flow
        .iter()
        .zip(&inst.flow_cost)
        .map(|(&v, &r)| r * v)
        .sum();
    Ok(alloc + flow)
}

/// Fraction of total demand met across the evaluation samples:
/// `1 − Σ unmet / Σ demand`, and 1 when total demand is zero.
pub fn service_level(
    inst: &NetworkInstance,
    x: &LeaderDecision,
    eval_samples: &[UncertaintySample],
) -> Result<f64, ProblemError> {
    if eval_samples.is_empty() {
        return Err(ProblemError::EmptySamples);
    }
    let mut total_unmet = 0.0;
    let mut total_demand = 0.0;
    for xi in eval_samples {
        let unmet = unmet_demand(inst, x, xi)?;
        total_unmet += unmet.iter().sum::<f64>();
        total_demand += xi.demand.iter().sum::<f64>();
    }
    if total_demand == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - total_unmet / total_demand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    fn one_node() -> NetworkInstance {
        NetworkInstance {
            node_count: 1,
            arcs: vec![],
            inventory_cost: vec![1.0],
            transport_cost: vec![],
            penalty_cost: vec![2.0],
            alloc_cost: vec![3.0],
            flow_cost: vec![],
            storage_cap: vec![10.0],
            transport_cap: vec![],
        }
    }

    #[test]
    fn leader_cost_no_shortage() {
        let inst = one_node();
        let x = LeaderDecision {
            inventory: vec![5.0],
            shipment: vec![],
        };
        let z = FollowerDecision::zeros(&inst);
        let xi = UncertaintySample { demand: vec![3.0] };
        assert_eq!(leader_cost(&inst, &x, &z, &xi).unwrap(), 5.0);
    }

    #[test]
    fn leader_cost_with_shortage() {
        let inst = one_node();
        let x = LeaderDecision {
            inventory: vec![5.0],
            shipment: vec![],
        };
        let z = FollowerDecision::zeros(&inst);
        let xi = UncertaintySample { demand: vec![8.0] };
        assert_eq!(leader_cost(&inst, &x, &z, &xi).unwrap(), 11.0);
    }

    #[test]
    fn follower_cost_examples() {
        let inst = one_node();
        assert_eq!(
            follower_cost(&inst, &FollowerDecision::zeros(&inst)).unwrap(),
            0.0
        );
        let z = FollowerDecision {
            allocation: vec![2.0],
            flow: vec![],
        };
        assert_eq!(follower_cost(&inst, &z).unwrap(), 6.0);
    }

    #[test]
    fn tiny2_leader_cost_matches_term_by_term_oracle() {
        // Fixture T1 with a hand-evaluated decision: every term recomputed
        // independently below, then compared against leader_cost.
        let inst = scenario::tiny2_instance();
        let x = LeaderDecision {
            inventory: vec![1.5, 0.5],
            shipment: vec![1.0],
        };
        let z = FollowerDecision {
            allocation: vec![0.3, 0.7],
            flow: vec![0.2],
        };
        let xi = UncertaintySample {
            demand: vec![2.5, 1.0],
        };
        // term-by-term: c = [1.0, 1.2], t = [0.4], p = [4.0, 5.0],
        // q = [0.5, 0.8], r = [0.1]; the single arc runs 0 → 1.
        let inventory = 1.0 * 1.5 + 1.2 * 0.5; // 2.1
        let transport = 0.4 * 1.0; // 0.4
        let cover0 = 1.5; // no inflow into node 0
        let cover1 = 0.5 + 1.0; // inventory + shipped-in
        let penalty = 4.0 * (2.5f64 - cover0).max(0.0) + 5.0 * (1.0f64 - cover1).max(0.0); // 4.0
        let follower = 0.5 * 0.3 + 0.8 * 0.7 + 0.1 * 0.2; // 0.73
        let expected = inventory + transport + penalty + follower;
        let got = leader_cost(&inst, &x, &z, &xi).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
        assert!((got - 7.23).abs() < 1e-12);
    }

    #[test]
    fn service_level_examples() {
        let inst = one_node();
        let x = LeaderDecision {
            inventory: vec![6.0],
            shipment: vec![],
        };
        let all_covered = [UncertaintySample { demand: vec![5.0] }];
        assert_eq!(service_level(&inst, &x, &all_covered).unwrap(), 1.0);
        let short = [UncertaintySample { demand: vec![10.0] }];
        assert!((service_level(&inst, &x, &short).unwrap() - 0.6).abs() < 1e-12);
        assert!(service_level(&inst, &x, &[]).is_err());
    }

    #[test]
    fn service_level_matches_per_sample_tally() {
        let inst = scenario::tiny2_instance();
        let spec = scenario::ScenarioSpec {
            topology: scenario::Topology::Tiny2,
            seed: 99,
            demand_mean: 1.3,
            demand_stddev: 0.5,
            sample_count: 100,
            forecast_error: 0.0,
        };
        let dist = scenario::sample_demands(&spec, 100).unwrap();
        let x = LeaderDecision {
            inventory: vec![1.0, 0.8],
            shipment: vec![0.5],
        };
        let got = service_level(&inst, &x, &dist.samples).unwrap();
        // brute-force per-sample tally
        let mut unmet = 0.0;
        let mut total = 0.0;
        for s in &dist.samples {
            let cov = [1.0, 0.8 + 0.5];
            for j in 0..2 {
                unmet += (s.demand[j] - cov[j]).max(0.0);
                total += s.demand[j];
            }
        }
        assert!((got - (1.0 - unmet / total)).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn validation_catches_bad_instances() {
        let mut inst = one_node();
        inst.arcs = vec![(0, 0)];
        inst.transport_cost = vec![1.0];
        inst.flow_cost = vec![1.0];
        inst.transport_cap = vec![1.0];
        assert!(inst.validate().is_err()); // self-loop

        let mut inst = one_node();
        inst.penalty_cost = vec![0.5]; // below inventory cost
        assert!(inst.validate().is_err());
        assert!(inst
            .validate_with(ValidationOptions {
                require_penalty_dominates: false
            })
            .is_ok());

        let inst = one_node();
        let x = LeaderDecision {
            inventory: vec![1.0, 2.0],
            shipment: vec![],
        };
        let z = FollowerDecision::zeros(&inst);
        let xi = UncertaintySample { demand: vec![1.0] };
        assert!(leader_cost(&inst, &x, &z, &xi).is_err());
    }

    fn mix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn leader_cost_convex_and_monotone_in_demand() {
        let inst = scenario::tiny2_instance();
        let x = LeaderDecision {
            inventory: vec![1.0, 0.7],
            shipment: vec![0.4],
        };
        let z = FollowerDecision::zeros(&inst);
        let mut seed = 31337u64;
        for _ in 0..1000 {
            let a = UncertaintySample {
                demand: vec![mix(&mut seed) * 4.0, mix(&mut seed) * 4.0],
            };
            let b = UncertaintySample {
                demand: vec![mix(&mut seed) * 4.0, mix(&mut seed) * 4.0],
            };
            let theta = mix(&mut seed);
            let blend = UncertaintySample {
                demand: a
                    .demand
                    .iter()
                    .zip(&b.demand)
                    .map(|(&u, &v)| theta * u + (1.0 - theta) * v)
                    .collect(),
            };
            let ca = leader_cost(&inst, &x, &z, &a).unwrap();
            let cb = leader_cost(&inst, &x, &z, &b).unwrap();
            let cm = leader_cost(&inst, &x, &z, &blend).unwrap();
            assert!(cm <= theta * ca + (1.0 - theta) * cb + 1e-9);

            // monotone: bump one coordinate upward
            let mut bigger = a.clone();
            let j = if mix(&mut seed) < 0.5 { 0 } else { 1 };
            bigger.demand[j] += mix(&mut seed) * 2.0;
            let cbig = leader_cost(&inst, &x, &z, &bigger).unwrap();
            assert!(cbig >= ca - 1e-12);
        }
    }
}
