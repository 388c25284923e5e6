//! Pure evaluators for every physical and economic quantity: delays,
//! rates, energy, compute loads, monetary costs, the scalarized objective,
//! and the full feasibility check.
//!
//! Each evaluator exists in the simplified form used throughout the
//! solvers ([`latency`], [`loads`]) and, where the two differ, in the
//! original coupled form ([`coupled`]) kept as an independent reference;
//! the two agree exactly on every decision satisfying the service
//! availability, connectivity and transfer-condition constraints.
//! All functions here are stateless and safe for concurrent use.

pub mod coupled;
pub mod cost;
pub mod decision;
pub mod feasibility;
pub mod latency;

pub use cost::{status_change_cost, total_cost, CostLedger, Prices};
pub use decision::{AllocationDecision, PlacementDecision, Route};
pub use feasibility::{check_feasibility, ConstraintId, Violation, FEASIBILITY_TOL};
pub use latency::LatencyBreakdown;

use crate::scenario::Scenario;

/// Flattened per-index view of the scenario parameters consumed by the
/// evaluators. Uniform scalars from the configuration are expanded to
/// per-UE / per-ES entries so heterogeneous instances can be expressed
/// directly (the reference tests rely on this).
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub num_ues: usize,
    pub num_ess: usize,
    pub num_services: usize,
    /// f_m^ue, cycles/s per UE.
    pub rate_ue: Vec<f64>,
    /// f_mk, cycles/s per (m, k).
    pub rate_es: Vec<Vec<f64>>,
    /// f_mc, cycles/s per UE.
    pub rate_cloud: Vec<f64>,
    /// F_k^max per ES.
    pub es_capacity: Vec<f64>,
    pub cloud_capacity: f64,
    /// Edge-cloud link rate per ES (bits/s).
    pub backhaul_rate: Vec<f64>,
    /// Edge-edge link rate per (k, k') (bits/s).
    pub fronthaul_rate: Vec<Vec<f64>>,
    /// Propagation delay ES -> cloud per ES (s).
    pub prop_es_cloud: Vec<f64>,
    /// Propagation delay ES -> ES per (k, k') (s).
    pub prop_es_es: Vec<Vec<f64>>,
    pub bandwidth: f64,
    pub noise_density: f64,
    /// Transmit power per UE (W).
    pub tx_power: Vec<f64>,
    /// Effective capacitance per UE.
    pub eff_capacitance: Vec<f64>,
    pub prices: Prices,
    pub cost_cap: f64,
    pub energy_cap: Vec<f64>,
    pub latency_cap: Vec<f64>,
    pub rate_floor: f64,
    pub weight_latency: f64,
    pub weight_cost: f64,
    pub max_services_per_es: Vec<usize>,
}

impl ModelParams {
    pub fn from_scenario(sc: &Scenario) -> Self {
        let cfg = &sc.cfg;
        let m = cfg.num_ues;
        let k = cfg.num_ess;
        ModelParams {
            num_ues: m,
            num_ess: k,
            num_services: cfg.num_services,
            rate_ue: vec![cfg.ue_rate; m],
            rate_es: vec![vec![cfg.es_rate; k]; m],
            rate_cloud: vec![cfg.cloud_rate; m],
            es_capacity: vec![cfg.es_capacity; k],
            cloud_capacity: cfg.cloud_capacity,
            backhaul_rate: vec![cfg.backhaul_rate; k],
            fronthaul_rate: vec![vec![cfg.fronthaul_rate; k]; k],
            prop_es_cloud: sc
                .distances
                .es_cloud
                .iter()
                .map(|d| d / cfg.propagation_speed)
                .collect(),
            prop_es_es: sc
                .distances
                .es_es
                .iter()
                .map(|row| row.iter().map(|d| d / cfg.propagation_speed).collect())
                .collect(),
            bandwidth: cfg.bandwidth,
            noise_density: cfg.noise_density,
            tx_power: vec![cfg.tx_power; m],
            eff_capacitance: vec![cfg.eff_capacitance; m],
            prices: Prices {
                install: cfg.price_install,
                uninstall: cfg.price_uninstall,
                operate: cfg.price_operate,
                request: cfg.price_request,
            },
            cost_cap: cfg.cost_cap,
            energy_cap: vec![cfg.energy_cap; m],
            latency_cap: vec![cfg.latency_cap; m],
            rate_floor: cfg.rate_floor,
            weight_latency: cfg.weight_latency,
            weight_cost: cfg.weight_cost,
            max_services_per_es: vec![cfg.max_services_per_es; k],
        }
    }
}

/// Scalarized objective: weight_latency * sum of per-UE end-to-end
/// latencies plus weight_cost * frame cost. Infinite latency markers
/// propagate.
pub fn objective(params: &ModelParams, e2e: &[f64], frame_cost: f64) -> f64 {
    params.weight_latency * e2e.iter().sum::<f64>() + params.weight_cost * frame_cost
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_weight_corners() {
        let sc = Scenario::build(crate::ScenarioConfig::default()).unwrap();
        let mut p = ModelParams::from_scenario(&sc);
        let e2e = [1e-3, 2e-3];
        p.weight_latency = 1.0;
        p.weight_cost = 0.0;
        assert!((objective(&p, &e2e, 5.0) - 3e-3).abs() < 1e-15);
        p.weight_latency = 0.0;
        p.weight_cost = 1.0;
        assert!((objective(&p, &e2e, 5.0) - 5.0).abs() < 1e-15);
        p.weight_latency = 0.25;
        p.weight_cost = 0.75;
        let by_hand = 0.25 * (1e-3 + 2e-3) + 0.75 * 5.0;
        assert!((objective(&p, &e2e, 5.0) - by_hand).abs() < 1e-15);
    }

    #[test]
    fn objective_propagates_infeasible_marker() {
        let sc = Scenario::build(crate::ScenarioConfig::default()).unwrap();
        let p = ModelParams::from_scenario(&sc);
        assert!(objective(&p, &[f64::INFINITY, 0.0], 1.0).is_infinite());
    }
}
