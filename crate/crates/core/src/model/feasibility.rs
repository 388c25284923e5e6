//! Full constraint checker. Produces the list of violated constraints with
//! normalized residual magnitudes; an empty list means feasible within
//! [`FEASIBILITY_TOL`]. Residuals are normalized by the constraint's own
//! right-hand-side scale so tolerances are unit-free.

use super::decision::{AllocationDecision, PlacementDecision};
use super::{cost, latency, ModelParams};
use crate::scenario::{ChannelState, TaskSpec};

/// Absolute tolerance on normalized residuals.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintId {
    LatencyCap { ue: usize },
    EnergyCap { ue: usize },
    RateFloor { ue: usize },
    CostCap,
    EsCapacity { es: usize },
    CloudCapacity,
    /// Offloading requires association: phi + sum_k sigma (1 - phi) = 1.
    Coupling { ue: usize },
    OffloadBox { ue: usize },
    BandwidthSum,
    BandwidthPositive { ue: usize },
    /// At most one association per UE.
    AssocLimit { ue: usize },
    /// At most one cooperation target (neighbor or cloud) per receiving ES.
    CoopLimit { ue: usize, es: usize },
    /// At most one edge-edge target per receiving ES.
    EdgeCoopLimit { ue: usize, es: usize },
    PlacementMin { es: usize },
    PlacementMax { es: usize },
    /// Service availability: an un-forwarded task needs the service placed.
    ServiceAvailability { ue: usize, es: usize },
    /// Cooperation bits require the association bit.
    CoopRequiresAssoc { ue: usize, es: usize },
    EdgeCoopRequiresAssoc { ue: usize, es: usize },
    CloudCoopRequiresAssoc { ue: usize, es: usize },
    /// Forwarding requires the service placed at the target.
    TransferRequiresPlacement { ue: usize, from: usize, to: usize },
}

impl std::fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use ConstraintId::*;
        match self {
            LatencyCap { ue } => write!(f, "latency_cap[{ue}]"),
            EnergyCap { ue } => write!(f, "energy_cap[{ue}]"),
            RateFloor { ue } => write!(f, "rate_floor[{ue}]"),
            CostCap => write!(f, "cost_cap"),
            EsCapacity { es } => write!(f, "es_capacity[{es}]"),
            CloudCapacity => write!(f, "cloud_capacity"),
            Coupling { ue } => write!(f, "coupling[{ue}]"),
            OffloadBox { ue } => write!(f, "offload_box[{ue}]"),
            BandwidthSum => write!(f, "bandwidth_sum"),
            BandwidthPositive { ue } => write!(f, "bandwidth_positive[{ue}]"),
            AssocLimit { ue } => write!(f, "assoc_limit[{ue}]"),
            CoopLimit { ue, es } => write!(f, "coop_limit[{ue},{es}]"),
            EdgeCoopLimit { ue, es } => write!(f, "edge_coop_limit[{ue},{es}]"),
            PlacementMin { es } => write!(f, "placement_min[{es}]"),
            PlacementMax { es } => write!(f, "placement_max[{es}]"),
            ServiceAvailability { ue, es } => write!(f, "service_availability[{ue},{es}]"),
            CoopRequiresAssoc { ue, es } => write!(f, "coop_requires_assoc[{ue},{es}]"),
            EdgeCoopRequiresAssoc { ue, es } => write!(f, "edge_coop_requires_assoc[{ue},{es}]"),
            CloudCoopRequiresAssoc { ue, es } => write!(f, "cloud_coop_requires_assoc[{ue},{es}]"),
            TransferRequiresPlacement { ue, from, to } => {
                write!(f, "transfer_requires_placement[{ue},{from}->{to}]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub id: ConstraintId,
    /// Normalized violation magnitude.
    pub residual: f64,
}

fn push_if(violations: &mut Vec<Violation>, id: ConstraintId, amount: f64, scale: f64) {
    let normalized = amount / scale.abs().max(1e-12);
    if normalized > FEASIBILITY_TOL {
        violations.push(Violation { id, residual: normalized });
    }
}

/// Structure-only checks on the binary decision: association, cooperation,
/// placement-range and the three coupling lemmas. These are exactly the
/// constraints the long-term rounding repair re-verifies.
pub fn structural_violations(
    params: &ModelParams,
    decision: &PlacementDecision,
    requests: &[usize],
) -> Vec<Violation> {
    let mut v = Vec::new();
    let kc = params.num_ess;
    for m in 0..params.num_ues {
        let s = requests[m];
        let assoc_sum: i32 = (0..kc).map(|k| decision.assoc(m, k) as i32).sum();
        push_if(&mut v, ConstraintId::AssocLimit { ue: m }, (assoc_sum - 1) as f64, 1.0);
        for k in 0..kc {
            let edge_sum: i32 = (0..kc)
                .filter(|&k2| k2 != k)
                .map(|k2| decision.edge_edge(m, k, k2) as i32)
                .sum();
            let cloud = decision.edge_cloud(m, k) as i32;
            let sigma = decision.assoc(m, k) as i32;
            push_if(
                &mut v,
                ConstraintId::CoopLimit { ue: m, es: k },
                (edge_sum + cloud - 1) as f64,
                1.0,
            );
            push_if(&mut v, ConstraintId::EdgeCoopLimit { ue: m, es: k }, (edge_sum - 1) as f64, 1.0);
            // Lemma: service availability at the receiving ES.
            let g = decision.placed(s, k) as i32;
            push_if(
                &mut v,
                ConstraintId::ServiceAvailability { ue: m, es: k },
                (sigma - edge_sum - cloud - g) as f64,
                1.0,
            );
            // Lemma: cooperation requires connectivity.
            push_if(
                &mut v,
                ConstraintId::CoopRequiresAssoc { ue: m, es: k },
                (edge_sum + cloud - sigma) as f64,
                1.0,
            );
            push_if(
                &mut v,
                ConstraintId::EdgeCoopRequiresAssoc { ue: m, es: k },
                (edge_sum - sigma) as f64,
                1.0,
            );
            push_if(
                &mut v,
                ConstraintId::CloudCoopRequiresAssoc { ue: m, es: k },
                (cloud - sigma) as f64,
                1.0,
            );
            // Lemma: forwarding requires the service at the target.
            for k2 in 0..kc {
                if k2 != k && decision.edge_edge(m, k, k2) && !decision.placed(s, k2) {
                    v.push(Violation {
                        id: ConstraintId::TransferRequiresPlacement { ue: m, from: k, to: k2 },
                        residual: 1.0,
                    });
                }
            }
        }
    }
    for k in 0..kc {
        let count = decision.services_on(k) as f64;
        push_if(&mut v, ConstraintId::PlacementMin { es: k }, 1.0 - count, 1.0);
        push_if(
            &mut v,
            ConstraintId::PlacementMax { es: k },
            count - params.max_services_per_es[k] as f64,
            1.0,
        );
    }
    v
}

/// Full feasibility report for one slot.
pub fn check_feasibility(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    channel: &ChannelState,
    tasks: &[TaskSpec],
    requests: &[usize],
    prev_placement: &[bool],
) -> Vec<Violation> {
    let mut v = structural_violations(params, decision, requests);

    let breakdown = latency::e2e_latency(params, decision, alloc, channel, tasks);
    for (m, b) in breakdown.iter().enumerate() {
        push_if(
            &mut v,
            ConstraintId::LatencyCap { ue: m },
            b.e2e - params.latency_cap[m],
            params.latency_cap[m],
        );
    }
    for m in 0..params.num_ues {
        let phi = alloc.local_portion[m];
        let rate = latency::uplink_rate(params, channel, decision, alloc, m);
        let e = latency::energy(params, m, &tasks[m], phi, rate);
        push_if(&mut v, ConstraintId::EnergyCap { ue: m }, e - params.energy_cap[m], params.energy_cap[m]);

        let associated = decision.associated_es(m).is_some();
        if associated {
            push_if(&mut v, ConstraintId::RateFloor { ue: m }, params.rate_floor - rate, params.rate_floor);
            if alloc.bandwidth_share[m] <= 0.0 {
                v.push(Violation {
                    id: ConstraintId::BandwidthPositive { ue: m },
                    residual: (-alloc.bandwidth_share[m]).max(1e-9),
                });
            }
        }
        let assoc_sum: f64 = (0..params.num_ess).map(|k| decision.assoc(m, k) as i32 as f64).sum();
        let coupling = (phi + assoc_sum * (1.0 - phi) - 1.0).abs();
        push_if(&mut v, ConstraintId::Coupling { ue: m }, coupling, 1.0);
        push_if(&mut v, ConstraintId::OffloadBox { ue: m }, (phi - 1.0).max(-phi), 1.0);
    }
    let share_sum: f64 = alloc.bandwidth_share.iter().sum();
    push_if(&mut v, ConstraintId::BandwidthSum, share_sum - 1.0, 1.0);

    let ledger = cost::total_cost(decision, prev_placement, &params.prices);
    push_if(&mut v, ConstraintId::CostCap, ledger.total - params.cost_cap, params.cost_cap);

    let (es_loads, cloud_load) = latency::compute_loads(params, decision);
    for (k, load) in es_loads.iter().enumerate() {
        push_if(
            &mut v,
            ConstraintId::EsCapacity { es: k },
            load - params.es_capacity[k],
            params.es_capacity[k],
        );
    }
    push_if(
        &mut v,
        ConstraintId::CloudCapacity,
        cloud_load - params.cloud_capacity,
        params.cloud_capacity,
    );
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{RequestState, Scenario, Stream};
    use crate::ScenarioConfig;

    struct Fixture {
        params: ModelParams,
        channel: ChannelState,
        tasks: Vec<TaskSpec>,
        requests: Vec<usize>,
    }

    fn fixture() -> Fixture {
        let sc = Scenario::build(ScenarioConfig::default()).unwrap();
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let requests = vec![0; 8];
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &RequestState { service: requests.clone(), regenerations: 0 },
        );
        Fixture { params: ModelParams::from_scenario(&sc), channel, tasks, requests }
    }

    /// Lemma-feasible all-local point: every UE keeps its task, each ES
    /// hosts one service.
    fn all_local_point(_f: &Fixture) -> (PlacementDecision, AllocationDecision) {
        let mut d = PlacementDecision::empty(8, 2, 8);
        for k in 0..2 {
            d.set_placed(0, k, true);
        }
        (d, AllocationDecision::all_local(8))
    }

    #[test]
    fn all_local_point_is_feasible() {
        let f = fixture();
        let (d, a) = all_local_point(&f);
        let prev: Vec<bool> = d.placement_bits().to_vec();
        let report = check_feasibility(&f.params, &d, &a, &f.channel, &f.tasks, &f.requests, &prev);
        assert!(report.is_empty(), "unexpected violations: {report:?}");
    }

    #[test]
    fn all_local_infeasible_when_local_delay_exceeds_cap() {
        let mut f = fixture();
        for c in f.params.latency_cap.iter_mut() {
            *c = 1e-6;
        }
        let (d, a) = all_local_point(&f);
        let prev: Vec<bool> = d.placement_bits().to_vec();
        let report = check_feasibility(&f.params, &d, &a, &f.channel, &f.tasks, &f.requests, &prev);
        assert!(report.iter().any(|v| matches!(v.id, ConstraintId::LatencyCap { .. })));
    }

    #[test]
    fn bandwidth_overcommit_reports_residual() {
        let f = fixture();
        let (d, mut a) = all_local_point(&f);
        a.bandwidth_share = vec![1.5 / 8.0; 8];
        let prev: Vec<bool> = d.placement_bits().to_vec();
        let report = check_feasibility(&f.params, &d, &a, &f.channel, &f.tasks, &f.requests, &prev);
        let bw = report
            .iter()
            .find(|v| v.id == ConstraintId::BandwidthSum)
            .expect("bandwidth violation");
        assert!((bw.residual - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lemma_violations_detected() {
        let f = fixture();
        let mut d = PlacementDecision::empty(8, 2, 8);
        d.set_placed(0, 0, true);
        d.set_placed(0, 1, true);
        // Cooperation without association.
        d.set_edge_cloud(2, 0, true);
        let report = structural_violations(&f.params, &d, &f.requests);
        assert!(report
            .iter()
            .any(|v| v.id == ConstraintId::CloudCoopRequiresAssoc { ue: 2, es: 0 }));
        // Stay at the ES without the service placed.
        let mut d2 = PlacementDecision::empty(8, 2, 8);
        d2.set_placed(1, 0, true);
        d2.set_placed(1, 1, true);
        d2.set_assoc(0, 0, true); // requested service 0 not placed
        let report = structural_violations(&f.params, &d2, &f.requests);
        assert!(report
            .iter()
            .any(|v| v.id == ConstraintId::ServiceAvailability { ue: 0, es: 0 }));
        // Forwarding to an ES lacking the service.
        let mut d3 = PlacementDecision::empty(8, 2, 8);
        d3.set_placed(0, 0, true);
        d3.set_placed(1, 1, true);
        d3.set_assoc(0, 0, true);
        d3.set_edge_edge(0, 0, 1, true);
        let report = structural_violations(&f.params, &d3, &f.requests);
        assert!(report
            .iter()
            .any(|v| v.id == ConstraintId::TransferRequiresPlacement { ue: 0, from: 0, to: 1 }));
    }

    /// Independent re-evaluation of a few constraint families on random
    /// decisions, duplicated with separate arithmetic.
    #[test]
    fn random_decisions_match_duplicate_evaluator() {
        use rand::Rng;
        let f = fixture();
        let mut rng = crate::scenario::substream(99, Stream::Scheme);
        for _ in 0..200 {
            let mut d = PlacementDecision::empty(8, 2, 8);
            let mut a = AllocationDecision::all_local(8);
            for m in 0..8 {
                if rng.random::<bool>() {
                    d.set_assoc(m, rng.random_range(0..2), true);
                }
                a.local_portion[m] = rng.random::<f64>();
                a.bandwidth_share[m] = rng.random::<f64>() / 4.0;
            }
            for s in 0..8 {
                for k in 0..2 {
                    if rng.random::<f64>() < 0.3 {
                        d.set_placed(s, k, true);
                    }
                }
            }
            let prev = vec![false; 16];
            let report =
                check_feasibility(&f.params, &d, &a, &f.channel, &f.tasks, &f.requests, &prev);

            // Duplicate: bandwidth sum.
            let sum: f64 = a.bandwidth_share.iter().sum();
            let expect_bw = sum - 1.0 > FEASIBILITY_TOL;
            assert_eq!(
                report.iter().any(|v| v.id == ConstraintId::BandwidthSum),
                expect_bw
            );
            // Duplicate: association limit.
            for m in 0..8 {
                let n: i32 = (0..2).map(|k| d.assoc(m, k) as i32).sum();
                assert_eq!(
                    report.iter().any(|v| v.id == ConstraintId::AssocLimit { ue: m }),
                    n > 1
                );
            }
            // Duplicate: ES capacity via an independent load count.
            for k in 0..2 {
                let mut load = 0.0;
                for m in 0..8 {
                    if d.assoc(m, k) && !d.edge_cloud(m, k) {
                        let fwd = (0..2).any(|k2| k2 != k && d.edge_edge(m, k, k2));
                        if !fwd {
                            load += f.params.rate_es[m][k];
                        }
                    }
                    for k2 in 0..2 {
                        if k2 != k && d.edge_edge(m, k2, k) {
                            load += f.params.rate_es[m][k];
                        }
                    }
                }
                let expect = load - f.params.es_capacity[k]
                    > FEASIBILITY_TOL * f.params.es_capacity[k];
                assert_eq!(
                    report.iter().any(|v| v.id == ConstraintId::EsCapacity { es: k }),
                    expect,
                    "es {k} load {load}"
                );
            }
        }
    }
}
