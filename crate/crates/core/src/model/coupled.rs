//! Original coupled-product forms of the load, transfer-delay, propagation
//! and processing evaluators, in which placement, association and
//! cooperation bits multiply each other. These are kept as an independent
//! reference implementation: on every decision satisfying the service
//! availability, connectivity and transfer conditions they must agree
//! exactly with the simplified forms in [`super::latency`], and the
//! equivalence suite enumerates that agreement exhaustively.

use super::decision::{AllocationDecision, PlacementDecision};
use super::ModelParams;
use crate::scenario::TaskSpec;

#[inline]
fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Coupled per-ES and cloud compute loads; `requests` maps each UE to its
/// requested service, which gates the placement bits.
pub fn compute_loads(
    params: &ModelParams,
    decision: &PlacementDecision,
    requests: &[usize],
) -> (Vec<f64>, f64) {
    let per_es = (0..params.num_ess)
        .map(|k| {
            let mut load = 0.0;
            for m in 0..params.num_ues {
                let g = ind(decision.placed(requests[m], k));
                let coop: f64 = (0..params.num_ess)
                    .filter(|&k2| k2 != k)
                    .map(|k2| ind(decision.edge_edge(m, k, k2)))
                    .sum();
                load += g
                    * ind(decision.assoc(m, k))
                    * (1.0 - coop - ind(decision.edge_cloud(m, k)))
                    * params.rate_es[m][k];
            }
            for k2 in 0..params.num_ess {
                if k2 != k {
                    for m2 in 0..params.num_ues {
                        load += ind(decision.placed(requests[m2], k))
                            * ind(decision.assoc(m2, k2))
                            * ind(decision.edge_edge(m2, k2, k))
                            * params.rate_es[m2][k];
                    }
                }
            }
            load
        })
        .collect();
    let cloud = (0..params.num_ess)
        .map(|k| {
            (0..params.num_ues)
                .map(|m| {
                    ind(decision.assoc(m, k))
                        * ind(decision.edge_cloud(m, k))
                        * params.rate_cloud[m]
                })
                .sum::<f64>()
        })
        .sum();
    (per_es, cloud)
}

/// Coupled per-ES backhaul transfer delay.
pub fn backhaul_delays(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    tasks: &[TaskSpec],
) -> Vec<f64> {
    (0..params.num_ess)
        .map(|k| {
            let bits: f64 = (0..params.num_ues)
                .map(|m| {
                    ind(decision.assoc(m, k))
                        * ind(decision.edge_cloud(m, k))
                        * (1.0 - alloc.local_portion[m])
                        * tasks[m].size_bits
                })
                .sum();
            bits / params.backhaul_rate[k]
        })
        .collect()
}

/// Coupled per-ES fronthaul transfer delay.
pub fn fronthaul_delays(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    tasks: &[TaskSpec],
    requests: &[usize],
) -> Vec<f64> {
    (0..params.num_ess)
        .map(|k| {
            let mut delay = 0.0;
            for m in 0..params.num_ues {
                for k2 in 0..params.num_ess {
                    if k2 != k {
                        delay += ind(decision.assoc(m, k))
                            * ind(decision.edge_edge(m, k, k2))
                            * ind(decision.placed(requests[m], k2))
                            * (1.0 - alloc.local_portion[m])
                            * tasks[m].size_bits
                            / params.fronthaul_rate[k][k2];
                    }
                }
            }
            delay
        })
        .collect()
}

/// Coupled propagation delay for UE m's offloaded task.
pub fn propagation_delay(
    params: &ModelParams,
    decision: &PlacementDecision,
    requests: &[usize],
    m: usize,
) -> f64 {
    (0..params.num_ess)
        .map(|k| {
            let mut d = ind(decision.assoc(m, k))
                * ind(decision.edge_cloud(m, k))
                * params.prop_es_cloud[k];
            for k2 in 0..params.num_ess {
                if k2 != k {
                    d += ind(decision.assoc(m, k))
                        * ind(decision.edge_edge(m, k, k2))
                        * ind(decision.placed(requests[m], k2))
                        * params.prop_es_es[k][k2];
                }
            }
            d
        })
        .fold(0.0, f64::max)
}

/// Coupled total processing delay for UE m.
pub fn total_processing_delay(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    tasks: &[TaskSpec],
    requests: &[usize],
    m: usize,
) -> f64 {
    let phi = alloc.local_portion[m];
    let offload_cycles = (1.0 - phi) * tasks[m].cycles;
    let local = phi * tasks[m].cycles / params.rate_ue[m];
    let server = (0..params.num_ess)
        .map(|k| {
            let coop: f64 = (0..params.num_ess)
                .filter(|&k2| k2 != k)
                .map(|k2| ind(decision.edge_edge(m, k, k2)))
                .sum();
            let mut t = (offload_cycles / params.rate_es[m][k])
                * ind(decision.assoc(m, k))
                * (1.0 - coop - ind(decision.edge_cloud(m, k)))
                * ind(decision.placed(requests[m], k));
            for k2 in 0..params.num_ess {
                if k2 != k {
                    t += ind(decision.assoc(m, k))
                        * ind(decision.edge_edge(m, k, k2))
                        * ind(decision.placed(requests[m], k2))
                        * (offload_cycles / params.rate_es[m][k2]);
                }
            }
            t += ind(decision.assoc(m, k))
                * ind(decision.edge_cloud(m, k))
                * (offload_cycles / params.rate_cloud[m]);
            t
        })
        .fold(0.0, f64::max);
    local + server
}
