//! Delay, rate, energy and load evaluators in the simplified form that the
//! solvers consume. Unassociated UEs (no association bit set) execute
//! everything locally; their radio and transmission terms are defined as
//! zero rather than 0/0. A required division by a zero rate yields an
//! infinite delay, the marker for an infeasible combination.

use super::decision::{AllocationDecision, PlacementDecision, Route};
use super::ModelParams;
use crate::scenario::{ChannelState, TaskSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    NonPositiveRate(f64),
    ZeroBandwidthShare,
}

impl std::fmt::Display for ModelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelError::NonPositiveRate(r) => write!(f, "non-positive processing rate {r}"),
            ModelError::ZeroBandwidthShare => write!(f, "SNR undefined for zero bandwidth share"),
        }
    }
}

impl std::error::Error for ModelError {}

/// Per-UE latency decomposition. The backhaul term is the system-wide
/// worst per-ES link delay and is shared by every UE in the slot.
#[derive(Debug, Clone, Default)]
pub struct LatencyBreakdown {
    /// Local compute time for the retained portion.
    pub ue_compute: f64,
    /// Compute time at the serving ES (zero for local/cloud execution).
    pub es_compute: f64,
    /// Compute time at the cloud (zero unless routed there).
    pub cloud_compute: f64,
    /// Uplink transmission delay UE -> receiving ES.
    pub radio: f64,
    /// Worst per-ES backhaul + fronthaul transfer delay.
    pub backhaul_max: f64,
    pub total_transmission: f64,
    pub total_propagation: f64,
    pub total_processing: f64,
    pub e2e: f64,
}

/// cycles / rate.
pub fn processing_delay(cycles: f64, rate: f64) -> Result<f64, ModelError> {
    if !(rate > 0.0) {
        return Err(ModelError::NonPositiveRate(rate));
    }
    Ok(cycles / rate)
}

/// Received SNR for one UE at one AP given its bandwidth share.
pub fn snr(
    tx_power: f64,
    gain: f64,
    share: f64,
    bandwidth: f64,
    noise_density: f64,
) -> Result<f64, ModelError> {
    if !(share > 0.0) {
        return Err(ModelError::ZeroBandwidthShare);
    }
    Ok(tx_power * gain / (share * bandwidth * noise_density))
}

/// Uplink rate of UE m (bits/s): share * (W / ln 2) * ln(1 + SNR) at the
/// associated ES, zero when unassociated.
pub fn uplink_rate(
    params: &ModelParams,
    channel: &ChannelState,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    m: usize,
) -> f64 {
    let share = alloc.bandwidth_share[m];
    let mut rate = 0.0;
    for k in 0..params.num_ess {
        if decision.assoc(m, k) {
            let g = channel.gain(m, k);
            if share > 0.0 && g > 0.0 {
                let gamma =
                    snr(params.tx_power[m], g, share, params.bandwidth, params.noise_density)
                        .expect("positive share");
                rate += share * (params.bandwidth / std::f64::consts::LN_2) * (1.0 + gamma).ln();
            }
        }
    }
    rate
}

/// Offloading transmission delay (1 - phi) a / R; zero when phi = 1 and an
/// infinite marker when offloading is required but the rate is zero.
pub fn transmission_delay_ue(size_bits: f64, local_portion: f64, rate: f64) -> f64 {
    let offloaded = (1.0 - local_portion) * size_bits;
    if offloaded <= 0.0 {
        0.0
    } else if rate > 0.0 {
        offloaded / rate
    } else {
        f64::INFINITY
    }
}

/// Per-ES backhaul transfer delay (simplified form): the aggregate
/// offloaded bits forwarded from ES k to the cloud over its link rate.
pub fn backhaul_delays(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    tasks: &[TaskSpec],
) -> Vec<f64> {
    (0..params.num_ess)
        .map(|k| {
            let bits: f64 = (0..params.num_ues)
                .filter(|&m| decision.edge_cloud(m, k))
                .map(|m| (1.0 - alloc.local_portion[m]) * tasks[m].size_bits)
                .sum();
            bits / params.backhaul_rate[k]
        })
        .collect()
}

/// Per-ES fronthaul transfer delay (simplified form), aggregated over all
/// neighbors of ES k.
pub fn fronthaul_delays(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    tasks: &[TaskSpec],
) -> Vec<f64> {
    (0..params.num_ess)
        .map(|k| {
            let mut delay = 0.0;
            for m in 0..params.num_ues {
                for k2 in 0..params.num_ess {
                    if k2 != k && decision.edge_edge(m, k, k2) {
                        delay += (1.0 - alloc.local_portion[m]) * tasks[m].size_bits
                            / params.fronthaul_rate[k][k2];
                    }
                }
            }
            delay
        })
        .collect()
}

/// Propagation delay of UE m's offloaded task (simplified form):
/// max over k of the cloud hop plus any edge-edge hop.
pub fn propagation_delay(params: &ModelParams, decision: &PlacementDecision, m: usize) -> f64 {
    (0..params.num_ess)
        .map(|k| {
            let mut d = 0.0;
            if decision.edge_cloud(m, k) {
                d += params.prop_es_cloud[k];
            }
            for k2 in 0..params.num_ess {
                if k2 != k && decision.edge_edge(m, k, k2) {
                    d += params.prop_es_es[k][k2];
                }
            }
            d
        })
        .fold(0.0, f64::max)
}

/// Same quantity with the max replaced by a sum; the two agree on every
/// decision satisfying the structural constraints (at most one server
/// contributes), which the tests assert.
pub fn propagation_delay_sum_form(
    params: &ModelParams,
    decision: &PlacementDecision,
    m: usize,
) -> f64 {
    (0..params.num_ess)
        .map(|k| {
            let mut d = 0.0;
            if decision.edge_cloud(m, k) {
                d += params.prop_es_cloud[k];
            }
            for k2 in 0..params.num_ess {
                if k2 != k && decision.edge_edge(m, k, k2) {
                    d += params.prop_es_es[k][k2];
                }
            }
            d
        })
        .sum()
}

/// Total processing delay of UE m (simplified form): local time plus the
/// worst per-ES server term.
pub fn total_processing_delay(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    tasks: &[TaskSpec],
    m: usize,
) -> f64 {
    let phi = alloc.local_portion[m];
    let local = phi * tasks[m].cycles / params.rate_ue[m];
    local + processing_server_term(params, decision, alloc, tasks, m, true)
}

/// The server part of the processing delay; `use_max` selects the literal
/// max-over-k evaluation, otherwise the sum form.
pub fn processing_server_term(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    tasks: &[TaskSpec],
    m: usize,
    use_max: bool,
) -> f64 {
    let phi = alloc.local_portion[m];
    let offload_cycles = (1.0 - phi) * tasks[m].cycles;
    let terms = (0..params.num_ess).map(|k| {
        let stay = indicator(decision.assoc(m, k))
            - (0..params.num_ess)
                .filter(|&k2| k2 != k)
                .map(|k2| indicator(decision.edge_edge(m, k, k2)))
                .sum::<f64>()
            - indicator(decision.edge_cloud(m, k));
        let mut t = stay * offload_cycles / params.rate_es[m][k];
        for k2 in 0..params.num_ess {
            if k2 != k && decision.edge_edge(m, k, k2) {
                t += offload_cycles / params.rate_es[m][k2];
            }
        }
        if decision.edge_cloud(m, k) {
            t += offload_cycles / params.rate_cloud[m];
        }
        t
    });
    if use_max {
        terms.fold(0.0, f64::max)
    } else {
        terms.sum()
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// End-to-end latency decomposition for every UE in the slot.
pub fn e2e_latency(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    channel: &ChannelState,
    tasks: &[TaskSpec],
) -> Vec<LatencyBreakdown> {
    let backhaul = backhaul_delays(params, decision, alloc, tasks);
    let fronthaul = fronthaul_delays(params, decision, alloc, tasks);
    let backhaul_max = backhaul
        .iter()
        .zip(&fronthaul)
        .map(|(b, f)| b + f)
        .fold(0.0, f64::max);

    (0..params.num_ues)
        .map(|m| {
            let phi = alloc.local_portion[m];
            let task = &tasks[m];
            let rate = uplink_rate(params, channel, decision, alloc, m);
            let radio = if decision.associated_es(m).is_some() {
                transmission_delay_ue(task.size_bits, phi, rate)
            } else if phi < 1.0 {
                // Offloading without association: infeasible combination.
                f64::INFINITY
            } else {
                0.0
            };
            let offload_cycles = (1.0 - phi) * task.cycles;
            let (es_compute, cloud_compute) = match decision.route(m) {
                Route::LocalOnly => (0.0, 0.0),
                Route::Edge { at } => (offload_cycles / params.rate_es[m][at], 0.0),
                Route::Forwarded { to, .. } => (offload_cycles / params.rate_es[m][to], 0.0),
                Route::Cloud { .. } => (0.0, offload_cycles / params.rate_cloud[m]),
            };
            let total_propagation = propagation_delay(params, decision, m);
            let total_processing = total_processing_delay(params, decision, alloc, tasks, m);
            let total_transmission = radio + backhaul_max;
            LatencyBreakdown {
                ue_compute: phi * task.cycles / params.rate_ue[m],
                es_compute,
                cloud_compute,
                radio,
                backhaul_max,
                total_transmission,
                total_propagation,
                total_processing,
                e2e: total_propagation + total_processing + total_transmission,
            }
        })
        .collect()
}

/// Total UE energy: compute term (mu/2) phi omega f^2 plus transmit power
/// times the uplink transmission delay.
pub fn energy(params: &ModelParams, m: usize, task: &TaskSpec, local_portion: f64, rate: f64) -> f64 {
    let compute = 0.5
        * params.eff_capacitance[m]
        * local_portion
        * task.cycles
        * params.rate_ue[m]
        * params.rate_ue[m];
    compute + params.tx_power[m] * transmission_delay_ue(task.size_bits, local_portion, rate)
}

/// Allocated compute load per ES and at the cloud (simplified forms).
pub fn compute_loads(
    params: &ModelParams,
    decision: &PlacementDecision,
) -> (Vec<f64>, f64) {
    let per_es = (0..params.num_ess)
        .map(|k| {
            let mut load = 0.0;
            for m in 0..params.num_ues {
                let stay = indicator(decision.assoc(m, k))
                    - (0..params.num_ess)
                        .filter(|&k2| k2 != k)
                        .map(|k2| indicator(decision.edge_edge(m, k, k2)))
                        .sum::<f64>()
                    - indicator(decision.edge_cloud(m, k));
                load += stay * params.rate_es[m][k];
            }
            for k2 in 0..params.num_ess {
                if k2 != k {
                    for m2 in 0..params.num_ues {
                        if decision.edge_edge(m2, k2, k) {
                            load += params.rate_es[m2][k];
                        }
                    }
                }
            }
            load
        })
        .collect();
    let cloud = (0..params.num_ues)
        .map(|m| {
            (0..params.num_ess)
                .filter(|&k| decision.edge_cloud(m, k))
                .map(|_| params.rate_cloud[m])
                .sum::<f64>()
        })
        .sum();
    (per_es, cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Scenario, Stream};
    use crate::ScenarioConfig;

    fn fixture() -> (ModelParams, Scenario) {
        let sc = Scenario::build(ScenarioConfig::default()).unwrap();
        (ModelParams::from_scenario(&sc), sc)
    }

    #[test]
    fn processing_delay_reference_values() {
        assert_eq!(processing_delay(0.0, 1e9).unwrap(), 0.0);
        assert!((processing_delay(3.0e5, 1e9).unwrap() - 3.0e-4).abs() < 1e-18);
        let d1 = processing_delay(7e5, 2e9).unwrap();
        let d2 = processing_delay(7e5, 1e9).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-15);
        assert!(processing_delay(1.0, 0.0).is_err());
        assert!(processing_delay(1.0, -1.0).is_err());
    }

    #[test]
    fn snr_reference_values() {
        assert!((snr(1.0, 4.0, 0.5, 2.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
        let g1 = snr(1.0, 4.0, 0.25, 2.0, 1.0).unwrap();
        let g2 = snr(1.0, 4.0, 0.5, 2.0, 1.0).unwrap();
        assert!((g1 - 2.0 * g2).abs() < 1e-12);
        assert_eq!(snr(1.0, 0.0, 0.5, 2.0, 1.0).unwrap(), 0.0);
        assert!(snr(1.0, 4.0, 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn uplink_rate_closed_form_and_monotonicity() {
        let (mut params, sc) = fixture();
        params.tx_power = vec![1.0; params.num_ues];
        params.bandwidth = std::f64::consts::LN_2;
        params.noise_density = 1.0;
        let mut decision = PlacementDecision::empty(params.num_ues, params.num_ess, 8);
        let mut alloc = AllocationDecision::all_local(params.num_ues);
        alloc.bandwidth_share[0] = 1.0;
        let mut channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        // Unassociated: zero rate.
        assert_eq!(uplink_rate(&params, &channel, &decision, &alloc, 0), 0.0);
        decision.set_assoc(0, 0, true);
        // gamma = P*g/(b*W*N0) = 3 with g chosen accordingly: b=1, W=ln2, N0=1.
        channel.entries[0][0].gain = 3.0 * std::f64::consts::LN_2;
        let rate = uplink_rate(&params, &channel, &decision, &alloc, 0);
        assert!((rate - 4.0_f64.ln()).abs() < 1e-12, "rate = {rate}");

        // Rate strictly increasing in the bandwidth share.
        let (params, _) = fixture();
        let mut prev = 0.0;
        for i in 1..=20 {
            alloc.bandwidth_share[0] = i as f64 / 20.0;
            let r = uplink_rate(&params, &channel, &decision, &alloc, 0);
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn transmission_delay_reference_values() {
        assert_eq!(transmission_delay_ue(1e4, 1.0, 1e6), 0.0);
        assert!((transmission_delay_ue(1e4, 0.5, 1e6) - 5e-3).abs() < 1e-15);
        // Linear in (1 - phi).
        let d25 = transmission_delay_ue(1e4, 0.25, 1e6);
        let d75 = transmission_delay_ue(1e4, 0.75, 1e6);
        assert!((d25 - 3.0 * d75).abs() < 1e-15);
        assert!(transmission_delay_ue(1e4, 0.5, 0.0).is_infinite());
    }

    #[test]
    fn backhaul_reference_values() {
        let (params, _) = fixture();
        let mut decision = PlacementDecision::empty(8, 2, 8);
        let mut alloc = AllocationDecision::all_local(8);
        let sc = Scenario::build(ScenarioConfig::default()).unwrap();
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &crate::scenario::RequestState { service: vec![0; 8], regenerations: 0 },
        );
        assert!(backhaul_delays(&params, &decision, &alloc, &tasks).iter().all(|&d| d == 0.0));

        // One UE pushing 1e6 offloaded bits through a 1e9 bit/s link.
        let mut tasks = tasks;
        tasks[0].size_bits = 2e6;
        alloc.local_portion[0] = 0.5;
        decision.set_assoc(0, 0, true);
        decision.set_edge_cloud(0, 0, true);
        let d = backhaul_delays(&params, &decision, &alloc, &tasks);
        assert!((d[0] - 1e-3).abs() < 1e-15);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn propagation_reference_values() {
        let (params, _) = fixture();
        let mut decision = PlacementDecision::empty(8, 2, 8);
        decision.set_assoc(0, 0, true);
        // Task stays at the associated ES: no propagation.
        assert_eq!(propagation_delay(&params, &decision, 0), 0.0);
        // 10 km of fiber at 2e8 m/s.
        decision.set_edge_cloud(0, 0, true);
        assert!((propagation_delay(&params, &decision, 0) - 5e-5).abs() < 1e-15);
        // Edge-edge hops are never longer than the cloud hop.
        for k in 0..2 {
            for k2 in 0..2 {
                assert!(params.prop_es_es[k][k2] <= params.prop_es_cloud[k]);
            }
        }
    }

    #[test]
    fn processing_cloud_route_uses_cloud_rate() {
        let (params, sc) = fixture();
        let mut decision = PlacementDecision::empty(8, 2, 8);
        decision.set_assoc(0, 1, true);
        decision.set_edge_cloud(0, 1, true);
        let mut alloc = AllocationDecision::all_local(8);
        alloc.local_portion[0] = 0.25;
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &crate::scenario::RequestState { service: vec![0; 8], regenerations: 0 },
        );
        let got = total_processing_delay(&params, &decision, &alloc, &tasks, 0);
        let local = 0.25 * tasks[0].cycles / 1e9;
        let cloud = 0.75 * tasks[0].cycles / 4e9;
        assert!((got - (local + cloud)).abs() < 1e-15);

        // phi = 1: only the local term remains.
        alloc.local_portion[0] = 1.0;
        let got = total_processing_delay(&params, &decision, &alloc, &tasks, 0);
        assert!((got - tasks[0].cycles / 1e9).abs() < 1e-15);
    }

    #[test]
    fn compute_loads_reference_values() {
        let (params, _) = fixture();
        let decision = PlacementDecision::empty(8, 2, 8);
        let (per_es, cloud) = compute_loads(&params, &decision);
        assert!(per_es.iter().all(|&l| l == 0.0));
        assert_eq!(cloud, 0.0);

        // One UE kept at its ES consumes exactly f_mk = 2 GHz.
        let mut decision = decision;
        decision.set_assoc(0, 1, true);
        let (per_es, cloud) = compute_loads(&params, &decision);
        assert_eq!(per_es[0], 0.0);
        assert!((per_es[1] - 2e9).abs() < 1e-3);
        assert_eq!(cloud, 0.0);
    }

    #[test]
    fn energy_reference_values() {
        let (mut params, _) = fixture();
        params.eff_capacitance[0] = 1e-27;
        params.rate_ue[0] = 1e9;
        let task = TaskSpec { deadline: 2e-3, size_bits: 1e4, cycles: 3e5, service_id: 0 };
        // Pure compute at phi = 1: (mu/2) omega f^2 = 1.5e-4 J.
        let e = energy(&params, 0, &task, 1.0, 0.0);
        assert!((e - 1.5e-4).abs() < 1e-12);
        // Transmit term equals P times the transmission delay.
        let e = energy(&params, 0, &task, 0.5, 1e6);
        let expect = 0.5 * 1.5e-4 + params.tx_power[0] * transmission_delay_ue(1e4, 0.5, 1e6);
        assert!((e - expect).abs() < 1e-15);
    }

    #[test]
    fn e2e_is_sum_of_breakdown() {
        let (params, sc) = fixture();
        let mut decision = PlacementDecision::empty(8, 2, 8);
        let mut alloc = AllocationDecision::all_local(8);
        for m in 0..8 {
            decision.set_assoc(m, m % 2, true);
            alloc.local_portion[m] = 0.3 + 0.05 * m as f64;
        }
        decision.set_placed(0, 0, true);
        decision.set_placed(0, 1, true);
        decision.set_edge_cloud(3, 1, true);
        decision.set_edge_edge(4, 0, 1, true);
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &crate::scenario::RequestState { service: vec![0; 8], regenerations: 0 },
        );
        let breakdown = e2e_latency(&params, &decision, &alloc, &channel, &tasks);
        for b in &breakdown {
            let total = b.total_propagation + b.total_processing + b.total_transmission;
            assert!((b.e2e - total).abs() < 1e-15);
            assert!(b.e2e >= 0.0 && b.e2e.is_finite());
        }
        // Fully local UEs still pay the system backhaul term but nothing else
        // transmission-wise.
        let mut alloc2 = AllocationDecision::all_local(8);
        alloc2.local_portion = vec![1.0; 8];
        let b2 = e2e_latency(&params, &decision, &alloc2, &channel, &tasks);
        for b in &b2 {
            assert_eq!(b.radio, 0.0);
        }
    }

    #[test]
    fn e2e_hand_computed_tiny_instance() {
        // One UE, one ES, cloud route, every term computed by hand.
        let cfg = ScenarioConfig {
            num_ues: 1,
            num_ess: 1,
            num_services: 1,
            max_services_per_es: 1,
            ue_positions: vec![[50.0, 100.0]],
            es_positions: vec![[100.0, 100.0]],
            ..Default::default()
        };
        let sc = Scenario::build(cfg).unwrap();
        let params = ModelParams::from_scenario(&sc);
        let mut decision = PlacementDecision::empty(1, 1, 1);
        decision.set_assoc(0, 0, true);
        decision.set_edge_cloud(0, 0, true);
        decision.set_placed(0, 0, true);
        let alloc = AllocationDecision {
            local_portion: vec![0.4],
            bandwidth_share: vec![1.0],
        };
        let mut channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        channel.entries[0][0].gain = 1e-9;
        let tasks = vec![TaskSpec {
            deadline: 2e-3,
            size_bits: 10832.0,
            cycles: 4e5,
            service_id: 0,
        }];
        let b = &e2e_latency(&params, &decision, &alloc, &channel, &tasks)[0];

        // Independent arithmetic, term by term.
        let gamma: f64 = 0.19952623149688797 * 1e-9 / (1.0 * 10e6 * 3.9810717055349695e-21);
        let rate = 1.0 * (10e6 / std::f64::consts::LN_2) * (1.0 + gamma).ln();
        let radio = 0.6 * 10832.0 / rate;
        let backhaul = 0.6 * 10832.0 / 1e9;
        let prop = 10_000.0 / 2e8;
        let proc = 0.4 * 4e5 / 1e9 + 0.6 * 4e5 / 4e9;
        let expect = radio + backhaul + prop + proc;
        assert!((b.e2e - expect).abs() < 1e-12 * expect.max(1.0), "{} vs {expect}", b.e2e);
    }

    #[test]
    fn e2e_monotone_in_server_rates() {
        let (params, sc) = fixture();
        let mut decision = PlacementDecision::empty(8, 2, 8);
        let mut alloc = AllocationDecision::all_local(8);
        for m in 0..8 {
            decision.set_assoc(m, m % 2, true);
            alloc.local_portion[m] = 0.5;
        }
        decision.set_edge_cloud(1, 1, true);
        decision.set_edge_edge(2, 0, 1, true);
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &crate::scenario::RequestState { service: vec![0; 8], regenerations: 0 },
        );
        let base: f64 = e2e_latency(&params, &decision, &alloc, &channel, &tasks)
            .iter()
            .map(|b| b.e2e)
            .sum();
        for scale in [1.25, 2.0, 4.0] {
            let mut faster = params.clone();
            for row in faster.rate_es.iter_mut() {
                for r in row.iter_mut() {
                    *r *= scale;
                }
            }
            for r in faster.rate_cloud.iter_mut() {
                *r *= scale;
            }
            let total: f64 = e2e_latency(&faster, &decision, &alloc, &channel, &tasks)
                .iter()
                .map(|b| b.e2e)
                .sum();
            assert!(total <= base + 1e-15);
        }
    }

    #[test]
    fn evaluators_are_pure() {
        let (params, sc) = fixture();
        let mut decision = PlacementDecision::empty(8, 2, 8);
        decision.set_assoc(0, 0, true);
        let alloc = AllocationDecision::all_local(8);
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &crate::scenario::RequestState { service: vec![0; 8], regenerations: 0 },
        );
        let a = e2e_latency(&params, &decision, &alloc, &channel, &tasks);
        let b = e2e_latency(&params, &decision, &alloc, &channel, &tasks);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.e2e.to_bits(), y.e2e.to_bits());
        }
    }
}
