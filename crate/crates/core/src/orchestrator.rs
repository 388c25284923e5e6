//! Two-timescale simulation loop: binary decisions per long-term frame,
//! continuous allocations per short slot, with re-optimization triggers on
//! new service requests and missed deadlines.

use rand::Rng;

use crate::benchmarks::Scheme;
use crate::longterm::{self, LspError, LspInputs, LspPins};
use crate::model::{self, latency, AllocationDecision, ModelParams, PlacementDecision};
use crate::scenario::{ChannelState, Scenario, Stream};
use crate::shortterm;

/// Latency headroom treated as a violation trigger (relative).
const TRIGGER_TOL: f64 = 1e-6;

/// Per-slot record of one run.
#[derive(Debug, Clone)]
pub struct SlotRecord {
    pub frame: usize,
    pub slot: usize,
    /// Scalarized objective with the frame's total cost.
    pub objective: f64,
    /// Same with the running-average cost in place of the frame total.
    pub objective_avg_cost: f64,
    /// Sum of per-UE end-to-end latencies (s).
    pub latency_total: f64,
    pub worst_latency: f64,
    pub energy_total: f64,
    /// Frame cost carried on each of its slots.
    pub cost_total: f64,
    /// Mean offloaded fraction across UEs.
    pub offload_mean: f64,
    /// The long-term flag fired at this slot.
    pub trigger: bool,
    pub feasible: bool,
    pub lsp_iterations: usize,
    pub ssp_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame: usize,
    pub cost: f64,
    /// Exact long-term objective of the decision in force.
    pub lsp_objective: f64,
    /// A long-term solve happened at this frame.
    pub reoptimized: bool,
    pub fallback: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub slots: Vec<SlotRecord>,
    pub frames: Vec<FrameRecord>,
    pub trigger_count: usize,
    /// Running average cost over the executed frames.
    pub average_cost: f64,
    /// Per-frame exact-search comparison, when requested.
    pub oracle: Vec<OracleRecord>,
}

/// Penalty-SCA versus exact search on identical long-term inputs.
#[derive(Debug, Clone)]
pub struct OracleRecord {
    pub frame: usize,
    pub alg_objective: f64,
    pub exact_objective: f64,
    pub alg_cost: f64,
    pub exact_cost: f64,
}

#[derive(Debug)]
pub enum RunError {
    LongTerm(LspError),
    ShortTerm(shortterm::SspError),
    Oracle(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::LongTerm(e) => write!(f, "long-term solve: {e}"),
            RunError::ShortTerm(e) => write!(f, "short-term solve: {e}"),
            RunError::Oracle(msg) => write!(f, "exact-search comparison: {msg}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Run parameters beyond the scenario itself.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scheme: Scheme,
    pub penalty: f64,
    pub frames: Option<usize>,
    pub slots_per_frame: Option<usize>,
    /// Also solve every long-term stage exactly and record the gap.
    pub oracle: Option<crate::bnb::BnbOptions>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            scheme: Scheme::Proposed,
            penalty: longterm::DEFAULT_PENALTY,
            frames: None,
            slots_per_frame: None,
            oracle: None,
        }
    }
}

/// Execute the full two-timescale loop for one scenario and scheme.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunTrace, RunError> {
    let params = ModelParams::from_scenario(scenario);
    let frames = options.frames.unwrap_or(scenario.cfg.frames);
    let slots_per_frame = options.slots_per_frame.unwrap_or(scenario.cfg.slots_per_frame);
    let alloc_pins = options.scheme.alloc_pins();

    let mut channel_rng = scenario.substream(Stream::Channels);
    let mut task_rng = scenario.substream(Stream::Tasks);
    let mut request_rng = scenario.substream(Stream::Requests);
    let mut anchor_rng = scenario.substream(Stream::Anchors);
    let mut scheme_rng = scenario.substream(Stream::Scheme);

    let mut requests = scenario.initial_requests(&mut request_rng);
    let mut prev_requests = requests.service.clone();
    let mut prev_placement = vec![false; params.num_services * params.num_ess];
    let mut decision: Option<PlacementDecision> = None;
    let mut last_alloc: Option<AllocationDecision> = None;
    let mut long_term_flag = true;

    let mut trace = RunTrace::default();
    let mut cost_accum = 0.0;

    for frame in 0..frames {
        if frame > 0 {
            crate::scenario::advance_requests(
                &mut requests,
                frame,
                &mut request_rng,
                scenario.cfg.num_services,
            );
            if requests.service != prev_requests {
                long_term_flag = true;
            }
            prev_requests = requests.service.clone();
        }

        let mut reoptimized = false;
        let mut fallback = false;
        let mut lsp_iterations = 0;
        let mut lsp_objective = f64::NAN;
        let mut frame_trigger = long_term_flag;
        let mut frame_started = false;

        for slot in 0..slots_per_frame {
            let channel = scenario.draw_slot_channel(&mut channel_rng);
            let tasks = scenario.draw_slot_tasks(&mut task_rng, &requests);

            if long_term_flag {
                let alloc = last_alloc
                    .clone()
                    .unwrap_or_else(|| shortterm::default_allocation(&params, &channel, &tasks));
                let inputs = LspInputs {
                    params: &params,
                    channel: &channel,
                    tasks: &tasks,
                    requests: &requests.service,
                    alloc: &alloc,
                    prev_placement: &prev_placement,
                };
                let pins = scheme_lsp_pins(
                    &options.scheme,
                    &params,
                    &channel,
                    &mut scheme_rng,
                );
                match longterm::solve_lsp(
                    &inputs,
                    options.penalty,
                    &pins,
                    &mut anchor_rng,
                    longterm::LSP_TOL,
                    longterm::LSP_MAX_ITER,
                ) {
                    Ok(out) => {
                        lsp_iterations = out.trace.len();
                        fallback = out.fallback;
                        lsp_objective = out.objective;
                        reoptimized = true;
                        if let Some(bnb_options) = &options.oracle {
                            let exact = crate::bnb::solve_exact(&inputs, bnb_options)
                                .map_err(|e| RunError::Oracle(e.to_string()))?;
                            let alg_ledger = model::total_cost(
                                &out.decision,
                                &prev_placement,
                                &params.prices,
                            );
                            let exact_ledger = model::total_cost(
                                &exact.decision,
                                &prev_placement,
                                &params.prices,
                            );
                            trace.oracle.push(OracleRecord {
                                frame,
                                alg_objective: out.objective,
                                exact_objective: exact.objective,
                                alg_cost: alg_ledger.total,
                                exact_cost: exact_ledger.total,
                            });
                        }
                        decision = Some(out.decision);
                        long_term_flag = false;
                    }
                    Err(LspError::Infeasible(_)) => {
                        // Unsolvable under the fixed allocation: keep the
                        // decision in force and retry after the next
                        // short-term solve refreshes the allocation.
                        long_term_flag = true;
                        fallback = true;
                        if decision.is_none() {
                            decision = Some(minimal_decision(&params));
                        }
                    }
                    Err(e) => return Err(RunError::LongTerm(e)),
                }
            }
            let Some(current) = decision.clone() else {
                unreachable!("a decision is always in force after the first long-term pass");
            };

            // Frame cost is fixed by the decision in force at its start.
            if !frame_started {
                let ledger = model::total_cost(&current, &prev_placement, &params.prices);
                prev_placement = current.placement_bits().to_vec();
                cost_accum += ledger.total;
                trace.frames.push(FrameRecord {
                    frame,
                    cost: ledger.total,
                    lsp_objective,
                    reoptimized,
                    fallback,
                });
                frame_started = true;
            }
            let frame_cost = trace.frames.last().unwrap().cost;
            let frames_done = trace.frames.len() as f64;
            let avg_cost = cost_accum / frames_done;

            let ssp = shortterm::solve_ssp(
                &params,
                &current,
                &channel,
                &tasks,
                &alloc_pins,
                params.weight_cost * avg_cost,
                shortterm::SSP_TOL,
                shortterm::SSP_MAX_ITER,
            )
            .map_err(RunError::ShortTerm)?;
            let alloc = ssp.allocation.clone();
            last_alloc = Some(alloc.clone());

            let breakdown = latency::e2e_latency(&params, &current, &alloc, &channel, &tasks);
            let latency_total: f64 = breakdown.iter().map(|b| b.e2e).sum();
            let worst_latency = breakdown.iter().map(|b| b.e2e).fold(0.0, f64::max);
            let energy_total: f64 = (0..params.num_ues)
                .map(|m| {
                    let rate = latency::uplink_rate(&params, &channel, &current, &alloc, m);
                    latency::energy(&params, m, &tasks[m], alloc.local_portion[m], rate)
                })
                .sum();
            let offload_mean = alloc
                .local_portion
                .iter()
                .map(|phi| 1.0 - phi)
                .sum::<f64>()
                / params.num_ues as f64;
            let feasible = ssp.feasible
                && breakdown
                    .iter()
                    .enumerate()
                    .all(|(m, b)| b.e2e <= params.latency_cap[m] * (1.0 + TRIGGER_TOL));

            // Deadline misses re-arm the long-term stage and end the frame.
            let mut slot_trigger = false;
            if !feasible {
                long_term_flag = true;
                slot_trigger = true;
            }

            trace.slots.push(SlotRecord {
                frame,
                slot,
                objective: model::objective(
                    &params,
                    &breakdown.iter().map(|b| b.e2e).collect::<Vec<_>>(),
                    frame_cost,
                ),
                objective_avg_cost: model::objective(
                    &params,
                    &breakdown.iter().map(|b| b.e2e).collect::<Vec<_>>(),
                    avg_cost,
                ),
                latency_total,
                worst_latency,
                energy_total,
                cost_total: frame_cost,
                offload_mean,
                trigger: frame_trigger && slot == 0 || slot_trigger,
                feasible,
                lsp_iterations,
                ssp_iterations: ssp.trace.len(),
            });
            if slot_trigger {
                frame_trigger = true;
                break;
            }
        }

        if frame_trigger {
            trace.trigger_count += 1;
        }
    }
    trace.average_cost = if trace.frames.is_empty() {
        0.0
    } else {
        cost_accum / trace.frames.len() as f64
    };
    Ok(trace)
}

/// Long-term pins implied by a scheme at one re-optimization point.
fn scheme_lsp_pins(
    scheme: &Scheme,
    params: &ModelParams,
    channel: &ChannelState,
    scheme_rng: &mut rand_chacha::ChaCha8Rng,
) -> LspPins {
    let layout = longterm::LspLayout::new(params.num_ues, params.num_ess, params.num_services);
    match scheme {
        Scheme::FixedUserAssociation => {
            let mut pins = LspPins::none();
            for m in 0..params.num_ues {
                let best = (0..params.num_ess)
                    .max_by(|&a, &b| {
                        channel
                            .gain(m, a)
                            .partial_cmp(&channel.gain(m, b))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap_or(0);
                pins = pins.pin_association(&layout, m, best);
            }
            pins
        }
        Scheme::RandomUserAssociation => {
            let mut pins = LspPins::none();
            for m in 0..params.num_ues {
                let es = scheme_rng.random_range(0..params.num_ess);
                pins = pins.pin_association(&layout, m, es);
            }
            pins
        }
        Scheme::NoEdgeCooperation => LspPins::none().pin_no_edge_cooperation(&layout),
        Scheme::WithoutCloud => LspPins::none().pin_no_cloud(&layout),
        Scheme::Proposed
        | Scheme::EqualBandwidth
        | Scheme::FixedOffload { .. } => LspPins::none(),
    }
}

/// Minimal structurally valid decision: one service per ES, nobody
/// associated. Used only when the very first long-term solve is blocked.
fn minimal_decision(params: &ModelParams) -> PlacementDecision {
    let mut d = PlacementDecision::empty(params.num_ues, params.num_ess, params.num_services);
    for k in 0..params.num_ess {
        d.set_placed(0, k, true);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ScenarioConfig;

    fn scenario(seed: u64) -> Scenario {
        Scenario::build(ScenarioConfig { rng_seed: seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn static_requests_trigger_only_at_frame_zero() {
        // Requests redraw every five frames; within the first five frames
        // and with generous caps, only the initial solve fires.
        let sc = Scenario::build(ScenarioConfig {
            latency_cap: 20e-3,
            rng_seed: 3,
            ..Default::default()
        })
        .unwrap();
        let trace = run(
            &sc,
            &RunOptions { frames: Some(4), slots_per_frame: Some(2), ..Default::default() },
        )
        .unwrap();
        assert_eq!(trace.trigger_count, 1);
        assert!(trace.slots[0].trigger);
        assert!(trace.slots.iter().skip(1).all(|s| !s.trigger));
    }

    #[test]
    fn request_regeneration_fires_the_flag() {
        let sc = Scenario::build(ScenarioConfig {
            latency_cap: 20e-3,
            rng_seed: 4,
            ..Default::default()
        })
        .unwrap();
        let trace = run(
            &sc,
            &RunOptions { frames: Some(7), slots_per_frame: Some(1), ..Default::default() },
        )
        .unwrap();
        // Frame 0 always fires; frame 5 redraws the request map.
        let frame5_first_slot = trace
            .slots
            .iter()
            .find(|s| s.frame == 5 && s.slot == 0)
            .expect("frame 5 executed");
        assert!(frame5_first_slot.trigger, "regeneration at frame 5 must re-arm the flag");
        assert!(trace.trigger_count >= 2);
    }

    #[test]
    fn cost_ledger_telescopes() {
        let sc = scenario(5);
        let trace = run(
            &sc,
            &RunOptions { frames: Some(6), slots_per_frame: Some(2), ..Default::default() },
        )
        .unwrap();
        let total: f64 = trace.frames.iter().map(|f| f.cost).sum();
        let expect = trace.average_cost * trace.frames.len() as f64;
        assert!((total - expect).abs() < 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn feasible_slots_pass_the_full_checker() {
        let sc = scenario(6);
        let trace = run(
            &sc,
            &RunOptions { frames: Some(3), slots_per_frame: Some(2), ..Default::default() },
        )
        .unwrap();
        // The checker runs inside the loop; here we assert the records are
        // coherent: feasible slots respect the deadline.
        for s in &trace.slots {
            if s.feasible {
                assert!(s.worst_latency <= sc.cfg.latency_cap * (1.0 + 1e-5));
            }
        }
        assert!(!trace.slots.is_empty());
    }

    #[test]
    fn deterministic_replay() {
        let sc = scenario(7);
        let opts =
            RunOptions { frames: Some(3), slots_per_frame: Some(2), ..Default::default() };
        let a = run(&sc, &opts).unwrap();
        let b = run(&sc, &opts).unwrap();
        assert_eq!(a.slots.len(), b.slots.len());
        for (x, y) in a.slots.iter().zip(&b.slots) {
            assert_eq!(x.objective.to_bits(), y.objective.to_bits());
            assert_eq!(x.latency_total.to_bits(), y.latency_total.to_bits());
        }
    }
}
