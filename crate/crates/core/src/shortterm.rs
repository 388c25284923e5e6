//! Short-term SCA: offloading portions and bandwidth shares for one slot,
//! given a fixed binary placement decision.
//!
//! The nonconvex rate enters through a concave global lower bound anchored
//! at the current iterate; products of offloaded fraction and the
//! reciprocal-rate slack are majorized by the weighted-square bound. Both
//! bounds are one-sided, so every iterate is feasible for the true
//! constraints, and both are tight at the anchors, which makes the
//! objective sequence non-increasing.

use crate::conic::{self, ConicProgram, LinExpr, SolveStatus};
use crate::model::{
    latency, AllocationDecision, ConstraintId, ModelParams, PlacementDecision, Route, Violation,
    FEASIBILITY_TOL,
};
use crate::scenario::{ChannelState, TaskSpec};

/// Relative objective-change tolerance for the SCA loop.
pub const SSP_TOL: f64 = 1e-4;
/// SCA iteration cap.
pub const SSP_MAX_ITER: usize = 50;
/// Anchors are kept strictly interior by this margin.
const ANCHOR_MARGIN: f64 = 1e-6;

/// Scheme-imposed pins on the short-term variables.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllocPins {
    /// Pin every UE's local portion to this value.
    pub local_portion: Option<f64>,
    /// Pin bandwidth shares to 1/M.
    pub equal_bandwidth: bool,
}

/// One iterate of the short-term loop.
#[derive(Debug, Clone)]
pub struct SspIterate {
    pub local_portion: Vec<f64>,
    pub bandwidth_share: Vec<f64>,
    /// Reciprocal-rate slack per UE (seconds/bit); meaningful for
    /// associated UEs only.
    pub recip_rate: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SspTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub max_constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SspOutcome {
    pub allocation: AllocationDecision,
    pub trace: Vec<SspTraceRow>,
    /// True-constraint feasibility of the returned point.
    pub feasible: bool,
    pub violations: Vec<Violation>,
    /// Final surrogate objective (latency term plus the constant cost term).
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub enum SspError {
    /// No UE is associated and nothing is pinned; nothing to optimize.
    Malformed(String),
}

impl std::fmt::Display for SspError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SspError::Malformed(msg) => write!(f, "short-term subproblem: {msg}"),
        }
    }
}

impl std::error::Error for SspError {}

/// Concave global lower bound on the uplink rate as a function of the
/// bandwidth share, anchored at `share_anchor`. `snr_const` is P*g/(W*N0),
/// so the SNR at share b is snr_const/b. Tight at the anchor.
pub fn rate_lower_bound(
    share: f64,
    share_anchor: f64,
    snr_const: f64,
    bandwidth: f64,
) -> Result<f64, SspError> {
    if !(share > 0.0) || !(share_anchor > 0.0) {
        return Err(SspError::Malformed(format!(
            "rate bound requires positive shares (b = {share}, anchor = {share_anchor})"
        )));
    }
    let log_term = (1.0 + snr_const / share_anchor).ln();
    let mid = share_anchor * snr_const / (snr_const + share_anchor);
    let nats = 2.0 * share_anchor * log_term + mid * (1.0 - share / share_anchor)
        - log_term * share_anchor * share_anchor / share;
    Ok(bandwidth / std::f64::consts::LN_2 * nats)
}

/// True uplink rate at a bandwidth share for the same constants.
pub fn true_rate(share: f64, snr_const: f64, bandwidth: f64) -> f64 {
    if share <= 0.0 {
        return 0.0;
    }
    share * bandwidth / std::f64::consts::LN_2 * (1.0 + snr_const / share).ln()
}

/// Upper bound on a product of positives: y z <= (z̄/ȳ y^2 + ȳ/z̄ z^2)/2,
/// tight at the anchors.
pub fn bilinear_upper_bound(y: f64, z: f64, y_anchor: f64, z_anchor: f64) -> f64 {
    0.5 * (z_anchor / y_anchor * y * y + y_anchor / z_anchor * z * z)
}

/// Anchor state for the surrogates; entries for unassociated UEs are
/// carried but unused.
#[derive(Debug, Clone)]
pub struct Anchors {
    pub local_portion: Vec<f64>,
    pub bandwidth_share: Vec<f64>,
    pub recip_rate: Vec<f64>,
}

impl Anchors {
    fn interior(&self) -> Anchors {
        Anchors {
            local_portion: self
                .local_portion
                .iter()
                .map(|p| p.clamp(0.0, 1.0 - ANCHOR_MARGIN))
                .collect(),
            bandwidth_share: self
                .bandwidth_share
                .iter()
                .map(|b| b.max(1e-9))
                .collect(),
            recip_rate: self.recip_rate.iter().map(|r| r.max(1e-15)).collect(),
        }
    }
}

/// Per-UE constants of one slot.
struct UeSlot {
    route: Route,
    snr_const: f64,
    /// Execution rate of the offloaded portion (cycles/s).
    server_rate: f64,
    /// Propagation delay along the route (s).
    prop_delay: f64,
    /// Backhaul/fronthaul seconds per offloaded bit, with the ES it loads.
    transfer: Option<(usize, f64)>,
}

fn ue_slots(
    params: &ModelParams,
    decision: &PlacementDecision,
    channel: &ChannelState,
) -> Vec<UeSlot> {
    (0..params.num_ues)
        .map(|m| {
            let route = decision.route(m);
            let (server_rate, transfer) = match route {
                Route::LocalOnly => (params.rate_ue[m], None),
                Route::Edge { at } => (params.rate_es[m][at], None),
                Route::Forwarded { via, to } => {
                    (params.rate_es[m][to], Some((via, 1.0 / params.fronthaul_rate[via][to])))
                }
                Route::Cloud { via } => {
                    (params.rate_cloud[m], Some((via, 1.0 / params.backhaul_rate[via])))
                }
            };
            let snr_const = match route {
                Route::LocalOnly => 0.0,
                Route::Edge { at } | Route::Forwarded { via: at, .. } | Route::Cloud { via: at } => {
                    params.tx_power[m] * channel.gain(m, at)
                        / (params.bandwidth * params.noise_density)
                }
            };
            UeSlot {
                route,
                snr_const,
                server_rate,
                prop_delay: latency::propagation_delay(params, decision, m),
                transfer,
            }
        })
        .collect()
}

/// Variable indices of one built program.
pub struct SspVars {
    pub local_portion: Vec<Option<usize>>,
    pub bandwidth_share: Vec<Option<usize>>,
    pub recip_rate: Vec<Option<usize>>,
    pub backhaul_epigraph: usize,
}

pub struct SspProgram {
    pub program: ConicProgram,
    pub vars: SspVars,
    /// Constraint families with their row counts, builder-level view.
    pub families: Vec<(&'static str, usize)>,
    /// Count of the scalar decision variables (portion, share, slack).
    pub core_vars: usize,
}

/// Build the convex subproblem at the given anchors. `cost_constant` is
/// the scalarized cost term, constant at this timescale, carried into the
/// reported objective.
pub fn build_ssp_program(
    params: &ModelParams,
    decision: &PlacementDecision,
    channel: &ChannelState,
    tasks: &[TaskSpec],
    anchors: &Anchors,
    pins: &AllocPins,
    cost_constant: f64,
) -> Result<SspProgram, SspError> {
    build_inner(params, decision, channel, tasks, anchors, pins, cost_constant, false)
}

#[allow(clippy::too_many_arguments)]
fn build_inner(
    params: &ModelParams,
    decision: &PlacementDecision,
    channel: &ChannelState,
    tasks: &[TaskSpec],
    anchors: &Anchors,
    pins: &AllocPins,
    cost_constant: f64,
    restoration: bool,
) -> Result<SspProgram, SspError> {
    let anchors = anchors.interior();
    let slots = ue_slots(params, decision, channel);
    let m_count = params.num_ues;
    let mut p = ConicProgram::new();
    let w_t = params.weight_latency;

    // In restoration mode a shared slack relaxes every cap row and is the
    // whole objective: its optimum is the smallest uniform violation.
    let slack = if restoration {
        let v = p.add_var("max_violation", 0.0, f64::INFINITY);
        p.add_linear_obj(v, 1.0);
        Some(v)
    } else {
        None
    };

    let mut phi_idx = vec![None; m_count];
    let mut b_idx = vec![None; m_count];
    let mut r_idx = vec![None; m_count];
    let mut q_pair = vec![None; m_count];
    let tbh = p.add_var("backhaul_max", 0.0, f64::INFINITY);

    for m in 0..m_count {
        if matches!(slots[m].route, Route::LocalOnly) {
            continue;
        }
        let phi = p.add_var(format!("portion[{m}]"), 0.0, 1.0);
        if let Some(v) = pins.local_portion {
            p.fix_var(phi, v);
        }
        let share = p.add_var(format!("share[{m}]"), 0.0, 1.0);
        if pins.equal_bandwidth {
            p.fix_var(share, 1.0 / m_count as f64);
        }
        // The reciprocal-rate slack lives in units of its anchor so the
        // whole program stays O(1); extraction multiplies back.
        let recip = p.add_var(format!("recip_rate_rel[{m}]"), 0.0, f64::INFINITY);
        phi_idx[m] = Some(phi);
        b_idx[m] = Some(share);
        r_idx[m] = Some(recip);
    }
    let core_vars = p.num_vars() - 1;

    let mut families: Vec<(&'static str, usize)> = Vec::new();
    let mut n_rate = 0;
    let mut n_link = 0;
    let mut n_energy = 0;
    let mut n_latency = 0;
    let mut n_psi = 0;

    for m in 0..m_count {
        let slot = &slots[m];
        let task = &tasks[m];
        if matches!(slot.route, Route::LocalOnly) {
            // Whole task local: only its latency cap row remains, and the
            // system backhaul term still applies to it.
            let local = task.cycles / params.rate_ue[m];
            let mut row = LinExpr::var(tbh);
            if let Some(v) = slack {
                row.push(v, -params.latency_cap[m]);
            }
            p.add_le(row, params.latency_cap[m] - local);
            n_latency += 1;
            continue;
        }
        let phi = phi_idx[m].unwrap();
        let share = b_idx[m].unwrap();
        let recip = r_idx[m].unwrap();
        let phi_a = anchors.local_portion[m];
        let b_a = anchors.bandwidth_share[m];
        let r_a = anchors.recip_rate[m];

        // Epigraphs of (1 - phi)^2 and r^2 shared by the energy and
        // latency surrogates.
        let q1 = p.add_var(format!("sq_offload[{m}]"), 0.0, f64::INFINITY);
        let q2 = p.add_var(format!("sq_recip[{m}]"), 0.0, f64::INFINITY);
        p.add_rsoc(
            LinExpr::var(q1),
            LinExpr::constant(1.0),
            vec![LinExpr::term(phi, -1.0).offset(1.0)],
        );
        p.add_rsoc(LinExpr::var(q2), LinExpr::constant(1.0), vec![LinExpr::var(recip)]);
        q_pair[m] = Some((q1, q2));

        // Reciprocal bandwidth channel: s >= log_term * b_a^2 / b.
        let log_term = (1.0 + slot.snr_const / b_a).ln();
        let s_recip = p.add_var(format!("recip_share[{m}]"), 0.0, f64::INFINITY);
        p.add_rsoc(
            LinExpr::var(s_recip),
            LinExpr::var(share),
            vec![LinExpr::constant(log_term.sqrt() * b_a)],
        );

        // Rate lower bound pieces: R~(b) = wn * (2 b_a L + T (1 - b/b_a)) - wn * s.
        let wn = params.bandwidth / std::f64::consts::LN_2;
        let mid = b_a * slot.snr_const / (slot.snr_const + b_a);
        let rate_const = wn * (2.0 * b_a * log_term + mid);
        let rate_b_coeff = -wn * mid / b_a;

        // Rate floor (minimum data rate).
        let mut rate_row = LinExpr::term(share, rate_b_coeff).plus(s_recip, -wn).offset(rate_const);
        if let Some(v) = slack {
            rate_row.push(v, params.rate_floor);
        }
        p.add_ge(rate_row, params.rate_floor);
        n_rate += 1;

        // Slack link: r u >= 1 with u below the rate bound, both in
        // anchor units (u_rel = u * r_a, so u_rel <= r_a * R~(b)).
        let u_rate = p.add_var(format!("rate_value_rel[{m}]"), 0.0, f64::INFINITY);
        p.add_le(
            LinExpr::var(u_rate)
                .plus(s_recip, r_a * wn)
                .plus(share, -r_a * rate_b_coeff),
            r_a * rate_const,
        );
        n_link += 1;
        p.add_rsoc(LinExpr::var(recip), LinExpr::var(u_rate), vec![LinExpr::constant(1.0)]);

        // Transmission surrogate: a (1-phi) r <= a/2 (alpha q1 + beta q2)
        // with q1 >= (1-phi)^2 and q2 >= (r/r_a)^2 in anchor units.
        let alpha = r_a / (1.0 - phi_a);
        let radio_q1 = 0.5 * task.size_bits * alpha;
        let radio_q2 = 0.5 * task.size_bits * (1.0 - phi_a) * r_a;

        // Energy cap with the same surrogate.
        let compute_coeff =
            0.5 * params.eff_capacitance[m] * task.cycles * params.rate_ue[m] * params.rate_ue[m];
        let mut energy_row = LinExpr::term(phi, compute_coeff)
            .plus(q1, params.tx_power[m] * radio_q1)
            .plus(q2, params.tx_power[m] * radio_q2);
        if let Some(v) = slack {
            energy_row.push(v, -params.energy_cap[m]);
        }
        p.add_le(energy_row, params.energy_cap[m]);
        n_energy += 1;

        // Latency cap: propagation + processing + radio surrogate + backhaul.
        let local_rate = params.rate_ue[m];
        let phi_coeff = task.cycles / local_rate - task.cycles / slot.server_rate;
        let proc_const = task.cycles / slot.server_rate;
        let mut latency_row = LinExpr::term(phi, phi_coeff)
            .plus(q1, radio_q1)
            .plus(q2, radio_q2)
            .plus(tbh, 1.0);
        if let Some(v) = slack {
            latency_row.push(v, -params.latency_cap[m]);
        }
        p.add_le(latency_row, params.latency_cap[m] - slot.prop_delay - proc_const);
        n_latency += 1;
        n_psi += 1;

        // Objective: latency-weighted surrogate end-to-end latency.
        if slack.is_none() {
            p.add_linear_obj(phi, w_t * phi_coeff);
            p.add_linear_obj(q1, w_t * radio_q1);
            p.add_linear_obj(q2, w_t * radio_q2);
            p.add_constant_obj(w_t * (proc_const + slot.prop_delay));
        }
    }

    // Objective pieces common to all UEs.
    if slack.is_none() {
        for m in 0..m_count {
            if matches!(slots[m].route, Route::LocalOnly) {
                p.add_constant_obj(w_t * tasks[m].cycles / params.rate_ue[m]);
            }
        }
        p.add_linear_obj(tbh, w_t * m_count as f64);
        p.add_constant_obj(cost_constant);
    }

    // Per-ES backhaul epigraph rows.
    for k in 0..params.num_ess {
        let mut expr = LinExpr::var(tbh);
        let mut constant = 0.0;
        for m in 0..m_count {
            if let Some((via, secs_per_bit)) = slots[m].transfer {
                if via == k {
                    let coeff = secs_per_bit * tasks[m].size_bits;
                    expr.push(phi_idx[m].unwrap(), coeff);
                    constant += coeff;
                }
            }
        }
        p.add_ge(expr, constant);
    }

    // Bandwidth conservation.
    let mut sum = LinExpr::new();
    for m in 0..m_count {
        if let Some(i) = b_idx[m] {
            sum.push(i, 1.0);
        }
    }
    if !sum.terms.is_empty() {
        p.add_le(sum, 1.0);
    }

    families.push(("rate_floor", n_rate));
    families.push(("rate_link", n_link));
    families.push(("energy_cap", n_energy));
    families.push(("latency_cap", n_latency));
    families.push(("offload_box", n_psi));
    families.push(("backhaul_epigraph", params.num_ess));
    families.push(("bandwidth_sum", 1));
    families.push(("bandwidth_box", 1));
    families.push(("coupling", 1));

    Ok(SspProgram {
        program: p,
        vars: SspVars {
            local_portion: phi_idx,
            bandwidth_share: b_idx,
            recip_rate: r_idx,
            backhaul_epigraph: tbh,
        },
        families,
        core_vars,
    })
}

/// True-constraint violations of the short-term families at a point.
pub fn allocation_violations(
    params: &ModelParams,
    decision: &PlacementDecision,
    alloc: &AllocationDecision,
    channel: &ChannelState,
    tasks: &[TaskSpec],
) -> Vec<Violation> {
    let mut out = Vec::new();
    let breakdown = latency::e2e_latency(params, decision, alloc, channel, tasks);
    for (m, b) in breakdown.iter().enumerate() {
        let amount = (b.e2e - params.latency_cap[m]) / params.latency_cap[m];
        if amount > FEASIBILITY_TOL {
            out.push(Violation { id: ConstraintId::LatencyCap { ue: m }, residual: amount });
        }
    }
    for m in 0..params.num_ues {
        let rate = latency::uplink_rate(params, channel, decision, alloc, m);
        let e = latency::energy(params, m, &tasks[m], alloc.local_portion[m], rate);
        let amount = (e - params.energy_cap[m]) / params.energy_cap[m];
        if amount > FEASIBILITY_TOL {
            out.push(Violation { id: ConstraintId::EnergyCap { ue: m }, residual: amount });
        }
        if decision.associated_es(m).is_some() {
            let amount = (params.rate_floor - rate) / params.rate_floor;
            if amount > FEASIBILITY_TOL {
                out.push(Violation { id: ConstraintId::RateFloor { ue: m }, residual: amount });
            }
        }
        let phi = alloc.local_portion[m];
        let box_amount = (phi - 1.0).max(-phi);
        if box_amount > FEASIBILITY_TOL {
            out.push(Violation { id: ConstraintId::OffloadBox { ue: m }, residual: box_amount });
        }
    }
    let sum: f64 = alloc.bandwidth_share.iter().sum();
    if sum - 1.0 > FEASIBILITY_TOL {
        out.push(Violation { id: ConstraintId::BandwidthSum, residual: sum - 1.0 });
    }
    out
}

fn max_residual(v: &[Violation]) -> f64 {
    v.iter().map(|x| x.residual).fold(0.0, f64::max)
}

/// Largest local portion within the caps for one UE under the initial
/// bandwidth, scanning then bisecting on the feasible boundary.
fn init_portion(
    params: &ModelParams,
    slot: &UeSlot,
    task: &TaskSpec,
    m: usize,
    share: f64,
) -> f64 {
    let feasible = |phi: f64| -> bool {
        let rate = true_rate(share, slot.snr_const, params.bandwidth);
        if rate <= 0.0 {
            return phi >= 1.0 - 1e-12;
        }
        let radio = (1.0 - phi) * task.size_bits / rate;
        let own_backhaul = slot
            .transfer
            .map(|(_, spb)| (1.0 - phi) * task.size_bits * spb)
            .unwrap_or(0.0);
        let proc = phi * task.cycles / params.rate_ue[m] + (1.0 - phi) * task.cycles / slot.server_rate;
        let lat = slot.prop_delay + proc + radio + own_backhaul;
        let energy = 0.5 * params.eff_capacitance[m] * phi * task.cycles * params.rate_ue[m].powi(2)
            + params.tx_power[m] * radio;
        lat <= params.latency_cap[m] && energy <= params.energy_cap[m]
    };
    // Coarse scan from above for the largest feasible cell, then bisect.
    let grid = 16;
    let mut hi_feasible = None;
    for i in (0..=grid).rev() {
        let phi = i as f64 / grid as f64;
        if feasible(phi) {
            hi_feasible = Some(phi);
            break;
        }
    }
    let Some(found) = hi_feasible else {
        return 0.5;
    };
    let largest = if found >= 1.0 {
        1.0
    } else {
        let (mut lo, mut hi) = (found, found + 1.0 / grid as f64);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    // Start strictly inside the box when possible: at the boundary the
    // bilinear majorizer's curvature blows up and the loop cannot leave
    // the all-local corner even when offloading pays.
    let interior = largest.min(1.0 - 1e-2);
    if interior < largest && feasible(interior) {
        interior
    } else {
        largest
    }
}

/// Default allocation for the very first long-term pass, before any
/// short-term solve exists: equal bandwidth and per-UE portions from the
/// same bisection the initializer uses, assuming each UE would be served
/// at its strongest ES.
pub fn default_allocation(
    params: &ModelParams,
    channel: &ChannelState,
    tasks: &[TaskSpec],
) -> AllocationDecision {
    let m_count = params.num_ues;
    let share = 1.0 / m_count as f64;
    let mut alloc = AllocationDecision {
        local_portion: vec![1.0; m_count],
        bandwidth_share: vec![share; m_count],
    };
    for m in 0..m_count {
        let best = (0..params.num_ess)
            .max_by(|&a, &b| {
                channel
                    .gain(m, a)
                    .partial_cmp(&channel.gain(m, b))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        let slot = UeSlot {
            route: Route::Edge { at: best },
            snr_const: params.tx_power[m] * channel.gain(m, best)
                / (params.bandwidth * params.noise_density),
            server_rate: params.rate_es[m][best],
            prop_delay: 0.0,
            transfer: None,
        };
        alloc.local_portion[m] = init_portion(params, &slot, &tasks[m], m, share);
    }
    alloc
}

/// Algorithm main loop: anchored convex solves until the relative change
/// of the objective drops below `tol`.
pub fn solve_ssp(
    params: &ModelParams,
    decision: &PlacementDecision,
    channel: &ChannelState,
    tasks: &[TaskSpec],
    pins: &AllocPins,
    cost_constant: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SspOutcome, SspError> {
    let m_count = params.num_ues;
    let slots = ue_slots(params, decision, channel);
    let associated: Vec<usize> = (0..m_count)
        .filter(|&m| !matches!(slots[m].route, Route::LocalOnly))
        .collect();

    // Degenerate slot: nothing offloads; the allocation is fully local.
    if associated.is_empty() {
        let alloc = AllocationDecision {
            local_portion: vec![1.0; m_count],
            bandwidth_share: vec![0.0; m_count],
        };
        let violations = allocation_violations(params, decision, &alloc, channel, tasks);
        let objective = params.weight_latency
            * (0..m_count)
                .map(|m| tasks[m].cycles / params.rate_ue[m])
                .sum::<f64>()
            + cost_constant;
        return Ok(SspOutcome {
            feasible: violations.is_empty(),
            violations,
            allocation: alloc,
            trace: Vec::new(),
            objective,
        });
    }

    // Initial point: bandwidth split over associated UEs, portions from
    // per-UE bisection, reciprocal slack exact at the initial rate.
    let share0 = if pins.equal_bandwidth {
        1.0 / m_count as f64
    } else {
        1.0 / associated.len() as f64
    };
    let mut alloc = AllocationDecision {
        local_portion: vec![1.0; m_count],
        bandwidth_share: vec![0.0; m_count],
    };
    for &m in &associated {
        alloc.bandwidth_share[m] = share0;
        alloc.local_portion[m] = match pins.local_portion {
            Some(v) => v,
            None => init_portion(params, &slots[m], &tasks[m], m, share0),
        };
    }
    let mut anchors = Anchors {
        local_portion: alloc.local_portion.clone(),
        bandwidth_share: alloc.bandwidth_share.clone(),
        recip_rate: (0..m_count)
            .map(|m| {
                let r = true_rate(alloc.bandwidth_share[m], slots[m].snr_const, params.bandwidth);
                if r > 0.0 {
                    1.0 / r
                } else {
                    1.0
                }
            })
            .collect(),
    };

    // Feasibility restoration: anchored passes minimizing the worst
    // normalized cap violation before the main loop starts.
    let mut start_violations = allocation_violations(params, decision, &alloc, channel, tasks);
    for _ in 0..3 {
        if max_residual(&start_violations) <= FEASIBILITY_TOL {
            break;
        }
        let built =
            build_inner(params, decision, channel, tasks, &anchors, pins, 0.0, true)?;
        let sol = conic::solve(&built.program, conic::DEFAULT_TOL, conic::DEFAULT_MAX_ITER)
            .map_err(|e| SspError::Malformed(e.to_string()))?;
        if sol.status != SolveStatus::Optimal {
            break;
        }
        for &m in &associated {
            alloc.local_portion[m] =
                sol.primal[built.vars.local_portion[m].unwrap()].clamp(0.0, 1.0);
            alloc.bandwidth_share[m] = sol.primal[built.vars.bandwidth_share[m].unwrap()].max(0.0);
            // Re-anchor the slack at the exact reciprocal of the rate: the
            // slack itself is unpriced for fully-local UEs and would drift.
            let rate = true_rate(alloc.bandwidth_share[m], slots[m].snr_const, params.bandwidth);
            if rate > 0.0 {
                anchors.recip_rate[m] = 1.0 / rate;
            }
        }
        anchors.local_portion = alloc.local_portion.clone();
        anchors.bandwidth_share = alloc.bandwidth_share.clone();
        start_violations = allocation_violations(params, decision, &alloc, channel, tasks);
    }

    let mut trace = Vec::new();
    let mut last_obj = f64::INFINITY;
    let mut best = alloc.clone();
    let mut best_feasible = start_violations.is_empty();
    let mut final_obj =
        surrogate_objective_at(params, &slots, tasks, &anchors, &alloc, cost_constant);

    for iteration in 0..max_iter {
        let built =
            build_ssp_program(params, decision, channel, tasks, &anchors, pins, cost_constant)?;
        let sol = conic::solve(&built.program, conic::DEFAULT_TOL, conic::DEFAULT_MAX_ITER)
            .map_err(|e| SspError::Malformed(e.to_string()))?;
        if sol.status != SolveStatus::Optimal && sol.max_primal_residual > 1e-6 {
            break;
        }
        let mut next = AllocationDecision {
            local_portion: vec![1.0; m_count],
            bandwidth_share: vec![0.0; m_count],
        };
        for &m in &associated {
            next.local_portion[m] =
                sol.primal[built.vars.local_portion[m].unwrap()].clamp(0.0, 1.0);
            next.bandwidth_share[m] = sol.primal[built.vars.bandwidth_share[m].unwrap()].max(0.0);
        }
        // Keep bandwidth conservation exact against solver roundoff.
        let total: f64 = next.bandwidth_share.iter().sum();
        if total > 1.0 {
            for b in next.bandwidth_share.iter_mut() {
                *b /= total;
            }
        }

        // Surrogate objective at the tight completion of the new point.
        // The raw solver value can carry slack in the nearly-unpriced
        // auxiliaries of fully-local UEs; the completion removes it while
        // staying a valid upper bound on the true objective.
        let objective =
            surrogate_objective_at(params, &slots, tasks, &anchors, &next, cost_constant);
        let violations = allocation_violations(params, decision, &next, channel, tasks);
        trace.push(SspTraceRow {
            iteration,
            objective,
            max_constraint_residual: max_residual(&violations),
        });

        if violations.is_empty() {
            best = next.clone();
            best_feasible = true;
        } else if !best_feasible {
            best = next.clone();
        }
        final_obj = objective;

        let converged = last_obj.is_finite()
            && (last_obj - objective).abs() <= tol * last_obj.abs().max(1e-12);
        last_obj = objective;
        anchors = Anchors {
            local_portion: next.local_portion.clone(),
            bandwidth_share: next.bandwidth_share.clone(),
            recip_rate: (0..m_count)
                .map(|m| {
                    // The slack is unpriced for fully-local UEs and cannot
                    // serve as its own anchor; re-anchor at the exact
                    // reciprocal of the rate.
                    let rate =
                        true_rate(next.bandwidth_share[m], slots[m].snr_const, params.bandwidth);
                    if rate > 0.0 {
                        1.0 / rate
                    } else {
                        anchors.recip_rate[m]
                    }
                })
                .collect(),
        };
        alloc = next;
        if converged {
            break;
        }
    }
    let _ = alloc;

    let violations = allocation_violations(params, decision, &best, channel, tasks);
    Ok(SspOutcome {
        feasible: violations.is_empty(),
        violations,
        allocation: best,
        trace,
        objective: final_obj,
    })
}

/// Surrogate objective of an allocation with every auxiliary at its tight
/// value: the anchored transmission bound replaces the exact radio delay,
/// everything else is evaluated directly. Never below the true objective
/// and equal to it when the allocation sits at the anchors.
fn surrogate_objective_at(
    params: &ModelParams,
    slots: &[UeSlot],
    tasks: &[TaskSpec],
    anchors: &Anchors,
    alloc: &AllocationDecision,
    cost_constant: f64,
) -> f64 {
    let anchors = anchors.interior();
    let mut latency_sum = 0.0;
    for (m, slot) in slots.iter().enumerate() {
        let task = &tasks[m];
        let phi = alloc.local_portion[m];
        latency_sum += phi * task.cycles / params.rate_ue[m];
        if matches!(slot.route, Route::LocalOnly) {
            continue;
        }
        latency_sum += (1.0 - phi) * task.cycles / slot.server_rate + slot.prop_delay;
        let phi_a = anchors.local_portion[m];
        let r_a = anchors.recip_rate[m];
        let b_a = anchors.bandwidth_share[m];
        let bound = rate_lower_bound(
            alloc.bandwidth_share[m].max(1e-12),
            b_a,
            slot.snr_const,
            params.bandwidth,
        )
        .unwrap_or(f64::MIN_POSITIVE)
        .max(f64::MIN_POSITIVE);
        let recip = 1.0 / bound;
        let alpha = r_a / (1.0 - phi_a);
        let beta = (1.0 - phi_a) / r_a;
        latency_sum +=
            0.5 * task.size_bits * (alpha * (1.0 - phi) * (1.0 - phi) + beta * recip * recip);
    }
    // Shared worst per-ES transfer delay, paid by every UE.
    let mut worst = 0.0f64;
    for k in 0..params.num_ess {
        let mut t = 0.0;
        for (m, slot) in slots.iter().enumerate() {
            if let Some((via, secs_per_bit)) = slot.transfer {
                if via == k {
                    t += secs_per_bit * tasks[m].size_bits * (1.0 - alloc.local_portion[m]);
                }
            }
        }
        worst = worst.max(t);
    }
    latency_sum += worst * slots.len() as f64;
    params.weight_latency * latency_sum + cost_constant
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{RequestState, Scenario, Stream};
    use crate::ScenarioConfig;
    use rand::Rng;

    struct Fixture {
        params: ModelParams,
        decision: PlacementDecision,
        channel: ChannelState,
        tasks: Vec<TaskSpec>,
    }

    /// All eight UEs associated to their strongest ES and served there.
    fn fixture() -> Fixture {
        let sc = Scenario::build(ScenarioConfig::default()).unwrap();
        let params = ModelParams::from_scenario(&sc);
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let requests = RequestState { service: vec![0; 8], regenerations: 0 };
        let tasks = sc.draw_slot_tasks(&mut sc.substream(Stream::Tasks), &requests);
        let mut decision = PlacementDecision::empty(8, 2, 8);
        for k in 0..2 {
            decision.set_placed(0, k, true);
        }
        for m in 0..8 {
            let k = if channel.gain(m, 0) >= channel.gain(m, 1) { 0 } else { 1 };
            decision.set_assoc(m, k, true);
        }
        Fixture { params, decision, channel, tasks }
    }

    #[test]
    fn rate_bound_tight_at_anchor() {
        for &(snr_const, anchor) in &[(5000.0 * 0.125, 0.125), (40.0, 0.5), (1e4, 0.03)] {
            let truth = true_rate(anchor, snr_const, 10e6);
            let bound = rate_lower_bound(anchor, anchor, snr_const, 10e6).unwrap();
            assert!(
                (bound - truth).abs() <= 1e-9 * truth.abs(),
                "bound {bound} vs rate {truth}"
            );
        }
        assert!(rate_lower_bound(0.0, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn rate_bound_is_global_lower_bound() {
        let mut rng = crate::scenario::substream(11, Stream::Anchors);
        for _ in 0..100 {
            let snr_const: f64 = rng.random::<f64>() * 1e4 + 1e-3;
            let anchor: f64 = rng.random::<f64>() * 0.99 + 0.005;
            let share: f64 = rng.random::<f64>() * 0.99 + 0.005;
            let bound = rate_lower_bound(share, anchor, snr_const, 10e6).unwrap();
            let truth = true_rate(share, snr_const, 10e6);
            assert!(
                bound <= truth + 1e-6 * truth.abs().max(1.0),
                "bound {bound} above rate {truth} (b={share}, anchor={anchor}, c={snr_const})"
            );
        }
    }

    #[test]
    fn rate_bound_continuous_near_anchor() {
        let (c, anchor) = (523.0, 0.2);
        let at = rate_lower_bound(anchor, anchor, c, 10e6).unwrap();
        // The closed form is smooth in b; differences shrink linearly with
        // eps at the local slope scale (here bounded by W/ln2 * ln(1+c/b)).
        let slope_cap = 10e6 / std::f64::consts::LN_2 * (1.0 + c / anchor).ln() * 10.0;
        for eps in [1e-3, 1e-5, 1e-7] {
            let near = rate_lower_bound(anchor + eps, anchor, c, 10e6).unwrap();
            assert!((near - at).abs() < slope_cap * eps, "jump at eps={eps}");
        }
    }

    #[test]
    fn bilinear_bound_reference_and_tightness() {
        assert!((bilinear_upper_bound(1.0, 1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        // y=2, z=3 with unit anchors: (4 + 9)/2 = 6.5 >= 6.
        assert!((bilinear_upper_bound(2.0, 3.0, 1.0, 1.0) - 6.5).abs() < 1e-15);
        let mut rng = crate::scenario::substream(12, Stream::Anchors);
        for _ in 0..200 {
            let y = rng.random::<f64>() * 10.0 + 1e-6;
            let z = rng.random::<f64>() * 10.0 + 1e-6;
            let ya = rng.random::<f64>() * 10.0 + 1e-6;
            let za = rng.random::<f64>() * 10.0 + 1e-6;
            assert!(bilinear_upper_bound(y, z, ya, za) >= y * z - 1e-12);
            let tight = bilinear_upper_bound(y, z, y, z);
            assert!((tight - y * z).abs() <= 1e-9 * (y * z));
        }
    }

    fn default_anchors(f: &Fixture) -> Anchors {
        Anchors {
            local_portion: vec![0.5; 8],
            bandwidth_share: vec![0.125; 8],
            recip_rate: (0..8)
                .map(|m| {
                    let slot_gain = f.channel.gain(m, f.decision.associated_es(m).unwrap());
                    let c = f.params.tx_power[m] * slot_gain
                        / (f.params.bandwidth * f.params.noise_density);
                    1.0 / true_rate(0.125, c, f.params.bandwidth)
                })
                .collect(),
        }
    }

    #[test]
    fn program_structure_matches_documented_counts() {
        let f = fixture();
        let anchors = default_anchors(&f);
        let built = build_ssp_program(
            &f.params,
            &f.decision,
            &f.channel,
            &f.tasks,
            &anchors,
            &AllocPins::default(),
            0.0,
        )
        .unwrap();
        built.program.validate().unwrap();
        assert_eq!(built.core_vars, 3 * 8);
        let family_rows: usize = built.families.iter().map(|&(_, n)| n).sum();
        assert_eq!(family_rows, 5 * 8 + 2 + 3);
        assert!(built.program.num_vars() > built.core_vars);
    }

    #[test]
    fn single_ue_full_bandwidth_collapses() {
        let sc = Scenario::build(ScenarioConfig {
            num_ues: 1,
            num_ess: 1,
            num_services: 1,
            max_services_per_es: 1,
            ..Default::default()
        })
        .unwrap();
        let params = ModelParams::from_scenario(&sc);
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let requests = RequestState { service: vec![0], regenerations: 0 };
        let tasks = sc.draw_slot_tasks(&mut sc.substream(Stream::Tasks), &requests);
        let mut decision = PlacementDecision::empty(1, 1, 1);
        decision.set_assoc(0, 0, true);
        decision.set_placed(0, 0, true);
        let out = solve_ssp(
            &params,
            &decision,
            &channel,
            &tasks,
            &AllocPins::default(),
            0.0,
            SSP_TOL,
            SSP_MAX_ITER,
        )
        .unwrap();
        assert!(out.feasible, "violations: {:?}", out.violations);
        // A single UE has no competition: the whole band is available.
        assert!(out.allocation.bandwidth_share[0] > 0.9);
    }

    #[test]
    fn solve_converges_and_is_feasible() {
        let f = fixture();
        let out = solve_ssp(
            &f.params,
            &f.decision,
            &f.channel,
            &f.tasks,
            &AllocPins::default(),
            0.0,
            SSP_TOL,
            SSP_MAX_ITER,
        )
        .unwrap();
        assert!(out.feasible, "violations: {:?}", out.violations);
        assert!(out.trace.len() <= 20, "took {} iterations", out.trace.len());
        // Objective sequence non-increasing within solver precision.
        for w in out.trace.windows(2) {
            assert!(
                w[1].objective <= w[0].objective + 1e-9 * w[0].objective.abs().max(1.0),
                "objective rose: {} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
        let total: f64 = out.allocation.bandwidth_share.iter().sum();
        assert!(total <= 1.0 + 1e-9);
    }

    #[test]
    fn optimized_beats_pinned_schemes() {
        let f = fixture();
        let solve_with = |pins: AllocPins| {
            solve_ssp(&f.params, &f.decision, &f.channel, &f.tasks, &pins, 0.0, SSP_TOL, SSP_MAX_ITER)
                .unwrap()
        };
        let free = solve_with(AllocPins::default());
        assert!(free.feasible);
        let mean_e2e = |alloc: &AllocationDecision| -> f64 {
            latency::e2e_latency(&f.params, &f.decision, alloc, &f.channel, &f.tasks)
                .iter()
                .map(|b| b.e2e)
                .sum::<f64>()
        };
        let free_latency = mean_e2e(&free.allocation);
        for pins in [
            AllocPins { local_portion: Some(0.7), equal_bandwidth: false },
            AllocPins { local_portion: Some(0.2), equal_bandwidth: false },
            AllocPins { local_portion: Some(0.0), equal_bandwidth: false },
            AllocPins { local_portion: None, equal_bandwidth: true },
        ] {
            let pinned = solve_with(pins);
            let pinned_latency = mean_e2e(&pinned.allocation);
            // Slack at the SCA stopping tolerance: the pinned point lies in
            // the free feasible set, so only solver noise can separate them.
            assert!(
                free_latency <= pinned_latency * (1.0 + 10.0 * SSP_TOL),
                "pinned {pins:?} beat the optimizer: {free_latency} vs {pinned_latency}"
            );
        }
    }
}
