//! Long-term penalty-SCA: service placement, user association and
//! cooperation bits for one frame, given the most recent offloading
//! portions and bandwidth shares.
//!
//! The binaries are relaxed to [0, 1] and pushed back to the vertices by
//! the concave penalty x - x^2, majorized each iteration by its linear
//! surrogate at the current anchor. The relaxed objective is exact at
//! binary points: the radio term uses per-association delay constants and
//! the status-change cost enters as a convex quadratic epigraph. After
//! convergence the iterate is rounded; if the rounded point violates any
//! structural or resource constraint, the anchors are re-drawn and the
//! loop retried, falling back to a greedy repair after the retry cap.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::conic::{self, ConicProgram, LinExpr, SolveStatus};
use crate::model::{
    self, check_feasibility, latency, AllocationDecision, ConstraintId, ModelParams,
    PlacementDecision,
};
use crate::scenario::{ChannelState, TaskSpec};

/// Relative objective-change tolerance for the SCA loop.
pub const LSP_TOL: f64 = 1e-4;
/// SCA iteration cap.
pub const LSP_MAX_ITER: usize = 50;
/// Default penalty weight.
pub const DEFAULT_PENALTY: f64 = 1e4;
/// Anchor re-initializations before the greedy fallback.
pub const REPAIR_RETRIES: usize = 10;

/// Dense index layout of the relaxed binary vector: association bits,
/// edge-edge bits (k' != k packed), edge-cloud bits, placement bits.
#[derive(Debug, Clone, Copy)]
pub struct LspLayout {
    pub num_ues: usize,
    pub num_ess: usize,
    pub num_services: usize,
}

impl LspLayout {
    pub fn new(num_ues: usize, num_ess: usize, num_services: usize) -> Self {
        LspLayout { num_ues, num_ess, num_services }
    }

    pub fn assoc(&self, m: usize, k: usize) -> usize {
        m * self.num_ess + k
    }

    /// Edge-edge bit for forwarding from k to k2 (k2 != k).
    pub fn edge_edge(&self, m: usize, k: usize, k2: usize) -> usize {
        debug_assert_ne!(k, k2);
        let slot = if k2 < k { k2 } else { k2 - 1 };
        self.num_ues * self.num_ess
            + (m * self.num_ess + k) * (self.num_ess - 1)
            + slot
    }

    pub fn edge_cloud(&self, m: usize, k: usize) -> usize {
        self.num_ues * self.num_ess * self.num_ess + m * self.num_ess + k
    }

    pub fn placement(&self, s: usize, k: usize) -> usize {
        self.num_ues * self.num_ess * (self.num_ess + 1) + s * self.num_ess + k
    }

    /// Count of relaxed binary variables.
    pub fn core_count(&self) -> usize {
        let (m, k, s) = (self.num_ues, self.num_ess, self.num_services);
        m * k + m * k * (k - 1) + m * k + s * k
    }

    /// Materialize a rounded vector as a decision.
    pub fn to_decision(&self, x: &[f64]) -> PlacementDecision {
        let mut d = PlacementDecision::empty(self.num_ues, self.num_ess, self.num_services);
        for m in 0..self.num_ues {
            for k in 0..self.num_ess {
                if x[self.assoc(m, k)] >= 0.5 {
                    d.set_assoc(m, k, true);
                }
                if x[self.edge_cloud(m, k)] >= 0.5 {
                    d.set_edge_cloud(m, k, true);
                }
                for k2 in 0..self.num_ess {
                    if k2 != k && x[self.edge_edge(m, k, k2)] >= 0.5 {
                        d.set_edge_edge(m, k, k2, true);
                    }
                }
            }
        }
        for s in 0..self.num_services {
            for k in 0..self.num_ess {
                if x[self.placement(s, k)] >= 0.5 {
                    d.set_placed(s, k, true);
                }
            }
        }
        d
    }

    /// Flatten a decision into the relaxed vector space.
    pub fn from_decision(&self, d: &PlacementDecision) -> Vec<f64> {
        let mut x = vec![0.0; self.core_count()];
        for m in 0..self.num_ues {
            for k in 0..self.num_ess {
                if d.assoc(m, k) {
                    x[self.assoc(m, k)] = 1.0;
                }
                if d.edge_cloud(m, k) {
                    x[self.edge_cloud(m, k)] = 1.0;
                }
                for k2 in 0..self.num_ess {
                    if k2 != k && d.edge_edge(m, k, k2) {
                        x[self.edge_edge(m, k, k2)] = 1.0;
                    }
                }
            }
        }
        for s in 0..self.num_services {
            for k in 0..self.num_ess {
                if d.placed(s, k) {
                    x[self.placement(s, k)] = 1.0;
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
pub enum LspError {
    /// Entries of a relaxed vector left the unit box.
    OutOfBox { index: usize, value: f64 },
    /// The fixed short-term allocation admits no feasible association.
    Infeasible(LspInfeasibility),
    Solver(String),
}

impl std::fmt::Display for LspError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LspError::OutOfBox { index, value } => {
                write!(f, "relaxed entry {index} = {value} outside [0, 1]")
            }
            LspError::Infeasible(report) => write!(f, "{report}"),
            LspError::Solver(msg) => write!(f, "subproblem solver failure: {msg}"),
        }
    }
}

impl std::error::Error for LspError {}

/// Structured report: which constraint families block which UE under the
/// fixed allocation, no matter the association.
#[derive(Debug, Clone)]
pub struct LspInfeasibility {
    pub blocked: Vec<(usize, Vec<ConstraintId>)>,
}

impl std::fmt::Display for LspInfeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "fixed allocation infeasible for every association:")?;
        for (ue, ids) in &self.blocked {
            write!(f, " ue {ue} [")?;
            for (i, id) in ids.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{id}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// Concave integrality penalty: sum of x - x^2 over every relaxed entry.
pub fn penalty(x: &[f64]) -> Result<f64, LspError> {
    let mut total = 0.0;
    for (i, &v) in x.iter().enumerate() {
        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
            return Err(LspError::OutOfBox { index: i, value: v });
        }
        let v = v.clamp(0.0, 1.0);
        total += v - v * v;
    }
    Ok(total)
}

/// Linear majorizer of the penalty at the anchor:
/// sum of x - 2 x a + a^2. Tight when x equals the anchor.
pub fn penalty_surrogate(x: &[f64], anchor: &[f64]) -> f64 {
    x.iter()
        .zip(anchor)
        .map(|(&v, &a)| v - 2.0 * v * a + a * a)
        .sum()
}

/// Everything fixed during one long-term solve.
pub struct LspInputs<'a> {
    pub params: &'a ModelParams,
    pub channel: &'a ChannelState,
    pub tasks: &'a [TaskSpec],
    pub requests: &'a [usize],
    pub alloc: &'a AllocationDecision,
    pub prev_placement: &'a [bool],
}

/// Scheme- or search-imposed pins on individual relaxed variables.
#[derive(Debug, Clone, Default)]
pub struct LspPins {
    pub fixed: Vec<(usize, f64)>,
}

impl LspPins {
    pub fn none() -> Self {
        LspPins::default()
    }

    /// Force UE m's association to exactly `es`.
    pub fn pin_association(mut self, layout: &LspLayout, m: usize, es: usize) -> Self {
        for k in 0..layout.num_ess {
            self.fixed.push((layout.assoc(m, k), if k == es { 1.0 } else { 0.0 }));
        }
        self
    }

    /// Disable all edge-edge cooperation.
    pub fn pin_no_edge_cooperation(mut self, layout: &LspLayout) -> Self {
        for m in 0..layout.num_ues {
            for k in 0..layout.num_ess {
                for k2 in 0..layout.num_ess {
                    if k2 != k {
                        self.fixed.push((layout.edge_edge(m, k, k2), 0.0));
                    }
                }
            }
        }
        self
    }

    /// Disable all edge-cloud cooperation.
    pub fn pin_no_cloud(mut self, layout: &LspLayout) -> Self {
        for m in 0..layout.num_ues {
            for k in 0..layout.num_ess {
                self.fixed.push((layout.edge_cloud(m, k), 0.0));
            }
        }
        self
    }
}

/// Per-(m, k) radio-delay constant: offloaded bits over the fixed-share
/// uplink rate at ES k; zero when the UE keeps the whole task. A dead
/// link maps to a delay far beyond any cap, which the latency row then
/// rules out (the viability pre-check guarantees a live alternative).
fn radio_constants(inputs: &LspInputs) -> Vec<Vec<f64>> {
    const DEAD_LINK_DELAY: f64 = 1e6;
    let p = inputs.params;
    (0..p.num_ues)
        .map(|m| {
            let phi = inputs.alloc.local_portion[m];
            (0..p.num_ess)
                .map(|k| {
                    if phi >= 1.0 {
                        return 0.0;
                    }
                    let rate = fixed_share_rate(inputs, m, k);
                    if rate > 0.0 {
                        (1.0 - phi) * inputs.tasks[m].size_bits / rate
                    } else {
                        DEAD_LINK_DELAY
                    }
                })
                .collect()
        })
        .collect()
}

/// Uplink rate of UE m at ES k under the fixed bandwidth share.
fn fixed_share_rate(inputs: &LspInputs, m: usize, k: usize) -> f64 {
    let p = inputs.params;
    let share = inputs.alloc.bandwidth_share[m];
    if share <= 0.0 {
        return 0.0;
    }
    let gamma =
        p.tx_power[m] * inputs.channel.gain(m, k) / (share * p.bandwidth * p.noise_density);
    share * p.bandwidth / std::f64::consts::LN_2 * (1.0 + gamma).ln()
}

pub struct LspProgram {
    pub program: ConicProgram,
    pub layout: LspLayout,
    /// Count of the relaxed binary variables (the rest are epigraphs).
    pub core_vars: usize,
}

/// Pre-check: each UE that must offload (fixed portion < 1) needs at least
/// one ES satisfying its rate floor and energy cap, and its local share of
/// the deadline must be attainable at all.
fn viability_report(inputs: &LspInputs) -> Option<LspInfeasibility> {
    let p = inputs.params;
    let mut blocked = Vec::new();
    for m in 0..p.num_ues {
        let phi = inputs.alloc.local_portion[m];
        if phi >= 1.0 {
            continue;
        }
        let task = &inputs.tasks[m];
        let compute_energy =
            0.5 * p.eff_capacitance[m] * phi * task.cycles * p.rate_ue[m] * p.rate_ue[m];
        let local_delay = phi * task.cycles / p.rate_ue[m];
        let mut reasons = Vec::new();
        let mut viable = false;
        for k in 0..p.num_ess {
            let rate = fixed_share_rate(inputs, m, k);
            let radio = (1.0 - phi) * task.size_bits / rate.max(f64::MIN_POSITIVE);
            let rate_ok = rate >= p.rate_floor;
            let energy_ok = compute_energy + p.tx_power[m] * radio <= p.energy_cap[m];
            let latency_ok = local_delay + radio <= p.latency_cap[m];
            if rate_ok && energy_ok && latency_ok {
                viable = true;
                break;
            }
            if !rate_ok {
                reasons.push(ConstraintId::RateFloor { ue: m });
            }
            if !energy_ok {
                reasons.push(ConstraintId::EnergyCap { ue: m });
            }
            if !latency_ok {
                reasons.push(ConstraintId::LatencyCap { ue: m });
            }
        }
        if !viable {
            reasons.dedup();
            blocked.push((m, reasons));
        }
    }
    if blocked.is_empty() {
        None
    } else {
        Some(LspInfeasibility { blocked })
    }
}

/// Build the convexified long-term program at the given penalty anchor.
/// With `alpha` = 0 this is the plain LP/QP relaxation used for exact
/// search bounds.
pub fn build_lsp_program(
    inputs: &LspInputs,
    anchor: &[f64],
    alpha: f64,
    pins: &LspPins,
) -> Result<LspProgram, LspError> {
    if let Some(report) = viability_report(inputs) {
        return Err(LspError::Infeasible(report));
    }
    let p = inputs.params;
    let layout = LspLayout::new(p.num_ues, p.num_ess, p.num_services);
    let n_core = layout.core_count();
    assert_eq!(anchor.len(), n_core, "anchor length must match the layout");

    let mut prog = ConicProgram::new();
    for m in 0..p.num_ues {
        for k in 0..p.num_ess {
            let i = prog.add_var(format!("assoc[{m},{k}]"), 0.0, 1.0);
            debug_assert_eq!(i, layout.assoc(m, k));
        }
    }
    for m in 0..p.num_ues {
        for k in 0..p.num_ess {
            for k2 in 0..p.num_ess {
                if k2 != k {
                    let i = prog.add_var(format!("edge_edge[{m},{k}->{k2}]"), 0.0, 1.0);
                    debug_assert_eq!(i, layout.edge_edge(m, k, k2));
                }
            }
        }
    }
    for m in 0..p.num_ues {
        for k in 0..p.num_ess {
            let i = prog.add_var(format!("edge_cloud[{m},{k}]"), 0.0, 1.0);
            debug_assert_eq!(i, layout.edge_cloud(m, k));
        }
    }
    for s in 0..p.num_services {
        for k in 0..p.num_ess {
            let i = prog.add_var(format!("placed[{s},{k}]"), 0.0, 1.0);
            debug_assert_eq!(i, layout.placement(s, k));
        }
    }
    for &(idx, value) in &pins.fixed {
        prog.fix_var(idx, value);
    }

    // Epigraphs: status-change squares, per-UE propagation and processing
    // maxima, shared worst backhaul term.
    let mut q_idx = vec![0usize; p.num_services * p.num_ess];
    for s in 0..p.num_services {
        for k in 0..p.num_ess {
            let q = prog.add_var(format!("sq_change[{s},{k}]"), 0.0, 2.0);
            q_idx[s * p.num_ess + k] = q;
            let prev = inputs.prev_placement[s * p.num_ess + k] as i32 as f64;
            prog.add_rsoc(
                LinExpr::var(q),
                LinExpr::constant(1.0),
                vec![LinExpr::term(layout.placement(s, k), 1.0).offset(-prev)],
            );
        }
    }
    let upro: Vec<usize> =
        (0..p.num_ues).map(|m| prog.add_var(format!("prop_max[{m}]"), 0.0, f64::INFINITY)).collect();
    let ucp: Vec<usize> = (0..p.num_ues)
        .map(|m| prog.add_var(format!("proc_max[{m}]"), 0.0, f64::INFINITY))
        .collect();
    let tbh = prog.add_var("backhaul_max", 0.0, f64::INFINITY);

    let radio = radio_constants(inputs);
    let w_t = p.weight_latency;
    let w_c = p.weight_cost;
    let prices = &p.prices;

    // Propagation and processing epigraph rows, one per (m, k).
    for m in 0..p.num_ues {
        let phi = inputs.alloc.local_portion[m];
        let task = &inputs.tasks[m];
        let offload_cycles = (1.0 - phi) * task.cycles;
        for k in 0..p.num_ess {
            let mut prop = LinExpr::var(upro[m]);
            prop.push(layout.edge_cloud(m, k), -p.prop_es_cloud[k]);
            for k2 in 0..p.num_ess {
                if k2 != k {
                    prop.push(layout.edge_edge(m, k, k2), -p.prop_es_es[k][k2]);
                }
            }
            prog.add_ge(prop, 0.0);

            let t_here = offload_cycles / p.rate_es[m][k];
            let mut proc = LinExpr::var(ucp[m]);
            proc.push(layout.assoc(m, k), -t_here);
            proc.push(layout.edge_cloud(m, k), t_here - offload_cycles / p.rate_cloud[m]);
            for k2 in 0..p.num_ess {
                if k2 != k {
                    proc.push(
                        layout.edge_edge(m, k, k2),
                        t_here - offload_cycles / p.rate_es[m][k2],
                    );
                }
            }
            prog.add_ge(proc, 0.0);
        }
    }

    // Worst per-ES transfer delay rows.
    for k in 0..p.num_ess {
        let mut row = LinExpr::var(tbh);
        for m in 0..p.num_ues {
            let phi = inputs.alloc.local_portion[m];
            let bits = (1.0 - phi) * inputs.tasks[m].size_bits;
            if bits <= 0.0 {
                continue;
            }
            row.push(layout.edge_cloud(m, k), -bits / p.backhaul_rate[k]);
            for k2 in 0..p.num_ess {
                if k2 != k {
                    row.push(layout.edge_edge(m, k, k2), -bits / p.fronthaul_rate[k][k2]);
                }
            }
        }
        prog.add_ge(row, 0.0);
    }

    // Latency, energy and rate rows per UE.
    for m in 0..p.num_ues {
        let phi = inputs.alloc.local_portion[m];
        let task = &inputs.tasks[m];
        let local_delay = phi * task.cycles / p.rate_ue[m];

        let mut lat = LinExpr::var(upro[m]).plus(ucp[m], 1.0).plus(tbh, 1.0);
        for k in 0..p.num_ess {
            lat.push(layout.assoc(m, k), radio[m][k]);
        }
        prog.add_le(lat, p.latency_cap[m] - local_delay);

        if phi < 1.0 {
            let compute_energy =
                0.5 * p.eff_capacitance[m] * phi * task.cycles * p.rate_ue[m] * p.rate_ue[m];
            let mut energy = LinExpr::new();
            for k in 0..p.num_ess {
                energy.push(layout.assoc(m, k), p.tx_power[m] * radio[m][k]);
            }
            prog.add_le(energy, p.energy_cap[m] - compute_energy);
        }

        // Association-gated rate floor: sum_k sigma (R_mk - R_min) >= 0.
        let mut rate = LinExpr::new();
        for k in 0..p.num_ess {
            rate.push(layout.assoc(m, k), fixed_share_rate(inputs, m, k) - p.rate_floor);
        }
        prog.add_ge(rate, 0.0);

        // Coupling: offloading UEs must hold exactly one association.
        let mut assoc_sum = LinExpr::new();
        for k in 0..p.num_ess {
            assoc_sum.push(layout.assoc(m, k), 1.0);
        }
        if phi < 1.0 {
            prog.add_eq(assoc_sum, 1.0);
        } else {
            prog.add_le(assoc_sum, 1.0);
        }
    }

    // Cost cap over change, operating and request prices.
    let mut cost = LinExpr::new();
    let mut cost_const = 0.0;
    for s in 0..p.num_services {
        for k in 0..p.num_ess {
            let prev = inputs.prev_placement[s * p.num_ess + k] as i32 as f64;
            cost.push(q_idx[s * p.num_ess + k], 0.5 * (prices.uninstall + prices.install));
            cost.push(
                layout.placement(s, k),
                -0.5 * (prices.uninstall - prices.install) + prices.operate,
            );
            cost_const += 0.5 * (prices.uninstall - prices.install) * prev;
        }
    }
    for m in 0..p.num_ues {
        for k in 0..p.num_ess {
            cost.push(layout.edge_cloud(m, k), prices.request);
        }
    }
    prog.add_le(cost.clone(), p.cost_cap - cost_const);

    // Compute capacity rows.
    for k in 0..p.num_ess {
        let mut load = LinExpr::new();
        for m in 0..p.num_ues {
            let f = p.rate_es[m][k];
            load.push(layout.assoc(m, k), f);
            load.push(layout.edge_cloud(m, k), -f);
            for k2 in 0..p.num_ess {
                if k2 != k {
                    load.push(layout.edge_edge(m, k, k2), -f);
                    load.push(layout.edge_edge(m, k2, k), f);
                }
            }
        }
        prog.add_le(load, p.es_capacity[k]);
    }
    let mut cloud_load = LinExpr::new();
    for m in 0..p.num_ues {
        for k in 0..p.num_ess {
            cloud_load.push(layout.edge_cloud(m, k), p.rate_cloud[m]);
        }
    }
    prog.add_le(cloud_load, p.cloud_capacity);

    // Structural rows: cooperation limits, lemmas, placement range.
    for m in 0..p.num_ues {
        let service = inputs.requests[m];
        for k in 0..p.num_ess {
            let mut coop = LinExpr::term(layout.edge_cloud(m, k), 1.0);
            let mut edge_sum = LinExpr::new();
            for k2 in 0..p.num_ess {
                if k2 != k {
                    coop.push(layout.edge_edge(m, k, k2), 1.0);
                    edge_sum.push(layout.edge_edge(m, k, k2), 1.0);
                }
            }
            // Cooperation requires the association bit (and caps at one).
            prog.add_le(coop.clone().plus(layout.assoc(m, k), -1.0), 0.0);
            if p.num_ess > 1 {
                prog.add_le(edge_sum.clone(), 1.0);
                prog.add_le(edge_sum.clone().plus(layout.assoc(m, k), -1.0), 0.0);
            }
            prog.add_le(
                LinExpr::term(layout.edge_cloud(m, k), 1.0).plus(layout.assoc(m, k), -1.0),
                0.0,
            );
            // Service availability at the receiving ES.
            let mut avail = LinExpr::term(layout.assoc(m, k), 1.0)
                .plus(layout.edge_cloud(m, k), -1.0)
                .plus(layout.placement(service, k), -1.0);
            for k2 in 0..p.num_ess {
                if k2 != k {
                    avail.push(layout.edge_edge(m, k, k2), -1.0);
                }
            }
            prog.add_le(avail, 0.0);
            // Forwarding requires the service placed at the target.
            for k2 in 0..p.num_ess {
                if k2 != k {
                    prog.add_le(
                        LinExpr::term(layout.edge_edge(m, k, k2), 1.0)
                            .plus(layout.placement(service, k2), -1.0),
                        0.0,
                    );
                }
            }
        }
    }
    for k in 0..p.num_ess {
        let mut count = LinExpr::new();
        for s in 0..p.num_services {
            count.push(layout.placement(s, k), 1.0);
        }
        prog.add_ge(count.clone(), 1.0);
        prog.add_le(count, p.max_services_per_es[k] as f64);
    }

    // Objective: latency block, cost block, penalty surrogate.
    for m in 0..p.num_ues {
        for k in 0..p.num_ess {
            prog.add_linear_obj(layout.assoc(m, k), w_t * radio[m][k]);
        }
        prog.add_linear_obj(upro[m], w_t);
        prog.add_linear_obj(ucp[m], w_t);
        let local_delay =
            inputs.alloc.local_portion[m] * inputs.tasks[m].cycles / p.rate_ue[m];
        prog.add_constant_obj(w_t * local_delay);
    }
    prog.add_linear_obj(tbh, w_t * p.num_ues as f64);
    for &(i, c) in &cost.terms {
        prog.add_linear_obj(i, w_c * c);
    }
    prog.add_constant_obj(w_c * cost_const);
    if alpha > 0.0 {
        for i in 0..n_core {
            prog.add_linear_obj(i, alpha * (1.0 - 2.0 * anchor[i]));
            prog.add_constant_obj(alpha * anchor[i] * anchor[i]);
        }
    }

    Ok(LspProgram { program: prog, layout, core_vars: n_core })
}

/// Long-term objective of a binary decision under the fixed allocation,
/// evaluated by the exact model.
pub fn binary_objective(inputs: &LspInputs, decision: &PlacementDecision) -> f64 {
    let breakdown =
        latency::e2e_latency(inputs.params, decision, inputs.alloc, inputs.channel, inputs.tasks);
    let ledger = model::total_cost(decision, inputs.prev_placement, &inputs.params.prices);
    model::objective(
        inputs.params,
        &breakdown.iter().map(|b| b.e2e).collect::<Vec<_>>(),
        ledger.total,
    )
}

/// Plain relaxation bound (alpha = 0): a lower bound on the objective of
/// every binary completion consistent with the pins.
pub fn relaxed_lower_bound(inputs: &LspInputs, pins: &LspPins) -> Result<(f64, SolveStatus), LspError> {
    let layout = LspLayout::new(
        inputs.params.num_ues,
        inputs.params.num_ess,
        inputs.params.num_services,
    );
    let anchor = vec![0.5; layout.core_count()];
    let built = build_lsp_program(inputs, &anchor, 0.0, pins)?;
    let sol = conic::solve(&built.program, conic::DEFAULT_TOL, conic::DEFAULT_MAX_ITER)
        .map_err(|e| LspError::Solver(e.to_string()))?;
    Ok((sol.objective, sol.status))
}

#[derive(Debug, Clone)]
pub struct LspTraceRow {
    pub iteration: usize,
    /// Surrogate penalized objective value at the iterate.
    pub penalized_objective: f64,
    /// Exact penalty of the iterate.
    pub penalty_value: f64,
    /// Worst distance of any entry from the nearest integer.
    pub max_fractionality: f64,
}

#[derive(Debug, Clone)]
pub struct LspOutcome {
    pub decision: PlacementDecision,
    pub trace: Vec<LspTraceRow>,
    /// Set when the greedy fallback produced the decision.
    pub fallback: bool,
    pub retries: usize,
    /// Exact long-term objective of the returned decision.
    pub objective: f64,
}

/// Violations that the rounding repair checks: the full constraint set of
/// the long-term problem at the binary point under the fixed allocation.
fn rounded_violations(inputs: &LspInputs, decision: &PlacementDecision) -> Vec<model::Violation> {
    check_feasibility(
        inputs.params,
        decision,
        inputs.alloc,
        inputs.channel,
        inputs.tasks,
        inputs.requests,
        inputs.prev_placement,
    )
}

/// Algorithm main loop: penalty-SCA, rounding, repair retries, fallback.
pub fn solve_lsp(
    inputs: &LspInputs,
    alpha: f64,
    pins: &LspPins,
    rng: &mut ChaCha8Rng,
    tol: f64,
    max_iter: usize,
) -> Result<LspOutcome, LspError> {
    let p = inputs.params;
    let layout = LspLayout::new(p.num_ues, p.num_ess, p.num_services);
    let n_core = layout.core_count();
    if let Some(report) = viability_report(inputs) {
        return Err(LspError::Infeasible(report));
    }

    // The penalty weight acts on a penalty normalized to the problem's own
    // objective magnitude, taken from the plain relaxation. This keeps the
    // weight-to-objective ratio (the quantity that governs binarization
    // speed versus accuracy) independent of the physical units.
    let (relaxed_obj, _) = relaxed_lower_bound(inputs, pins)?;
    let alpha = alpha * relaxed_obj.abs().max(1e-6);

    let pin_value: Vec<Option<f64>> = {
        let mut v = vec![None; n_core];
        for &(i, value) in &pins.fixed {
            v[i] = Some(value);
        }
        v
    };
    // Anchors start at one half with a seed-dependent jitter. The jitter
    // must stay far below (objective scale)/alpha or the first surrogate
    // drowns the objective and locks an arbitrary vertex; it widens on
    // each repair retry to diversify the restart.
    let draw_anchor = |rng: &mut ChaCha8Rng, width: f64| -> Vec<f64> {
        (0..n_core)
            .map(|i| {
                pin_value[i].unwrap_or_else(|| 0.5 + width * (rng.random::<f64>() - 0.5))
            })
            .collect()
    };

    let mut full_trace = Vec::new();
    let mut retries = 0;
    for attempt in 0..=REPAIR_RETRIES {
        retries = attempt;
        let jitter = 2e-6 * 4f64.powi(attempt as i32);
        let mut anchor = draw_anchor(rng, jitter.min(0.1));
        let mut last_obj = f64::INFINITY;
        let mut iterate = anchor.clone();
        let mut trace = Vec::new();
        for iteration in 0..max_iter {
            let built = build_lsp_program(inputs, &anchor, alpha, pins)?;
            let sol = conic::solve(&built.program, conic::DEFAULT_TOL, conic::DEFAULT_MAX_ITER)
                .map_err(|e| LspError::Solver(e.to_string()))?;
            if sol.status == SolveStatus::Infeasible {
                return Err(LspError::Solver(
                    "relaxed long-term program reported infeasible".into(),
                ));
            }
            if sol.status != SolveStatus::Optimal && sol.max_primal_residual > 1e-6 {
                break;
            }
            iterate = sol.primal[..n_core]
                .iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect();
            let pen = penalty(&iterate)?;
            let frac = iterate
                .iter()
                .map(|v| (v - v.round()).abs())
                .fold(0.0, f64::max);
            trace.push(LspTraceRow {
                iteration,
                penalized_objective: sol.objective,
                penalty_value: pen,
                max_fractionality: frac,
            });
            let converged = last_obj.is_finite()
                && (last_obj - sol.objective).abs() <= tol * last_obj.abs().max(1e-12);
            last_obj = sol.objective;
            anchor = iterate.clone();
            if converged {
                break;
            }
        }
        full_trace = trace;

        // Recover binaries by rounding at one half.
        let rounded: Vec<f64> = iterate.iter().map(|v| (v + 0.5).floor().min(1.0)).collect();
        let decision = layout.to_decision(&rounded);
        if rounded_violations(inputs, &decision).is_empty() {
            let decision = local_improvement(inputs, pins, &layout, decision);
            let objective = binary_objective(inputs, &decision);
            return Ok(LspOutcome {
                decision,
                trace: full_trace,
                fallback: false,
                retries,
                objective,
            });
        }
    }

    // Retry budget exhausted: greedy repair.
    let decision = fallback_decision(inputs, pins, &layout);
    let decision = local_improvement(inputs, pins, &layout, decision);
    let objective = binary_objective(inputs, &decision);
    Ok(LspOutcome { decision, trace: full_trace, fallback: true, retries, objective })
}

/// Deterministic best-improvement pass over a small move neighborhood:
/// toggle one placement, swap the service held by one placement slot,
/// move one UE to another admissible route, and drop-a-placement with its
/// dependent UEs rerouted. The relaxation is heavily tie-degenerate in the
/// placement block (any distribution with the same count costs the same),
/// so the rounded point regularly carries unused placements or detours
/// that these moves remove. Runs to a fixpoint, bounded, honoring pins.
fn local_improvement(
    inputs: &LspInputs,
    pins: &LspPins,
    layout: &LspLayout,
    mut decision: PlacementDecision,
) -> PlacementDecision {
    let p = inputs.params;
    let pinned: std::collections::BTreeMap<usize, f64> = pins.fixed.iter().copied().collect();
    let allows = |idx: usize, value: bool| {
        pinned.get(&idx).map_or(true, |&v| v == value as i32 as f64)
    };

    // Re-route one UE in place; returns false when pins forbid the result.
    let set_route = |cand: &mut PlacementDecision, m: usize, assoc: Option<usize>, mv: Option<RouteMove>| -> bool {
        for k in 0..p.num_ess {
            cand.set_assoc(m, k, false);
            cand.set_edge_cloud(m, k, false);
            for k2 in 0..p.num_ess {
                if k2 != k {
                    cand.set_edge_edge(m, k, k2, false);
                }
            }
        }
        if let Some(k) = assoc {
            cand.set_assoc(m, k, true);
            match mv {
                Some(RouteMove::Cloud) => cand.set_edge_cloud(m, k, true),
                Some(RouteMove::Forward(k2)) => cand.set_edge_edge(m, k, k2, true),
                _ => {}
            }
        }
        for k in 0..p.num_ess {
            if !allows(layout.assoc(m, k), cand.assoc(m, k))
                || !allows(layout.edge_cloud(m, k), cand.edge_cloud(m, k))
            {
                return false;
            }
            for k2 in 0..p.num_ess {
                if k2 != k && !allows(layout.edge_edge(m, k, k2), cand.edge_edge(m, k, k2)) {
                    return false;
                }
            }
        }
        true
    };

    // Greedy reroute of every UE whose route needs service s at ES k,
    // after that placement disappeared: stay if the service lives at the
    // associated ES, else forward to a holder, else cloud.
    let reroute_dependents = |cand: &mut PlacementDecision, s: usize, k: usize| -> bool {
        for m in 0..p.num_ues {
            if inputs.requests[m] != s {
                continue;
            }
            let needs = match cand.route(m) {
                crate::model::Route::Edge { at } => at == k,
                crate::model::Route::Forwarded { to, .. } => to == k,
                _ => false,
            };
            if !needs {
                continue;
            }
            let Some(assoc) = cand.associated_es(m) else { continue };
            let mv = if cand.placed(s, assoc) {
                Some(RouteMove::Stay)
            } else if let Some(k2) =
                (0..p.num_ess).find(|&k2| k2 != assoc && cand.placed(s, k2))
            {
                Some(RouteMove::Forward(k2))
            } else {
                Some(RouteMove::Cloud)
            };
            if !set_route(cand, m, Some(assoc), mv) {
                return false;
            }
        }
        true
    };

    let mut current = binary_objective(inputs, &decision);
    for _ in 0..24 {
        let mut best: Option<(f64, PlacementDecision)> = None;
        let mut consider = |cand: PlacementDecision, best: &mut Option<(f64, PlacementDecision)>| {
            if !rounded_violations(inputs, &cand).is_empty() {
                return;
            }
            let obj = binary_objective(inputs, &cand);
            if obj < current - 1e-12 && best.as_ref().map_or(true, |(b, _)| obj < *b - 1e-12) {
                *best = Some((obj, cand));
            }
        };

        for s in 0..p.num_services {
            for k in 0..p.num_ess {
                let now = decision.placed(s, k);
                if allows(layout.placement(s, k), !now) {
                    // Plain toggle.
                    let mut cand = decision.clone();
                    cand.set_placed(s, k, !now);
                    let ok = if now { reroute_dependents(&mut cand, s, k) } else { true };
                    if ok {
                        consider(cand, &mut best);
                    }
                }
                if now {
                    // Swap which service occupies the slot.
                    for s2 in 0..p.num_services {
                        if s2 == s
                            || decision.placed(s2, k)
                            || !allows(layout.placement(s, k), false)
                            || !allows(layout.placement(s2, k), true)
                        {
                            continue;
                        }
                        let mut cand = decision.clone();
                        cand.set_placed(s, k, false);
                        cand.set_placed(s2, k, true);
                        if reroute_dependents(&mut cand, s, k) {
                            consider(cand, &mut best);
                        }
                    }
                }
            }
        }
        for m in 0..p.num_ues {
            let mut options: Vec<(Option<usize>, Option<RouteMove>)> = Vec::new();
            if inputs.alloc.local_portion[m] >= 1.0 {
                options.push((None, None));
            }
            for k in 0..p.num_ess {
                options.push((Some(k), Some(RouteMove::Stay)));
                options.push((Some(k), Some(RouteMove::Cloud)));
                for k2 in 0..p.num_ess {
                    if k2 != k {
                        options.push((Some(k), Some(RouteMove::Forward(k2))));
                    }
                }
            }
            for (assoc, mv) in options {
                let mut cand = decision.clone();
                if set_route(&mut cand, m, assoc, mv) {
                    consider(cand, &mut best);
                }
            }
        }
        match best {
            Some((obj, cand)) => {
                decision = cand;
                current = obj;
            }
            None => break,
        }
    }
    decision
}

#[derive(Clone, Copy)]
enum RouteMove {
    Stay,
    Cloud,
    Forward(usize),
}

/// Greedy repair: keep previous placements where allowed, associate each
/// offloading UE to its strongest viable ES, and serve through the first
/// admissible route (stay, forward, cloud).
fn fallback_decision(
    inputs: &LspInputs,
    pins: &LspPins,
    layout: &LspLayout,
) -> PlacementDecision {
    let p = inputs.params;
    let mut d = PlacementDecision::empty(p.num_ues, p.num_ess, p.num_services);
    let pinned: std::collections::BTreeMap<usize, f64> = pins.fixed.iter().copied().collect();
    let allows = |idx: usize, value: f64| pinned.get(&idx).map_or(true, |&v| v == value);

    // Placements: previous frame's services, then the requested ones while
    // capacity remains.
    for k in 0..p.num_ess {
        for s in 0..p.num_services {
            if inputs.prev_placement[s * p.num_ess + k]
                && d.services_on(k) < p.max_services_per_es[k]
                && allows(layout.placement(s, k), 1.0)
            {
                d.set_placed(s, k, true);
            }
        }
    }
    for k in 0..p.num_ess {
        if d.services_on(k) == 0 {
            for s in 0..p.num_services {
                if allows(layout.placement(s, k), 1.0) {
                    d.set_placed(s, k, true);
                    break;
                }
            }
        }
    }
    for m in 0..p.num_ues {
        if inputs.alloc.local_portion[m] >= 1.0 {
            continue;
        }
        let service = inputs.requests[m];
        // Strongest viable ES honoring pins.
        let mut best: Option<(usize, f64)> = None;
        for k in 0..p.num_ess {
            if !allows(layout.assoc(m, k), 1.0) {
                continue;
            }
            let rate = fixed_share_rate(inputs, m, k);
            if best.map_or(true, |(_, r)| rate > r) {
                best = Some((k, rate));
            }
        }
        let Some((k, _)) = best else { continue };
        d.set_assoc(m, k, true);
        if d.placed(service, k) {
            continue;
        }
        let forward = (0..p.num_ess).find(|&k2| {
            k2 != k && d.placed(service, k2) && allows(layout.edge_edge(m, k, k2), 1.0)
        });
        if let Some(k2) = forward {
            d.set_edge_edge(m, k, k2, true);
        } else if allows(layout.edge_cloud(m, k), 1.0) {
            d.set_edge_cloud(m, k, true);
        } else if d.services_on(k) < p.max_services_per_es[k]
            && allows(layout.placement(service, k), 1.0)
        {
            d.set_placed(service, k, true);
        }
    }
    d
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
        alloc: AllocationDecision,
        prev: Vec<bool>,
    }

    impl Fixture {
        fn inputs(&self) -> LspInputs<'_> {
            LspInputs {
                params: &self.params,
                channel: &self.channel,
                tasks: &self.tasks,
                requests: &self.requests,
                alloc: &self.alloc,
                prev_placement: &self.prev,
            }
        }
    }

    fn fixture(cfg: ScenarioConfig, phi: f64) -> Fixture {
        let sc = Scenario::build(cfg).unwrap();
        let params = ModelParams::from_scenario(&sc);
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let mut req_rng = sc.substream(Stream::Requests);
        let requests = sc.initial_requests(&mut req_rng).service;
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &RequestState { service: requests.clone(), regenerations: 0 },
        );
        let m = params.num_ues;
        let alloc = AllocationDecision {
            local_portion: vec![phi; m],
            bandwidth_share: vec![1.0 / m as f64; m],
        };
        let prev = vec![false; params.num_services * params.num_ess];
        Fixture { params, channel, tasks, requests, alloc, prev }
    }

    #[test]
    fn penalty_reference_values() {
        assert_eq!(penalty(&[0.0, 1.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((penalty(&[0.5]).unwrap() - 0.25).abs() < 1e-15);
        assert!(penalty(&[1.5]).is_err());
        assert!(penalty(&[-0.2]).is_err());
        // Independent term-by-term summation.
        let mut rng = crate::scenario::substream(3, Stream::Anchors);
        use rand::Rng;
        for _ in 0..50 {
            let v: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
            let by_hand: f64 = v.iter().map(|x| x - x * x).sum();
            assert!((penalty(&v).unwrap() - by_hand).abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_majorizes_and_is_tight() {
        use rand::Rng;
        let mut rng = crate::scenario::substream(4, Stream::Anchors);
        for _ in 0..100 {
            let x: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
            let a: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
            let p = penalty(&x).unwrap();
            let s = penalty_surrogate(&x, &a);
            assert!(s >= p - 1e-12, "surrogate {s} below penalty {p}");
            let tight = penalty_surrogate(&x, &x);
            assert!((tight - p).abs() < 1e-12);
        }
        // Anchor 0 with x = 1 gives surrogate 1 while the penalty is 0.
        assert!((penalty_surrogate(&[1.0], &[0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layout_roundtrip_and_core_count() {
        let layout = LspLayout::new(3, 2, 4);
        assert_eq!(layout.core_count(), 3 * 2 + 3 * 2 * 1 + 3 * 2 + 4 * 2);
        let mut d = PlacementDecision::empty(3, 2, 4);
        d.set_assoc(1, 0, true);
        d.set_edge_edge(1, 0, 1, true);
        d.set_edge_cloud(2, 1, true);
        d.set_placed(3, 1, true);
        let x = layout.from_decision(&d);
        assert_eq!(layout.to_decision(&x), d);
    }

    #[test]
    fn degenerate_single_node_forces_structure() {
        let cfg = ScenarioConfig {
            num_ues: 1,
            num_ess: 1,
            num_services: 1,
            max_services_per_es: 1,
            ..Default::default()
        };
        let f = fixture(cfg, 0.5);
        let inputs = f.inputs();
        let mut rng = crate::scenario::substream(5, Stream::Anchors);
        let out =
            solve_lsp(&inputs, DEFAULT_PENALTY, &LspPins::none(), &mut rng, LSP_TOL, LSP_MAX_ITER)
                .unwrap();
        assert!(!out.fallback);
        assert!(out.decision.assoc(0, 0));
        assert!(out.decision.placed(0, 0));
    }

    #[test]
    fn program_core_variable_count() {
        let f = fixture(ScenarioConfig::default(), 0.5);
        let inputs = f.inputs();
        let layout = LspLayout::new(8, 2, 8);
        let anchor = vec![0.5; layout.core_count()];
        let built = build_lsp_program(&inputs, &anchor, DEFAULT_PENALTY, &LspPins::none()).unwrap();
        built.program.validate().unwrap();
        assert_eq!(built.core_vars, 8 * 2 + 8 * 2 + 8 * 2 + 8 * 2);
        // Epigraph extras on top: change squares, per-UE maxima, backhaul.
        assert_eq!(
            built.program.num_vars(),
            built.core_vars + 8 * 2 + 8 + 8 + 1
        );
    }

    #[test]
    fn relaxation_bounds_every_binary_point() {
        let cfg = ScenarioConfig {
            num_ues: 1,
            num_ess: 2,
            num_services: 1,
            max_services_per_es: 1,
            ..Default::default()
        };
        let f = fixture(cfg, 0.4);
        let inputs = f.inputs();
        let layout = LspLayout::new(1, 2, 1);
        let (bound, status) = relaxed_lower_bound(&inputs, &LspPins::none()).unwrap();
        assert_eq!(status, crate::conic::SolveStatus::Optimal);

        // Exhaustive binary enumeration over the 8 layout bits.
        let n = layout.core_count();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << n) {
            let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
            let d = layout.to_decision(&x);
            if rounded_violations(&inputs, &d).is_empty() {
                best = best.min(binary_objective(&inputs, &d));
            }
        }
        assert!(best.is_finite(), "no feasible binary point");
        assert!(
            bound <= best + 1e-7 * best.abs().max(1.0),
            "relaxation {bound} above best binary {best}"
        );
    }

    #[test]
    fn solve_converges_monotonically_and_feasibly() {
        let f = fixture(ScenarioConfig::default(), 0.5);
        let inputs = f.inputs();
        let mut rng = crate::scenario::substream(6, Stream::Anchors);
        let out =
            solve_lsp(&inputs, DEFAULT_PENALTY, &LspPins::none(), &mut rng, LSP_TOL, LSP_MAX_ITER)
                .unwrap();
        assert!(!out.fallback, "fallback engaged after {} retries", out.retries);
        for w in out.trace.windows(2) {
            assert!(
                w[1].penalized_objective
                    <= w[0].penalized_objective + 1e-9 * w[0].penalized_objective.abs().max(1.0),
                "objective rose: {} -> {}",
                w[0].penalized_objective,
                w[1].penalized_objective
            );
        }
        let final_penalty = out.trace.last().unwrap().penalty_value;
        assert!(final_penalty < 1e-3, "terminal penalty {final_penalty}");
        assert!(rounded_violations(&inputs, &out.decision).is_empty());

        // Rounding an already-binary iterate changes nothing.
        let layout = LspLayout::new(8, 2, 8);
        let x = layout.from_decision(&out.decision);
        let rounded: Vec<f64> = x.iter().map(|v| (v + 0.5).floor().min(1.0)).collect();
        assert_eq!(layout.to_decision(&rounded), out.decision);
    }

    #[test]
    fn deterministic_given_seed() {
        let f = fixture(ScenarioConfig::default(), 0.5);
        let inputs = f.inputs();
        let run = || {
            let mut rng = crate::scenario::substream(7, Stream::Anchors);
            solve_lsp(&inputs, DEFAULT_PENALTY, &LspPins::none(), &mut rng, LSP_TOL, LSP_MAX_ITER)
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.decision, b.decision);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn pins_are_respected() {
        let f = fixture(ScenarioConfig::default(), 0.5);
        let inputs = f.inputs();
        let layout = LspLayout::new(8, 2, 8);
        let mut pins = LspPins::none().pin_no_cloud(&layout);
        for m in 0..8 {
            pins = pins.pin_association(&layout, m, 0);
        }
        let mut rng = crate::scenario::substream(8, Stream::Anchors);
        let out = solve_lsp(&inputs, DEFAULT_PENALTY, &pins, &mut rng, LSP_TOL, LSP_MAX_ITER)
            .unwrap();
        for m in 0..8 {
            assert!(out.decision.assoc(m, 0));
            assert!(!out.decision.assoc(m, 1));
            for k in 0..2 {
                assert!(!out.decision.edge_cloud(m, k));
            }
        }
    }

    #[test]
    fn infeasible_allocation_reports_blockers() {
        let mut f = fixture(ScenarioConfig::default(), 0.5);
        // A rate floor beyond any achievable uplink blocks every UE.
        f.params.rate_floor = 1e12;
        let inputs = f.inputs();
        let mut rng = crate::scenario::substream(9, Stream::Anchors);
        match solve_lsp(&inputs, DEFAULT_PENALTY, &LspPins::none(), &mut rng, LSP_TOL, LSP_MAX_ITER)
        {
            Err(LspError::Infeasible(report)) => {
                assert_eq!(report.blocked.len(), 8);
                assert!(report.blocked.iter().all(|(_, ids)| ids
                    .iter()
                    .any(|id| matches!(id, ConstraintId::RateFloor { .. }))));
            }
            other => panic!("expected infeasibility report, got {other:?}"),
        }
    }
}
