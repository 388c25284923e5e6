//! Exact search over the binary decision space for small instances: the
//! ground-truth comparator for the penalty-SCA loop and the brute-force
//! oracle behind the reference tests.
//!
//! Exhaustive mode enumerates structurally consistent candidates (per-UE
//! route patterns crossed with per-ES placement masks) and keeps the best
//! fully feasible point. Branch-and-bound fixes one variable at a time in
//! tier order (placements, associations, cooperation bits), bounding each
//! node with the plain relaxation of the long-term program; disabling
//! pruning never changes the returned objective.

use crate::longterm::{binary_objective, relaxed_lower_bound, LspError, LspInputs, LspLayout, LspPins};
use crate::model::{check_feasibility, PlacementDecision};

/// Exhaustive mode refuses search spaces beyond this many raw binary
/// combinations.
pub const EXHAUSTIVE_BIT_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Exhaustive,
    BranchAndBound,
}

#[derive(Debug, Clone)]
pub struct BnbOptions {
    pub mode: SearchMode,
    /// Disable to verify pruning soundness; identical results either way.
    pub prune: bool,
    /// Safety valve on explored nodes.
    pub node_cap: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions { mode: SearchMode::BranchAndBound, prune: true, node_cap: 2_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub decision: PlacementDecision,
    pub objective: f64,
    /// Explored nodes (branch-and-bound) or evaluated candidates
    /// (exhaustive).
    pub nodes: usize,
}

#[derive(Debug)]
pub enum BnbError {
    /// Exhaustive mode would enumerate more than 2^EXHAUSTIVE_BIT_CAP raw
    /// combinations; use branch-and-bound instead.
    SearchSpaceTooLarge { bits: usize },
    NoFeasiblePoint,
    Relaxation(LspError),
    NodeCapExceeded { cap: usize },
}

impl std::fmt::Display for BnbError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BnbError::SearchSpaceTooLarge { bits } => write!(
                f,
                "exhaustive search over {bits} binary variables exceeds 2^{EXHAUSTIVE_BIT_CAP}; \
                 use branch-and-bound mode"
            ),
            BnbError::NoFeasiblePoint => write!(f, "no feasible binary decision exists"),
            BnbError::Relaxation(e) => write!(f, "relaxation failure: {e}"),
            BnbError::NodeCapExceeded { cap } => write!(f, "node cap {cap} exceeded"),
        }
    }
}

impl std::error::Error for BnbError {}

/// One UE's execution pattern in the structural enumeration.
#[derive(Debug, Clone, Copy)]
enum RoutePattern {
    None,
    Stay { at: usize },
    Forward { via: usize, to: usize },
    Cloud { via: usize },
}

/// All structurally consistent decisions (association, cooperation and
/// transfer conditions hold; placement masks are nonempty and within
/// capacity). Resource and cap constraints are NOT applied here; the
/// caller filters. UEs with a fixed local portion below one must
/// associate, others may also stay local.
pub fn structural_candidates(inputs: &LspInputs) -> Vec<PlacementDecision> {
    let p = inputs.params;
    let m_count = p.num_ues;
    let k_count = p.num_ess;
    let s_count = p.num_services;

    // Per-ES placement masks with populations in [1, S_k_max].
    let masks_per_es: Vec<Vec<u32>> = (0..k_count)
        .map(|k| {
            (1u32..(1 << s_count))
                .filter(|mask| {
                    let pop = mask.count_ones() as usize;
                    pop >= 1 && pop <= p.max_services_per_es[k]
                })
                .collect()
        })
        .collect();

    let mut decisions = Vec::new();
    let mut mask_choice = vec![0usize; k_count];
    loop {
        // Build the placement for this mask combination.
        let mut base = PlacementDecision::empty(m_count, k_count, s_count);
        for k in 0..k_count {
            let mask = masks_per_es[k][mask_choice[k]];
            for s in 0..s_count {
                if mask & (1 << s) != 0 {
                    base.set_placed(s, k, true);
                }
            }
        }

        // Admissible route patterns per UE under this placement.
        let patterns_per_ue: Vec<Vec<RoutePattern>> = (0..m_count)
            .map(|m| {
                let service = inputs.requests[m];
                let mut patterns = Vec::new();
                if inputs.alloc.local_portion[m] >= 1.0 {
                    patterns.push(RoutePattern::None);
                }
                for k in 0..k_count {
                    if base.placed(service, k) {
                        patterns.push(RoutePattern::Stay { at: k });
                    }
                    for k2 in 0..k_count {
                        if k2 != k && base.placed(service, k2) {
                            patterns.push(RoutePattern::Forward { via: k, to: k2 });
                        }
                    }
                    patterns.push(RoutePattern::Cloud { via: k });
                }
                patterns
            })
            .collect();

        let mut pattern_choice = vec![0usize; m_count];
        'patterns: loop {
            let mut d = base.clone();
            for m in 0..m_count {
                match patterns_per_ue[m][pattern_choice[m]] {
                    RoutePattern::None => {}
                    RoutePattern::Stay { at } => d.set_assoc(m, at, true),
                    RoutePattern::Forward { via, to } => {
                        d.set_assoc(m, via, true);
                        d.set_edge_edge(m, via, to, true);
                    }
                    RoutePattern::Cloud { via } => {
                        d.set_assoc(m, via, true);
                        d.set_edge_cloud(m, via, true);
                    }
                }
            }
            decisions.push(d);
            // Advance the pattern odometer.
            for m in 0..=m_count {
                if m == m_count {
                    break 'patterns;
                }
                pattern_choice[m] += 1;
                if pattern_choice[m] < patterns_per_ue[m].len() {
                    break;
                }
                pattern_choice[m] = 0;
            }
        }

        // Advance the mask odometer.
        let mut done = true;
        for k in 0..k_count {
            mask_choice[k] += 1;
            if mask_choice[k] < masks_per_es[k].len() {
                done = false;
                break;
            }
            mask_choice[k] = 0;
        }
        if done {
            break;
        }
    }
    decisions
}

fn fully_feasible(inputs: &LspInputs, decision: &PlacementDecision) -> bool {
    check_feasibility(
        inputs.params,
        decision,
        inputs.alloc,
        inputs.channel,
        inputs.tasks,
        inputs.requests,
        inputs.prev_placement,
    )
    .is_empty()
}

/// Lexicographic comparison on the flattened layout vector, for
/// deterministic tie-breaking between equal-objective leaves.
fn lex_smaller(layout: &LspLayout, a: &PlacementDecision, b: &PlacementDecision) -> bool {
    layout.from_decision(a) < layout.from_decision(b)
}

fn solve_exhaustive(inputs: &LspInputs) -> Result<BnbResult, BnbError> {
    let p = inputs.params;
    let layout = LspLayout::new(p.num_ues, p.num_ess, p.num_services);
    if layout.core_count() > EXHAUSTIVE_BIT_CAP {
        return Err(BnbError::SearchSpaceTooLarge { bits: layout.core_count() });
    }
    let mut best: Option<(f64, PlacementDecision)> = None;
    let mut nodes = 0;
    for candidate in structural_candidates(inputs) {
        nodes += 1;
        if !fully_feasible(inputs, &candidate) {
            continue;
        }
        let objective = binary_objective(inputs, &candidate);
        let replace = match &best {
            None => true,
            Some((incumbent, held)) => {
                objective < incumbent - 1e-12
                    || ((objective - incumbent).abs() <= 1e-12
                        && lex_smaller(&layout, &candidate, held))
            }
        };
        if replace {
            best = Some((objective, candidate));
        }
    }
    match best {
        Some((objective, decision)) => Ok(BnbResult { decision, objective, nodes }),
        None => Err(BnbError::NoFeasiblePoint),
    }
}

struct SearchState<'a, 'b> {
    inputs: &'a LspInputs<'b>,
    layout: LspLayout,
    /// Variable indices in branching tier order.
    order: Vec<usize>,
    options: &'a BnbOptions,
    incumbent: Option<(f64, PlacementDecision)>,
    nodes: usize,
}

impl SearchState<'_, '_> {
    fn explore(&mut self, fixed: &mut Vec<Option<bool>>) -> Result<(), BnbError> {
        self.nodes += 1;
        if self.nodes > self.options.node_cap {
            return Err(BnbError::NodeCapExceeded { cap: self.options.node_cap });
        }

        // Bound the node by the relaxation with the fixed bits pinned.
        let pins = LspPins {
            fixed: fixed
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|b| (i, b as i32 as f64)))
                .collect(),
        };
        let relaxed = match relaxed_lower_bound(self.inputs, &pins) {
            Ok((bound, status)) => match status {
                crate::conic::SolveStatus::Optimal => Some(bound),
                crate::conic::SolveStatus::Infeasible => return Ok(()),
                // An unresolved relaxation gives no usable bound.
                _ => None,
            },
            Err(LspError::Infeasible(_)) => return Ok(()),
            Err(e) => return Err(BnbError::Relaxation(e)),
        };
        let fractional = match relaxed {
            Some(bound) => {
                if self.options.prune {
                    if let Some((incumbent, _)) = &self.incumbent {
                        if bound >= incumbent - 1e-12 {
                            return Ok(());
                        }
                    }
                }
                // Reuse the relaxed point for most-fractional branching.
                match relaxed_point(self.inputs, &pins) {
                    Some(x) => x,
                    None => vec![0.5; self.layout.core_count()],
                }
            }
            None => vec![0.5; self.layout.core_count()],
        };

        // Next unfixed variable in tier order, most fractional first
        // within the tier that comes up.
        let next = self
            .order
            .iter()
            .copied()
            .filter(|&i| fixed[i].is_none())
            .min_by(|&a, &b| {
                let tier_a = self.tier(a);
                let tier_b = self.tier(b);
                tier_a.cmp(&tier_b).then(
                    (fractional[a] - 0.5)
                        .abs()
                        .partial_cmp(&(fractional[b] - 0.5).abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b)),
                )
            });
        let Some(var) = next else {
            // Leaf: every bit fixed.
            let x: Vec<f64> = fixed.iter().map(|v| v.unwrap() as i32 as f64).collect();
            let decision = self.layout.to_decision(&x);
            if fully_feasible(self.inputs, &decision) {
                let objective = binary_objective(self.inputs, &decision);
                let replace = match &self.incumbent {
                    None => true,
                    Some((best, held)) => {
                        objective < best - 1e-12
                            || ((objective - best).abs() <= 1e-12
                                && lex_smaller(&self.layout, &decision, held))
                    }
                };
                if replace {
                    self.incumbent = Some((objective, decision));
                }
            }
            return Ok(());
        };

        // Dive toward the relaxation's rounding first.
        let first = fractional[var] >= 0.5;
        for value in [first, !first] {
            fixed[var] = Some(value);
            self.explore(fixed)?;
        }
        fixed[var] = None;
        Ok(())
    }

    /// Branching tier: placements gate everything, then associations,
    /// then cooperation bits.
    fn tier(&self, var: usize) -> usize {
        let l = &self.layout;
        let (m, k, s) = (l.num_ues, l.num_ess, l.num_services);
        let assoc_end = m * k;
        let ee_end = assoc_end + m * k * (k - 1);
        let ec_end = ee_end + m * k;
        let _ = s;
        if var >= ec_end {
            0 // placement block
        } else if var < assoc_end {
            1
        } else if var >= ee_end {
            2 // edge-cloud
        } else {
            3 // edge-edge
        }
    }
}

/// Relaxed solution vector at the node, if the relaxation solves cleanly.
fn relaxed_point(inputs: &LspInputs, pins: &LspPins) -> Option<Vec<f64>> {
    let layout = LspLayout::new(
        inputs.params.num_ues,
        inputs.params.num_ess,
        inputs.params.num_services,
    );
    let anchor = vec![0.5; layout.core_count()];
    let built = crate::longterm::build_lsp_program(inputs, &anchor, 0.0, pins).ok()?;
    let sol = crate::conic::solve(&built.program, crate::conic::DEFAULT_TOL, crate::conic::DEFAULT_MAX_ITER).ok()?;
    if sol.status == crate::conic::SolveStatus::Optimal {
        Some(sol.primal[..layout.core_count()].to_vec())
    } else {
        None
    }
}

/// Globally optimal binary decision under the fixed allocation.
pub fn solve_exact(inputs: &LspInputs, options: &BnbOptions) -> Result<BnbResult, BnbError> {
    match options.mode {
        SearchMode::Exhaustive => solve_exhaustive(inputs),
        SearchMode::BranchAndBound => {
            let p = inputs.params;
            let layout = LspLayout::new(p.num_ues, p.num_ess, p.num_services);
            let n = layout.core_count();
            // Branch order: placement block first, then associations, then
            // cloud bits, then edge-edge bits.
            let mut order: Vec<usize> = Vec::with_capacity(n);
            for s in 0..p.num_services {
                for k in 0..p.num_ess {
                    order.push(layout.placement(s, k));
                }
            }
            for m in 0..p.num_ues {
                for k in 0..p.num_ess {
                    order.push(layout.assoc(m, k));
                }
            }
            for m in 0..p.num_ues {
                for k in 0..p.num_ess {
                    order.push(layout.edge_cloud(m, k));
                }
            }
            for m in 0..p.num_ues {
                for k in 0..p.num_ess {
                    for k2 in 0..p.num_ess {
                        if k2 != k {
                            order.push(layout.edge_edge(m, k, k2));
                        }
                    }
                }
            }
            let mut state = SearchState {
                inputs,
                layout,
                order,
                options,
                incumbent: None,
                nodes: 0,
            };
            let mut fixed: Vec<Option<bool>> = vec![None; n];
            state.explore(&mut fixed)?;
            let nodes = state.nodes;
            match state.incumbent {
                Some((objective, decision)) => Ok(BnbResult { decision, objective, nodes }),
                None => Err(BnbError::NoFeasiblePoint),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AllocationDecision, ModelParams};
    use crate::scenario::{ChannelState, RequestState, Scenario, Stream, TaskSpec};
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

    fn fixture(num_ues: usize, num_ess: usize, num_services: usize, phi: f64, seed: u64) -> Fixture {
        let cfg = ScenarioConfig {
            num_ues,
            num_ess,
            num_services,
            max_services_per_es: num_services.min(6),
            rng_seed: seed,
            ..Default::default()
        };
        let sc = Scenario::build(cfg).unwrap();
        let params = ModelParams::from_scenario(&sc);
        let channel = sc.draw_slot_channel(&mut sc.substream(Stream::Channels));
        let mut req_rng = sc.substream(Stream::Requests);
        let requests = sc.initial_requests(&mut req_rng).service;
        let tasks = sc.draw_slot_tasks(
            &mut sc.substream(Stream::Tasks),
            &RequestState { service: requests.clone(), regenerations: 0 },
        );
        let alloc = AllocationDecision {
            local_portion: vec![phi; num_ues],
            bandwidth_share: vec![1.0 / num_ues as f64; num_ues],
        };
        let prev = vec![false; num_services * num_ess];
        Fixture { params, channel, tasks, requests, alloc, prev }
    }

    #[test]
    fn degenerate_instance_returns_unique_point() {
        let f = fixture(1, 1, 1, 0.5, 3);
        let inputs = f.inputs();
        let out = solve_exact(&inputs, &BnbOptions { mode: SearchMode::Exhaustive, ..Default::default() })
            .unwrap();
        assert!(out.decision.assoc(0, 0));
        assert!(out.decision.placed(0, 0));
    }

    #[test]
    fn exhaustive_and_bnb_agree() {
        for seed in [1, 7, 23] {
            let f = fixture(2, 2, 2, 0.5, seed);
            let inputs = f.inputs();
            let ex = solve_exact(
                &inputs,
                &BnbOptions { mode: SearchMode::Exhaustive, ..Default::default() },
            )
            .unwrap();
            let bb = solve_exact(&inputs, &BnbOptions::default()).unwrap();
            assert!(
                (ex.objective - bb.objective).abs() <= 1e-9 * ex.objective.abs().max(1.0),
                "seed {seed}: exhaustive {} vs bnb {}",
                ex.objective,
                bb.objective
            );
        }
    }

    #[test]
    fn pruning_never_changes_the_answer() {
        let f = fixture(2, 2, 2, 0.4, 11);
        let inputs = f.inputs();
        let pruned = solve_exact(&inputs, &BnbOptions::default()).unwrap();
        let unpruned =
            solve_exact(&inputs, &BnbOptions { prune: false, ..Default::default() }).unwrap();
        assert_eq!(pruned.decision, unpruned.decision);
        assert_eq!(pruned.objective.to_bits(), unpruned.objective.to_bits());
        assert!(pruned.nodes <= unpruned.nodes);
    }

    #[test]
    fn optimality_verified_against_candidates() {
        let f = fixture(2, 2, 2, 0.5, 5);
        let inputs = f.inputs();
        let out = solve_exact(&inputs, &BnbOptions::default()).unwrap();
        for candidate in structural_candidates(&inputs) {
            if fully_feasible(&inputs, &candidate) {
                let obj = binary_objective(&inputs, &candidate);
                assert!(out.objective <= obj + 1e-9, "missed a better point: {obj}");
            }
        }
    }

    #[test]
    fn exhaustive_cap_reports_error() {
        let f = fixture(4, 2, 3, 0.5, 2);
        let inputs = f.inputs();
        match solve_exact(&inputs, &BnbOptions { mode: SearchMode::Exhaustive, ..Default::default() }) {
            Err(BnbError::SearchSpaceTooLarge { bits }) => assert_eq!(bits, 30),
            other => panic!("expected search-space error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_search() {
        let f = fixture(2, 2, 2, 0.5, 9);
        let inputs = f.inputs();
        let a = solve_exact(&inputs, &BnbOptions::default()).unwrap();
        let b = solve_exact(&inputs, &BnbOptions::default()).unwrap();
        assert_eq!(a.decision, b.decision);
        assert_eq!(a.nodes, b.nodes);
    }
}
