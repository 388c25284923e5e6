//! Monetary cost bookkeeping: install/uninstall/operate prices per service
//! slot and the per-request cloud transfer price.

use super::decision::PlacementDecision;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prices {
    pub install: f64,
    pub uninstall: f64,
    pub operate: f64,
    pub request: f64,
}

/// Per-frame cost decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    /// Status change lambda in {-1, 0, 1} per (s, k).
    pub status_change: Vec<i8>,
    /// Install/uninstall cost per (s, k).
    pub change_cost: Vec<f64>,
    /// Operating cost per ES.
    pub operation_cost: Vec<f64>,
    /// Total cloud request cost.
    pub request_cost: f64,
    /// Frame total.
    pub total: f64,
    /// Running average across frames; equals `total` for a single frame
    /// and is maintained by the caller over a run.
    pub running_average: f64,
}

/// Cost of one service-slot status change: lambda = g_now - g_prev maps
/// -1 to the uninstall price, 0 to zero and 1 to the install price. The
/// map is the integer evaluation of the quadratic form
/// 0.5 lambda^2 (tau_u + tau_i) - 0.5 lambda (tau_u - tau_i), kept exact
/// here; the solvers use the quadratic form on relaxed variables.
pub fn status_change_cost(g_now: bool, g_prev: bool, install: f64, uninstall: f64) -> f64 {
    match g_now as i8 - g_prev as i8 {
        1 => install,
        -1 => uninstall,
        _ => 0.0,
    }
}

/// Frame cost of a placement decision relative to the previous frame's
/// placement bits (same (s, k) layout).
pub fn total_cost(
    decision: &PlacementDecision,
    prev_placement: &[bool],
    prices: &Prices,
) -> CostLedger {
    let s_count = decision.num_services;
    let k_count = decision.num_ess;
    assert_eq!(prev_placement.len(), s_count * k_count);

    let mut status_change = Vec::with_capacity(s_count * k_count);
    let mut change_cost = Vec::with_capacity(s_count * k_count);
    let mut operation_cost = vec![0.0; k_count];
    let mut total = 0.0;
    for s in 0..s_count {
        for k in 0..k_count {
            let now = decision.placed(s, k);
            let prev = prev_placement[s * k_count + k];
            status_change.push(now as i8 - prev as i8);
            let x = status_change_cost(now, prev, prices.install, prices.uninstall);
            change_cost.push(x);
            total += x;
            if now {
                operation_cost[k] += prices.operate;
                total += prices.operate;
            }
        }
    }
    let mut request_cost = 0.0;
    for m in 0..decision.num_ues {
        for k in 0..k_count {
            if decision.edge_cloud(m, k) {
                request_cost += prices.request;
            }
        }
    }
    total += request_cost;
    CostLedger {
        status_change,
        change_cost,
        operation_cost,
        request_cost,
        total,
        running_average: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRICES: Prices = Prices { install: 0.1, uninstall: 0.05, operate: 0.1, request: 0.01 };

    #[test]
    fn status_change_truth_table() {
        // lambda in {-1, 0, 1} maps exactly to {tau_u, 0, tau_i}.
        assert_eq!(status_change_cost(false, true, 0.1, 0.05), 0.05);
        assert_eq!(status_change_cost(true, true, 0.1, 0.05), 0.0);
        assert_eq!(status_change_cost(false, false, 0.1, 0.05), 0.0);
        assert_eq!(status_change_cost(true, false, 0.1, 0.05), 0.1);
        // The quadratic form agrees with the map at every integer lambda.
        for (now, prev) in [(false, true), (true, true), (false, false), (true, false)] {
            let lambda = (now as i8 - prev as i8) as f64;
            let quad = 0.5 * lambda * lambda * (0.05 + 0.1) - 0.5 * lambda * (0.05 - 0.1);
            assert!((status_change_cost(now, prev, 0.1, 0.05) - quad).abs() < 1e-15);
        }
    }

    #[test]
    fn steady_state_cost_is_operating_only() {
        let mut d = PlacementDecision::empty(2, 2, 3);
        d.set_placed(0, 0, true);
        d.set_placed(2, 1, true);
        let prev: Vec<bool> = d.placement_bits().to_vec();
        let ledger = total_cost(&d, &prev, &PRICES);
        assert!(ledger.status_change.iter().all(|&l| l == 0));
        assert!((ledger.total - 2.0 * 0.1).abs() < 1e-15);
        assert_eq!(ledger.request_cost, 0.0);
    }

    #[test]
    fn installs_and_requests_add_up() {
        // Two installs plus one cloud request on top of the operating cost.
        let mut d = PlacementDecision::empty(2, 2, 3);
        d.set_placed(0, 0, true);
        d.set_placed(1, 1, true);
        d.set_assoc(0, 0, true);
        d.set_edge_cloud(0, 0, true);
        let prev = vec![false; 6];
        let ledger = total_cost(&d, &prev, &PRICES);
        let expect = 2.0 * 0.1 + 2.0 * 0.1 + 0.01;
        assert!((ledger.total - expect).abs() < 1e-15);
        assert!((ledger.request_cost - 0.01).abs() < 1e-15);
    }

    #[test]
    fn uninstall_charged_at_uninstall_price() {
        let d = PlacementDecision::empty(1, 1, 2);
        let prev = vec![true, false];
        let ledger = total_cost(&d, &prev, &PRICES);
        assert_eq!(ledger.status_change[0], -1);
        assert!((ledger.total - 0.05).abs() < 1e-15);
    }

    #[test]
    fn average_over_identical_frames_equals_single_frame() {
        let mut d = PlacementDecision::empty(1, 2, 2);
        d.set_placed(1, 0, true);
        let prev: Vec<bool> = d.placement_bits().to_vec();
        let per_frame: Vec<f64> =
            (0..5).map(|_| total_cost(&d, &prev, &PRICES).total).collect();
        let avg = per_frame.iter().sum::<f64>() / 5.0;
        assert!((avg - per_frame[0]).abs() < 1e-15);
    }
}
