//! Long-term binary decisions and short-term continuous allocations.

/// All binary variables of one long-term frame: user association, service
/// placement, edge-edge cooperation and edge-cloud cooperation.
///
/// Layout is dense over (m, k), (m, k, k') and (s, k); the k' = k diagonal
/// of the edge-edge block exists in storage but is never set (a task kept
/// at the receiving ES is expressed by leaving all cooperation bits clear).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementDecision {
    pub num_ues: usize,
    pub num_ess: usize,
    pub num_services: usize,
    assoc: Vec<bool>,
    edge_edge: Vec<bool>,
    edge_cloud: Vec<bool>,
    placement: Vec<bool>,
}

impl PlacementDecision {
    pub fn empty(num_ues: usize, num_ess: usize, num_services: usize) -> Self {
        PlacementDecision {
            num_ues,
            num_ess,
            num_services,
            assoc: vec![false; num_ues * num_ess],
            edge_edge: vec![false; num_ues * num_ess * num_ess],
            edge_cloud: vec![false; num_ues * num_ess],
            placement: vec![false; num_services * num_ess],
        }
    }

    #[inline]
    fn mk(&self, m: usize, k: usize) -> usize {
        m * self.num_ess + k
    }

    #[inline]
    fn mkk(&self, m: usize, k: usize, k2: usize) -> usize {
        (m * self.num_ess + k) * self.num_ess + k2
    }

    #[inline]
    fn sk(&self, s: usize, k: usize) -> usize {
        s * self.num_ess + k
    }

    pub fn assoc(&self, m: usize, k: usize) -> bool {
        self.assoc[self.mk(m, k)]
    }

    pub fn set_assoc(&mut self, m: usize, k: usize, v: bool) {
        let i = self.mk(m, k);
        self.assoc[i] = v;
    }

    /// Edge-edge cooperation bit: ES k forwards UE m's task to ES k2.
    pub fn edge_edge(&self, m: usize, k: usize, k2: usize) -> bool {
        self.edge_edge[self.mkk(m, k, k2)]
    }

    pub fn set_edge_edge(&mut self, m: usize, k: usize, k2: usize, v: bool) {
        assert_ne!(k, k2, "edge-edge cooperation requires distinct servers");
        let i = self.mkk(m, k, k2);
        self.edge_edge[i] = v;
    }

    pub fn edge_cloud(&self, m: usize, k: usize) -> bool {
        self.edge_cloud[self.mk(m, k)]
    }

    pub fn set_edge_cloud(&mut self, m: usize, k: usize, v: bool) {
        let i = self.mk(m, k);
        self.edge_cloud[i] = v;
    }

    pub fn placed(&self, s: usize, k: usize) -> bool {
        self.placement[self.sk(s, k)]
    }

    pub fn set_placed(&mut self, s: usize, k: usize, v: bool) {
        let i = self.sk(s, k);
        self.placement[i] = v;
    }

    /// Placement bits in (s, k) order, for cost bookkeeping across frames.
    pub fn placement_bits(&self) -> &[bool] {
        &self.placement
    }

    /// The ES that UE m is associated with, if any.
    pub fn associated_es(&self, m: usize) -> Option<usize> {
        (0..self.num_ess).find(|&k| self.assoc(m, k))
    }

    /// Number of services installed on ES k.
    pub fn services_on(&self, k: usize) -> usize {
        (0..self.num_services).filter(|&s| self.placed(s, k)).count()
    }

    /// Execution route of UE m implied by the cooperation bits. Meaningful
    /// on decisions satisfying the structural constraints (at most one
    /// association, at most one cooperation target per receiving ES).
    pub fn route(&self, m: usize) -> Route {
        match self.associated_es(m) {
            None => Route::LocalOnly,
            Some(k) => {
                if self.edge_cloud(m, k) {
                    Route::Cloud { via: k }
                } else if let Some(k2) =
                    (0..self.num_ess).find(|&k2| k2 != k && self.edge_edge(m, k, k2))
                {
                    Route::Forwarded { via: k, to: k2 }
                } else {
                    Route::Edge { at: k }
                }
            }
        }
    }
}

/// Where UE m's offloaded portion executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Not associated; the whole task runs on the UE.
    LocalOnly,
    /// Executed at the receiving ES.
    Edge { at: usize },
    /// Forwarded from the receiving ES to a neighbor.
    Forwarded { via: usize, to: usize },
    /// Forwarded from the receiving ES to the cloud.
    Cloud { via: usize },
}

/// Continuous decisions of one short-term slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationDecision {
    /// Fraction of each UE's task executed locally; 1 - x is offloaded.
    pub local_portion: Vec<f64>,
    /// Fraction of the system bandwidth allocated to each UE.
    pub bandwidth_share: Vec<f64>,
}

impl AllocationDecision {
    /// Equal-bandwidth allocation with everything executed locally.
    pub fn all_local(num_ues: usize) -> Self {
        AllocationDecision {
            local_portion: vec![1.0; num_ues],
            bandwidth_share: vec![1.0 / num_ues as f64; num_ues],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_resolution() {
        let mut d = PlacementDecision::empty(2, 3, 2);
        assert_eq!(d.route(0), Route::LocalOnly);
        d.set_assoc(0, 1, true);
        assert_eq!(d.route(0), Route::Edge { at: 1 });
        d.set_edge_edge(0, 1, 2, true);
        assert_eq!(d.route(0), Route::Forwarded { via: 1, to: 2 });
        d.set_edge_edge(0, 1, 2, false);
        d.set_edge_cloud(0, 1, true);
        assert_eq!(d.route(0), Route::Cloud { via: 1 });
    }

    #[test]
    #[should_panic]
    fn self_forwarding_rejected() {
        let mut d = PlacementDecision::empty(1, 2, 1);
        d.set_edge_edge(0, 1, 1, true);
    }

    #[test]
    fn placement_count() {
        let mut d = PlacementDecision::empty(1, 2, 4);
        d.set_placed(0, 1, true);
        d.set_placed(3, 1, true);
        assert_eq!(d.services_on(0), 0);
        assert_eq!(d.services_on(1), 2);
    }
}
