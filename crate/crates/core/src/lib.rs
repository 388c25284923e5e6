//! Two-timescale joint service placement and resource allocation for
//! hierarchical edge-cloud IoT networks.
//!
//! The library simulates a three-tier user/edge/cloud network in which
//! long-term binary decisions (service placement, user association,
//! edge-edge and edge-cloud cooperation) are solved by a penalty-based
//! successive-convex-approximation loop, and short-term continuous
//! decisions (offloading split, bandwidth shares) are solved by a second
//! SCA loop. An exact branch-and-bound solver and seven benchmark schemes
//! provide ground truth and comparison points.
//!
//! Module map:
//! - [`scenario`]: network topology, channels, tasks, request processes.
//! - [`model`]: pure evaluators for delay, energy, cost, objective and the
//!   full feasibility check, in both coupled and simplified forms.
//! - [`conic`]: the convex subproblem representation and the embedded
//!   interior-point solver both SCA loops use.
//! - [`longterm`]: penalty-SCA for the binary placement subproblem.
//! - [`shortterm`]: SCA for the offloading/bandwidth subproblem.
//! - [`bnb`]: exact branch-and-bound oracle over the binary decisions.
//! - [`benchmarks`]: FUAS/RUAS/NEEC/W-o-Cloud/EB/fixed-offload schemes.
//! - [`orchestrator`]: the two-timescale main loop with re-optimization
//!   triggers.

pub mod benchmarks;
pub mod bnb;
pub mod conic;
pub mod longterm;
pub mod model;
pub mod orchestrator;
pub mod scenario;
pub mod shortterm;
pub mod units;

pub use scenario::ScenarioConfig;
