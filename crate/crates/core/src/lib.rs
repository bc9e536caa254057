//! Distributed asynchronous solving of pooled symmetric positive definite
//! linear systems over agent networks with churn.
//!
//! A fixed population of agents forms a network whose founders each observe
//! one `(P_i, q_i)` pair, `P_i` symmetric positive definite. The common goal
//! is the solution of the pooled system `(Σ P_i) z = Σ q_i`, reached without
//! any coordinator while agents keep joining, interacting in arbitrary
//! subsets, and leaving — losing their memory when they do.
//!
//! The crate provides:
//!
//! * [`spd`] — the small dense SPD kernel (Cholesky solves, eigenvalues);
//! * [`net`] — action sequences, membership dynamics, and their validation;
//! * [`connectivity`] — the mixing-time analyzer (`h(k)`, `h*`) and the
//!   static-membership equivalence with recurring-edge graph connectivity;
//! * [`se`] — the subset-equalizing state machine with conservation checks,
//!   the monitoring function, and the contraction/rate envelopes;
//! * [`topo`] — random geometric graphs and the pairwise/groupwise gossip
//!   schedules over them;
//! * [`baselines`] — max-degree and Metropolis weighted averaging plus the
//!   exact transmission cost model;
//! * [`harness`] — experiment configs, the volatile and sweep pipelines, and
//!   CSV emission.

pub mod baselines;
pub mod connectivity;
pub mod harness;
pub mod net;
pub mod se;
pub mod spd;
pub mod topo;

mod unionfind;

pub use baselines::{mdw_weights, mw_weights, tx_cost, Algorithm, TxEvent, TxLedger};
pub use connectivity::{
    einfty_equivalence, h_of, h_star, ConnectivityReport, HStar, HValue, PartitionState,
};
pub use net::{ActionSequence, ActionStep, AgentId, AgentSet, ChurnModel};
pub use se::{
    contraction_factor, ground_truth, rate_envelope, upd_evidence, NetworkState, Observation,
    Observations,
};
pub use spd::SpdMatrix;
pub use topo::{random_geometric, GossipMode, UGraph, UniformScheduler};
