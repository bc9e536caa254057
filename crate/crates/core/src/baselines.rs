//! Synchronous averaging baselines and the transmission cost model.
//!
//! The two baselines run element-wise average consensus on the observation
//! pairs `(P_i, q_i)` under a symmetric doubly stochastic weight matrix, then
//! each node solves its own averaged system. Both weight constructions
//! respect the graph sparsity:
//!
//! * maximum-degree weights: `1 / (d_max + 1)` on every edge, the diagonal
//!   absorbs the remainder;
//! * Metropolis weights: `1 / (1 + max(d_i, d_j))` on edge `{i, j}`, diagonal
//!   absorbs the remainder.
//!
//! Double stochasticity preserves `Σ P̄_i` and `Σ q̄_i` each round, so the
//! common limit solve equals the pooled solution.
//!
//! Transmission accounting charges symmetric matrices as `n(n+1)/2` reals
//! and follows fixed closed forms per algorithm; the ledger keeps exact
//! integer totals with init overhead recorded separately.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se::{Observation, Observations};
use crate::spd::{distance, SpdError, SpdMatrix};
use crate::topo::UGraph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error("no observation for node {id}")]
    MissingObservation { id: usize },
}

/// Symmetric row-stochastic weights over nodes `1..=N`, dense storage.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i - 1) * self.n + (j - 1)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.w[(i - 1) * self.n + (j - 1)] = v;
    }
}

/// Maximum-degree weights: every edge carries `1 / (d_max + 1)`.
pub fn mdw_weights(graph: &UGraph) -> WeightMatrix {
    let n = graph.num_nodes();
    let alpha = 1.0 / (graph.max_degree() + 1) as f64;
    let mut w = WeightMatrix {
        n,
        w: vec![0.0; n * n],
    };
    for (i, j) in graph.edges() {
        w.set(i, j, alpha);
        w.set(j, i, alpha);
    }
    for i in 1..=n {
        w.set(i, i, 1.0 - graph.degree(i) as f64 * alpha);
    }
    w
}

/// Metropolis weights: edge `{i, j}` carries `1 / (1 + max(d_i, d_j))`.
pub fn mw_weights(graph: &UGraph) -> WeightMatrix {
    let n = graph.num_nodes();
    let mut w = WeightMatrix {
        n,
        w: vec![0.0; n * n],
    };
    for (i, j) in graph.edges() {
        let v = 1.0 / (1 + graph.degree(i).max(graph.degree(j))) as f64;
        w.set(i, j, v);
        w.set(j, i, v);
    }
    for i in 1..=n {
        let off: f64 = graph.neighbors(i).iter().map(|&j| w.get(i, j)).sum();
        w.set(i, i, 1.0 - off);
    }
    w
}

/// Per-node averaged observations under a fixed weight matrix.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    graph: UGraph,
    weights: WeightMatrix,
    p_bar: Vec<SpdMatrix>,
    q_bar: Vec<Vec<f64>>,
}

impl ConsensusState {
    pub fn init(
        graph: UGraph,
        weights: WeightMatrix,
        observations: &Observations,
    ) -> Result<Self, BaselineError> {
        let n = graph.num_nodes();
        let mut p_bar = Vec::with_capacity(n);
        let mut q_bar = Vec::with_capacity(n);
        for id in 1..=n {
            let Observation { p, q } = observations
                .get(&id)
                .ok_or(BaselineError::MissingObservation { id })?;
            p_bar.push(p.clone());
            q_bar.push(q.clone());
        }
        Ok(ConsensusState {
            graph,
            weights,
            p_bar,
            q_bar,
        })
    }

    /// One synchronous round: every node replaces its pair with the weighted
    /// average over itself and its neighbors.
    pub fn step(&mut self) -> Result<(), BaselineError> {
        let n = self.graph.num_nodes();
        let mut new_p = Vec::with_capacity(n);
        let mut new_q = Vec::with_capacity(n);
        for i in 1..=n {
            let mut p = self.p_bar[i - 1].scaled(self.weights.get(i, i));
            let mut q: Vec<f64> = self.q_bar[i - 1]
                .iter()
                .map(|v| v * self.weights.get(i, i))
                .collect();
            for &j in self.graph.neighbors(i) {
                let wij = self.weights.get(i, j);
                p = p.add(&self.p_bar[j - 1].scaled(wij))?;
                for (acc, v) in q.iter_mut().zip(&self.q_bar[j - 1]) {
                    *acc += wij * v;
                }
            }
            new_p.push(p);
            new_q.push(q);
        }
        self.p_bar = new_p;
        self.q_bar = new_q;
        Ok(())
    }

    /// Node `i`'s current estimate `P̄_i⁻¹ q̄_i`. A convex combination of
    /// positive definite matrices stays positive definite, so a factorization
    /// failure here means the state was corrupted.
    pub fn estimate(&self, i: usize) -> Result<Vec<f64>, BaselineError> {
        Ok(self.p_bar[i - 1].solve(&self.q_bar[i - 1])?)
    }

    pub fn max_error(&self, truth: &[f64]) -> Result<f64, BaselineError> {
        let mut worst = 0.0f64;
        for i in 1..=self.graph.num_nodes() {
            worst = worst.max(distance(&self.estimate(i)?, truth));
        }
        Ok(worst)
    }

    pub fn p_bar(&self, i: usize) -> &SpdMatrix {
        &self.p_bar[i - 1]
    }

    pub fn q_bar(&self, i: usize) -> &[f64] {
        &self.q_bar[i - 1]
    }

    pub fn p_sum(&self) -> SpdMatrix {
        let mut acc = self.p_bar[0].clone();
        for p in &self.p_bar[1..] {
            acc = acc.add(p).expect("dimensions consistent");
        }
        acc
    }

    pub fn q_sum(&self) -> Vec<f64> {
        let mut acc = self.q_bar[0].clone();
        for q in &self.q_bar[1..] {
            for (a, v) in acc.iter_mut().zip(q) {
                *a += v;
            }
        }
        acc
    }
}

/// The five compared algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pe,
    Ge,
    Mdw,
    Mw,
    Flooding,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Pe,
        Algorithm::Ge,
        Algorithm::Mdw,
        Algorithm::Mw,
        Algorithm::Flooding,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Pe => "pe",
            Algorithm::Ge => "ge",
            Algorithm::Mdw => "mdw",
            Algorithm::Mw => "mw",
            Algorithm::Flooding => "flooding",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A costed communication event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxEvent {
    /// Neighborhood broadcast of every node's symmetric observation matrix.
    PairwiseInit {
        dim: usize,
        nodes: usize,
    },
    GroupwiseInit {
        dim: usize,
        nodes: usize,
    },
    /// One gossip exchange: the estimate travels there and back.
    PairwiseIteration {
        dim: usize,
    },
    /// One groupwise round initiated by a node with this many neighbors.
    GroupwiseIteration {
        dim: usize,
        neighbors: usize,
    },
    /// One synchronous averaging round across all nodes.
    ConsensusIteration {
        dim: usize,
        nodes: usize,
    },
    /// Full dissemination of all raw observations to everyone.
    FloodingTotal {
        dim: usize,
        nodes: usize,
    },
}

/// Reals needed for one symmetric `n x n` matrix.
fn sym_reals(dim: usize) -> u64 {
    (dim * (dim + 1) / 2) as u64
}

/// Exact real-number transmission count of one event.
pub fn tx_cost(event: &TxEvent) -> u64 {
    match *event {
        TxEvent::PairwiseInit { dim, nodes } | TxEvent::GroupwiseInit { dim, nodes } => {
            sym_reals(dim) * nodes as u64
        }
        TxEvent::PairwiseIteration { dim } => 2 * dim as u64,
        TxEvent::GroupwiseIteration { dim, neighbors } => (dim * (neighbors + 1)) as u64,
        TxEvent::ConsensusIteration { dim, nodes } => (sym_reals(dim) + dim as u64) * nodes as u64,
        TxEvent::FloodingTotal { dim, nodes } => {
            (sym_reals(dim) + dim as u64) * (nodes as u64).pow(2)
        }
    }
}

/// Exact integer transmission totals per algorithm, init kept separately.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TxLedger {
    init: BTreeMap<Algorithm, u64>,
    running: BTreeMap<Algorithm, u64>,
}

impl TxLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge_init(&mut self, algorithm: Algorithm, event: &TxEvent) {
        *self.init.entry(algorithm).or_insert(0) += tx_cost(event);
    }

    pub fn charge(&mut self, algorithm: Algorithm, event: &TxEvent) {
        *self.running.entry(algorithm).or_insert(0) += tx_cost(event);
    }

    pub fn init_total(&self, algorithm: Algorithm) -> u64 {
        self.init.get(&algorithm).copied().unwrap_or(0)
    }

    pub fn running_total(&self, algorithm: Algorithm) -> u64 {
        self.running.get(&algorithm).copied().unwrap_or(0)
    }

    pub fn total(&self, algorithm: Algorithm) -> u64 {
        self.init_total(algorithm) + self.running_total(algorithm)
    }
}
