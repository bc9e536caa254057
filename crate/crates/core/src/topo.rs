//! Static wireless-network graphs and the gossip schedules they induce.
//!
//! Nodes are labeled `1..=N` so a graph doubles as the founder set of a
//! static-membership schedule. Two interaction patterns specialize the
//! equalizing update to a fixed graph:
//!
//! * pairwise: one node gossips with one neighbor (`interact = {i, j}`)
//! * groupwise: one node pulls in its whole neighborhood
//!   (`interact = {i} ∪ N_i`)
//!
//! Neither pattern joins or leaves, so member weights never change and the
//! per-interaction weight matrices are just the observation matrices.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::net::{ActionStep, AgentId};
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopoError {
    #[error("{links} links infeasible for {nodes} nodes (need {min}..={max})")]
    InfeasibleLinkCount {
        nodes: usize,
        links: usize,
        min: usize,
        max: usize,
    },
    #[error("node id {id} outside 1..={nodes}")]
    IdOutOfRange { id: usize, nodes: usize },
    #[error("self loop at node {id}")]
    SelfLoop { id: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("expected {expected} positions, found {found}")]
    PositionsLength { expected: usize, found: usize },
    #[error("{{{i},{j}}} is not an edge")]
    NotAnEdge { i: usize, j: usize },
    #[error("no connected placement found in {attempts} attempts")]
    GenerationFailed { attempts: usize },
}

#[derive(Serialize, Deserialize)]
struct GraphWire {
    #[serde(rename = "N")]
    n: usize,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<(f64, f64)>>,
}

/// Connected undirected graph on nodes `1..=N`, optionally embedded in the
/// unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphWire", into = "GraphWire")]
pub struct UGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    positions: Option<Vec<(f64, f64)>>,
    adjacency: Vec<Vec<usize>>,
}

impl TryFrom<GraphWire> for UGraph {
    type Error = TopoError;
    fn try_from(w: GraphWire) -> Result<Self, Self::Error> {
        UGraph::new(w.n, w.edges, w.positions)
    }
}

impl From<UGraph> for GraphWire {
    fn from(g: UGraph) -> Self {
        GraphWire {
            n: g.n,
            edges: g.edges.into_iter().collect(),
            positions: g.positions,
        }
    }
}

impl UGraph {
    /// Builds and checks: ids in range, no self-loops, connected.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        positions: Option<Vec<(f64, f64)>>,
    ) -> Result<Self, TopoError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for id in [a, b] {
                if id == 0 || id > n {
                    return Err(TopoError::IdOutOfRange { id, nodes: n });
                }
            }
            if a == b {
                return Err(TopoError::SelfLoop { id: a });
            }
            set.insert((a.min(b), a.max(b)));
        }
        if let Some(p) = &positions {
            if p.len() != n {
                return Err(TopoError::PositionsLength {
                    expected: n,
                    found: p.len(),
                });
            }
        }
        let mut adjacency = vec![Vec::new(); n + 1];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let g = UGraph {
            n,
            edges: set,
            positions,
            adjacency,
        };
        if !g.is_connected() {
            return Err(TopoError::Disconnected);
        }
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (1..=self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn positions(&self) -> Option<&[(f64, f64)]> {
        self.positions.as_deref()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut uf = UnionFind::new(self.n);
        for &(a, b) in &self.edges {
            uf.union(a - 1, b - 1);
        }
        uf.components() == 1
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Maximum attempts at a connected placement before giving up.
const PLACEMENT_ATTEMPTS: usize = 1000;

/// Random geometric graph: `n` uniform points on the unit square, linked by
/// the `l` shortest pairwise distances (one-hop radius grown until exactly
/// `l` links exist). Disconnected placements are discarded and redrawn.
/// Deterministic for a given generator state.
pub fn random_geometric(n: usize, l: usize, rng: &mut ChaCha8Rng) -> Result<UGraph, TopoError> {
    let max = n * (n - 1) / 2;
    if n < 2 || l + 1 < n || l > max {
        return Err(TopoError::InfeasibleLinkCount {
            nodes: n,
            links: l,
            min: n.saturating_sub(1),
            max,
        });
    }
    for _ in 0..PLACEMENT_ATTEMPTS {
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
            .collect();
        let mut pairs = Vec::with_capacity(max);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = points[i].0 - points[j].0;
                let dy = points[i].1 - points[j].1;
                pairs.push((dx * dx + dy * dy, i + 1, j + 1));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let edges = pairs[..l].iter().map(|&(_, i, j)| (i, j));
        match UGraph::new(n, edges, Some(points)) {
            Ok(g) => return Ok(g),
            Err(TopoError::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(TopoError::GenerationFailed {
        attempts: PLACEMENT_ATTEMPTS,
    })
}

/// One pairwise gossip interaction along an edge.
pub fn pe_step(graph: &UGraph, i: usize, j: usize) -> Result<ActionStep, TopoError> {
    if !graph.has_edge(i, j) {
        return Err(TopoError::NotAnEdge { i, j });
    }
    Ok(ActionStep::new([], [i, j], []))
}

/// One groupwise interaction: initiator plus its whole neighborhood.
pub fn ge_step(graph: &UGraph, i: usize) -> ActionStep {
    assert!(i >= 1 && i <= graph.num_nodes(), "node id {i} out of range");
    let mut interact: Vec<AgentId> = graph.neighbors(i).to_vec();
    interact.push(i);
    ActionStep::new([], interact, [])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GossipMode {
    Pairwise,
    Groupwise,
}

/// A drawn interaction together with who initiated it (the initiator
/// determines the transmission cost of a groupwise iteration).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledStep {
    pub initiator: usize,
    pub step: ActionStep,
}

/// Uniformly random gossip schedule: the initiator is equiprobable over
/// nodes, and a pairwise partner is equiprobable over the initiator's
/// neighbors. Deterministic for a given seed.
pub struct UniformScheduler {
    graph: UGraph,
    mode: GossipMode,
    rng: ChaCha8Rng,
}

impl UniformScheduler {
    pub fn new(graph: UGraph, mode: GossipMode, seed: u64) -> Self {
        UniformScheduler {
            graph,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_scheduled(&mut self) -> ScheduledStep {
        let initiator = self.rng.gen_range(1..=self.graph.num_nodes());
        let step = match self.mode {
            GossipMode::Pairwise => {
                let neighbors = self.graph.neighbors(initiator);
                let partner = neighbors[self.rng.gen_range(0..neighbors.len())];
                ActionStep::new([], [initiator, partner], [])
            }
            GossipMode::Groupwise => ge_step(&self.graph, initiator),
        };
        ScheduledStep { initiator, step }
    }
}

impl Iterator for UniformScheduler {
    type Item = ActionStep;
    fn next(&mut self) -> Option<ActionStep> {
        Some(self.next_scheduled().step)
    }
}
