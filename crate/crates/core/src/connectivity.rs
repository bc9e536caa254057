//! Connectivity analysis for action-driven networks.
//!
//! The analyzer tracks, for a chosen origin time `k`, how hypothetical
//! messages created by the members at `k` would spread under later joins,
//! interactions, and leaves. The bookkeeping object is a partition of the
//! current members into blocks of agents whose messages have already mixed:
//! every interaction merges the blocks it touches (joiners fold into the
//! merged block), and a leaver is evicted from its block.
//!
//! The network is *connected at `k`* when some later time sees the partition
//! collapse to a single block covering the whole membership; `h(k)` is the
//! number of steps that takes, and `h*` is its supremum over origins. Finite
//! `h(k)` everywhere is connectivity; finite `h*` is uniform connectivity.
//!
//! Deciding `h(k) = ∞` is only possible here for periodic schedules, by
//! detecting a repeated (schedule phase, partition) state before coverage;
//! aperiodic searches that exhaust their horizon report `Unresolved`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{
    check_step, ActionSequence, ActionStep, AgentId, AgentSet, NetError, StepViolation,
};
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConnectivityError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("sequence must be periodic for this analysis")]
    NotPeriodic,
    #[error("sequence changes membership at step {k}; static membership required")]
    MembershipChanges { k: usize },
}

/// Partition of the members at time `at` into message-mixing blocks, for an
/// analysis that started at time `origin`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionState {
    origin: usize,
    at: usize,
    num_agents: usize,
    /// Disjoint nonempty blocks; their union is the current membership.
    /// Kept sorted by smallest element so states compare canonically.
    blocks: Vec<AgentSet>,
}

impl PartitionState {
    /// Singleton block for every member at time `k`.
    pub fn init(seq: &ActionSequence, k: usize) -> Result<Self, NetError> {
        let members = seq.membership_at(k)?;
        let blocks = members.iter().map(|&id| AgentSet::from([id])).collect();
        Ok(PartitionState {
            origin: k,
            at: k,
            num_agents: seq.num_agents,
            blocks,
        })
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn at(&self) -> usize {
        self.at
    }

    pub fn blocks(&self) -> &[AgentSet] {
        &self.blocks
    }

    pub fn members(&self) -> AgentSet {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn block_of(&self, id: AgentId) -> Option<&AgentSet> {
        self.blocks.iter().find(|b| b.contains(&id))
    }

    /// True when a single block covers the whole membership.
    pub fn is_covering(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Applies the actions at time `at + 1`: the blocks of all interacting
    /// and leaving agents merge together with the joiners, then the leavers
    /// are evicted. Untouched blocks carry over unchanged.
    pub fn apply_step(&mut self, step: &ActionStep) -> Result<(), StepViolation> {
        let members = self.members();
        check_step(step, &members, self.num_agents).map_err(|kind| StepViolation {
            k: self.at + 1,
            kind,
        })?;

        let sources = step.sources();
        let mut merged: AgentSet = step.join.clone();
        let mut untouched = Vec::with_capacity(self.blocks.len());
        for block in self.blocks.drain(..) {
            if block.iter().any(|id| sources.contains(id)) {
                merged.extend(block);
            } else {
                untouched.push(block);
            }
        }
        for id in &step.leave {
            merged.remove(id);
        }
        debug_assert!(
            !merged.is_empty(),
            "interact set is nonempty and never fully leaves"
        );
        untouched.push(merged);
        untouched.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
        self.blocks = untouched;
        self.at += 1;
        Ok(())
    }

    /// Canonical value for cycle detection: blocks are already disjoint and
    /// sorted by smallest element.
    fn canonical(&self) -> Vec<Vec<AgentId>> {
        self.blocks
            .iter()
            .map(|b| b.iter().copied().collect())
            .collect()
    }
}

/// Outcome of the `h(k)` search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum HValue {
    /// Coverage reached after this many steps.
    Finite(usize),
    /// A (phase, partition) state repeated before coverage; for a periodic
    /// schedule that proves coverage never happens.
    CertifiedInfinite,
    /// Search exhausted the stated horizon without deciding.
    Unresolved(usize),
}

impl HValue {
    pub fn finite(&self) -> Option<usize> {
        match self {
            HValue::Finite(v) => Some(*v),
            _ => None,
        }
    }
}

/// Worst-case connectedness over a window of origins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum HStar {
    Finite(usize),
    /// Either some `h(k)` is certified infinite, or the finite values keep
    /// setting new records deep into the window.
    UnboundedEvidence,
    Unresolved,
}

/// `h(k)` for every origin in a window, plus the supremum verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub h_values: std::collections::BTreeMap<usize, HValue>,
    pub h_star: HStar,
}

/// Default search horizon when the caller has no better bound.
pub fn default_horizon(seq: &ActionSequence) -> usize {
    10 * seq.num_agents * seq.prefix_len().max(1)
}

/// Smallest number of steps from origin `k` until one block covers the
/// membership, searching at most `horizon` steps ahead.
pub fn h_of(seq: &ActionSequence, k: usize, horizon: usize) -> Result<HValue, NetError> {
    let mut part = PartitionState::init(seq, k)?;
    let prefix = seq.prefix_len();
    let tail_start = seq.period.map(|p| prefix - p);
    let mut seen: HashSet<(usize, Vec<Vec<AgentId>>)> = HashSet::new();

    let mut ell = k;
    loop {
        if part.is_covering() {
            return Ok(HValue::Finite(ell - k));
        }
        if ell - k >= horizon {
            return Ok(HValue::Unresolved(horizon));
        }
        let next_index = match seq.step_index(ell + 1) {
            Ok(i) => i,
            // aperiodic sequence ran out of steps before coverage
            Err(NetError::BeyondHorizon { .. }) => return Ok(HValue::Unresolved(ell - k)),
            Err(e) => return Err(e),
        };
        if let Some(tail) = tail_start {
            if next_index >= tail && !seen.insert((next_index, part.canonical())) {
                return Ok(HValue::CertifiedInfinite);
            }
        }
        part.apply_step(seq.step_at(ell + 1)?)?;
        ell += 1;
    }
}

/// Evaluates `h(k)` for `k = 0..=window` and reports the supremum.
///
/// The verdict is `UnboundedEvidence` when any origin is certified infinite
/// or when the finite values keep setting new records past the middle of the
/// window (the signature of a schedule whose connectivity degrades), and
/// `Unresolved` when some origin exhausted its horizon undecided.
pub fn h_star(
    seq: &ActionSequence,
    window: usize,
    horizon: usize,
) -> Result<ConnectivityReport, NetError> {
    let mut h_values = std::collections::BTreeMap::new();
    let mut any_infinite = false;
    let mut any_unresolved = false;
    let mut best = 0usize;
    let mut records = Vec::new();
    for k in 0..=window {
        let h = h_of(seq, k, horizon)?;
        match h {
            HValue::Finite(v) => {
                if records.is_empty() || v > best {
                    best = v.max(best);
                    records.push(k);
                }
            }
            HValue::CertifiedInfinite => any_infinite = true,
            HValue::Unresolved(_) => any_unresolved = true,
        }
        h_values.insert(k, h);
    }
    let growing = records.len() >= 3 && *records.last().unwrap() * 2 > window;
    let h_star = if any_infinite || growing {
        HStar::UnboundedEvidence
    } else if any_unresolved {
        HStar::Unresolved
    } else {
        HStar::Finite(best)
    };
    Ok(ConnectivityReport { h_values, h_star })
}

/// For a periodic schedule with static membership, decides connectivity two
/// ways: by the `h(k)` criterion and by connectivity of the graph whose
/// edges are the agent pairs that keep interacting every period. The two
/// verdicts coincide.
pub fn einfty_equivalence(seq: &ActionSequence) -> Result<(bool, bool), ConnectivityError> {
    let period = seq.period.ok_or(ConnectivityError::NotPeriodic)?;
    for (idx, step) in seq.steps.iter().enumerate() {
        if step.changes_membership() {
            return Err(ConnectivityError::MembershipChanges { k: idx + 1 });
        }
        if let Err(kind) = check_step(step, &seq.founders, seq.num_agents) {
            return Err(NetError::from(StepViolation { k: idx + 1, kind }).into());
        }
    }

    let founders: Vec<AgentId> = seq.founders.iter().copied().collect();
    let index_of = |id: AgentId| {
        founders
            .binary_search(&id)
            .expect("interactors checked above")
    };

    // Recurring edges: every pair interacting jointly somewhere in the
    // periodic tail occurs infinitely often.
    let prefix = seq.prefix_len();
    let mut uf = UnionFind::new(founders.len());
    for step in &seq.steps[prefix - period..] {
        let ids: Vec<AgentId> = step.interact.iter().copied().collect();
        for a in 0..ids.len() {
            for b in (a + 1)..ids.len() {
                uf.union(index_of(ids[a]), index_of(ids[b]));
            }
        }
    }
    let by_graph = uf.components() == 1;

    // h-based verdict: origins beyond prefix + period repeat earlier phases.
    let window = prefix + period;
    let horizon = period * (seq.num_agents + 2) + prefix;
    let mut by_h = true;
    for k in 0..=window {
        match h_of(seq, k, horizon)? {
            HValue::Finite(_) => {}
            _ => {
                by_h = false;
                break;
            }
        }
    }
    Ok((by_h, by_graph))
}
