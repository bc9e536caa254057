//! The action-sequence network model.
//!
//! A network of `M` agents is driven entirely by an exogenous action
//! sequence: a founder set, then for each time step `k >= 1` three disjoint
//! agent sets — joiners `J(k)`, interacting members `I(k)` (never empty),
//! and leavers `L(k)` (always a proper subset of the current members).
//! Membership evolves as
//!
//! ```text
//! M(0) = founders
//! M(k) = (M(k-1) ∪ J(k)) − L(k)
//! ```
//!
//! so the network always has at least one member. Sequences are stored as a
//! finite prefix plus an optional repeat period, which covers both finite
//! experiment schedules and the infinite periodic schedules used by the
//! connectivity analyzer.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Agents are labeled `1..=M`.
pub type AgentId = usize;
pub type AgentSet = BTreeSet<AgentId>;

/// One step of the driving sequence: who joins, who interacts, who leaves.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionStep {
    #[serde(default)]
    pub join: AgentSet,
    pub interact: AgentSet,
    #[serde(default)]
    pub leave: AgentSet,
}

impl ActionStep {
    pub fn new<J, I, L>(join: J, interact: I, leave: L) -> Self
    where
        J: IntoIterator<Item = AgentId>,
        I: IntoIterator<Item = AgentId>,
        L: IntoIterator<Item = AgentId>,
    {
        ActionStep {
            join: join.into_iter().collect(),
            interact: interact.into_iter().collect(),
            leave: leave.into_iter().collect(),
        }
    }

    /// Everyone whose state is rewritten this step.
    pub fn group(&self) -> AgentSet {
        self.join.union(&self.interact).copied().collect()
    }

    /// Everyone whose previous state feeds the update.
    pub fn sources(&self) -> AgentSet {
        self.interact.union(&self.leave).copied().collect()
    }

    pub fn changes_membership(&self) -> bool {
        !self.join.is_empty() || !self.leave.is_empty()
    }
}

/// The clause of the step contract that a step violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    IdOutOfRange { id: AgentId },
    EmptyInteract,
    LeaverNotMember { id: AgentId },
    LeaveNotProperSubset,
    SetsOverlap { id: AgentId },
    JoinerAlreadyMember { id: AgentId },
    InteractorNotMember { id: AgentId },
    Structural(String),
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ViolationKind::IdOutOfRange { id } => write!(f, "agent id {id} out of range"),
            ViolationKind::EmptyInteract => write!(f, "interact set must be nonempty"),
            ViolationKind::LeaverNotMember { id } => {
                write!(f, "leave set must contain only members, but {id} is not")
            }
            ViolationKind::LeaveNotProperSubset => {
                write!(f, "leave set must be a proper subset of the members")
            }
            ViolationKind::SetsOverlap { id } => {
                write!(
                    f,
                    "join/interact/leave must be pairwise disjoint, but {id} repeats"
                )
            }
            ViolationKind::JoinerAlreadyMember { id } => {
                write!(
                    f,
                    "join set must contain only non-members, but {id} is a member"
                )
            }
            ViolationKind::InteractorNotMember { id } => {
                write!(f, "interact set must contain only members, but {id} is not")
            }
            ViolationKind::Structural(msg) => write!(f, "{msg}"),
        }
    }
}

/// A violation pinned to the step index where it occurs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {k}: {kind}")]
pub struct StepViolation {
    pub k: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("founder set must be nonempty")]
    NoFounders,
    #[error("num_agents must be at least 2, got {0}")]
    TooFewAgents(usize),
    #[error("agent id {id} outside 1..={num_agents}")]
    IdOutOfRange { id: AgentId, num_agents: usize },
    #[error("period {period} invalid for a prefix of {prefix} steps")]
    BadPeriod { period: usize, prefix: usize },
    #[error("sequence has {prefix} steps and no period; step {k} is undefined")]
    BeyondHorizon { k: usize, prefix: usize },
    #[error(transparent)]
    InvalidStep(#[from] StepViolation),
}

/// Checks one step against the current member set; `num_agents` bounds ids.
/// Returns the first violated clause.
pub fn check_step(
    step: &ActionStep,
    members: &AgentSet,
    num_agents: usize,
) -> Result<(), ViolationKind> {
    for &id in step.join.iter().chain(&step.interact).chain(&step.leave) {
        if id == 0 || id > num_agents {
            return Err(ViolationKind::IdOutOfRange { id });
        }
    }
    if step.interact.is_empty() {
        return Err(ViolationKind::EmptyInteract);
    }
    if let Some(&id) = step.leave.iter().find(|id| !members.contains(id)) {
        return Err(ViolationKind::LeaverNotMember { id });
    }
    if step.leave.len() == members.len() {
        return Err(ViolationKind::LeaveNotProperSubset);
    }
    if let Some(&id) = step.join.intersection(&step.interact).next() {
        return Err(ViolationKind::SetsOverlap { id });
    }
    if let Some(&id) = step.join.intersection(&step.leave).next() {
        return Err(ViolationKind::SetsOverlap { id });
    }
    if let Some(&id) = step.interact.intersection(&step.leave).next() {
        return Err(ViolationKind::SetsOverlap { id });
    }
    if let Some(&id) = step.join.iter().find(|id| members.contains(id)) {
        return Err(ViolationKind::JoinerAlreadyMember { id });
    }
    if let Some(&id) = step.interact.iter().find(|id| !members.contains(id)) {
        return Err(ViolationKind::InteractorNotMember { id });
    }
    Ok(())
}

/// The full driver: founders plus a step list, optionally repeating.
///
/// With `period = Some(p)`, the last `p` prefix steps repeat forever, i.e.
/// `step(k) = step(k - p)` for every `k` beyond the prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSequence {
    #[serde(rename = "M")]
    pub num_agents: usize,
    pub founders: AgentSet,
    pub steps: Vec<ActionStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
}

impl ActionSequence {
    pub fn new(
        num_agents: usize,
        founders: AgentSet,
        steps: Vec<ActionStep>,
        period: Option<usize>,
    ) -> Result<Self, NetError> {
        let seq = ActionSequence {
            num_agents,
            founders,
            steps,
            period,
        };
        seq.check_structure()?;
        Ok(seq)
    }

    /// Structural sanity independent of any step-by-step validity: id ranges,
    /// nonempty founders, period within the prefix.
    pub fn check_structure(&self) -> Result<(), NetError> {
        if self.num_agents < 2 {
            return Err(NetError::TooFewAgents(self.num_agents));
        }
        if self.founders.is_empty() {
            return Err(NetError::NoFounders);
        }
        for &id in &self.founders {
            if id == 0 || id > self.num_agents {
                return Err(NetError::IdOutOfRange {
                    id,
                    num_agents: self.num_agents,
                });
            }
        }
        if let Some(p) = self.period {
            if p == 0 || p > self.steps.len() {
                return Err(NetError::BadPeriod {
                    period: p,
                    prefix: self.steps.len(),
                });
            }
        }
        Ok(())
    }

    pub fn prefix_len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    /// Index into `steps` for time `k >= 1`, unrolling the period.
    pub fn step_index(&self, k: usize) -> Result<usize, NetError> {
        assert!(k >= 1, "steps are indexed from k = 1");
        let prefix = self.steps.len();
        if k <= prefix {
            return Ok(k - 1);
        }
        match self.period {
            Some(p) => Ok((prefix - p) + (k - prefix - 1) % p),
            None => Err(NetError::BeyondHorizon { k, prefix }),
        }
    }

    pub fn step_at(&self, k: usize) -> Result<&ActionStep, NetError> {
        Ok(&self.steps[self.step_index(k)?])
    }

    /// Membership after the actions at time `k`, validating every step on the
    /// way and reporting the first violation.
    pub fn membership_at(&self, k: usize) -> Result<AgentSet, NetError> {
        let mut members = self.founders.clone();
        for t in 1..=k {
            let step = self.step_at(t)?;
            check_step(step, &members, self.num_agents)
                .map_err(|kind| StepViolation { k: t, kind })?;
            members.extend(step.join.iter().copied());
            for id in &step.leave {
                members.remove(id);
            }
        }
        Ok(members)
    }

    /// Memberships for `k = 0..=horizon` in one pass.
    pub fn membership_trace(&self, horizon: usize) -> Result<MembershipTrace, NetError> {
        let mut members_at = BTreeMap::new();
        let mut members = self.founders.clone();
        members_at.insert(0, members.clone());
        for t in 1..=horizon {
            let step = self.step_at(t)?;
            check_step(step, &members, self.num_agents)
                .map_err(|kind| StepViolation { k: t, kind })?;
            members.extend(step.join.iter().copied());
            for id in &step.leave {
                members.remove(id);
            }
            members_at.insert(t, members.clone());
        }
        Ok(MembershipTrace { members_at })
    }

    /// Checks every step up to `horizon`, collecting violations instead of
    /// stopping at the first. Membership replay continues past a bad step by
    /// applying its join/leave sets anyway, so later steps are still checked
    /// against something sensible.
    pub fn validate(&self, horizon: usize) -> Result<(), Vec<StepViolation>> {
        if let Err(e) = self.check_structure() {
            return Err(vec![StepViolation {
                k: 0,
                kind: ViolationKind::Structural(e.to_string()),
            }]);
        }
        let mut violations = Vec::new();
        let mut members = self.founders.clone();
        for t in 1..=horizon {
            let step = match self.step_at(t) {
                Ok(s) => s,
                Err(_) => break, // finite sequence ends before the horizon
            };
            if let Err(kind) = check_step(step, &members, self.num_agents) {
                violations.push(StepViolation { k: t, kind });
            }
            members.extend(step.join.iter().copied());
            for id in &step.leave {
                members.remove(id);
            }
            if members.is_empty() {
                break; // nothing sensible to check past this point
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Horizon up to which steps are defined: `None` means unbounded.
    pub fn analyzable_horizon(&self) -> Option<usize> {
        if self.is_periodic() {
            None
        } else {
            Some(self.steps.len())
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sequence serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Membership sets indexed by time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipTrace {
    members_at: BTreeMap<usize, AgentSet>,
}

impl MembershipTrace {
    pub fn at(&self, k: usize) -> Option<&AgentSet> {
        self.members_at.get(&k)
    }

    pub fn horizon(&self) -> usize {
        self.members_at.keys().next_back().copied().unwrap_or(0)
    }
}

/// Per-step churn law for randomly generated schedules.
///
/// Interact-set size is uniform on `1..=min(max_interact_size, |members|)`;
/// each remaining member leaves independently with `leave_prob`; each
/// non-member joins independently with `join_prob`. These defaults are a
/// configuration choice, not a modeling claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChurnModel {
    #[serde(default = "default_join_prob")]
    pub join_prob: f64,
    #[serde(default = "default_leave_prob")]
    pub leave_prob: f64,
    #[serde(default = "default_max_interact")]
    pub max_interact_size: usize,
}

fn default_join_prob() -> f64 {
    0.05
}
fn default_leave_prob() -> f64 {
    0.05
}
fn default_max_interact() -> usize {
    5
}

impl Default for ChurnModel {
    fn default() -> Self {
        ChurnModel {
            join_prob: default_join_prob(),
            leave_prob: default_leave_prob(),
            max_interact_size: default_max_interact(),
        }
    }
}

/// Draws a random schedule that satisfies the step contract by construction.
///
/// Sampling order per step: interact first (nonempty subset of the current
/// members), then leavers from the remaining members (the nonempty interact
/// set keeps the leave set proper), then joiners from the non-members.
/// Deterministic for a given seed.
pub fn random_volatile_sequence(
    num_agents: usize,
    founders: &AgentSet,
    horizon: usize,
    churn: &ChurnModel,
    seed: u64,
) -> Result<ActionSequence, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members = founders.clone();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let pool: Vec<AgentId> = members.iter().copied().collect();
        let cap = churn.max_interact_size.max(1).min(pool.len());
        let size = rng.gen_range(1..=cap);
        let picked = rand::seq::index::sample(&mut rng, pool.len(), size);
        let interact: AgentSet = picked.iter().map(|i| pool[i]).collect();

        let mut leave = AgentSet::new();
        for &id in &pool {
            if !interact.contains(&id) && rng.gen_bool(churn.leave_prob) {
                leave.insert(id);
            }
        }
        let mut join = AgentSet::new();
        for id in 1..=num_agents {
            if !members.contains(&id) && rng.gen_bool(churn.join_prob) {
                join.insert(id);
            }
        }

        members.extend(join.iter().copied());
        for id in &leave {
            members.remove(id);
        }
        steps.push(ActionStep {
            join,
            interact,
            leave,
        });
    }
    ActionSequence::new(num_agents, founders.clone(), steps, None)
}

/// Convenience constructor for `{lo..=hi}` agent sets.
pub fn id_range(lo: AgentId, hi: AgentId) -> AgentSet {
    (lo..=hi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example6_schedule(prefix: usize, period: Option<usize>) -> ActionSequence {
        // Agent 3 cycles: join and interact with 1, then interact with 2 and leave.
        let odd = ActionStep::new([3], [1], []);
        let even = ActionStep::new([], [2], [3]);
        let steps: Vec<ActionStep> = (1..=prefix)
            .map(|k| {
                if k % 2 == 1 {
                    odd.clone()
                } else {
                    even.clone()
                }
            })
            .collect();
        ActionSequence::new(3, id_range(1, 2), steps, period).unwrap()
    }

    #[test]
    fn membership_follows_recursion() {
        let seq = ActionSequence::new(3, id_range(1, 2), vec![ActionStep::new([3], [1], [])], None)
            .unwrap();
        assert_eq!(seq.membership_at(0).unwrap(), id_range(1, 2));
        assert_eq!(seq.membership_at(1).unwrap(), id_range(1, 3));
    }

    #[test]
    fn membership_of_empty_schedule_is_founders() {
        let seq = ActionSequence::new(5, id_range(1, 2), vec![], None).unwrap();
        assert_eq!(seq.membership_at(0).unwrap(), id_range(1, 2));
    }

    #[test]
    fn empty_interact_is_reported() {
        let seq = ActionSequence::new(3, id_range(1, 2), vec![ActionStep::new([3], [], [])], None)
            .unwrap();
        let errs = seq.validate(1).unwrap_err();
        assert_eq!(
            errs,
            vec![StepViolation {
                k: 1,
                kind: ViolationKind::EmptyInteract
            }]
        );
    }

    #[test]
    fn leaving_all_members_is_reported_as_improper_subset() {
        let seq = ActionSequence::new(
            3,
            id_range(1, 2),
            vec![ActionStep::new([], [1], [1, 2])],
            None,
        )
        .unwrap();
        let errs = seq.validate(1).unwrap_err();
        assert_eq!(errs[0].k, 1);
        assert_eq!(errs[0].kind, ViolationKind::LeaveNotProperSubset);
    }

    #[test]
    fn overlap_and_membership_clauses_are_reported() {
        let overlap = ActionSequence::new(
            4,
            id_range(1, 3),
            vec![ActionStep::new([4], [4, 1], [])],
            None,
        )
        .unwrap();
        assert_eq!(
            overlap.validate(1).unwrap_err()[0].kind,
            ViolationKind::SetsOverlap { id: 4 }
        );

        let joiner_is_member =
            ActionSequence::new(4, id_range(1, 3), vec![ActionStep::new([2], [1], [])], None)
                .unwrap();
        assert_eq!(
            joiner_is_member.validate(1).unwrap_err()[0].kind,
            ViolationKind::JoinerAlreadyMember { id: 2 }
        );

        let interactor_not_member =
            ActionSequence::new(4, id_range(1, 3), vec![ActionStep::new([], [4], [])], None)
                .unwrap();
        assert_eq!(
            interactor_not_member.validate(1).unwrap_err()[0].kind,
            ViolationKind::InteractorNotMember { id: 4 }
        );
    }

    #[test]
    fn periodic_unrolling_matches_explicit_expansion() {
        let seq = example6_schedule(2, Some(2));
        let unrolled = example6_schedule(12, None);
        for k in 1..=12 {
            assert_eq!(seq.step_at(k).unwrap(), &unrolled.steps[k - 1], "k = {k}");
        }
        for k in 0..=12 {
            assert_eq!(
                seq.membership_at(k).unwrap(),
                unrolled.membership_at(k).unwrap()
            );
        }
    }

    #[test]
    fn beyond_horizon_without_period_errors() {
        let seq = ActionSequence::new(3, id_range(1, 2), vec![ActionStep::new([], [1], [])], None)
            .unwrap();
        assert!(matches!(
            seq.membership_at(2),
            Err(NetError::BeyondHorizon { k: 2, .. })
        ));
    }

    #[test]
    fn random_volatile_sequence_is_valid_and_deterministic() {
        let founders = id_range(1, 50);
        let churn = ChurnModel::default();
        let a = random_volatile_sequence(100, &founders, 1000, &churn, 1).unwrap();
        a.validate(1000).unwrap();
        let b = random_volatile_sequence(100, &founders, 1000, &churn, 1).unwrap();
        assert_eq!(a, b);
        let c = random_volatile_sequence(100, &founders, 1000, &churn, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_churn_keeps_membership_static() {
        let founders = id_range(1, 10);
        let churn = ChurnModel {
            join_prob: 0.0,
            leave_prob: 0.0,
            max_interact_size: 4,
        };
        let seq = random_volatile_sequence(20, &founders, 200, &churn, 7).unwrap();
        let trace = seq.membership_trace(200).unwrap();
        for k in 0..=200 {
            assert_eq!(trace.at(k).unwrap(), &founders);
        }
    }

    #[test]
    fn json_round_trip() {
        let seq = example6_schedule(2, Some(2));
        let text = seq.to_json();
        let back = ActionSequence::from_json(&text).unwrap();
        assert_eq!(seq, back);
        // wire format fields
        assert!(text.contains("\"M\""));
        assert!(text.contains("\"interact\""));
    }
}
