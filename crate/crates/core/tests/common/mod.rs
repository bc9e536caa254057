//! Shared fixtures: the golden schedules and observation generators.

#![allow(dead_code)]

use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;

use subset_equalizing::harness::random_observations;
use subset_equalizing::net::{id_range, ActionSequence, ActionStep, AgentId, AgentSet};
use subset_equalizing::se::{NetworkState, Observations};
use subset_equalizing::spd::DEFAULT_SPD_TOLERANCE;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load_golden(name: &str) -> ActionSequence {
    let path = data_dir().join(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    let seq = ActionSequence::from_json(&text)
        .unwrap_or_else(|e| panic!("cannot parse {}: {e}", path.display()));
    seq.check_structure()
        .expect("golden schedule is structurally sound");
    seq
}

/// Three agents, two message groups that never mix (period 6).
pub fn disconnected_schedule() -> ActionSequence {
    ActionSequence::new(
        3,
        id_range(1, 2),
        vec![
            ActionStep::new([3], [1], []),
            ActionStep::new([], [3], [1]),
            ActionStep::new([1], [2], []),
            ActionStep::new([], [1], [2]),
            ActionStep::new([2], [3], []),
            ActionStep::new([], [2], [3]),
        ],
        Some(6),
    )
    .unwrap()
}

/// Three agents whose hand-offs chain, mixing messages within three steps
/// of any origin (period 6).
pub fn uniformly_connected_schedule() -> ActionSequence {
    ActionSequence::new(
        3,
        id_range(1, 2),
        vec![
            ActionStep::new([3], [1], []),
            ActionStep::new([], [2], [1]),
            ActionStep::new([1], [2], []),
            ActionStep::new([], [3], [2]),
            ActionStep::new([2], [3], []),
            ActionStep::new([], [1], [3]),
        ],
        Some(6),
    )
    .unwrap()
}

/// Agent 2 meets agent 1 only at the triangular numbers, so mixing takes
/// longer and longer (finite prefix, no period).
pub fn degrading_schedule(prefix: usize) -> ActionSequence {
    let steps = (1..=prefix)
        .map(|k| {
            if is_triangular(k) {
                ActionStep::new([], [1, 2], [])
            } else {
                ActionStep::new([], [2, 3], [])
            }
        })
        .collect();
    ActionSequence::new(3, id_range(1, 3), steps, None).unwrap()
}

fn is_triangular(k: usize) -> bool {
    let mut l = 1;
    while l * (l + 1) / 2 <= k {
        if l * (l + 1) / 2 == k {
            return true;
        }
        l += 1;
    }
    false
}

/// The six-agent walkthrough schedule: five founders, one join, staged
/// leaves, covered after four steps.
pub fn six_agent_walkthrough() -> ActionSequence {
    ActionSequence::new(
        6,
        id_range(1, 5),
        vec![
            ActionStep::new([], [3, 5], []),
            ActionStep::new([6], [4, 5], []),
            ActionStep::new([], [2], [1]),
            ActionStep::new([1], [2], [5, 6]),
        ],
        None,
    )
    .unwrap()
}

/// Agent 3 churns forever: joins and meets agent 1 at odd steps, meets
/// agent 2 and leaves at even steps (period 2).
pub fn churn_forever_schedule(prefix: usize) -> ActionSequence {
    let odd = ActionStep::new([3], [1], []);
    let even = ActionStep::new([], [2], [3]);
    let steps = (1..=prefix)
        .map(|k| {
            if k % 2 == 1 {
                odd.clone()
            } else {
                even.clone()
            }
        })
        .collect();
    ActionSequence::new(3, id_range(1, 2), steps, Some(2)).unwrap()
}

/// Random observations whose matrices clear `min_eig` agent by agent, so
/// test tolerances stay meaningful on pathological draws.
pub fn conditioned_observations(
    ids: impl IntoIterator<Item = AgentId>,
    dimension: usize,
    rng: &mut ChaCha8Rng,
    min_eig: f64,
) -> Observations {
    let floor = min_eig.max(DEFAULT_SPD_TOLERANCE);
    let mut obs = Observations::new();
    for id in ids {
        let one = loop {
            let candidate = random_observations([id], dimension, rng);
            if candidate[&id].p.min_eigenvalue() > floor {
                break candidate;
            }
        };
        obs.extend(one);
    }
    obs
}

/// Conditioned observations rescaled so the initial monitoring value is
/// `target_v`, keeping absolute slack assertions meaningful.
pub fn normalized_observations(
    founders: &AgentSet,
    dimension: usize,
    rng: &mut ChaCha8Rng,
    target_v: f64,
) -> Observations {
    let mut obs = conditioned_observations(founders.iter().copied(), dimension, rng, 1e-2);
    let state = NetworkState::init(&obs, founders).expect("conditioned observations are valid");
    let v0 = state.lyapunov();
    if v0 > 0.0 {
        let scale = (target_v / v0).sqrt();
        for o in obs.values_mut() {
            for q in o.q.iter_mut() {
                *q *= scale;
            }
        }
    }
    obs
}
