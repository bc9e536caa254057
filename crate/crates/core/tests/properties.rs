//! Randomized invariants across the crate, driven by proptest.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subset_equalizing::harness::{random_observations, standard_normal};
use subset_equalizing::net::{
    id_range, random_volatile_sequence, ActionSequence, ActionStep, AgentSet, ChurnModel,
};
use subset_equalizing::se::NetworkState;
use subset_equalizing::spd::{distance, norm, SpdMatrix, DEFAULT_SPD_TOLERANCE};
use subset_equalizing::{h_of, HValue, PartitionState};

use common::{conditioned_observations, normalized_observations};

fn spd_from_seed(n: usize, seed: u64) -> SpdMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect())
            .collect();
        let candidate = SpdMatrix::from_factor(&x).unwrap();
        if candidate.assert_spd(DEFAULT_SPD_TOLERANCE).is_ok() {
            return candidate;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_meets_residual_contract(n in 1usize..=8, seed in 0u64..10_000) {
        let a = spd_from_seed(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0b);
        let b: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let x = a.solve(&b).unwrap();
        let residual = distance(&a.matvec(&x).unwrap(), &b);
        prop_assert!(residual <= 1e-9 * (1.0 + norm(&b)));
    }

    #[test]
    fn factor_products_are_bitwise_symmetric(n in 1usize..=8, seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect()).collect();
        let m = SpdMatrix::from_factor(&x).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
            }
        }
        let eigs = m.eigenvalues();
        prop_assert!(eigs[0] <= *eigs.last().unwrap());
    }

    #[test]
    fn generated_schedules_validate_and_keep_members(
        num_agents in 3usize..=15,
        founder_count in 2usize..=8,
        seed in 0u64..5_000,
        join_prob in 0.0f64..0.3,
        leave_prob in 0.0f64..0.3,
    ) {
        let founder_count = founder_count.min(num_agents);
        let founders = id_range(1, founder_count);
        let churn = ChurnModel { join_prob, leave_prob, max_interact_size: 4 };
        let horizon = 80;
        let seq =
            random_volatile_sequence(num_agents, &founders, horizon, &churn, seed).unwrap();
        prop_assert!(seq.validate(horizon).is_ok());
        let trace = seq.membership_trace(horizon).unwrap();
        for k in 0..=horizon {
            prop_assert!(!trace.at(k).unwrap().is_empty(), "membership empty at {k}");
        }
    }

    #[test]
    fn periodic_unrolling_agrees_with_expansion(
        num_agents in 2usize..=6,
        period in 1usize..=5,
        seed in 0u64..5_000,
    ) {
        // static membership keeps arbitrary periodic interacts valid forever
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let steps: Vec<ActionStep> = (0..period)
            .map(|_| {
                let size = rng.gen_range(1..=num_agents);
                let interact: AgentSet =
                    rand::seq::index::sample(&mut rng, num_agents, size)
                        .iter()
                        .map(|i| i + 1)
                        .collect();
                ActionStep { join: AgentSet::new(), interact, leave: AgentSet::new() }
            })
            .collect();
        let folded =
            ActionSequence::new(num_agents, id_range(1, num_agents), steps.clone(), Some(period))
                .unwrap();
        let horizon = period * 4 + 3;
        let unrolled_steps: Vec<ActionStep> =
            (0..horizon).map(|i| steps[i % period].clone()).collect();
        let unrolled =
            ActionSequence::new(num_agents, id_range(1, num_agents), unrolled_steps, None)
                .unwrap();
        for k in 1..=horizon {
            prop_assert_eq!(folded.step_at(k).unwrap(), unrolled.step_at(k).unwrap());
        }
        for k in 0..=horizon {
            prop_assert_eq!(folded.membership_at(k).unwrap(), unrolled.membership_at(k).unwrap());
        }
    }

    #[test]
    fn partition_blocks_stay_consistent(seed in 0u64..2_000) {
        let founders = id_range(1, 5);
        let churn = ChurnModel { join_prob: 0.15, leave_prob: 0.15, max_interact_size: 3 };
        let seq = random_volatile_sequence(9, &founders, 40, &churn, seed).unwrap();
        let trace = seq.membership_trace(40).unwrap();
        let mut part = PartitionState::init(&seq, 0).unwrap();
        let mut covered_since = None;
        for ell in 1..=40usize {
            part.apply_step(seq.step_at(ell).unwrap()).unwrap();
            let members = trace.at(ell).unwrap();
            // blocks partition the membership
            prop_assert_eq!(&part.members(), members, "at {}", ell);
            let mut seen = AgentSet::new();
            for block in part.blocks() {
                prop_assert!(!block.is_empty());
                for id in block {
                    prop_assert!(seen.insert(*id), "agent {} in two blocks", id);
                }
            }
            for &id in members {
                prop_assert!(part.block_of(id).is_some_and(|b| b.contains(&id)));
            }
            // coverage, once reached, persists
            if part.is_covering() && covered_since.is_none() {
                covered_since = Some(ell);
            }
            if covered_since.is_some() {
                prop_assert!(part.is_covering(), "coverage lost at {}", ell);
            }
        }
    }

    #[test]
    fn raising_the_horizon_never_changes_a_finite_answer(seed in 0u64..1_000) {
        let founders = id_range(1, 4);
        let churn = ChurnModel { join_prob: 0.2, leave_prob: 0.2, max_interact_size: 3 };
        let seq = random_volatile_sequence(6, &founders, 30, &churn, seed).unwrap();
        if let HValue::Finite(h) = h_of(&seq, 0, 30).unwrap() {
            for horizon in h..=30 {
                prop_assert_eq!(h_of(&seq, 0, horizon).unwrap(), HValue::Finite(h));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_and_monotonicity_hold(seed in 0u64..1_000) {
        let founders = id_range(1, 5);
        let churn = ChurnModel::default();
        let seq = random_volatile_sequence(10, &founders, 80, &churn, seed).unwrap();
        let mut obs_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
        let observations = normalized_observations(&founders, 3, &mut obs_rng, 4.0);
        let mut state = NetworkState::init(&observations, &founders).unwrap();
        let mut v_prev = state.lyapunov();
        for k in 1..=80 {
            state.apply_step(seq.step_at(k).unwrap()).unwrap();
            let (qz, q) = state.conservation_residuals();
            prop_assert!(qz <= 1e-9 && q <= 1e-9);
            let v = state.lyapunov();
            prop_assert!(v <= v_prev + 1e-12, "V rose at {}: {} -> {}", k, v_prev, v);
            v_prev = v;
        }
    }

    #[test]
    fn unequal_sources_force_strict_decrease(seed in 0u64..1_000) {
        let founders = id_range(1, 4);
        let mut obs_rng = ChaCha8Rng::seed_from_u64(seed);
        let observations = conditioned_observations(1..=4, 2, &mut obs_rng, 1e-2);
        let mut state = NetworkState::init(&observations, &founders).unwrap();

        // initial estimates are generically distinct; equalize a pair
        let z1 = state.slot(1).unwrap().z.clone();
        let z2 = state.slot(2).unwrap().z.clone();
        let v_before = state.lyapunov();
        state.apply_step(&ActionStep::new([], [1, 2], [])).unwrap();
        let v_after = state.lyapunov();
        if distance(&z1, &z2) > 1e-6 {
            prop_assert!(v_after < v_before, "{} !< {}", v_after, v_before);
        } else {
            prop_assert!(v_after <= v_before + 1e-12);
        }
    }

    #[test]
    fn weight_floor_transfers_between_observation_sets(seed in 0u64..300) {
        // the same schedule drives two different observation sets; the
        // smallest weight eigenvalue of one bounds the other's through the
        // extreme founder eigenvalues
        let founders = id_range(1, 4);
        let churn = ChurnModel { join_prob: 0.2, leave_prob: 0.2, max_interact_size: 3 };
        let seq = random_volatile_sequence(6, &founders, 40, &churn, seed).unwrap();

        let mut rng_a = ChaCha8Rng::seed_from_u64(seed ^ 0xaaaa);
        let obs_hat = conditioned_observations(1..=4, 2, &mut rng_a, 1e-3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(seed ^ 0xbbbb);
        let obs_tilde = conditioned_observations(1..=4, 2, &mut rng_b, 1e-3);

        let lambda_hat =
            obs_hat.values().map(|o| o.p.spectral_radius()).fold(0.0f64, f64::max);
        let lambda_tilde =
            obs_tilde.values().map(|o| o.p.min_eigenvalue()).fold(f64::INFINITY, f64::min);
        let ratio = lambda_tilde / lambda_hat;

        let mut hat = NetworkState::init(&obs_hat, &founders).unwrap();
        let mut tilde = NetworkState::init(&obs_tilde, &founders).unwrap();
        for k in 1..=40 {
            let step = seq.step_at(k).unwrap();
            hat.apply_step(step).unwrap();
            tilde.apply_step(step).unwrap();
            for (id, slot_hat) in hat.slots() {
                let hat_min = slot_hat.q.min_eigenvalue();
                let tilde_min = tilde.slot(id).unwrap().q.min_eigenvalue();
                prop_assert!(
                    tilde_min >= ratio * hat_min * (1.0 - 1e-9) - 1e-12,
                    "k={} agent {}: {} < {} * {}",
                    k, id, tilde_min, ratio, hat_min
                );
            }
        }
    }

    #[test]
    fn gossip_on_static_graphs_validates(seed in 0u64..200) {
        use subset_equalizing::topo::{GossipMode, UniformScheduler};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = subset_equalizing::random_geometric(8, 14, &mut rng).unwrap();
        let founders = id_range(1, 8);
        for mode in [GossipMode::Pairwise, GossipMode::Groupwise] {
            let mut sched = UniformScheduler::new(graph.clone(), mode, seed);
            for _ in 0..30 {
                let step = sched.next().unwrap();
                prop_assert!(step.join.is_empty() && step.leave.is_empty());
                prop_assert!(
                    subset_equalizing::net::check_step(&step, &founders, 8).is_ok()
                );
            }
        }
    }

    #[test]
    fn observation_generation_is_deterministic(seed in 0u64..500) {
        let mut a = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ChaCha8Rng::seed_from_u64(seed);
        let one = random_observations(1..=3, 3, &mut a);
        let two = random_observations(1..=3, 3, &mut b);
        for id in 1..=3usize {
            prop_assert_eq!(one[&id].p.entries(), two[&id].p.entries());
            prop_assert_eq!(&one[&id].q, &two[&id].q);
        }
    }
}

/// Churn for a while, then freeze the membership and keep gossiping: the
/// ultimately static network drives every member estimate onto the pooled
/// solution.
#[test]
fn ultimately_static_membership_converges() {
    use rand::Rng;

    let founders = id_range(1, 6);
    let churn = ChurnModel {
        join_prob: 0.2,
        leave_prob: 0.2,
        max_interact_size: 3,
    };
    let seq = random_volatile_sequence(10, &founders, 30, &churn, 99).unwrap();
    let mut obs_rng = ChaCha8Rng::seed_from_u64(99);
    let observations = conditioned_observations(1..=6, 3, &mut obs_rng, 1e-3);
    let mut state = NetworkState::init(&observations, &founders).unwrap();
    for k in 1..=30 {
        state.apply_step(seq.step_at(k).unwrap()).unwrap();
    }

    // membership never changes again; random pairs keep mixing
    let members: Vec<_> = state.member_set().into_iter().collect();
    assert!(
        members.len() >= 2,
        "churn left too few members for the freeze phase"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..6_000 {
        let a = members[rng.gen_range(0..members.len())];
        let b = loop {
            let candidate = members[rng.gen_range(0..members.len())];
            if candidate != a {
                break candidate;
            }
        };
        state.apply_step(&ActionStep::new([], [a, b], [])).unwrap();
    }
    assert!(
        state.max_member_error() < 1e-6,
        "max member error {} after the static phase",
        state.max_member_error()
    );
}
