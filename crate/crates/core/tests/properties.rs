use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tad_core::analysis::{grad_check, FnObjective};
use tad_core::constructions::{
    random_coordination, random_decentralized, random_matrix_game, random_mmdp,
    restricted_minimizer, weighted_sq_loss, PayoffTensor, RandomMmdpSpec,
};
use tad_core::eval::{bellman_backup, brute_force_optimal, evaluate_policy};
use tad_core::learners::{
    igm_check, mapg_loss_and_grad, uniform_dist, vd_loss_and_grad_against, MapgParams, VdParams,
    VdVariant,
};
use tad_core::nash::pure_nash_of_payoff;
use tad_core::transform::{
    greedy_distill, inverse_transform, lift_policy, lower_policy, sequential_transform,
    size_report, value_relation_check,
};
use tad_core::{
    CoordinationPolicy, DeterministicJointPolicy, JointActionCodec, JointPolicy, Mmdp, ValueTable,
};

fn model(seed: u64, horizon: Option<usize>) -> Mmdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = RandomMmdpSpec {
        n_states: rng.gen_range(1..=3),
        n_agents: rng.gen_range(1..=3),
        n_actions: rng.gen_range(1..=3),
        gamma: rng.gen_range(0.1..0.95),
        horizon,
    };
    random_mmdp(&spec, &mut rng).unwrap()
}

/// Policy value by fixed-point iteration (infinite horizon) or explicit
/// time-indexed backward recursion (episodic), from the raw tensors.
fn value_oracle(m: &Mmdp, policy: &dyn JointPolicy) -> f64 {
    let pi = policy.joint_table();
    let (ns, nj) = (m.n_states, m.n_joint());
    let step = |v: &[f64]| -> Vec<f64> {
        (0..ns)
            .map(|s| {
                (0..nj)
                    .map(|j| {
                        let p = pi.probs[s * nj + j];
                        let next: f64 = (0..ns)
                            .map(|t| m.transition[(s * nj + j) * ns + t] * v[t])
                            .sum();
                        p * (m.reward[s * nj + j] + m.gamma * next)
                    })
                    .sum()
            })
            .collect()
    };
    let mut v = vec![0.0; ns];
    match m.horizon {
        Some(h) => {
            for _ in 0..h {
                v = step(&v);
            }
        }
        None => loop {
            let next = step(&v);
            let diff = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if diff < 1e-14 {
                break;
            }
        },
    }
    m.initial_dist.iter().zip(&v).map(|(d, v)| d * v).sum()
}

fn all_deterministic(n_states: usize, n_joint: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n_joint.pow(n_states as u32);
    (0..total).map(move |mut c| {
        (0..n_states)
            .map(|_| {
                let a = c % n_joint;
                c /= n_joint;
                a
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_codec_round_trip(n in 1usize..5, k in 1usize..5, raw in any::<u64>()) {
        let codec = JointActionCodec::new(n, k);
        let j = (raw as usize) % codec.size();
        let actions = codec.decode(j);
        prop_assert_eq!(actions.len(), n);
        prop_assert_eq!(codec.encode(&actions), j);
        // The first agent is the most significant digit.
        prop_assert_eq!(actions[0], j / k.pow(n as u32 - 1));
    }

    #[test]
    fn evaluation_matches_iteration_oracle(seed in any::<u64>(), h in prop::option::of(1usize..5)) {
        let m = model(seed, h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let p = random_decentralized(m.n_agents, m.n_states, m.n_actions, &mut rng);
        let exact = evaluate_policy(&m, &p).unwrap();
        prop_assert!((exact - value_oracle(&m, &p)).abs() < 1e-9);
    }

    #[test]
    fn bellman_operator_contracts(seed in any::<u64>()) {
        let m = model(seed, None);
        let view = m.joint_view();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let mut table = || ValueTable {
            n_states: m.n_states,
            n_actions: m.n_joint(),
            q: (0..m.n_states * m.n_joint()).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        };
        let (a, b) = (table(), table());
        let ta = bellman_backup(&a, &view).unwrap();
        let tb = bellman_backup(&b, &view).unwrap();
        prop_assert!(ta.sup_distance(&tb) <= m.gamma * a.sup_distance(&b) + 1e-12);
    }

    #[test]
    fn oracle_matches_exhaustive_search(seed in any::<u64>()) {
        let m = model(seed, None);
        let (j_star, _) = brute_force_optimal(&m).unwrap();
        let best = all_deterministic(m.n_states, m.n_joint())
            .map(|actions| {
                value_oracle(&m, &DeterministicJointPolicy {
                    n_agents: m.n_agents,
                    n_actions: m.n_actions,
                    actions,
                })
            })
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((j_star - best).abs() < 1e-8);
    }

    #[test]
    fn transform_round_trips(seed in any::<u64>(), h in prop::option::of(1usize..4)) {
        let m = model(seed, h);
        let g = sequential_transform(&m).unwrap();
        let back = inverse_transform(&g, m.n_agents).unwrap();
        prop_assert_eq!(&back.transition, &m.transition);
        prop_assert_eq!(&back.reward, &m.reward);
        prop_assert_eq!(back.horizon, m.horizon);
        prop_assert!((back.gamma - m.gamma).abs() < 1e-12);
        let r = size_report(&m);
        prop_assert_eq!(r.transformed_sa, (g.n_states * g.n_actions) as u128);
        if m.n_actions >= 2 {
            prop_assert!(r.bound);
        }
    }

    #[test]
    fn transformed_values_are_rescaled_originals(seed in any::<u64>(), h in prop::option::of(1usize..4)) {
        let m = model(seed, h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let pc = random_coordination(m.n_agents, m.n_states, m.n_actions, &mut rng);
        prop_assert!(value_relation_check(&m, &pc).unwrap().residual < 1e-9);
        prop_assert_eq!(lower_policy(&lift_policy(&pc).unwrap(), m.n_agents).unwrap(), pc.clone());
        // A coordination policy evaluates like its joint table.
        prop_assert!((evaluate_policy(&m, &pc).unwrap() - value_oracle(&m, &pc)).abs() < 1e-9);
    }

    #[test]
    fn deterministic_coordination_distills_without_loss(seed in any::<u64>()) {
        let m = model(seed, None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let joint: Vec<usize> = (0..m.n_states).map(|_| rng.gen_range(0..m.n_joint())).collect();
        let pc = CoordinationPolicy::from_joint_actions(m.n_agents, m.n_actions, &joint);
        let d = greedy_distill(&pc, &m).unwrap();
        prop_assert_eq!(d.greedy_joint(), joint);
        prop_assert_eq!(evaluate_policy(&m, &d).unwrap(), evaluate_policy(&m, &pc).unwrap());
    }

    #[test]
    fn mapg_gradient_matches_differences(seed in any::<u64>()) {
        let m = model(seed, None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let shape = MapgParams::uniform(m.n_agents, m.n_states, m.n_actions);
        let theta: Vec<f64> = (0..shape.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f = FnObjective {
            dim: shape.dim(),
            f: |x: &[f64]| mapg_loss_and_grad(&MapgParams::from_flat(&shape, x), &m),
        };
        prop_assert!(grad_check(&f, &theta, 1e-5).unwrap() < 1e-5);
    }

    #[test]
    fn vd_gradients_match_differences(seed in any::<u64>(), v in 0usize..3) {
        let m = model(seed, None);
        let variant = VdVariant::ALL[v];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 6);
        let p = VdParams::random(variant, m.n_agents, m.n_states, m.n_actions, 1.0, &mut rng);
        let target = bellman_backup(&p.joint_q(), &m.joint_view()).unwrap();
        let dist = uniform_dist(m.n_states, m.n_joint());
        let f = FnObjective {
            dim: p.dim(),
            f: |x: &[f64]| vd_loss_and_grad_against(&p.with_flat(x), &target, &dist),
        };
        prop_assert!(grad_check(&f, &p.to_flat(), 1e-5).unwrap() < 1e-5);
    }

    #[test]
    fn duplex_greedy_actions_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=3);
        let p = VdParams::random(VdVariant::Duplex, n, 2, k, 5.0, &mut rng);
        prop_assert!(igm_check(&p, 0) && igm_check(&p, 1));
    }

    #[test]
    fn restricted_minimizer_is_feasible_and_optimal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k): (usize, usize) = (rng.gen_range(1..=3), rng.gen_range(2..=3));
        let size = k.pow(n as u32);
        let t = PayoffTensor {
            n_agents: n,
            n_actions: k,
            entries: (0..size).map(|_| rng.gen_range(-20.0..10.0)).collect(),
        };
        let w: Vec<f64> = (0..size).map(|_| rng.gen_range(0.1..1.0)).collect();
        let a_star = rng.gen_range(0..size);
        let f = restricted_minimizer(&t, &w, a_star).unwrap();
        let top = f.entries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(f.entries[a_star], top);
        let best = weighted_sq_loss(&f, &t, &w);
        // Any feasible point: lift a* to level v and clip the rest at v.
        for _ in 0..50 {
            let v = rng.gen_range(t.entries[a_star]..=10.0);
            let mut g = t.clone();
            for (j, x) in g.entries.iter_mut().enumerate() {
                *x = if j == a_star { v } else { x.min(v) };
            }
            prop_assert!(best <= weighted_sq_loss(&g, &t, &w) + 1e-12);
        }
    }

    #[test]
    fn equilibria_are_mutual_best_responses(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=5);
        let g = random_matrix_game(k, 2, &mut rng).unwrap();
        let ne = pure_nash_of_payoff(&g.reward, g.codec());
        for a in 0..k {
            for b in 0..k {
                let here = g.reward[a * k + b];
                let row_best = (0..k).all(|x| g.reward[x * k + b] <= here);
                let col_best = (0..k).all(|y| g.reward[a * k + y] <= here);
                prop_assert_eq!(ne.contains(&(a * k + b)), row_best && col_best);
            }
        }
        // The global maximum is always an equilibrium.
        prop_assert!(!ne.is_empty());
    }
}
