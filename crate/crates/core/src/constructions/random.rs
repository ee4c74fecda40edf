//! Seeded random models and policies.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::envfile::DEFAULT_MATRIX_GAMMA;
use crate::error::Result;
use crate::model::{JointActionCodec, Mmdp};
use crate::policy::{CoordinationPolicy, DecentralizedPolicySet};

/// Payoff range of random games, matching the printed random matrices.
pub const PAYOFF_RANGE: (f64, f64) = (-20.0, 10.0);

/// `n`-agent game with `k` actions each and iid uniform payoffs in
/// [`PAYOFF_RANGE`].
pub fn random_matrix_game<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<Mmdp> {
    let size = JointActionCodec::new(n, k).size();
    let u = Uniform::new_inclusive(PAYOFF_RANGE.0, PAYOFF_RANGE.1);
    let payoff = (0..size).map(|_| u.sample(rng)).collect();
    Mmdp::matrix_game(n, k, payoff, DEFAULT_MATRIX_GAMMA)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMmdpSpec {
    pub n_states: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub horizon: Option<usize>,
}

fn random_simplex<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    // Bounded away from zero so every row is well conditioned.
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// Dense random model: each transition row and the initial distribution are
/// normalized uniform draws; rewards are uniform in `[-1, 1]`.
pub fn random_mmdp<R: Rng + ?Sized>(spec: &RandomMmdpSpec, rng: &mut R) -> Result<Mmdp> {
    let nj = JointActionCodec::new(spec.n_agents, spec.n_actions).size();
    let ns = spec.n_states;
    let mut transition = Vec::with_capacity(ns * nj * ns);
    for _ in 0..ns * nj {
        transition.extend(random_simplex(ns, rng));
    }
    let reward = (0..ns * nj).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Mmdp::new(
        ns,
        spec.n_agents,
        spec.n_actions,
        transition,
        reward,
        spec.gamma,
        random_simplex(ns, rng),
        spec.horizon,
    )
}

pub fn random_decentralized<R: Rng + ?Sized>(
    n_agents: usize,
    n_states: usize,
    n_actions: usize,
    rng: &mut R,
) -> DecentralizedPolicySet {
    DecentralizedPolicySet {
        n_states,
        n_actions,
        tables: (0..n_agents)
            .map(|_| {
                (0..n_states)
                    .flat_map(|_| random_simplex(n_actions, rng))
                    .collect()
            })
            .collect(),
    }
}

pub fn random_coordination<R: Rng + ?Sized>(
    n_agents: usize,
    n_states: usize,
    n_actions: usize,
    rng: &mut R,
) -> CoordinationPolicy {
    let tables = (0..n_agents)
        .map(|k| {
            let rows = CoordinationPolicy::table_len(n_states, n_actions, k) / n_actions;
            (0..rows)
                .flat_map(|_| random_simplex(n_actions, rng))
                .collect()
        })
        .collect();
    CoordinationPolicy {
        n_states,
        n_actions,
        tables,
    }
}
