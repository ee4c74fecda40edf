//! Transform, learn, distill: solve the sequential single-agent rewrite of
//! a multi-agent model, read the result back as a coordination policy and
//! distill it into independent per-agent policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::evaluate_policy;
use crate::model::Mmdp;
use crate::policy::{CoordinationPolicy, DecentralizedPolicySet, StochasticPolicy};
use crate::transform::{greedy_distill, lower_policy, sequential_transform};

use super::single::{q_learning, softmax_pg, value_iteration, PgConfig, QLearningConfig};
use super::trace::TrainTrace;

/// The single-agent learner run on the transformed model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sarl {
    Vi,
    QLearning,
    SoftmaxPg,
    ClippedPg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TadConfig {
    pub vi_tol: f64,
    pub q_learning: QLearningConfig,
    pub pg: PgConfig,
    /// Clipping radius used by [`Sarl::ClippedPg`].
    pub clip: f64,
}

impl Default for TadConfig {
    fn default() -> Self {
        Self {
            vi_tol: 1e-10,
            q_learning: QLearningConfig::default(),
            pg: PgConfig::default(),
            clip: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TadOutcome {
    pub policy: DecentralizedPolicySet,
    pub coordination: CoordinationPolicy,
    /// Exact return of `policy` on the original model.
    pub value: f64,
    /// Learner rows on the transformed model (policy-gradient learners
    /// only), then one row for the distilled policy on the original model.
    pub trace: TrainTrace,
}

fn final_row(trace: &mut TrainTrace, step: usize, value: f64, policy: &DecentralizedPolicySet) {
    trace.push(step, -value, 0.0, value, policy.greedy_joint());
}

pub fn tad_run<R: Rng + ?Sized>(
    m: &Mmdp,
    sarl: Sarl,
    cfg: &TadConfig,
    rng: &mut R,
) -> Result<TadOutcome> {
    m.ensure_valid()?;
    let g = sequential_transform(m)?;
    let mut trace = TrainTrace::default();
    let (policy_g, steps) = match sarl {
        Sarl::Vi => {
            let (_, greedy) = value_iteration(&g, cfg.vi_tol)?;
            (StochasticPolicy::deterministic(g.n_actions, &greedy), 0)
        }
        Sarl::QLearning => {
            let q = q_learning(&g, &cfg.q_learning, rng)?;
            (
                StochasticPolicy::deterministic(g.n_actions, &q.greedy()),
                cfg.q_learning.sweeps,
            )
        }
        Sarl::SoftmaxPg | Sarl::ClippedPg => {
            let pg = PgConfig {
                clip: if sarl == Sarl::ClippedPg {
                    Some(cfg.clip)
                } else {
                    None
                },
                ..cfg.pg
            };
            let (pi, t) = softmax_pg(&g, &pg)?;
            trace = t;
            (pi, pg.steps)
        }
    };
    let coordination = lower_policy(&policy_g, m.n_agents)?;
    let policy = greedy_distill(&coordination, m)?;
    let value = evaluate_policy(m, &policy)?;
    let step = trace.steps.last().map_or(steps, |s| s + 1);
    final_row(&mut trace, step, value, &policy);
    Ok(TadOutcome {
        policy,
        coordination,
        value,
        trace,
    })
}
