//! Single-agent learners, used on the sequentially transformed model.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{bellman_backup_masked, return_and_gradient, value_iteration_view};
use crate::model::Mdp;
use crate::policy::{StochasticPolicy, ValueTable};

use super::gd::l2_norm;
use super::mapg::{softmax, softmax_backward};
use super::trace::TrainTrace;

/// Optimal action values to sup-norm residual `tol` and their greedy policy.
pub fn value_iteration(mdp: &Mdp, tol: f64) -> Result<(ValueTable, Vec<usize>)> {
    mdp.ensure_valid()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (q, _) = value_iteration_view(&mdp.view(), tol);
    let greedy = q.greedy();
    Ok((q, greedy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant {
        lr: f64,
    },
    /// `1 / (1 + n)^omega` after `n` previous updates of the same pair.
    Polynomial {
        omega: f64,
    },
}

impl LrSchedule {
    fn at(&self, n: u64) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::Polynomial { omega } => (1.0 + n as f64).powf(-omega),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QLearningMode {
    /// Every pair updated each sweep towards its expected backup.
    Synchronous,
    /// Each sweep draws `|S||A|` uniform pairs and one sampled successor each.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLearningConfig {
    pub sweeps: usize,
    pub mode: QLearningMode,
    pub schedule: LrSchedule,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            sweeps: 2000,
            mode: QLearningMode::Synchronous,
            schedule: LrSchedule::Constant { lr: 0.5 },
        }
    }
}

/// Tabular Q-learning. Terminal backups of episodic models (see
/// [`crate::model::ModelView::bootstrap_mask`]) drop the continuation.
pub fn q_learning<R: Rng + ?Sized>(
    mdp: &Mdp,
    cfg: &QLearningConfig,
    rng: &mut R,
) -> Result<ValueTable> {
    mdp.ensure_valid()?;
    let view = mdp.view();
    let boot = view.bootstrap_mask();
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = ValueTable::zeros(ns, na);
    let mut visits = vec![0u64; ns * na];
    match cfg.mode {
        QLearningMode::Synchronous => {
            for sweep in 0..cfg.sweeps {
                let alpha = cfg.schedule.at(sweep as u64);
                let target = bellman_backup_masked(&q, &view, &boot);
                for (x, t) in q.q.iter_mut().zip(&target.q) {
                    *x += alpha * (t - *x);
                }
            }
        }
        QLearningMode::Sampled => {
            let successors: Vec<Option<WeightedIndex<f64>>> = (0..ns * na)
                .map(|sa| WeightedIndex::new(mdp.p_row(sa / na, sa % na)).ok())
                .collect();
            for _ in 0..cfg.sweeps {
                for _ in 0..ns * na {
                    let sa = rng.gen_range(0..ns * na);
                    let s = sa / na;
                    let cont = match (&successors[sa], boot[s]) {
                        (Some(dist), true) => {
                            let next = dist.sample(rng);
                            q.row(next)
                                .iter()
                                .cloned()
                                .fold(f64::NEG_INFINITY, f64::max)
                        }
                        _ => 0.0,
                    };
                    let target = mdp.reward[sa] + mdp.gamma * cont;
                    let alpha = cfg.schedule.at(visits[sa]);
                    visits[sa] += 1;
                    q.q[sa] += alpha * (target - q.q[sa]);
                }
            }
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgConfig {
    pub lr: f64,
    pub steps: usize,
    /// Clipping radius of the ratio surrogate; `None` for plain gradient ascent.
    pub clip: Option<f64>,
    /// Surrogate ascent steps per outer iteration when clipping.
    pub epochs: usize,
    pub record_every: usize,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            steps: 2000,
            clip: None,
            epochs: 4,
            record_every: 1,
        }
    }
}

fn policy_of(logits: &[f64], ns: usize, na: usize) -> StochasticPolicy {
    StochasticPolicy {
        n_states: ns,
        n_actions: na,
        probs: logits.chunks(na).flat_map(softmax).collect(),
    }
}

fn logit_gradient(pi: &StochasticPolicy, g: &[f64]) -> Vec<f64> {
    let na = pi.n_actions;
    let mut out = vec![0.0; g.len()];
    for s in 0..pi.n_states {
        softmax_backward(pi.row(s), &g[s * na..][..na], &mut out[s * na..][..na]);
    }
    out
}

/// Gradient of `Σ_s d(s) Σ_a π_old(a|s) min(ρ A, clip(ρ, 1-ε, 1+ε) A)` with
/// respect to `π_θ`, where `ρ = π_θ / π_old`. `dq[s, a] = d(s) Q(s, a)` is
/// the exact return gradient at `π_old`.
fn clipped_surrogate_grad(
    pi: &StochasticPolicy,
    old: &StochasticPolicy,
    dq: &[f64],
    eps: f64,
) -> Vec<f64> {
    let na = pi.n_actions;
    let mut g = vec![0.0; pi.probs.len()];
    for s in 0..pi.n_states {
        let dv: f64 = old
            .row(s)
            .iter()
            .zip(&dq[s * na..][..na])
            .map(|(p, x)| p * x)
            .sum();
        for a in 0..na {
            let i = s * na + a;
            let adv = dq[i] - dv;
            let ratio = if old.probs[i] > 0.0 {
                pi.probs[i] / old.probs[i]
            } else {
                1.0
            };
            if (adv >= 0.0 && ratio < 1.0 + eps) || (adv < 0.0 && ratio > 1.0 - eps) {
                g[i] = adv;
            }
        }
    }
    g
}

/// Exact softmax policy gradient from uniform logits. Each trace row holds
/// the loss `-J`, the norm of the exact policy gradient, `J` and the greedy
/// action per state of the policy at that step.
pub fn softmax_pg(mdp: &Mdp, cfg: &PgConfig) -> Result<(StochasticPolicy, TrainTrace)> {
    mdp.ensure_valid()?;
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(
            "learning rate must be positive".into(),
        ));
    }
    if let Some(eps) = cfg.clip {
        if !(eps > 0.0) || cfg.epochs == 0 {
            return Err(Error::InvalidArgument(
                "clipping needs a positive radius and at least one epoch".into(),
            ));
        }
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let view = mdp.view();
    let mut logits = vec![0.0; ns * na];
    let mut trace = TrainTrace::default();
    let every = cfg.record_every.max(1);
    for step in 0..=cfg.steps {
        let pi = policy_of(&logits, ns, na);
        let (j, g) = return_and_gradient(&view, &pi)?;
        let grad = logit_gradient(&pi, &g);
        let norm = l2_norm(&grad);
        if !j.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite { step, value: j });
        }
        if step == cfg.steps || step % every == 0 {
            trace.push(step, -j, norm, j, pi.greedy());
        }
        if step == cfg.steps {
            return Ok((pi, trace));
        }
        match cfg.clip {
            None => {
                for (l, d) in logits.iter_mut().zip(&grad) {
                    *l += cfg.lr * d;
                }
            }
            Some(eps) => {
                for _ in 0..cfg.epochs {
                    let cur = policy_of(&logits, ns, na);
                    let sg = clipped_surrogate_grad(&cur, &pi, &g, eps);
                    let lg = logit_gradient(&cur, &sg);
                    for (l, d) in logits.iter_mut().zip(&lg) {
                        *l += cfg.lr * d;
                    }
                }
            }
        }
    }
    unreachable!()
}
