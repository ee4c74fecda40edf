//! Turning a coordination policy into independent per-agent policies.

use crate::error::{Error, Result};
use crate::model::{JointActionCodec, Mmdp};
use crate::policy::{argmax, CoordinationPolicy, DecentralizedPolicySet, JointPolicy};

fn check_against(pc: &CoordinationPolicy, m: &Mmdp) -> Result<()> {
    if pc.n_states != m.n_states || pc.n_actions != m.n_actions || pc.n_agents() != m.n_agents {
        return Err(Error::Shape(format!(
            "coordination policy ({} states, {} agents, {} actions) does not match model \
             ({} states, {} agents, {} actions)",
            pc.n_states,
            pc.n_agents(),
            pc.n_actions,
            m.n_states,
            m.n_agents,
            m.n_actions
        )));
    }
    pc.check_rows()
}

/// One-hot copy of `pc` choosing the lowest-index most likely action in
/// every conditional row.
pub fn determinize(pc: &CoordinationPolicy) -> CoordinationPolicy {
    let na = pc.n_actions;
    let tables = pc
        .tables
        .iter()
        .map(|t| {
            let mut out = vec![0.0; t.len()];
            for (row, o) in t.chunks(na).zip(out.chunks_mut(na)) {
                o[argmax(row)] = 1.0;
            }
            out
        })
        .collect();
    CoordinationPolicy {
        n_states: pc.n_states,
        n_actions: na,
        tables,
    }
}

/// Determinizes `pc`, then lets each agent replay the choices of its
/// predecessors: `η_k(s) = μ_k(s, η_0(s), .., η_{k-1}(s))`. The result has
/// the same joint behavior (hence value) as the determinized policy.
pub fn greedy_distill(pc: &CoordinationPolicy, m: &Mmdp) -> Result<DecentralizedPolicySet> {
    check_against(pc, m)?;
    let n = pc.n_agents();
    let actions: Vec<Vec<usize>> = {
        let mut per_agent = vec![vec![0; pc.n_states]; n];
        for s in 0..pc.n_states {
            let mut prefix = 0;
            for (k, slot) in per_agent.iter_mut().enumerate() {
                let a = argmax(pc.row(k, s, prefix));
                slot[s] = a;
                prefix = prefix * pc.n_actions + a;
            }
        }
        per_agent
    };
    Ok(DecentralizedPolicySet::deterministic(
        pc.n_actions,
        &actions,
    ))
}

/// Settings for cross-entropy distillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDistillConfig {
    pub lr: f64,
    pub steps: usize,
}

impl Default for KlDistillConfig {
    fn default() -> Self {
        Self {
            lr: 2.0,
            steps: 5000,
        }
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Per-agent marginals of the joint distribution induced by `pc`.
fn marginals(pc: &CoordinationPolicy) -> Vec<Vec<f64>> {
    let joint = pc.joint_table();
    let n = pc.n_agents();
    let na = pc.n_actions;
    let codec = JointActionCodec::new(n, na);
    let mut out = vec![vec![0.0; pc.n_states * na]; n];
    for s in 0..pc.n_states {
        for (j, &p) in joint.row(s).iter().enumerate() {
            for (i, m) in out.iter_mut().enumerate() {
                m[s * na + codec.component(j, i)] += p;
            }
        }
    }
    out
}

/// Gradient descent on the state-averaged cross-entropy
/// `E_{a ~ pc}[-Σ_i log π_i(a_i | s)]` over softmax tables, from uniform
/// logits. Returns the distilled policies and the loss before every step
/// plus the final loss.
///
/// The objective separates into per-agent cross-entropies against the
/// marginals of `pc`, so its infimum is the sum of marginal entropies and
/// the optimum is the product of marginals.
pub fn kl_distill(
    pc: &CoordinationPolicy,
    m: &Mmdp,
    cfg: KlDistillConfig,
) -> Result<(DecentralizedPolicySet, Vec<f64>)> {
    if !(cfg.lr > 0.0) || cfg.steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "kl_distill needs lr > 0 and steps > 0 (got {}, {})",
            cfg.lr, cfg.steps
        )));
    }
    check_against(pc, m)?;
    let na = pc.n_actions;
    let ns = pc.n_states;
    let targets = marginals(pc);
    let mut logits = vec![vec![0.0; ns * na]; targets.len()];
    let mut probs = logits.clone();
    let inv_s = 1.0 / ns as f64;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let mut loss = 0.0;
        for (i, target) in targets.iter().enumerate() {
            for s in 0..ns {
                let (l, p) = (&logits[i][s * na..][..na], &mut probs[i][s * na..][..na]);
                softmax_into(l, p);
                for a in 0..na {
                    if target[s * na + a] > 0.0 {
                        loss -= target[s * na + a] * p[a].ln() * inv_s;
                    }
                }
            }
        }
        trace.push(loss);
        if step == cfg.steps {
            break;
        }
        for (i, target) in targets.iter().enumerate() {
            for x in 0..ns * na {
                logits[i][x] -= cfg.lr * (probs[i][x] - target[x]) * inv_s;
            }
        }
    }
    Ok((
        DecentralizedPolicySet {
            n_states: ns,
            n_actions: na,
            tables: probs,
        },
        trace,
    ))
}
