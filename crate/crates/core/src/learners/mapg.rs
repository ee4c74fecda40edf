//! Multi-agent policy gradient: independent softmax policies trained by
//! gradient descent on the negated exact return.

use crate::error::{Error, Result};
use crate::eval::return_and_gradient;
use crate::model::Mmdp;
use crate::policy::{DecentralizedPolicySet, JointPolicy};

use super::gd::Objective;

/// Logits `logits[(i * |S| + s) * |A| + a]`; agent `i` plays
/// `softmax(logits[i, s, ..])`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapgParams {
    pub n_agents: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub logits: Vec<f64>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Chain rule through a softmax row: `∂/∂θ_b = π_b (g_b - Σ_a π_a g_a)`.
pub(crate) fn softmax_backward(pi: &[f64], g: &[f64], out: &mut [f64]) {
    let mean: f64 = pi.iter().zip(g).map(|(p, g)| p * g).sum();
    for ((o, p), g) in out.iter_mut().zip(pi).zip(g) {
        *o = p * (g - mean);
    }
}

impl MapgParams {
    pub fn uniform(n_agents: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            n_agents,
            n_states,
            n_actions,
            logits: vec![0.0; n_agents * n_states * n_actions],
        }
    }

    /// Logit `scale` on each agent's component of `joint[s]`, zero elsewhere.
    pub fn concentrated(n_agents: usize, n_actions: usize, joint: &[usize], scale: f64) -> Self {
        let mut p = Self::uniform(n_agents, joint.len(), n_actions);
        let codec = crate::model::JointActionCodec::new(n_agents, n_actions);
        for (s, &j) in joint.iter().enumerate() {
            for i in 0..n_agents {
                let idx = p.index(i, s, codec.component(j, i));
                p.logits[idx] = scale;
            }
        }
        p
    }

    pub fn from_flat(like: &Self, logits: &[f64]) -> Self {
        Self {
            logits: logits.to_vec(),
            ..like.clone_shape()
        }
    }

    fn clone_shape(&self) -> Self {
        Self {
            n_agents: self.n_agents,
            n_states: self.n_states,
            n_actions: self.n_actions,
            logits: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_agents * self.n_states * self.n_actions
    }

    #[inline]
    pub fn index(&self, agent: usize, s: usize, a: usize) -> usize {
        (agent * self.n_states + s) * self.n_actions + a
    }

    pub fn row(&self, agent: usize, s: usize) -> &[f64] {
        &self.logits[self.index(agent, s, 0)..][..self.n_actions]
    }

    pub fn policies(&self) -> DecentralizedPolicySet {
        let tables = (0..self.n_agents)
            .map(|i| {
                (0..self.n_states)
                    .flat_map(|s| softmax(self.row(i, s)))
                    .collect()
            })
            .collect();
        DecentralizedPolicySet {
            n_states: self.n_states,
            n_actions: self.n_actions,
            tables,
        }
    }

    fn check(&self, m: &Mmdp) -> Result<()> {
        if self.n_agents != m.n_agents
            || self.n_states != m.n_states
            || self.n_actions != m.n_actions
            || self.logits.len() != self.dim()
        {
            return Err(Error::Shape(
                "policy parameters do not match the model".into(),
            ));
        }
        Ok(())
    }
}

/// `J` and the per-agent policy-space gradient
/// `g_i(s, a_i) = Σ_{a: a_i fixed} ∂J/∂π(a|s) Π_{j≠i} π_j(a_j|s)`, laid out
/// like the logits.
pub fn mapg_policy_gradient(p: &MapgParams, m: &Mmdp) -> Result<(f64, Vec<f64>)> {
    p.check(m)?;
    let pols = p.policies();
    let (j, g_joint) = return_and_gradient(&m.joint_view(), &pols.joint_table())?;
    let codec = m.codec();
    let nj = codec.size();
    let mut g = vec![0.0; p.dim()];
    let mut acts = vec![0; p.n_agents];
    for s in 0..p.n_states {
        for joint in 0..nj {
            let gj = g_joint[s * nj + joint];
            if gj == 0.0 {
                continue;
            }
            for (i, a) in acts.iter_mut().enumerate() {
                *a = codec.component(joint, i);
            }
            for i in 0..p.n_agents {
                let mut w = gj;
                for (k, &ak) in acts.iter().enumerate() {
                    if k != i {
                        w *= pols.prob(k, s, ak);
                    }
                }
                g[p.index(i, s, acts[i])] += w;
            }
        }
    }
    Ok((j, g))
}

/// Loss `-J(π_θ)` and its exact gradient with respect to the logits.
pub fn mapg_loss_and_grad(p: &MapgParams, m: &Mmdp) -> Result<(f64, Vec<f64>)> {
    let (j, g) = mapg_policy_gradient(p, m)?;
    let mut grad = vec![0.0; p.dim()];
    for i in 0..p.n_agents {
        for s in 0..p.n_states {
            let start = p.index(i, s, 0);
            let pi = softmax(p.row(i, s));
            softmax_backward(
                &pi,
                &g[start..][..p.n_actions],
                &mut grad[start..][..p.n_actions],
            );
        }
    }
    for x in &mut grad {
        *x = -*x;
    }
    Ok((-j, grad))
}

/// [`mapg_loss_and_grad`] as a gradient-descent objective over flat logits.
/// Progress reports the exact return of the stochastic policy.
pub struct MapgObjective<'a> {
    pub model: &'a Mmdp,
    shape: MapgParams,
}

impl<'a> MapgObjective<'a> {
    pub fn new(model: &'a Mmdp) -> Self {
        Self {
            model,
            shape: MapgParams::uniform(model.n_agents, model.n_states, model.n_actions)
                .clone_shape(),
        }
    }

    pub fn params(&self, x: &[f64]) -> MapgParams {
        MapgParams::from_flat(&self.shape, x)
    }
}

impl Objective for MapgObjective<'_> {
    fn dim(&self) -> usize {
        self.shape.dim()
    }

    fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        mapg_loss_and_grad(&self.params(x), self.model)
    }

    fn progress(&self, x: &[f64], loss: f64) -> Result<(f64, Vec<usize>)> {
        Ok((-loss, self.params(x).policies().greedy_joint()))
    }
}
