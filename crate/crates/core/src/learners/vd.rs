//! Tabular value decomposition: per-agent utility tables combined by a
//! mixer into a joint action value, trained on the TD loss
//! `½ E_D[(Q(s,a) - (TQ)(s,a))²]` with the target held fixed per step.
//!
//! Mixers:
//! - `vdn`: `Q = Σ_i Q_i(a_i)`.
//! - `monotonic`: `Q = Σ_i exp(w_i(s)) Q_i(a_i)`.
//! - `duplex`: `Q = Σ_i M_i + Σ_i λ_i(s,a) (Q_i(a_i) - M_i)` with
//!   `M_i = max Q_i` and `λ_i = exp(raw) + 1e-12`. The advantage terms are
//!   never positive and vanish at the local maxima, so local greedy actions
//!   are always jointly greedy.
//!
//! Derivatives of `max` are taken at the lowest-index maximizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{bellman_backup, evaluate_policy};
use crate::model::{JointActionCodec, Mmdp};
use crate::policy::{argmax, DeterministicJointPolicy, ValueTable};

use super::gd::Objective;

/// Additive floor keeping duplex importance weights strictly positive.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Relative tie tolerance of the greedy-consistency check.
pub const IGM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VdVariant {
    Vdn,
    Monotonic,
    Duplex,
}

impl VdVariant {
    pub const ALL: [VdVariant; 3] = [VdVariant::Vdn, VdVariant::Monotonic, VdVariant::Duplex];
}

/// Utility tables `q[(i * |S| + s) * |A| + a]`, monotonic mixing logits
/// `w[i * |S| + s]` and duplex raw importances `lam[(i * |S| + s) * |A|^n + joint]`.
/// `w` and `lam` are empty for variants that do not use them.
#[derive(Debug, Clone, PartialEq)]
pub struct VdParams {
    pub variant: VdVariant,
    pub n_agents: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub lam: Vec<f64>,
}

impl VdParams {
    pub fn zeros(variant: VdVariant, n_agents: usize, n_states: usize, n_actions: usize) -> Self {
        let nj = JointActionCodec::new(n_agents, n_actions).size();
        Self {
            variant,
            n_agents,
            n_states,
            n_actions,
            q: vec![0.0; n_agents * n_states * n_actions],
            w: match variant {
                VdVariant::Monotonic => vec![0.0; n_agents * n_states],
                _ => Vec::new(),
            },
            lam: match variant {
                VdVariant::Duplex => vec![0.0; n_agents * n_states * nj],
                _ => Vec::new(),
            },
        }
    }

    /// Every coordinate iid uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(
        variant: VdVariant,
        n_agents: usize,
        n_states: usize,
        n_actions: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(variant, n_agents, n_states, n_actions);
        let x: Vec<f64> = (0..p.dim())
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        p.set_flat(&x);
        p
    }

    pub fn codec(&self) -> JointActionCodec {
        JointActionCodec::new(self.n_agents, self.n_actions)
    }

    pub fn dim(&self) -> usize {
        self.q.len() + self.w.len() + self.lam.len()
    }

    /// Concatenation `q ‖ w ‖ lam`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(&self.q);
        x.extend_from_slice(&self.w);
        x.extend_from_slice(&self.lam);
        x
    }

    pub fn set_flat(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "flat parameter length");
        let (q, rest) = x.split_at(self.q.len());
        let (w, lam) = rest.split_at(self.w.len());
        self.q.copy_from_slice(q);
        self.w.copy_from_slice(w);
        self.lam.copy_from_slice(lam);
    }

    pub fn with_flat(&self, x: &[f64]) -> Self {
        let mut p = self.clone();
        p.set_flat(x);
        p
    }

    #[inline]
    pub fn q_index(&self, agent: usize, s: usize, a: usize) -> usize {
        (agent * self.n_states + s) * self.n_actions + a
    }

    #[inline]
    pub fn lam_index(&self, agent: usize, s: usize, joint: usize) -> usize {
        (agent * self.n_states + s) * self.codec().size() + joint
    }

    pub fn local(&self, agent: usize, s: usize) -> &[f64] {
        &self.q[self.q_index(agent, s, 0)..][..self.n_actions]
    }

    /// Effective duplex importance `λ_i(s, joint)`.
    pub fn lambda(&self, agent: usize, s: usize, joint: usize) -> f64 {
        self.lam[self.lam_index(agent, s, joint)].exp() + LAMBDA_FLOOR
    }

    /// Lowest-index local argmax of every agent in state `s`.
    pub fn local_greedy(&self, s: usize) -> Vec<usize> {
        (0..self.n_agents)
            .map(|i| argmax(self.local(i, s)))
            .collect()
    }

    /// Joint action formed by the local argmaxes, per state.
    pub fn greedy_joint(&self) -> Vec<usize> {
        let codec = self.codec();
        (0..self.n_states)
            .map(|s| codec.encode(&self.local_greedy(s)))
            .collect()
    }

    pub fn joint_q(&self) -> ValueTable {
        let nj = self.codec().size();
        let mut out = ValueTable::zeros(self.n_states, nj);
        for s in 0..self.n_states {
            for j in 0..nj {
                out.q[s * nj + j] = vd_forward(self, s, j);
            }
        }
        out
    }

    fn check(&self, n_agents: usize, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_agents != n_agents || self.n_states != n_states || self.n_actions != n_actions {
            return Err(Error::Shape(format!(
                "value-decomposition parameters are {}x{}x{}, expected {}x{}x{}",
                self.n_agents, self.n_states, self.n_actions, n_agents, n_states, n_actions
            )));
        }
        Ok(())
    }
}

/// Joint value `Q(s, joint)` under the parameter's mixer.
pub fn vd_forward(p: &VdParams, s: usize, joint: usize) -> f64 {
    let codec = p.codec();
    match p.variant {
        VdVariant::Vdn => (0..p.n_agents)
            .map(|i| p.local(i, s)[codec.component(joint, i)])
            .sum(),
        VdVariant::Monotonic => (0..p.n_agents)
            .map(|i| p.w[i * p.n_states + s].exp() * p.local(i, s)[codec.component(joint, i)])
            .sum(),
        VdVariant::Duplex => (0..p.n_agents)
            .map(|i| {
                let row = p.local(i, s);
                let max = row[argmax(row)];
                max + p.lambda(i, s, joint) * (row[codec.component(joint, i)] - max)
            })
            .sum(),
    }
}

fn check_dist(dist: &[f64], len: usize) -> Result<()> {
    if dist.len() != len {
        return Err(Error::Shape(format!(
            "sampling distribution has {} entries, expected {len}",
            dist.len()
        )));
    }
    if let Some(i) = dist.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sampling distribution must have full support (entry {i} is {})",
            dist[i]
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "sampling distribution sums to {sum}"
        )));
    }
    Ok(())
}

/// Uniform distribution over all `(state, joint action)` pairs.
pub fn uniform_dist(n_states: usize, n_joint: usize) -> Vec<f64> {
    vec![1.0 / (n_states * n_joint) as f64; n_states * n_joint]
}

/// `½ Σ D (Q - y)²` and its gradient with the target `y` held fixed.
pub fn vd_loss_and_grad_against(
    p: &VdParams,
    target: &ValueTable,
    dist: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let codec = p.codec();
    let nj = codec.size();
    if target.n_states != p.n_states || target.n_actions != nj {
        return Err(Error::Shape(
            "target table does not match parameters".into(),
        ));
    }
    check_dist(dist, p.n_states * nj)?;
    let nq = p.q.len();
    let nw = p.w.len();
    let mut grad = vec![0.0; p.dim()];
    let mut loss = 0.0;
    let mut acts = vec![0; p.n_agents];
    for s in 0..p.n_states {
        let maxes: Vec<usize> = (0..p.n_agents).map(|i| argmax(p.local(i, s))).collect();
        for j in 0..nj {
            let q = vd_forward(p, s, j);
            let d = dist[s * nj + j];
            let err = q - target.q[s * nj + j];
            loss += 0.5 * d * err * err;
            let delta = d * err;
            if delta == 0.0 {
                continue;
            }
            for (i, a) in acts.iter_mut().enumerate() {
                *a = codec.component(j, i);
            }
            for i in 0..p.n_agents {
                let qi = p.q_index(i, s, acts[i]);
                match p.variant {
                    VdVariant::Vdn => grad[qi] += delta,
                    VdVariant::Monotonic => {
                        let wi = i * p.n_states + s;
                        let scale = p.w[wi].exp();
                        grad[qi] += delta * scale;
                        grad[nq + wi] += delta * scale * p.q[qi];
                    }
                    VdVariant::Duplex => {
                        let li = p.lam_index(i, s, j);
                        let lam = p.lam[li].exp() + LAMBDA_FLOOR;
                        let mi = p.q_index(i, s, maxes[i]);
                        grad[mi] += delta * (1.0 - lam);
                        grad[qi] += delta * lam;
                        grad[nq + nw + li] += delta * p.lam[li].exp() * (p.q[qi] - p.q[mi]);
                    }
                }
            }
        }
    }
    Ok((loss, grad))
}

/// TD loss on a model: the target is one Bellman backup of the current
/// joint values (the payoff itself for one-step games). `dist` defaults to
/// uniform over `(state, joint action)`.
pub fn vd_loss_and_grad(p: &VdParams, m: &Mmdp, dist: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    p.check(m.n_agents, m.n_states, m.n_actions)?;
    let target = bellman_backup(&p.joint_q(), &m.joint_view())?;
    match dist {
        Some(d) => vd_loss_and_grad_against(p, &target, d),
        None => vd_loss_and_grad_against(p, &target, &uniform_dist(m.n_states, m.n_joint())),
    }
}

/// Whether every combination of local maximizers is a joint maximizer of
/// `joint_row`, with ties resolved at relative tolerance [`IGM_TOL`].
pub fn igm_holds(locals: &[&[f64]], joint_row: &[f64], codec: JointActionCodec) -> bool {
    let tie = |row: &[f64]| {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tol = IGM_TOL * max.abs().max(1.0);
        (max, tol)
    };
    let sets: Vec<Vec<usize>> = locals
        .iter()
        .map(|row| {
            let (max, tol) = tie(row);
            (0..row.len()).filter(|&a| row[a] >= max - tol).collect()
        })
        .collect();
    let (jmax, jtol) = tie(joint_row);
    let mut idx = vec![0; sets.len()];
    let mut acts = vec![0; sets.len()];
    loop {
        for (k, set) in sets.iter().enumerate() {
            acts[k] = set[idx[k]];
        }
        if joint_row[codec.encode(&acts)] < jmax - jtol {
            return false;
        }
        let mut k = sets.len();
        loop {
            if k == 0 {
                return true;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sets[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Greedy consistency of the decomposition in state `s`.
pub fn igm_check(p: &VdParams, s: usize) -> bool {
    let nj = p.codec().size();
    let joint: Vec<f64> = (0..nj).map(|j| vd_forward(p, s, j)).collect();
    let locals: Vec<&[f64]> = (0..p.n_agents).map(|i| p.local(i, s)).collect();
    igm_holds(&locals, &joint, p.codec())
}

/// Duplex parameters that reproduce `target` exactly and whose local
/// argmaxes are exactly `a_star` in every state.
///
/// `Q_i(a*_i) = v/n` and `Q_i(b) = v/n - 1` otherwise, with `v = target(a*)`;
/// each joint action disagreeing with `a*` in `k` agents gives those agents
/// importance `(v - target(a)) / k`. Ties with `v` get the floor.
pub fn duplex_decompose(
    target: &ValueTable,
    a_star: &[usize],
    n_agents: usize,
    n_actions: usize,
) -> Result<VdParams> {
    let codec = JointActionCodec::new(n_agents, n_actions);
    let nj = codec.size();
    if target.n_actions != nj || a_star.len() != target.n_states {
        return Err(Error::Shape(
            "target or greedy actions do not match the action space".into(),
        ));
    }
    let mut p = VdParams::zeros(VdVariant::Duplex, n_agents, target.n_states, n_actions);
    let n = n_agents as f64;
    for (s, &star) in a_star.iter().enumerate() {
        let row = target.row(s);
        let v = row[star];
        if row.iter().any(|&x| x > v) {
            return Err(Error::InvalidArgument(format!(
                "joint action {star} is not a maximizer of the target in state {s}"
            )));
        }
        let star_acts = codec.decode(star);
        for i in 0..n_agents {
            for a in 0..n_actions {
                let idx = p.q_index(i, s, a);
                p.q[idx] = if a == star_acts[i] {
                    v / n
                } else {
                    v / n - 1.0
                };
            }
        }
        for j in 0..nj {
            let acts = codec.decode(j);
            let k = acts.iter().zip(&star_acts).filter(|(a, b)| a != b).count();
            if k == 0 {
                continue;
            }
            let lam = (v - row[j]) / k as f64;
            let raw = (lam - LAMBDA_FLOOR).max(LAMBDA_FLOOR).ln();
            for i in 0..n_agents {
                if acts[i] != star_acts[i] {
                    let li = p.lam_index(i, s, j);
                    p.lam[li] = raw;
                }
            }
        }
    }
    Ok(p)
}

/// [`vd_loss_and_grad`] as a gradient-descent objective. Progress reports
/// the exact return of the local-greedy joint policy.
pub struct VdObjective<'a> {
    pub model: &'a Mmdp,
    pub dist: Vec<f64>,
    shape: VdParams,
}

impl<'a> VdObjective<'a> {
    pub fn new(model: &'a Mmdp, variant: VdVariant) -> Self {
        Self {
            model,
            dist: uniform_dist(model.n_states, model.n_joint()),
            shape: VdParams::zeros(variant, model.n_agents, model.n_states, model.n_actions),
        }
    }

    pub fn with_dist(mut self, dist: Vec<f64>) -> Result<Self> {
        check_dist(&dist, self.model.n_states * self.model.n_joint())?;
        self.dist = dist;
        Ok(self)
    }

    pub fn params(&self, x: &[f64]) -> VdParams {
        self.shape.with_flat(x)
    }

    pub fn greedy_return(&self, p: &VdParams) -> Result<f64> {
        let mu = DeterministicJointPolicy {
            n_agents: p.n_agents,
            n_actions: p.n_actions,
            actions: p.greedy_joint(),
        };
        evaluate_policy(self.model, &mu)
    }
}

impl Objective for VdObjective<'_> {
    fn dim(&self) -> usize {
        self.shape.dim()
    }

    fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        vd_loss_and_grad(&self.params(x), self.model, Some(&self.dist))
    }

    fn progress(&self, x: &[f64], _loss: f64) -> Result<(f64, Vec<usize>)> {
        let p = self.params(x);
        Ok((self.greedy_return(&p)?, p.greedy_joint()))
    }
}
