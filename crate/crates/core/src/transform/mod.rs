//! The sequential transformation: an `n`-agent model rewritten as a
//! single-agent MDP in which agents act one at a time.
//!
//! Virtual states are `(k, s, prefix)` with `k` the number of agents that
//! have already acted and `prefix ∈ A^k` their encoded actions. Block `k`
//! starts at `|S| (|A|^k - 1) / (|A| - 1)` (or `|S| k` when `|A| = 1`) and
//! holds `s * |A|^k + prefix`. Intermediate steps are deterministic with zero
//! reward; the last agent's action emits the original reward and moves to
//! block 0. The per-step discount is `γ^{1/n}`.

mod distill;

pub use distill::{determinize, greedy_distill, kl_distill, KlDistillConfig};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{evaluate_mdp, evaluate_policy};
use crate::model::{checked_pow, Mdp, Mmdp};
use crate::policy::{CoordinationPolicy, StochasticPolicy};

/// Largest dense transition tensor (`|S'| * |A| * |S'|` entries) the
/// transform will build.
pub const TRANSFORM_LIMIT: u128 = 100_000_000;

/// Index arithmetic for the layered state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub n_states: usize,
    pub n_agents: usize,
    pub n_actions: usize,
}

impl LayerLayout {
    pub fn new(n_states: usize, n_agents: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_agents,
            n_actions,
        }
    }

    /// `|A|^k` virtual states per original state in block `k`.
    pub fn prefixes(&self, k: usize) -> usize {
        checked_pow(self.n_actions, k).unwrap()
    }

    pub fn offset(&self, k: usize) -> usize {
        if self.n_actions == 1 {
            self.n_states * k
        } else {
            self.n_states * (self.prefixes(k) - 1) / (self.n_actions - 1)
        }
    }

    pub fn index(&self, k: usize, s: usize, prefix: usize) -> usize {
        self.offset(k) + s * self.prefixes(k) + prefix
    }

    pub fn total_states(&self) -> usize {
        self.offset(self.n_agents)
    }

    /// Inverse of [`index`](Self::index).
    pub fn locate(&self, idx: usize) -> (usize, usize, usize) {
        let mut k = 0;
        while self.offset(k + 1) <= idx {
            k += 1;
        }
        let within = idx - self.offset(k);
        let p = self.prefixes(k);
        (k, within / p, within % p)
    }

    fn checked_total(&self) -> Option<u128> {
        let a = self.n_actions as u128;
        let mut block = self.n_states as u128;
        let mut total: u128 = 0;
        for _ in 0..self.n_agents {
            total = total.checked_add(block)?;
            block = block.checked_mul(a)?;
        }
        Some(total)
    }
}

/// Builds the layered single-agent MDP.
pub fn sequential_transform(m: &Mmdp) -> Result<Mdp> {
    m.ensure_valid()?;
    let layout = LayerLayout::new(m.n_states, m.n_agents, m.n_actions);
    let total = layout.checked_total().unwrap_or(u128::MAX);
    let dense = total
        .checked_mul(total)
        .and_then(|x| x.checked_mul(m.n_actions as u128))
        .unwrap_or(u128::MAX);
    if dense > TRANSFORM_LIMIT {
        return Err(Error::SizeGuard {
            what: "transformed transition entries",
            size: dense,
            limit: TRANSFORM_LIMIT,
        });
    }
    let ns2 = layout.total_states();
    let na = m.n_actions;
    let n = m.n_agents;
    let mut transition = vec![0.0; ns2 * na * ns2];
    let mut reward = vec![0.0; ns2 * na];
    for k in 0..n {
        for s in 0..m.n_states {
            for prefix in 0..layout.prefixes(k) {
                let from = layout.index(k, s, prefix);
                for a in 0..na {
                    let sa = from * na + a;
                    let row = &mut transition[sa * ns2..][..ns2];
                    if k + 1 < n {
                        row[layout.index(k + 1, s, prefix * na + a)] = 1.0;
                    } else {
                        let joint = prefix * na + a;
                        reward[sa] = m.r(s, joint);
                        for (next, &p) in m.p_row(s, joint).iter().enumerate() {
                            row[layout.index(0, next, 0)] = p;
                        }
                    }
                }
            }
        }
    }
    let mut initial_dist = vec![0.0; ns2];
    initial_dist[..m.n_states].copy_from_slice(&m.initial_dist);
    Ok(Mdp {
        n_states: ns2,
        n_actions: na,
        transition,
        reward,
        gamma: if n == 1 {
            m.gamma
        } else {
            m.gamma.powf(1.0 / n as f64)
        },
        initial_dist,
        horizon: m.horizon.map(|h| h * n),
    })
}

fn layered_violation(msg: String) -> Error {
    Error::NotLayered(msg)
}

/// Recovers the multi-agent model from a layered MDP, checking the layered
/// structure exactly. The discount is recovered as `γ'^n`, which agrees with
/// the original to within floating-point rounding of the root.
pub fn inverse_transform(mdp: &Mdp, n_agents: usize) -> Result<Mmdp> {
    if n_agents == 0 {
        return Err(Error::InvalidArgument("n_agents must be positive".into()));
    }
    let na = mdp.n_actions;
    let blocks = LayerLayout::new(1, n_agents, na)
        .checked_total()
        .filter(|&b| b > 0 && b <= mdp.n_states as u128)
        .ok_or_else(|| {
            layered_violation(format!(
                "{} states cannot hold {n_agents} layers",
                mdp.n_states
            ))
        })? as usize;
    if mdp.n_states % blocks != 0 {
        return Err(layered_violation(format!(
            "{} states is not a multiple of the per-state layer size {blocks}",
            mdp.n_states
        )));
    }
    let ns = mdp.n_states / blocks;
    let layout = LayerLayout::new(ns, n_agents, na);
    let ns2 = mdp.n_states;
    let nj = layout.prefixes(n_agents);
    let mut transition = vec![0.0; ns * nj * ns];
    let mut reward = vec![0.0; ns * nj];
    for idx in 0..ns2 {
        let (k, s, prefix) = layout.locate(idx);
        for a in 0..na {
            let row = mdp.p_row(idx, a);
            let r = mdp.r(idx, a);
            if k + 1 < n_agents {
                let target = layout.index(k + 1, s, prefix * na + a);
                if r != 0.0 {
                    return Err(layered_violation(format!(
                        "intermediate reward {r} at virtual state {idx}, action {a}"
                    )));
                }
                if row
                    .iter()
                    .enumerate()
                    .any(|(j, &p)| p != if j == target { 1.0 } else { 0.0 })
                {
                    return Err(layered_violation(format!(
                        "intermediate transition at virtual state {idx}, action {a} is not the layer step"
                    )));
                }
            } else {
                if row[ns..].iter().any(|&p| p != 0.0) {
                    return Err(layered_violation(format!(
                        "final-layer transition at virtual state {idx}, action {a} leaves block 0"
                    )));
                }
                let joint = prefix * na + a;
                reward[s * nj + joint] = r;
                transition[(s * nj + joint) * ns..][..ns].copy_from_slice(&row[..ns]);
            }
        }
    }
    if mdp.initial_dist[ns..].iter().any(|&p| p != 0.0) {
        return Err(layered_violation("initial mass outside block 0".into()));
    }
    let horizon = match mdp.horizon {
        Some(h) if h % n_agents != 0 => {
            return Err(layered_violation(format!(
                "horizon {h} is not a multiple of {n_agents}"
            )))
        }
        h => h.map(|h| h / n_agents),
    };
    let gamma = if n_agents == 1 {
        mdp.gamma
    } else {
        mdp.gamma.powi(n_agents as i32)
    };
    Mmdp::new(
        ns,
        n_agents,
        na,
        transition,
        reward,
        gamma,
        mdp.initial_dist[..ns].to_vec(),
        horizon,
    )
}

/// The policy on the layered MDP that plays agent `k`'s conditional table
/// in block `k`.
pub fn lift_policy(pc: &CoordinationPolicy) -> Result<StochasticPolicy> {
    pc.check_rows()?;
    let layout = LayerLayout::new(pc.n_states, pc.n_agents(), pc.n_actions);
    let mut probs = Vec::with_capacity(layout.total_states() * pc.n_actions);
    for t in &pc.tables {
        probs.extend_from_slice(t);
    }
    Ok(StochasticPolicy {
        n_states: layout.total_states(),
        n_actions: pc.n_actions,
        probs,
    })
}

/// Inverse of [`lift_policy`]: splits a layered-MDP policy into
/// per-agent conditional tables.
pub fn lower_policy(p: &StochasticPolicy, n_agents: usize) -> Result<CoordinationPolicy> {
    let blocks = LayerLayout::new(1, n_agents, p.n_actions)
        .checked_total()
        .unwrap_or(u128::MAX);
    if n_agents == 0 || p.n_states as u128 % blocks != 0 {
        return Err(Error::Shape(format!(
            "{} virtual states do not form {n_agents} layers over {} actions",
            p.n_states, p.n_actions
        )));
    }
    p.check_rows()?;
    let layout = LayerLayout::new(p.n_states / blocks as usize, n_agents, p.n_actions);
    let tables = (0..n_agents)
        .map(|k| {
            let start = layout.offset(k) * p.n_actions;
            let len = CoordinationPolicy::table_len(layout.n_states, p.n_actions, k);
            p.probs[start..start + len].to_vec()
        })
        .collect();
    Ok(CoordinationPolicy {
        n_states: layout.n_states,
        n_actions: p.n_actions,
        tables,
    })
}

/// Both sides of the value relation `J_M(π_c) = γ^{(1-n)/n} J_Γ(π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueRelation {
    pub j_original: f64,
    pub j_transformed: f64,
    pub scale: f64,
    pub residual: f64,
}

pub fn value_relation_check(m: &Mmdp, pc: &CoordinationPolicy) -> Result<ValueRelation> {
    if m.gamma <= 0.0 {
        return Err(Error::InvalidArgument(
            "the value relation needs a positive discount".into(),
        ));
    }
    let gm = sequential_transform(m)?;
    let j_original = evaluate_policy(m, pc)?;
    let j_transformed = evaluate_mdp(&gm, &lift_policy(pc)?)?;
    let n = m.n_agents as f64;
    let scale = m.gamma.powf((1.0 - n) / n);
    Ok(ValueRelation {
        j_original,
        j_transformed,
        scale,
        residual: (j_original - scale * j_transformed).abs(),
    })
}

/// State-action counts of a model and of its transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SizeReport {
    pub original_sa: u128,
    pub transformed_sa: u128,
    /// `transformed_sa <= 2 * original_sa`.
    pub bound: bool,
}

/// Saturates at `u128::MAX` rather than overflowing.
pub fn size_report(m: &Mmdp) -> SizeReport {
    let s = m.n_states as u128;
    let a = m.n_actions as u128;
    let n = m.n_agents as u32;
    let sat = |x: Option<u128>| x.unwrap_or(u128::MAX);
    let original_sa = sat(a.checked_pow(n).and_then(|p| p.checked_mul(s)));
    let transformed_sa = if a == 1 {
        sat(s.checked_mul(n as u128))
    } else {
        sat(a
            .checked_pow(n)
            .map(|p| (p - 1) / (a - 1))
            .and_then(|g| g.checked_mul(a))
            .and_then(|x| x.checked_mul(s)))
    };
    SizeReport {
        original_sa,
        transformed_sa,
        bound: original_sa
            .checked_mul(2)
            .is_none_or(|twice| transformed_sa <= twice),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::DecentralizedPolicySet;

    fn table1(gamma: f64) -> Mmdp {
        Mmdp::matrix_game(
            2,
            3,
            vec![10., -30., -30., -30., 5., -30., -30., -30., 1.],
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn layout_offsets_and_locate() {
        let l = LayerLayout::new(2, 3, 3);
        assert_eq!(
            (l.offset(0), l.offset(1), l.offset(2), l.total_states()),
            (0, 2, 8, 26)
        );
        for idx in 0..l.total_states() {
            let (k, s, p) = l.locate(idx);
            assert_eq!(l.index(k, s, p), idx);
        }
        assert_eq!(LayerLayout::new(3, 2, 1).total_states(), 6);
    }

    #[test]
    fn table1_transform_shape() {
        let g = sequential_transform(&table1(0.99)).unwrap();
        assert_eq!((g.n_states, g.n_actions, g.horizon), (4, 3, Some(2)));
        assert!(g.validate().is_empty());
        assert!((g.gamma * g.gamma - 0.99).abs() < 1e-12);
        assert_eq!(g.r(1 + 1, 1), 5.0);
        assert_eq!(g.p_row(0, 2), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_agent_transform_is_identity() {
        let m = Mmdp::new(
            2,
            1,
            2,
            vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.25, 0.75],
            vec![1.0, 2.0, 3.0, 4.0],
            0.7,
            vec![0.4, 0.6],
            None,
        )
        .unwrap();
        let g = sequential_transform(&m).unwrap();
        assert_eq!(g, m.joint_mdp());
        assert_eq!(inverse_transform(&g, 1).unwrap(), m);
    }

    #[test]
    fn round_trip_and_corruption() {
        let m = table1(0.99);
        let g = sequential_transform(&m).unwrap();
        let back = inverse_transform(&g, 2).unwrap();
        assert_eq!(back.transition, m.transition);
        assert_eq!(back.reward, m.reward);
        assert!((back.gamma - m.gamma).abs() < 1e-12);
        let mut bad = g.clone();
        bad.reward[0] = 0.5;
        assert!(matches!(
            inverse_transform(&bad, 2),
            Err(Error::NotLayered(_))
        ));
    }

    #[test]
    fn lift_lower_round_trip() {
        let pc = CoordinationPolicy::uniform(3, 2, 2);
        let lifted = lift_policy(&pc).unwrap();
        assert_eq!(lifted.n_states, 14);
        assert!(lifted.probs.iter().all(|&p| p == 0.5));
        assert_eq!(lower_policy(&lifted, 3).unwrap(), pc);
    }

    #[test]
    fn value_relation_on_table1() {
        let m = table1(0.99);
        let pc = CoordinationPolicy::from_joint_actions(2, 3, &[0]);
        let v = value_relation_check(&m, &pc).unwrap();
        assert!((v.j_original - 10.0).abs() < 1e-12);
        assert!((v.j_transformed - 0.99f64.sqrt() * 10.0).abs() < 1e-12);
        assert!(v.residual < 1e-10);
        let uni = CoordinationPolicy::from_decentralized(&DecentralizedPolicySet::uniform(2, 1, 3));
        assert!(value_relation_check(&m, &uni).unwrap().residual < 1e-10);
        assert!(value_relation_check(&table1(0.0), &uni).is_err());
    }

    #[test]
    fn size_report_examples() {
        let r = size_report(&table1(0.9));
        assert_eq!((r.original_sa, r.transformed_sa, r.bound), (9, 12, true));
        let m = Mmdp::new(
            2,
            3,
            5,
            vec![0.5; 2 * 125 * 2],
            vec![0.0; 250],
            0.9,
            vec![1.0, 0.0],
            None,
        )
        .unwrap();
        let r = size_report(&m);
        assert_eq!((r.original_sa, r.transformed_sa, r.bound), (250, 310, true));
        let m1 = Mmdp::matrix_game(3, 1, vec![1.0], 0.9).unwrap();
        let r = size_report(&m1);
        assert_eq!((r.original_sa, r.transformed_sa, r.bound), (1, 3, false));
    }
}
