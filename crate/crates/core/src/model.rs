//! Finite cooperative models: the multi-agent MDP with a shared reward and
//! the single-agent MDP it is transformed into.
//!
//! Tensors are stored flat and row-major: `transition[(s * n_a + a) * n_s + s']`
//! and `reward[s * n_a + a]`, where for an [`Mmdp`] the action index is the
//! joint action under [`JointActionCodec`].

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// Tolerance used when checking that probability vectors sum to one.
pub const PROB_TOL: f64 = 1e-12;

/// Largest `|S| * |A|^n` accepted by the exhaustive solvers.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Mixed-radix codec for joint actions. Agent 0 is the most significant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointActionCodec {
    pub n_agents: usize,
    pub n_actions: usize,
}

impl JointActionCodec {
    pub fn new(n_agents: usize, n_actions: usize) -> Self {
        Self {
            n_agents,
            n_actions,
        }
    }

    /// `|A|^n`. Panics on overflow; model constructors guard sizes first.
    pub fn size(&self) -> usize {
        checked_pow(self.n_actions, self.n_agents).expect("joint action space overflows usize")
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.n_agents);
        actions.iter().fold(0, |acc, &a| acc * self.n_actions + a)
    }

    pub fn decode(&self, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_agents];
        for slot in out.iter_mut().rev() {
            *slot = joint % self.n_actions;
            joint /= self.n_actions;
        }
        out
    }

    /// Action of `agent` inside `joint`.
    pub fn component(&self, joint: usize, agent: usize) -> usize {
        let shift = checked_pow(self.n_actions, self.n_agents - 1 - agent).unwrap();
        (joint / shift) % self.n_actions
    }

    /// Encoded prefix `(a_0, .., a_{k-1})` of a joint action.
    pub fn prefix(&self, joint: usize, k: usize) -> usize {
        let shift = checked_pow(self.n_actions, self.n_agents - k).unwrap();
        joint / shift
    }
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// A single invariant violation, located by tensor coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension(&'static str),
    TensorLength {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    NonFiniteProbability {
        state: usize,
        action: usize,
        next: usize,
    },
    NonFiniteReward {
        state: usize,
        action: usize,
    },
    InitialSum(f64),
    NegativeInitial {
        state: usize,
        value: f64,
    },
    Discount(f64),
    ZeroHorizon,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension(d) => write!(f, "{d} must be positive"),
            Violation::TensorLength {
                field,
                expected,
                actual,
            } => write!(f, "{field} has {actual} entries, expected {expected}"),
            Violation::RowSum { state, action, sum } => {
                write!(f, "transition row ({state}, {action}) sums to {sum}")
            }
            Violation::NegativeProbability {
                state,
                action,
                next,
                value,
            } => write!(
                f,
                "negative probability {value} at ({state}, {action}, {next})"
            ),
            Violation::NonFiniteProbability {
                state,
                action,
                next,
            } => write!(f, "non-finite probability at ({state}, {action}, {next})"),
            Violation::NonFiniteReward { state, action } => {
                write!(f, "non-finite reward at ({state}, {action})")
            }
            Violation::InitialSum(s) => write!(f, "initial distribution sums to {s}"),
            Violation::NegativeInitial { state, value } => {
                write!(f, "negative initial probability {value} at state {state}")
            }
            Violation::Discount(g) => write!(f, "discount {g} outside [0, 1)"),
            Violation::ZeroHorizon => write!(f, "horizon must be positive"),
        }
    }
}

/// Finite single-agent MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
    /// Episodic cutoff; `None` means infinite-horizon discounting.
    pub horizon: Option<usize>,
}

/// Finite multi-agent MDP with homogeneous per-agent action sets and a
/// shared reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Mmdp {
    pub n_states: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
    pub horizon: Option<usize>,
}

fn validate_tensors(
    n_states: usize,
    n_actions: Option<usize>,
    transition: &[f64],
    reward: &[f64],
    gamma: f64,
    initial_dist: &[f64],
    horizon: Option<usize>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if n_states == 0 {
        out.push(Violation::EmptyDimension("n_states"));
    }
    let Some(n_actions) = n_actions else {
        out.push(Violation::EmptyDimension("joint action space"));
        return out;
    };
    if n_actions == 0 {
        out.push(Violation::EmptyDimension("n_actions"));
    }
    if !(0.0..1.0).contains(&gamma) {
        out.push(Violation::Discount(gamma));
    }
    if horizon == Some(0) {
        out.push(Violation::ZeroHorizon);
    }
    if !out.is_empty() {
        return out;
    }
    let sa = n_states * n_actions;
    if transition.len() != sa * n_states {
        out.push(Violation::TensorLength {
            field: "transition",
            expected: sa * n_states,
            actual: transition.len(),
        });
    }
    if reward.len() != sa {
        out.push(Violation::TensorLength {
            field: "reward",
            expected: sa,
            actual: reward.len(),
        });
    }
    if initial_dist.len() != n_states {
        out.push(Violation::TensorLength {
            field: "initial_dist",
            expected: n_states,
            actual: initial_dist.len(),
        });
    }
    if !out.is_empty() {
        return out;
    }
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = &transition[(s * n_actions + a) * n_states..][..n_states];
            let mut finite = true;
            for (next, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    finite = false;
                    out.push(Violation::NonFiniteProbability {
                        state: s,
                        action: a,
                        next,
                    });
                } else if p < 0.0 {
                    out.push(Violation::NegativeProbability {
                        state: s,
                        action: a,
                        next,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if finite && (sum - 1.0).abs() > PROB_TOL {
                out.push(Violation::RowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
            if !reward[s * n_actions + a].is_finite() {
                out.push(Violation::NonFiniteReward {
                    state: s,
                    action: a,
                });
            }
        }
    }
    for (s, &p) in initial_dist.iter().enumerate() {
        if p < 0.0 || !p.is_finite() {
            out.push(Violation::NegativeInitial { state: s, value: p });
        }
    }
    let total: f64 = initial_dist.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        out.push(Violation::InitialSum(total));
    }
    out
}

impl Mdp {
    /// Builds and validates.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial_dist: Vec<f64>,
        horizon: Option<usize>,
    ) -> Result<Self> {
        let m = Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial_dist,
            horizon,
        };
        m.ensure_valid()?;
        Ok(m)
    }

    /// All invariant violations; empty iff the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate_tensors(
            self.n_states,
            Some(self.n_actions),
            &self.transition,
            &self.reward,
            self.gamma,
            &self.initial_dist,
            self.horizon,
        )
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    #[inline]
    pub fn p_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn view(&self) -> ModelView<'_> {
        ModelView {
            n_states: self.n_states,
            n_actions: self.n_actions,
            transition: &self.transition,
            reward: &self.reward,
            gamma: self.gamma,
            initial_dist: &self.initial_dist,
            horizon: self.horizon,
        }
    }

    pub fn bootstrap_mask(&self) -> Vec<bool> {
        self.view().bootstrap_mask()
    }

    pub fn state_depths(&self) -> Vec<Option<usize>> {
        self.view().state_depths()
    }
}

/// Borrowed single-agent view over either model type. An [`Mmdp`] is viewed
/// with its joint actions as the action set; the flat layouts coincide.
#[derive(Debug, Clone, Copy)]
pub struct ModelView<'a> {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: &'a [f64],
    pub reward: &'a [f64],
    pub gamma: f64,
    pub initial_dist: &'a [f64],
    pub horizon: Option<usize>,
}

impl ModelView<'_> {
    #[inline]
    pub fn p_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Per-state flag: does a backup from this state bootstrap on the next
    /// state's value?
    ///
    /// Infinite-horizon models always bootstrap. For a horizon `H` the flag is
    /// `depth(s) + 1 < H`, where `depth(s)` is the earliest step at which `s`
    /// is reachable from the initial support; unreachable states never
    /// bootstrap. This is exact for episodic models whose states are each
    /// reachable at a single depth (one-step games and their layered
    /// transforms).
    pub fn bootstrap_mask(&self) -> Vec<bool> {
        let Some(h) = self.horizon else {
            return vec![true; self.n_states];
        };
        self.state_depths()
            .into_iter()
            .map(|d| d.is_some_and(|d| d + 1 < h))
            .collect()
    }

    /// Earliest reachable step of every state (BFS over positive transitions).
    pub fn state_depths(&self) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.n_states];
        let mut queue = VecDeque::new();
        for (s, &p) in self.initial_dist.iter().enumerate() {
            if p > 0.0 {
                depth[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            let d = depth[s].unwrap();
            for a in 0..self.n_actions {
                for (next, &p) in self.p_row(s, a).iter().enumerate() {
                    if p > 0.0 && depth[next].is_none() {
                        depth[next] = Some(d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        depth
    }
}

impl Mmdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_agents: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial_dist: Vec<f64>,
        horizon: Option<usize>,
    ) -> Result<Self> {
        let m = Self {
            n_states,
            n_agents,
            n_actions,
            transition,
            reward,
            gamma,
            initial_dist,
            horizon,
        };
        m.ensure_valid()?;
        Ok(m)
    }

    /// One-state, horizon-1 game from a payoff tensor flattened in joint
    /// action order.
    pub fn matrix_game(
        n_agents: usize,
        n_actions: usize,
        payoff: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let joint = checked_pow(n_actions, n_agents).ok_or(Error::SizeGuard {
            what: "joint actions",
            size: u128::MAX,
            limit: ENUMERATION_LIMIT,
        })?;
        Self::new(
            1,
            n_agents,
            n_actions,
            vec![1.0; joint],
            payoff,
            gamma,
            vec![1.0],
            Some(1),
        )
    }

    pub fn codec(&self) -> JointActionCodec {
        JointActionCodec::new(self.n_agents, self.n_actions)
    }

    /// `|A|^n`, or `None` on overflow.
    pub fn n_joint_checked(&self) -> Option<usize> {
        checked_pow(self.n_actions, self.n_agents)
    }

    pub fn n_joint(&self) -> usize {
        self.codec().size()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut pre = Vec::new();
        if self.n_agents == 0 {
            pre.push(Violation::EmptyDimension("n_agents"));
        }
        let mut v = validate_tensors(
            self.n_states,
            self.n_joint_checked(),
            &self.transition,
            &self.reward,
            self.gamma,
            &self.initial_dist,
            self.horizon,
        );
        pre.append(&mut v);
        pre
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    #[inline]
    pub fn p_row(&self, s: usize, joint: usize) -> &[f64] {
        let nj = self.n_joint();
        &self.transition[(s * nj + joint) * self.n_states..][..self.n_states]
    }

    #[inline]
    pub fn r(&self, s: usize, joint: usize) -> f64 {
        self.reward[s * self.n_joint() + joint]
    }

    /// Whether this is a one-state, horizon-1 matrix game.
    pub fn is_matrix_game(&self) -> bool {
        self.n_states == 1 && self.horizon == Some(1)
    }

    /// Borrowed view with joint actions as the action set.
    pub fn joint_view(&self) -> ModelView<'_> {
        ModelView {
            n_states: self.n_states,
            n_actions: self.n_joint(),
            transition: &self.transition,
            reward: &self.reward,
            gamma: self.gamma,
            initial_dist: &self.initial_dist,
            horizon: self.horizon,
        }
    }

    /// The same model with joint actions flattened into a single action set.
    pub fn joint_mdp(&self) -> Mdp {
        Mdp {
            n_states: self.n_states,
            n_actions: self.n_joint(),
            transition: self.transition.clone(),
            reward: self.reward.clone(),
            gamma: self.gamma,
            initial_dist: self.initial_dist.clone(),
            horizon: self.horizon,
        }
    }

    /// Guard for exhaustive joint-space solvers.
    pub fn check_enumerable(&self) -> Result<()> {
        let size = (self.n_states as u128)
            .checked_mul(
                (self.n_actions as u128)
                    .checked_pow(self.n_agents as u32)
                    .unwrap_or(u128::MAX),
            )
            .unwrap_or(u128::MAX);
        if size > ENUMERATION_LIMIT {
            return Err(Error::SizeGuard {
                what: "|S|*|A|^n",
                size,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> Mmdp {
        Mmdp::matrix_game(
            2,
            3,
            vec![10., -30., -30., -30., 5., -30., -30., -30., 1.],
            0.99,
        )
        .unwrap()
    }

    #[test]
    fn codec_round_trip_and_ordering() {
        let c = JointActionCodec::new(3, 4);
        assert_eq!(c.size(), 64);
        assert_eq!(c.encode(&[1, 2, 3]), 16 + 8 + 3);
        for j in 0..c.size() {
            let a = c.decode(j);
            assert_eq!(c.encode(&a), j);
            for (i, &ai) in a.iter().enumerate() {
                assert_eq!(c.component(j, i), ai);
            }
            assert_eq!(c.prefix(j, 2), a[0] * 4 + a[1]);
            assert_eq!(c.prefix(j, 0), 0);
        }
    }

    #[test]
    fn table1_is_valid() {
        assert!(table1().validate().is_empty());
    }

    #[test]
    fn short_row_is_reported_with_coordinates() {
        let mut m = table1();
        m.transition[4] = 0.98;
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(
            v[0],
            Violation::RowSum {
                state: 0,
                action: 4,
                ..
            }
        ));
    }

    #[test]
    fn negative_probability_is_reported() {
        let mut m = Mmdp {
            n_states: 2,
            n_agents: 1,
            n_actions: 1,
            transition: vec![1.2, -0.2, 0.5, 0.5],
            reward: vec![0.0, 0.0],
            gamma: 0.9,
            initial_dist: vec![1.0, 0.0],
            horizon: None,
        };
        let v = m.validate();
        assert!(v.iter().any(|x| matches!(
            x,
            Violation::NegativeProbability {
                state: 0,
                action: 0,
                next: 1,
                ..
            }
        )));
        m.transition = vec![1.0, 0.0, 0.5, 0.5];
        assert!(m.validate().is_empty());
    }

    #[test]
    fn discount_of_one_is_rejected() {
        let mut m = table1();
        m.gamma = 1.0;
        assert_eq!(m.validate(), vec![Violation::Discount(1.0)]);
    }

    #[test]
    fn bad_lengths_and_initial_dist() {
        let mut m = table1();
        m.reward.pop();
        assert!(matches!(
            m.validate()[0],
            Violation::TensorLength {
                field: "reward",
                ..
            }
        ));
        let mut m = table1();
        m.initial_dist = vec![0.5];
        assert_eq!(m.validate(), vec![Violation::InitialSum(0.5)]);
    }

    #[test]
    fn bootstrap_mask_follows_depth() {
        // chain 0 -> 1 -> 2 -> 2 with horizon 2
        let mdp = Mdp::new(
            3,
            1,
            vec![0., 1., 0., 0., 0., 1., 0., 0., 1.],
            vec![0.0; 3],
            0.9,
            vec![1., 0., 0.],
            Some(2),
        )
        .unwrap();
        assert_eq!(mdp.state_depths(), vec![Some(0), Some(1), Some(2)]);
        assert_eq!(mdp.bootstrap_mask(), vec![true, false, false]);
        let mut inf = mdp.clone();
        inf.horizon = None;
        assert_eq!(inf.bootstrap_mask(), vec![true; 3]);
    }

    #[test]
    fn enumeration_guard() {
        let m = Mmdp {
            n_states: 10,
            n_agents: 8,
            n_actions: 10,
            transition: vec![],
            reward: vec![],
            gamma: 0.9,
            initial_dist: vec![],
            horizon: None,
        };
        assert!(matches!(m.check_enumerable(), Err(Error::SizeGuard { .. })));
        assert!(table1().check_enumerable().is_ok());
    }
}
