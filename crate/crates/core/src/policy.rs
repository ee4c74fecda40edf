//! Policy representations.
//!
//! Every multi-agent policy can be flattened into a joint stochastic table
//! over `(state, joint action)` via [`JointPolicy`], which is what exact
//! evaluation consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{checked_pow, JointActionCodec};

/// Row-stochastic table `probs[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states: actions.len(),
            n_actions,
            probs,
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    /// Lowest-index argmax per state.
    pub fn greedy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }

    pub fn check_rows(&self) -> Result<()> {
        if self.probs.len() != self.n_states * self.n_actions {
            return Err(Error::Shape(format!(
                "policy table has {} entries, expected {}",
                self.probs.len(),
                self.n_states * self.n_actions
            )));
        }
        check_rows(&self.probs, self.n_actions)
    }
}

pub(crate) fn check_rows(table: &[f64], width: usize) -> Result<()> {
    for (i, row) in table.chunks(width).enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "policy row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// Lowest-index argmax; NaN entries are never selected.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Anything that induces a joint stochastic policy on a model.
pub trait JointPolicy {
    fn n_states(&self) -> usize;
    /// Size of the (joint) action set the table ranges over.
    fn n_joint_actions(&self) -> usize;
    fn joint_table(&self) -> StochasticPolicy;
}

impl JointPolicy for StochasticPolicy {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_joint_actions(&self) -> usize {
        self.n_actions
    }
    fn joint_table(&self) -> StochasticPolicy {
        self.clone()
    }
}

/// Independent per-agent tables `tables[i][s * |A| + a_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecentralizedPolicySet {
    pub n_states: usize,
    pub n_actions: usize,
    pub tables: Vec<Vec<f64>>,
}

impl DecentralizedPolicySet {
    pub fn uniform(n_agents: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            tables: vec![vec![1.0 / n_actions as f64; n_states * n_actions]; n_agents],
        }
    }

    /// One-hot tables from per-agent action choices `actions[i][s]`.
    pub fn deterministic(n_actions: usize, actions: &[Vec<usize>]) -> Self {
        let n_states = actions.first().map_or(0, Vec::len);
        let tables = actions
            .iter()
            .map(|per_state| {
                let mut t = vec![0.0; n_states * n_actions];
                for (s, &a) in per_state.iter().enumerate() {
                    t[s * n_actions + a] = 1.0;
                }
                t
            })
            .collect();
        Self {
            n_states,
            n_actions,
            tables,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn codec(&self) -> JointActionCodec {
        JointActionCodec::new(self.n_agents(), self.n_actions)
    }

    pub fn prob(&self, agent: usize, s: usize, a: usize) -> f64 {
        self.tables[agent][s * self.n_actions + a]
    }

    /// Greedy joint action per state from per-agent argmaxes.
    pub fn greedy_joint(&self) -> Vec<usize> {
        let codec = self.codec();
        (0..self.n_states)
            .map(|s| {
                let acts: Vec<usize> = self
                    .tables
                    .iter()
                    .map(|t| argmax(&t[s * self.n_actions..][..self.n_actions]))
                    .collect();
                codec.encode(&acts)
            })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.tables
            .iter()
            .all(|t| t.iter().all(|&p| p == 0.0 || p == 1.0))
    }

    pub fn check_rows(&self) -> Result<()> {
        for t in &self.tables {
            if t.len() != self.n_states * self.n_actions {
                return Err(Error::Shape("decentralized table size".into()));
            }
            check_rows(t, self.n_actions)?;
        }
        Ok(())
    }
}

impl JointPolicy for DecentralizedPolicySet {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_joint_actions(&self) -> usize {
        self.codec().size()
    }
    fn joint_table(&self) -> StochasticPolicy {
        let codec = self.codec();
        let nj = codec.size();
        let mut probs = vec![0.0; self.n_states * nj];
        for s in 0..self.n_states {
            for j in 0..nj {
                let mut p = 1.0;
                for (i, t) in self.tables.iter().enumerate() {
                    p *= t[s * self.n_actions + codec.component(j, i)];
                }
                probs[s * nj + j] = p;
            }
        }
        StochasticPolicy {
            n_states: self.n_states,
            n_actions: nj,
            probs,
        }
    }
}

/// Sequential policies `tables[k][(s * |A|^k + prefix) * |A| + a_k]`, where
/// agent `k` conditions on the encoded actions of agents `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    pub tables: Vec<Vec<f64>>,
}

impl CoordinationPolicy {
    pub fn table_len(n_states: usize, n_actions: usize, agent: usize) -> usize {
        n_states * checked_pow(n_actions, agent).unwrap() * n_actions
    }

    pub fn uniform(n_agents: usize, n_states: usize, n_actions: usize) -> Self {
        let tables = (0..n_agents)
            .map(|k| vec![1.0 / n_actions as f64; Self::table_len(n_states, n_actions, k)])
            .collect();
        Self {
            n_states,
            n_actions,
            tables,
        }
    }

    /// Product policy: agent `k` ignores the prefix.
    pub fn from_decentralized(p: &DecentralizedPolicySet) -> Self {
        let na = p.n_actions;
        let tables = p
            .tables
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let prefixes = checked_pow(na, k).unwrap();
                let mut out = Vec::with_capacity(p.n_states * prefixes * na);
                for s in 0..p.n_states {
                    for _ in 0..prefixes {
                        out.extend_from_slice(&t[s * na..][..na]);
                    }
                }
                out
            })
            .collect();
        Self {
            n_states: p.n_states,
            n_actions: na,
            tables,
        }
    }

    /// Deterministic coordination policy selecting the same joint action in
    /// every prefix context consistent with it and action 0 elsewhere.
    pub fn from_joint_actions(n_agents: usize, n_actions: usize, joint: &[usize]) -> Self {
        let codec = JointActionCodec::new(n_agents, n_actions);
        let mut pc = Self {
            n_states: joint.len(),
            n_actions,
            tables: (0..n_agents)
                .map(|k| vec![0.0; Self::table_len(joint.len(), n_actions, k)])
                .collect(),
        };
        for (s, &j) in joint.iter().enumerate() {
            let acts = codec.decode(j);
            for k in 0..n_agents {
                let prefixes = checked_pow(n_actions, k).unwrap();
                for prefix in 0..prefixes {
                    let a = if prefix == codec.prefix(j, k) {
                        acts[k]
                    } else {
                        0
                    };
                    pc.tables[k][(s * prefixes + prefix) * n_actions + a] = 1.0;
                }
            }
        }
        pc
    }

    pub fn n_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn row(&self, agent: usize, s: usize, prefix: usize) -> &[f64] {
        let prefixes = checked_pow(self.n_actions, agent).unwrap();
        &self.tables[agent][(s * prefixes + prefix) * self.n_actions..][..self.n_actions]
    }

    pub fn check_rows(&self) -> Result<()> {
        for (k, t) in self.tables.iter().enumerate() {
            if t.len() != Self::table_len(self.n_states, self.n_actions, k) {
                return Err(Error::Shape(format!(
                    "coordination table {k} has wrong size"
                )));
            }
            check_rows(t, self.n_actions)?;
        }
        Ok(())
    }
}

impl JointPolicy for CoordinationPolicy {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_joint_actions(&self) -> usize {
        checked_pow(self.n_actions, self.n_agents()).unwrap()
    }
    fn joint_table(&self) -> StochasticPolicy {
        let codec = JointActionCodec::new(self.n_agents(), self.n_actions);
        let nj = codec.size();
        let mut probs = vec![0.0; self.n_states * nj];
        for s in 0..self.n_states {
            for j in 0..nj {
                let mut p = 1.0;
                for k in 0..self.n_agents() {
                    p *= self.row(k, s, codec.prefix(j, k))[codec.component(j, k)];
                    if p == 0.0 {
                        break;
                    }
                }
                probs[s * nj + j] = p;
            }
        }
        StochasticPolicy {
            n_states: self.n_states,
            n_actions: nj,
            probs,
        }
    }
}

/// One joint action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicJointPolicy {
    pub n_agents: usize,
    pub n_actions: usize,
    pub actions: Vec<usize>,
}

impl DeterministicJointPolicy {
    pub fn codec(&self) -> JointActionCodec {
        JointActionCodec::new(self.n_agents, self.n_actions)
    }

    pub fn decode(&self, s: usize) -> Vec<usize> {
        self.codec().decode(self.actions[s])
    }

    /// One-hot decentralized tables realizing this joint policy.
    pub fn to_decentralized(&self) -> DecentralizedPolicySet {
        let codec = self.codec();
        let per_agent: Vec<Vec<usize>> = (0..self.n_agents)
            .map(|i| {
                self.actions
                    .iter()
                    .map(|&j| codec.component(j, i))
                    .collect()
            })
            .collect();
        DecentralizedPolicySet::deterministic(self.n_actions, &per_agent)
    }
}

impl JointPolicy for DeterministicJointPolicy {
    fn n_states(&self) -> usize {
        self.actions.len()
    }
    fn n_joint_actions(&self) -> usize {
        self.codec().size()
    }
    fn joint_table(&self) -> StochasticPolicy {
        StochasticPolicy::deterministic(self.codec().size(), &self.actions)
    }
}

/// Action values `q[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub q: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            q: vec![0.0; n_states * n_actions],
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..][..self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn values(&self) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                self.row(s)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    pub fn greedy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|x| x.is_finite())
    }
}
