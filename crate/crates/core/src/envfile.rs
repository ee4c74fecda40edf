//! JSON environment files.
//!
//! Full form:
//!
//! ```json
//! { "n_states": 1, "n_agents": 2, "n_actions": 2, "gamma": 0.99, "horizon": 1,
//!   "initial_dist": [1.0],
//!   "transition": [[[1.0], [1.0], [1.0], [1.0]]],
//!   "reward": [[-20.0, 10.0, 10.0, 9.0]] }
//! ```
//!
//! `transition[s][joint][s']` and `reward[s][joint]` index joint actions in
//! mixed radix with agent 0 most significant. A one-step game may instead be
//! written as `{"matrix": [[...], ...]}` (optionally with `"gamma"`), where
//! the nesting depth gives the number of agents and every level must have
//! the same length.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::Mmdp;

/// Discount attached to matrix games when none is given. Irrelevant to
/// their returns (horizon 1) but needed by the sequential transform.
pub const DEFAULT_MATRIX_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub n_states: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub gamma: f64,
    #[serde(default)]
    pub horizon: Option<usize>,
    pub initial_dist: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
}

impl EnvFile {
    pub fn from_model(m: &Mmdp) -> Self {
        let nj = m.n_joint();
        Self {
            n_states: m.n_states,
            n_agents: m.n_agents,
            n_actions: m.n_actions,
            gamma: m.gamma,
            horizon: m.horizon,
            initial_dist: m.initial_dist.clone(),
            transition: m
                .transition
                .chunks(nj * m.n_states)
                .map(|per_state| per_state.chunks(m.n_states).map(<[f64]>::to_vec).collect())
                .collect(),
            reward: m.reward.chunks(nj).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn into_model(self) -> Result<Mmdp> {
        let transition: Vec<f64> = self.transition.into_iter().flatten().flatten().collect();
        let reward: Vec<f64> = self.reward.into_iter().flatten().collect();
        Mmdp::new(
            self.n_states,
            self.n_agents,
            self.n_actions,
            transition,
            reward,
            self.gamma,
            self.initial_dist,
            self.horizon,
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixShorthand {
    matrix: Value,
    #[serde(default)]
    gamma: Option<f64>,
}

/// Flattens a nested array, returning `(depth, width, entries)`.
fn flatten_matrix(v: &Value) -> Result<(usize, usize, Vec<f64>)> {
    match v {
        Value::Number(n) => Ok((0, 0, vec![n.as_f64().unwrap()])),
        Value::Array(items) => {
            if items.is_empty() {
                return Err(Error::EnvFormat("empty matrix level".into()));
            }
            let mut out = Vec::new();
            let mut shape = None;
            for item in items {
                let (d, w, xs) = flatten_matrix(item)?;
                match shape {
                    None => shape = Some((d, w)),
                    Some(prev) if prev != (d, w) => {
                        return Err(Error::EnvFormat(
                            "ragged matrix: action sets must be identical across agents".into(),
                        ))
                    }
                    _ => {}
                }
                out.extend(xs);
            }
            let (d, w) = shape.unwrap();
            if d > 0 && w != items.len() {
                return Err(Error::EnvFormat(format!(
                    "heterogeneous action sets ({} vs {w}) are not supported",
                    items.len()
                )));
            }
            Ok((d + 1, items.len(), out))
        }
        _ => Err(Error::EnvFormat("matrix entries must be numbers".into())),
    }
}

pub fn parse_env(text: &str) -> Result<Mmdp> {
    let value: Value = serde_json::from_str(text)?;
    if value.get("matrix").is_some() {
        let short: MatrixShorthand = serde_json::from_value(value)?;
        let (depth, width, payoff) = flatten_matrix(&short.matrix)?;
        if depth == 0 {
            return Err(Error::EnvFormat("matrix must be an array".into()));
        }
        return Mmdp::matrix_game(
            depth,
            width,
            payoff,
            short.gamma.unwrap_or(DEFAULT_MATRIX_GAMMA),
        );
    }
    let file: EnvFile = serde_json::from_value(value)?;
    file.into_model()
}

pub fn load_env(path: &Path) -> Result<Mmdp> {
    parse_env(&std::fs::read_to_string(path)?)
}

pub fn to_env_json(m: &Mmdp) -> String {
    serde_json::to_string_pretty(&EnvFile::from_model(m)).expect("env file serializes")
}
