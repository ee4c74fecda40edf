//! Experiment configuration files.
//!
//! A config is a JSON object:
//!
//! ```json
//! {
//!   "env": "table1",
//!   "learner": {"kind": "mapg", "lr": 0.05, "steps": 50000},
//!   "init": {"mode": "concentrated", "target_joint_action": [1, 1], "scale": 5.0},
//!   "distill": "greedy",
//!   "outputs": ["trace", "summary", "policy"]
//! }
//! ```
//!
//! `env` is a built-in name or a path to an environment file (relative
//! paths resolve against the config's directory). Omitted fields take the
//! defaults in [`Resolved`], which is what gets echoed into summaries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tad_core::learners::{Sarl, VdVariant};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub env: String,
    pub learner: LearnerSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub distill: Distill,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub certify: Option<Certify>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub replicas: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub kind: LearnerKind,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default)]
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Mapg,
    Vd,
    Tad,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default)]
    pub mode: InitMode,
    #[serde(default)]
    pub target_joint_action: Option<Vec<usize>>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Uniform,
    Concentrated,
    Random,
    File,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distill {
    #[default]
    Greedy,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Trace,
    Summary,
    Policy,
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Trace, Output::Summary, Output::Policy]
}

/// Sampled local-minimality check run on the final parameters of a
/// gradient learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certify {
    pub radius: f64,
    pub samples: usize,
}

/// Learner choice after validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Mapg {
        lr: f64,
        steps: usize,
    },
    Vd {
        variant: VdVariant,
        lr: f64,
        steps: usize,
    },
    Tad {
        variant: Sarl,
        lr: f64,
        steps: usize,
        clip: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedInit {
    pub mode: InitMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_joint_action: Option<Vec<usize>>,
    pub scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// A config with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub env: String,
    pub learner: Learner,
    pub record_every: usize,
    pub init: ResolvedInit,
    pub distill: Distill,
    pub outputs: Vec<Output>,
    pub certify: Option<Certify>,
    pub stationarity_tol: f64,
    pub seed: u64,
    pub replicas: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub const MAPG_LR: f64 = 0.05;
pub const MAPG_STEPS: usize = 50_000;
pub const VD_LR: f64 = 0.01;
pub const VD_STEPS: usize = 100_000;
pub const PG_LR: f64 = 0.01;
pub const PG_STEPS: usize = 2000;
pub const CLIP: f64 = 0.2;
pub const CONCENTRATION_SCALE: f64 = 5.0;
pub const RANDOM_SCALE: f64 = 1.0;
pub const STATIONARITY_TOL: f64 = 1e-6;

/// Rows kept in a trace by default.
const TRACE_ROWS: usize = 1000;

fn parse_variant<T: for<'de> Deserialize<'de>>(name: &str, allowed: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| format!("unknown learner variant `{name}` (expected one of {allowed})"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    /// Validates the config and fills in defaults. `seed` and `replicas`
    /// override the file's values when given.
    pub fn resolve(
        &self,
        base_dir: &Path,
        seed: Option<u64>,
        replicas: Option<usize>,
    ) -> Result<Resolved, String> {
        let l = &self.learner;
        let positive = |what: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(format!("learner.{what} must be positive, got {x}"))
            }
        };
        let learner = match l.kind {
            LearnerKind::Mapg => {
                if l.variant.is_some() || l.clip.is_some() {
                    return Err("mapg takes no variant or clip".into());
                }
                Learner::Mapg {
                    lr: positive("lr", l.lr.unwrap_or(MAPG_LR))?,
                    steps: l.steps.unwrap_or(MAPG_STEPS),
                }
            }
            LearnerKind::Vd => {
                if l.clip.is_some() {
                    return Err("vd takes no clip".into());
                }
                let name = l.variant.as_deref().ok_or("vd needs a variant")?;
                Learner::Vd {
                    variant: parse_variant(name, "vdn, monotonic, duplex")?,
                    lr: positive("lr", l.lr.unwrap_or(VD_LR))?,
                    steps: l.steps.unwrap_or(VD_STEPS),
                }
            }
            LearnerKind::Tad => {
                let variant: Sarl = match l.variant.as_deref() {
                    None => Sarl::Vi,
                    Some(name) => parse_variant(name, "vi, q_learning, softmax_pg, clipped_pg")?,
                };
                let clip = positive("clip", l.clip.unwrap_or(CLIP))?;
                if l.clip.is_some() && variant != Sarl::ClippedPg {
                    return Err("clip only applies to the clipped_pg variant".into());
                }
                Learner::Tad {
                    variant,
                    lr: positive("lr", l.lr.unwrap_or(PG_LR))?,
                    steps: l.steps.unwrap_or(PG_STEPS),
                    clip,
                }
            }
        };
        let steps = match learner {
            Learner::Mapg { steps, .. }
            | Learner::Vd { steps, .. }
            | Learner::Tad { steps, .. } => steps,
        };
        let record_every = match l.record_every {
            Some(0) => return Err("learner.record_every must be at least 1".into()),
            Some(r) => r,
            None => steps.div_ceil(TRACE_ROWS).max(1),
        };

        let init = &self.init;
        if init.mode == InitMode::Concentrated && init.target_joint_action.is_none() {
            return Err("concentrated init needs target_joint_action".into());
        }
        if init.mode != InitMode::Concentrated && init.target_joint_action.is_some() {
            return Err("target_joint_action only applies to concentrated init".into());
        }
        if (init.mode == InitMode::File) != init.path.is_some() {
            return Err("init.path is required by, and only allowed with, file init".into());
        }
        if l.kind == LearnerKind::Tad && init.mode != InitMode::Uniform {
            return Err("tad learners start from a uniform policy".into());
        }
        let default_scale = match init.mode {
            InitMode::Random => RANDOM_SCALE,
            _ => CONCENTRATION_SCALE,
        };
        let scale = init.scale.unwrap_or(default_scale);
        if !scale.is_finite() {
            return Err("init.scale must be finite".into());
        }
        if self.distill == Distill::Kl && l.kind != LearnerKind::Tad {
            return Err("kl distillation applies to tad learners only".into());
        }
        if self.outputs.is_empty() {
            return Err("outputs must name at least one of trace, summary, policy".into());
        }
        if let Some(c) = self.certify {
            if !(c.radius > 0.0) || c.samples == 0 {
                return Err("certify needs a positive radius and at least one sample".into());
            }
            if l.kind == LearnerKind::Tad {
                return Err("certify applies to gradient learners (mapg, vd) only".into());
            }
        }
        let replicas = replicas.or(self.replicas).unwrap_or(1);
        if replicas == 0 {
            return Err("replicas must be at least 1".into());
        }
        Ok(Resolved {
            env: self.env.clone(),
            learner,
            record_every,
            init: ResolvedInit {
                mode: init.mode,
                target_joint_action: init.target_joint_action.clone(),
                scale,
                path: init.path.clone(),
            },
            distill: self.distill,
            outputs: self.outputs.clone(),
            certify: self.certify,
            stationarity_tol: STATIONARITY_TOL,
            seed: seed.or(self.seed).unwrap_or(0),
            replicas,
            base_dir: base_dir.to_path_buf(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<Resolved, String> {
        let c: Config = serde_json::from_str(text).map_err(|e| e.to_string())?;
        c.resolve(Path::new("."), None, None)
    }

    #[test]
    fn defaults_are_filled() {
        let r = resolve(r#"{"env": "table1", "learner": {"kind": "mapg"}}"#).unwrap();
        assert_eq!(
            r.learner,
            Learner::Mapg {
                lr: MAPG_LR,
                steps: MAPG_STEPS
            }
        );
        assert_eq!(r.record_every, 50);
        assert_eq!(r.init.mode, InitMode::Uniform);
        assert_eq!(r.outputs.len(), 3);
        assert_eq!((r.seed, r.replicas), (0, 1));
    }

    #[test]
    fn schema_violations() {
        for bad in [
            r#"{"learner": {"kind": "mapg"}}"#,
            r#"{"env": "t", "learner": {"kind": "sgd"}}"#,
            r#"{"env": "t", "learner": {"kind": "vd"}}"#,
            r#"{"env": "t", "learner": {"kind": "vd", "variant": "qmix"}}"#,
            r#"{"env": "t", "learner": {"kind": "mapg", "lr": -1}}"#,
            r#"{"env": "t", "learner": {"kind": "mapg"}, "init": {"mode": "concentrated"}}"#,
            r#"{"env": "t", "learner": {"kind": "mapg"}, "distill": "kl"}"#,
            r#"{"env": "t", "learner": {"kind": "tad", "variant": "vi", "clip": 0.1}}"#,
            r#"{"env": "t", "learner": {"kind": "mapg"}, "extra": 1}"#,
        ] {
            assert!(resolve(bad).is_err(), "{bad}");
        }
    }
}
