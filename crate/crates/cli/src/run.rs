//! The `run` subcommand: one experiment per seed, written to disk.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use tad_core::analysis::{
    local_min_certificate, stationarity_certificate, LocalMinReport, StationarityReport,
    LOCAL_MIN_SLACK,
};
use tad_core::constructions::{builtin_game, builtin_names};
use tad_core::envfile::load_env;
use tad_core::eval::{brute_force_optimal, evaluate_policy, ORACLE_TOL};
use tad_core::learners::{
    gd_run, igm_check, tad_run, GdConfig, MapgObjective, MapgParams, Objective, PgConfig, Sarl,
    TadConfig, TrainTrace, VdObjective, VdParams,
};
use tad_core::transform::{kl_distill, KlDistillConfig};
use tad_core::{DecentralizedPolicySet, Error, Mmdp};

use crate::config::{Distill, InitMode, Learner, Output, Resolved};

/// Loads a built-in game by name, otherwise an environment file relative to
/// `base_dir`.
pub fn resolve_env(name: &str, base_dir: &Path) -> Result<Mmdp, Error> {
    if builtin_names().iter().any(|n| n == name) {
        return builtin_game(name);
    }
    let path = base_dir.join(name);
    if path.is_file() {
        load_env(&path)
    } else {
        Err(Error::UnknownEnv(name.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<StationarityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_min: Option<LocalMinReport>,
    /// Per-state consistency of local and joint greedy actions (value
    /// decomposition only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub igm: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub env: String,
    pub seed: u64,
    pub n_states: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Exact return of the saved decentralized policy.
    #[serde(rename = "return")]
    pub ret: f64,
    pub optimal_return: f64,
    pub gap: f64,
    /// Per-state greedy action of every agent under the saved policy.
    pub greedy_actions: Vec<Vec<usize>>,
    /// Final value of the learner's own objective: expected return of the
    /// stochastic policy (mapg), TD loss (vd), or the distilled return (tad).
    pub learner_objective: f64,
    pub steps_run: usize,
    pub converged: bool,
    pub certificates: Certificates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_final_loss: Option<f64>,
    pub oracle_tol: f64,
    pub local_min_slack: f64,
    pub config: Resolved,
}

pub struct RunOutput {
    pub summary: Summary,
    pub trace: TrainTrace,
    pub policy: DecentralizedPolicySet,
}

fn greedy_policy(n_actions: usize, greedy: &[usize], m: &Mmdp) -> DecentralizedPolicySet {
    let codec = m.codec();
    let per_agent: Vec<Vec<usize>> = (0..m.n_agents)
        .map(|i| greedy.iter().map(|&j| codec.component(j, i)).collect())
        .collect();
    DecentralizedPolicySet::deterministic(n_actions, &per_agent)
}

fn init_params(
    cfg: &Resolved,
    dim: usize,
    concentrated: impl FnOnce(&[usize]) -> Vec<f64>,
    random: impl FnOnce(&mut ChaCha8Rng) -> Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, Error> {
    let x = match cfg.init.mode {
        InitMode::Uniform => vec![0.0; dim],
        InitMode::Concentrated => {
            concentrated(cfg.init.target_joint_action.as_deref().unwrap_or_default())
        }
        InitMode::Random => random(rng),
        InitMode::File => {
            let path = cfg
                .base_dir
                .join(cfg.init.path.as_ref().expect("validated"));
            let text = fs::read_to_string(&path)?;
            serde_json::from_str(&text)?
        }
    };
    if x.len() != dim {
        return Err(Error::Shape(format!(
            "initial parameters have length {}, expected {dim}",
            x.len()
        )));
    }
    Ok(x)
}

fn check_target(target: &[usize], m: &Mmdp) -> Result<usize, Error> {
    if target.len() != m.n_agents || target.iter().any(|&a| a >= m.n_actions) {
        return Err(Error::InvalidArgument(format!(
            "target_joint_action {target:?} does not fit {} agents with {} actions",
            m.n_agents, m.n_actions
        )));
    }
    Ok(m.codec().encode(target))
}

fn certify<O: Objective + Sync>(
    obj: &O,
    x: &[f64],
    cfg: &Resolved,
    rng: &mut ChaCha8Rng,
) -> Result<Certificates, Error> {
    let stationarity = Some(stationarity_certificate(obj, x, cfg.stationarity_tol)?);
    let local_min = match cfg.certify {
        Some(c) => Some(local_min_certificate(obj, x, c.radius, c.samples, rng)?),
        None => None,
    };
    Ok(Certificates {
        stationarity,
        local_min,
        igm: None,
    })
}

/// Runs one experiment with `seed`.
pub fn run_once(cfg: &Resolved, seed: u64) -> Result<RunOutput, Error> {
    let m = resolve_env(&cfg.env, &cfg.base_dir)?;
    m.ensure_valid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (optimal_return, _) = brute_force_optimal(&m)?;
    let gd = |lr, steps| GdConfig {
        lr,
        steps,
        stop_tol: 0.0,
        record_every: cfg.record_every,
    };

    let (policy, trace, learner_objective, steps_run, converged, certificates, kl_final_loss) =
        match cfg.learner {
            Learner::Mapg { lr, steps } => {
                let obj = MapgObjective::new(&m);
                let target = cfg
                    .init
                    .target_joint_action
                    .as_deref()
                    .map(|t| check_target(t, &m))
                    .transpose()?;
                let scale = cfg.init.scale;
                let x0 = init_params(
                    cfg,
                    obj.dim(),
                    |_| {
                        MapgParams::concentrated(
                            m.n_agents,
                            m.n_actions,
                            &vec![target.unwrap_or(0); m.n_states],
                            scale,
                        )
                        .logits
                    },
                    |rng| {
                        (0..obj.dim())
                            .map(|_| rng.gen_range(-scale..=scale))
                            .collect()
                    },
                    &mut rng,
                )?;
                let r = gd_run(&obj, x0, gd(lr, steps))?;
                let certs = certify(&obj, &r.params, cfg, &mut rng)?;
                let p = obj.params(&r.params);
                let j = -obj.loss(&r.params)?;
                let greedy = p.policies().greedy_joint();
                let steps_run = *r.trace.steps.last().unwrap_or(&0);
                (
                    greedy_policy(m.n_actions, &greedy, &m),
                    r.trace,
                    j,
                    steps_run,
                    r.converged,
                    certs,
                    None,
                )
            }
            Learner::Vd { variant, lr, steps } => {
                let obj = VdObjective::new(&m, variant);
                let shape = VdParams::zeros(variant, m.n_agents, m.n_states, m.n_actions);
                if let Some(t) = &cfg.init.target_joint_action {
                    check_target(t, &m)?;
                }
                let x0 = init_params(
                    cfg,
                    obj.dim(),
                    |t| {
                        let mut p = shape.clone();
                        for s in 0..m.n_states {
                            for (i, &a) in t.iter().enumerate() {
                                let idx = p.q_index(i, s, a);
                                p.q[idx] = cfg.init.scale;
                            }
                        }
                        p.to_flat()
                    },
                    |rng| {
                        VdParams::random(
                            variant,
                            m.n_agents,
                            m.n_states,
                            m.n_actions,
                            cfg.init.scale,
                            rng,
                        )
                        .to_flat()
                    },
                    &mut rng,
                )?;
                let r = gd_run(&obj, x0, gd(lr, steps))?;
                let mut certs = certify(&obj, &r.params, cfg, &mut rng)?;
                let p = obj.params(&r.params);
                certs.igm = Some((0..m.n_states).all(|s| igm_check(&p, s)));
                let loss = obj.loss(&r.params)?;
                let steps_run = *r.trace.steps.last().unwrap_or(&0);
                (
                    greedy_policy(m.n_actions, &p.greedy_joint(), &m),
                    r.trace,
                    loss,
                    steps_run,
                    r.converged,
                    certs,
                    None,
                )
            }
            Learner::Tad {
                variant,
                lr,
                steps,
                clip,
            } => {
                let tad = TadConfig {
                    pg: PgConfig {
                        lr,
                        steps,
                        record_every: cfg.record_every,
                        ..PgConfig::default()
                    },
                    clip,
                    ..TadConfig::default()
                };
                let out = tad_run(&m, variant, &tad, &mut rng)?;
                let steps_run = match variant {
                    Sarl::Vi => 0,
                    Sarl::QLearning => tad.q_learning.sweeps,
                    Sarl::SoftmaxPg | Sarl::ClippedPg => steps,
                };
                let certs = Certificates {
                    stationarity: None,
                    local_min: None,
                    igm: None,
                };
                match cfg.distill {
                    Distill::Greedy => (
                        out.policy, out.trace, out.value, steps_run, true, certs, None,
                    ),
                    Distill::Kl => {
                        let (pol, losses) =
                            kl_distill(&out.coordination, &m, KlDistillConfig::default())?;
                        let j = evaluate_policy(&m, &pol)?;
                        (
                            pol,
                            out.trace,
                            j,
                            steps_run,
                            true,
                            certs,
                            losses.last().copied(),
                        )
                    }
                }
            }
        };

    let ret = evaluate_policy(&m, &policy)?;
    let greedy = policy.greedy_joint();
    let codec = m.codec();
    let summary = Summary {
        env: cfg.env.clone(),
        seed,
        n_states: m.n_states,
        n_agents: m.n_agents,
        n_actions: m.n_actions,
        gamma: m.gamma,
        ret,
        optimal_return,
        gap: (optimal_return - ret).max(0.0),
        greedy_actions: greedy.iter().map(|&j| codec.decode(j)).collect(),
        learner_objective,
        steps_run,
        converged,
        certificates,
        kl_final_loss,
        oracle_tol: ORACLE_TOL,
        local_min_slack: LOCAL_MIN_SLACK,
        config: Resolved {
            seed,
            ..cfg.clone()
        },
    };
    Ok(RunOutput {
        summary,
        trace,
        policy,
    })
}

fn to_json<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("serializable");
    s.push('\n');
    s
}

fn write_outputs(out: &RunOutput, dir: &Path, outputs: &[Output]) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    for o in outputs {
        match o {
            Output::Trace => out.trace.write_csv(&dir.join("trace.csv"))?,
            Output::Summary => fs::write(dir.join("summary.json"), to_json(&out.summary))?,
            Output::Policy => fs::write(dir.join("policy.json"), to_json(&out.policy))?,
        }
    }
    Ok(())
}

/// Runs every replica (seeds `seed, seed + 1, ..`) in parallel and writes
/// them in seed order. A single replica writes straight into `out_dir`;
/// several write into `seed_<n>/` with a merged `summary.json` on top.
/// Returns the summaries in seed order.
pub fn run(cfg: &Resolved, out_dir: &Path) -> Result<Vec<Summary>, Error> {
    let seeds: Vec<u64> = (0..cfg.replicas as u64).map(|r| cfg.seed + r).collect();
    let results: Vec<RunOutput> = seeds
        .par_iter()
        .map(|&s| run_once(cfg, s))
        .collect::<Result<_, _>>()?;
    if let [only] = results.as_slice() {
        write_outputs(only, out_dir, &cfg.outputs)?;
    } else {
        for r in &results {
            let dir: PathBuf = out_dir.join(format!("seed_{}", r.summary.seed));
            write_outputs(r, &dir, &cfg.outputs)?;
        }
        if cfg.outputs.contains(&Output::Summary) {
            let all: Vec<&Summary> = results.iter().map(|r| &r.summary).collect();
            fs::write(
                out_dir.join("summary.json"),
                to_json(&serde_json::json!({ "replicas": all })),
            )?;
        }
    }
    Ok(results.into_iter().map(|r| r.summary).collect())
}
