//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tad_core::analysis::{
    grad_check, local_min_certificate, ne_count_expectation, stationarity_certificate,
    suboptimality_gap, FnObjective,
};
use tad_core::constructions::{
    builtin_game, builtin_names, construct_local_minima, diagonal_values, random_coordination,
    random_mmdp, restricted_minimizer, theorem2_payoff, weighted_sq_loss, PayoffTensor,
    RandomMmdpSpec,
};
use tad_core::eval::{brute_force_optimal, evaluate_policy};
use tad_core::learners::{
    duplex_decompose, gd_run, igm_check, tad_run, uniform_dist, vd_loss_and_grad_against, GdConfig,
    MapgObjective, MapgParams, Objective, Sarl, TadConfig, VdObjective, VdParams, VdVariant,
};
use tad_core::model::Mmdp;
use tad_core::policy::DeterministicJointPolicy;
use tad_core::transform::{
    determinize, greedy_distill, inverse_transform, lift_policy, lower_policy,
    sequential_transform, size_report, value_relation_check,
};
use tad_core::Result;

type Check = Result<(bool, String)>;

fn greedy_value(m: &Mmdp, joint: &[usize]) -> Result<f64> {
    evaluate_policy(
        m,
        &DeterministicJointPolicy {
            n_agents: m.n_agents,
            n_actions: m.n_actions,
            actions: joint.to_vec(),
        },
    )
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn mapg_stalls_on_table1() -> Check {
    let m = builtin_game("table1")?;
    let obj = MapgObjective::new(&m);
    let cfg = GdConfig {
        lr: 0.05,
        steps: 50_000,
        stop_tol: 0.0,
        record_every: 1000,
    };
    let runs = [
        (
            "concentrated (1,1)",
            MapgParams::concentrated(2, 3, &[4], 5.0),
            4,
            5.0,
        ),
        (
            "concentrated (2,2)",
            MapgParams::concentrated(2, 3, &[8], 5.0),
            8,
            1.0,
        ),
        ("uniform", MapgParams::uniform(2, 1, 3), 0, 10.0),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, init, want_joint, want_ret) in runs {
        let r = gd_run(&obj, init.logits, cfg)?;
        let greedy = r.trace.last_greedy().unwrap().to_vec();
        let ret = greedy_value(&m, &greedy)?;
        let stoch = r.trace.last_return().unwrap();
        ok &= greedy == [want_joint] && (ret - want_ret).abs() <= 1e-6;
        detail.push(format!(
            "{name}: greedy {greedy:?} return {ret} (stochastic {stoch:.6})"
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn duplex_points_are_local_minima() -> Check {
    let lm = construct_local_minima(3, 2, duplex_decompose)?;
    let game = lm.payoff.to_game()?;
    let obj = VdObjective::new(&game, VdVariant::Duplex);
    let best = diagonal_values(3)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ok = lm.params.len() == 3;
    let mut detail = Vec::new();
    for (l, theta) in lm.params.iter().enumerate() {
        let x = theta.to_flat();
        let st = stationarity_certificate(&obj, &x, 1e-8)?;
        let lmc = local_min_certificate(&obj, &x, 0.02, 10_000, &mut rng)?;
        ok &= st.stationary && lmc.local_min;
        let mut kept = true;
        if lm.values[l] < best {
            let r = gd_run(&obj, x, GdConfig::new(0.05, 10_000))?;
            kept = r.trace.last_greedy() == Some(&[theta.greedy_joint()[0]][..])
                && r.trace.last_return().unwrap() == lm.values[l];
            ok &= kept;
        }
        detail.push(format!(
            "point {l}: |grad| {:.1e}, max decrease {:.1e}, greedy payoff {}{}",
            st.grad_norm,
            lmc.max_decrease,
            lm.values[l],
            if lm.values[l] < best {
                format!(", kept after GD: {kept}")
            } else {
                String::new()
            }
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn duplex_stuck_on_matgame2() -> Check {
    let m = builtin_game("matgame2")?;
    let obj = VdObjective::new(&m, VdVariant::Duplex);
    let v = 29.0 / 3.0;
    let limit = [-20.0, v, v, v];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut gaps = Vec::new();
    for trial in 0..5 {
        let mut p = VdParams::zeros(VdVariant::Duplex, 2, 1, 2);
        p.q = vec![0.0, 1.0, 0.0, 1.0];
        if trial > 0 {
            for x in p.q.iter_mut().chain(p.lam.iter_mut()) {
                *x += rng.gen_range(-0.1..0.1);
            }
        }
        let cfg = GdConfig {
            lr: 0.01,
            steps: 100_000,
            stop_tol: 0.0,
            record_every: 10_000,
        };
        let r = gd_run(&obj, p.to_flat(), cfg)?;
        let fin = obj.params(&r.params);
        let err = sup(&fin.joint_q().q, &limit);
        let greedy = fin.greedy_joint();
        let gap = suboptimality_gap(
            &m,
            &DeterministicJointPolicy {
                n_agents: 2,
                n_actions: 2,
                actions: greedy.clone(),
            },
        )?;
        worst = worst.max(err);
        ok &= err < 1e-2 && greedy == [3] && (gap - 1.0).abs() < 1e-12;
        gaps.push(gap);
    }
    Ok((
        ok,
        format!("5 inits near (1,1): worst sup distance {worst:.2e}, gaps {gaps:?}"),
    ))
}

fn random_spec<R: Rng>(
    rng: &mut R,
    max_states: usize,
    max_agents: usize,
    max_actions: usize,
    gamma: f64,
) -> RandomMmdpSpec {
    RandomMmdpSpec {
        n_states: rng.gen_range(1..=max_states),
        n_agents: rng.gen_range(1..=max_agents),
        n_actions: rng.gen_range(1..=max_actions),
        gamma,
        horizon: None,
    }
}

fn value_relation_holds() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gammas = [0.5, 0.9, 0.99];
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let spec = RandomMmdpSpec {
            n_states: rng.gen_range(1..=3),
            n_agents: i % 4 + 1,
            n_actions: rng.gen_range(2..=3),
            gamma: gammas[i % 3],
            horizon: None,
        };
        let m = random_mmdp(&spec, &mut rng)?;
        let pc = random_coordination(spec.n_agents, spec.n_states, spec.n_actions, &mut rng);
        worst = worst.max(value_relation_check(&m, &pc)?.residual);
    }
    Ok((
        worst < 1e-8,
        format!("max residual {worst:.2e} over 100 pairs"),
    ))
}

fn tad_vi_is_optimal() -> Check {
    let cfg = TadConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for name in builtin_names() {
        let m = builtin_game(&name)?;
        let out = tad_run(&m, Sarl::Vi, &cfg, &mut rng)?;
        let gap = suboptimality_gap(&m, &out.policy)?;
        worst = worst.max(gap);
        ok &= (out.value - 10.0).abs() < 1e-8;
    }
    let suite = tad_run(&builtin_game("multitask_suite")?, Sarl::Vi, &cfg, &mut rng)?;
    for _ in 0..50 {
        let gamma = rng.gen_range(0.5..0.95);
        let spec = random_spec(&mut rng, 4, 3, 4, gamma);
        let m = random_mmdp(&spec, &mut rng)?;
        let out = tad_run(&m, Sarl::Vi, &cfg, &mut rng)?;
        let (j_star, _) = brute_force_optimal(&m)?;
        worst = worst.max((j_star - out.value).abs());
    }
    ok &= worst < 1e-8;
    Ok((
        ok,
        format!(
            "13 named games + 50 random models: max gap {worst:.2e}; suite return {}",
            suite.value
        ),
    ))
}

fn vdn_is_incomplete() -> Check {
    let m = builtin_game("matgame2")?;
    let obj = VdObjective::new(&m, VdVariant::Vdn);
    let fit = [-12.25, 2.25, 2.25, 16.75];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let init = VdParams::random(VdVariant::Vdn, 2, 1, 2, 10.0, &mut rng);
        let r = gd_run(&obj, init.to_flat(), GdConfig::new(0.5, 2_000))?;
        let p = obj.params(&r.params);
        let gap = suboptimality_gap(
            &m,
            &DeterministicJointPolicy {
                n_agents: 2,
                n_actions: 2,
                actions: p.greedy_joint(),
            },
        )?;
        let err = sup(&p.joint_q().q, &fit);
        worst = worst.max(err);
        ok &= p.greedy_joint() == [3] && gap == 1.0 && err < 1e-6;
    }
    Ok((
        ok,
        format!("20 random inits -> greedy (1,1), gap 1; max distance to additive fit {worst:.1e}"),
    ))
}

fn ne_count_matches() -> Check {
    let s = ne_count_expectation(5, 100_000, 7)?;
    let want = 25.0 / 9.0;
    let z = (s.mean - want).abs() / s.stderr;
    Ok((
        z < 3.0,
        format!(
            "mean {:.4} ± {:.4} vs {want:.4} ({z:.2} stderr)",
            s.mean, s.stderr
        ),
    ))
}

fn gradients_match_finite_differences() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spec = RandomMmdpSpec {
        n_states: 3,
        n_agents: 2,
        n_actions: 3,
        gamma: 0.9,
        horizon: None,
    };
    let mut worst = [0.0f64; 4];
    for _ in 0..10 {
        let m = random_mmdp(&spec, &mut rng)?;
        let obj = MapgObjective::new(&m);
        let theta: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        worst[0] = worst[0].max(grad_check(&obj, &theta, 1e-5)?);
        for (slot, variant) in VdVariant::ALL.into_iter().enumerate() {
            let p = VdParams::random(variant, 2, 3, 3, 1.0, &mut rng);
            // Target frozen at the base point, as in the semi-gradient update.
            let target = tad_core::eval::bellman_backup(&p.joint_q(), &m.joint_view())?;
            let dist = uniform_dist(3, 9);
            let f = FnObjective {
                dim: p.dim(),
                f: |x: &[f64]| vd_loss_and_grad_against(&p.with_flat(x), &target, &dist),
            };
            worst[slot + 1] = worst[slot + 1].max(grad_check(&f, &p.to_flat(), 1e-5)?);
        }
    }
    let ok = worst.iter().all(|&w| w < 1e-5);
    Ok((
        ok,
        format!(
            "max relative error: mapg {:.1e}, vdn {:.1e}, monotonic {:.1e}, duplex {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn structural_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = true;
    let mut gamma_err: f64 = 0.0;
    for _ in 0..50 {
        let gamma = rng.gen_range(0.1..0.99);
        let spec = random_spec(&mut rng, 4, 3, 3, gamma);
        let m = random_mmdp(&spec, &mut rng)?;
        let g = sequential_transform(&m)?;
        let back = inverse_transform(&g, m.n_agents)?;
        ok &= back.transition == m.transition
            && back.reward == m.reward
            && back.initial_dist == m.initial_dist
            && back.horizon == m.horizon;
        gamma_err = gamma_err.max((back.gamma - m.gamma).abs());
        let pc = random_coordination(m.n_agents, m.n_states, m.n_actions, &mut rng);
        ok &= lower_policy(&lift_policy(&pc)?, m.n_agents)? == pc;
        let sr = size_report(&m);
        ok &= sr.transformed_sa == (g.n_states * g.n_actions) as u128;
        ok &= sr.bound || m.n_actions == 1;
        let d = greedy_distill(&pc, &m)?;
        ok &= evaluate_policy(&m, &d)? == evaluate_policy(&m, &determinize(&pc))?;
    }
    ok &= gamma_err < 1e-12;
    let mut igm_ok = true;
    for _ in 0..10_000 {
        let p = VdParams::random(VdVariant::Duplex, 3, 1, 3, 5.0, &mut rng);
        igm_ok &= igm_check(&p, 0);
    }
    ok &= igm_ok;
    Ok((
        ok,
        format!(
            "50 models: transform/policy round trips, size bound, distilled value equality; \
             discount round-trip error {gamma_err:.1e}; 10^4 duplex draws consistent: {igm_ok}"
        ),
    ))
}

/// Minimizes `φ(v)` (the loss with `a*` at level `v` and every other entry
/// clipped to `v`) by a grid scan refined with ternary search.
fn scan_oracle(t: &PayoffTensor, w: &[f64], a_star: usize) -> PayoffTensor {
    let at = |v: f64| {
        let mut f = t.clone();
        for (j, x) in f.entries.iter_mut().enumerate() {
            *x = if j == a_star { v } else { x.min(v) };
        }
        f
    };
    let phi = |v: f64| weighted_sq_loss(&at(v), t, w);
    let lo = t.entries[a_star];
    let hi = t.entries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return at(lo);
    }
    let n = 10_000;
    let step = (hi - lo) / n as f64;
    let best = (0..=n)
        .map(|i| lo + i as f64 * step)
        .min_by(|a, b| phi(*a).total_cmp(&phi(*b)))
        .unwrap();
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if phi(m1) <= phi(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    at((a + b) / 2.0)
}

fn restricted_minimizer_matches_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t = PayoffTensor {
            n_agents: 2,
            n_actions: 3,
            entries: (0..9).map(|_| rng.gen_range(-20.0..10.0)).collect(),
        };
        let w: Vec<f64> = {
            let raw: Vec<f64> = (0..9).map(|_| rng.gen_range(0.1..1.0)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / z).collect()
        };
        let a_star = rng.gen_range(0..9);
        let f = restricted_minimizer(&t, &w, a_star)?;
        worst = worst.max(sup(&f.entries, &scan_oracle(&t, &w, a_star).entries));
    }
    let mut closed_form = true;
    for k in 2..=6 {
        for n in 2..=3 {
            let t = theorem2_payoff(k, n)?;
            let c = diagonal_values(k)?;
            let w = vec![1.0 / t.entries.len() as f64; t.entries.len()];
            for l in 0..k {
                let f = restricted_minimizer(&t, &w, t.diag_index(l))?;
                let mean = c[l..].iter().sum::<f64>() / (k - l) as f64;
                let d: Vec<f64> = (0..k).map(|i| if i < l { c[i] } else { mean }).collect();
                closed_form &= sup(&f.entries, &PayoffTensor::diagonal(n, &d).entries) < 1e-12;
            }
        }
    }
    Ok((
        worst < 1e-6 && closed_form,
        format!("20 random tensors: max deviation from scan oracle {worst:.1e}; diagonal closed form holds: {closed_form}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check, Option<Duration>); 10] = [
        (
            "C1 policy-gradient local optima on table1",
            mapg_stalls_on_table1,
            Some(Duration::from_secs(10)),
        ),
        (
            "C2 constructed duplex local minima",
            duplex_points_are_local_minima,
            Some(Duration::from_secs(30)),
        ),
        (
            "C3 duplex stuck on matgame2",
            duplex_stuck_on_matgame2,
            Some(Duration::from_secs(10)),
        ),
        (
            "C4 transformed value relation",
            value_relation_holds,
            Some(Duration::from_secs(10)),
        ),
        (
            "C5 transform-learn-distill optimality",
            tad_vi_is_optimal,
            Some(Duration::from_secs(60)),
        ),
        (
            "C6 additive decomposition incompleteness",
            vdn_is_incomplete,
            Some(Duration::from_secs(5)),
        ),
        (
            "C7 pure-equilibrium count",
            ne_count_matches,
            Some(Duration::from_secs(30)),
        ),
        (
            "C8 gradient oracle",
            gradients_match_finite_differences,
            None,
        ),
        ("C9 structural identities", structural_identities, None),
        (
            "C10 restricted minimizer oracle",
            restricted_minimizer_matches_oracle,
            None,
        ),
    ];
    let mut failures = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let (pass, detail) = match result {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        println!(
            "{} {name}: {detail} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
