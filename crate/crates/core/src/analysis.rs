//! Numerical certificates: gradient checks, stationarity, sampled local
//! minimality, suboptimality gaps and equilibrium-count statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::constructions::random_matrix_game;
use crate::error::{Error, Result};
use crate::eval::{brute_force_optimal, evaluate_policy};
use crate::learners::{l2_norm, Objective};
use crate::model::Mmdp;
use crate::nash::pure_nash_of_payoff;
use crate::policy::JointPolicy;

/// Loss decrease tolerated by [`local_min_certificate`].
pub const LOCAL_MIN_SLACK: f64 = 1e-9;

/// Adapts a closure returning `(loss, gradient)` into an [`Objective`].
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        (self.f)(x)
    }
}

/// Largest coordinate error `|g - g_fd| / max(1, |g|, |g_fd|)` between the
/// analytic gradient and central differences with step `h`.
pub fn grad_check<O: Objective + ?Sized>(obj: &O, theta: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let (_, grad) = obj.loss_and_grad(theta)?;
    let mut x = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        x[i] = theta[i] + h;
        let up = obj.loss(&x)?;
        x[i] = theta[i] - h;
        let down = obj.loss(&x)?;
        x[i] = theta[i];
        let fd = (up - down) / (2.0 * h);
        let err = (grad[i] - fd).abs() / 1f64.max(grad[i].abs()).max(fd.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityReport {
    pub grad_norm: f64,
    pub tol: f64,
    pub stationary: bool,
}

pub fn stationarity_certificate<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    tol: f64,
) -> Result<StationarityReport> {
    let (_, grad) = obj.loss_and_grad(theta)?;
    let grad_norm = l2_norm(&grad);
    Ok(StationarityReport {
        grad_norm,
        tol,
        stationary: grad_norm < tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalMinReport {
    pub radius: f64,
    pub samples: usize,
    pub base_loss: f64,
    /// Largest `L(θ) - L(θ + δ)` over the samples (negative if every
    /// perturbation increased the loss).
    pub max_decrease: f64,
    pub slack: f64,
    pub local_min: bool,
}

/// Samples `δ` uniformly from the ball of the given radius and checks that
/// no sample lowers the loss by more than [`LOCAL_MIN_SLACK`].
/// Perturbations are drawn sequentially from `rng` and evaluated in parallel.
pub fn local_min_certificate<O, R>(
    obj: &O,
    theta: &[f64],
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<LocalMinReport>
where
    O: Objective + Sync + ?Sized,
    R: Rng + ?Sized,
{
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let d = theta.len();
    let deltas: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let dir: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = l2_norm(&dir);
            let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
            dir.into_iter().map(|x| x * r / norm).collect()
        })
        .collect();
    let base_loss = obj.loss(theta)?;
    let losses: Vec<f64> = deltas
        .par_iter()
        .map(|delta| {
            let x: Vec<f64> = theta.iter().zip(delta).map(|(a, b)| a + b).collect();
            obj.loss(&x)
        })
        .collect::<Result<_>>()?;
    let max_decrease = losses
        .iter()
        .map(|l| base_loss - l)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LocalMinReport {
        radius,
        samples,
        base_loss,
        max_decrease,
        slack: LOCAL_MIN_SLACK,
        local_min: max_decrease <= LOCAL_MIN_SLACK,
    })
}

/// `J* - J(policy)`, with `J*` from the brute-force oracle. Rounding-level
/// negatives are reported as zero.
pub fn suboptimality_gap<P: JointPolicy + ?Sized>(m: &Mmdp, policy: &P) -> Result<f64> {
    let (j_star, _) = brute_force_optimal(m)?;
    Ok((j_star - evaluate_policy(m, policy)?).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeStats {
    pub k: usize,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// `k² / (2k - 1)`: expected number of pure equilibria of a two-agent
/// `k x k` game with iid continuous payoffs.
pub fn expected_ne_count(k: usize) -> f64 {
    let k = k as f64;
    k * k / (2.0 * k - 1.0)
}

/// Monte-Carlo mean number of pure equilibria of random two-agent `k x k`
/// games; trial `t` draws from stream `t` of a generator seeded by `seed`.
pub fn ne_count_expectation(k: usize, trials: usize, seed: u64) -> Result<NeStats> {
    ne_count_expectation_mapped(k, trials, seed, |x| x)
}

/// As [`ne_count_expectation`], with `map` applied to every payoff first.
pub fn ne_count_expectation_mapped<F>(k: usize, trials: usize, seed: u64, map: F) -> Result<NeStats>
where
    F: Fn(f64) -> f64 + Sync,
{
    if trials == 0 || k == 0 {
        return Err(Error::InvalidArgument(
            "needs k >= 1 and at least one trial".into(),
        ));
    }
    let counts: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let g = random_matrix_game(k, 2, &mut rng)?;
            let payoff: Vec<f64> = g.reward.iter().map(|&x| map(x)).collect();
            Ok(pure_nash_of_payoff(&payoff, g.codec()).len())
        })
        .collect::<Result<_>>()?;
    let n = trials as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = if trials > 1 {
        counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    Ok(NeStats {
        k,
        trials,
        mean,
        stderr: (var / n).sqrt(),
    })
}
