//! Plain full-batch gradient descent with a training trace.

use crate::error::{Error, Result};

use super::trace::TrainTrace;

/// A differentiable loss over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;

    fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, x: &[f64]) -> Result<f64> {
        Ok(self.loss_and_grad(x)?.0)
    }

    /// Return and greedy joint action per state to record alongside the
    /// loss. Defaults to the negated loss and no policy.
    fn progress(&self, _x: &[f64], loss: f64) -> Result<(f64, Vec<usize>)> {
        Ok((-loss, Vec::new()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub lr: f64,
    pub steps: usize,
    /// Stop once the gradient norm falls below this.
    pub stop_tol: f64,
    /// Record every `record_every`-th step; the final step is always recorded.
    pub record_every: usize,
}

impl GdConfig {
    pub fn new(lr: f64, steps: usize) -> Self {
        Self {
            lr,
            steps,
            stop_tol: 0.0,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GdResult {
    pub params: Vec<f64>,
    pub trace: TrainTrace,
    /// Whether the run ended on the gradient-norm criterion.
    pub converged: bool,
}

pub fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `x_{t+1} = x_t - lr * ∇f(x_t)` for at most `steps` updates. Row `t` of
/// the trace describes `x_t`; a non-finite loss or gradient aborts.
pub fn gd_run<O: Objective + ?Sized>(obj: &O, init: Vec<f64>, cfg: GdConfig) -> Result<GdResult> {
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    if init.len() != obj.dim() {
        return Err(Error::Shape(format!(
            "initial point has {} coordinates, objective expects {}",
            init.len(),
            obj.dim()
        )));
    }
    let every = cfg.record_every.max(1);
    let mut x = init;
    let mut trace = TrainTrace::default();
    for step in 0..=cfg.steps {
        let (loss, grad) = obj.loss_and_grad(&x)?;
        let norm = l2_norm(&grad);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite {
                step,
                value: if loss.is_finite() { norm } else { loss },
            });
        }
        let converged = norm < cfg.stop_tol;
        if converged || step == cfg.steps || step % every == 0 {
            let (ret, greedy) = obj.progress(&x, loss)?;
            trace.push(step, loss, norm, ret, greedy);
        }
        if converged || step == cfg.steps {
            return Ok(GdResult {
                params: x,
                trace,
                converged,
            });
        }
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= cfg.lr * gi;
        }
    }
    unreachable!()
}
