use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;

/// Per-step training record, stored column-wise.
///
/// `returns` is the exact expected return being tracked by the learner (of
/// the stochastic policy for policy-gradient methods, of the greedy policy
/// for value-based ones); `greedy` is the greedy joint action per state.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainTrace {
    pub steps: Vec<usize>,
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub returns: Vec<f64>,
    pub greedy: Vec<Vec<usize>>,
}

impl TrainTrace {
    pub fn push(&mut self, step: usize, loss: f64, grad_norm: f64, ret: f64, greedy: Vec<usize>) {
        self.steps.push(step);
        self.loss.push(loss);
        self.grad_norm.push(grad_norm);
        self.returns.push(ret);
        self.greedy.push(greedy);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_return(&self) -> Option<f64> {
        self.returns.last().copied()
    }

    pub fn last_greedy(&self) -> Option<&[usize]> {
        self.greedy.last().map(Vec::as_slice)
    }

    /// Columns have equal length and no entry is NaN.
    pub fn is_consistent(&self) -> bool {
        let n = self.steps.len();
        [
            self.loss.len(),
            self.grad_norm.len(),
            self.returns.len(),
            self.greedy.len(),
        ]
        .iter()
        .all(|&l| l == n)
            && self
                .loss
                .iter()
                .chain(&self.grad_norm)
                .chain(&self.returns)
                .all(|x| !x.is_nan())
    }

    /// `step,loss,grad_norm,return,greedy_policy` with greedy joint actions
    /// joined by `;`. Floats use the shortest round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,grad_norm,return,greedy_policy\n");
        for i in 0..self.len() {
            let greedy = self.greedy[i]
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";");
            writeln!(
                out,
                "{},{:?},{:?},{:?},{}",
                self.steps[i], self.loss[i], self.grad_norm[i], self.returns[i], greedy
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = TrainTrace::default();
        t.push(0, 1.5, 0.25, -3.0, vec![4, 0]);
        t.push(1, 1.0, 0.0, 10.0, vec![0]);
        assert!(t.is_consistent());
        assert_eq!(
            t.to_csv(),
            "step,loss,grad_norm,return,greedy_policy\n0,1.5,0.25,-3.0,4;0\n1,1.0,0.0,10.0,0\n"
        );
    }

    #[test]
    fn nan_is_inconsistent() {
        let mut t = TrainTrace::default();
        t.push(0, f64::NAN, 0.0, 0.0, vec![]);
        assert!(!t.is_consistent());
    }
}
