//! Games whose gradient-based learners stall at suboptimal points, and the
//! machinery that builds them.

use crate::envfile::DEFAULT_MATRIX_GAMMA;
use crate::error::{Error, Result};
use crate::learners::VdParams;
use crate::model::{JointActionCodec, Mmdp};
use crate::policy::ValueTable;

/// Dense payoff over joint actions, flattened in joint-action order.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTensor {
    pub n_agents: usize,
    pub n_actions: usize,
    pub entries: Vec<f64>,
}

impl PayoffTensor {
    pub fn zeros(n_agents: usize, n_actions: usize) -> Self {
        Self {
            n_agents,
            n_actions,
            entries: vec![0.0; JointActionCodec::new(n_agents, n_actions).size()],
        }
    }

    /// Zero tensor with `diag[k]` at `(k, .., k)`.
    pub fn diagonal(n_agents: usize, diag: &[f64]) -> Self {
        let mut t = Self::zeros(n_agents, diag.len());
        for (k, &x) in diag.iter().enumerate() {
            let j = t.diag_index(k);
            t.entries[j] = x;
        }
        t
    }

    pub fn codec(&self) -> JointActionCodec {
        JointActionCodec::new(self.n_agents, self.n_actions)
    }

    /// Joint index of `(k, .., k)`.
    pub fn diag_index(&self, k: usize) -> usize {
        self.codec().encode(&vec![k; self.n_agents])
    }

    pub fn get(&self, actions: &[usize]) -> f64 {
        self.entries[self.codec().encode(actions)]
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }

    pub fn to_game(&self) -> Result<Mmdp> {
        self.to_game_with_gamma(DEFAULT_MATRIX_GAMMA)
    }

    pub fn to_game_with_gamma(&self, gamma: f64) -> Result<Mmdp> {
        Mmdp::matrix_game(self.n_agents, self.n_actions, self.entries.clone(), gamma)
    }

    /// One-state value table holding the payoff.
    pub fn as_value_table(&self) -> ValueTable {
        ValueTable {
            n_states: 1,
            n_actions: self.entries.len(),
            q: self.entries.clone(),
        }
    }
}

/// Two-agent game with payoff `diag(1, .., k)`.
pub fn diag_game(k: usize) -> Result<Mmdp> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "diag_game needs k >= 2, got {k}"
        )));
    }
    let diag: Vec<f64> = (1..=k).map(|i| i as f64).collect();
    PayoffTensor::diagonal(2, &diag).to_game()
}

/// `h_1 = 0`, `h_t = (t-1) h_{t-1} - Σ_{i<t-1} h_i - 1`, for `t = 1..=t_max`.
pub fn h_sequence(t_max: usize) -> Result<Vec<f64>> {
    if t_max == 0 {
        return Err(Error::InvalidArgument("h_sequence needs t_max >= 1".into()));
    }
    let mut h = vec![0.0];
    let mut prefix_sum = 0.0; // Σ_{i < t-1} h_i
    for t in 2..=t_max {
        let prev = h[t - 2];
        h.push((t - 1) as f64 * prev - prefix_sum - 1.0);
        prefix_sum += prev;
    }
    Ok(h)
}

/// `C(t) = h_{k-t+1} - h_k + 1` for `t = 1..=k`. Increasing, at least 1, and
/// each suffix mean `Mean{C(l..k)}` sits strictly below `C(l+1)`.
pub fn diagonal_values(k: usize) -> Result<Vec<f64>> {
    let h = h_sequence(k)?;
    Ok((1..=k).map(|t| h[k - t] - h[k - 1] + 1.0).collect())
}

/// Diagonal tensor over `n` agents and `k` actions carrying [`diagonal_values`].
pub fn theorem2_payoff(k: usize, n: usize) -> Result<PayoffTensor> {
    if k < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "needs at least 2 actions and 2 agents, got k={k}, n={n}"
        )));
    }
    Ok(PayoffTensor::diagonal(n, &diagonal_values(k)?))
}

fn check_weights(w: &[f64], len: usize) -> Result<()> {
    if w.len() != len || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "weights must be positive and cover every joint action".into(),
        ));
    }
    Ok(())
}

/// Minimizer of `½ Σ_a w(a) (f(a) - T(a))²` over `f` with `a_star` among
/// the maximizers of `f`.
///
/// Walking the other entries from largest down, an entry joins the pool
/// with `a_star` while it exceeds the pool's weighted mean; the pooled
/// entries take that mean and the rest keep their payoff.
pub fn restricted_minimizer(t: &PayoffTensor, dist: &[f64], a_star: usize) -> Result<PayoffTensor> {
    check_weights(dist, t.entries.len())?;
    if a_star >= t.entries.len() {
        return Err(Error::InvalidArgument(format!(
            "joint action {a_star} out of range"
        )));
    }
    let mut order: Vec<usize> = (0..t.entries.len()).filter(|&j| j != a_star).collect();
    order.sort_by(|&a, &b| t.entries[b].total_cmp(&t.entries[a]).then(a.cmp(&b)));
    let mut wsum = dist[a_star];
    let mut wx = dist[a_star] * t.entries[a_star];
    let mut pooled = 0;
    for &j in &order {
        if t.entries[j] > wx / wsum {
            wsum += dist[j];
            wx += dist[j] * t.entries[j];
            pooled += 1;
        } else {
            break;
        }
    }
    let level = wx / wsum;
    let mut out = t.clone();
    out.entries[a_star] = level;
    for &j in &order[..pooled] {
        out.entries[j] = level;
    }
    Ok(out)
}

/// Weighted squared error `½ Σ w (f - T)²`.
pub fn weighted_sq_loss(f: &PayoffTensor, t: &PayoffTensor, dist: &[f64]) -> f64 {
    f.entries
        .iter()
        .zip(&t.entries)
        .zip(dist)
        .map(|((a, b), w)| 0.5 * w * (a - b) * (a - b))
        .sum()
}

/// Output of [`construct_local_minima`].
#[derive(Debug, Clone)]
pub struct LocalMinima {
    /// Final payoff: zero off the diagonal, a permutation of
    /// [`diagonal_values`] on it.
    pub payoff: PayoffTensor,
    /// One parameter point per round; round `l` is greedy at
    /// `(greedy[l], .., greedy[l])` with payoff `values[l]`.
    pub params: Vec<VdParams>,
    pub greedy: Vec<usize>,
    pub values: Vec<f64>,
}

/// Builds a payoff whose TD loss has `k` stationary points with distinct
/// greedy joint actions, all but the last suboptimal.
///
/// Round `l` (from 0) masks every unrevealed diagonal entry with the mean of
/// the `k - l` largest diagonal values, decomposes that tensor with its
/// greedy action at the lowest masked diagonal index, reads the greedy
/// index back from the first agent's utilities and reveals the `l`-th
/// smallest diagonal value there.
pub fn construct_local_minima<F>(k: usize, n: usize, mut decomposer: F) -> Result<LocalMinima>
where
    F: FnMut(&ValueTable, &[usize], usize, usize) -> Result<VdParams>,
{
    let c = theorem2_payoff(k, n)?;
    let c_diag: Vec<f64> = (0..k).map(|i| c.entries[c.diag_index(i)]).collect();
    let mut revealed: Vec<Option<f64>> = vec![None; k];
    let mut params = Vec::with_capacity(k);
    let mut greedy = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for l in 0..k {
        let mask = c_diag[l..].iter().sum::<f64>() / (k - l) as f64;
        let diag: Vec<f64> = revealed.iter().map(|r| r.unwrap_or(mask)).collect();
        let f = PayoffTensor::diagonal(n, &diag);
        let choice = revealed
            .iter()
            .position(Option::is_none)
            .expect("an unrevealed entry remains each round");
        let theta = decomposer(&f.as_value_table(), &[f.diag_index(choice)], n, k)?;
        let local = theta.local_greedy(0);
        let unique = (0..n).all(|i| {
            let row = theta.local(i, 0);
            row.iter().filter(|&&x| x == row[local[i]]).count() == 1
        });
        if !unique || local.iter().any(|&a| a != local[0]) {
            return Err(Error::InvalidArgument(format!(
                "decomposer returned local greedy actions {local:?}, expected a unique common action"
            )));
        }
        let j = local[0];
        if revealed[j].is_some() {
            return Err(Error::InvalidArgument(format!(
                "decomposer selected an already revealed diagonal entry {j}"
            )));
        }
        revealed[j] = Some(c_diag[l]);
        params.push(theta);
        greedy.push(j);
        values.push(c_diag[l]);
    }
    let diag: Vec<f64> = revealed.into_iter().map(Option::unwrap).collect();
    Ok(LocalMinima {
        payoff: PayoffTensor::diagonal(n, &diag),
        params,
        greedy,
        values,
    })
}
