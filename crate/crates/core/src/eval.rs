//! Exact policy evaluation, the Bellman operator, value iteration and the
//! brute-force optimal-policy oracle.
//!
//! Infinite-horizon models are evaluated by solving `(I - γ P_π) V = r_π`
//! with a dense LU factorization; episodic models by backward induction
//! with the (stationary) policy applied at every step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Mdp, Mmdp, ModelView};
use crate::policy::{DeterministicJointPolicy, JointPolicy, StochasticPolicy, ValueTable};

fn check_policy_shape(view: &ModelView<'_>, policy: &StochasticPolicy) -> Result<()> {
    if policy.n_states != view.n_states
        || policy.n_actions != view.n_actions
        || policy.probs.len() != view.n_states * view.n_actions
    {
        return Err(Error::Shape(format!(
            "policy is {}x{}, model is {}x{}",
            policy.n_states, policy.n_actions, view.n_states, view.n_actions
        )));
    }
    Ok(())
}

/// `r_π(s)` and `P_π(s, s')` under a stochastic policy.
fn induced_chain(view: &ModelView<'_>, policy: &StochasticPolicy) -> (Vec<f64>, Vec<f64>) {
    let ns = view.n_states;
    let mut r_pi = vec![0.0; ns];
    let mut p_pi = vec![0.0; ns * ns];
    for s in 0..ns {
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            r_pi[s] += pa * view.r(s, a);
            let row = view.p_row(s, a);
            let out = &mut p_pi[s * ns..][..ns];
            for (o, &p) in out.iter_mut().zip(row) {
                *o += pa * p;
            }
        }
    }
    (r_pi, p_pi)
}

fn system_matrix(ns: usize, gamma: f64, p_pi: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(ns, ns, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * p_pi[i * ns + j]
    })
}

/// Steps-to-go value vectors `V_0 = 0, .., V_H` for an episodic model.
fn backward_values(view: &ModelView<'_>, h: usize, r_pi: &[f64], p_pi: &[f64]) -> Vec<Vec<f64>> {
    let ns = view.n_states;
    let mut vs = Vec::with_capacity(h + 1);
    vs.push(vec![0.0; ns]);
    for step in 1..=h {
        let prev = &vs[step - 1];
        let v: Vec<f64> = (0..ns)
            .map(|s| {
                let cont: f64 = p_pi[s * ns..][..ns]
                    .iter()
                    .zip(prev)
                    .map(|(p, v)| p * v)
                    .sum();
                r_pi[s] + view.gamma * cont
            })
            .collect();
        vs.push(v);
    }
    vs
}

/// State values `V^π` (for episodic models, the full-horizon values).
pub fn state_values(view: &ModelView<'_>, policy: &StochasticPolicy) -> Result<Vec<f64>> {
    check_policy_shape(view, policy)?;
    let (r_pi, p_pi) = induced_chain(view, policy);
    match view.horizon {
        Some(h) => Ok(backward_values(view, h, &r_pi, &p_pi).pop().unwrap()),
        None => {
            let ns = view.n_states;
            let lu = system_matrix(ns, view.gamma, &p_pi).lu();
            let v = lu.solve(&DVector::from_vec(r_pi)).ok_or(Error::Singular)?;
            Ok(v.iter().copied().collect())
        }
    }
}

/// Exact expected discounted return `J(π) = <d_0, V^π>`.
pub fn expected_return(view: &ModelView<'_>, policy: &StochasticPolicy) -> Result<f64> {
    let v = state_values(view, policy)?;
    Ok(view.initial_dist.iter().zip(&v).map(|(d, v)| d * v).sum())
}

/// `J(π)` together with `∂J/∂π(a|s)`, treating every table entry as a free
/// coordinate: `Σ_t γ^t Pr(s_t = s) Q_{H-t}(s, a)` for episodic models and
/// `d^π(s) Q^π(s, a)` with the unnormalized discounted occupancy otherwise.
pub fn return_and_gradient(
    view: &ModelView<'_>,
    policy: &StochasticPolicy,
) -> Result<(f64, Vec<f64>)> {
    check_policy_shape(view, policy)?;
    let ns = view.n_states;
    let na = view.n_actions;
    let (r_pi, p_pi) = induced_chain(view, policy);
    let q_from = |v: &[f64]| -> Vec<f64> {
        let mut q = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let cont: f64 = view.p_row(s, a).iter().zip(v).map(|(p, v)| p * v).sum();
                q[s * na + a] = view.r(s, a) + view.gamma * cont;
            }
        }
        q
    };
    let mut grad = vec![0.0; ns * na];
    let j = match view.horizon {
        Some(h) => {
            let vs = backward_values(view, h, &r_pi, &p_pi);
            let mut rho = view.initial_dist.to_vec();
            let mut disc = 1.0;
            for t in 0..h {
                let q = q_from(&vs[h - t - 1]);
                for s in 0..ns {
                    if rho[s] == 0.0 {
                        continue;
                    }
                    let w = disc * rho[s];
                    for a in 0..na {
                        grad[s * na + a] += w * q[s * na + a];
                    }
                }
                let mut next = vec![0.0; ns];
                for s in 0..ns {
                    if rho[s] == 0.0 {
                        continue;
                    }
                    for (n, &p) in next.iter_mut().zip(&p_pi[s * ns..][..ns]) {
                        *n += rho[s] * p;
                    }
                }
                rho = next;
                disc *= view.gamma;
            }
            view.initial_dist
                .iter()
                .zip(&vs[h])
                .map(|(d, v)| d * v)
                .sum()
        }
        None => {
            let a = system_matrix(ns, view.gamma, &p_pi);
            let v = a
                .clone()
                .lu()
                .solve(&DVector::from_vec(r_pi))
                .ok_or(Error::Singular)?;
            let occupancy = a
                .transpose()
                .lu()
                .solve(&DVector::from_column_slice(view.initial_dist))
                .ok_or(Error::Singular)?;
            let v: Vec<f64> = v.iter().copied().collect();
            let q = q_from(&v);
            for s in 0..ns {
                for a in 0..na {
                    grad[s * na + a] = occupancy[s] * q[s * na + a];
                }
            }
            view.initial_dist.iter().zip(&v).map(|(d, v)| d * v).sum()
        }
    };
    Ok((j, grad))
}

/// Exact expected return of any multi-agent policy on an MMDP.
pub fn evaluate_policy<P: JointPolicy + ?Sized>(model: &Mmdp, policy: &P) -> Result<f64> {
    if policy.n_states() != model.n_states || policy.n_joint_actions() != model.n_joint() {
        return Err(Error::Shape(format!(
            "policy covers {} states x {} joint actions, model has {} x {}",
            policy.n_states(),
            policy.n_joint_actions(),
            model.n_states,
            model.n_joint()
        )));
    }
    expected_return(&model.joint_view(), &policy.joint_table())
}

/// Exact expected return of a policy on a single-agent MDP.
pub fn evaluate_mdp(mdp: &Mdp, policy: &StochasticPolicy) -> Result<f64> {
    expected_return(&mdp.view(), policy)
}

/// One synchronous backup with an explicit bootstrap mask.
pub fn bellman_backup_masked(q: &ValueTable, view: &ModelView<'_>, boot: &[bool]) -> ValueTable {
    let v = q.values();
    let mut out = ValueTable::zeros(view.n_states, view.n_actions);
    for s in 0..view.n_states {
        for a in 0..view.n_actions {
            let cont = if boot[s] {
                view.p_row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum()
            } else {
                0.0
            };
            out.q[s * view.n_actions + a] = view.r(s, a) + view.gamma * cont;
        }
    }
    out
}

/// `(TQ)(s,a) = r(s,a) + γ Σ_s' P(s'|s,a) max_a' Q(s',a')`; terminal backups
/// of episodic models drop the continuation term.
pub fn bellman_backup(q: &ValueTable, view: &ModelView<'_>) -> Result<ValueTable> {
    if q.n_states != view.n_states || q.n_actions != view.n_actions {
        return Err(Error::Shape("value table does not match model".into()));
    }
    Ok(bellman_backup_masked(q, view, &view.bootstrap_mask()))
}

/// Value iteration from zero until the sup-norm Bellman residual drops
/// below `tol`. Returns the final table and the number of sweeps.
pub fn value_iteration_view(view: &ModelView<'_>, tol: f64) -> (ValueTable, usize) {
    let boot = view.bootstrap_mask();
    let mut q = ValueTable::zeros(view.n_states, view.n_actions);
    let mut sweeps = 0;
    loop {
        let next = bellman_backup_masked(&q, view, &boot);
        sweeps += 1;
        let res = next.sup_distance(&q);
        q = next;
        if res < tol {
            return (q, sweeps);
        }
    }
}

/// Tolerance of the optimal-policy oracle.
pub const ORACLE_TOL: f64 = 1e-10;

/// Optimal value and a deterministic optimal joint policy, by value
/// iteration over the joint-action model.
pub fn brute_force_optimal(model: &Mmdp) -> Result<(f64, DeterministicJointPolicy)> {
    model.ensure_valid()?;
    model.check_enumerable()?;
    let view = model.joint_view();
    let (q, _) = value_iteration_view(&view, ORACLE_TOL);
    let mu = DeterministicJointPolicy {
        n_agents: model.n_agents,
        n_actions: model.n_actions,
        actions: q.greedy(),
    };
    let j = evaluate_policy(model, &mu)?;
    Ok((j, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::DecentralizedPolicySet;

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
    fn table1_deterministic_and_uniform() {
        let m = table1();
        let det = DecentralizedPolicySet::deterministic(3, &[vec![0], vec![0]]);
        assert_eq!(evaluate_policy(&m, &det).unwrap(), 10.0);
        let uni = DecentralizedPolicySet::uniform(2, 1, 3);
        let j = evaluate_policy(&m, &uni).unwrap();
        assert!((j - (-164.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn geometric_self_loop() {
        let mdp = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.5, vec![1.0], None).unwrap();
        let j = evaluate_mdp(&mdp, &StochasticPolicy::uniform(1, 1)).unwrap();
        assert!((j - 2.0).abs() < 1e-14);
        let (q, _) = value_iteration_view(&mdp.view(), 1e-12);
        assert!((q.get(0, 0) - 2.0).abs() < 1e-11);
    }

    #[test]
    fn backup_on_matrix_game_is_payoff() {
        let m = table1();
        let q = ValueTable {
            n_states: 1,
            n_actions: 9,
            q: (0..9).map(|x| x as f64 * 3.7 - 11.0).collect(),
        };
        let tq = bellman_backup(&q, &m.joint_view()).unwrap();
        assert_eq!(tq.q, m.reward);
    }

    #[test]
    fn zero_reward_backup_only_propagates() {
        // two states, two actions, deterministic swaps
        let mdp = Mdp::new(
            2,
            2,
            vec![0., 1., 1., 0., 1., 0., 0., 1.],
            vec![0.0; 4],
            0.9,
            vec![1.0, 0.0],
            None,
        )
        .unwrap();
        let q = ValueTable {
            n_states: 2,
            n_actions: 2,
            q: vec![1.0, 4.0, -2.0, 3.0],
        };
        let tq = bellman_backup(&q, &mdp.view()).unwrap();
        assert_eq!(tq.q, vec![0.9 * 3.0, 0.9 * 4.0, 0.9 * 4.0, 0.9 * 3.0]);
    }

    #[test]
    fn brute_force_on_table1() {
        let (j, mu) = brute_force_optimal(&table1()).unwrap();
        assert_eq!(j, 10.0);
        assert_eq!(mu.actions, vec![0]);
    }

    #[test]
    fn gradient_on_matrix_game_is_payoff() {
        let m = table1();
        let uni = StochasticPolicy::uniform(1, 9);
        let (j, g) = return_and_gradient(&m.joint_view(), &uni).unwrap();
        assert!((j + 164.0 / 9.0).abs() < 1e-12);
        assert_eq!(g, m.reward);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = table1();
        let wrong = DecentralizedPolicySet::uniform(2, 1, 2);
        assert!(matches!(evaluate_policy(&m, &wrong), Err(Error::Shape(_))));
    }
}
