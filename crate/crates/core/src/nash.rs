//! Pure Nash equilibria of common-payoff matrix games.

use crate::error::{Error, Result};
use crate::model::{JointActionCodec, Mmdp};

/// Whether no single agent can strictly improve `payoff[joint]` by deviating.
pub fn is_pure_nash(payoff: &[f64], codec: JointActionCodec, joint: usize) -> bool {
    let here = payoff[joint];
    let actions = codec.decode(joint);
    let mut deviated = actions.clone();
    for i in 0..codec.n_agents {
        for b in 0..codec.n_actions {
            if b == actions[i] {
                continue;
            }
            deviated[i] = b;
            if payoff[codec.encode(&deviated)] > here {
                return false;
            }
        }
        deviated[i] = actions[i];
    }
    true
}

/// All pure equilibria of a payoff tensor, as ascending joint indices.
pub fn pure_nash_of_payoff(payoff: &[f64], codec: JointActionCodec) -> Vec<usize> {
    (0..codec.size())
        .filter(|&j| is_pure_nash(payoff, codec, j))
        .collect()
}

/// Pure equilibria of a one-state, horizon-1 game. Ties count as equilibria.
pub fn pure_nash_enumerate(game: &Mmdp) -> Result<Vec<usize>> {
    if !game.is_matrix_game() {
        return Err(Error::NotMatrixGame(format!(
            "{} states, horizon {:?}",
            game.n_states, game.horizon
        )));
    }
    game.check_enumerable()?;
    Ok(pure_nash_of_payoff(&game.reward, game.codec()))
}
