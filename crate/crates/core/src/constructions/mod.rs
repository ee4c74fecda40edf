//! Concrete games: the printed tables, the diagonal games behind the
//! suboptimality results, and seeded random generators.

mod builtin;
mod minima;
mod random;

pub use builtin::{builtin_game, builtin_names, multitask_suite, MATGAME2, MULTITASK, TABLE1};
pub use minima::{
    construct_local_minima, diag_game, diagonal_values, h_sequence, restricted_minimizer,
    theorem2_payoff, weighted_sq_loss, LocalMinima, PayoffTensor,
};
pub use random::{
    random_coordination, random_decentralized, random_matrix_game, random_mmdp, RandomMmdpSpec,
    PAYOFF_RANGE,
};
