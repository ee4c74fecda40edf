//! Learners: gradient descent on the multi-agent losses, single-agent
//! solvers for the transformed model, and the transform-learn-distill
//! pipeline.

pub mod gd;
pub mod mapg;
pub mod single;
pub mod tad;
pub mod trace;
pub mod vd;

pub use gd::{gd_run, l2_norm, GdConfig, GdResult, Objective};
pub use mapg::{mapg_loss_and_grad, mapg_policy_gradient, MapgObjective, MapgParams};
pub use single::{
    q_learning, softmax_pg, value_iteration, LrSchedule, PgConfig, QLearningConfig, QLearningMode,
};
pub use tad::{tad_run, Sarl, TadConfig, TadOutcome};
pub use trace::TrainTrace;
pub use vd::{
    duplex_decompose, igm_check, igm_holds, uniform_dist, vd_forward, vd_loss_and_grad,
    vd_loss_and_grad_against, VdObjective, VdParams, VdVariant, LAMBDA_FLOOR,
};
