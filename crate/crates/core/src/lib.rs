//! Cooperative multi-agent decision processes: exact evaluation, the
//! sequential (agent-by-agent) transform, learners, and constructions of
//! games with spurious local minima.

pub mod analysis;
pub mod constructions;
pub mod envfile;
pub mod error;
pub mod eval;
pub mod learners;
pub mod model;
pub mod nash;
pub mod policy;
pub mod transform;

pub use error::{Error, Result};
pub use model::{JointActionCodec, Mdp, Mmdp, ModelView, Violation};
pub use policy::{
    CoordinationPolicy, DecentralizedPolicySet, DeterministicJointPolicy, JointPolicy,
    StochasticPolicy, ValueTable,
};
