//! Dispatch of aggregated flexible loads by KL-regularized Markov control.
//!
//! A population of small loads (heaters, coolers, water tanks) is modeled as
//! a Markov chain over discrete power bins. Left alone it follows passive
//! dynamics estimated from metered power traces; a dispatcher reshapes those
//! dynamics into a policy that trades utility collected along a horizon
//! against the KL divergence from passive behaviour, weighted by a
//! temperature `gamma`. That trade-off has a closed-form solution through
//! the desirability `z = exp(-phi / gamma)`, which this crate computes two
//! ways: exactly, by a linear backward recursion over a known matrix
//! ([`solver`]), and model-free, from sampled passive trajectories
//! ([`zlearn`]), including trajectories drawn from a noisy ensemble of
//! matrix estimates. [`ingest`] builds the models from traces, [`dispatch`]
//! propagates occupancies and scores policies, and [`io`] reads and writes
//! the on-disk formats.
//!
//! Numeric code is generic over [`Real`] (`f64` or `f32`); the aliases at
//! the crate root fix the default `f64` precision.

pub mod dispatch;
pub mod error;
pub mod ingest;
pub mod io;
pub mod math;
pub mod model;
pub mod scalar;
pub mod solver;
pub mod zlearn;

pub use error::{Error, ErrorClass, MatrixViolation, Result};
pub use scalar::Real;

/// Default-precision discretization of a power range.
pub type StateSpace = model::StateSpace<f64>;
/// Default-precision row-stochastic transition matrix.
pub type TransitionMatrix = model::TransitionMatrix<f64>;
/// Default-precision utility schedule.
pub type UtilitySchedule = model::UtilitySchedule<f64>;
/// Default-precision desirability table.
pub type DesirabilityTable = model::DesirabilityTable<f64>;
/// Default-precision value table.
pub type ValueTable = model::ValueTable<f64>;
/// Default-precision time-indexed policy.
pub type Policy = model::Policy<f64>;
/// Default-precision occupancy trajectory.
pub type OccupancyTrajectory = model::OccupancyTrajectory<f64>;
/// Default-precision solve and learning configuration.
pub type ControlConfig = model::ControlConfig<f64>;
/// Default-precision learning-rate schedule.
pub type LearningRate = model::LearningRate<f64>;
/// Default-precision power trace.
pub type PowerTrace = ingest::PowerTrace<f64>;
/// Default-precision noisy matrix ensemble.
pub type NoisyEnsemble = ingest::NoisyEnsemble<f64>;
/// Default-precision trajectory source for learning.
pub type PassiveSource = zlearn::PassiveSource<f64>;
/// Default-precision learning run result.
pub type LearningRun = zlearn::LearningRun<f64>;
