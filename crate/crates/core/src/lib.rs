//! Order-gap analysis for learners that alternate an event-driven expansion
//! operator with an event-free consolidation operator.
//!
//! * [`dynamics`]: operator pairs, samplers, order-gaps and trajectories.
//! * [`analysis`]: Jacobians, commutator statistics, fixed points and
//!   empirical constants.
//! * [`stopping`]: the windowed order-gap stopping rule and its bounds.
//! * [`bandit`], [`actor_critic`], [`rlm`], [`sgd`]: domain instantiations.

pub mod actor_critic;
pub mod analysis;
pub mod bandit;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod linear;
pub mod rlm;
pub mod rng;
pub mod serde_matrix;
pub mod sgd;
pub mod stopping;

pub use analysis::{
    commutator, commutator_stats, consolidation_fixed_point, effective_equilibrium, estimate_constants,
    finite_diff_jacobian, CommutatorReport, ConstantsEstimate, EquilibriumOptions, EquilibriumReport, ExpectationRule,
    JacobianPair, MonteCarlo,
};
pub use dynamics::{
    decision_order_gap, order_gap, run_trajectory, step, Event, EventSampler, FiniteEvents, GapSample, Norm,
    OperatorPair, OrderGap, OrderGapTrace, SamplingMode, StateVector, Trajectory,
};
pub use error::{Error, Result};
pub use linear::LinearPair;
pub use rng::{child_rng, root_rng, SimRng};
pub use stopping::{
    expected_gap_stop, noise_floor, stopping_bounds, suboptimality_bounds, windowed_stop, windowed_stop_observed,
    BoundChecks, NoiseFloor, StepView, StopRule, StoppingBounds, StoppingConfig, StoppingReport, TheoryConstants,
};
