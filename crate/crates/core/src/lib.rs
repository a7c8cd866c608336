//! Slow-variable drift and diffusion estimation for stochastic reaction
//! networks with fast/slow time-scale separation.

pub mod cme;
pub mod constrained;
pub mod distribution;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fpe;
pub mod metrics;
pub mod netfile;
pub mod network;
pub mod rng;
pub mod special;
pub mod ssa;
pub mod systems;
mod util;

pub use cme::{
    build_generator, exact_joint_pmf_linear, linear_exact_slow_distribution, linear_qssa_slow_distribution,
    marginalize_slow, poisson_pmf, solve_truncated_cme, stationary_distribution, LatticeDistribution, PoissonLaw,
    SolverOptions, SparseGenerator, TruncatedDomain,
};
pub use constrained::{
    initial_state, run_cssa, run_fast_subsystem, FastAverages, InitialCondition, JumpStatistics, SimOptions,
    StoppingRule,
};
pub use distribution::DiscreteDistribution;
pub use error::{Error, Result};
pub use estimators::{
    build_table, cma_estimate, drift_diffusion_from_propensities, nma_estimate, qssma_bistable_propensities,
    qssma_linear_propensities, DriftDiffusionTable, EffectivePropensity, EffectivePropensitySet, Estimator, Method,
    NmaClosure, QssmaModel,
};
pub use experiments::{run_experiment, ExperimentConfig, ExperimentId};
pub use fpe::{
    birth_death_density, birth_death_pmf_analytic, project_to_pmf, solve_stationary, BirthDeathDensity,
    ContinuousDensity, Density, Projection,
};
pub use metrics::{cost_tally, loglog_slope, relative_l2_error, ErrorRecord, Window};
pub use network::{
    validate_network, RateConvention, Reaction, ReactionNetwork, SlowProjection, StateVector, ValidationReport,
    Violation,
};
pub use netfile::{load_network, parse_network, NetworkFile};
pub use rng::{RandomStream, RNG_ALGORITHM};
