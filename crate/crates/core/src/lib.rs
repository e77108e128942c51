//! Constrained average-reward MDP toolkit: exact chain evaluation, a simulated
//! generative model, a model-based primal-dual solver, an occupancy-LP oracle and
//! lower-bound instance generators.

pub mod chain;
pub mod dual;
pub mod error;
pub mod generative;
pub mod hard;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod simplex;
pub mod structure;

pub use chain::{gain_bias, mixture_value, span, start_gains, GainBias};
pub use dual::{
    dual_regret, dual_regret_bound, dual_step, project_interval, relaxed_schedule, round_to_net, run_primal_dual,
    strict_schedule, DualTrace, Mode, PlannerKind, PrimalDualConfig, PrimalDualRun, Truncation,
};
pub use error::{Error, Result};
pub use generative::{build_empirical_model, perturb_rewards, EmpiricalModel, PerturbedReward};
pub use hard::{build_communicating_hard, build_general_component, build_general_master, GeneralHardParams};
pub use model::{random_instance, CmdpInstance, DeterministicPolicy, MixturePolicy, RandomSpec, Signal, StochasticPolicy};
pub use oracle::{solve_camdp_lp, slater_constant, OccupancySolution};
pub use structure::{structural_params, StructuralParams};
