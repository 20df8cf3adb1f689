//! KL-regularised stochastic control: exact solvers, Psi-iteration and Psi-learning.
//!
//! Tabular MDPs with exact KL-duality evaluators, backward Ψ recursions and
//! Ψ-value iteration, model-free Ψ-learning with Q-learning and TD(0)
//! baselines, least-squares Ψ-learning with a Gaussian-form basis, the grid
//! world and cart-pole benchmarks, and a seeded experiment harness.

pub mod config;
pub mod envs;
pub mod error;
pub mod eval;
pub mod harness;
pub mod kl;
pub mod lqr;
pub mod lspsi;
pub mod mdp;
pub mod psi;
pub mod quadrature;
pub mod random;
pub mod solvers;
pub mod tabular;

pub use error::{Error, Result};
pub use eval::expected_cost;
pub use mdp::{
    posterior_log_weight, task_log_likelihood, trajectory_log_density, CostTable, FiniteMdp, Horizon, PolicyKind,
    Start, TabularPolicy, Trajectory, TransitionSample,
};
