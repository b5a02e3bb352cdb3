//! Value-at-Risk (quantile) optimization for finite Markov decision processes.
//!
//! A VaR-optimal policy is found by solving a sequence of probabilistic
//! MDPs: the inner problem optimizes the probability that the reward stays
//! at or below a target level, and the outer loop moves the target level
//! through the reward support. Two settings are covered:
//!
//! * steady state ([`steady`]): the VaR of the limiting per-step reward,
//!   with the inner problem solved as an average-reward MDP ([`average`]);
//! * finite horizon ([`finite`]): the VaR of the accumulated reward over
//!   `T` steps, with the inner problem solved on an augmented state
//!   `(s, remaining goal)` by backward induction ([`augmented`]).
//!
//! Both maximization and minimization variants are provided, together with
//! enumeration baselines, optimality certificates and brute-force oracles
//! for small instances.

pub mod augmented;
pub mod average;
pub mod chain;
pub mod error;
pub mod finite;
pub mod instances;
pub mod mdp;
pub mod report;
pub mod steady;

pub use error::{Result, VarMdpError};
pub use mdp::{
    left_predecessor, reward_support, validate, FiniteMdp, MdpBuilder, ProbabilityLevel,
    Resolution, RewardSupport, Sense, StationaryPolicy, ValidationReport,
};
