//! Habit-aware long-term recommendation.
//!
//! The crate models each user's history with each item as a small
//! relationship state, estimates how a recommendation changes the chance of
//! a listen today ("clickiness") and how many future active days a listen
//! buys ("stickiness"), and combines the two into a relative Q-value for
//! ranking. A synthetic simulator with hidden ground truth backs every model,
//! estimator and policy-improvement routine with checkable oracles.

pub mod domain;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod models;
pub mod policy_improvement;
pub mod qvalue;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use domain::{
    consumption, day_reward, item_lifetime_rewards, lifetime_reward, successor_states,
    update_relationship_state, Context, DayOutcome, ItemId, RelationshipState, RewardSpec,
    Trajectory, UserState,
};
pub use error::{Error, Result};
pub use simulator::{SimConfig, Simulator};
pub use stats::EstimatorResult;
