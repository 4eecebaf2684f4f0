//! Grid soccer as a multi-agent reinforcement-learning testbed.
//!
//! The crate is layered bottom-up:
//!
//! - [`env`]: the deterministic grid-soccer simulator and its reward table.
//! - [`handcoded`]: the scripted opponent team.
//! - [`encoding`]: boolean image observations and action index maps.
//! - [`nn`]: a small conv/dense network core with analytic gradients and Adam.
//! - [`dqn`]: concurrent, parameter-sharing and communicating Q-learning teams.
//! - [`coma`]: counterfactual actor-critic with a centralized critic.
//! - [`harness`]: training loops, evaluation, metrics and checkpoints.

pub mod coma;
pub mod dqn;
pub mod encoding;
pub mod env;
pub mod gradcheck;
pub mod handcoded;
pub mod harness;
pub mod nn;
pub mod rng;

pub use env::{Action, ActionKind, AgentId, EnvConfig, GameState, GridPos, RewardEvent, StepOutcome, TeamId};
pub use nn::{NetworkParams, NetworkSpec, Tensor};
