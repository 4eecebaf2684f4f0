use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coma::ComaTeam;
use crate::dqn::DqnTeam;
use crate::env::{action_count, Action, GameState, Pitch, TeamId};
use crate::handcoded::handcoded_actions;
use crate::nn::NetworkParams;
use crate::rng::{stream, StreamRng};

use super::config::{AgentSpec, Protocol};
use super::HarnessError;

/// Exploration floor kept by DQN teams during evaluation.
pub const EVAL_EPSILON: f64 = 0.05;

/// A team policy. Controllers always see the game from the Left side; the
/// runner mirrors states and actions for the Right team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    Random { players: usize, rng: StreamRng },
    Handcoded,
    Dqn(Box<DqnTeam>),
    Coma(Box<ComaTeam>),
}

/// What one observed step produced, for the metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub loss: Option<f64>,
}

impl Controller {
    /// Fresh controller; learned teams draw their streams from `"{label}/..."`.
    pub fn build(spec: &AgentSpec, pitch: &Pitch, seed: u64, label: &str) -> Result<Self, HarnessError> {
        spec.validate()?;
        let mut c = match spec.protocol {
            Protocol::Random => Controller::Random {
                players: pitch.players(),
                rng: stream(seed, &format!("{label}/explore")),
            },
            Protocol::Handcoded => Controller::Handcoded,
            Protocol::Coma => Controller::Coma(Box::new(ComaTeam::new(spec.coma.clone(), pitch, seed, label)?)),
            _ => {
                let mut dqn = spec.dqn.clone();
                dqn.protocol = spec.protocol.dqn_kind().expect("dqn protocol");
                Controller::Dqn(Box::new(DqnTeam::new(dqn, pitch, seed, label)?))
            }
        };
        c.set_learning(spec.learning);
        Ok(c)
    }

    pub fn act(&mut self, canonical: &GameState) -> Result<Vec<Action>, HarnessError> {
        Ok(match self {
            Controller::Random { players, rng } => {
                let a = action_count(*players);
                (0..*players).map(|_| Action::from_code(rng.gen_range(0..a) as u8)).collect()
            }
            Controller::Handcoded => handcoded_actions(canonical, TeamId::Left),
            Controller::Dqn(t) => t.act(canonical)?,
            Controller::Coma(t) => t.act(canonical)?,
        })
    }

    /// Feeds back the team's rewards and the pre-reset state after the step.
    pub fn observe(&mut self, rewards: &[f64], final_state: &GameState, goal: bool, ended: bool) -> Result<StepStats, HarnessError> {
        Ok(match self {
            Controller::Dqn(t) => StepStats { loss: t.observe(rewards, final_state, goal, ended)?.loss },
            Controller::Coma(t) => StepStats { loss: t.observe(rewards, final_state, goal, ended)?.critic_loss },
            _ => StepStats::default(),
        })
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Controller::Dqn(t) => Some(t.epsilon()),
            Controller::Coma(t) => Some(t.epsilon()),
            _ => None,
        }
    }

    pub fn set_learning(&mut self, on: bool) {
        match self {
            Controller::Dqn(t) => t.set_learning(on),
            Controller::Coma(t) => t.set_learning(on),
            _ => {}
        }
    }

    /// Frozen weights; DQN keeps the final epsilon, COMA samples its raw policy.
    pub fn set_evaluation(&mut self) {
        self.set_learning(false);
        match self {
            Controller::Dqn(t) => t.set_epsilon_override(Some(EVAL_EPSILON)),
            Controller::Coma(t) => t.set_explore_mix(false),
            _ => {}
        }
    }

    /// Parameter sets in checkpoint order.
    pub fn networks(&self) -> Vec<&NetworkParams> {
        match self {
            Controller::Dqn(t) => t.networks(),
            Controller::Coma(t) => vec![t.critic(), t.policy()],
            _ => Vec::new(),
        }
    }

    pub fn load_networks(&mut self, mut params: Vec<NetworkParams>) -> Result<(), HarnessError> {
        match self {
            Controller::Dqn(t) => t.load_networks(params)?,
            Controller::Coma(t) => {
                if params.len() != 2 {
                    return Err(HarnessError::Incompatible(format!("COMA needs 2 networks, got {}", params.len())));
                }
                let policy = params.pop().expect("two networks");
                let critic = params.pop().expect("two networks");
                t.load_networks(critic, policy)?;
            }
            _ if params.is_empty() => {}
            _ => return Err(HarnessError::Incompatible("scripted teams have no networks".into())),
        }
        Ok(())
    }
}
