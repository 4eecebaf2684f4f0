//! Counterfactual multi-agent policy gradients.
//!
//! A shared softmax policy (agent identity as a one-hot side input) acts from
//! each agent's own observation. A centralized critic sees the whole state and
//! the other agents' actions and scores every action of one agent at once. The
//! critic regresses on forward-view lambda returns; the policy ascends
//! `log pi(u) * A` with the counterfactual advantage `A`. Both update once per
//! finished episode.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dqn::EpsilonSchedule;
use crate::encoding::{encode_basic, encode_critic, Layout, OpponentChannels, PackedObs};
use crate::env::{action_count, Action, AgentId, GameState, Pitch, TeamId};
use crate::nn::{
    backward_accumulate, forward, AdamConfig, AdamState, Gradients, LayerSpec, NetworkParams, NetworkSpec, NnError,
    Tensor,
};
use crate::rng::{stream, StreamRng};

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ComaError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty episode trace")]
    EmptyTrace,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn head_layers(side: usize, actions: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(32, 3, 1),
        LayerSpec::Relu,
        LayerSpec::conv(64, 4, 2),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::ConcatSide { extra_dim: side },
        LayerSpec::dense(128),
        LayerSpec::Relu,
        LayerSpec::dense(64),
        LayerSpec::Relu,
        LayerSpec::dense(actions),
    ]
}

/// Critic side input: one-hot actions of the other agents, then one-hot agent.
pub fn critic_spec(pitch: &Pitch, opponents: OpponentChannels) -> Result<NetworkSpec, NnError> {
    let n = pitch.players();
    let a = action_count(n);
    let input = Layout::CriticFull { opponents }.shape(pitch.height(), pitch.width(), n);
    NetworkSpec::new(input, head_layers((n - 1) * a + n, a))
}

pub fn policy_spec(pitch: &Pitch) -> Result<NetworkSpec, NnError> {
    let n = pitch.players();
    let mut layers = head_layers(n, action_count(n));
    layers.push(LayerSpec::Softmax);
    NetworkSpec::new(Layout::Basic4.shape(pitch.height(), pitch.width(), n), layers)
}

pub fn agent_one_hot(agent: usize, players: usize) -> Vec<f64> {
    let mut v = vec![0.0; players];
    v[agent] = 1.0;
    v
}

/// `[onehot(u_b) for b != agent, in index order] ++ onehot(agent)`.
pub fn critic_side_input(joint: &[usize], agent: usize, actions: usize) -> Vec<f64> {
    let n = joint.len();
    let mut v = vec![0.0; (n - 1) * actions + n];
    for (slot, &u) in joint.iter().enumerate().filter(|(b, _)| *b != agent).map(|(_, u)| u).enumerate() {
        v[slot * actions + u] = 1.0;
    }
    v[(n - 1) * actions + agent] = 1.0;
    v
}

/// Q-values of every action of `agent` with the others' actions fixed.
///
/// `u_minus_a` lists the other agents' actions in index order.
pub fn critic_q(critic: &NetworkParams, state_obs: &Tensor, agent: usize, u_minus_a: &[usize]) -> Result<Vec<f64>, ComaError> {
    let actions = critic.spec().output_shape()[0];
    let n = u_minus_a.len() + 1;
    if agent >= n {
        return Err(ComaError::Shape(format!("agent {agent} with {} other actions", u_minus_a.len())));
    }
    let mut joint = u_minus_a.to_vec();
    joint.insert(agent, 0);
    Ok(critic.predict(state_obs, Some(&critic_side_input(&joint, agent, actions)))?.into_data())
}

/// Forward-view lambda returns for one agent's episode.
///
/// `q_taken[t]` is `Q(s_t, u_t)`; `bootstrap` is `Q(s_T, u_T)` when the
/// episode was cut off rather than ended by a goal.
pub fn sarsa_lambda_targets(
    rewards: &[f64],
    q_taken: &[f64],
    bootstrap: Option<f64>,
    lambda: f64,
    gamma: f64,
) -> Result<Vec<f64>, ComaError> {
    let t_len = rewards.len();
    if t_len == 0 {
        return Err(ComaError::EmptyTrace);
    }
    if q_taken.len() != t_len {
        return Err(ComaError::Shape(format!("{t_len} rewards, {} Q values", q_taken.len())));
    }
    let mut targets = vec![0.0; t_len];
    let mut next = bootstrap.unwrap_or(0.0);
    targets[t_len - 1] = rewards[t_len - 1] + gamma * next;
    for t in (0..t_len - 1).rev() {
        next = targets[t + 1];
        targets[t] = rewards[t] + gamma * ((1.0 - lambda) * q_taken[t + 1] + lambda * next);
    }
    Ok(targets)
}

/// `(1 - eps) * pi + eps / |A|`.
pub fn explore_policy(pi: &[f64], epsilon: f64) -> Vec<f64> {
    let u = epsilon / pi.len() as f64;
    pi.iter().map(|p| (1.0 - epsilon) * p + u).collect()
}

/// `Q[taken] - sum_a pi(a) Q[a]`.
pub fn counterfactual_advantage(q: &[f64], taken: usize, pi: &[f64]) -> f64 {
    q[taken] - q.iter().zip(pi).map(|(a, b)| a * b).sum::<f64>()
}

/// Index drawn from `probs` by inversion.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn side_of(side: &[f64]) -> Option<&[f64]> {
    (!side.is_empty()).then_some(side)
}

/// An empty `side` means the network takes no side input.
pub struct CriticSample {
    pub obs: Tensor,
    pub side: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

/// Mean squared error of the taken-action Q-values and its gradient.
pub fn critic_loss_and_gradient(critic: &NetworkParams, samples: &[CriticSample]) -> Result<(f64, Gradients), ComaError> {
    if samples.is_empty() {
        return Err(ComaError::EmptyTrace);
    }
    let m = samples.len() as f64;
    let mut grads = critic.zeros_like();
    let mut loss = 0.0;
    for s in samples {
        let (q, cache) = forward(critic, &s.obs, side_of(&s.side))?;
        let diff = q.data()[s.action] - s.target;
        loss += diff * diff;
        let mut g = vec![0.0; q.len()];
        g[s.action] = 2.0 * diff / m;
        backward_accumulate(critic, &cache, &g, &mut grads, false)?;
    }
    let loss = loss / m;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(ComaError::NonFinite("critic loss"));
    }
    Ok((loss, grads))
}

pub fn critic_update(critic: &mut NetworkParams, adam: &mut AdamState, samples: &[CriticSample]) -> Result<f64, ComaError> {
    let (loss, grads) = critic_loss_and_gradient(critic, samples)?;
    adam.step(critic, &grads)?;
    Ok(loss)
}

/// An empty `side` means the network takes no side input.
pub struct PolicySample {
    pub obs: Tensor,
    pub side: Vec<f64>,
    pub action: usize,
    pub advantage: f64,
}

/// `J = (1/m) sum log(max(pi(u), floor)) * A` and the gradient of `-J`.
pub fn policy_objective_and_gradient(policy: &NetworkParams, samples: &[PolicySample]) -> Result<(f64, Gradients), ComaError> {
    if samples.is_empty() {
        return Err(ComaError::EmptyTrace);
    }
    let m = samples.len() as f64;
    let mut grads = policy.zeros_like();
    let mut objective = 0.0;
    for s in samples {
        if s.advantage == 0.0 {
            continue;
        }
        let (pi, cache) = forward(policy, &s.obs, side_of(&s.side))?;
        let p = pi.data()[s.action];
        objective += p.max(PROB_FLOOR).ln() * s.advantage;
        let mut g = vec![0.0; pi.len()];
        if p > PROB_FLOOR {
            g[s.action] = -s.advantage / (p * m);
        }
        backward_accumulate(policy, &cache, &g, &mut grads, false)?;
    }
    let objective = objective / m;
    if !objective.is_finite() || !grads.is_finite() {
        return Err(ComaError::NonFinite("policy objective"));
    }
    Ok((objective, grads))
}

pub fn policy_gradient_update(policy: &mut NetworkParams, adam: &mut AdamState, samples: &[PolicySample]) -> Result<f64, ComaError> {
    let (objective, grads) = policy_objective_and_gradient(policy, samples)?;
    adam.step(policy, &grads)?;
    Ok(objective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComaConfig {
    pub critic_learning_rate: f64,
    pub policy_learning_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: EpsilonSchedule,
    pub opponents: OpponentChannels,
}

impl Default for ComaConfig {
    fn default() -> Self {
        Self {
            critic_learning_rate: 0.001,
            policy_learning_rate: 0.001,
            gamma: 0.99,
            lambda: 0.8,
            epsilon: EpsilonSchedule::default(),
            opponents: OpponentChannels::Union,
        }
    }
}

impl ComaConfig {
    pub fn validate(&self) -> Result<(), ComaError> {
        let bad = |m: &str| Err(ComaError::Config(m.into()));
        if !(self.critic_learning_rate > 0.0 && self.policy_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        Ok(())
    }
}

/// One recorded timestep of a team's episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub state: PackedObs,
    pub observations: Vec<PackedObs>,
    pub joint: Vec<usize>,
    /// Pre-exploration policy of each agent.
    pub policies: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComaStats {
    pub critic_loss: Option<f64>,
    pub policy_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PendingStep {
    state: PackedObs,
    observations: Vec<PackedObs>,
    joint: Vec<usize>,
    policies: Vec<Vec<f64>>,
}

/// A COMA-controlled team, always playing as Left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComaTeam {
    config: ComaConfig,
    players: usize,
    critic: NetworkParams,
    critic_adam: AdamState,
    policy: NetworkParams,
    policy_adam: AdamState,
    trace: EpisodeTrace,
    pending: Option<PendingStep>,
    explore_rng: StreamRng,
    steps: u64,
    learning: bool,
    explore_mix: bool,
}

impl ComaTeam {
    pub fn new(config: ComaConfig, pitch: &Pitch, seed: u64, label: &str) -> Result<Self, ComaError> {
        config.validate()?;
        let mut init = stream(seed, &format!("{label}/init"));
        let critic = NetworkParams::he_uniform(&critic_spec(pitch, config.opponents)?, &mut init);
        let policy = NetworkParams::he_uniform(&policy_spec(pitch)?, &mut init);
        Ok(Self {
            critic_adam: AdamState::new(&critic, AdamConfig::with_learning_rate(config.critic_learning_rate)),
            policy_adam: AdamState::new(&policy, AdamConfig::with_learning_rate(config.policy_learning_rate)),
            critic,
            policy,
            players: pitch.players(),
            trace: EpisodeTrace::default(),
            pending: None,
            explore_rng: stream(seed, &format!("{label}/explore")),
            steps: 0,
            learning: true,
            explore_mix: true,
            config,
        })
    }

    pub fn config(&self) -> &ComaConfig {
        &self.config
    }

    pub fn critic(&self) -> &NetworkParams {
        &self.critic
    }

    pub fn policy(&self) -> &NetworkParams {
        &self.policy
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_learning(&mut self, on: bool) {
        self.learning = on;
    }

    /// With the mix off, actions are sampled from the raw policy.
    pub fn set_explore_mix(&mut self, on: bool) {
        self.explore_mix = on;
    }

    pub fn epsilon(&self) -> f64 {
        if self.explore_mix {
            self.config.epsilon.value(self.steps)
        } else {
            0.0
        }
    }

    pub fn load_networks(&mut self, critic: NetworkParams, policy: NetworkParams) -> Result<(), ComaError> {
        if critic.spec() != self.critic.spec() || policy.spec() != self.policy.spec() {
            return Err(ComaError::Config("network spec does not match the protocol".into()));
        }
        self.critic_adam = AdamState::new(&critic, self.critic_adam.config);
        self.policy_adam = AdamState::new(&policy, self.policy_adam.config);
        self.critic = critic;
        self.policy = policy;
        Ok(())
    }

    /// Policy of agent `index` on its own observation.
    pub fn policy_probs(&self, obs: &Tensor, index: usize) -> Result<Vec<f64>, ComaError> {
        Ok(self.policy.predict(obs, Some(&agent_one_hot(index, self.players)))?.into_data())
    }

    fn sample_joint(&mut self, state: &GameState) -> Result<(Vec<PackedObs>, Vec<Vec<f64>>, Vec<usize>), ComaError> {
        let eps = self.epsilon();
        let mut observations = Vec::with_capacity(self.players);
        let mut policies = Vec::with_capacity(self.players);
        let mut joint = Vec::with_capacity(self.players);
        for i in 0..self.players {
            let obs = encode_basic(state, AgentId::new(TeamId::Left, i)).tensor;
            let pi = self.policy_probs(&obs, i)?;
            let u = sample_index(&explore_policy(&pi, eps), &mut self.explore_rng);
            observations.push(PackedObs::pack(&obs));
            policies.push(pi);
            joint.push(u);
        }
        Ok((observations, policies, joint))
    }

    pub fn act(&mut self, state: &GameState) -> Result<Vec<Action>, ComaError> {
        let (observations, policies, joint) = self.sample_joint(state)?;
        if self.learning {
            let s = PackedObs::pack(&encode_critic(state, TeamId::Left, self.config.opponents).tensor);
            self.pending = Some(PendingStep { state: s, observations, joint: joint.clone(), policies });
        }
        Ok(joint.into_iter().map(|u| Action::from_code(u as u8)).collect())
    }

    /// Records the step; learns when the episode ended.
    pub fn observe(&mut self, rewards: &[f64], next_state: &GameState, goal: bool, ended: bool) -> Result<ComaStats, ComaError> {
        let Some(p) = self.pending.take() else {
            return Ok(ComaStats::default());
        };
        self.trace.steps.push(TraceStep {
            state: p.state,
            observations: p.observations,
            joint: p.joint,
            policies: p.policies,
            rewards: rewards.to_vec(),
        });
        self.steps += 1;
        if !ended {
            return Ok(ComaStats::default());
        }
        let bootstrap = if goal {
            None
        } else {
            let (_, _, joint) = self.sample_joint(next_state)?;
            let s = encode_critic(next_state, TeamId::Left, self.config.opponents).tensor;
            Some(self.taken_q(&s, &joint)?)
        };
        let trace = std::mem::take(&mut self.trace);
        self.learn(&trace, bootstrap.as_deref())
    }

    fn taken_q(&self, state: &Tensor, joint: &[usize]) -> Result<Vec<f64>, ComaError> {
        let a = action_count(self.players);
        (0..self.players)
            .map(|i| Ok(self.critic.predict(state, Some(&critic_side_input(joint, i, a)))?.data()[joint[i]]))
            .collect()
    }

    /// One critic and one policy step over a finished episode.
    pub fn learn(&mut self, trace: &EpisodeTrace, bootstrap: Option<&[f64]>) -> Result<ComaStats, ComaError> {
        if trace.steps.is_empty() {
            return Err(ComaError::EmptyTrace);
        }
        let n = self.players;
        let a = action_count(n);
        let t_len = trace.steps.len();
        let states: Vec<Tensor> = trace.steps.iter().map(|s| s.state.unpack()).collect();

        let mut q_vectors = vec![Vec::with_capacity(n); t_len];
        for (t, step) in trace.steps.iter().enumerate() {
            for i in 0..n {
                let q = self.critic.predict(&states[t], Some(&critic_side_input(&step.joint, i, a)))?;
                q_vectors[t].push(q.into_data());
            }
        }

        let mut critic_samples = Vec::with_capacity(t_len * n);
        let mut policy_samples = Vec::with_capacity(t_len * n);
        for i in 0..n {
            let rewards: Vec<f64> = trace.steps.iter().map(|s| s.rewards[i]).collect();
            let q_taken: Vec<f64> = (0..t_len).map(|t| q_vectors[t][i][trace.steps[t].joint[i]]).collect();
            let targets = sarsa_lambda_targets(
                &rewards,
                &q_taken,
                bootstrap.map(|b| b[i]),
                self.config.lambda,
                self.config.gamma,
            )?;
            for (t, step) in trace.steps.iter().enumerate() {
                let u = step.joint[i];
                critic_samples.push(CriticSample {
                    obs: states[t].clone(),
                    side: critic_side_input(&step.joint, i, a),
                    action: u,
                    target: targets[t],
                });
                policy_samples.push(PolicySample {
                    obs: step.observations[i].unpack(),
                    side: agent_one_hot(i, n),
                    action: u,
                    advantage: counterfactual_advantage(&q_vectors[t][i], u, &step.policies[i]),
                });
            }
        }

        let critic_loss = critic_update(&mut self.critic, &mut self.critic_adam, &critic_samples)?;
        // Per-agent sum, mean over time.
        let mut objective = policy_gradient_update(&mut self.policy, &mut self.policy_adam, &policy_samples)?;
        objective *= n as f64;
        Ok(ComaStats { critic_loss: Some(critic_loss), policy_objective: Some(objective) })
    }
}
