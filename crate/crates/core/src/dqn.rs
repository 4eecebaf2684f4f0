//! Q-learning teams: concurrent, parameter-sharing and coordinated with
//! communication.
//!
//! A [`DqnTeam`] always plays as the Left team; callers hand it mirrored states
//! when it plays on the right.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{encode_basic, encode_comm, CommSymbol, EncodingError, JointCommAction, PackedObs};
use crate::env::{action_count, Action, AgentId, GameState, Pitch, TeamId};
use crate::nn::{backward_accumulate, forward, AdamConfig, AdamState, LayerSpec, NetworkParams, NetworkSpec, NnError, Tensor};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Error)]
pub enum DqnError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("replay buffer holds {have} experiences, minibatch needs {need}")]
    NotReady { have: usize, need: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Q-network layer stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QArch {
    /// conv 32@3x3/1, conv 64@3x3/1, conv 64@4x4/2, dense 256, dense |A|.
    #[default]
    Paper,
    /// conv 16@3x3/1, dense 64, dense |A|; for pitches too small for `Paper`.
    Compact,
}

pub fn q_network_spec(arch: QArch, input: [usize; 3], actions: usize) -> Result<NetworkSpec, NnError> {
    let layers = match arch {
        QArch::Paper => vec![
            LayerSpec::conv(32, 3, 1),
            LayerSpec::Relu,
            LayerSpec::conv(64, 3, 1),
            LayerSpec::Relu,
            LayerSpec::conv(64, 4, 2),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::dense(256),
            LayerSpec::Relu,
            LayerSpec::dense(actions),
        ],
        QArch::Compact => vec![
            LayerSpec::conv(16, 3, 1),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::dense(64),
            LayerSpec::Relu,
            LayerSpec::dense(actions),
        ],
    };
    NetworkSpec::new(input.to_vec(), layers)
}

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 0.5, end: 0.05, decay_steps: 300_000 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, t: u64) -> f64 {
        if self.decay_steps == 0 || t >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * (t as f64 / self.decay_steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub s: PackedObs,
    pub a: usize,
    pub r: f64,
    pub s_next: PackedObs,
    pub terminal: bool,
}

/// FIFO experience store with uniform sampling (with replacement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity.min(4096)) }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<&Experience>, DqnError> {
        if self.items.len() < m || m == 0 {
            return Err(DqnError::NotReady { have: self.items.len(), need: m });
        }
        Ok((0..m).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice over the network's output head.
///
/// Always draws one uniform number; a second draw picks the random index.
pub fn select_action<R: Rng + ?Sized>(
    q_net: &NetworkParams,
    obs: &Tensor,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, DqnError> {
    let head = q_net.spec().output_shape()[0];
    if rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..head));
    }
    Ok(argmax(q_net.predict(obs, None)?.data()))
}

/// Mean squared TD error over `batch` and its gradient for `q_net`.
///
/// Targets use `target_net` and are held constant; terminal transitions drop
/// the bootstrap term.
pub fn td_loss_and_gradient(
    q_net: &NetworkParams,
    target_net: &NetworkParams,
    batch: &[&Experience],
    gamma: f64,
) -> Result<(f64, crate::nn::Gradients), DqnError> {
    if batch.is_empty() {
        return Err(DqnError::Config("empty TD batch".into()));
    }
    let m = batch.len() as f64;
    let mut grads = q_net.zeros_like();
    let mut loss = 0.0;
    for e in batch {
        let bootstrap = if e.terminal {
            0.0
        } else {
            let next = target_net.predict(&e.s_next.unpack(), None)?;
            next.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let y = e.r + gamma * bootstrap;
        let (q, cache) = forward(q_net, &e.s.unpack(), None)?;
        let diff = q.data()[e.a] - y;
        loss += diff * diff;
        let mut g = vec![0.0; q.len()];
        g[e.a] = 2.0 * diff / m;
        backward_accumulate(q_net, &cache, &g, &mut grads, false)?;
    }
    let loss = loss / m;
    if !loss.is_finite() {
        return Err(DqnError::NonFinite("TD loss"));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditMode {
    #[default]
    Off,
    /// `R_i = R * Q_i / mean(Q)` on Q shifted to a minimum of 1, clamped to
    /// `[R/2, 2R]`.
    Ratio,
}

pub fn credit_assign(rewards: &[f64], q_values: &[f64], mode: CreditMode) -> Vec<f64> {
    match mode {
        CreditMode::Off => rewards.to_vec(),
        CreditMode::Ratio => {
            let min = q_values.iter().cloned().fold(f64::INFINITY, f64::min);
            let shifted: Vec<f64> = q_values.iter().map(|q| q - min + 1.0).collect();
            let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;
            rewards
                .iter()
                .zip(&shifted)
                .map(|(&r, &q)| {
                    let (lo, hi) = if r >= 0.0 { (0.5 * r, 2.0 * r) } else { (2.0 * r, 0.5 * r) };
                    (r * q / mean).clamp(lo, hi)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// One independent network per agent.
    Concurrent,
    /// One network shared by every agent.
    #[default]
    ParamShare,
    /// Shared network over joint (action, symbol) heads with broadcast symbols.
    Coordinated,
}

/// Observation layout for Concurrent and ParamShare teams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsLayout {
    #[default]
    Basic,
    /// The communication layout with a single, always-silent symbol.
    Comm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One gradient step per environment step on that step's transitions.
    Online,
    /// Transitions go to a replay buffer; a minibatch step every `train_every`
    /// environment steps.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub protocol: ProtocolKind,
    pub arch: QArch,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    /// Protocol default when absent: replay for Coordinated, online otherwise.
    pub update: Option<UpdateMode>,
    pub replay_capacity: usize,
    pub minibatch: usize,
    pub train_every: u64,
    pub comm_symbols: usize,
    pub credit: CreditMode,
    pub observation: ObsLayout,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolKind::ParamShare,
            arch: QArch::Paper,
            learning_rate: 0.001,
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            update: None,
            replay_capacity: 50_000,
            minibatch: 1000,
            train_every: 1000,
            comm_symbols: 4,
            credit: CreditMode::Off,
            observation: ObsLayout::Basic,
        }
    }
}

impl DqnConfig {
    pub fn update_mode(&self) -> UpdateMode {
        self.update.unwrap_or(match self.protocol {
            ProtocolKind::Coordinated => UpdateMode::Replay,
            _ => UpdateMode::Online,
        })
    }

    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m: &str| Err(DqnError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.comm_symbols == 0 || self.comm_symbols > 255 {
            return bad("comm_symbols must lie in [1, 255]");
        }
        if self.update_mode() == UpdateMode::Replay
            && (self.minibatch == 0 || self.replay_capacity < self.minibatch || self.train_every == 0)
        {
            return bad("replay needs minibatch > 0, replay_capacity >= minibatch and train_every > 0");
        }
        Ok(())
    }

    fn symbols(&self) -> usize {
        match self.protocol {
            ProtocolKind::Coordinated => self.comm_symbols,
            _ => 1,
        }
    }

    fn uses_comm_layout(&self) -> bool {
        self.protocol == ProtocolKind::Coordinated || self.observation == ObsLayout::Comm
    }

    pub fn observation_shape(&self, pitch: &Pitch) -> [usize; 3] {
        let channels = if self.uses_comm_layout() { 3 + self.symbols() } else { 4 };
        [channels, pitch.height(), pitch.width()]
    }

    pub fn head_size(&self, players: usize) -> usize {
        action_count(players) * self.symbols()
    }

    pub fn network_spec(&self, pitch: &Pitch) -> Result<NetworkSpec, DqnError> {
        Ok(q_network_spec(self.arch, self.observation_shape(pitch), self.head_size(pitch.players()))?)
    }
}

/// Each agent encodes its own comm observation and picks a joint
/// (action, symbol) epsilon-greedily. Returns the joint actions and the
/// history the next step will observe.
pub fn coordinated_step<R: Rng + ?Sized>(
    q_net: &NetworkParams,
    state: &GameState,
    team: TeamId,
    comm_history: &[CommSymbol],
    symbols: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<(Vec<JointCommAction>, Vec<CommSymbol>), DqnError> {
    let n = state.players();
    let mut joint = Vec::with_capacity(n);
    for i in 0..n {
        let obs = encode_comm(state, AgentId::new(team, i), comm_history, symbols)?;
        let idx = select_action(q_net, &obs.tensor, epsilon, rng)?;
        joint.push(JointCommAction::from_flat(idx, n, symbols)?);
    }
    let history = joint.iter().map(|j| j.comm).collect();
    Ok((joint, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QNet {
    online: NetworkParams,
    target: NetworkParams,
    adam: AdamState,
}

impl QNet {
    fn sync(&mut self) {
        self.target = self.online.clone();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    obs: Vec<PackedObs>,
    indices: Vec<usize>,
    q_taken: Vec<f64>,
}

/// Per-step result of [`DqnTeam::observe`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LearnStats {
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnTeam {
    config: DqnConfig,
    players: usize,
    nets: Vec<QNet>,
    replay: Option<ReplayBuffer>,
    comm_history: Vec<CommSymbol>,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
    steps: u64,
    since_train: u64,
    pending: Option<Pending>,
    learning: bool,
    epsilon_override: Option<f64>,
}

impl DqnTeam {
    /// Fresh networks initialized from stream `"{label}/init"` of `seed`.
    pub fn new(config: DqnConfig, pitch: &Pitch, seed: u64, label: &str) -> Result<Self, DqnError> {
        config.validate()?;
        let spec = config.network_spec(pitch)?;
        let players = pitch.players();
        let copies = if config.protocol == ProtocolKind::Concurrent { players } else { 1 };
        let mut init = stream(seed, &format!("{label}/init"));
        let adam = AdamConfig::with_learning_rate(config.learning_rate);
        let nets = (0..copies)
            .map(|_| {
                let online = NetworkParams::he_uniform(&spec, &mut init);
                QNet { target: online.clone(), adam: AdamState::new(&online, adam), online }
            })
            .collect();
        let replay = (config.update_mode() == UpdateMode::Replay).then(|| ReplayBuffer::new(config.replay_capacity));
        Ok(Self {
            players,
            nets,
            replay,
            comm_history: vec![CommSymbol(0); players],
            explore_rng: stream(seed, &format!("{label}/explore")),
            replay_rng: stream(seed, &format!("{label}/replay")),
            steps: 0,
            since_train: 0,
            pending: None,
            learning: true,
            epsilon_override: None,
            config,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_learning(&mut self, on: bool) {
        self.learning = on;
    }

    /// Fixes epsilon, e.g. for evaluation; `None` restores the schedule.
    pub fn set_epsilon_override(&mut self, epsilon: Option<f64>) {
        self.epsilon_override = epsilon;
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon_override.unwrap_or_else(|| self.config.epsilon.value(self.steps))
    }

    pub fn comm_history(&self) -> &[CommSymbol] {
        &self.comm_history
    }

    pub fn replay(&self) -> Option<&ReplayBuffer> {
        self.replay.as_ref()
    }

    /// Online network for agent `index`.
    pub fn network(&self, index: usize) -> &NetworkParams {
        &self.nets[index.min(self.nets.len() - 1)].online
    }

    pub fn target_network(&self, index: usize) -> &NetworkParams {
        &self.nets[index.min(self.nets.len() - 1)].target
    }

    pub fn networks(&self) -> Vec<&NetworkParams> {
        self.nets.iter().map(|n| &n.online).collect()
    }

    /// Replaces the online and target weights, e.g. from checkpoint files.
    pub fn load_networks(&mut self, params: Vec<NetworkParams>) -> Result<(), DqnError> {
        if params.len() != self.nets.len() {
            return Err(DqnError::Config(format!("expected {} networks, got {}", self.nets.len(), params.len())));
        }
        for (net, p) in self.nets.iter_mut().zip(params) {
            if p.spec() != net.online.spec() {
                return Err(DqnError::Config("network spec does not match the protocol".into()));
            }
            net.adam = AdamState::new(&p, net.adam.config);
            net.online = p;
            net.sync();
        }
        Ok(())
    }

    pub fn sync_target(&mut self) {
        self.nets.iter_mut().for_each(QNet::sync);
    }

    fn observe_tensor(&self, state: &GameState, index: usize) -> Result<Tensor, DqnError> {
        let agent = AgentId::new(TeamId::Left, index);
        Ok(if self.config.uses_comm_layout() {
            encode_comm(state, agent, &self.comm_history, self.config.symbols())?.tensor
        } else {
            encode_basic(state, agent).tensor
        })
    }

    /// Actions for the Left team of `state`.
    pub fn act(&mut self, state: &GameState) -> Result<Vec<Action>, DqnError> {
        let n = self.players;
        let eps = self.epsilon();
        let symbols = self.config.symbols();
        let obs: Vec<Tensor> = (0..n).map(|i| self.observe_tensor(state, i)).collect::<Result<_, _>>()?;

        let indices: Vec<usize> = if self.config.protocol == ProtocolKind::Coordinated {
            let (joint, history) = coordinated_step(
                &self.nets[0].online,
                state,
                TeamId::Left,
                &self.comm_history,
                symbols,
                eps,
                &mut self.explore_rng,
            )?;
            self.comm_history = history;
            joint.iter().map(|j| j.flat_index(symbols)).collect()
        } else {
            let mut out = Vec::with_capacity(n);
            for (i, o) in obs.iter().enumerate() {
                let net = &self.nets[i.min(self.nets.len() - 1)].online;
                out.push(select_action(net, o, eps, &mut self.explore_rng)?);
            }
            out
        };

        let q_taken = if self.learning && self.config.credit == CreditMode::Ratio {
            obs.iter()
                .zip(&indices)
                .enumerate()
                .map(|(i, (o, &a))| Ok(self.network(i).predict(o, None)?.data()[a]))
                .collect::<Result<_, DqnError>>()?
        } else {
            Vec::new()
        };
        if self.learning {
            self.pending = Some(Pending { obs: obs.iter().map(PackedObs::pack).collect(), indices: indices.clone(), q_taken });
        }
        Ok(indices.into_iter().map(|idx| Action::from_code((idx / symbols) as u8)).collect())
    }

    /// Learns from the step that followed the last [`act`](Self::act).
    ///
    /// `next_state` is the state reached before any reset; `ended` marks a goal
    /// or truncation, `goal` marks a goal (terminal for bootstrapping, and the
    /// trigger for the target sync).
    pub fn observe(&mut self, rewards: &[f64], next_state: &GameState, goal: bool, ended: bool) -> Result<LearnStats, DqnError> {
        let mut stats = LearnStats::default();
        if let Some(p) = self.pending.take() {
            let rewards = credit_assign(rewards, &p.q_taken, if p.q_taken.is_empty() { CreditMode::Off } else { self.config.credit });
            let experiences: Vec<Experience> = (0..self.players)
                .map(|i| {
                    Ok(Experience {
                        s: p.obs[i].clone(),
                        a: p.indices[i],
                        r: rewards[i],
                        s_next: PackedObs::pack(&self.observe_tensor(next_state, i)?),
                        terminal: goal,
                    })
                })
                .collect::<Result<_, DqnError>>()?;
            stats.loss = self.learn(experiences)?;
            self.steps += 1;
        }
        if ended {
            self.comm_history.iter_mut().for_each(|c| *c = CommSymbol(0));
        }
        if goal && self.learning {
            self.sync_target();
        }
        Ok(stats)
    }

    fn learn(&mut self, experiences: Vec<Experience>) -> Result<Option<f64>, DqnError> {
        let gamma = self.config.gamma;
        match self.replay.as_mut() {
            None => {
                if self.nets.len() == 1 {
                    let batch: Vec<&Experience> = experiences.iter().collect();
                    Ok(Some(Self::update(&mut self.nets[0], &batch, gamma)?))
                } else {
                    let mut total = 0.0;
                    for (net, e) in self.nets.iter_mut().zip(&experiences) {
                        total += Self::update(net, &[e], gamma)?;
                    }
                    Ok(Some(total / experiences.len() as f64))
                }
            }
            Some(buffer) => {
                experiences.into_iter().for_each(|e| buffer.push(e));
                self.since_train += 1;
                if self.since_train < self.config.train_every {
                    return Ok(None);
                }
                self.since_train = 0;
                let batch = match buffer.sample(self.config.minibatch, &mut self.replay_rng) {
                    Ok(b) => b,
                    Err(DqnError::NotReady { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                Ok(Some(Self::update(&mut self.nets[0], &batch, gamma)?))
            }
        }
    }

    fn update(net: &mut QNet, batch: &[&Experience], gamma: f64) -> Result<f64, DqnError> {
        let (loss, grads) = td_loss_and_gradient(&net.online, &net.target, batch, gamma)?;
        if !grads.is_finite() {
            return Err(DqnError::NonFinite("TD gradient"));
        }
        net.adam.step(&mut net.online, &grads)?;
        Ok(loss)
    }
}
