//! Boolean image observations and network action indices.
//!
//! Observations are `[channels, height, width]` tensors of 0/1 values.
//!
//! | layout       | channels                                                      |
//! |--------------|---------------------------------------------------------------|
//! | `Basic4`     | self, teammates, opponents, ball                              |
//! | `Comm(g)`    | self, opponents, ball, then one teammate channel per symbol   |
//! | `CriticFull` | one per own player (by index), opponents, ball                |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{action_count, Action, AgentId, GameState, GridPos, TeamId};
use crate::nn::Tensor;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodingError {
    #[error("action index {index} out of range for a head of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("expected {expected} communication symbols, got {got}")]
    CommHistory { expected: usize, got: usize },
}

/// How opponents appear in the critic's state tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpponentChannels {
    /// A single channel marking every opponent.
    #[default]
    Union,
    /// One channel per opponent, by index.
    PerPlayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    Basic4,
    Comm { symbols: usize },
    CriticFull { opponents: OpponentChannels },
}

impl Layout {
    pub fn channels(&self, players: usize) -> usize {
        match *self {
            Layout::Basic4 => 4,
            Layout::Comm { symbols } => 3 + symbols,
            Layout::CriticFull { opponents: OpponentChannels::Union } => players + 2,
            Layout::CriticFull { opponents: OpponentChannels::PerPlayer } => 2 * players + 1,
        }
    }

    pub fn shape(&self, state_height: usize, state_width: usize, players: usize) -> Vec<usize> {
        vec![self.channels(players), state_height, state_width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub layout: Layout,
    pub tensor: Tensor,
}

impl Observation {
    fn blank(layout: Layout, state: &GameState) -> Self {
        let p = state.pitch();
        Self { layout, tensor: Tensor::zeros(layout.shape(p.height(), p.width(), p.players())) }
    }

    fn set(&mut self, channel: usize, pos: GridPos) {
        let (h, w) = (self.tensor.shape()[1], self.tensor.shape()[2]);
        self.tensor.data_mut()[(channel * h + pos.row as usize) * w + pos.col as usize] = 1.0;
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        let (h, w) = (self.tensor.shape()[1], self.tensor.shape()[2]);
        self.tensor.data()[(channel * h + row) * w + col]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn channel_sum(&self, channel: usize) -> f64 {
        let plane = self.tensor.shape()[1] * self.tensor.shape()[2];
        self.tensor.data()[channel * plane..(channel + 1) * plane].iter().sum()
    }

    /// Same observation with columns reversed.
    pub fn flip_columns(&self) -> Observation {
        let (c, h, w) = (self.tensor.shape()[0], self.tensor.shape()[1], self.tensor.shape()[2]);
        let src = self.tensor.data();
        let mut data = vec![0.0; src.len()];
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    data[(ch * h + r) * w + col] = src[(ch * h + r) * w + (w - 1 - col)];
                }
            }
        }
        Observation { layout: self.layout, tensor: Tensor::new(vec![c, h, w], data).unwrap() }
    }
}

/// Bit-packed observation, used to keep replay memory small.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedObs {
    shape: [usize; 3],
    bits: Vec<u64>,
}

impl PackedObs {
    pub fn pack(tensor: &Tensor) -> Self {
        let s = tensor.shape();
        assert_eq!(s.len(), 3, "observations are rank 3");
        let mut bits = vec![0u64; tensor.len().div_ceil(64)];
        for (i, &v) in tensor.data().iter().enumerate() {
            if v != 0.0 {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        Self { shape: [s[0], s[1], s[2]], bits }
    }

    pub fn unpack(&self) -> Tensor {
        let len = self.shape.iter().product();
        let data = (0..len).map(|i| ((self.bits[i / 64] >> (i % 64)) & 1) as f64).collect();
        Tensor::new(self.shape.to_vec(), data).expect("packed length matches shape")
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }
}

/// A broadcast symbol in `[0, symbols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommSymbol(pub u8);

/// An environment action paired with the symbol broadcast alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointCommAction {
    pub base: Action,
    pub comm: CommSymbol,
}

impl JointCommAction {
    pub fn flat_index(&self, symbols: usize) -> usize {
        self.base.code() as usize * symbols + self.comm.0 as usize
    }

    pub fn from_flat(index: usize, players: usize, symbols: usize) -> Result<Self, EncodingError> {
        let size = action_count(players) * symbols;
        if index >= size {
            return Err(EncodingError::IndexOutOfRange { index, size });
        }
        Ok(Self { base: Action::from_code((index / symbols) as u8), comm: CommSymbol((index % symbols) as u8) })
    }
}

/// Head index for a plain action (its code).
pub fn action_index(action: Action) -> usize {
    action.code() as usize
}

pub fn action_from_index(index: usize, players: usize) -> Result<Action, EncodingError> {
    let size = action_count(players);
    if index >= size {
        return Err(EncodingError::IndexOutOfRange { index, size });
    }
    Ok(Action::from_code(index as u8))
}

pub fn encode_basic(state: &GameState, agent: AgentId) -> Observation {
    let mut obs = Observation::blank(Layout::Basic4, state);
    let me = agent.slot(state.players());
    for (slot, &p) in state.positions().iter().enumerate() {
        let team = AgentId::from_slot(slot, state.players()).team;
        let channel = if slot == me {
            0
        } else if team == agent.team {
            1
        } else {
            2
        };
        obs.set(channel, p);
    }
    obs.set(3, state.ball_position());
    obs
}

/// `last_comms` holds the latest symbol of every player on `agent`'s team, by
/// team index (the agent's own entry is ignored).
pub fn encode_comm(
    state: &GameState,
    agent: AgentId,
    last_comms: &[CommSymbol],
    symbols: usize,
) -> Result<Observation, EncodingError> {
    let n = state.players();
    if last_comms.len() != n {
        return Err(EncodingError::CommHistory { expected: n, got: last_comms.len() });
    }
    let mut obs = Observation::blank(Layout::Comm { symbols }, state);
    let me = agent.slot(n);
    for (slot, &p) in state.positions().iter().enumerate() {
        let other = AgentId::from_slot(slot, n);
        if slot == me {
            obs.set(0, p);
        } else if other.team == agent.team {
            let g = last_comms[other.index].0 as usize;
            debug_assert!(g < symbols);
            obs.set(3 + g, p);
        } else {
            obs.set(1, p);
        }
    }
    obs.set(2, state.ball_position());
    Ok(obs)
}

pub fn encode_critic(state: &GameState, team: TeamId, opponents: OpponentChannels) -> Observation {
    let n = state.players();
    let mut obs = Observation::blank(Layout::CriticFull { opponents }, state);
    for (slot, &p) in state.positions().iter().enumerate() {
        let a = AgentId::from_slot(slot, n);
        let channel = match (a.team == team, opponents) {
            (true, _) => a.index,
            (false, OpponentChannels::Union) => n,
            (false, OpponentChannels::PerPlayer) => n + a.index,
        };
        obs.set(channel, p);
    }
    let ball_channel = obs.channels() - 1;
    obs.set(ball_channel, state.ball_position());
    obs
}
