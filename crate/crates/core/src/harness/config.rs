use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::coma::ComaConfig;
use crate::dqn::{DqnConfig, ProtocolKind};
use crate::env::EnvConfig;

use super::HarnessError;

/// Which controller drives a team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Concurrent,
    #[default]
    ParamShare,
    Coordinated,
    Coma,
    Handcoded,
    Random,
}

impl Protocol {
    pub fn dqn_kind(self) -> Option<ProtocolKind> {
        match self {
            Protocol::Concurrent => Some(ProtocolKind::Concurrent),
            Protocol::ParamShare => Some(ProtocolKind::ParamShare),
            Protocol::Coordinated => Some(ProtocolKind::Coordinated),
            _ => None,
        }
    }

    pub fn is_learned(self) -> bool {
        !matches!(self, Protocol::Handcoded | Protocol::Random)
    }
}

/// One team's controller. The `dqn` table applies to the three DQN protocols,
/// `coma` to COMA; the other table is ignored. `dqn.protocol` is always taken
/// from `protocol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSpec {
    pub protocol: Protocol,
    /// Whether the team updates its parameters during the run.
    pub learning: bool,
    /// Model directory to load initial weights from.
    pub checkpoint: Option<PathBuf>,
    pub dqn: DqnConfig,
    pub coma: ComaConfig,
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self::of(Protocol::ParamShare)
    }
}

impl AgentSpec {
    pub fn of(protocol: Protocol) -> Self {
        let mut spec = Self {
            protocol,
            learning: true,
            checkpoint: None,
            dqn: DqnConfig::default(),
            coma: ComaConfig::default(),
        };
        spec.normalize();
        spec
    }

    pub(crate) fn normalize(&mut self) {
        if let Some(kind) = self.protocol.dqn_kind() {
            self.dqn.protocol = kind;
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.protocol {
            Protocol::Coma => self.coma.validate()?,
            p if p.dqn_kind().is_some() => self.dqn.validate()?,
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_timesteps: u64,
    /// Timesteps between metrics rows.
    pub log_every: u64,
    /// Timesteps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    /// Goals kept in the goal-ratio window.
    pub goal_window: usize,
    /// Stop early once the goal window is full and the agent's ratio reaches this.
    pub stop_at_ratio: Option<f64>,
    /// Write every step to `trace.jsonl` in the output directory.
    pub trace: bool,
    pub env: EnvConfig,
    pub agent: AgentSpec,
    pub opponent: AgentSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_timesteps: 500_000,
            log_every: 1000,
            checkpoint_every: 100_000,
            goal_window: 200,
            stop_at_ratio: None,
            trace: false,
            env: EnvConfig::default(),
            agent: AgentSpec::of(Protocol::ParamShare),
            opponent: AgentSpec::of(Protocol::Handcoded),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let mut config: TrainConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.agent.normalize();
        config.opponent.normalize();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The config as TOML, without the redundant `dqn.protocol` keys.
    pub fn to_toml(&self) -> String {
        let mut value = toml::Value::try_from(self).expect("config serializes");
        for side in ["agent", "opponent"] {
            if let Some(dqn) = value.get_mut(side).and_then(|s| s.get_mut("dqn")).and_then(|d| d.as_table_mut()) {
                dqn.remove("protocol");
            }
        }
        toml::to_string_pretty(&value).expect("config renders")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        self.env.pitch()?;
        if self.total_timesteps == 0 {
            return bad("total_timesteps must be positive");
        }
        if self.log_every == 0 {
            return bad("log_every must be positive");
        }
        if self.goal_window == 0 {
            return bad("goal_window must be positive");
        }
        if let Some(r) = self.stop_at_ratio {
            if !(0.0..=1.0).contains(&r) {
                return bad("stop_at_ratio must lie in [0, 1]");
            }
        }
        self.agent.validate()?;
        self.opponent.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = TrainConfig::default();
        let text = c.to_toml();
        let value: toml::Value = toml::from_str(&text).unwrap();
        assert!(value["agent"]["dqn"].get("protocol").is_none());
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = TrainConfig::from_toml(
            "seed = 7\n[env]\nheight = 6\nwidth = 9\nplayers = 2\n[agent]\nprotocol = \"coordinated\"\n[agent.dqn]\ncomm_symbols = 2\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.agent.dqn.protocol, ProtocolKind::Coordinated);
        assert_eq!(c.agent.dqn.comm_symbols, 2);
        assert_eq!(c.opponent.protocol, Protocol::Handcoded);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(TrainConfig::from_toml("total_timesteps = 0").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert!(TrainConfig::from_toml("[agent.dqn]\ngamma = 1.5").is_err());
        assert!(TrainConfig::from_toml("[env]\nheight = 2\nwidth = 9\nplayers = 1").is_err());
    }
}
