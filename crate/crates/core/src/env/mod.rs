//! Deterministic grid-soccer simulator.
//!
//! Two teams of `n` players share an `H x W` grid. Rows are indexed top to
//! bottom, columns left to right. The Left team defends column 0 and attacks
//! column `W - 1`; the Right team does the opposite. A goal happens when the
//! ball holder stands on a boundary-column cell inside the goal rows.
//!
//! All agents act simultaneously; [`step`] resolves the joint action in three
//! phases: the pass (if the ball holder passes), moves in fixed agent order
//! (Left `0..n`, then Right `0..n`), then goal detection.

mod action;
mod render;
mod rules;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{action_count, move_target, teammate_index, teammate_ordinal, Action, ActionKind, MOVE_DELTAS};
pub use render::render_ascii;
pub use rules::{bresenham_interior, reward_value, step};
pub use trace::{read_trace, write_trace, TraceRecord};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("invalid action code {code} for agent {agent} (team size {players})")]
    InvalidAction { agent: AgentId, code: u8, players: usize },
    #[error("invalid state: {0}")]
    State(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TeamId {
    Left,
    Right,
}

impl TeamId {
    pub const BOTH: [TeamId; 2] = [TeamId::Left, TeamId::Right];

    pub fn other(self) -> TeamId {
        match self {
            TeamId::Left => TeamId::Right,
            TeamId::Right => TeamId::Left,
        }
    }

    pub fn index(self) -> usize {
        match self {
            TeamId::Left => 0,
            TeamId::Right => 1,
        }
    }
}

impl std::fmt::Display for TeamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TeamId::Left => f.write_str("left"),
            TeamId::Right => f.write_str("right"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub team: TeamId,
    pub index: usize,
}

impl AgentId {
    pub fn new(team: TeamId, index: usize) -> Self {
        Self { team, index }
    }

    /// Position in the flat agent order (Left `0..n`, then Right `0..n`).
    pub fn slot(self, players: usize) -> usize {
        self.team.index() * players + self.index
    }

    pub fn from_slot(slot: usize, players: usize) -> Self {
        let team = if slot < players { TeamId::Left } else { TeamId::Right };
        Self { team, index: slot % players }
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.team, self.index)
    }
}

/// A grid cell. Signed so that unclamped move targets can be represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub row: i32,
    pub col: i32,
}

impl GridPos {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn chebyshev(self, other: GridPos) -> i32 {
        (self.row - other.row).abs().max((self.col - other.col).abs())
    }

    pub fn manhattan(self, other: GridPos) -> i32 {
        (self.row - other.row).abs() + (self.col - other.col).abs()
    }
}

fn default_step_cap() -> u32 {
    500
}

/// Environment configuration, read from the `[env]` table of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub height: usize,
    pub width: usize,
    pub players: usize,
    #[serde(default)]
    pub seed: u64,
    /// Inclusive `[first, last]` goal rows. Defaults to the middle four rows.
    #[serde(default)]
    pub goal_rows: Option<[usize; 2]>,
    /// Steps without a goal before formations are reset.
    #[serde(default = "default_step_cap")]
    pub step_cap: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { height: 10, width: 18, players: 3, seed: 0, goal_rows: None, step_cap: default_step_cap() }
    }
}

impl EnvConfig {
    pub fn new(height: usize, width: usize, players: usize) -> Self {
        Self { height, width, players, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn pitch(&self) -> Result<Pitch, EnvError> {
        let (h, w, n) = (self.height, self.width, self.players);
        if h < 3 || w < 4 {
            return Err(EnvError::Config(format!("grid {h}x{w} is too small (minimum 3x4)")));
        }
        if h > 127 || w > 127 {
            return Err(EnvError::Config(format!("grid {h}x{w} is too large (maximum 127x127)")));
        }
        if n == 0 {
            return Err(EnvError::Config("teams need at least one player".into()));
        }
        if n + 1 > h {
            return Err(EnvError::Config(format!("{n} players do not fit a formation column of height {h}")));
        }
        if n + 8 > u8::MAX as usize {
            return Err(EnvError::Config(format!("{n} players exceed the action code range")));
        }
        let goal_rows = match self.goal_rows {
            Some([a, b]) => {
                if a > b || b >= h {
                    return Err(EnvError::Config(format!("goal rows [{a}, {b}] outside grid of height {h}")));
                }
                (a as u8, b as u8)
            }
            None => default_goal_rows(h),
        };
        if self.step_cap == 0 {
            return Err(EnvError::Config("step_cap must be positive".into()));
        }
        Ok(Pitch { height: h as u8, width: w as u8, players: n as u8, goal_rows, step_cap: self.step_cap })
    }
}

/// Middle four rows (or every row when the grid is shorter than that).
fn default_goal_rows(height: usize) -> (u8, u8) {
    let span = height.min(4);
    let first = (height - span) / 2;
    (first as u8, (first + span - 1) as u8)
}

/// Validated, immutable game geometry carried by every [`GameState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pitch {
    height: u8,
    width: u8,
    players: u8,
    goal_rows: (u8, u8),
    step_cap: u32,
}

impl Pitch {
    pub fn height(&self) -> usize {
        self.height as usize
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn players(&self) -> usize {
        self.players as usize
    }

    pub fn agents(&self) -> usize {
        2 * self.players as usize
    }

    pub fn step_cap(&self) -> u32 {
        self.step_cap
    }

    pub fn goal_rows(&self) -> (usize, usize) {
        (self.goal_rows.0 as usize, self.goal_rows.1 as usize)
    }

    pub fn in_bounds(&self, p: GridPos) -> bool {
        p.row >= 0 && p.col >= 0 && p.row < self.height as i32 && p.col < self.width as i32
    }

    /// Column of the goal a team defends.
    pub fn own_goal_col(&self, team: TeamId) -> i32 {
        match team {
            TeamId::Left => 0,
            TeamId::Right => self.width as i32 - 1,
        }
    }

    pub fn is_goal_row(&self, row: i32) -> bool {
        row >= self.goal_rows.0 as i32 && row <= self.goal_rows.1 as i32
    }

    /// The team whose goal contains `p`, if any.
    pub fn goal_owner(&self, p: GridPos) -> Option<TeamId> {
        if !self.in_bounds(p) || !self.is_goal_row(p.row) {
            return None;
        }
        if p.col == 0 {
            Some(TeamId::Left)
        } else if p.col == self.width as i32 - 1 {
            Some(TeamId::Right)
        } else {
            None
        }
    }

    /// Chebyshev distance from `p` to the nearest cell of `team`'s goal.
    pub fn distance_to_goal(&self, p: GridPos, team: TeamId) -> i32 {
        let col = self.own_goal_col(team);
        let (lo, hi) = (self.goal_rows.0 as i32, self.goal_rows.1 as i32);
        let dr = if p.row < lo {
            lo - p.row
        } else if p.row > hi {
            p.row - hi
        } else {
            0
        };
        dr.max((p.col - col).abs())
    }

    /// Kick-off formation: each team in a column at `W/4` from its own goal.
    pub fn formation(&self) -> Vec<GridPos> {
        let (h, w, n) = (self.height(), self.width() as i32, self.players());
        let mut out = Vec::with_capacity(2 * n);
        for team in TeamId::BOTH {
            let col = match team {
                TeamId::Left => w / 4,
                TeamId::Right => w - 1 - w / 4,
            };
            for k in 0..n {
                out.push(GridPos::new((((k + 1) * h) / (n + 1)) as i32, col));
            }
        }
        out
    }

    /// Team-local index of the player that takes possession after a reset.
    pub fn center_index(&self) -> usize {
        self.players() / 2
    }
}

/// Complete simulator state. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pitch: Pitch,
    positions: Vec<GridPos>,
    ball_holder: usize,
    score: [u32; 2],
    timestep: u64,
    episode_step: u32,
}

impl GameState {
    /// Fresh game: kick-off formation, Left center player on the ball, 0-0.
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        let pitch = config.pitch()?;
        Ok(Self::kickoff(pitch, TeamId::Left))
    }

    fn kickoff(pitch: Pitch, possession: TeamId) -> Self {
        let positions = pitch.formation();
        let ball_holder = AgentId::new(possession, pitch.center_index()).slot(pitch.players());
        Self { pitch, positions, ball_holder, score: [0, 0], timestep: 0, episode_step: 0 }
    }

    /// Builds an arbitrary state, validating bounds, exclusivity and holder.
    pub fn from_parts(
        pitch: Pitch,
        positions: Vec<GridPos>,
        ball_holder: AgentId,
        score: [u32; 2],
        timestep: u64,
    ) -> Result<Self, EnvError> {
        let state = Self {
            ball_holder: ball_holder.slot(pitch.players()),
            pitch,
            positions,
            score,
            timestep,
            episode_step: 0,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let n = self.pitch.agents();
        if self.positions.len() != n {
            return Err(EnvError::State(format!("{} positions for {n} agents", self.positions.len())));
        }
        if self.ball_holder >= n {
            return Err(EnvError::State(format!("ball holder slot {} out of range", self.ball_holder)));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if !self.pitch.in_bounds(*p) {
                return Err(EnvError::State(format!("agent slot {i} out of bounds at {p:?}")));
            }
            if self.positions[..i].contains(p) {
                return Err(EnvError::State(format!("two agents share cell {p:?}")));
            }
        }
        Ok(())
    }

    /// Restores the kick-off formation and hands the ball to `possession`'s
    /// center player. Score and timestep are untouched.
    pub fn apply_goal_reset(&self, possession: TeamId) -> GameState {
        let mut next = Self::kickoff(self.pitch, possession);
        next.score = self.score;
        next.timestep = self.timestep;
        next
    }

    pub fn pitch(&self) -> &Pitch {
        &self.pitch
    }

    pub fn players(&self) -> usize {
        self.pitch.players()
    }

    pub fn positions(&self) -> &[GridPos] {
        &self.positions
    }

    pub fn position(&self, agent: AgentId) -> GridPos {
        self.positions[agent.slot(self.players())]
    }

    pub fn team_positions(&self, team: TeamId) -> &[GridPos] {
        let n = self.players();
        &self.positions[team.index() * n..(team.index() + 1) * n]
    }

    pub fn ball_holder(&self) -> AgentId {
        AgentId::from_slot(self.ball_holder, self.players())
    }

    pub fn ball_holder_slot(&self) -> usize {
        self.ball_holder
    }

    pub fn ball_position(&self) -> GridPos {
        self.positions[self.ball_holder]
    }

    pub fn score(&self, team: TeamId) -> u32 {
        self.score[team.index()]
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// Steps since the last goal or formation reset.
    pub fn episode_step(&self) -> u32 {
        self.episode_step
    }

    /// Slot of the agent standing on `p`, if any.
    pub fn occupant(&self, p: GridPos) -> Option<usize> {
        self.positions.iter().position(|q| *q == p)
    }

    /// Left-right flip of the pitch with the teams swapped, so that the
    /// Right team's view becomes a Left-team view.
    pub fn mirrored(&self) -> GameState {
        let n = self.players();
        let w = self.pitch.width() as i32;
        let flip = |p: &GridPos| GridPos::new(p.row, w - 1 - p.col);
        let mut positions = Vec::with_capacity(2 * n);
        positions.extend(self.positions[n..].iter().map(flip));
        positions.extend(self.positions[..n].iter().map(flip));
        let holder = self.ball_holder();
        GameState {
            pitch: self.pitch,
            positions,
            ball_holder: AgentId::new(holder.team.other(), holder.index).slot(n),
            score: [self.score[1], self.score[0]],
            timestep: self.timestep,
            episode_step: self.episode_step,
        }
    }

    pub(crate) fn positions_mut(&mut self) -> &mut Vec<GridPos> {
        &mut self.positions
    }

    pub(crate) fn set_ball_holder(&mut self, slot: usize) {
        self.ball_holder = slot;
    }

    pub(crate) fn add_goal(&mut self, team: TeamId) {
        self.score[team.index()] += 1;
    }

    pub(crate) fn advance_clock(&mut self) {
        self.timestep += 1;
        self.episode_step += 1;
    }
}

/// One row of the reward table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardEvent {
    AgentOwnGoal,
    TeamOwnGoal,
    AgentScoredGoal,
    TeamScoredGoal,
    OpponentScoredGoal,
    OpponentOwnGoal,
    AgentTurnover,
    TeamTurnover,
    AgentSteal,
    TeamSteal,
    AgentIllegalMove,
    AgentSuccessfulPass,
    AgentHold,
    AgentLegalMove,
}

impl RewardEvent {
    pub const ALL: [RewardEvent; 14] = [
        RewardEvent::AgentOwnGoal,
        RewardEvent::TeamOwnGoal,
        RewardEvent::AgentScoredGoal,
        RewardEvent::TeamScoredGoal,
        RewardEvent::OpponentScoredGoal,
        RewardEvent::OpponentOwnGoal,
        RewardEvent::AgentTurnover,
        RewardEvent::TeamTurnover,
        RewardEvent::AgentSteal,
        RewardEvent::TeamSteal,
        RewardEvent::AgentIllegalMove,
        RewardEvent::AgentSuccessfulPass,
        RewardEvent::AgentHold,
        RewardEvent::AgentLegalMove,
    ];

    pub fn value(self) -> f64 {
        reward_value(self)
    }

    /// Events describing what the agent's own action did (replaced for a scorer).
    pub fn is_action_event(self) -> bool {
        matches!(
            self,
            RewardEvent::AgentIllegalMove
                | RewardEvent::AgentSuccessfulPass
                | RewardEvent::AgentHold
                | RewardEvent::AgentLegalMove
        )
    }

    pub fn is_goal_event(self) -> bool {
        matches!(
            self,
            RewardEvent::AgentOwnGoal
                | RewardEvent::TeamOwnGoal
                | RewardEvent::AgentScoredGoal
                | RewardEvent::TeamScoredGoal
                | RewardEvent::OpponentScoredGoal
                | RewardEvent::OpponentOwnGoal
        )
    }
}

/// How a step ended play, if it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeEnd {
    /// A goal was scored; the value is the team credited with it.
    Goal(TeamId),
    /// The step cap was reached without a goal; formations were reset.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// State play continues from (after any reset).
    pub next_state: GameState,
    /// State right after resolution, before any reset. Equal to `next_state`
    /// when play was not interrupted.
    pub final_state: GameState,
    /// Events per agent slot.
    pub events: Vec<Vec<RewardEvent>>,
    /// Reward per agent slot: the sum of the slot's event values.
    pub rewards: Vec<f64>,
    /// Team credited with a goal this step.
    pub goal_scored: Option<TeamId>,
    /// Whether possession changed hands through a steal or interception.
    pub turnover: bool,
    pub end: Option<EpisodeEnd>,
}

impl StepOutcome {
    pub fn team_rewards(&self, team: TeamId) -> &[f64] {
        let n = self.next_state.players();
        &self.rewards[team.index() * n..(team.index() + 1) * n]
    }

    pub fn count_events(&self, team: TeamId, kind: RewardEvent) -> usize {
        let n = self.next_state.players();
        self.events[team.index() * n..(team.index() + 1) * n]
            .iter()
            .map(|ev| ev.iter().filter(|e| **e == kind).count())
            .sum()
    }
}
