use serde::{Deserialize, Serialize};

use super::GridPos;

/// Row/column displacement for move codes 1..=8, indexed by `code - 1`.
///
/// Rows grow downward, columns grow to the right. The order is fixed by the
/// action table: down, left, up, right, down-right, down-left, up-left, up-right.
pub const MOVE_DELTAS: [(i32, i32); 8] = [
    (1, 0),
    (0, -1),
    (-1, 0),
    (0, 1),
    (1, 1),
    (1, -1),
    (-1, -1),
    (-1, 1),
];

/// Number of discrete actions available to one agent on a team of `players`.
pub const fn action_count(players: usize) -> usize {
    players + 8
}

/// A per-agent action code: 0 holds, 1..=8 move, `8 + k` passes to teammate `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(u8);

/// Decoded meaning of an [`Action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Hold,
    /// Move code in `1..=8`.
    Move(u8),
    /// Teammate ordinal in `1..players`, counting teammates by ascending index and skipping self.
    Pass(u8),
}

impl Action {
    pub const HOLD: Action = Action(0);

    /// Builds an action, checking the code against the team size.
    pub fn new(code: u8, players: usize) -> Option<Action> {
        ((code as usize) < action_count(players)).then_some(Action(code))
    }

    /// Builds an action without validation. Codes are checked again by `step`.
    pub const fn from_code(code: u8) -> Action {
        Action(code)
    }

    pub fn moving(code: u8) -> Action {
        assert!((1..=8).contains(&code), "move code out of range: {code}");
        Action(code)
    }

    pub fn pass_to(teammate: u8) -> Action {
        assert!(teammate >= 1, "teammate ordinals start at 1");
        Action(8 + teammate)
    }

    pub const fn code(self) -> u8 {
        self.0
    }

    pub fn kind(self) -> ActionKind {
        match self.0 {
            0 => ActionKind::Hold,
            c @ 1..=8 => ActionKind::Move(c),
            c => ActionKind::Pass(c - 8),
        }
    }

    pub fn is_valid(self, players: usize) -> bool {
        (self.0 as usize) < action_count(players)
    }

    /// The same action seen through a left-right flip of the pitch.
    pub fn mirrored(self) -> Action {
        match self.0 {
            2 => Action(4),
            4 => Action(2),
            5 => Action(6),
            6 => Action(5),
            7 => Action(8),
            8 => Action(7),
            c => Action(c),
        }
    }
}

/// Applies a move code's displacement without any bounds check.
pub fn move_target(pos: GridPos, code: u8) -> GridPos {
    assert!((1..=8).contains(&code), "move code out of range: {code}");
    let (dr, dc) = MOVE_DELTAS[code as usize - 1];
    GridPos::new(pos.row + dr, pos.col + dc)
}

/// Team-local index of the `k`-th teammate (1-based) of the agent at `self_index`.
pub fn teammate_index(self_index: usize, k: usize) -> usize {
    debug_assert!(k >= 1);
    if k - 1 < self_index {
        k - 1
    } else {
        k
    }
}

/// Inverse of [`teammate_index`]: the pass ordinal that targets `other` from `self_index`.
pub fn teammate_ordinal(self_index: usize, other: usize) -> usize {
    debug_assert_ne!(self_index, other);
    if other < self_index {
        other + 1
    } else {
        other
    }
}
