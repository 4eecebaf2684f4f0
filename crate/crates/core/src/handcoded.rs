//! Scripted opponent team.
//!
//! Rule list, evaluated per agent on the state at the start of the step:
//!
//! 1. **Own team has the ball.**
//!    - The holder passes when an opponent is within Chebyshev distance 1 and
//!      some teammate has no opponent within distance 1; the open teammate
//!      nearest the opposing goal is chosen (lowest pass code on ties).
//!    - Otherwise the holder takes the legal move that most reduces
//!      `(distance to opposing goal, Manhattan distance to its center cell)`,
//!      never stepping into its own goal; it holds if nothing improves.
//!    - Non-holders head for a support cell two columns ahead of the ball in
//!      their own lane row.
//! 2. **Opponent has the ball in our half.** The Striker chases the ball
//!    (moving onto the holder's cell is the steal attempt). The Defender takes
//!    the cell just in front of the goal line at the ball's row (clamped to the
//!    goal rows); the Midfielder goes halfway between the ball and that cell.
//! 3. **Opponent has the ball elsewhere.** Striker and Midfielder press the
//!    ball; the Defender holds a line a quarter pitch out from its goal.
//!
//! Every "move toward" is greedy over the eight moves under
//! `(Chebyshev, Manhattan)` distance, keeping the lowest action code on ties and
//! holding when no move strictly improves.

use serde::{Deserialize, Serialize};

use crate::env::{move_target, teammate_ordinal, Action, AgentId, GameState, GridPos, TeamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Striker,
    Midfielder,
    Defender,
}

/// Roles by team index, cycling Striker, Midfielder, Defender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleAssignment {
    pub roles: Vec<Role>,
}

impl RoleAssignment {
    pub fn for_team(players: usize) -> Self {
        const CYCLE: [Role; 3] = [Role::Striker, Role::Midfielder, Role::Defender];
        Self { roles: (0..players).map(|i| CYCLE[i % 3]).collect() }
    }
}

struct View<'a> {
    state: &'a GameState,
    team: TeamId,
}

impl View<'_> {
    fn forward(&self) -> i32 {
        match self.team {
            TeamId::Left => 1,
            TeamId::Right => -1,
        }
    }

    fn own_goal_col(&self) -> i32 {
        self.state.pitch().own_goal_col(self.team)
    }

    fn goal_center_row(&self) -> i32 {
        let (lo, hi) = self.state.pitch().goal_rows();
        ((lo + hi) / 2) as i32
    }

    fn opponents(&self) -> &[GridPos] {
        self.state.team_positions(self.team.other())
    }

    fn marked(&self, p: GridPos) -> bool {
        self.opponents().iter().any(|o| o.chebyshev(p) <= 1)
    }

    fn in_own_half(&self, p: GridPos) -> bool {
        let pitch = self.state.pitch();
        (p.col - pitch.own_goal_col(self.team)).abs() < (p.col - pitch.own_goal_col(self.team.other())).abs()
    }

    fn clamp_to_field(&self, p: GridPos) -> GridPos {
        let pitch = self.state.pitch();
        GridPos::new(p.row.clamp(0, pitch.height() as i32 - 1), p.col.clamp(1, pitch.width() as i32 - 2))
    }

    /// Best strictly improving move under `metric`, else Hold.
    fn greedy<M, K>(&self, slot: usize, metric: M, allow_steal: bool, forbid: impl Fn(GridPos) -> bool) -> Action
    where
        M: Fn(GridPos) -> K,
        K: PartialOrd,
    {
        let state = self.state;
        let from = state.positions()[slot];
        let mut best_score = metric(from);
        let mut best = Action::HOLD;
        for code in 1..=8u8 {
            let to = move_target(from, code);
            if !state.pitch().in_bounds(to) || forbid(to) {
                continue;
            }
            if let Some(occ) = state.occupant(to) {
                let steal = allow_steal
                    && occ == state.ball_holder_slot()
                    && AgentId::from_slot(occ, state.players()).team != self.team;
                if !steal {
                    continue;
                }
            }
            let score = metric(to);
            if score < best_score {
                best_score = score;
                best = Action::moving(code);
            }
        }
        best
    }

    fn toward(&self, slot: usize, target: GridPos, allow_steal: bool) -> Action {
        self.greedy(slot, |p| (p.chebyshev(target), p.manhattan(target)), allow_steal, |_| false)
    }

    fn holder_action(&self, index: usize) -> Action {
        let state = self.state;
        let n = state.players();
        let slot = AgentId::new(self.team, index).slot(n);
        let me = state.positions()[slot];
        let attacked = self.team.other();
        let pitch = state.pitch();

        if self.marked(me) {
            let open = (0..n)
                .filter(|&i| i != index)
                .map(|i| (i, state.position(AgentId::new(self.team, i))))
                .filter(|(_, p)| !self.marked(*p))
                .min_by_key(|(i, p)| (pitch.distance_to_goal(*p, attacked), teammate_ordinal(index, *i)));
            if let Some((i, _)) = open {
                return Action::pass_to(teammate_ordinal(index, i) as u8);
            }
        }
        let center = GridPos::new(self.goal_center_row(), pitch.own_goal_col(attacked));
        self.greedy(
            slot,
            |p| (pitch.distance_to_goal(p, attacked), p.manhattan(center)),
            false,
            |p| pitch.goal_owner(p) == Some(self.team),
        )
    }

    fn support_action(&self, index: usize) -> Action {
        let state = self.state;
        let n = state.players();
        let ball = state.ball_position();
        let lane = (((index + 1) * state.pitch().height()) / (n + 1)) as i32;
        let target = self.clamp_to_field(GridPos::new(lane, ball.col + 2 * self.forward()));
        self.toward(AgentId::new(self.team, index).slot(n), target, false)
    }

    fn defend_action(&self, index: usize, role: Role) -> Action {
        let state = self.state;
        let n = state.players();
        let slot = AgentId::new(self.team, index).slot(n);
        let ball = state.ball_position();
        let (lo, hi) = state.pitch().goal_rows();
        let guard = GridPos::new(ball.row.clamp(lo as i32, hi as i32), self.own_goal_col() + self.forward());
        if self.in_own_half(ball) {
            match role {
                Role::Striker => self.toward(slot, ball, true),
                Role::Defender => self.toward(slot, guard, false),
                Role::Midfielder => {
                    let mid = GridPos::new((ball.row + guard.row) / 2, (ball.col + guard.col) / 2);
                    self.toward(slot, mid, false)
                }
            }
        } else {
            match role {
                Role::Striker | Role::Midfielder => self.toward(slot, ball, true),
                Role::Defender => {
                    let quarter = state.pitch().width() as i32 / 4;
                    let line = GridPos::new(guard.row, self.own_goal_col() + self.forward() * quarter);
                    self.toward(slot, line, false)
                }
            }
        }
    }
}

/// Actions for `team`'s agents, by team index.
pub fn handcoded_actions(state: &GameState, team: TeamId) -> Vec<Action> {
    let view = View { state, team };
    let roles = RoleAssignment::for_team(state.players());
    let holder = state.ball_holder();
    (0..state.players())
        .map(|index| {
            if holder.team == team {
                if holder.index == index {
                    view.holder_action(index)
                } else {
                    view.support_action(index)
                }
            } else {
                view.defend_action(index, roles.roles[index])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;

    fn p(r: i32, c: i32) -> GridPos {
        GridPos::new(r, c)
    }

    #[test]
    fn roles_cycle() {
        let r = RoleAssignment::for_team(4);
        assert_eq!(r.roles, vec![Role::Striker, Role::Midfielder, Role::Defender, Role::Striker]);
    }

    #[test]
    fn open_holder_advances() {
        let pitch = EnvConfig::new(10, 18, 3).pitch().unwrap();
        let s = GameState::from_parts(
            pitch,
            vec![p(2, 4), p(5, 6), p(7, 4), p(1, 14), p(8, 14), p(9, 16)],
            AgentId::new(TeamId::Left, 1),
            [0, 0],
            0,
        )
        .unwrap();
        let acts = handcoded_actions(&s, TeamId::Left);
        let code = acts[1].code();
        assert!((1..=8).contains(&code));
        let to = move_target(p(5, 6), code);
        assert!(pitch.distance_to_goal(to, TeamId::Right) < pitch.distance_to_goal(p(5, 6), TeamId::Right));
    }

    #[test]
    fn single_player_never_passes() {
        let pitch = EnvConfig::new(6, 9, 1).pitch().unwrap();
        let s = GameState::from_parts(pitch, vec![p(3, 4), p(3, 5)], AgentId::new(TeamId::Left, 0), [0, 0], 0).unwrap();
        for team in TeamId::BOTH {
            let a = handcoded_actions(&s, team);
            assert!(a[0].code() <= 8);
        }
    }

    fn six_by_nine(positions: Vec<GridPos>, holder: AgentId) -> GameState {
        let pitch = EnvConfig::new(6, 9, 3).pitch().unwrap();
        GameState::from_parts(pitch, positions, holder, [0, 0], 0).unwrap()
    }

    // Hand-traced from the rule list above. Goal rows are 1..=4, the Right
    // team's guard cell for a ball on row 2 is (2, 7).
    #[test]
    fn golden_defence_and_open_advance() {
        let s = six_by_nine(
            vec![p(2, 6), p(4, 3), p(0, 1), p(1, 2), p(5, 1), p(3, 4)],
            AgentId::new(TeamId::Left, 0),
        );
        let codes = |team| handcoded_actions(&s, team).iter().map(|a| a.code()).collect::<Vec<_>>();
        assert_eq!(codes(TeamId::Right), vec![5, 8, 8]);
        assert_eq!(codes(TeamId::Left), vec![4, 4, 4]);
    }

    #[test]
    fn golden_pressured_holder_passes_to_open_teammate() {
        let s = six_by_nine(
            vec![p(2, 6), p(4, 3), p(0, 1), p(1, 2), p(5, 1), p(2, 5)],
            AgentId::new(TeamId::Left, 0),
        );
        assert_eq!(handcoded_actions(&s, TeamId::Left)[0], Action::pass_to(1));
    }

    #[test]
    fn defenders_retreat_when_ball_in_own_half() {
        let s = six_by_nine(
            vec![p(2, 6), p(4, 3), p(0, 1), p(1, 2), p(5, 1), p(3, 4)],
            AgentId::new(TeamId::Left, 0),
        );
        let acts = handcoded_actions(&s, TeamId::Right);
        let goal_col = s.pitch().own_goal_col(TeamId::Right);
        for index in [1, 2] {
            let from = s.position(AgentId::new(TeamId::Right, index));
            let to = move_target(from, acts[index].code());
            assert!((to.col - goal_col).abs() < (from.col - goal_col).abs());
        }
    }

    #[test]
    fn deterministic() {
        let s = GameState::new(&EnvConfig::new(10, 18, 3)).unwrap();
        for team in TeamId::BOTH {
            assert_eq!(handcoded_actions(&s, team), handcoded_actions(&s, team));
        }
    }
}
