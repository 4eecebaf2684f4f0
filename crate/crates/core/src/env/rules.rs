use super::{
    move_target, teammate_index, Action, ActionKind, AgentId, EnvError, EpisodeEnd, GameState, GridPos, RewardEvent,
    StepOutcome, TeamId,
};

/// Reward attached to each row of the reward table.
pub fn reward_value(kind: RewardEvent) -> f64 {
    match kind {
        RewardEvent::AgentOwnGoal => -100.0,
        RewardEvent::TeamOwnGoal => -75.0,
        RewardEvent::AgentScoredGoal => 50.0,
        RewardEvent::TeamScoredGoal => 50.0,
        RewardEvent::OpponentScoredGoal => -50.0,
        RewardEvent::OpponentOwnGoal => 10.0,
        RewardEvent::AgentTurnover => -10.0,
        RewardEvent::TeamTurnover => -10.0,
        RewardEvent::AgentSteal => 10.0,
        RewardEvent::TeamSteal => 10.0,
        RewardEvent::AgentIllegalMove => -3.0,
        RewardEvent::AgentSuccessfulPass => -1.0,
        RewardEvent::AgentHold => -1.0,
        RewardEvent::AgentLegalMove => -2.0,
    }
}

/// Cells strictly between `a` and `b` on the Bresenham line, ordered from `a`.
pub fn bresenham_interior(a: GridPos, b: GridPos) -> Vec<GridPos> {
    let (dx, dy) = ((b.col - a.col).abs(), -(b.row - a.row).abs());
    let (sx, sy) = ((b.col - a.col).signum(), (b.row - a.row).signum());
    let mut err = dx + dy;
    let (mut col, mut row) = (a.col, a.row);
    let mut cells = Vec::new();
    loop {
        if col == b.col && row == b.row {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            col += sx;
        }
        if e2 <= dx {
            err += dx;
            row += sy;
        }
        if col == b.col && row == b.row {
            break;
        }
        cells.push(GridPos::new(row, col));
    }
    cells
}

struct Resolver {
    players: usize,
    events: Vec<Vec<RewardEvent>>,
    turnover: bool,
}

impl Resolver {
    fn team_of(&self, slot: usize) -> TeamId {
        AgentId::from_slot(slot, self.players).team
    }

    fn push_team(&mut self, team: TeamId, except: usize, kind: RewardEvent) {
        let base = team.index() * self.players;
        for slot in base..base + self.players {
            if slot != except {
                self.events[slot].push(kind);
            }
        }
    }

    /// `winner` takes the ball from `loser`.
    fn possession_change(&mut self, winner: usize, loser: usize) {
        self.events[winner].push(RewardEvent::AgentSteal);
        self.push_team(self.team_of(winner), winner, RewardEvent::TeamSteal);
        self.events[loser].push(RewardEvent::AgentTurnover);
        self.push_team(self.team_of(loser), loser, RewardEvent::TeamTurnover);
        self.turnover = true;
    }
}

/// Advances the game by one simultaneous joint action.
///
/// `actions` is indexed by agent slot (Left `0..n`, then Right `0..n`).
pub fn step(state: &GameState, actions: &[Action]) -> Result<StepOutcome, EnvError> {
    let pitch = *state.pitch();
    let n = pitch.players();
    let agents = pitch.agents();
    if actions.len() != agents {
        return Err(EnvError::ActionCount { expected: agents, got: actions.len() });
    }
    for (slot, a) in actions.iter().enumerate() {
        if !a.is_valid(n) {
            return Err(EnvError::InvalidAction { agent: AgentId::from_slot(slot, n), code: a.code(), players: n });
        }
    }

    let mut next = state.clone();
    let mut res = Resolver { players: n, events: vec![Vec::new(); agents], turnover: false };
    let start_holder = state.ball_holder_slot();
    // An agent "holds" when it chose code 0 or a pass without having the ball.
    let mut holding = vec![false; agents];

    // Phase 1: passes.
    for (slot, a) in actions.iter().enumerate() {
        match a.kind() {
            ActionKind::Hold => {
                holding[slot] = true;
                res.events[slot].push(RewardEvent::AgentHold);
            }
            ActionKind::Pass(_) if slot != start_holder => {
                holding[slot] = true;
                res.events[slot].push(RewardEvent::AgentHold);
            }
            ActionKind::Pass(k) => {
                let me = AgentId::from_slot(slot, n);
                let receiver = AgentId::new(me.team, teammate_index(me.index, k as usize)).slot(n);
                let from = state.positions()[slot];
                let to = state.positions()[receiver];
                let interceptor = bresenham_interior(from, to).into_iter().find_map(|cell| {
                    state.occupant(cell).filter(|&occ| res.team_of(occ) != me.team)
                });
                match interceptor {
                    Some(occ) => {
                        next.set_ball_holder(occ);
                        res.possession_change(occ, slot);
                    }
                    None => {
                        next.set_ball_holder(receiver);
                        res.events[slot].push(RewardEvent::AgentSuccessfulPass);
                    }
                }
            }
            ActionKind::Move(_) => {}
        }
    }

    // Phase 2: moves in slot order, each seeing earlier movers' new cells.
    for (slot, a) in actions.iter().enumerate() {
        let ActionKind::Move(code) = a.kind() else { continue };
        let from = next.positions()[slot];
        let target = move_target(from, code);
        if !pitch.in_bounds(target) {
            res.events[slot].push(RewardEvent::AgentIllegalMove);
            continue;
        }
        match next.occupant(target) {
            None => {
                next.positions_mut()[slot] = target;
                res.events[slot].push(RewardEvent::AgentLegalMove);
            }
            Some(occ) => {
                let holder = next.ball_holder_slot();
                if occ == holder && res.team_of(occ) != res.team_of(slot) && !holding[occ] {
                    next.set_ball_holder(slot);
                    res.possession_change(slot, occ);
                } else {
                    res.events[slot].push(RewardEvent::AgentIllegalMove);
                }
            }
        }
    }

    // Phase 3: goal detection.
    let holder = next.ball_holder_slot();
    let final_pos = next.positions()[holder];
    let mut goal_scored = None;
    if let Some(goal_owner) = pitch.goal_owner(final_pos) {
        let scorer_team = res.team_of(holder);
        res.events[holder].retain(|e| !e.is_action_event());
        let credited = goal_owner.other();
        if goal_owner == scorer_team {
            res.events[holder].push(RewardEvent::AgentOwnGoal);
            res.push_team(scorer_team, holder, RewardEvent::TeamOwnGoal);
            res.push_team(scorer_team.other(), usize::MAX, RewardEvent::OpponentOwnGoal);
        } else {
            res.events[holder].push(RewardEvent::AgentScoredGoal);
            res.push_team(scorer_team, holder, RewardEvent::TeamScoredGoal);
            res.push_team(scorer_team.other(), usize::MAX, RewardEvent::OpponentScoredGoal);
        }
        next.add_goal(credited);
        goal_scored = Some(credited);
    }

    next.advance_clock();
    let final_state = next.clone();
    let (next_state, end) = match goal_scored {
        Some(team) => (next.apply_goal_reset(team.other()), Some(EpisodeEnd::Goal(team))),
        None if next.episode_step() >= pitch.step_cap() => {
            // Possession is kept by whichever team has the ball at the cap.
            let team = next.ball_holder().team;
            (next.apply_goal_reset(team), Some(EpisodeEnd::Truncated))
        }
        None => (next, None),
    };

    let rewards = res.events.iter().map(|ev| ev.iter().map(|e| reward_value(*e)).sum()).collect();
    Ok(StepOutcome { next_state, final_state, events: res.events, rewards, goal_scored, turnover: res.turnover, end })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, Pitch};

    fn pitch(h: usize, w: usize, n: usize) -> Pitch {
        EnvConfig::new(h, w, n).pitch().unwrap()
    }

    fn left(i: usize) -> AgentId {
        AgentId::new(TeamId::Left, i)
    }

    fn right(i: usize) -> AgentId {
        AgentId::new(TeamId::Right, i)
    }

    fn p(r: i32, c: i32) -> GridPos {
        GridPos::new(r, c)
    }

    #[test]
    fn reward_table_values() {
        let expected = [-100.0, -75.0, 50.0, 50.0, -50.0, 10.0, -10.0, -10.0, 10.0, 10.0, -3.0, -1.0, -1.0, -2.0];
        for (kind, v) in RewardEvent::ALL.iter().zip(expected) {
            assert_eq!(reward_value(*kind), v, "{kind:?}");
        }
    }

    #[test]
    fn all_hold_changes_nothing() {
        let s = GameState::new(&EnvConfig::new(10, 18, 3)).unwrap();
        let out = step(&s, &[Action::HOLD; 6]).unwrap();
        assert_eq!(out.next_state.positions(), s.positions());
        assert!(out.rewards.iter().all(|r| *r == -1.0));
        assert_eq!(out.next_state.timestep(), 1);
        assert!(out.goal_scored.is_none());
    }

    #[test]
    fn out_of_bounds_move_is_illegal() {
        let pt = pitch(10, 18, 1);
        let s = GameState::from_parts(pt, vec![p(0, 5), p(9, 12)], left(0), [0, 0], 0).unwrap();
        let out = step(&s, &[Action::moving(3), Action::moving(1)]).unwrap();
        assert_eq!(out.next_state.positions(), s.positions());
        assert_eq!(out.events[0], vec![RewardEvent::AgentIllegalMove]);
        assert_eq!(out.rewards[1], -3.0);
    }

    #[test]
    fn own_goal_rewards() {
        let pt = pitch(10, 18, 2);
        // Left 0 holds the ball next to its own goal and steps into it.
        let s = GameState::from_parts(pt, vec![p(4, 1), p(7, 5), p(2, 12), p(6, 12)], left(0), [0, 0], 0).unwrap();
        let out = step(&s, &[Action::moving(2), Action::HOLD, Action::HOLD, Action::HOLD]).unwrap();
        assert_eq!(out.goal_scored, Some(TeamId::Right));
        assert_eq!(out.rewards, vec![-100.0, -75.0 - 1.0, 10.0 - 1.0, 10.0 - 1.0]);
        assert_eq!(out.next_state.score(TeamId::Right), 1);
        // Team that did not score restarts with the ball.
        assert_eq!(out.next_state.ball_holder().team, TeamId::Left);
        assert_eq!(out.final_state.positions()[0], p(4, 0));
    }

    #[test]
    fn steal_requires_moving_holder() {
        let pt = pitch(10, 18, 1);
        let s = GameState::from_parts(pt, vec![p(4, 4), p(4, 5)], left(0), [0, 0], 0).unwrap();
        // Holder holds: steal fails, defender bounces.
        let out = step(&s, &[Action::HOLD, Action::moving(2)]).unwrap();
        assert_eq!(out.next_state.ball_holder(), left(0));
        assert_eq!(out.events[1], vec![RewardEvent::AgentIllegalMove]);
        // Holder moves away along the column; the defender is processed after
        // and targets the holder's new cell.
        let out = step(&s, &[Action::moving(1), Action::moving(6)]).unwrap();
        assert_eq!(out.next_state.ball_holder(), right(0));
        assert_eq!(out.final_state.positions()[1], p(4, 5));
        assert_eq!(out.events[1], vec![RewardEvent::AgentSteal]);
        assert_eq!(out.events[0], vec![RewardEvent::AgentLegalMove, RewardEvent::AgentTurnover]);
        assert!(out.turnover);
    }

    #[test]
    fn intercepted_pass() {
        let pt = pitch(10, 18, 2);
        let s = GameState::from_parts(pt, vec![p(5, 2), p(5, 8), p(5, 5), p(0, 16)], left(0), [0, 0], 0).unwrap();
        let out = step(&s, &[Action::pass_to(1), Action::HOLD, Action::HOLD, Action::HOLD]).unwrap();
        assert_eq!(out.next_state.ball_holder(), right(0));
        assert_eq!(out.events[0], vec![RewardEvent::AgentTurnover]);
        // The pass resolves while slot 0 is processed, before the others' holds.
        assert_eq!(out.events[1], vec![RewardEvent::TeamTurnover, RewardEvent::AgentHold]);
        assert_eq!(out.events[2], vec![RewardEvent::AgentSteal, RewardEvent::AgentHold]);
        assert_eq!(out.events[3], vec![RewardEvent::TeamSteal, RewardEvent::AgentHold]);
    }

    #[test]
    fn clear_pass() {
        let pt = pitch(10, 18, 2);
        let s = GameState::from_parts(pt, vec![p(5, 2), p(5, 8), p(4, 5), p(0, 16)], left(0), [0, 0], 0).unwrap();
        let out = step(&s, &[Action::pass_to(1), Action::HOLD, Action::HOLD, Action::HOLD]).unwrap();
        assert_eq!(out.next_state.ball_holder(), left(1));
        assert_eq!(out.events[0], vec![RewardEvent::AgentSuccessfulPass]);
        assert!(!out.turnover);
    }

    #[test]
    fn bresenham_lines() {
        assert_eq!(bresenham_interior(p(5, 2), p(5, 6)), vec![p(5, 3), p(5, 4), p(5, 5)]);
        assert_eq!(bresenham_interior(p(0, 0), p(3, 3)), vec![p(1, 1), p(2, 2)]);
        assert!(bresenham_interior(p(0, 0), p(1, 1)).is_empty());
        assert!(bresenham_interior(p(0, 0), p(0, 1)).is_empty());
        let line = bresenham_interior(p(0, 0), p(2, 5));
        assert_eq!(line.len(), 4);
        assert!(line.windows(2).all(|w| w[0].chebyshev(w[1]) == 1));
    }

    #[test]
    fn step_cap_soft_resets() {
        let mut cfg = EnvConfig::new(10, 18, 1);
        cfg.step_cap = 3;
        let mut s = GameState::new(&cfg).unwrap();
        for i in 0..3 {
            let out = step(&s, &[Action::HOLD, Action::HOLD]).unwrap();
            if i == 2 {
                assert_eq!(out.end, Some(EpisodeEnd::Truncated));
                assert_eq!(out.next_state.episode_step(), 0);
            } else {
                assert!(out.end.is_none());
            }
            s = out.next_state;
        }
        assert_eq!(s.timestep(), 3);
    }

    #[test]
    fn rejects_bad_action_vectors() {
        let s = GameState::new(&EnvConfig::new(10, 18, 1)).unwrap();
        assert!(matches!(step(&s, &[Action::HOLD]), Err(EnvError::ActionCount { .. })));
        assert!(matches!(
            step(&s, &[Action::HOLD, Action::from_code(10)]),
            Err(EnvError::InvalidAction { .. })
        ));
    }
}
