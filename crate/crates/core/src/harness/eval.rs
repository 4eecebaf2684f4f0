use std::io::Write;

use serde::Serialize;

use crate::env::{EnvConfig, GameState, RewardEvent, TeamId, TraceRecord};

use super::controller::Controller;
use super::runner::play_step;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    /// Goals credited to `[a, b]`.
    pub goals: [u64; 2],
    /// Share of all goals scored by `a`.
    pub goal_ratio: Option<f64>,
    pub timesteps: u64,
    /// Episodes ended by a goal or the step cap.
    pub episodes: u64,
    pub mean_episode_length: Option<f64>,
    pub steals: [u64; 2],
    pub turnovers: [u64; 2],
    /// False when `max_steps` ran out before `num_goals` goals.
    pub completed: bool,
}

impl MatchReport {
    pub fn total_goals(&self) -> u64 {
        self.goals[0] + self.goals[1]
    }
}

/// Plays frozen `a` (Left) against frozen `b` (Right) until `num_goals` goals.
pub fn evaluate(
    a: Controller,
    b: Controller,
    env: &EnvConfig,
    num_goals: u64,
    max_steps: u64,
    mut trace: Option<&mut dyn Write>,
) -> Result<MatchReport, HarnessError> {
    let mut teams = [a, b];
    teams.iter_mut().for_each(Controller::set_evaluation);
    let mut state = GameState::new(env)?;
    let mut report = MatchReport {
        goals: [0, 0],
        goal_ratio: None,
        timesteps: 0,
        episodes: 0,
        mean_episode_length: None,
        steals: [0, 0],
        turnovers: [0, 0],
        completed: false,
    };
    let mut episode_steps = 0u64;
    let mut ended_steps = 0u64;
    while report.total_goals() < num_goals && report.timesteps < max_steps {
        let (actions, out, _) = play_step(&state, &mut teams)?;
        if let Some(w) = trace.as_deref_mut() {
            serde_json::to_writer(&mut *w, &TraceRecord::new(&state, &actions, &out))?;
            w.write_all(b"\n").map_err(|e| HarnessError::io("<trace>".as_ref(), e))?;
        }
        report.timesteps += 1;
        episode_steps += 1;
        for team in [TeamId::Left, TeamId::Right] {
            let k = team.index();
            report.steals[k] += out.count_events(team, RewardEvent::AgentSteal) as u64;
            report.turnovers[k] += out.count_events(team, RewardEvent::AgentTurnover) as u64;
        }
        if let Some(team) = out.goal_scored {
            report.goals[team.index()] += 1;
        }
        if out.end.is_some() {
            report.episodes += 1;
            ended_steps += episode_steps;
            episode_steps = 0;
        }
        state = out.next_state;
    }
    report.completed = report.total_goals() >= num_goals;
    let total = report.total_goals();
    report.goal_ratio = (total > 0).then(|| report.goals[0] as f64 / total as f64);
    report.mean_episode_length = (report.episodes > 0).then(|| ended_steps as f64 / report.episodes as f64);
    Ok(report)
}
