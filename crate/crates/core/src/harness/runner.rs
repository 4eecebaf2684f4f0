use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{step, Action, GameState, StepOutcome, TeamId, TraceRecord};

use super::config::{AgentSpec, TrainConfig};
use super::controller::{Controller, StepStats};
use super::metrics::{export_metrics, GoalWindow, MetricsRow};
use super::persist::{load_resume, load_weights, read_manifest, save_checkpoint};
use super::HarnessError;

/// One environment step with both teams acting and learning.
///
/// Returns the joint action (slot order) and the outcome.
pub fn play_step(
    state: &GameState,
    teams: &mut [Controller; 2],
) -> Result<(Vec<Action>, StepOutcome, [StepStats; 2]), HarnessError> {
    let mut actions = teams[0].act(state)?;
    actions.extend(teams[1].act(&state.mirrored())?.into_iter().map(Action::mirrored));
    let out = step(state, &actions)?;
    let goal = out.goal_scored.is_some();
    let ended = out.end.is_some();
    let left = teams[0].observe(out.team_rewards(TeamId::Left), &out.final_state, goal, ended)?;
    let right = teams[1].observe(out.team_rewards(TeamId::Right), &out.final_state.mirrored(), goal, ended)?;
    for (stats, team) in [(left, TeamId::Left), (right, TeamId::Right)] {
        if stats.loss.is_some_and(|l| !l.is_finite()) {
            return Err(HarnessError::NonFinite(format!("{team:?} team loss")));
        }
    }
    Ok((actions, out, [left, right]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    /// Metrics for the agent only (`metrics.csv`).
    Train,
    /// Metrics for both sides (`metrics_a.csv`, `metrics_b.csv`).
    Adversarial,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Interval {
    steps: u64,
    reward_sum: [f64; 2],
    loss_sum: [f64; 2],
    loss_count: [u64; 2],
}

pub struct StepRecord {
    pub before: GameState,
    pub actions: Vec<Action>,
    pub outcome: StepOutcome,
}

impl StepRecord {
    pub fn trace(&self) -> TraceRecord {
        TraceRecord::new(&self.before, &self.actions, &self.outcome)
    }
}

/// Complete state of a run; serializing it is enough to resume bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runner {
    config: TrainConfig,
    mode: RunMode,
    state: GameState,
    teams: [Controller; 2],
    window: GoalWindow,
    timestep: u64,
    goals: [u64; 2],
    interval: Interval,
    logs: [Vec<MetricsRow>; 2],
    stopped_early: bool,
}

fn build_side(spec: &AgentSpec, config: &TrainConfig, label: &str) -> Result<Controller, HarnessError> {
    let pitch = config.env.pitch()?;
    let mut controller = Controller::build(spec, &pitch, config.seed, label)?;
    if let Some(path) = &spec.checkpoint {
        let (dir, manifest) = read_manifest(path)?;
        if manifest.agent.protocol != spec.protocol {
            return Err(HarnessError::Incompatible(format!(
                "{} holds a {:?} model, config asks for {:?}",
                path.display(),
                manifest.agent.protocol,
                spec.protocol
            )));
        }
        if manifest.env.pitch()? != pitch {
            return Err(HarnessError::Incompatible(format!("{} was trained on a different pitch", path.display())));
        }
        load_weights(&dir, &manifest, &mut controller)?;
    }
    Ok(controller)
}

impl Runner {
    pub fn new(config: TrainConfig, mode: RunMode) -> Result<Self, HarnessError> {
        config.validate()?;
        let left = build_side(&config.agent, &config, "left")?;
        let right = build_side(&config.opponent, &config, "right")?;
        Ok(Self {
            state: GameState::new(&config.env)?,
            teams: [left, right],
            window: GoalWindow::new(config.goal_window),
            timestep: 0,
            goals: [0, 0],
            interval: Interval::default(),
            logs: [Vec::new(), Vec::new()],
            stopped_early: false,
            mode,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn mode(&self) -> RunMode {
        self.mode
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn window(&self) -> &GoalWindow {
        &self.window
    }

    pub fn goals(&self, team: TeamId) -> u64 {
        self.goals[team.index()]
    }

    pub fn controller(&self, team: TeamId) -> &Controller {
        &self.teams[team.index()]
    }

    pub fn log(&self, team: TeamId) -> &[MetricsRow] {
        &self.logs[team.index()]
    }

    pub fn stopped_early(&self) -> bool {
        self.stopped_early
    }

    /// Extends (or shortens) the run, e.g. when resuming.
    pub fn set_total_timesteps(&mut self, total: u64) {
        self.config.total_timesteps = total;
    }

    pub fn is_done(&self) -> bool {
        self.stopped_early || self.timestep >= self.config.total_timesteps
    }

    pub fn step(&mut self) -> Result<StepRecord, HarnessError> {
        let (actions, outcome, stats) = play_step(&self.state, &mut self.teams)?;
        let n = self.state.players() as f64;
        if let Some(team) = outcome.goal_scored {
            self.window.push(team);
            self.goals[team.index()] += 1;
        }
        let iv = &mut self.interval;
        iv.steps += 1;
        for team in [TeamId::Left, TeamId::Right] {
            let k = team.index();
            iv.reward_sum[k] += outcome.team_rewards(team).iter().sum::<f64>() / n;
            if let Some(loss) = stats[k].loss {
                iv.loss_sum[k] += loss;
                iv.loss_count[k] += 1;
            }
        }
        self.timestep += 1;
        let before = std::mem::replace(&mut self.state, outcome.next_state.clone());
        if self.timestep % self.config.log_every == 0 {
            self.log_row();
        }
        if let Some(target) = self.config.stop_at_ratio {
            if self.window.is_full() && self.window.ratio(TeamId::Left).is_some_and(|r| r >= target) {
                self.stopped_early = true;
                self.flush();
            }
        }
        Ok(StepRecord { before, actions, outcome })
    }

    /// Logs the partial interval, if any.
    pub fn flush(&mut self) {
        if self.interval.steps > 0 {
            self.log_row();
        }
    }

    fn log_row(&mut self) {
        let iv = std::mem::take(&mut self.interval);
        for team in [TeamId::Left, TeamId::Right] {
            let k = team.index();
            self.logs[k].push(MetricsRow {
                timestep: self.timestep,
                goals_for: self.goals[k],
                goals_against: self.goals[1 - k],
                goal_ratio: self.window.ratio(team),
                mean_reward: iv.reward_sum[k] / iv.steps as f64,
                epsilon: self.teams[k].epsilon(),
                loss_mean: (iv.loss_count[k] > 0).then(|| iv.loss_sum[k] / iv.loss_count[k] as f64),
            });
        }
    }

    /// Steps until done, checkpointing into `out` on the configured cadence.
    ///
    /// A failed step leaves a diagnostic checkpoint in `out/diagnostic`.
    pub fn run(&mut self, out: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        let mut trace = if self.config.trace {
            let path = out.join("trace.jsonl");
            Some(BufWriter::new(File::create(&path).map_err(|e| HarnessError::io(&path, e))?))
        } else {
            None
        };
        while !self.is_done() {
            let record = match self.step() {
                Ok(r) => r,
                Err(source) => {
                    let checkpoint = out.join("diagnostic");
                    save_checkpoint(&checkpoint, self)?;
                    return Err(HarnessError::Aborted { timestep: self.timestep, source: Box::new(source), checkpoint });
                }
            };
            if let Some(w) = trace.as_mut() {
                serde_json::to_writer(&mut *w, &record.trace())?;
                w.write_all(b"\n").map_err(|e| HarnessError::io(out, e))?;
            }
            let every = self.config.checkpoint_every;
            if every > 0 && self.timestep % every == 0 && !self.is_done() {
                save_checkpoint(&out.join("checkpoints").join(format!("step_{:09}", self.timestep)), self)?;
            }
        }
        self.flush();
        if let Some(mut w) = trace {
            w.flush().map_err(|e| HarnessError::io(out, e))?;
        }
        save_checkpoint(&out.join("final"), self)?;
        match self.mode {
            RunMode::Train => export_metrics(self.log(TeamId::Left), out.join("metrics.csv")),
            RunMode::Adversarial => {
                export_metrics(self.log(TeamId::Left), out.join("metrics_a.csv"))?;
                export_metrics(self.log(TeamId::Right), out.join("metrics_b.csv"))
            }
        }
    }
}

/// Trains `config.agent` against `config.opponent`, writing into `out`.
pub fn train(config: TrainConfig, out: &Path) -> Result<Runner, HarnessError> {
    let mut runner = Runner::new(config, RunMode::Train)?;
    runner.run(out)?;
    Ok(runner)
}

/// Both sides keep learning (where `learning` is set) in the same game; both
/// usually start from checkpoints.
pub fn adversarial_train(config: TrainConfig, out: &Path) -> Result<Runner, HarnessError> {
    let mut runner = Runner::new(config, RunMode::Adversarial)?;
    runner.run(out)?;
    Ok(runner)
}

/// Continues the run saved in `checkpoint`, writing into `out`.
pub fn resume(checkpoint: &Path, total_timesteps: Option<u64>, out: &Path) -> Result<Runner, HarnessError> {
    let mut runner = load_resume(checkpoint)?;
    if let Some(t) = total_timesteps {
        runner.set_total_timesteps(t);
    }
    runner.run(out)?;
    Ok(runner)
}

pub fn export_trace(records: &[TraceRecord], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    crate::env::write_trace(records, file).map_err(|e| HarnessError::io(path, e))
}
