use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::TeamId;

use super::HarnessError;

/// The last `capacity` goals, by scoring team.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalWindow {
    capacity: usize,
    goals: VecDeque<TeamId>,
}

impl GoalWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "goal window needs a positive capacity");
        Self { capacity, goals: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, scorer: TeamId) {
        if self.goals.len() == self.capacity {
            self.goals.pop_front();
        }
        self.goals.push_back(scorer);
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.goals.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Share of the window scored by `team`; `None` before the first goal.
    pub fn ratio(&self, team: TeamId) -> Option<f64> {
        if self.goals.is_empty() {
            return None;
        }
        let scored = self.goals.iter().filter(|g| **g == team).count();
        Some(scored as f64 / self.goals.len() as f64)
    }
}

/// One logged interval from one team's point of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub timestep: u64,
    /// Cumulative goals.
    pub goals_for: u64,
    pub goals_against: u64,
    pub goal_ratio: Option<f64>,
    /// Mean per-agent reward over the interval.
    pub mean_reward: f64,
    pub epsilon: Option<f64>,
    pub loss_mean: Option<f64>,
}

pub const METRICS_HEADER: &str = "timestep,goals_for,goals_against,goal_ratio,mean_reward,epsilon,loss_mean";

pub fn write_metrics<W: Write>(rows: &[MetricsRow], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(METRICS_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: "<metrics>".into(), source: e })
}

pub fn read_metrics<R: Read>(reader: R) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != METRICS_HEADER {
        return Err(HarnessError::Config(format!("unexpected metrics header {}", header.join(","))));
    }
    let rows = r.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

pub fn export_metrics(rows: &[MetricsRow], path: impl AsRef<std::path::Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_metrics(rows, file)
}

pub fn load_metrics(path: impl AsRef<std::path::Path>) -> Result<Vec<MetricsRow>, HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_metrics(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use TeamId::{Left, Right};

    #[test]
    fn ratio_arithmetic() {
        let mut w = GoalWindow::new(200);
        assert_eq!(w.ratio(Left), None);
        for t in [Left, Right, Left, Left] {
            w.push(t);
        }
        assert_eq!(w.ratio(Left), Some(0.75));
        let mut w = GoalWindow::new(200);
        for _ in 0..200 {
            w.push(Left);
        }
        assert_eq!(w.ratio(Left), Some(1.0));
        w.push(Right);
        assert_eq!(w.len(), 200);
        assert_eq!(w.ratio(Right), Some(1.0 / 200.0));
    }

    #[test]
    fn eviction_is_first_in_first_out() {
        let mut w = GoalWindow::new(3);
        for t in [Right, Left, Left, Left] {
            w.push(t);
        }
        assert_eq!(w.ratio(Left), Some(1.0));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            MetricsRow { timestep: 1000, goals_for: 0, goals_against: 0, goal_ratio: None, mean_reward: -1.25, epsilon: Some(0.4985), loss_mean: None },
            MetricsRow { timestep: 2000, goals_for: 3, goals_against: 1, goal_ratio: Some(0.75), mean_reward: 0.1 + 0.2, epsilon: None, loss_mean: Some(1e-300) },
        ];
        let mut buf = Vec::new();
        write_metrics(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(read_metrics(&buf[..]).unwrap(), rows);
    }
}
