use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Action, AgentId, EnvError, GameState, GridPos, Pitch, RewardEvent, StepOutcome};

/// One line of a trace file: the state an action was taken from, the joint
/// action, and what the step produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestep: u64,
    pub pitch: Pitch,
    pub positions: Vec<GridPos>,
    pub ball_holder: AgentId,
    pub actions: Vec<Action>,
    pub events: Vec<Vec<RewardEvent>>,
    pub rewards: Vec<f64>,
    /// Score after the step, `[left, right]`.
    pub score: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<super::TeamId>,
}

impl TraceRecord {
    pub fn new(before: &GameState, actions: &[Action], outcome: &StepOutcome) -> Self {
        let after = &outcome.next_state;
        Self {
            timestep: before.timestep(),
            pitch: *before.pitch(),
            positions: before.positions().to_vec(),
            ball_holder: before.ball_holder(),
            actions: actions.to_vec(),
            events: outcome.events.clone(),
            rewards: outcome.rewards.clone(),
            score: [after.score(super::TeamId::Left), after.score(super::TeamId::Right)],
            goal: outcome.goal_scored,
        }
    }

    /// Rebuilds the pre-step state (score as of before the step).
    pub fn state(&self) -> Result<GameState, EnvError> {
        let mut score = self.score;
        if let Some(team) = self.goal {
            score[team.index()] -= 1;
        }
        GameState::from_parts(self.pitch, self.positions.clone(), self.ball_holder, score, self.timestep)
    }
}

pub fn write_trace<W: Write>(records: &[TraceRecord], writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_trace<R: Read>(reader: R) -> std::io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{step, EnvConfig};

    #[test]
    fn trace_lines_round_trip() {
        let mut s = GameState::new(&EnvConfig::new(6, 9, 2)).unwrap();
        let mut records = Vec::new();
        for t in 0..20u8 {
            let actions: Vec<Action> = (0..4).map(|i| Action::from_code((t + i) % 9)).collect();
            let out = step(&s, &actions).unwrap();
            records.push(TraceRecord::new(&s, &actions, &out));
            s = out.next_state;
        }
        let mut buf = Vec::new();
        write_trace(&records, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 20);
        let back = read_trace(&buf[..]).unwrap();
        assert_eq!(back, records);
        assert_eq!(back[0].state().unwrap().positions(), GameState::new(&EnvConfig::new(6, 9, 2)).unwrap().positions());
    }
}
