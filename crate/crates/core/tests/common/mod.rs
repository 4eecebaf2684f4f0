//! Test-only oracles shared by the integration suites. `reference_env` and
//! `returns` never call into the crate; `equivalence` runs both sides.

#![allow(dead_code)]

pub mod reference_env {
    //! Straight-line re-statement of the step rules on a plain occupancy grid.

    /// Event codes follow the reward table order.
    pub const OWN_GOAL: u8 = 0;
    pub const TEAM_OWN_GOAL: u8 = 1;
    pub const SCORED: u8 = 2;
    pub const TEAM_SCORED: u8 = 3;
    pub const OPP_SCORED: u8 = 4;
    pub const OPP_OWN_GOAL: u8 = 5;
    pub const TURNOVER: u8 = 6;
    pub const TEAM_TURNOVER: u8 = 7;
    pub const STEAL: u8 = 8;
    pub const TEAM_STEAL: u8 = 9;
    pub const ILLEGAL: u8 = 10;
    pub const PASS_OK: u8 = 11;
    pub const HOLD: u8 = 12;
    pub const MOVE: u8 = 13;

    pub const VALUES: [f64; 14] = [-100.0, -75.0, 50.0, 50.0, -50.0, 10.0, -10.0, -10.0, 10.0, 10.0, -3.0, -1.0, -1.0, -2.0];

    #[derive(Clone, Debug, PartialEq)]
    pub struct RefState {
        pub h: i32,
        pub w: i32,
        pub n: usize,
        pub goal_lo: i32,
        pub goal_hi: i32,
        /// (row, col) by slot: team 0 first.
        pub pos: Vec<(i32, i32)>,
        pub holder: usize,
        pub score: [u32; 2],
    }

    #[derive(Clone, Debug, PartialEq)]
    pub struct RefOutcome {
        pub pos: Vec<(i32, i32)>,
        pub holder: usize,
        pub score: [u32; 2],
        /// Sorted event codes per slot.
        pub events: Vec<Vec<u8>>,
        pub rewards: Vec<f64>,
        /// Team credited with a goal (0 = left, 1 = right).
        pub goal: Option<usize>,
    }

    fn team(slot: usize, n: usize) -> usize {
        slot / n
    }

    /// Cells between two points: step along the longer axis, round the
    /// shorter one half-way towards the target.
    pub fn line_between(a: (i32, i32), b: (i32, i32)) -> Vec<(i32, i32)> {
        let dr = b.0 - a.0;
        let dc = b.1 - a.1;
        let steps = dr.abs().max(dc.abs());
        let round_toward = |d: i32, i: i32| -> i32 {
            let mag = (2 * d.abs() * i + steps) / (2 * steps);
            mag * d.signum()
        };
        (1..steps).map(|i| (a.0 + round_toward(dr, i), a.1 + round_toward(dc, i))).collect()
    }

    pub fn delta(code: u8) -> (i32, i32) {
        match code {
            1 => (1, 0),
            2 => (0, -1),
            3 => (-1, 0),
            4 => (0, 1),
            5 => (1, 1),
            6 => (1, -1),
            7 => (-1, -1),
            8 => (-1, 1),
            _ => unreachable!(),
        }
    }

    pub fn step(s: &RefState, acts: &[u8]) -> RefOutcome {
        let n = s.n;
        let total = 2 * n;
        let mut grid = vec![vec![usize::MAX; s.w as usize]; s.h as usize];
        for (slot, &(r, c)) in s.pos.iter().enumerate() {
            grid[r as usize][c as usize] = slot;
        }
        let mut pos = s.pos.clone();
        let mut holder = s.holder;
        let mut events: Vec<Vec<u8>> = vec![vec![]; total];
        let mut idle = vec![false; total];

        let change = |events: &mut Vec<Vec<u8>>, win: usize, lose: usize| {
            for slot in 0..total {
                if slot == win {
                    events[slot].push(STEAL);
                } else if slot == lose {
                    events[slot].push(TURNOVER);
                } else if team(slot, n) == team(win, n) {
                    events[slot].push(TEAM_STEAL);
                } else {
                    events[slot].push(TEAM_TURNOVER);
                }
            }
        };

        // passes / holds
        for slot in 0..total {
            let a = acts[slot];
            if a == 0 || (a >= 9 && slot != s.holder) {
                idle[slot] = true;
                events[slot].push(HOLD);
            } else if a >= 9 {
                let k = (a - 8) as usize;
                let my_team = team(slot, n);
                let mates: Vec<usize> = (my_team * n..my_team * n + n).filter(|&x| x != slot).collect();
                let recv = mates[k - 1];
                let mut caught = None;
                for cell in line_between(s.pos[slot], s.pos[recv]) {
                    let occ = grid[cell.0 as usize][cell.1 as usize];
                    if occ != usize::MAX && team(occ, n) != my_team {
                        caught = Some(occ);
                        break;
                    }
                }
                if let Some(occ) = caught {
                    holder = occ;
                    change(&mut events, occ, slot);
                } else {
                    holder = recv;
                    events[slot].push(PASS_OK);
                }
            }
        }

        // moves
        for slot in 0..total {
            let a = acts[slot];
            if !(1..=8).contains(&a) {
                continue;
            }
            let (dr, dc) = delta(a);
            let (r, c) = (pos[slot].0 + dr, pos[slot].1 + dc);
            if r < 0 || c < 0 || r >= s.h || c >= s.w {
                events[slot].push(ILLEGAL);
                continue;
            }
            let occ = grid[r as usize][c as usize];
            if occ == usize::MAX {
                grid[pos[slot].0 as usize][pos[slot].1 as usize] = usize::MAX;
                grid[r as usize][c as usize] = slot;
                pos[slot] = (r, c);
                events[slot].push(MOVE);
            } else if occ == holder && team(occ, n) != team(slot, n) && !idle[occ] {
                holder = slot;
                change(&mut events, slot, occ);
            } else {
                events[slot].push(ILLEGAL);
            }
        }

        // goals
        let mut score = s.score;
        let mut goal = None;
        let (hr, hc) = pos[holder];
        if hr >= s.goal_lo && hr <= s.goal_hi && (hc == 0 || hc == s.w - 1) {
            let defended_by = if hc == 0 { 0 } else { 1 };
            let scorer_team = team(holder, n);
            events[holder].retain(|e| !matches!(*e, ILLEGAL | PASS_OK | HOLD | MOVE));
            let own = defended_by == scorer_team;
            for slot in 0..total {
                let code = if slot == holder {
                    if own { OWN_GOAL } else { SCORED }
                } else if team(slot, n) == scorer_team {
                    if own { TEAM_OWN_GOAL } else { TEAM_SCORED }
                } else if own {
                    OPP_OWN_GOAL
                } else {
                    OPP_SCORED
                };
                events[slot].push(code);
            }
            let credited = 1 - defended_by;
            score[credited] += 1;
            goal = Some(credited);
        }

        let rewards = events.iter().map(|ev| ev.iter().map(|&e| VALUES[e as usize]).sum()).collect();
        for ev in events.iter_mut() {
            ev.sort_unstable();
        }
        RefOutcome { pos, holder, score, events, rewards, goal }
    }
}

pub mod equivalence {
    //! Drives the crate's `step` and the reference side by side.

    use super::reference_env::{self, RefState};
    use gridsoccer::env::{step, Action, AgentId, EnvConfig, GameState, GridPos, RewardEvent, TeamId};
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn event_code(e: RewardEvent) -> u8 {
        RewardEvent::ALL.iter().position(|k| *k == e).unwrap() as u8
    }

    /// Random legal state on an `h x w` grid with distinct positions.
    pub fn random_state(h: usize, w: usize, n: usize, rng: &mut ChaCha8Rng) -> GameState {
        let pitch = EnvConfig::new(h, w, n).pitch().unwrap();
        let mut cells: Vec<GridPos> =
            (0..h as i32).flat_map(|r| (0..w as i32).map(move |c| GridPos::new(r, c))).collect();
        cells.shuffle(rng);
        let positions = cells[..2 * n].to_vec();
        let holder = AgentId::from_slot(rng.gen_range(0..2 * n), n);
        GameState::from_parts(pitch, positions, holder, [rng.gen_range(0..3), rng.gen_range(0..3)], 0).unwrap()
    }

    pub fn to_ref(s: &GameState) -> RefState {
        let (lo, hi) = s.pitch().goal_rows();
        RefState {
            h: s.pitch().height() as i32,
            w: s.pitch().width() as i32,
            n: s.players(),
            goal_lo: lo as i32,
            goal_hi: hi as i32,
            pos: s.positions().iter().map(|p| (p.row, p.col)).collect(),
            holder: s.ball_holder_slot(),
            score: [s.score(TeamId::Left), s.score(TeamId::Right)],
        }
    }

    /// Compares the crate's step against the reference for every joint action.
    pub fn exhaustive_mismatches(h: usize, w: usize, n: usize, states: usize, seed: u64) -> (usize, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_agent = n + 8;
        let agents = 2 * n;
        let joint_count = per_agent.pow(agents as u32);
        let mut mismatches = 0;
        let mut checked = 0;
        for _ in 0..states {
            let s = random_state(h, w, n, &mut rng);
            let rs = to_ref(&s);
            for mut idx in 0..joint_count {
                let mut codes = vec![0u8; agents];
                for c in codes.iter_mut() {
                    *c = (idx % per_agent) as u8;
                    idx /= per_agent;
                }
                let actions: Vec<Action> = codes.iter().map(|&c| Action::from_code(c)).collect();
                let got = step(&s, &actions).unwrap();
                let want = reference_env::step(&rs, &codes);
                let fin = &got.final_state;
                let mut events: Vec<Vec<u8>> =
                    got.events.iter().map(|ev| ev.iter().map(|e| event_code(*e)).collect()).collect();
                for ev in events.iter_mut() {
                    ev.sort_unstable();
                }
                let same = fin.positions().iter().map(|p| (p.row, p.col)).collect::<Vec<_>>() == want.pos
                    && fin.ball_holder_slot() == want.holder
                    && [fin.score(TeamId::Left), fin.score(TeamId::Right)] == want.score
                    && events == want.events
                    && got.rewards == want.rewards
                    && got.goal_scored.map(|t| t.index()) == want.goal;
                if !same {
                    if mismatches < 3 {
                        eprintln!("mismatch: state {rs:?} codes {codes:?}\n got {got:?}\n want {want:?}");
                    }
                    mismatches += 1;
                }
                checked += 1;
            }
        }
        (mismatches, checked)
    }
}

pub mod returns {
    //! One-step SARSA targets, Monte Carlo returns, and the explicit weighted
    //! sum of n-step returns.

    pub fn one_step(r: &[f64], q: &[f64], g: f64) -> Vec<f64> {
        (0..r.len()).map(|t| r[t] + if t + 1 < r.len() { g * q[t + 1] } else { 0.0 }).collect()
    }

    pub fn monte_carlo(r: &[f64], g: f64) -> Vec<f64> {
        (0..r.len()).map(|t| r[t..].iter().enumerate().map(|(k, x)| g.powi(k as i32) * x).sum()).collect()
    }

    pub fn n_step(r: &[f64], q: &[f64], bootstrap: f64, g: f64, t: usize, n: usize) -> f64 {
        let end = (t + n).min(r.len());
        let mut ret: f64 = (t..end).map(|k| g.powi((k - t) as i32) * r[k]).sum();
        let tail = if t + n < r.len() { q[t + n] } else { bootstrap };
        ret += g.powi((end - t) as i32) * tail;
        ret
    }

    pub fn brute_lambda(r: &[f64], q: &[f64], bootstrap: f64, l: f64, g: f64) -> Vec<f64> {
        let len = r.len();
        (0..len)
            .map(|t| {
                let horizon = len - t;
                let mut total = 0.0;
                for n in 1..horizon {
                    total += (1.0 - l) * l.powi(n as i32 - 1) * n_step(r, q, bootstrap, g, t, n);
                }
                total + l.powi(horizon as i32 - 1) * n_step(r, q, bootstrap, g, t, horizon)
            })
            .collect()
    }
}
