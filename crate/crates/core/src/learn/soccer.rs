//! Littman's grid soccer.
//!
//! A 4×5 field with two players. Each step both players pick one of
//! N, S, E, W or stand; the moves are executed in a uniformly random order.
//! A move onto the other player's square does not happen and the ball goes to
//! the stationary player. Player 0 scores by carrying the ball off the west
//! edge through the goal (rows 1 and 2), player 1 off the east edge. A goal
//! pays +1 to the scorer and −1 to the other player and ends the episode.

use std::collections::BTreeMap;

use rand::Rng;

use crate::game::{GameBuilder, StochasticGame};

use super::env::{Environment, TrialRng};

pub const ROWS: usize = 4;
pub const COLS: usize = 5;
pub const CELLS: usize = ROWS * COLS;
pub const GOAL_ROWS: [usize; 2] = [1, 2];
pub const ACTIONS: [&str; 5] = ["N", "S", "E", "W", "stand"];
pub const GAMMA: f64 = 0.9;

const DELTAS: [(isize, isize); 5] = [(-1, 0), (1, 0), (0, 1), (0, -1), (0, 0)];

/// Player positions (cell indices) and ball holder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub cells: [usize; 2],
    pub ball: usize,
}

/// Result of resolving one joint move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Play(Position),
    Goal { scorer: usize },
}

pub fn cell(row: usize, col: usize) -> usize {
    row * COLS + col
}

/// Resolves a joint move with `first` moving before the other player.
pub fn resolve(pos: Position, actions: [usize; 2], first: usize) -> Resolution {
    let mut p = pos;
    for mover in [first, 1 - first] {
        let other = 1 - mover;
        let (dr, dc) = DELTAS[actions[mover]];
        if (dr, dc) == (0, 0) {
            continue;
        }
        let row = (p.cells[mover] / COLS) as isize + dr;
        let col = (p.cells[mover] % COLS) as isize + dc;
        if row < 0 || row >= ROWS as isize || col < 0 || col >= COLS as isize {
            let goal_row = GOAL_ROWS.contains(&(row as usize)) && (0..ROWS as isize).contains(&row);
            if p.ball == mover && goal_row {
                if col < 0 {
                    return Resolution::Goal { scorer: 0 };
                }
                if col >= COLS as isize {
                    return Resolution::Goal { scorer: 1 };
                }
            }
            continue;
        }
        let target = row as usize * COLS + col as usize;
        if target == p.cells[other] {
            p.ball = other;
            continue;
        }
        p.cells[mover] = target;
    }
    Resolution::Play(p)
}

/// Dense numbering of positions plus the two terminal goal states.
#[derive(Debug, Clone)]
pub struct SoccerIndex {
    positions: Vec<Position>,
    lookup: Vec<usize>,
}

impl SoccerIndex {
    pub fn new() -> Self {
        let mut positions = Vec::new();
        let mut lookup = vec![usize::MAX; CELLS * CELLS * 2];
        for a in 0..CELLS {
            for b in 0..CELLS {
                if a == b {
                    continue;
                }
                for ball in 0..2 {
                    lookup[(a * CELLS + b) * 2 + ball] = positions.len();
                    positions.push(Position { cells: [a, b], ball });
                }
            }
        }
        SoccerIndex { positions, lookup }
    }

    pub fn num_positions(&self) -> usize {
        self.positions.len()
    }

    /// Terminal state reached when `scorer` scores.
    pub fn goal_state(&self, scorer: usize) -> usize {
        self.positions.len() + scorer
    }

    pub fn num_states(&self) -> usize {
        self.positions.len() + 2
    }

    pub fn index(&self, p: Position) -> usize {
        self.lookup[(p.cells[0] * CELLS + p.cells[1]) * 2 + p.ball]
    }

    pub fn position(&self, s: usize) -> Option<Position> {
        self.positions.get(s).copied()
    }

    fn outcome_state(&self, r: Resolution) -> (usize, [f64; 2]) {
        match r {
            Resolution::Play(p) => (self.index(p), [0.0, 0.0]),
            Resolution::Goal { scorer } => {
                let mut rewards = [-1.0, -1.0];
                rewards[scorer] = 1.0;
                (self.goal_state(scorer), rewards)
            }
        }
    }
}

impl Default for SoccerIndex {
    fn default() -> Self {
        Self::new()
    }
}

fn state_name(p: Position) -> String {
    let rc = |c: usize| format!("{}{}", c / COLS, c % COLS);
    format!("A{}-B{}-{}", rc(p.cells[0]), rc(p.cells[1]), if p.ball == 0 { "a" } else { "b" })
}

/// The explicit transition table of grid soccer.
pub fn soccer_game(index: &SoccerIndex) -> StochasticGame {
    let mut names: Vec<String> = index.positions.iter().map(|&p| state_name(p)).collect();
    names.push("goal_A".into());
    names.push("goal_B".into());
    let actions = vec![ACTIONS.to_vec(), ACTIONS.to_vec()];
    let mut b = GameBuilder::new(names, actions, GAMMA);
    b.terminal(index.goal_state(0))
        .terminal(index.goal_state(1))
        .absorb_terminals();
    let mut acc: BTreeMap<usize, (f64, [f64; 2])> = BTreeMap::new();
    for (s, &pos) in index.positions.iter().enumerate() {
        for a0 in 0..5 {
            for a1 in 0..5 {
                acc.clear();
                for first in 0..2 {
                    let (next, rewards) = index.outcome_state(resolve(pos, [a0, a1], first));
                    let e = acc.entry(next).or_insert((0.0, rewards));
                    e.0 += 0.5;
                }
                for (&next, &(p, r)) in &acc {
                    b.outcome(s, a0 * 5 + a1, next, p, &r);
                }
            }
        }
    }
    b.build().expect("soccer table is well-formed")
}

/// How episodes start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoccerStart {
    /// Player 0 at row 2, column 3; player 1 at row 1, column 1; ball to a
    /// random player.
    #[default]
    Littman,
    /// Uniform over all non-terminal positions.
    Uniform,
}

/// Simulator that resolves moves directly rather than sampling the table.
#[derive(Debug, Clone)]
pub struct SoccerEnvironment {
    index: SoccerIndex,
    game: StochasticGame,
    start: SoccerStart,
    current: usize,
}

impl SoccerEnvironment {
    pub fn new(start: SoccerStart) -> Self {
        let index = SoccerIndex::new();
        let game = soccer_game(&index);
        SoccerEnvironment {
            index,
            game,
            start,
            current: 0,
        }
    }

    pub fn index(&self) -> &SoccerIndex {
        &self.index
    }

    /// Places the environment in state `s`.
    pub fn set_state(&mut self, s: usize) {
        self.current = s;
    }
}

/// The game and a fresh simulator.
pub fn grid_soccer(start: SoccerStart) -> (StochasticGame, SoccerEnvironment) {
    let env = SoccerEnvironment::new(start);
    (env.game.clone(), env)
}

impl Environment for SoccerEnvironment {
    fn model(&self) -> &StochasticGame {
        &self.game
    }

    fn reset(&mut self, rng: &mut TrialRng) -> usize {
        self.current = match self.start {
            SoccerStart::Littman => self.index.index(Position {
                cells: [cell(2, 3), cell(1, 1)],
                ball: rng.gen_range(0..2),
            }),
            SoccerStart::Uniform => rng.gen_range(0..self.index.num_positions()),
        };
        self.current
    }

    fn step(&mut self, joint: &[usize], rng: &mut TrialRng, rewards: &mut [f64]) -> (usize, bool) {
        let Some(pos) = self.index.position(self.current) else {
            rewards.fill(0.0);
            return (self.current, true);
        };
        let first = rng.gen_range(0..2);
        let (next, r) = self.index.outcome_state(resolve(pos, [joint[0], joint[1]], first));
        rewards.copy_from_slice(&r);
        self.current = next;
        (next, self.game.is_terminal(next))
    }
}
