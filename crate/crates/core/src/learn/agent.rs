use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lp::ZeroSumLp;

use super::env::TrialRng;

/// Exploration and step-size schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episode budget over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    /// `α = (1 + visits / alpha_visit_scale)^(−alpha_exponent)`.
    pub alpha_visit_scale: f64,
    pub alpha_exponent: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            alpha_visit_scale: 1000.0,
            alpha_exponent: 1.0,
        }
    }
}

impl Schedule {
    pub fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        let horizon = self.epsilon_decay_fraction * episodes as f64;
        if horizon <= 0.0 {
            return self.epsilon_end;
        }
        let t = (episode as f64 / horizon).min(1.0);
        self.epsilon_start + t * (self.epsilon_end - self.epsilon_start)
    }

    pub fn alpha(&self, visits: u32) -> f64 {
        let base = 1.0 + visits as f64 / self.alpha_visit_scale;
        if self.alpha_exponent == 1.0 {
            1.0 / base
        } else {
            base.powf(-self.alpha_exponent)
        }
    }
}

/// `(1 − α)·q + α·(r + γ·v_next)`.
pub fn q_update(q: f64, alpha: f64, reward: f64, gamma: f64, v_next: f64) -> f64 {
    (1.0 - alpha) * q + alpha * (reward + gamma * v_next)
}

fn sample(dist: &[f64], rng: &mut TrialRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// A tabular learner controlling one player.
pub trait Learner: Send {
    /// Samples an action: uniform with probability `epsilon`, otherwise from
    /// the announced policy.
    fn act(&mut self, s: usize, epsilon: f64, rng: &mut TrialRng) -> usize;

    /// Learns from one transition; `joint` is the full joint action.
    fn update(&mut self, s: usize, joint: &[usize], reward: f64, next: usize, terminal: bool);

    /// The announced mixed strategy at `s`.
    fn announced(&mut self, s: usize) -> &[f64];

    /// The learner's current state-value estimate.
    fn value(&mut self, s: usize) -> f64;
}

/// Littman's minimax-Q for one side of a two-player zero-sum game.
#[derive(Debug, Clone)]
pub struct MinimaxQ {
    player: usize,
    own: usize,
    opp: usize,
    gamma: f64,
    schedule: Schedule,
    q: Vec<f64>,
    visits: Vec<u32>,
    strategy: Vec<f64>,
    opp_strategy: Vec<f64>,
    values: Vec<f64>,
    dirty: Vec<bool>,
    bases: Vec<Vec<usize>>,
    lp: ZeroSumLp,
}

const STILL_OPTIMAL_TOL: f64 = 1e-12;

impl MinimaxQ {
    pub fn new(
        player: usize,
        num_states: usize,
        action_counts: &[usize],
        gamma: f64,
        schedule: Schedule,
    ) -> Self {
        assert_eq!(action_counts.len(), 2, "minimax-Q needs two players");
        let own = action_counts[player];
        let opp = action_counts[1 - player];
        MinimaxQ {
            player,
            own,
            opp,
            gamma,
            schedule,
            q: vec![0.0; num_states * own * opp],
            visits: vec![0; num_states * own * opp],
            strategy: vec![0.0; num_states * own],
            opp_strategy: vec![0.0; num_states * opp],
            values: vec![0.0; num_states],
            dirty: vec![true; num_states],
            bases: vec![Vec::new(); num_states],
            lp: ZeroSumLp::fast(),
        }
    }

    pub fn q(&self, s: usize, own: usize, opp: usize) -> f64 {
        self.q[(s * self.own + own) * self.opp + opp]
    }

    fn refresh(&mut self, s: usize) {
        if !self.dirty[s] {
            return;
        }
        let block = self.own * self.opp;
        let q = &self.q[s * block..(s + 1) * block];
        let strat = &mut self.strategy[s * self.own..(s + 1) * self.own];
        let opp_strat = &mut self.opp_strategy[s * self.opp..(s + 1) * self.opp];
        let basis = &mut self.bases[s];
        self.values[s] = self
            .lp
            .solve_warm(self.own, self.opp, q, basis, strat, opp_strat);
        self.dirty[s] = false;
    }

    /// Whether the cached solution at `s` is still an equilibrium of the
    /// stage matrix after entry `(own, opp)` changed. Entries outside both
    /// supports cannot matter; an entry in one support only affects that
    /// single row or column guarantee.
    fn still_optimal(&self, s: usize, own: usize, opp: usize) -> bool {
        let x = &self.strategy[s * self.own..(s + 1) * self.own];
        let y = &self.opp_strategy[s * self.opp..(s + 1) * self.opp];
        let q = &self.q[s * self.own * self.opp..(s + 1) * self.own * self.opp];
        let v = self.values[s];
        match (x[own] > 0.0, y[opp] > 0.0) {
            (false, false) => true,
            (true, false) => {
                let payoff: f64 = (0..self.own).map(|r| x[r] * q[r * self.opp + opp]).sum();
                payoff >= v - STILL_OPTIMAL_TOL
            }
            (false, true) => {
                let payoff: f64 = (0..self.opp).map(|c| q[own * self.opp + c] * y[c]).sum();
                payoff <= v + STILL_OPTIMAL_TOL
            }
            (true, true) => false,
        }
    }
}

impl Learner for MinimaxQ {
    fn act(&mut self, s: usize, epsilon: f64, rng: &mut TrialRng) -> usize {
        if rng.gen::<f64>() < epsilon {
            return rng.gen_range(0..self.own);
        }
        self.refresh(s);
        sample(&self.strategy[s * self.own..(s + 1) * self.own], rng)
    }

    fn update(&mut self, s: usize, joint: &[usize], reward: f64, next: usize, terminal: bool) {
        let v_next = if terminal {
            0.0
        } else {
            self.refresh(next);
            self.values[next]
        };
        let k = (s * self.own + joint[self.player]) * self.opp + joint[1 - self.player];
        let alpha = self.schedule.alpha(self.visits[k]);
        self.visits[k] = self.visits[k].saturating_add(1);
        self.q[k] = q_update(self.q[k], alpha, reward, self.gamma, v_next);
        let (own, opp) = (joint[self.player], joint[1 - self.player]);
        if !self.dirty[s] && !self.still_optimal(s, own, opp) {
            self.dirty[s] = true;
        }
    }

    fn announced(&mut self, s: usize) -> &[f64] {
        self.refresh(s);
        &self.strategy[s * self.own..(s + 1) * self.own]
    }

    fn value(&mut self, s: usize) -> f64 {
        self.refresh(s);
        self.values[s]
    }
}

/// Q-learning over the player's own actions, treating the others as part of
/// the environment. Announces the greedy action (lowest index on ties).
#[derive(Debug, Clone)]
pub struct IndependentQ {
    player: usize,
    own: usize,
    gamma: f64,
    schedule: Schedule,
    q: Vec<f64>,
    visits: Vec<u32>,
    greedy: Vec<f64>,
}

impl IndependentQ {
    pub fn new(
        player: usize,
        num_states: usize,
        action_counts: &[usize],
        gamma: f64,
        schedule: Schedule,
    ) -> Self {
        let own = action_counts[player];
        IndependentQ {
            player,
            own,
            gamma,
            schedule,
            q: vec![0.0; num_states * own],
            visits: vec![0; num_states * own],
            greedy: vec![0.0; own],
        }
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.own + a]
    }

    fn best(&self, s: usize) -> (usize, f64) {
        let row = &self.q[s * self.own..(s + 1) * self.own];
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(ba, bv), (a, &v)| {
                if v > bv {
                    (a, v)
                } else {
                    (ba, bv)
                }
            })
    }
}

impl Learner for IndependentQ {
    fn act(&mut self, s: usize, epsilon: f64, rng: &mut TrialRng) -> usize {
        if rng.gen::<f64>() < epsilon {
            return rng.gen_range(0..self.own);
        }
        self.best(s).0
    }

    fn update(&mut self, s: usize, joint: &[usize], reward: f64, next: usize, terminal: bool) {
        let v_next = if terminal { 0.0 } else { self.best(next).1 };
        let k = s * self.own + joint[self.player];
        let alpha = self.schedule.alpha(self.visits[k]);
        self.visits[k] = self.visits[k].saturating_add(1);
        self.q[k] = q_update(self.q[k], alpha, reward, self.gamma, v_next);
    }

    fn announced(&mut self, s: usize) -> &[f64] {
        let a = self.best(s).0;
        self.greedy.fill(0.0);
        self.greedy[a] = 1.0;
        &self.greedy
    }

    fn value(&mut self, s: usize) -> f64 {
        self.best(s).1
    }
}
