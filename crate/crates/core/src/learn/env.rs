use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::game::{GameBuilder, MatrixGame, StochasticGame};
use crate::shaping::ShapingFunction;
use crate::{Error, Result};

/// The per-trial randomness source.
pub type TrialRng = ChaCha8Rng;

/// A sampled episodic interface to a stochastic game.
pub trait Environment: Send {
    /// The game whose dynamics the environment samples.
    fn model(&self) -> &StochasticGame;

    /// Starts an episode and returns the initial state.
    fn reset(&mut self, rng: &mut TrialRng) -> usize;

    /// Plays one joint action, writing per-player rewards into `rewards`.
    /// Returns the next state and whether it ends the episode.
    fn step(&mut self, joint: &[usize], rng: &mut TrialRng, rewards: &mut [f64]) -> (usize, bool);
}

/// Samples transitions from an explicit game table.
#[derive(Debug, Clone)]
pub struct ModelEnvironment {
    game: StochasticGame,
    start: Vec<f64>,
    current: usize,
}

impl ModelEnvironment {
    /// Episodes start uniformly over non-terminal states.
    pub fn new(game: StochasticGame) -> Self {
        let live = game.non_terminal_states().count().max(1) as f64;
        let start = (0..game.num_states())
            .map(|s| if game.is_terminal(s) { 0.0 } else { 1.0 / live })
            .collect();
        ModelEnvironment {
            game,
            start,
            current: 0,
        }
    }

    pub fn with_start(game: StochasticGame, start: Vec<f64>) -> Result<Self> {
        if start.len() != game.num_states() {
            return Err(Error::dimension(format!(
                "start distribution has {} entries for {} states",
                start.len(),
                game.num_states()
            )));
        }
        crate::game::check_distribution(&start).map_err(Error::InvalidDistribution)?;
        Ok(ModelEnvironment {
            game,
            start,
            current: 0,
        })
    }
}

fn sample_index(weights: impl Iterator<Item = f64>, rng: &mut TrialRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

impl Environment for ModelEnvironment {
    fn model(&self) -> &StochasticGame {
        &self.game
    }

    fn reset(&mut self, rng: &mut TrialRng) -> usize {
        self.current = sample_index(self.start.iter().copied(), rng);
        self.current
    }

    fn step(&mut self, joint: &[usize], rng: &mut TrialRng, rewards: &mut [f64]) -> (usize, bool) {
        let j = self.game.joint().index(joint);
        let row = self.game.row(self.current, j);
        let k = sample_index(row.prob.iter().copied(), rng);
        for (i, r) in rewards.iter_mut().enumerate() {
            *r = row.reward(k, i);
        }
        let next = row.next[k];
        self.current = next;
        (next, self.game.is_terminal(next))
    }
}

/// Repeated play of a matrix game that stops after each round with
/// probability `1 − γ`. The model is undiscounted with an explicit terminal
/// state, so episodic returns estimate the `γ`-discounted value.
#[derive(Debug, Clone)]
pub struct RepeatedMatrixEnvironment {
    matrix: MatrixGame,
    continue_prob: f64,
    game: StochasticGame,
    ended: bool,
}

pub const PLAY: usize = 0;
pub const END: usize = 1;

pub fn repeated_matrix_env(matrix: &MatrixGame, gamma: f64) -> Result<RepeatedMatrixEnvironment> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::domain(format!(
            "continuation probability must lie in [0, 1), got {gamma}"
        )));
    }
    let template = crate::catalog::repeated(matrix, gamma);
    let actions: Vec<Vec<String>> = (0..matrix.num_players())
        .map(|i| template.action_names(i).to_vec())
        .collect();
    let mut b = GameBuilder::new(["play", "end"], actions, 1.0);
    b.terminal(END).absorb_terminals();
    for j in 0..matrix.joint().len() {
        let r: Vec<f64> = (0..matrix.num_players()).map(|i| matrix.payoff(j, i)).collect();
        if gamma > 0.0 {
            b.outcome(PLAY, j, PLAY, gamma, &r);
        }
        b.outcome(PLAY, j, END, 1.0 - gamma, &r);
    }
    Ok(RepeatedMatrixEnvironment {
        matrix: matrix.clone(),
        continue_prob: gamma,
        game: b.build()?,
        ended: false,
    })
}

impl Environment for RepeatedMatrixEnvironment {
    fn model(&self) -> &StochasticGame {
        &self.game
    }

    fn reset(&mut self, _rng: &mut TrialRng) -> usize {
        self.ended = false;
        PLAY
    }

    fn step(&mut self, joint: &[usize], rng: &mut TrialRng, rewards: &mut [f64]) -> (usize, bool) {
        if self.ended {
            rewards.fill(0.0);
            return (END, true);
        }
        let j = self.matrix.joint().index(joint);
        for (i, r) in rewards.iter_mut().enumerate() {
            *r = self.matrix.payoff(j, i);
        }
        if rng.gen::<f64>() < self.continue_prob {
            (PLAY, false)
        } else {
            self.ended = true;
            (END, true)
        }
    }
}

/// Adds `F_i(s, s')` to every observed reward of the wrapped environment.
pub struct ShapedEnvironment<E> {
    inner: E,
    shaping: ShapingFunction,
    current: usize,
}

impl<E: Environment> ShapedEnvironment<E> {
    pub fn new(inner: E, shaping: ShapingFunction) -> Result<Self> {
        shaping.check(inner.model())?;
        Ok(ShapedEnvironment {
            inner,
            shaping,
            current: 0,
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment> Environment for ShapedEnvironment<E> {
    fn model(&self) -> &StochasticGame {
        self.inner.model()
    }

    fn reset(&mut self, rng: &mut TrialRng) -> usize {
        self.current = self.inner.reset(rng);
        self.current
    }

    fn step(&mut self, joint: &[usize], rng: &mut TrialRng, rewards: &mut [f64]) -> (usize, bool) {
        let (next, terminal) = self.inner.step(joint, rng, rewards);
        for (i, r) in rewards.iter_mut().enumerate() {
            *r += self.shaping.get(i, self.current, next);
        }
        self.current = next;
        (next, terminal)
    }
}

impl Environment for Box<dyn Environment> {
    fn model(&self) -> &StochasticGame {
        (**self).model()
    }

    fn reset(&mut self, rng: &mut TrialRng) -> usize {
        (**self).reset(rng)
    }

    fn step(&mut self, joint: &[usize], rng: &mut TrialRng, rewards: &mut [f64]) -> (usize, bool) {
        (**self).step(joint, rng, rewards)
    }
}
