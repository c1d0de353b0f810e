use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::game::{Policy, PolicyProfile, PotentialSet, StochasticGame, VALUE_TOL};
use crate::shaping::potential_to_shaping;
use crate::solver::{shapley_value_iteration, solve_single_state, verify_nash};
use crate::{Error, Result};

use super::agent::{IndependentQ, Learner, MinimaxQ, Schedule};
use super::env::{Environment, ShapedEnvironment, TrialRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    MinimaxQ,
    IndependentQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Shaped,
    Unshaped,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Shaped => "shaped",
            Arm::Unshaped => "unshaped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSettings {
    pub agent: AgentKind,
    pub schedule: Schedule,
    pub trials: usize,
    pub seed_base: u64,
    pub episodes: usize,
    pub max_episode_steps: usize,
    pub eval_every: usize,
    pub eps_learn: f64,
}

impl Default for ComparisonSettings {
    fn default() -> Self {
        ComparisonSettings {
            agent: AgentKind::MinimaxQ,
            schedule: Schedule::default(),
            trials: 20,
            seed_base: 1,
            episodes: 10_000,
            max_episode_steps: 100,
            eval_every: 500,
            eps_learn: 0.1,
        }
    }
}

/// Exploitability and value error of one announced profile.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord {
    /// Episodes completed when the record was taken.
    pub episode: usize,
    pub exploitability: Vec<f64>,
    pub value_error: Vec<f64>,
}

impl CurveRecord {
    pub fn max_exploitability(&self) -> f64 {
        self.exploitability.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub arm: Arm,
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<CurveRecord>,
}

impl LearningCurve {
    pub fn final_record(&self) -> Option<&CurveRecord> {
        self.records.last()
    }

    pub fn episodes_to(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.max_exploitability() <= threshold)
            .map(|r| r.episode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    /// First recorded episode with exploitability at most `eps_learn`, per trial.
    pub episodes_to_threshold: Vec<Option<usize>>,
    /// `None` when fewer than half of the trials reached the threshold.
    pub median_episodes_to_threshold: Option<f64>,
    pub final_exploitability: Vec<f64>,
    pub all_final_verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub eps_learn: f64,
    pub trials: usize,
    pub episodes: usize,
    pub shaped: ArmSummary,
    pub unshaped: ArmSummary,
    /// Both arms' final policies verify on the unshaped game.
    pub invariance_holds: bool,
    /// Unshaped over shaped median episodes-to-threshold.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub shaped: Vec<LearningCurve>,
    pub unshaped: Vec<LearningCurve>,
    pub summary: ComparisonSummary,
}

impl ComparisonResult {
    pub fn curves(&self) -> impl Iterator<Item = &LearningCurve> {
        self.shaped.iter().chain(&self.unshaped)
    }
}

/// A learning problem: the game, a simulator factory and the shaping potential.
pub struct Comparison<'a> {
    pub game: &'a StochasticGame,
    pub make_env: &'a (dyn Fn() -> Box<dyn Environment> + Sync),
    pub potential: PotentialSet,
    pub settings: ComparisonSettings,
}

/// `V*` of the game: Shapley iteration for two-player zero-sum games,
/// otherwise the single-state reduction when there is one non-terminal state.
pub fn solver_potential(game: &StochasticGame) -> Result<PotentialSet> {
    let values = if game.num_players() == 2 && game.is_zero_sum() && game.gamma() < 1.0 {
        shapley_value_iteration(game, VALUE_TOL)?.values
    } else if game.non_terminal_states().count() == 1 {
        let solutions = solve_single_state(game, VALUE_TOL)?;
        let first = solutions.into_iter().next().ok_or_else(|| {
            Error::Config("no equilibrium found for the potential; supply a potential file".into())
        })?;
        first.values
    } else {
        return Err(Error::Config(
            "cannot compute V* for this environment; supply a potential file".into(),
        ));
    };
    let mut phi = values.values;
    for p in &mut phi {
        for (s, v) in p.iter_mut().enumerate() {
            if game.is_terminal(s) {
                *v = 0.0;
            }
        }
    }
    Ok(PotentialSet::new(phi))
}

fn make_learners(game: &StochasticGame, settings: &ComparisonSettings) -> Result<Vec<Box<dyn Learner>>> {
    let n = game.num_players();
    let counts = game.action_counts();
    let (states, gamma, schedule) = (game.num_states(), game.gamma(), settings.schedule);
    match settings.agent {
        AgentKind::MinimaxQ => {
            if n != 2 || !game.is_zero_sum() {
                return Err(Error::Config(
                    "minimax-Q needs a two-player zero-sum environment".into(),
                ));
            }
            Ok((0..2)
                .map(|i| Box::new(MinimaxQ::new(i, states, counts, gamma, schedule)) as Box<dyn Learner>)
                .collect())
        }
        AgentKind::IndependentQ => Ok((0..n)
            .map(|i| Box::new(IndependentQ::new(i, states, counts, gamma, schedule)) as Box<dyn Learner>)
            .collect()),
    }
}

fn evaluate(
    game: &StochasticGame,
    learners: &mut [Box<dyn Learner>],
    phi: &PotentialSet,
    episode: usize,
    eps: f64,
) -> Result<CurveRecord> {
    let policies = learners
        .iter_mut()
        .enumerate()
        .map(|(i, learner)| {
            let k = game.action_counts()[i];
            let probs = (0..game.num_states())
                .map(|s| {
                    if game.is_terminal(s) {
                        let mut d = vec![0.0; k];
                        d[0] = 1.0;
                        d
                    } else {
                        learner.announced(s).to_vec()
                    }
                })
                .collect();
            Policy::new(probs)
        })
        .collect::<Result<Vec<_>>>()?;
    let profile = PolicyProfile::new(policies);
    let report = verify_nash(game, &profile, eps)?;
    let n = game.num_players();
    let exploitability = (0..n).map(|i| report.player_max_regret(i)).collect();
    let value_error = (0..n)
        .map(|i| {
            game.non_terminal_states()
                .map(|s| (learners[i].value(s) + phi.get(i, s) - report.values.get(i, s)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(CurveRecord {
        episode,
        exploitability,
        value_error,
    })
}

/// One seeded learning run. `phi` is used only to correct value estimates;
/// shaping, if any, lives in `env`.
pub fn run_trial(
    game: &StochasticGame,
    env: &mut dyn Environment,
    phi: &PotentialSet,
    settings: &ComparisonSettings,
    arm: Arm,
    trial: usize,
) -> Result<LearningCurve> {
    let seed = settings.seed_base.wrapping_add(trial as u64);
    let mut rng = TrialRng::seed_from_u64(seed);
    let mut learners = make_learners(game, settings)?;
    let n = game.num_players();
    let mut joint = vec![0; n];
    let mut rewards = vec![0.0; n];
    let mut records = Vec::new();
    let every = settings.eval_every.max(1);
    for episode in 0..settings.episodes {
        let epsilon = settings.schedule.epsilon(episode, settings.episodes);
        let mut s = env.reset(&mut rng);
        for _ in 0..settings.max_episode_steps {
            if game.is_terminal(s) {
                break;
            }
            for (a, learner) in joint.iter_mut().zip(learners.iter_mut()) {
                *a = learner.act(s, epsilon, &mut rng);
            }
            let (next, terminal) = env.step(&joint, &mut rng, &mut rewards);
            for (learner, &r) in learners.iter_mut().zip(&rewards) {
                learner.update(s, &joint, r, next, terminal);
            }
            if terminal {
                break;
            }
            s = next;
        }
        let done = episode + 1;
        if done % every == 0 || done == settings.episodes {
            records.push(evaluate(game, &mut learners, phi, done, settings.eps_learn)?);
        }
    }
    Ok(LearningCurve {
        arm,
        trial,
        seed,
        records,
    })
}

fn median(mut xs: Vec<Option<usize>>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    // Unreached trials sort last.
    xs.sort_by_key(|x| x.unwrap_or(usize::MAX));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2].map(|x| x as f64)
    } else {
        match (xs[n / 2 - 1], xs[n / 2]) {
            (Some(a), Some(b)) => Some((a + b) as f64 / 2.0),
            _ => None,
        }
    }
}

fn arm_summary(arm: Arm, curves: &[LearningCurve], eps: f64) -> ArmSummary {
    let episodes_to_threshold: Vec<Option<usize>> = curves.iter().map(|c| c.episodes_to(eps)).collect();
    let final_exploitability: Vec<f64> = curves
        .iter()
        .map(|c| c.final_record().map_or(f64::INFINITY, CurveRecord::max_exploitability))
        .collect();
    ArmSummary {
        arm,
        median_episodes_to_threshold: median(episodes_to_threshold.clone()),
        all_final_verified: final_exploitability.iter().all(|&x| x <= eps),
        episodes_to_threshold,
        final_exploitability,
    }
}

/// Runs every trial of both arms. Trials run in parallel; each owns its
/// generator seeded with `seed_base + trial`, so results do not depend on
/// scheduling.
pub fn run_comparison(cmp: &Comparison<'_>) -> Result<ComparisonResult> {
    let game = cmp.game;
    let settings = &cmp.settings;
    cmp.potential.check(game.num_players(), game.terminals())?;
    let shaping = potential_to_shaping(&cmp.potential, game.gamma(), game.terminals())?;
    let zero = PotentialSet::zero(game.num_players(), game.num_states());
    let jobs: Vec<(Arm, usize)> = [Arm::Shaped, Arm::Unshaped]
        .into_iter()
        .flat_map(|arm| (0..settings.trials).map(move |t| (arm, t)))
        .collect();
    let curves = jobs
        .par_iter()
        .map(|&(arm, trial)| match arm {
            Arm::Shaped => {
                let mut env = ShapedEnvironment::new((cmp.make_env)(), shaping.clone())?;
                run_trial(game, &mut env, &cmp.potential, settings, arm, trial)
            }
            Arm::Unshaped => {
                let mut env = (cmp.make_env)();
                run_trial(game, env.as_mut(), &zero, settings, arm, trial)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let (shaped, unshaped): (Vec<_>, Vec<_>) = curves.into_iter().partition(|c| c.arm == Arm::Shaped);
    let eps = settings.eps_learn;
    let s = arm_summary(Arm::Shaped, &shaped, eps);
    let u = arm_summary(Arm::Unshaped, &unshaped, eps);
    let speedup = match (s.median_episodes_to_threshold, u.median_episodes_to_threshold) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    let summary = ComparisonSummary {
        eps_learn: eps,
        trials: settings.trials,
        episodes: settings.episodes,
        invariance_holds: s.all_final_verified && u.all_final_verified,
        shaped: s,
        unshaped: u,
        speedup,
    };
    Ok(ComparisonResult {
        shaped,
        unshaped,
        summary,
    })
}
