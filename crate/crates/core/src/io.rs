//! JSON file formats (schema version "1") and CSV output.
//!
//! Game, potential, profile and shaping files refer to states, actions and
//! players by name or index and list only nonzero entries; anything omitted is
//! probability 0 or reward 0. Files written by this module list entries in
//! canonical order (state, then joint action row-major, then next state), so
//! re-serializing a parsed file reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::game::{
    validate_game, GameBuilder, Policy, PolicyProfile, PotentialSet, StochasticGame,
};
use crate::learn::{AgentKind, ComparisonSettings, LearningCurve, Schedule, SoccerStart};
use crate::shaping::ShapingFunction;
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub state: String,
    pub joint: Vec<String>,
    pub next: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub player: usize,
    pub state: String,
    pub joint: Vec<String>,
    pub next: String,
    pub value: f64,
}

/// On-disk form of a [`StochasticGame`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub format: String,
    pub players: usize,
    pub gamma: f64,
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    #[serde(default)]
    pub terminals: Vec<String>,
    #[serde(default)]
    pub transitions: Vec<TransitionEntry>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
}

fn check_format(format: &str) -> Result<()> {
    if format != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported format version {format:?}, expected {FORMAT_VERSION:?}"
        )));
    }
    Ok(())
}

fn lookup(names: &[String], name: &str, what: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Parse(format!("unknown {what} {name:?}")))
}

fn state_of(game: &StochasticGame, name: &str) -> Result<usize> {
    lookup(game.state_names(), name, "state")
}

impl GameFile {
    pub fn from_game(game: &StochasticGame) -> Self {
        let names = |s: usize| game.state_name(s).to_string();
        let joint_names =
            |j: usize| game.joint_names(j).into_iter().map(String::from).collect::<Vec<_>>();
        let mut transitions = Vec::with_capacity(game.num_entries());
        let mut rewards = Vec::new();
        for s in 0..game.num_states() {
            for j in 0..game.num_joint() {
                for (next, prob, r) in game.row(s, j).iter() {
                    transitions.push(TransitionEntry {
                        state: names(s),
                        joint: joint_names(j),
                        next: names(next),
                        prob,
                    });
                    for (player, &value) in r.iter().enumerate() {
                        if value != 0.0 {
                            rewards.push(RewardEntry {
                                player,
                                state: names(s),
                                joint: joint_names(j),
                                next: names(next),
                                value,
                            });
                        }
                    }
                }
            }
        }
        GameFile {
            format: FORMAT_VERSION.into(),
            players: game.num_players(),
            gamma: game.gamma(),
            states: game.state_names().to_vec(),
            actions: (0..game.num_players())
                .map(|i| game.action_names(i).to_vec())
                .collect(),
            terminals: (0..game.num_states())
                .filter(|&s| game.is_terminal(s))
                .map(names)
                .collect(),
            transitions,
            rewards,
        }
    }

    /// Builds the game and runs [`validate_game`] on it.
    pub fn to_game(&self) -> Result<StochasticGame> {
        check_format(&self.format)?;
        if self.players != self.actions.len() {
            return Err(Error::Parse(format!(
                "players is {} but {} action lists are given",
                self.players,
                self.actions.len()
            )));
        }
        if self.states.is_empty() || self.actions.iter().any(Vec::is_empty) {
            return Err(Error::Parse("every game needs states and actions".into()));
        }
        let mut b = GameBuilder::new(self.states.clone(), self.actions.clone(), self.gamma);
        let joint_of = |names: &[String]| -> Result<usize> {
            if names.len() != self.players {
                return Err(Error::Parse(format!(
                    "joint action {names:?} has {} entries for {} players",
                    names.len(),
                    self.players
                )));
            }
            let actions = names
                .iter()
                .zip(&self.actions)
                .map(|(n, acts)| lookup(acts, n, "action"))
                .collect::<Result<Vec<_>>>()?;
            Ok(b.joint().index(&actions))
        };
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for t in &self.transitions {
            transitions.push((
                lookup(&self.states, &t.state, "state")?,
                joint_of(&t.joint)?,
                lookup(&self.states, &t.next, "state")?,
                t.prob,
            ));
        }
        let mut rewards = Vec::with_capacity(self.rewards.len());
        for r in &self.rewards {
            if r.player >= self.players {
                return Err(Error::Parse(format!("reward for unknown player {}", r.player)));
            }
            rewards.push((
                r.player,
                lookup(&self.states, &r.state, "state")?,
                joint_of(&r.joint)?,
                lookup(&self.states, &r.next, "state")?,
                r.value,
            ));
        }
        for name in &self.terminals {
            b.terminal(lookup(&self.states, name, "state")?);
        }
        for (s, j, next, p) in transitions {
            b.transition(s, j, next, p);
        }
        for (i, s, j, next, v) in rewards {
            b.reward(i, s, j, next, v);
        }
        let game = b.build()?;
        validate_game(&game).into_result()?;
        Ok(game)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating missing parent directories.
pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn game_to_string(game: &StochasticGame) -> String {
    to_json(&GameFile::from_game(game))
}

pub fn game_from_str(text: &str) -> Result<StochasticGame> {
    let file: GameFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_game()
}

pub fn parse_game(path: impl AsRef<Path>) -> Result<StochasticGame> {
    let path = path.as_ref();
    let file: GameFile = from_json(&read(path)?, path)?;
    file.to_game()
}

pub fn serialize_game(game: &StochasticGame, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &game_to_string(game))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialEntry {
    pub player: usize,
    pub state: String,
    pub value: f64,
}

/// `Φ_i(s)` for listed pairs, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialFile {
    pub format: String,
    pub entries: Vec<PotentialEntry>,
}

impl PotentialFile {
    pub fn from_potential(game: &StochasticGame, phi: &PotentialSet) -> Self {
        let mut entries = Vec::new();
        for i in 0..phi.num_players() {
            for s in 0..phi.num_states() {
                let value = phi.get(i, s);
                if value != 0.0 {
                    entries.push(PotentialEntry {
                        player: i,
                        state: game.state_name(s).into(),
                        value,
                    });
                }
            }
        }
        PotentialFile {
            format: FORMAT_VERSION.into(),
            entries,
        }
    }

    pub fn to_potential(&self, game: &StochasticGame) -> Result<PotentialSet> {
        check_format(&self.format)?;
        let mut values = vec![vec![0.0; game.num_states()]; game.num_players()];
        for e in &self.entries {
            if e.player >= game.num_players() {
                return Err(Error::Parse(format!("potential for unknown player {}", e.player)));
            }
            values[e.player][state_of(game, &e.state)?] = e.value;
        }
        let phi = PotentialSet::new(values);
        phi.check(game.num_players(), game.terminals())?;
        Ok(phi)
    }
}

pub fn parse_potential(path: impl AsRef<Path>, game: &StochasticGame) -> Result<PotentialSet> {
    let path = path.as_ref();
    let file: PotentialFile = from_json(&read(path)?, path)?;
    file.to_potential(game)
}

pub fn serialize_potential(
    game: &StochasticGame,
    phi: &PotentialSet,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), &to_json(&PotentialFile::from_potential(game, phi)))
}

/// One player's strategy at one state: either a named action or a
/// distribution over all actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub player: usize,
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

/// A stationary profile. Every non-terminal state needs a strategy for every
/// player; terminal states default to the first action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub format: String,
    pub strategies: Vec<StrategyEntry>,
}

impl ProfileFile {
    pub fn from_profile(game: &StochasticGame, profile: &PolicyProfile) -> Self {
        let mut strategies = Vec::new();
        for (i, policy) in profile.policies().iter().enumerate() {
            for s in game.non_terminal_states() {
                let entry = match policy.pure_action(s) {
                    Some(a) => StrategyEntry {
                        player: i,
                        state: game.state_name(s).into(),
                        action: Some(game.action_names(i)[a].clone()),
                        probs: None,
                    },
                    None => StrategyEntry {
                        player: i,
                        state: game.state_name(s).into(),
                        action: None,
                        probs: Some(policy.dist(s).to_vec()),
                    },
                };
                strategies.push(entry);
            }
        }
        ProfileFile {
            format: FORMAT_VERSION.into(),
            strategies,
        }
    }

    pub fn to_profile(&self, game: &StochasticGame) -> Result<PolicyProfile> {
        check_format(&self.format)?;
        let n = game.num_players();
        let mut probs: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; game.num_states()]; n];
        for e in &self.strategies {
            if e.player >= n {
                return Err(Error::Parse(format!("strategy for unknown player {}", e.player)));
            }
            let s = state_of(game, &e.state)?;
            let k = game.action_counts()[e.player];
            let dist = match (&e.action, &e.probs) {
                (Some(a), None) => {
                    let mut d = vec![0.0; k];
                    d[lookup(game.action_names(e.player), a, "action")?] = 1.0;
                    d
                }
                (None, Some(p)) => p.clone(),
                _ => {
                    return Err(Error::Parse(format!(
                        "strategy of player {} at {:?} needs exactly one of action or probs",
                        e.player, e.state
                    )))
                }
            };
            if probs[e.player][s].replace(dist).is_some() {
                return Err(Error::Parse(format!(
                    "duplicate strategy for player {} at {:?}",
                    e.player, e.state
                )));
            }
        }
        let policies = probs
            .into_iter()
            .enumerate()
            .map(|(i, per_state)| {
                let k = game.action_counts()[i];
                let dists = per_state
                    .into_iter()
                    .enumerate()
                    .map(|(s, d)| match d {
                        Some(d) => Ok(d),
                        None if game.is_terminal(s) => {
                            let mut d = vec![0.0; k];
                            d[0] = 1.0;
                            Ok(d)
                        }
                        None => Err(Error::Parse(format!(
                            "no strategy for player {i} at {:?}",
                            game.state_name(s)
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Policy::new(dists)
            })
            .collect::<Result<Vec<_>>>()?;
        let profile = PolicyProfile::new(policies);
        profile.check(game)?;
        Ok(profile)
    }
}

pub fn parse_profile(path: impl AsRef<Path>, game: &StochasticGame) -> Result<PolicyProfile> {
    let path = path.as_ref();
    let file: ProfileFile = from_json(&read(path)?, path)?;
    file.to_profile(game)
}

pub fn serialize_profile(
    game: &StochasticGame,
    profile: &PolicyProfile,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), &to_json(&ProfileFile::from_profile(game, profile)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingEntry {
    pub player: usize,
    pub state: String,
    pub next: String,
    pub value: f64,
}

/// `F_i(s, s')` for listed triples, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingFile {
    pub format: String,
    pub entries: Vec<ShapingEntry>,
}

impl ShapingFile {
    pub fn from_shaping(game: &StochasticGame, f: &ShapingFunction) -> Self {
        let mut entries = Vec::new();
        for i in 0..f.num_players() {
            for s in 0..f.num_states() {
                for t in 0..f.num_states() {
                    let value = f.get(i, s, t);
                    if value != 0.0 {
                        entries.push(ShapingEntry {
                            player: i,
                            state: game.state_name(s).into(),
                            next: game.state_name(t).into(),
                            value,
                        });
                    }
                }
            }
        }
        ShapingFile {
            format: FORMAT_VERSION.into(),
            entries,
        }
    }

    pub fn to_shaping(&self, game: &StochasticGame) -> Result<ShapingFunction> {
        check_format(&self.format)?;
        let mut f = ShapingFunction::zero(game.num_players(), game.num_states());
        for e in &self.entries {
            if e.player >= game.num_players() {
                return Err(Error::Parse(format!("shaping for unknown player {}", e.player)));
            }
            f.set(e.player, state_of(game, &e.state)?, state_of(game, &e.next)?, e.value);
        }
        Ok(f)
    }
}

pub fn parse_shaping(path: impl AsRef<Path>, game: &StochasticGame) -> Result<ShapingFunction> {
    let path = path.as_ref();
    let file: ShapingFile = from_json(&read(path)?, path)?;
    file.to_shaping(game)
}

pub fn serialize_shaping(
    game: &StochasticGame,
    f: &ShapingFunction,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), &to_json(&ShapingFile::from_shaping(game, f)))
}

/// Built-in matrix games available to repeated-play environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixId {
    PrisonersDilemma,
    MatchingPennies,
    BattleOfTheSexes,
}

impl MatrixId {
    pub fn matrix(self) -> crate::game::MatrixGame {
        match self {
            MatrixId::PrisonersDilemma => crate::catalog::prisoners_dilemma(),
            MatrixId::MatchingPennies => crate::catalog::matching_pennies(),
            MatrixId::BattleOfTheSexes => crate::catalog::battle_of_the_sexes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    GridSoccer {
        #[serde(default)]
        start: SoccerStart,
    },
    RepeatedMatrix {
        game: MatrixId,
        gamma: f64,
    },
    /// Samples a game file; episodes start uniformly over non-terminal states.
    GameFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSource {
    /// `Φ = V*` computed by the solver.
    Solver,
    Zero,
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub curves: PathBuf,
    pub summary: PathBuf,
}

fn default_max_steps() -> usize {
    ComparisonSettings::default().max_episode_steps
}

fn default_eval_every() -> usize {
    ComparisonSettings::default().eval_every
}

fn default_eps_learn() -> f64 {
    ComparisonSettings::default().eps_learn
}

/// A learning comparison. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format: String,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub agent: AgentKind,
    #[serde(default)]
    pub schedule: Schedule,
    pub potential: PotentialSource,
    pub trials: usize,
    pub seed_base: u64,
    pub episodes: usize,
    #[serde(default = "default_max_steps")]
    pub max_episode_steps: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_eps_learn")]
    pub eps_learn: f64,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn settings(&self) -> ComparisonSettings {
        ComparisonSettings {
            agent: self.agent,
            schedule: self.schedule,
            trials: self.trials,
            seed_base: self.seed_base,
            episodes: self.episodes,
            max_episode_steps: self.max_episode_steps,
            eval_every: self.eval_every,
            eps_learn: self.eps_learn,
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let EnvironmentConfig::GameFile { path } = &mut self.environment {
            fix(path);
        }
        if let PotentialSource::File { path } = &mut self.potential {
            fix(path);
        }
        fix(&mut self.output.curves);
        fix(&mut self.output.summary);
    }

    fn check(&self) -> Result<()> {
        check_format(&self.format)?;
        let inputs = match (&self.environment, &self.potential) {
            (EnvironmentConfig::GameFile { path: a }, PotentialSource::File { path: b }) => vec![a, b],
            (EnvironmentConfig::GameFile { path }, _) | (_, PotentialSource::File { path }) => vec![path],
            _ => vec![],
        };
        for p in inputs {
            if !p.is_file() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.trials == 0 || self.episodes == 0 {
            return Err(Error::Config("trials and episodes must be positive".into()));
        }
        if !(self.eps_learn > 0.0) {
            return Err(Error::Config("eps_learn must be positive".into()));
        }
        Ok(())
    }
}

pub fn parse_experiment(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let mut config: ExperimentConfig = from_json(&read(path)?, path)?;
    config.resolve(path.parent().unwrap_or(Path::new(".")));
    config.check()?;
    Ok(config)
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros removed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const CSV_HEADER: &str = "trial,episode,player,exploitability,value_error,arm";

/// One row per (record, player), sorted by arm, trial, episode and player.
pub fn curves_to_csv<'a>(curves: impl IntoIterator<Item = &'a LearningCurve>) -> String {
    let mut rows = Vec::new();
    for c in curves {
        for r in &c.records {
            for (player, (&x, &v)) in r.exploitability.iter().zip(&r.value_error).enumerate() {
                rows.push((c.arm, c.trial, r.episode, player, x, v));
            }
        }
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (arm, trial, episode, player, x, v) in rows {
        let _ = writeln!(
            out,
            "{trial},{episode},{player},{},{},{}",
            format_sig9(x),
            format_sig9(v),
            arm.label()
        );
    }
    out
}

pub fn emit_csv<'a>(
    curves: impl IntoIterator<Item = &'a LearningCurve>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), &curves_to_csv(curves))
}
