//! Stochastic games, matrix games, policies and potentials.
//!
//! Joint actions are enumerated row-major over players: player 0 is the most
//! significant digit. Transition rows are stored sparsely per
//! `(state, joint action)`; every entry carries one reward per player.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance for structural checks (row sums, distributions).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Default tolerance for value fixed points.
pub const VALUE_TOL: f64 = 1e-9;
/// Default tolerance for equilibrium regret.
pub const REGRET_TOL: f64 = 1e-8;
/// Iteration cap for iterative evaluation and value iteration.
pub const MAX_ITERATIONS: usize = 100_000;
/// Largest state count solved by a direct linear solve.
pub const DIRECT_SOLVE_LIMIT: usize = 64;

/// Row-major indexing of joint actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointActions {
    counts: Vec<usize>,
    total: usize,
}

impl JointActions {
    pub fn new(counts: &[usize]) -> Self {
        JointActions {
            counts: counts.to_vec(),
            total: counts.iter().product(),
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn index(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.counts.len());
        actions
            .iter()
            .zip(&self.counts)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &n) in out.iter_mut().zip(&self.counts).rev() {
            *slot = index % n;
            index /= n;
        }
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.counts.len()];
        self.decode_into(index, &mut out);
        out
    }

    /// Action of `player` inside joint action `index`.
    pub fn action_of(&self, index: usize, player: usize) -> usize {
        let stride: usize = self.counts[player + 1..].iter().product();
        (index / stride) % self.counts[player]
    }
}

/// A single-state game with a dense payoff table.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    joint: JointActions,
    // payoff[j * n + i]
    payoff: Vec<f64>,
    zero_sum: bool,
}

impl MatrixGame {
    /// `payoffs[j]` holds every player's payoff for joint action `j`.
    pub fn new(action_counts: &[usize], payoffs: Vec<Vec<f64>>) -> Result<Self> {
        let joint = JointActions::new(action_counts);
        let n = action_counts.len();
        if n == 0 || action_counts.iter().any(|&c| c == 0) {
            return Err(Error::dimension("every player needs at least one action"));
        }
        if payoffs.len() != joint.len() {
            return Err(Error::dimension(format!(
                "payoff table has {} joint actions, expected {}",
                payoffs.len(),
                joint.len()
            )));
        }
        let mut payoff = Vec::with_capacity(joint.len() * n);
        for (j, row) in payoffs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dimension(format!(
                    "joint action {j} has {} payoffs, expected {n}",
                    row.len()
                )));
            }
            payoff.extend_from_slice(row);
        }
        Ok(MatrixGame {
            joint,
            payoff,
            zero_sum: false,
        })
    }

    /// Two-player game from row-player and column-player matrices.
    pub fn bimatrix(row: &[Vec<f64>], col: &[Vec<f64>]) -> Result<Self> {
        let m = row.len();
        let k = row.first().map_or(0, Vec::len);
        if col.len() != m || row.iter().chain(col).any(|r| r.len() != k) {
            return Err(Error::dimension("bimatrix payoff shapes differ"));
        }
        let payoffs = (0..m)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .map(|(a, b)| vec![row[a][b], col[a][b]])
            .collect();
        MatrixGame::new(&[m, k], payoffs)
    }

    /// Two-player zero-sum game; player 2 receives the negated matrix.
    pub fn zero_sum(matrix: &[Vec<f64>]) -> Result<Self> {
        let neg: Vec<Vec<f64>> = matrix
            .iter()
            .map(|r| r.iter().map(|v| -v).collect())
            .collect();
        let mut game = MatrixGame::bimatrix(matrix, &neg)?;
        game.zero_sum = true;
        Ok(game)
    }

    /// Sets the zero-sum flag after checking `payoff_1 + payoff_2 = 0`.
    pub fn mark_zero_sum(mut self) -> Result<Self> {
        if !self.is_pointwise_zero_sum() {
            return Err(Error::domain("payoffs do not sum to zero"));
        }
        self.zero_sum = true;
        Ok(self)
    }

    pub fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    pub(crate) fn is_pointwise_zero_sum(&self) -> bool {
        self.num_players() == 2
            && self
                .payoff
                .chunks_exact(2)
                .all(|p| (p[0] + p[1]).abs() <= STRUCTURAL_TOL)
    }

    pub fn num_players(&self) -> usize {
        self.joint.counts().len()
    }

    pub fn action_counts(&self) -> &[usize] {
        self.joint.counts()
    }

    pub fn joint(&self) -> &JointActions {
        &self.joint
    }

    pub fn payoff(&self, joint: usize, player: usize) -> f64 {
        self.payoff[joint * self.num_players() + player]
    }

    pub fn payoff_of(&self, actions: &[usize], player: usize) -> f64 {
        self.payoff(self.joint.index(actions), player)
    }

    /// Row-by-column matrix of one player's payoffs (two-player games only).
    pub fn player_matrix(&self, player: usize) -> Vec<Vec<f64>> {
        let c = self.action_counts();
        (0..c[0])
            .map(|a| (0..c[1]).map(|b| self.payoff_of(&[a, b], player)).collect())
            .collect()
    }

    /// Adds `c` to every payoff of `player`.
    pub fn translate(&self, player: usize, c: f64) -> MatrixGame {
        let mut out = self.clone();
        let n = self.num_players();
        for j in 0..self.joint.len() {
            out.payoff[j * n + player] += c;
        }
        out.zero_sum = false;
        out
    }
}

/// One transition row: next states with probabilities and per-player rewards.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub next: &'a [usize],
    pub prob: &'a [f64],
    rewards: &'a [f64],
    players: usize,
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        self.next.len()
    }

    pub fn is_empty(&self) -> bool {
        self.next.is_empty()
    }

    pub fn reward(&self, entry: usize, player: usize) -> f64 {
        self.rewards[entry * self.players + player]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, &'a [f64])> + 'a {
        let n = self.players;
        let rewards = self.rewards;
        self.next
            .iter()
            .zip(self.prob)
            .enumerate()
            .map(move |(e, (&s, &p))| (s, p, &rewards[e * n..(e + 1) * n]))
    }
}

/// A finite discounted n-player stochastic game.
///
/// Action sets are per player and shared by every state. Rewards are the
/// expected immediate rewards `R_i(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    state_names: Vec<String>,
    action_names: Vec<Vec<String>>,
    joint: JointActions,
    gamma: f64,
    terminal: Vec<bool>,
    row_start: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
    reward: Vec<f64>,
}

impl StochasticGame {
    pub fn num_players(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_joint(&self) -> usize {
        self.joint.len()
    }

    pub fn joint(&self) -> &JointActions {
        &self.joint
    }

    pub fn action_counts(&self) -> &[usize] {
        self.joint.counts()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.state_names[s]
    }

    pub fn action_names(&self, player: usize) -> &[String] {
        &self.action_names[player]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminals(&self) -> &[bool] {
        &self.terminal
    }

    pub fn non_terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states()).filter(|&s| !self.terminal[s])
    }

    pub fn row(&self, s: usize, joint: usize) -> Row<'_> {
        let r = s * self.num_joint() + joint;
        let (lo, hi) = (self.row_start[r], self.row_start[r + 1]);
        let n = self.num_players();
        Row {
            next: &self.next[lo..hi],
            prob: &self.prob[lo..hi],
            rewards: &self.reward[lo * n..hi * n],
            players: n,
        }
    }

    pub fn transition_prob(&self, s: usize, joint: usize, next: usize) -> f64 {
        let row = self.row(s, joint);
        row.next
            .binary_search(&next)
            .map_or(0.0, |e| row.prob[e])
    }

    pub fn reward(&self, player: usize, s: usize, joint: usize, next: usize) -> f64 {
        let row = self.row(s, joint);
        row.next
            .binary_search(&next)
            .map_or(0.0, |e| row.reward(e, player))
    }

    /// `Σ_{s'} T(s,a,s') R_i(s,a,s')`.
    pub fn expected_reward(&self, player: usize, s: usize, joint: usize) -> f64 {
        self.row(s, joint)
            .iter()
            .map(|(_, p, r)| p * r[player])
            .sum()
    }

    /// Number of stored `(s, a, s')` entries.
    pub fn num_entries(&self) -> usize {
        self.next.len()
    }

    /// Copy of this game with every stored reward replaced by
    /// `f(player, s, joint, next, reward)`.
    pub fn map_rewards(&self, mut f: impl FnMut(usize, usize, usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        let n = self.num_players();
        for s in 0..self.num_states() {
            for j in 0..self.num_joint() {
                let r = s * self.num_joint() + j;
                for e in self.row_start[r]..self.row_start[r + 1] {
                    let next = self.next[e];
                    for i in 0..n {
                        out.reward[e * n + i] = f(i, s, j, next, self.reward[e * n + i]);
                    }
                }
            }
        }
        out
    }

    /// True for two-player games with `R_1 = −R_2` on every stored entry.
    pub fn is_zero_sum(&self) -> bool {
        self.num_players() == 2
            && self
                .reward
                .chunks_exact(2)
                .all(|r| (r[0] + r[1]).abs() <= STRUCTURAL_TOL)
    }

    /// Action names of joint action `joint`, one per player.
    pub fn joint_names(&self, joint: usize) -> Vec<&str> {
        self.joint
            .decode(joint)
            .iter()
            .enumerate()
            .map(|(i, &a)| self.action_names[i][a].as_str())
            .collect()
    }

    pub fn describe_joint(&self, joint: usize) -> String {
        format!("({})", self.joint_names(joint).join(","))
    }
}

/// Incremental construction of a [`StochasticGame`].
///
/// Entries not set default to probability 0 and reward 0. The builder does not
/// check stochasticity; run [`validate_game`] on the result.
#[derive(Debug, Clone)]
pub struct GameBuilder {
    state_names: Vec<String>,
    action_names: Vec<Vec<String>>,
    joint: JointActions,
    gamma: f64,
    terminal: Vec<bool>,
    entries: BTreeMap<(usize, usize, usize), (f64, Vec<f64>)>,
}

impl GameBuilder {
    pub fn new<S: Into<String>, A: Into<String>>(
        states: impl IntoIterator<Item = S>,
        actions: impl IntoIterator<Item = Vec<A>>,
        gamma: f64,
    ) -> Self {
        let state_names: Vec<String> = states.into_iter().map(Into::into).collect();
        let action_names: Vec<Vec<String>> = actions
            .into_iter()
            .map(|v| v.into_iter().map(Into::into).collect())
            .collect();
        let counts: Vec<usize> = action_names.iter().map(Vec::len).collect();
        GameBuilder {
            terminal: vec![false; state_names.len()],
            state_names,
            joint: JointActions::new(&counts),
            action_names,
            gamma,
            entries: BTreeMap::new(),
        }
    }

    /// Builder with generated names `s0..`, `a0..`.
    pub fn anonymous(num_states: usize, action_counts: &[usize], gamma: f64) -> Self {
        GameBuilder::new(
            (0..num_states).map(|s| format!("s{s}")),
            action_counts
                .iter()
                .map(|&c| (0..c).map(|a| format!("a{a}")).collect::<Vec<_>>()),
            gamma,
        )
    }

    pub fn num_players(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn joint(&self) -> &JointActions {
        &self.joint
    }

    pub fn terminal(&mut self, s: usize) -> &mut Self {
        self.terminal[s] = true;
        self
    }

    fn entry(&mut self, s: usize, joint: usize, next: usize) -> &mut (f64, Vec<f64>) {
        let n = self.num_players();
        self.entries
            .entry((s, joint, next))
            .or_insert_with(|| (0.0, vec![0.0; n]))
    }

    pub fn transition(&mut self, s: usize, joint: usize, next: usize, prob: f64) -> &mut Self {
        self.entry(s, joint, next).0 = prob;
        self
    }

    pub fn reward(
        &mut self,
        player: usize,
        s: usize,
        joint: usize,
        next: usize,
        value: f64,
    ) -> &mut Self {
        self.entry(s, joint, next).1[player] = value;
        self
    }

    /// Sets transition and all players' rewards of one entry at once.
    pub fn outcome(
        &mut self,
        s: usize,
        joint: usize,
        next: usize,
        prob: f64,
        rewards: &[f64],
    ) -> &mut Self {
        let e = self.entry(s, joint, next);
        e.0 = prob;
        e.1.copy_from_slice(rewards);
        self
    }

    /// Makes every terminal an absorbing zero-reward self-loop.
    pub fn absorb_terminals(&mut self) -> &mut Self {
        for s in 0..self.num_states() {
            if self.terminal[s] {
                self.entries.retain(|&(a, _, _), _| a != s);
                for j in 0..self.joint.len() {
                    self.transition(s, j, s, 1.0);
                }
            }
        }
        self
    }

    pub fn build(&self) -> Result<StochasticGame> {
        let n = self.num_players();
        let num_s = self.num_states();
        let num_j = self.joint.len();
        if n == 0 || num_s == 0 || num_j == 0 {
            return Err(Error::dimension(
                "a game needs at least one player, state and action",
            ));
        }
        let mut row_start = Vec::with_capacity(num_s * num_j + 1);
        let mut next = Vec::with_capacity(self.entries.len());
        let mut prob = Vec::with_capacity(self.entries.len());
        let mut reward = Vec::with_capacity(self.entries.len() * n);
        let mut it = self.entries.iter().peekable();
        for s in 0..num_s {
            for j in 0..num_j {
                row_start.push(next.len());
                while let Some(&(&(es, ej, en), (p, r))) = it.peek() {
                    if (es, ej) != (s, j) {
                        break;
                    }
                    if en >= num_s {
                        return Err(Error::dimension(format!("next state {en} out of range")));
                    }
                    next.push(en);
                    prob.push(*p);
                    reward.extend_from_slice(r);
                    it.next();
                }
            }
        }
        if let Some((&(s, j, _), _)) = it.next() {
            return Err(Error::dimension(format!(
                "entry for state {s}, joint action {j} out of range"
            )));
        }
        row_start.push(next.len());
        Ok(StochasticGame {
            state_names: self.state_names.clone(),
            action_names: self.action_names.clone(),
            joint: self.joint.clone(),
            gamma: self.gamma,
            terminal: self.terminal.clone(),
            row_start,
            next,
            prob,
            reward,
        })
    }
}

/// Per-state distribution over one player's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (s, dist) in probs.iter().enumerate() {
            check_distribution(dist).map_err(|msg| {
                Error::InvalidDistribution(format!("state {s}: {msg}"))
            })?;
        }
        Ok(Policy { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            probs: vec![vec![1.0 / num_actions as f64; num_actions]; num_states],
        }
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        Policy {
            probs: actions
                .iter()
                .map(|&a| {
                    let mut v = vec![0.0; num_actions];
                    v[a] = 1.0;
                    v
                })
                .collect(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    pub fn dist(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    /// The action taken with probability one at `s`, if any.
    pub fn pure_action(&self, s: usize) -> Option<usize> {
        self.probs[s].iter().position(|&p| p == 1.0)
    }
}

/// Checks a probability vector: nonnegative and summing to one.
pub fn check_distribution(dist: &[f64]) -> std::result::Result<(), String> {
    if dist.is_empty() {
        return Err("empty distribution".into());
    }
    if let Some(p) = dist.iter().find(|p| !p.is_finite() || **p < -STRUCTURAL_TOL) {
        return Err(format!("entry {p} is not a probability"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > STRUCTURAL_TOL * dist.len().max(1) as f64 {
        return Err(format!("entries sum to {total}"));
    }
    Ok(())
}

/// One stationary policy per player.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProfile {
    policies: Vec<Policy>,
}

impl PolicyProfile {
    pub fn new(policies: Vec<Policy>) -> Self {
        PolicyProfile { policies }
    }

    pub fn uniform(game: &StochasticGame) -> Self {
        PolicyProfile {
            policies: game
                .action_counts()
                .iter()
                .map(|&c| Policy::uniform(game.num_states(), c))
                .collect(),
        }
    }

    /// Profile where player `i` plays `actions[i][s]` at state `s`.
    pub fn deterministic(game: &StochasticGame, actions: &[Vec<usize>]) -> Self {
        PolicyProfile {
            policies: actions
                .iter()
                .zip(game.action_counts())
                .map(|(a, &c)| Policy::deterministic(a, c))
                .collect(),
        }
    }

    pub fn num_players(&self) -> usize {
        self.policies.len()
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn policy(&self, player: usize) -> &Policy {
        &self.policies[player]
    }

    /// Checks the profile against a game's dimensions.
    pub fn check(&self, game: &StochasticGame) -> Result<()> {
        if self.policies.len() != game.num_players() {
            return Err(Error::dimension(format!(
                "profile has {} policies for a {}-player game",
                self.policies.len(),
                game.num_players()
            )));
        }
        for (i, (p, &c)) in self.policies.iter().zip(game.action_counts()).enumerate() {
            if p.num_states() != game.num_states()
                || p.probs.iter().any(|d| d.len() != c)
            {
                return Err(Error::dimension(format!(
                    "policy of player {i} does not match {} states x {c} actions",
                    game.num_states()
                )));
            }
        }
        Ok(())
    }

    /// Probability of each joint action at `s`, written into `out`.
    pub fn joint_weights_into(&self, joint: &JointActions, s: usize, out: &mut Vec<f64>) {
        joint_weights(joint, self.policies.iter().map(|p| p.dist(s)), None, out);
    }
}

/// Fills `out[j]` with `Π_i dists[i][a_i]` over joint actions `j`; players
/// listed in `skip` contribute a factor of one.
fn joint_weights<'a>(
    joint: &JointActions,
    dists: impl Iterator<Item = &'a [f64]>,
    skip: Option<usize>,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.push(1.0);
    for (i, d) in dists.enumerate() {
        let n = joint.counts()[i];
        let prev = std::mem::take(out);
        out.reserve(prev.len() * n);
        for w in prev {
            for a in 0..n {
                out.push(if Some(i) == skip { w } else { w * d[a] });
            }
        }
    }
}

/// Per-player state potentials `Φ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSet {
    values: Vec<Vec<f64>>,
}

impl PotentialSet {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        PotentialSet { values }
    }

    pub fn zero(num_players: usize, num_states: usize) -> Self {
        PotentialSet {
            values: vec![vec![0.0; num_states]; num_players],
        }
    }

    pub fn num_players(&self) -> usize {
        self.values.len()
    }

    pub fn num_states(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn get(&self, player: usize, s: usize) -> f64 {
        self.values[player][s]
    }

    pub fn player(&self, player: usize) -> &[f64] {
        &self.values[player]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Checks dimensions and `Φ_i(s_T) = 0` at every terminal.
    pub fn check(&self, num_players: usize, terminals: &[bool]) -> Result<()> {
        if self.values.len() != num_players
            || self.values.iter().any(|v| v.len() != terminals.len())
        {
            return Err(Error::dimension(format!(
                "potential must have {num_players} players x {} states",
                terminals.len()
            )));
        }
        for (i, v) in self.values.iter().enumerate() {
            for (s, (&phi, &t)) in v.iter().zip(terminals).enumerate() {
                if t && phi != 0.0 {
                    return Err(Error::domain(format!(
                        "potential of player {i} is {phi} at terminal state {s}; must be 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &PotentialSet) -> PotentialSet {
        PotentialSet {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }
}

/// Per-player state values `V_i(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn zeros(num_players: usize, num_states: usize) -> Self {
        ValueTable {
            values: vec![vec![0.0; num_states]; num_players],
        }
    }

    pub fn get(&self, player: usize, s: usize) -> f64 {
        self.values[player][s]
    }

    pub fn player(&self, player: usize) -> &[f64] {
        &self.values[player]
    }

    /// Sup-norm distance over all players and states.
    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-player action values `Q_i(s, joint)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub q: Vec<Vec<Vec<f64>>>,
}

impl QTable {
    pub fn get(&self, player: usize, s: usize, joint: usize) -> f64 {
        self.q[player][s][joint]
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.q
            .iter()
            .flatten()
            .flatten()
            .zip(other.q.iter().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Which structural rule a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Gamma,
    NonFinite,
    NegativeProbability,
    RowSum,
    TerminalAbsorption,
    ImproperUndiscounted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub state: Option<usize>,
    pub joint: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.rule, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidGame(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a stochastic game.
pub fn validate_game(game: &StochasticGame) -> ValidationReport {
    let mut violations = Vec::new();
    let gamma = game.gamma();
    if !(0.0..=1.0).contains(&gamma) {
        violations.push(Violation {
            rule: Rule::Gamma,
            state: None,
            joint: None,
            message: format!("gamma {gamma} outside [0, 1]"),
        });
    }
    for s in 0..game.num_states() {
        for j in 0..game.num_joint() {
            let row = game.row(s, j);
            let at = || format!("state {} joint action {}", game.state_name(s), game.describe_joint(j));
            let mut push = |rule, message: String| {
                violations.push(Violation {
                    rule,
                    state: Some(s),
                    joint: Some(j),
                    message,
                })
            };
            if row.iter().any(|(_, p, r)| !p.is_finite() || r.iter().any(|x| !x.is_finite())) {
                push(Rule::NonFinite, format!("{}: non-finite probability or reward", at()));
                continue;
            }
            if row.prob.iter().any(|&p| p < 0.0) {
                push(Rule::NegativeProbability, format!("{}: negative probability", at()));
            }
            let total: f64 = row.prob.iter().sum();
            if (total - 1.0).abs() > STRUCTURAL_TOL {
                push(Rule::RowSum, format!("{}: transition row sums to {total}", at()));
            }
            if game.is_terminal(s) {
                let absorbing = row
                    .iter()
                    .all(|(n, p, r)| (n == s || p == 0.0) && r.iter().all(|&x| x == 0.0));
                if !absorbing {
                    push(
                        Rule::TerminalAbsorption,
                        format!("{}: terminal state must be an absorbing zero-reward self-loop", at()),
                    );
                }
            }
        }
    }
    if gamma >= 1.0 {
        let trapped = states_avoiding_termination(game);
        if !trapped.is_empty() {
            let names: Vec<&str> = trapped.iter().map(|&s| game.state_name(s)).collect();
            violations.push(Violation {
                rule: Rule::ImproperUndiscounted,
                state: trapped.first().copied(),
                joint: None,
                message: format!(
                    "gamma = 1 but some joint policy never terminates from states [{}]",
                    names.join(", ")
                ),
            });
        }
    }
    ValidationReport { violations }
}

/// Largest set of non-terminal states that some joint policy can stay inside
/// forever; empty iff every policy terminates with probability one.
fn states_avoiding_termination(game: &StochasticGame) -> Vec<usize> {
    let mut inside: Vec<bool> = game.terminals().iter().map(|t| !t).collect();
    loop {
        let mut changed = false;
        for s in 0..game.num_states() {
            if !inside[s] {
                continue;
            }
            let can_stay = (0..game.num_joint()).any(|j| {
                game.row(s, j)
                    .iter()
                    .all(|(n, p, _)| p == 0.0 || inside[n])
            });
            if !can_stay {
                inside[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..game.num_states()).filter(|&s| inside[s]).collect()
}

/// Expected one-step rewards and sparse next-state distribution of the Markov
/// chain induced by a fixed profile.
struct InducedChain {
    reward: Vec<Vec<f64>>,
    rows: Vec<Vec<(usize, f64)>>,
}

fn induced_chain(game: &StochasticGame, profile: &PolicyProfile) -> InducedChain {
    let n = game.num_players();
    let num_s = game.num_states();
    let mut reward = vec![vec![0.0; num_s]; n];
    let mut rows = vec![Vec::new(); num_s];
    let mut weights = Vec::with_capacity(game.num_joint());
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for s in game.non_terminal_states() {
        profile.joint_weights_into(game.joint(), s, &mut weights);
        acc.clear();
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (next, p, r) in game.row(s, j).iter() {
                *acc.entry(next).or_insert(0.0) += w * p;
                for i in 0..n {
                    reward[i][s] += w * p * r[i];
                }
            }
        }
        rows[s] = acc.iter().map(|(&k, &v)| (k, v)).collect();
    }
    InducedChain { reward, rows }
}

/// Value of every player under a fixed stationary profile.
///
/// Solves `(I − γP_π)V = r_π` directly for games with at most
/// [`DIRECT_SOLVE_LIMIT`] states, otherwise iterates until the sup-norm change
/// drops below `tol·(1−γ)/(2γ)`.
pub fn evaluate_profile(
    game: &StochasticGame,
    profile: &PolicyProfile,
    tol: f64,
) -> Result<ValueTable> {
    profile.check(game)?;
    let chain = induced_chain(game, profile);
    if game.num_states() <= DIRECT_SOLVE_LIMIT {
        evaluate_direct(game, &chain)
    } else {
        evaluate_iterative(game, &chain, tol)
    }
}

fn evaluate_direct(game: &StochasticGame, chain: &InducedChain) -> Result<ValueTable> {
    let n = game.num_players();
    let live: Vec<usize> = game.non_terminal_states().collect();
    let mut pos = vec![usize::MAX; game.num_states()];
    for (k, &s) in live.iter().enumerate() {
        pos[s] = k;
    }
    let m = live.len();
    let mut values = ValueTable::zeros(n, game.num_states());
    if m == 0 {
        return Ok(values);
    }
    let gamma = game.gamma();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DMatrix::<f64>::zeros(m, n);
    for (k, &s) in live.iter().enumerate() {
        for &(next, p) in &chain.rows[s] {
            if pos[next] != usize::MAX {
                a[(k, pos[next])] -= gamma * p;
            }
        }
        for i in 0..n {
            b[(k, i)] = chain.reward[i][s];
        }
    }
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(Error::Divergence { iterations: 0 })?;
    // A numerically singular system can still return huge finite values.
    let residual = (&a * &x - &b).amax();
    if residual > 1e-6 * (1.0 + x.amax()) {
        return Err(Error::Divergence { iterations: 0 });
    }
    for (k, &s) in live.iter().enumerate() {
        for i in 0..n {
            values.values[i][s] = x[(k, i)];
        }
    }
    Ok(values)
}

/// Sup-norm change at which fixed-point iteration stops.
pub(crate) fn stopping_threshold(tol: f64, gamma: f64) -> f64 {
    if gamma >= 1.0 {
        tol
    } else if gamma <= 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / (2.0 * gamma)
    }
}

fn evaluate_iterative(
    game: &StochasticGame,
    chain: &InducedChain,
    tol: f64,
) -> Result<ValueTable> {
    let n = game.num_players();
    let gamma = game.gamma();
    let threshold = stopping_threshold(tol, gamma);
    let mut v = ValueTable::zeros(n, game.num_states());
    let mut next_v = v.clone();
    for it in 1..=MAX_ITERATIONS {
        let mut change: f64 = 0.0;
        for i in 0..n {
            for s in game.non_terminal_states() {
                let cont: f64 = chain.rows[s].iter().map(|&(k, p)| p * v.values[i][k]).sum();
                let x = chain.reward[i][s] + gamma * cont;
                change = change.max((x - v.values[i][s]).abs());
                next_v.values[i][s] = x;
            }
        }
        std::mem::swap(&mut v, &mut next_v);
        if !change.is_finite() {
            return Err(Error::Divergence { iterations: it });
        }
        if change <= threshold {
            return Ok(v);
        }
    }
    Err(Error::Divergence {
        iterations: MAX_ITERATIONS,
    })
}

/// The single-player MDP faced by `player` when every other player follows
/// `others` (listed in player order, skipping `player`).
pub fn induced_mdp(game: &StochasticGame, player: usize, others: &[Policy]) -> Result<StochasticGame> {
    let n = game.num_players();
    if player >= n {
        return Err(Error::PlayerOutOfRange { player, players: n });
    }
    if others.len() + 1 != n {
        return Err(Error::dimension(format!(
            "expected {} opponent policies, got {}",
            n - 1,
            others.len()
        )));
    }
    for (k, p) in others.iter().enumerate() {
        let i = if k < player { k } else { k + 1 };
        if p.num_states() != game.num_states()
            || p.probs.iter().any(|d| d.len() != game.action_counts()[i])
        {
            return Err(Error::dimension(format!("policy of player {i} has wrong shape")));
        }
    }
    if n == 1 {
        return Ok(game.clone());
    }

    let num_own = game.action_counts()[player];
    let mut b = GameBuilder::new(
        game.state_names().iter().cloned(),
        std::iter::once(game.action_names(player).to_vec()),
        game.gamma(),
    );
    for s in 0..game.num_states() {
        if game.is_terminal(s) {
            b.terminal(s);
        }
    }
    // Own factor fixed at one; opponents weighted by their policies.
    let placeholder = vec![1.0; num_own];
    let mut weights = Vec::with_capacity(game.num_joint());
    let mut mass: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for s in 0..game.num_states() {
        let dists = (0..n).map(|i| {
            if i == player {
                placeholder.as_slice()
            } else {
                let k = if i < player { i } else { i - 1 };
                others[k].dist(s)
            }
        });
        joint_weights(game.joint(), dists, Some(player), &mut weights);
        for a in 0..num_own {
            mass.clear();
            for (j, &w) in weights.iter().enumerate() {
                if w == 0.0 || game.joint().action_of(j, player) != a {
                    continue;
                }
                for (next, p, r) in game.row(s, j).iter() {
                    let e = mass.entry(next).or_insert((0.0, 0.0));
                    e.0 += w * p;
                    e.1 += w * p * r[player];
                }
            }
            for (&next, &(p, pr)) in &mass {
                let r = if p > 0.0 { pr / p } else { 0.0 };
                b.outcome(s, a, next, p, &[r]);
            }
        }
    }
    b.build()
}

/// [`induced_mdp`] taking the opponents' policies from a full profile.
pub fn induced_mdp_from_profile(
    game: &StochasticGame,
    player: usize,
    profile: &PolicyProfile,
) -> Result<StochasticGame> {
    if player >= profile.num_players() {
        return Err(Error::PlayerOutOfRange {
            player,
            players: profile.num_players(),
        });
    }
    let others: Vec<Policy> = profile
        .policies()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != player)
        .map(|(_, p)| p.clone())
        .collect();
    induced_mdp(game, player, &others)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn joint_indexing_is_row_major() {
        let j = JointActions::new(&[2, 3, 2]);
        assert_eq!(j.len(), 12);
        assert_eq!(j.index(&[1, 2, 0]), 1 * 6 + 2 * 2);
        for k in 0..12 {
            let a = j.decode(k);
            assert_eq!(j.index(&a), k);
            for (p, &x) in a.iter().enumerate() {
                assert_eq!(j.action_of(k, p), x);
            }
        }
    }

    #[test]
    fn chain_game_is_valid() {
        assert!(validate_game(&catalog::chain_game(0.9)).is_valid());
    }

    #[test]
    fn short_row_is_reported_once() {
        let mut b = GameBuilder::anonymous(2, &[1], 0.9);
        b.terminal(1).absorb_terminals();
        b.transition(0, 0, 1, 0.9);
        let report = validate_game(&b.build().unwrap());
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.rule, Rule::RowSum);
        assert_eq!((v.state, v.joint), (Some(0), Some(0)));
        assert!(v.message.contains("s0") && v.message.contains("(a0)"));
    }

    #[test]
    fn terminal_reward_is_reported() {
        let mut b = GameBuilder::anonymous(2, &[1], 0.9);
        b.terminal(1).absorb_terminals();
        b.outcome(0, 0, 1, 1.0, &[1.0]);
        b.reward(0, 1, 0, 1, 0.5);
        let report = validate_game(&b.build().unwrap());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::TerminalAbsorption);
    }

    #[test]
    fn undiscounted_loop_is_improper() {
        let mut b = GameBuilder::anonymous(1, &[1], 1.0);
        b.outcome(0, 0, 0, 1.0, &[1.0]);
        let report = validate_game(&b.build().unwrap());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::ImproperUndiscounted);
    }

    #[test]
    fn prisoners_dilemma_cooperation_value() {
        let game = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        let profile = PolicyProfile::deterministic(&game, &[vec![0], vec![0]]);
        let v = evaluate_profile(&game, &profile, VALUE_TOL).unwrap();
        // 3 / (1 - 0.5), and by explicit summation of the geometric series
        let series: f64 = (0..200).map(|k| 3.0 * 0.5f64.powi(k)).sum();
        assert!((v.get(0, 0) - 6.0).abs() < 1e-12);
        assert!((v.get(1, 0) - series).abs() < 1e-12);
    }

    #[test]
    fn chain_values_and_terminal_zero() {
        let game = catalog::chain_game(0.9);
        let profile = PolicyProfile::uniform(&game);
        let v = evaluate_profile(&game, &profile, VALUE_TOL).unwrap();
        assert!((v.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((v.get(0, 0) - 0.9).abs() < 1e-12);
        assert_eq!(v.get(0, 2), 0.0);
    }

    #[test]
    fn improper_profile_diverges() {
        let mut b = GameBuilder::anonymous(1, &[1], 1.0);
        b.outcome(0, 0, 0, 1.0, &[1.0]);
        let game = b.build().unwrap();
        let profile = PolicyProfile::uniform(&game);
        assert!(matches!(
            evaluate_profile(&game, &profile, VALUE_TOL),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn induced_mdp_identity_for_one_player() {
        let game = catalog::chain_game(0.9);
        assert_eq!(induced_mdp(&game, 0, &[]).unwrap(), game);
    }

    #[test]
    fn induced_mdp_marginalizes_opponent() {
        let game = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        let defect = Policy::deterministic(&[1], 2);
        let mdp = induced_mdp(&game, 0, &[defect]).unwrap();
        assert_eq!(mdp.expected_reward(0, 0, 0), 0.0);
        assert_eq!(mdp.expected_reward(0, 0, 1), 1.0);

        let mixed = Policy::uniform(1, 2);
        let mdp = induced_mdp(&game, 0, &[mixed]).unwrap();
        assert!((mdp.expected_reward(0, 0, 0) - 1.5).abs() < 1e-15);
        assert!((mdp.expected_reward(0, 0, 1) - 3.0).abs() < 1e-15);
        assert!(validate_game(&mdp).is_valid());
    }

    #[test]
    fn induced_mdp_rejects_bad_player() {
        let game = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        assert!(matches!(
            induced_mdp(&game, 2, &[Policy::uniform(1, 2)]),
            Err(Error::PlayerOutOfRange { .. })
        ));
    }

    #[test]
    fn potential_rejects_terminal_value() {
        let phi = PotentialSet::new(vec![vec![0.5, 1.0, 0.1]]);
        assert!(phi.check(1, &[false, false, true]).is_err());
        let phi = PotentialSet::new(vec![vec![0.5, 1.0, 0.0]]);
        assert!(phi.check(1, &[false, false, true]).is_ok());
    }
}
