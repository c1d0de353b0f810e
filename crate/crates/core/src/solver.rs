//! Equilibrium computation and verification for stochastic games.
//!
//! Verification is the workhorse: with every other player's stationary policy
//! fixed, a player faces an MDP, so its best stationary response (and hence
//! its regret) is found by value iteration on the induced MDP.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::game::{
    evaluate_profile, induced_mdp_from_profile, stopping_threshold, Policy, PolicyProfile, QTable,
    StochasticGame, ValueTable, DIRECT_SOLVE_LIMIT, MAX_ITERATIONS, STRUCTURAL_TOL, VALUE_TOL,
};
use crate::lp::ZeroSumLp;
use crate::matrix::{pure_equilibria, solve_zero_sum, support_enumeration, MatrixEquilibrium};
use crate::game::MatrixGame;

/// Largest number of deterministic stationary profiles searched exhaustively.
pub const PURE_SEARCH_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionMethod {
    ShapleyLp,
    PureSearch,
    SingleState,
    ExternalCandidate,
}

impl fmt::Display for SolutionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolutionMethod::ShapleyLp => "shapley-lp",
            SolutionMethod::PureSearch => "pure-search",
            SolutionMethod::SingleState => "single-state",
            SolutionMethod::ExternalCandidate => "external-candidate",
        })
    }
}

/// A profile together with its values, action values and regret certificate.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub profile: PolicyProfile,
    pub values: ValueTable,
    pub q: QTable,
    /// `regrets[i][s]`: best-response value minus profile value.
    pub regrets: Vec<Vec<f64>>,
    pub method: SolutionMethod,
}

impl EquilibriumSolution {
    pub fn max_regret(&self) -> f64 {
        max_of(&self.regrets)
    }
}

fn max_of(table: &[Vec<f64>]) -> f64 {
    table.iter().flatten().copied().fold(0.0, f64::max)
}

/// Outcome of [`verify_nash`].
#[derive(Debug, Clone)]
pub struct NashReport {
    pub regrets: Vec<Vec<f64>>,
    pub values: ValueTable,
    pub best_response: ValueTable,
    pub max_regret: f64,
    pub is_nash: bool,
}

impl NashReport {
    /// Largest regret of `player` over all states.
    pub fn player_max_regret(&self, player: usize) -> f64 {
        self.regrets[player].iter().copied().fold(0.0, f64::max)
    }
}

/// `Q_i(s,a) = Σ_{s'} T(s,a,s')[R_i(s,a,s') + γ v_i(s')]`, zero at terminals.
pub fn q_from_v(game: &StochasticGame, v: &ValueTable) -> QTable {
    let n = game.num_players();
    let gamma = game.gamma();
    let mut q = vec![vec![vec![0.0; game.num_joint()]; game.num_states()]; n];
    for s in game.non_terminal_states() {
        for j in 0..game.num_joint() {
            for (next, p, r) in game.row(s, j).iter() {
                for i in 0..n {
                    q[i][s][j] += p * (r[i] + gamma * v.values[i][next]);
                }
            }
        }
    }
    QTable { q }
}

fn bellman_max(game: &StochasticGame, v: &[f64], s: usize) -> (f64, Vec<f64>) {
    let gamma = game.gamma();
    let q: Vec<f64> = (0..game.num_joint())
        .map(|a| {
            game.row(s, a)
                .iter()
                .map(|(next, p, r)| p * (r[0] + gamma * v[next]))
                .sum()
        })
        .collect();
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (best, q)
}

fn greedy(q: &[f64], tie: f64) -> usize {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    q.iter().position(|&x| x >= best - tie).unwrap_or(0)
}

/// Optimal values and a greedy deterministic policy of a one-player game.
///
/// Value iteration runs until the sup-norm change is at most
/// `tol·(1−γ)/(2γ)`. Games small enough for a direct solve are then finished
/// with policy iteration so the returned values are exact up to rounding.
pub fn mdp_value_iteration(mdp: &StochasticGame, tol: f64) -> Result<(ValueTable, Policy)> {
    if mdp.num_players() != 1 {
        return Err(Error::domain("value iteration needs a one-player game"));
    }
    let num_s = mdp.num_states();
    let threshold = stopping_threshold(tol, mdp.gamma());
    let mut v = vec![0.0; num_s];
    let mut converged = false;
    for it in 1..=MAX_ITERATIONS {
        let mut change: f64 = 0.0;
        let mut next = v.clone();
        for s in mdp.non_terminal_states() {
            let (best, _) = bellman_max(mdp, &v, s);
            change = change.max((best - v[s]).abs());
            next[s] = best;
        }
        v = next;
        if !change.is_finite() {
            return Err(Error::Divergence { iterations: it });
        }
        if change <= threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Divergence {
            iterations: MAX_ITERATIONS,
        });
    }

    let mut tie = tol;
    if num_s <= DIRECT_SOLVE_LIMIT {
        if let Some(exact) = polish(mdp, &v) {
            v = exact;
            tie = 1e-12;
        }
    }
    let actions: Vec<usize> = (0..num_s)
        .map(|s| {
            if mdp.is_terminal(s) {
                0
            } else {
                let (_, q) = bellman_max(mdp, &v, s);
                greedy(&q, tie * (1.0 + v[s].abs()))
            }
        })
        .collect();
    let policy = Policy::deterministic(&actions, mdp.num_joint());
    Ok((ValueTable { values: vec![v] }, policy))
}

/// Policy iteration started from the greedy policy of `v`.
fn polish(mdp: &StochasticGame, v: &[f64]) -> Option<Vec<f64>> {
    let num_a = mdp.num_joint();
    let mut actions: Vec<usize> = (0..mdp.num_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0
            } else {
                greedy(&bellman_max(mdp, v, s).1, 0.0)
            }
        })
        .collect();
    for _ in 0..1000 {
        let profile = PolicyProfile::new(vec![Policy::deterministic(&actions, num_a)]);
        let values = evaluate_profile(mdp, &profile, VALUE_TOL).ok()?.values.remove(0);
        let mut stable = true;
        for s in mdp.non_terminal_states() {
            let (_, q) = bellman_max(mdp, &values, s);
            let current = q[actions[s]];
            let best = greedy(&q, 0.0);
            if q[best] > current + 1e-12 * (1.0 + current.abs()) {
                actions[s] = best;
                stable = false;
            }
        }
        if stable {
            return Some(values);
        }
    }
    None
}

/// Per-player, per-state regret of a profile against stationary deviations.
pub fn verify_nash(game: &StochasticGame, profile: &PolicyProfile, eps: f64) -> Result<NashReport> {
    profile.check(game)?;
    let eval_tol = (eps * 0.01).clamp(1e-13, VALUE_TOL);
    let values = evaluate_profile(game, profile, eval_tol)?;
    let mut best_response = ValueTable::zeros(game.num_players(), game.num_states());
    let mut regrets = vec![vec![0.0; game.num_states()]; game.num_players()];
    for i in 0..game.num_players() {
        let mdp = induced_mdp_from_profile(game, i, profile)?;
        let (br, _) = mdp_value_iteration(&mdp, eval_tol)?;
        for s in game.non_terminal_states() {
            regrets[i][s] = br.values[0][s] - values.values[i][s];
        }
        best_response.values[i] = br.values.into_iter().next().unwrap_or_default();
    }
    let max_regret = max_of(&regrets);
    Ok(NashReport {
        is_nash: max_regret <= eps,
        regrets,
        values,
        best_response,
        max_regret,
    })
}

/// Values, action values and regrets of a candidate profile.
pub fn solution_for_profile(
    game: &StochasticGame,
    profile: PolicyProfile,
    method: SolutionMethod,
    tol: f64,
) -> Result<EquilibriumSolution> {
    let report = verify_nash(game, &profile, tol)?;
    let q = q_from_v(game, &report.values);
    Ok(EquilibriumSolution {
        profile,
        values: report.values,
        q,
        regrets: report.regrets,
        method,
    })
}

/// Shapley iteration result with the sup-norm change of every sweep.
#[derive(Debug, Clone)]
pub struct ShapleyRun {
    pub solution: EquilibriumSolution,
    pub sweep_changes: Vec<f64>,
    /// Player 0's value iterate after every sweep (present when requested).
    pub iterates: Vec<Vec<f64>>,
}

/// Minimax solution of a two-player zero-sum discounted game.
pub fn shapley_value_iteration(game: &StochasticGame, tol: f64) -> Result<EquilibriumSolution> {
    Ok(shapley_run(game, tol, false)?.solution)
}

/// [`shapley_value_iteration`], optionally keeping every value iterate.
pub fn shapley_run(game: &StochasticGame, tol: f64, keep_iterates: bool) -> Result<ShapleyRun> {
    if game.num_players() != 2 || !game.is_zero_sum() {
        return Err(Error::domain(
            "Shapley iteration needs a two-player zero-sum game",
        ));
    }
    let gamma = game.gamma();
    if gamma >= 1.0 {
        return Err(Error::domain("Shapley iteration needs gamma < 1"));
    }
    let (m, n) = (game.action_counts()[0], game.action_counts()[1]);
    let num_s = game.num_states();
    let threshold = stopping_threshold(tol, gamma);

    let mut lp = ZeroSumLp::new();
    let mut v = vec![0.0; num_s];
    let mut next = vec![0.0; num_s];
    let mut row = vec![vec![0.0; m]; num_s];
    let mut col = vec![vec![0.0; n]; num_s];
    let mut matrix = vec![0.0; m * n];
    let mut sweep_changes = Vec::new();
    let mut iterates = Vec::new();
    for s in 0..num_s {
        row[s][0] = 1.0;
        col[s][0] = 1.0;
    }
    let mut converged = false;
    while sweep_changes.len() < MAX_ITERATIONS {
        let mut change: f64 = 0.0;
        for s in game.non_terminal_states() {
            for (j, cell) in matrix.iter_mut().enumerate() {
                *cell = game
                    .row(s, j)
                    .iter()
                    .map(|(k, p, r)| p * (r[0] + gamma * v[k]))
                    .sum();
            }
            next[s] = lp.solve(m, n, &matrix, &mut row[s], &mut col[s]);
            change = change.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        sweep_changes.push(change);
        if keep_iterates {
            iterates.push(v.clone());
        }
        if change <= threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Divergence {
            iterations: sweep_changes.len(),
        });
    }
    let profile = PolicyProfile::new(vec![Policy::new(row)?, Policy::new(col)?]);
    let solution = solution_for_profile(game, profile, SolutionMethod::ShapleyLp, tol)?;
    Ok(ShapleyRun {
        solution,
        sweep_changes,
        iterates,
    })
}

/// Every deterministic stationary profile that passes [`verify_nash`] at `eps`.
///
/// Terminal states are fixed to each player's first action since they do not
/// affect any value. The search stops early with [`Error::Cancelled`] when
/// `cancel` is raised.
pub fn pure_stationary_equilibria(
    game: &StochasticGame,
    eps: f64,
    cancel: Option<&AtomicBool>,
) -> Result<Vec<PolicyProfile>> {
    let live: Vec<usize> = game.non_terminal_states().collect();
    let n = game.num_players();
    let size: f64 = game
        .action_counts()
        .iter()
        .map(|&c| (c as f64).powi(live.len() as i32))
        .product();
    if size > PURE_SEARCH_LIMIT {
        return Err(Error::SearchTooLarge {
            size,
            limit: PURE_SEARCH_LIMIT,
        });
    }
    // One digit per (player, live state), player 0's digits most significant.
    let radix: Vec<usize> = (0..n)
        .flat_map(|i| std::iter::repeat(game.action_counts()[i]).take(live.len()))
        .collect();
    let mut digits = vec![0usize; radix.len()];
    let mut found = Vec::new();
    loop {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Err(Error::Cancelled);
        }
        let actions: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut a = vec![0; game.num_states()];
                for (k, &s) in live.iter().enumerate() {
                    a[s] = digits[i * live.len() + k];
                }
                a
            })
            .collect();
        let profile = PolicyProfile::deterministic(game, &actions);
        if verify_nash(game, &profile, eps)?.is_nash {
            found.push(profile);
        }
        // Increment the mixed-radix counter from the least significant digit.
        let mut k = digits.len();
        loop {
            if k == 0 {
                return Ok(found);
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < radix[k] {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Equilibria of a game with a single non-terminal state, obtained from the
/// matrix game of expected immediate rewards scaled by `1/(1 − γc)`, where
/// `c` is the (action-independent) probability of staying in the state.
pub fn solve_single_state(game: &StochasticGame, tol: f64) -> Result<Vec<EquilibriumSolution>> {
    let live: Vec<usize> = game.non_terminal_states().collect();
    let [s] = live[..] else {
        return Err(Error::domain(format!(
            "single-state solver needs exactly one non-terminal state, found {}",
            live.len()
        )));
    };
    let stay: Vec<f64> = (0..game.num_joint())
        .map(|j| game.transition_prob(s, j, s))
        .collect();
    if stay.iter().any(|&c| (c - stay[0]).abs() > STRUCTURAL_TOL) {
        return Err(Error::domain(
            "continuation probability depends on the joint action; not a repeated matrix game",
        ));
    }
    let horizon = 1.0 - game.gamma() * stay[0];
    if horizon <= 0.0 {
        return Err(Error::domain("state never terminates and gamma = 1"));
    }
    let n = game.num_players();
    let payoffs: Vec<Vec<f64>> = (0..game.num_joint())
        .map(|j| (0..n).map(|i| game.expected_reward(i, s, j) / horizon).collect())
        .collect();
    let mut matrix = MatrixGame::new(game.action_counts(), payoffs)?;
    if game.is_zero_sum() {
        matrix = matrix.mark_zero_sum()?;
    }

    let strategies: Vec<Vec<Vec<f64>>> = match n {
        2 => {
            let mut eqs = support_enumeration(&matrix, tol)?;
            if eqs.is_empty() && matrix.is_zero_sum() {
                eqs.push(solve_zero_sum(&matrix, tol)?);
            }
            eqs.into_iter().map(|e: MatrixEquilibrium| e.strategies).collect()
        }
        _ => pure_equilibria(&matrix)
            .iter()
            .map(|a| crate::matrix::pure_strategies(&matrix, a))
            .collect(),
    };

    let mut out = Vec::new();
    for strat in strategies {
        let policies = strat
            .iter()
            .zip(game.action_counts())
            .map(|(dist, &c)| {
                let probs = (0..game.num_states())
                    .map(|t| {
                        if t == s {
                            dist.clone()
                        } else {
                            let mut d = vec![0.0; c];
                            d[0] = 1.0;
                            d
                        }
                    })
                    .collect();
                Policy::new(probs)
            })
            .collect::<Result<Vec<_>>>()?;
        let solution = solution_for_profile(
            game,
            PolicyProfile::new(policies),
            SolutionMethod::SingleState,
            tol,
        )?;
        if solution.max_regret() <= 10.0 * tol {
            out.push(solution);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::game::GameBuilder;

    const TOL: f64 = 1e-9;

    #[test]
    fn chain_value_iteration() {
        let (v, policy) = mdp_value_iteration(&catalog::chain_game(0.9), TOL).unwrap();
        assert!((v.get(0, 0) - 0.9).abs() < 1e-12);
        assert!((v.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(v.get(0, 2), 0.0);
        assert_eq!(policy.pure_action(0), Some(0));
    }

    #[test]
    fn dominant_action_is_greedy() {
        let mut b = GameBuilder::anonymous(2, &[2], 0.9);
        b.terminal(1).absorb_terminals();
        b.outcome(0, 0, 1, 1.0, &[1.0]);
        b.outcome(0, 1, 1, 1.0, &[0.0]);
        let (v, policy) = mdp_value_iteration(&b.build().unwrap(), TOL).unwrap();
        assert!((v.get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(policy.pure_action(0), Some(0));
    }

    #[test]
    fn self_loop_beats_exit() {
        // V = max(1 + 0.5 V, 0) has fixed point 1 / (1 - 0.5) = 2.
        let mut b = GameBuilder::anonymous(2, &[2], 0.5);
        b.terminal(1).absorb_terminals();
        b.outcome(0, 0, 0, 1.0, &[1.0]);
        b.outcome(0, 1, 1, 1.0, &[0.0]);
        let (v, policy) = mdp_value_iteration(&b.build().unwrap(), TOL).unwrap();
        assert!((v.get(0, 0) - 2.0).abs() < 1e-12);
        assert_eq!(policy.pure_action(0), Some(0));
    }

    #[test]
    fn q_from_v_examples() {
        let game = catalog::chain_game(0.9);
        let zero = ValueTable::zeros(1, 3);
        let q0 = q_from_v(&game, &zero);
        assert_eq!(q0.get(0, 0, 0), 0.0);
        assert_eq!(q0.get(0, 1, 0), 1.0);
        let v = ValueTable {
            values: vec![vec![0.9, 1.0, 0.0]],
        };
        let q = q_from_v(&game, &v);
        assert!((q.get(0, 0, 0) - 0.9).abs() < 1e-15);
        assert_eq!(q.get(0, 2, 0), 0.0);
    }

    #[test]
    fn shapley_matching_pennies() {
        let game = catalog::repeated(&catalog::matching_pennies(), 0.9);
        let sol = shapley_value_iteration(&game, 1e-10).unwrap();
        assert!(sol.values.get(0, 0).abs() < 1e-9);
        for i in 0..2 {
            assert!((sol.profile.policy(i).prob(0, 0) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn shapley_embedded_chain() {
        let game = catalog::chain_game_players(2, 0.9);
        let sol = shapley_value_iteration(&game, 1e-10).unwrap();
        assert!((sol.values.get(0, 0) - 0.9).abs() < 1e-12);
        assert!((sol.values.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((sol.values.get(1, 0) + 0.9).abs() < 1e-12);
    }

    #[test]
    fn shapley_rejects_general_sum() {
        let game = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        assert!(matches!(
            shapley_value_iteration(&game, TOL),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cooperation_is_not_nash() {
        let game = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        let cc = PolicyProfile::deterministic(&game, &[vec![0], vec![0]]);
        let report = verify_nash(&game, &cc, 1e-8).unwrap();
        assert!(!report.is_nash);
        for i in 0..2 {
            // 5 / (1 - 0.5) - 3 / (1 - 0.5)
            assert!((report.regrets[i][0] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_start_is_trivially_nash() {
        let mut b = GameBuilder::anonymous(1, &[2, 2], 0.9);
        b.terminal(0).absorb_terminals();
        let game = b.build().unwrap();
        let report = verify_nash(&game, &PolicyProfile::uniform(&game), 1e-8).unwrap();
        assert!(report.is_nash);
        assert_eq!(report.max_regret, 0.0);
    }

    #[test]
    fn pure_search_examples() {
        let pd = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        let eqs = pure_stationary_equilibria(&pd, 1e-8, None).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].policy(0).pure_action(0), Some(1));
        assert_eq!(eqs[0].policy(1).pure_action(0), Some(1));

        let mp = catalog::repeated(&catalog::matching_pennies(), 0.9);
        assert!(pure_stationary_equilibria(&mp, 1e-8, None).unwrap().is_empty());

        let chain = catalog::chain_game(0.9);
        assert_eq!(pure_stationary_equilibria(&chain, 1e-8, None).unwrap().len(), 1);
    }

    #[test]
    fn pure_search_honours_cancel() {
        let pd = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        let flag = AtomicBool::new(true);
        assert!(matches!(
            pure_stationary_equilibria(&pd, 1e-8, Some(&flag)),
            Err(Error::Cancelled)
        ));
    }

    #[test]
    fn pure_search_guard() {
        let game = GameBuilder::anonymous(25, &[2, 2], 0.9);
        let mut b = game;
        for s in 0..25 {
            for j in 0..4 {
                b.transition(s, j, s, 1.0);
            }
        }
        let game = b.build().unwrap();
        assert!(matches!(
            pure_stationary_equilibria(&game, 1e-8, None),
            Err(Error::SearchTooLarge { .. })
        ));
    }

    #[test]
    fn single_state_examples() {
        let pd = catalog::repeated(&catalog::prisoners_dilemma(), 0.5);
        let sols = solve_single_state(&pd, TOL).unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0].values.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((sols[0].values.get(1, 0) - 2.0).abs() < 1e-12);

        let mp = catalog::repeated(&catalog::matching_pennies(), 0.9);
        let sols = solve_single_state(&mp, TOL).unwrap();
        assert_eq!(sols.len(), 1);
        assert!(sols[0].values.get(0, 0).abs() < 1e-12);
        assert!((sols[0].profile.policy(1).prob(0, 0) - 0.5).abs() < 1e-12);

        let bos = catalog::repeated(&catalog::battle_of_the_sexes(), 0.5);
        let sols = solve_single_state(&bos, TOL).unwrap();
        let mut values: Vec<(f64, f64)> = sols
            .iter()
            .map(|s| (s.values.get(0, 0), s.values.get(1, 0)))
            .collect();
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        let expected = [(4.0 / 3.0, 4.0 / 3.0), (2.0, 4.0), (4.0, 2.0)];
        for (got, want) in values.iter().zip(&expected) {
            assert!((got.0 - want.0).abs() < 1e-9 && (got.1 - want.1).abs() < 1e-9);
        }
    }

    #[test]
    fn single_state_rejects_chains() {
        assert!(matches!(
            solve_single_state(&catalog::chain_game(0.9), TOL),
            Err(Error::Domain(_))
        ));
    }
}
