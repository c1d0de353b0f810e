//! Nash equilibria of matrix games.
//!
//! Zero-sum games are solved by linear programming, two-player general-sum
//! games by support enumeration, and any game can be searched for pure
//! equilibria. Every solver reports per-player best-response regret so its
//! output can be checked independently.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{check_distribution, MatrixGame};
use crate::lp::ZeroSumLp;

/// Two strategy profiles closer than this in sup-norm are the same equilibrium.
pub const DEDUP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEquilibrium {
    pub strategies: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub regrets: Vec<f64>,
}

impl MatrixEquilibrium {
    pub fn max_regret(&self) -> f64 {
        self.regrets.iter().copied().fold(0.0, f64::max)
    }

    fn from_strategies(game: &MatrixGame, strategies: Vec<Vec<f64>>) -> Self {
        let values = expected_payoffs(game, &strategies);
        let regrets = (0..game.num_players())
            .map(|i| regret_unchecked(game, &strategies, i))
            .collect();
        MatrixEquilibrium {
            strategies,
            values,
            regrets,
        }
    }
}

fn check_strategies(game: &MatrixGame, strategies: &[Vec<f64>]) -> Result<()> {
    if strategies.len() != game.num_players() {
        return Err(Error::dimension(format!(
            "{} strategies for a {}-player game",
            strategies.len(),
            game.num_players()
        )));
    }
    for (i, (s, &n)) in strategies.iter().zip(game.action_counts()).enumerate() {
        if s.len() != n {
            return Err(Error::dimension(format!(
                "strategy of player {i} has {} entries, expected {n}",
                s.len()
            )));
        }
        check_distribution(s)
            .map_err(|m| Error::InvalidDistribution(format!("player {i}: {m}")))?;
    }
    Ok(())
}

/// Probability of every joint action under independent mixing, skipping
/// player `fixed` when given.
fn joint_probabilities(game: &MatrixGame, strategies: &[Vec<f64>], fixed: Option<usize>) -> Vec<f64> {
    let joint = game.joint();
    let mut actions = vec![0; game.num_players()];
    (0..joint.len())
        .map(|j| {
            joint.decode_into(j, &mut actions);
            actions
                .iter()
                .enumerate()
                .filter(|&(i, _)| Some(i) != fixed)
                .map(|(i, &a)| strategies[i][a])
                .product()
        })
        .collect()
}

/// Expected payoff of every player under a mixed profile.
pub fn expected_payoffs(game: &MatrixGame, strategies: &[Vec<f64>]) -> Vec<f64> {
    let probs = joint_probabilities(game, strategies, None);
    (0..game.num_players())
        .map(|i| {
            probs
                .iter()
                .enumerate()
                .map(|(j, p)| p * game.payoff(j, i))
                .sum()
        })
        .collect()
}

/// Payoff of each pure action of `player` against the others' mixing.
pub fn action_payoffs(game: &MatrixGame, strategies: &[Vec<f64>], player: usize) -> Vec<f64> {
    let probs = joint_probabilities(game, strategies, Some(player));
    let mut out = vec![0.0; game.action_counts()[player]];
    for (j, p) in probs.iter().enumerate() {
        out[game.joint().action_of(j, player)] += p * game.payoff(j, player);
    }
    out
}

fn regret_unchecked(game: &MatrixGame, strategies: &[Vec<f64>], player: usize) -> f64 {
    let payoffs = action_payoffs(game, strategies, player);
    let current: f64 = payoffs
        .iter()
        .zip(&strategies[player])
        .map(|(v, p)| v * p)
        .sum();
    let best = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (best - current).max(0.0)
}

/// Gain available to `player` from its best pure deviation; zero when the
/// player is already best-responding.
pub fn best_response_regret(game: &MatrixGame, strategies: &[Vec<f64>], player: usize) -> Result<f64> {
    if player >= game.num_players() {
        return Err(Error::PlayerOutOfRange {
            player,
            players: game.num_players(),
        });
    }
    check_strategies(game, strategies)?;
    Ok(regret_unchecked(game, strategies, player))
}

/// Maximin/minimax solution of a two-player zero-sum game.
pub fn solve_zero_sum(game: &MatrixGame, tol: f64) -> Result<MatrixEquilibrium> {
    if game.num_players() != 2 {
        return Err(Error::domain("zero-sum solver needs exactly two players"));
    }
    if !(game.is_zero_sum() || game.is_pointwise_zero_sum()) {
        return Err(Error::domain("game is not zero-sum"));
    }
    let (m, n) = (game.action_counts()[0], game.action_counts()[1]);
    let flat: Vec<f64> = (0..m * n).map(|j| game.payoff(j, 0)).collect();
    let mut x = vec![0.0; m];
    let mut y = vec![0.0; n];
    let value = ZeroSumLp::new().solve(m, n, &flat, &mut x, &mut y);
    let mut eq = MatrixEquilibrium::from_strategies(game, vec![x, y]);
    // The LP value is exact up to rounding; report it rather than x'Ay.
    eq.values = vec![value, -value];
    debug_assert!(eq.max_regret() <= tol.max(1e-9), "LP regret {}", eq.max_regret());
    Ok(eq)
}

/// The payoff each player can guarantee with its own strategy in a
/// zero-sum solution: `(min_j (xᵀA)_j, max_i (Ay)_i)`.
pub fn zero_sum_guarantees(game: &MatrixGame, eq: &MatrixEquilibrium) -> (f64, f64) {
    let lower = action_payoffs(game, &eq.strategies, 1)
        .iter()
        .map(|v| -v)
        .fold(f64::INFINITY, f64::min);
    let upper = action_payoffs(game, &eq.strategies, 0)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (lower, upper)
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1 << n)).map(move |mask| (0..n).filter(|&k| mask & (1 << k) != 0).collect())
}

/// Mixed strategy over `support` making the opponent indifferent across
/// `tight` actions. `payoff(own, opp)` is the opponent's payoff. Returns
/// `None` unless the indifference system has a unique consistent solution.
fn indifference_strategy(
    support: &[usize],
    tight: &[usize],
    own_actions: usize,
    payoff: impl Fn(usize, usize) -> f64,
) -> Option<Vec<f64>> {
    let k = support.len();
    let rows = tight.len() + 1;
    let cols = k + 1;
    if rows < cols {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, &t) in tight.iter().enumerate() {
        for (c, &s) in support.iter().enumerate() {
            a[(r, c)] = payoff(s, t);
        }
        a[(r, k)] = -1.0;
    }
    for c in 0..k {
        a[(tight.len(), c)] = 1.0;
    }
    b[tight.len()] = 1.0;

    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let largest = sv.max();
    if sv.min() <= 1e-10 * largest.max(1.0) {
        return None;
    }
    let x = svd.solve(&b, 0.0).ok()?;
    if (&a * &x - &b).amax() > 1e-9 {
        return None;
    }
    let mut strategy = vec![0.0; own_actions];
    for (c, &s) in support.iter().enumerate() {
        strategy[s] = x[c];
    }
    Some(strategy)
}

fn clean_distribution(v: &mut [f64], tol: f64) -> bool {
    if v.iter().any(|&p| p < -tol) {
        return false;
    }
    for p in v.iter_mut() {
        *p = p.max(0.0);
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return false;
    }
    for p in v.iter_mut() {
        *p /= total;
    }
    true
}

fn sup_distance(a: &MatrixEquilibrium, b: &MatrixEquilibrium) -> f64 {
    a.strategies
        .iter()
        .flatten()
        .zip(b.strategies.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// All vertex equilibria of a two-player game found by support enumeration.
///
/// Every pair of supports is tried; a pair contributes only when both
/// indifference systems have unique solutions, so degenerate games may have
/// equilibrium components of which only the vertices are reported.
pub fn support_enumeration(game: &MatrixGame, tol: f64) -> Result<Vec<MatrixEquilibrium>> {
    if game.num_players() != 2 {
        return Err(Error::domain("support enumeration needs exactly two players"));
    }
    let (m, n) = (game.action_counts()[0], game.action_counts()[1]);
    let mut found: Vec<MatrixEquilibrium> = Vec::new();
    for rows in subsets(m) {
        for cols in subsets(n) {
            // Column strategy keeps the row player indifferent on `rows`.
            let Some(mut y) = indifference_strategy(&cols, &rows, n, |c, r| {
                game.payoff_of(&[r, c], 0)
            }) else {
                continue;
            };
            let Some(mut x) = indifference_strategy(&rows, &cols, m, |r, c| {
                game.payoff_of(&[r, c], 1)
            }) else {
                continue;
            };
            if !clean_distribution(&mut x, tol) || !clean_distribution(&mut y, tol) {
                continue;
            }
            let eq = MatrixEquilibrium::from_strategies(game, vec![x, y]);
            if eq.max_regret() > tol {
                continue;
            }
            if found.iter().all(|f| sup_distance(f, &eq) > DEDUP_TOL) {
                found.push(eq);
            }
        }
    }
    found.sort_by(|a, b| {
        a.strategies
            .iter()
            .flatten()
            .zip(b.strategies.iter().flatten())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

/// Every pure joint action from which no player gains by deviating alone.
pub fn pure_equilibria(game: &MatrixGame) -> Vec<Vec<usize>> {
    let joint = game.joint();
    let mut out = Vec::new();
    let mut actions = vec![0; game.num_players()];
    'outer: for j in 0..joint.len() {
        joint.decode_into(j, &mut actions);
        for i in 0..game.num_players() {
            let current = game.payoff(j, i);
            let own = actions[i];
            for alt in 0..game.action_counts()[i] {
                actions[i] = alt;
                let deviation = game.payoff_of(&actions, i);
                actions[i] = own;
                if deviation > current {
                    continue 'outer;
                }
            }
        }
        out.push(actions.clone());
    }
    out
}

/// Mixed-strategy form of a pure joint action.
pub fn pure_strategies(game: &MatrixGame, actions: &[usize]) -> Vec<Vec<f64>> {
    actions
        .iter()
        .zip(game.action_counts())
        .map(|(&a, &n)| {
            let mut v = vec![0.0; n];
            v[a] = 1.0;
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    const TOL: f64 = 1e-9;

    #[test]
    fn matching_pennies_is_uniform() {
        let eq = solve_zero_sum(&catalog::matching_pennies(), TOL).unwrap();
        assert!(eq.values[0].abs() < 1e-12);
        for s in &eq.strategies {
            assert!((s[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_game_breaks_ties_low() {
        let game = MatrixGame::zero_sum(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        let eq = solve_zero_sum(&game, TOL).unwrap();
        assert_eq!(eq.values[0], 2.0);
        assert_eq!(eq.strategies, vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn saddle_is_found() {
        let game = MatrixGame::zero_sum(&[vec![3.0, 1.0], vec![4.0, 2.0]]).unwrap();
        let eq = solve_zero_sum(&game, TOL).unwrap();
        assert!((eq.values[0] - 2.0).abs() < 1e-12);
        assert_eq!(eq.strategies, vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        // Exhaustive saddle check: (1, 1) is the min of its row and max of its column.
        let m = game.player_matrix(0);
        assert!(m[1][1] <= m[1][0] && m[1][1] >= m[0][1]);
    }

    #[test]
    fn zero_sum_rejects_general_sum() {
        assert!(matches!(
            solve_zero_sum(&catalog::prisoners_dilemma(), TOL),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn prisoners_dilemma_has_one_equilibrium() {
        let game = catalog::prisoners_dilemma();
        let eqs = support_enumeration(&game, TOL).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].strategies, vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(eqs[0].values, vec![1.0, 1.0]);
        assert_eq!(pure_equilibria(&game), vec![vec![1, 1]]);
    }

    #[test]
    fn battle_of_the_sexes_has_three() {
        let eqs = support_enumeration(&catalog::battle_of_the_sexes(), TOL).unwrap();
        assert_eq!(eqs.len(), 3);
        let mixed = &eqs[1];
        assert!((mixed.strategies[0][0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((mixed.strategies[1][0] - 1.0 / 3.0).abs() < 1e-9);
        assert!((mixed.values[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((mixed.values[1] - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(eqs[0].strategies[0], vec![0.0, 1.0]);
        assert_eq!(eqs[2].strategies[0], vec![1.0, 0.0]);
    }

    #[test]
    fn matching_pennies_bimatrix_agrees_with_lp() {
        let game = catalog::matching_pennies();
        let eqs = support_enumeration(&game, TOL).unwrap();
        let lp = solve_zero_sum(&game, TOL).unwrap();
        assert_eq!(eqs.len(), 1);
        assert!(sup_distance(&eqs[0], &lp) < 1e-12);
        assert!((eqs[0].values[0] - lp.values[0]).abs() < 1e-12);
    }

    #[test]
    fn pure_search_edge_cases() {
        assert!(pure_equilibria(&catalog::matching_pennies()).is_empty());
        let constant = MatrixGame::new(&[2, 2, 2], vec![vec![0.0; 3]; 8]).unwrap();
        assert_eq!(pure_equilibria(&constant).len(), 8);
    }

    #[test]
    fn regret_examples() {
        let game = catalog::prisoners_dilemma();
        let dd = pure_strategies(&game, &[1, 1]);
        let cc = pure_strategies(&game, &[0, 0]);
        for i in 0..2 {
            assert_eq!(best_response_regret(&game, &dd, i).unwrap(), 0.0);
            assert_eq!(best_response_regret(&game, &cc, i).unwrap(), 2.0);
        }
        let constant = MatrixGame::new(&[2, 3], vec![vec![4.0, 4.0]; 6]).unwrap();
        let mixed = vec![vec![0.3, 0.7], vec![0.2, 0.5, 0.3]];
        assert_eq!(best_response_regret(&constant, &mixed, 1).unwrap(), 0.0);
    }

    #[test]
    fn regret_rejects_bad_distribution() {
        let game = catalog::prisoners_dilemma();
        let bad = vec![vec![0.5, 0.6], vec![1.0, 0.0]];
        assert!(matches!(
            best_response_regret(&game, &bad, 0),
            Err(Error::InvalidDistribution(_))
        ));
    }
}
