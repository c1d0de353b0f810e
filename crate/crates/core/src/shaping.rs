//! Potential-based reward shaping and the policy-invariance checks.
//!
//! A shaping function `F_i(s, s')` is added to player `i`'s reward on every
//! transition. When `F_i(s, s') = γΦ_i(s') − Φ_i(s)` with `Φ_i(s_T) = 0`, the
//! shaped game has the same Nash equilibria as the original, and every value
//! shifts by exactly `−Φ_i(s)`. The checks in this module measure those
//! identities on concrete games, and [`build_necessity_counterexample`]
//! constructs a game where a non-potential `F` changes the equilibrium.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{evaluate_profile, GameBuilder, PotentialSet, StochasticGame, VALUE_TOL};
use crate::solver::{pure_stationary_equilibria, q_from_v, solution_for_profile, verify_nash, EquilibriumSolution};

/// Dense per-player table of `F_i(s, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingFunction {
    num_states: usize,
    // values[i][s * num_states + s']
    values: Vec<Vec<f64>>,
}

impl ShapingFunction {
    pub fn zero(num_players: usize, num_states: usize) -> Self {
        ShapingFunction {
            num_states,
            values: vec![vec![0.0; num_states * num_states]; num_players],
        }
    }

    /// `tables[i][s][s']`.
    pub fn from_tables(tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let num_states = tables.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(tables.len());
        for (i, t) in tables.into_iter().enumerate() {
            if t.len() != num_states || t.iter().any(|r| r.len() != num_states) {
                return Err(Error::dimension(format!(
                    "shaping table of player {i} is not {num_states}x{num_states}"
                )));
            }
            values.push(t.into_iter().flatten().collect());
        }
        Ok(ShapingFunction { num_states, values })
    }

    pub fn num_players(&self) -> usize {
        self.values.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn get(&self, player: usize, s: usize, next: usize) -> f64 {
        self.values[player][s * self.num_states + next]
    }

    pub fn set(&mut self, player: usize, s: usize, next: usize, value: f64) {
        self.values[player][s * self.num_states + next] = value;
    }

    pub fn negated(&self) -> ShapingFunction {
        self.map(|x| -x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ShapingFunction {
        ShapingFunction {
            num_states: self.num_states,
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|&x| f(x)).collect())
                .collect(),
        }
    }

    pub(crate) fn check(&self, game: &StochasticGame) -> Result<()> {
        if self.num_players() != game.num_players() || self.num_states != game.num_states() {
            return Err(Error::dimension(format!(
                "shaping function is {} players x {} states, game is {} x {}",
                self.num_players(),
                self.num_states,
                game.num_players(),
                game.num_states()
            )));
        }
        Ok(())
    }
}

/// `F_i(s, s') = γΦ_i(s') − Φ_i(s)` for every ordered state pair.
pub fn potential_to_shaping(
    phi: &PotentialSet,
    gamma: f64,
    terminals: &[bool],
) -> Result<ShapingFunction> {
    phi.check(phi.num_players(), terminals)?;
    let n = terminals.len();
    let values = phi
        .values()
        .iter()
        .map(|p| {
            (0..n * n)
                .map(|k| gamma * p[k % n] - p[k / n])
                .collect()
        })
        .collect();
    Ok(ShapingFunction {
        num_states: n,
        values,
    })
}

/// The shaped game `M′` with `R′_i = R_i + F_i`.
#[derive(Debug, Clone)]
pub struct ShapedGame {
    pub game: StochasticGame,
    /// Terminal self-loops where a nonzero `F` was dropped to keep `V(s_T) = 0`.
    pub warnings: Vec<String>,
}

/// Adds `F_i(s, s')` to every reward of the game. Transitions, discount and
/// terminals are unchanged; terminal self-loops keep reward zero.
pub fn apply_shaping(game: &StochasticGame, shaping: &ShapingFunction) -> Result<ShapedGame> {
    shaping.check(game)?;
    let mut warnings = Vec::new();
    for i in 0..game.num_players() {
        for s in 0..game.num_states() {
            let f = shaping.get(i, s, s);
            if game.is_terminal(s) && f != 0.0 {
                warnings.push(format!(
                    "player {i}: F({name}, {name}) = {f} on terminal self-loop ignored",
                    name = game.state_name(s)
                ));
            }
        }
    }
    let shaped = game.map_rewards(|i, s, _, next, r| {
        if game.is_terminal(s) {
            r
        } else {
            r + shaping.get(i, s, next)
        }
    });
    Ok(ShapedGame {
        game: shaped,
        warnings,
    })
}

/// Largest reward difference between two games with the same states and
/// actions, over every `(s, a, s')` with positive probability in either.
pub fn max_reward_difference(a: &StochasticGame, b: &StochasticGame) -> Result<f64> {
    if a.num_players() != b.num_players()
        || a.num_states() != b.num_states()
        || a.num_joint() != b.num_joint()
    {
        return Err(Error::dimension("games have different shapes"));
    }
    let mut worst: f64 = 0.0;
    for s in 0..a.num_states() {
        for j in 0..a.num_joint() {
            for (x, y) in [(a, b), (b, a)] {
                for (next, p, r) in x.row(s, j).iter() {
                    if p == 0.0 && y.transition_prob(s, j, next) == 0.0 {
                        continue;
                    }
                    for (i, &ri) in r.iter().enumerate() {
                        worst = worst.max((ri - y.reward(i, s, j, next)).abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn max_transition_difference(a: &StochasticGame, b: &StochasticGame) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..a.num_states() {
        for j in 0..a.num_joint() {
            for (next, _, _) in a.row(s, j).iter().chain(b.row(s, j).iter()) {
                worst = worst.max(
                    (a.transition_prob(s, j, next) - b.transition_prob(s, j, next)).abs(),
                );
            }
        }
    }
    worst
}

/// Result of [`check_offset_identities`].
#[derive(Debug, Clone)]
pub struct OffsetReport {
    /// `max |V′ − (V − Φ)|`.
    pub value_offset_error: f64,
    /// `max |Q′ − (Q − Φ)|`.
    pub q_offset_error: f64,
    pub original_regret: f64,
    pub shaped_regret: f64,
    pub shaped_is_nash: bool,
    /// `max |R(apply_shaping(M′, −F)) − R(M)|`.
    pub unshaping_error: f64,
    pub unshaped_is_nash: bool,
    pub violations: Vec<String>,
    pub passed: bool,
}

/// Checks `V′ = V − Φ`, `Q′ = Q − Φ` and equilibrium preservation in both
/// directions for a solution of the unshaped game.
pub fn check_offset_identities(
    m: &StochasticGame,
    m_prime: &StochasticGame,
    phi: &PotentialSet,
    solution_m: &EquilibriumSolution,
    tol: f64,
) -> Result<OffsetReport> {
    let mut violations = Vec::new();
    phi.check(m.num_players(), m.terminals())?;
    let shaping = potential_to_shaping(phi, m.gamma(), m.terminals())?;

    let expected = apply_shaping(m, &shaping)?.game;
    let reward_gap = max_reward_difference(&expected, m_prime)?;
    if reward_gap > tol
        || max_transition_difference(m, m_prime) > 0.0
        || m.gamma() != m_prime.gamma()
        || m.terminals() != m_prime.terminals()
    {
        violations.push(format!(
            "shaped game is not the potential-based transform of the original (reward gap {reward_gap:e})"
        ));
    }
    let verify_eps = 10.0 * tol;
    let original = verify_nash(m, &solution_m.profile, verify_eps)?;
    if !original.is_nash {
        violations.push(format!(
            "solution is not an equilibrium of the original game (regret {:e})",
            original.max_regret
        ));
    }

    let eval_tol = (tol * 0.01).clamp(1e-13, VALUE_TOL);
    let shaped_values = evaluate_profile(m_prime, &solution_m.profile, eval_tol)?;
    let shaped_q = q_from_v(m_prime, &shaped_values);
    let mut value_offset_error: f64 = 0.0;
    let mut q_offset_error: f64 = 0.0;
    for i in 0..m.num_players() {
        for s in 0..m.num_states() {
            let p = phi.get(i, s);
            value_offset_error = value_offset_error
                .max((shaped_values.get(i, s) - (solution_m.values.get(i, s) - p)).abs());
            if m.is_terminal(s) {
                continue;
            }
            for j in 0..m.num_joint() {
                q_offset_error = q_offset_error
                    .max((shaped_q.get(i, s, j) - (solution_m.q.get(i, s, j) - p)).abs());
            }
        }
    }
    let shaped = verify_nash(m_prime, &solution_m.profile, verify_eps)?;

    let unshaped = apply_shaping(m_prime, &shaping.negated())?.game;
    let unshaping_error = max_reward_difference(&unshaped, m)?;
    let back = verify_nash(&unshaped, &solution_m.profile, verify_eps)?;

    let passed = violations.is_empty()
        && value_offset_error <= tol
        && q_offset_error <= tol
        && shaped.is_nash
        && unshaping_error <= tol
        && back.is_nash;
    Ok(OffsetReport {
        value_offset_error,
        q_offset_error,
        original_regret: original.max_regret,
        shaped_regret: shaped.max_regret,
        shaped_is_nash: shaped.is_nash,
        unshaping_error,
        unshaped_is_nash: back.is_nash,
        violations,
        passed,
    })
}

/// Result of [`check_one_step_identity`].
#[derive(Debug, Clone)]
pub struct OneStepReport {
    /// `max |(Q − Φ) − Σ T (R + F)|` with `Φ = V`.
    pub max_residual: f64,
    /// Same residual using `Q′` re-evaluated on the shaped game.
    pub max_residual_shaped: f64,
    pub passed: bool,
}

/// With `Φ_i := V_i`, the shaped action values reduce to the expected one-step
/// shaped reward. Measures how closely that holds for `solution_m`.
pub fn check_one_step_identity(m: &StochasticGame, solution_m: &EquilibriumSolution, tol: f64) -> Result<OneStepReport> {
    let mut phi_values = solution_m.values.values.clone();
    for v in &mut phi_values {
        for (s, x) in v.iter_mut().enumerate() {
            if m.is_terminal(s) {
                *x = 0.0;
            }
        }
    }
    let phi = PotentialSet::new(phi_values);
    let shaping = potential_to_shaping(&phi, m.gamma(), m.terminals())?;
    let m_prime = apply_shaping(m, &shaping)?.game;
    let eval_tol = (tol * 0.01).clamp(1e-13, VALUE_TOL);
    let shaped_values = evaluate_profile(&m_prime, &solution_m.profile, eval_tol)?;
    let shaped_q = q_from_v(&m_prime, &shaped_values);

    let mut max_residual: f64 = 0.0;
    let mut max_residual_shaped: f64 = 0.0;
    for i in 0..m.num_players() {
        for s in m.non_terminal_states() {
            for j in 0..m.num_joint() {
                let one_step = m_prime.expected_reward(i, s, j);
                let offset = solution_m.q.get(i, s, j) - phi.get(i, s);
                max_residual = max_residual.max((offset - one_step).abs());
                max_residual_shaped = max_residual_shaped.max((shaped_q.get(i, s, j) - one_step).abs());
            }
        }
    }
    Ok(OneStepReport {
        max_residual,
        max_residual_shaped,
        passed: max_residual <= tol && max_residual_shaped <= tol,
    })
}

/// Verdict of [`classify_shaping`].
#[derive(Debug, Clone)]
pub struct Classification {
    pub is_potential: bool,
    pub phi: Option<PotentialSet>,
    pub max_residual: f64,
}

/// Decides whether `f` is potential-based by least-squares reconstruction of
/// `Φ` (pinned to zero at terminals) from `F(s,s') = γΦ(s') − Φ(s)`.
pub fn classify_shaping(f: &ShapingFunction, gamma: f64, terminals: &[bool], tol: f64) -> Classification {
    let n = terminals.len();
    if f.num_states() != n {
        return Classification {
            is_potential: false,
            phi: None,
            max_residual: f64::INFINITY,
        };
    }
    let live: Vec<usize> = (0..n).filter(|&s| !terminals[s]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &s) in live.iter().enumerate() {
        pos[s] = k;
    }
    let m = live.len();

    // Sparse design row of the pair (s, s'): −1 at s, +γ at s'.
    let design_row = |s: usize, t: usize| -> [(usize, f64); 2] {
        [(pos[s], -1.0), (pos[t], gamma)]
    };

    let mut normal = DMatrix::<f64>::zeros(m, m);
    for s in 0..n {
        for t in 0..n {
            for (a, x) in design_row(s, t) {
                for (b, y) in design_row(s, t) {
                    if a != usize::MAX && b != usize::MAX {
                        normal[(a, b)] += x * y;
                    }
                }
            }
        }
    }
    let svd = normal.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max().max(1.0);

    let mut potentials = Vec::with_capacity(f.num_players());
    let mut max_residual: f64 = 0.0;
    for i in 0..f.num_players() {
        let mut phi = vec![0.0; n];
        let residuals = |phi: &[f64]| -> Vec<f64> {
            (0..n * n)
                .map(|k| {
                    let (s, t) = (k / n, k % n);
                    f.get(i, s, t) - (gamma * phi[t] - phi[s])
                })
                .collect()
        };
        // Solve, then one round of iterative refinement on the residual.
        for _ in 0..2 {
            let r = residuals(&phi);
            let mut rhs = DVector::<f64>::zeros(m);
            for s in 0..n {
                for t in 0..n {
                    for (a, x) in design_row(s, t) {
                        if a != usize::MAX {
                            rhs[a] += x * r[s * n + t];
                        }
                    }
                }
            }
            if m == 0 {
                break;
            }
            let Ok(delta) = svd.solve(&rhs, cutoff) else {
                break;
            };
            for (k, &s) in live.iter().enumerate() {
                phi[s] += delta[k];
            }
        }
        let worst = residuals(&phi).iter().map(|x| x.abs()).fold(0.0, f64::max);
        max_residual = max_residual.max(worst);
        potentials.push(phi);
    }
    let is_potential = max_residual <= tol;
    Classification {
        is_potential,
        phi: is_potential.then(|| PotentialSet::new(potentials)),
        max_residual,
    }
}

/// Index of the two-action decision state and its successors in the
/// necessity construction.
pub const NECESSITY_DECISION: usize = 0;
pub const NECESSITY_DETOUR: usize = 1;
pub const NECESSITY_TERMINAL: usize = 2;

/// A three-state game where a non-potential shaping function flips player
/// 1's equilibrium action at the decision state.
#[derive(Debug, Clone)]
pub struct NecessityInstance {
    pub delta: f64,
    pub gamma: f64,
    pub game_m: StochasticGame,
    pub game_m_prime: StochasticGame,
    pub shaping: ShapingFunction,
    /// Player 1's predicted equilibrium action at the decision state: 0 is
    /// the direct move to the terminal, 1 the detour.
    pub expected_action_m: usize,
    pub expected_action_m_prime: usize,
    pub warnings: Vec<String>,
}

/// Builds the counterexample game for a shaping function that deviates from
/// potential form by `delta`.
///
/// Player 1 chooses at `s1` between moving straight to the terminal `s3`
/// (reward `Δ/2`) or detouring through `s2` (reward 0). Without `f1`, the
/// shaping function is `F_1(s1, s3) = −Δ` and zero elsewhere. A supplied `f1`
/// (`f1[s][s']`) must deviate from potential form by exactly `delta` along the
/// detour, measured with `Φ_1(s) = −F_1(s, s3)`. Other players have a single
/// action and no reward.
pub fn build_necessity_counterexample(
    delta: f64,
    gamma: f64,
    f1: Option<[[f64; 3]; 3]>,
    num_players: usize,
) -> Result<NecessityInstance> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::domain(
            "delta = 0: F is potential-based on this structure; no counterexample exists",
        ));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma {gamma} outside (0, 1]")));
    }
    if num_players == 0 {
        return Err(Error::domain("need at least one player"));
    }
    let (s1, s2, s3) = (NECESSITY_DECISION, NECESSITY_DETOUR, NECESSITY_TERMINAL);
    let mut actions = vec![vec!["direct".to_string(), "detour".to_string()]];
    actions.extend((1..num_players).map(|_| vec!["wait".to_string()]));
    let mut b = GameBuilder::new(["s1", "s2", "s3"], actions, gamma);
    b.terminal(s3).absorb_terminals();
    let mut r = vec![0.0; num_players];
    r[0] = delta / 2.0;
    b.outcome(s1, 0, s3, 1.0, &r);
    r[0] = 0.0;
    b.outcome(s1, 1, s2, 1.0, &r);
    b.outcome(s2, 0, s3, 1.0, &r);
    b.outcome(s2, 1, s3, 1.0, &r);
    let game_m = b.build()?;

    let table = f1.unwrap_or_else(|| {
        let mut t = [[0.0; 3]; 3];
        t[s1][s3] = -delta;
        t
    });
    let realized = table[s1][s2] + gamma * table[s2][s3] - table[s1][s3];
    if (realized - delta).abs() > 1e-12 * (1.0 + delta.abs()) {
        return Err(Error::domain(format!(
            "supplied F_1 deviates from potential form by {realized}, not {delta}"
        )));
    }
    let mut shaping = ShapingFunction::zero(num_players, 3);
    for (s, row) in table.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            shaping.set(0, s, t, v);
        }
    }
    let ShapedGame {
        game: game_m_prime,
        warnings,
    } = apply_shaping(&game_m, &shaping)?;
    let (expected_action_m, expected_action_m_prime) = if delta > 0.0 { (0, 1) } else { (1, 0) };
    Ok(NecessityInstance {
        delta,
        gamma,
        game_m,
        game_m_prime,
        shaping,
        expected_action_m,
        expected_action_m_prime,
        warnings,
    })
}

/// Solver confirmation of a [`NecessityInstance`].
#[derive(Debug, Clone)]
pub struct NecessityCheck {
    /// Player 1's action at `s1` in every pure equilibrium of `M` and `M′`.
    pub actions_m: Vec<usize>,
    pub actions_m_prime: Vec<usize>,
    /// Player 1's action values at `s1` for (direct, detour).
    pub q_m: [f64; 2],
    pub q_m_prime: [f64; 2],
    /// The same `M′` values from the closed-form expression
    /// `F(s1,s2) + γF(s2,s3) − Δ/2` and `F(s1,s2) + γF(s2,s3)`.
    pub q_m_prime_closed_form: [f64; 2],
    pub closed_form_discrepancy: f64,
    pub confirmed: bool,
}

/// Runs the exhaustive pure-equilibrium search on both games and compares
/// player 1's choice at `s1` with the prediction.
pub fn confirm_necessity(instance: &NecessityInstance, eps: f64) -> Result<NecessityCheck> {
    let s1 = NECESSITY_DECISION;
    let eq_m = pure_stationary_equilibria(&instance.game_m, eps, None)?;
    let eq_mp = pure_stationary_equilibria(&instance.game_m_prime, eps, None)?;
    let action_at = |p: &crate::game::PolicyProfile| p.policy(0).pure_action(s1).unwrap_or(usize::MAX);
    let actions_m: Vec<usize> = eq_m.iter().map(action_at).collect();
    let actions_m_prime: Vec<usize> = eq_mp.iter().map(action_at).collect();

    let q_at = |game: &StochasticGame, profiles: &[crate::game::PolicyProfile]| -> Result<[f64; 2]> {
        let Some(p) = profiles.first() else {
            return Ok([f64::NAN; 2]);
        };
        let sol = solution_for_profile(game, p.clone(), crate::solver::SolutionMethod::PureSearch, eps)?;
        Ok([sol.q.get(0, s1, 0), sol.q.get(0, s1, 1)])
    };
    let q_m = q_at(&instance.game_m, &eq_m)?;
    let q_m_prime = q_at(&instance.game_m_prime, &eq_mp)?;
    let f = &instance.shaping;
    let detour = f.get(0, s1, NECESSITY_DETOUR) + instance.gamma * f.get(0, NECESSITY_DETOUR, NECESSITY_TERMINAL);
    let q_m_prime_closed_form = [detour - instance.delta / 2.0, detour];
    let closed_form_discrepancy = q_m_prime
        .iter()
        .zip(&q_m_prime_closed_form)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let confirmed = !actions_m.is_empty()
        && !actions_m_prime.is_empty()
        && actions_m.iter().all(|&a| a == instance.expected_action_m)
        && actions_m_prime.iter().all(|&a| a == instance.expected_action_m_prime);
    Ok(NecessityCheck {
        actions_m,
        actions_m_prime,
        q_m,
        q_m_prime,
        q_m_prime_closed_form,
        closed_form_discrepancy,
        confirmed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::solver::mdp_value_iteration;

    #[test]
    fn zero_potential_gives_zero_shaping() {
        let phi = PotentialSet::zero(2, 3);
        let f = potential_to_shaping(&phi, 0.9, &[false, false, true]).unwrap();
        assert_eq!(f, ShapingFunction::zero(2, 3));
    }

    #[test]
    fn shaping_formula() {
        let phi = PotentialSet::new(vec![vec![0.5, 0.0]]);
        let f = potential_to_shaping(&phi, 0.9, &[false, true]).unwrap();
        assert_eq!(f.get(0, 0, 1), -0.5);
        assert!((f.get(0, 1, 0) - 0.45).abs() < 1e-15);
        assert!((f.get(0, 0, 0) + 0.05).abs() < 1e-15);
    }

    #[test]
    fn undiscounted_shaping_telescopes() {
        let phi = PotentialSet::new(vec![vec![1.0, 2.0, 0.0]]);
        let f = potential_to_shaping(&phi, 1.0, &[false, false, true]).unwrap();
        for s in 0..3 {
            for t in 0..3 {
                assert_eq!(f.get(0, s, t), phi.get(0, t) - phi.get(0, s));
                for u in 0..3 {
                    assert_eq!(f.get(0, s, t) + f.get(0, t, u) + f.get(0, u, s), 0.0);
                }
            }
        }
    }

    #[test]
    fn shaping_rejects_terminal_potential() {
        let phi = PotentialSet::new(vec![vec![0.5, 0.1]]);
        assert!(matches!(
            potential_to_shaping(&phi, 0.9, &[false, true]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn identity_shaping() {
        let game = catalog::chain_game(0.9);
        let shaped = apply_shaping(&game, &ShapingFunction::zero(1, 3)).unwrap();
        assert_eq!(shaped.game, game);
        assert!(shaped.warnings.is_empty());
    }

    #[test]
    fn chain_shaping_reward() {
        // Direct exit chain: s0 -(1)-> sT.
        let mut b = GameBuilder::anonymous(2, &[1], 0.9);
        b.terminal(1).absorb_terminals();
        b.outcome(0, 0, 1, 1.0, &[1.0]);
        let game = b.build().unwrap();
        let phi = PotentialSet::new(vec![vec![0.5, 0.0]]);
        let f = potential_to_shaping(&phi, 0.9, game.terminals()).unwrap();
        let shaped = apply_shaping(&game, &f).unwrap().game;
        assert_eq!(shaped.reward(0, 0, 0, 1), 0.5);
        assert_eq!(shaped.reward(0, 1, 0, 1), 0.0);
    }

    #[test]
    fn terminal_self_loop_is_kept_at_zero() {
        let game = catalog::chain_game(0.9);
        let mut f = ShapingFunction::zero(1, 3);
        f.set(0, 2, 2, 1.0);
        let shaped = apply_shaping(&game, &f).unwrap();
        assert_eq!(shaped.game.reward(0, 2, 0, 2), 0.0);
        assert_eq!(shaped.warnings.len(), 1);
    }

    #[test]
    fn chain_offsets() {
        let game = catalog::chain_game(0.9);
        let phi = PotentialSet::new(vec![vec![0.5, 0.0, 0.0]]);
        let f = potential_to_shaping(&phi, 0.9, game.terminals()).unwrap();
        let m_prime = apply_shaping(&game, &f).unwrap().game;
        let sol = solution_for_profile(
            &game,
            crate::game::PolicyProfile::uniform(&game),
            crate::solver::SolutionMethod::ExternalCandidate,
            1e-9,
        )
        .unwrap();
        let report = check_offset_identities(&game, &m_prime, &phi, &sol, 1e-9).unwrap();
        assert!(report.passed, "{report:?}");
        // Hand evaluation of M': 0 + (−0.5) + 0.9·(1 + 0) = 0.4 = 0.9 − 0.5.
        let (v, _) = mdp_value_iteration(&m_prime, 1e-12).unwrap();
        assert!((v.get(0, 0) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn potential_equal_to_values_zeroes_shaped_values() {
        let game = catalog::chain_game(0.9);
        let sol = solution_for_profile(
            &game,
            crate::game::PolicyProfile::uniform(&game),
            crate::solver::SolutionMethod::ExternalCandidate,
            1e-9,
        )
        .unwrap();
        let phi = PotentialSet::new(sol.values.values.clone());
        let f = potential_to_shaping(&phi, 0.9, game.terminals()).unwrap();
        let m_prime = apply_shaping(&game, &f).unwrap().game;
        let v = evaluate_profile(&m_prime, &sol.profile, 1e-12).unwrap();
        assert!(v.values[0].iter().all(|x| x.abs() < 1e-12));
        let report = check_one_step_identity(&game, &sol, 1e-12).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn classify_round_trip() {
        let phi = PotentialSet::new(vec![vec![1.0, 0.5, 0.0]]);
        let terminals = [false, false, true];
        let f = potential_to_shaping(&phi, 0.9, &terminals).unwrap();
        let c = classify_shaping(&f, 0.9, &terminals, 1e-8);
        assert!(c.is_potential);
        let back = c.phi.unwrap();
        for s in 0..3 {
            assert!((back.get(0, s) - phi.get(0, s)).abs() < 1e-10);
        }
        let zero = classify_shaping(&ShapingFunction::zero(1, 3), 0.9, &terminals, 1e-8);
        assert!(zero.is_potential);
        assert!(zero.phi.unwrap().values()[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_shaping_is_not_potential() {
        let f = ShapingFunction::zero(1, 2).map(|_| 1.0);
        let c = classify_shaping(&f, 1.0, &[false, true], 1e-8);
        assert!(!c.is_potential);
        assert!(c.phi.is_none());
        assert!(c.max_residual >= 1.0 - 1e-12);
    }

    #[test]
    fn necessity_flip() {
        for (delta, m_action, mp_action) in [(2.0, 0, 1), (-2.0, 1, 0)] {
            let inst = build_necessity_counterexample(delta, 0.9, None, 2).unwrap();
            assert_eq!(inst.expected_action_m, m_action);
            assert_eq!(inst.expected_action_m_prime, mp_action);
            let check = confirm_necessity(&inst, 1e-9).unwrap();
            assert!(check.confirmed, "{check:?}");
            assert!((check.q_m[0] - delta / 2.0).abs() < 1e-12);
            assert!(check.q_m[1].abs() < 1e-12);
            assert!(check.closed_form_discrepancy < 1e-12);
        }
    }

    #[test]
    fn necessity_rejects_zero_delta() {
        assert!(matches!(
            build_necessity_counterexample(0.0, 0.9, None, 2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn necessity_accepts_consistent_table() {
        // Δ realized on the detour instead of the direct edge.
        let mut t = [[0.0; 3]; 3];
        t[0][1] = 0.3;
        let inst = build_necessity_counterexample(0.3, 0.5, Some(t), 2).unwrap();
        assert!(confirm_necessity(&inst, 1e-9).unwrap().confirmed);
        assert!(build_necessity_counterexample(0.4, 0.5, Some(t), 2).is_err());
    }
}
