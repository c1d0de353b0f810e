//! Seeded random games, potentials and profiles for property checks.

use rand::Rng;

use crate::game::{GameBuilder, Policy, PolicyProfile, PotentialSet, StochasticGame};

fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    // Normalized exponentials: a uniform draw from the simplex.
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// A game with `live_states` non-terminal states plus one terminal state.
/// Rewards are uniform in `[-1, 1]`; for two-player zero-sum games player 2
/// receives the negation of player 1's reward.
pub fn random_game<R: Rng + ?Sized>(
    rng: &mut R,
    live_states: usize,
    action_counts: &[usize],
    gamma: f64,
    zero_sum: bool,
) -> StochasticGame {
    assert!(!zero_sum || action_counts.len() == 2);
    let num_states = live_states + 1;
    let terminal = live_states;
    let mut b = GameBuilder::anonymous(num_states, action_counts, gamma);
    b.terminal(terminal).absorb_terminals();
    let n = action_counts.len();
    let num_joint = b.joint().len();
    for s in 0..live_states {
        for j in 0..num_joint {
            let dist = random_distribution(rng, num_states);
            for (next, p) in dist.into_iter().enumerate() {
                let rewards: Vec<f64> = if zero_sum {
                    let r = rng.gen_range(-1.0..=1.0);
                    vec![r, -r]
                } else {
                    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
                };
                b.outcome(s, j, next, p, &rewards);
            }
        }
    }
    b.build().expect("generated shapes are consistent")
}

/// Two-player zero-sum game with 2–4 states (one terminal) and 2–3 actions
/// per player.
pub fn random_small_zero_sum<R: Rng + ?Sized>(rng: &mut R, gamma: f64) -> StochasticGame {
    let live = rng.gen_range(1..=3);
    let counts = [rng.gen_range(2..=3), rng.gen_range(2..=3)];
    random_game(rng, live, &counts, gamma, true)
}

/// Potentials uniform in `[-scale, scale]`, zero at terminals.
pub fn random_potential<R: Rng + ?Sized>(rng: &mut R, game: &StochasticGame, scale: f64) -> PotentialSet {
    PotentialSet::new(
        (0..game.num_players())
            .map(|_| {
                (0..game.num_states())
                    .map(|s| {
                        if game.is_terminal(s) {
                            0.0
                        } else {
                            rng.gen_range(-scale..=scale)
                        }
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Arbitrary stationary profile; roughly a third of the state policies are pure.
pub fn random_profile<R: Rng + ?Sized>(rng: &mut R, game: &StochasticGame) -> PolicyProfile {
    let policies = game
        .action_counts()
        .iter()
        .map(|&c| {
            let probs = (0..game.num_states())
                .map(|_| {
                    if rng.gen_bool(1.0 / 3.0) {
                        let mut d = vec![0.0; c];
                        d[rng.gen_range(0..c)] = 1.0;
                        d
                    } else {
                        random_distribution(rng, c)
                    }
                })
                .collect();
            Policy::new(probs).expect("normalized")
        })
        .collect();
    PolicyProfile::new(policies)
}
