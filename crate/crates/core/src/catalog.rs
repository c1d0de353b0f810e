//! Small named games used by tests, fixtures and the CLI.

use crate::game::{GameBuilder, MatrixGame, StochasticGame};

pub fn prisoners_dilemma() -> MatrixGame {
    MatrixGame::bimatrix(
        &[vec![3.0, 0.0], vec![5.0, 1.0]],
        &[vec![3.0, 5.0], vec![0.0, 1.0]],
    )
    .expect("static shape")
}

pub fn battle_of_the_sexes() -> MatrixGame {
    MatrixGame::bimatrix(
        &[vec![2.0, 0.0], vec![0.0, 1.0]],
        &[vec![1.0, 0.0], vec![0.0, 2.0]],
    )
    .expect("static shape")
}

pub fn matching_pennies() -> MatrixGame {
    MatrixGame::zero_sum(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).expect("static shape")
}

fn action_labels(game: &MatrixGame, player: usize) -> Vec<String> {
    let n = game.action_counts()[player];
    // Two-action social dilemmas read better as C/D.
    if n == 2 && game.num_players() == 2 && !game.is_zero_sum() {
        vec!["C".into(), "D".into()]
    } else {
        (0..n).map(|a| format!("a{a}")).collect()
    }
}

/// Repeated play of a matrix game: one state looping on itself, discounted
/// by `gamma`.
pub fn repeated(matrix: &MatrixGame, gamma: f64) -> StochasticGame {
    let actions: Vec<Vec<String>> = (0..matrix.num_players())
        .map(|i| action_labels(matrix, i))
        .collect();
    let mut b = GameBuilder::new(["play"], actions, gamma);
    let rewards_of = |j| -> Vec<f64> {
        (0..matrix.num_players())
            .map(|i| matrix.payoff(j, i))
            .collect()
    };
    for j in 0..matrix.joint().len() {
        b.outcome(0, j, 0, 1.0, &rewards_of(j));
    }
    b.build().expect("static shape")
}

/// Deterministic chain `s0 -(0)-> s1 -(1)-> sT` with one action per player.
/// Player 0 collects the reward; with two players, player 1 receives its
/// negation.
pub fn chain_game_players(players: usize, gamma: f64) -> StochasticGame {
    let actions: Vec<Vec<String>> = (0..players).map(|_| vec!["go".to_string()]).collect();
    let mut b = GameBuilder::new(["s0", "s1", "sT"], actions, gamma);
    b.terminal(2).absorb_terminals();
    let mut r = vec![0.0; players];
    b.outcome(0, 0, 1, 1.0, &r);
    r[0] = 1.0;
    if players == 2 {
        r[1] = -1.0;
    }
    b.outcome(1, 0, 2, 1.0, &r);
    b.build().expect("static shape")
}

pub fn chain_game(gamma: f64) -> StochasticGame {
    chain_game_players(1, gamma)
}
