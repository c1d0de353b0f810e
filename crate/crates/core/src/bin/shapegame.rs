use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shapegame::game::{PotentialSet, StochasticGame, REGRET_TOL, VALUE_TOL};
use shapegame::io::{self, ExperimentConfig};
use shapegame::learn::{
    grid_soccer, repeated_matrix_env, run_comparison, solver_potential, Comparison, Environment,
    ModelEnvironment, SoccerEnvironment,
};
use shapegame::shaping::{
    apply_shaping, build_necessity_counterexample, check_one_step_identity, check_offset_identities,
    classify_shaping, confirm_necessity, potential_to_shaping,
};
use shapegame::solver::{
    pure_stationary_equilibria, shapley_value_iteration, solution_for_profile, solve_single_state,
    verify_nash, EquilibriumSolution, SolutionMethod,
};
use shapegame::{catalog, random, Error};

#[derive(Parser)]
#[command(name = "shapegame", version, about = "Stochastic games and potential-based reward shaping")]
struct Cli {
    /// Seed for every randomized command; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Computes equilibria and prints strategies, values and regrets.
    Solve {
        game: PathBuf,
        #[arg(long, default_value_t = REGRET_TOL)]
        eps: f64,
        /// Writes the first equilibrium as a profile file.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Writes the shaped game, or classifies a shaping function.
    Shape {
        game: PathBuf,
        #[arg(long, conflicts_with = "classify", required_unless_present = "classify")]
        potential: Option<PathBuf>,
        #[arg(long)]
        classify: Option<PathBuf>,
        #[arg(short, long, required_unless_present = "classify")]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Checks whether a profile is a Nash equilibrium.
    Verify {
        game: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = REGRET_TOL)]
        eps: f64,
    },
    /// Checks that shaping preserves the game's equilibria.
    Invariance {
        game: PathBuf,
        #[arg(long, conflicts_with = "shaping", required_unless_present = "shaping")]
        potential: Option<PathBuf>,
        /// A shaping function F; its best-fitting potential is used if F is
        /// potential-based.
        #[arg(long)]
        shaping: Option<PathBuf>,
        /// Also checks the one-step identity with Φ set to the solved values.
        #[arg(long)]
        v_star: bool,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Builds the two-step game where a non-potential F changes the equilibrium.
    Counterexample {
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Runs a shaped-versus-unshaped learning comparison.
    Learn { config: PathBuf },
    /// Writes a built-in game.
    Catalog {
        name: CatalogGame,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Writes a seeded random zero-sum game and potential.
    Generate {
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CatalogGame {
    Chain,
    PrisonersDilemma,
    MatchingPennies,
    BattleOfTheSexes,
    GridSoccer,
}

enum Outcome {
    Pass,
    Negative,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_)
        | Error::Dimension(_)
        | Error::InvalidDistribution(_)
        | Error::PlayerOutOfRange { .. }
        | Error::InvalidGame(_)
        | Error::Parse(_)
        | Error::Config(_)
        | Error::Io { .. } => 2,
        Error::SearchTooLarge { .. } => 3,
        Error::Divergence { .. } | Error::Cancelled => 1,
    }
}

fn run(cli: Cli) -> shapegame::Result<Outcome> {
    match cli.command {
        Command::Solve { game, eps, output } => solve(&game, eps, output.as_deref()),
        Command::Shape {
            game,
            potential,
            classify,
            output,
            tol,
        } => shape(&game, potential.as_deref(), classify.as_deref(), output.as_deref(), tol),
        Command::Verify { game, profile, eps } => verify(&game, &profile, eps),
        Command::Invariance {
            game,
            potential,
            shaping,
            v_star,
            tol,
        } => invariance(&game, potential.as_deref(), shaping.as_deref(), v_star, tol),
        Command::Counterexample {
            delta,
            gamma,
            output,
        } => counterexample(delta, gamma, &output),
        Command::Learn { config } => learn(&config, cli.seed),
        Command::Catalog {
            name,
            gamma,
            output,
        } => {
            let game = match name {
                CatalogGame::Chain => catalog::chain_game(gamma),
                CatalogGame::PrisonersDilemma => catalog::repeated(&catalog::prisoners_dilemma(), gamma),
                CatalogGame::MatchingPennies => catalog::repeated(&catalog::matching_pennies(), gamma),
                CatalogGame::BattleOfTheSexes => {
                    catalog::repeated(&catalog::battle_of_the_sexes(), gamma)
                }
                CatalogGame::GridSoccer => grid_soccer(Default::default()).0,
            };
            io::serialize_game(&game, &output)?;
            Ok(Outcome::Pass)
        }
        Command::Generate { output } => generate(cli.seed.unwrap_or(0), &output),
    }
}

fn create_dir(dir: &Path) -> shapegame::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

/// Shapley iteration for two-player zero-sum discounted games, the
/// single-state reduction, otherwise exhaustive pure stationary search.
fn equilibria(game: &StochasticGame, eps: f64) -> shapegame::Result<Vec<EquilibriumSolution>> {
    if game.num_players() == 2 && game.is_zero_sum() && game.gamma() < 1.0 {
        return Ok(vec![shapley_value_iteration(game, VALUE_TOL)?]);
    }
    if game.non_terminal_states().count() == 1 {
        return solve_single_state(game, VALUE_TOL);
    }
    pure_stationary_equilibria(game, eps, None)?
        .into_iter()
        .map(|p| solution_for_profile(game, p, SolutionMethod::PureSearch, eps))
        .collect()
}

fn format_dist(d: &[f64], names: &[String]) -> String {
    names
        .iter()
        .zip(d)
        .map(|(n, p)| format!("{n}={}", io::format_sig9(*p)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn describe_solution(game: &StochasticGame, sol: &EquilibriumSolution, out: &mut String) {
    for s in game.non_terminal_states() {
        let _ = writeln!(out, "  state {}", game.state_name(s));
        for i in 0..game.num_players() {
            let _ = writeln!(
                out,
                "    player {i}: {}  value {}  regret {}",
                format_dist(sol.profile.policy(i).dist(s), game.action_names(i)),
                io::format_sig9(sol.values.get(i, s)),
                io::format_sig9(sol.regrets[i][s]),
            );
        }
    }
}

fn solve(path: &Path, eps: f64, output: Option<&Path>) -> shapegame::Result<Outcome> {
    let game = io::parse_game(path)?;
    let solutions = match equilibria(&game, eps) {
        Err(e @ Error::SearchTooLarge { .. }) => {
            println!("no equilibrium method applies: {e}");
            return Ok(Outcome::Negative);
        }
        other => other?,
    };
    if solutions.is_empty() {
        println!("no equilibrium found");
        return Ok(Outcome::Negative);
    }
    let mut out = String::new();
    for (k, sol) in solutions.iter().enumerate() {
        let _ = writeln!(
            out,
            "equilibrium {k} ({}), max regret {}",
            sol.method,
            io::format_sig9(sol.max_regret())
        );
        describe_solution(&game, sol, &mut out);
    }
    print!("{out}");
    if let Some(o) = output {
        io::serialize_profile(&game, &solutions[0].profile, o)?;
    }
    Ok(Outcome::Pass)
}

fn shape(
    path: &Path,
    potential: Option<&Path>,
    classify: Option<&Path>,
    output: Option<&Path>,
    tol: f64,
) -> shapegame::Result<Outcome> {
    let game = io::parse_game(path)?;
    if let Some(f_path) = classify {
        let f = io::parse_shaping(f_path, &game)?;
        let c = classify_shaping(&f, game.gamma(), game.terminals(), tol);
        println!(
            "potential-based: {}  residual {}",
            c.is_potential,
            io::format_sig9(c.max_residual)
        );
        if let (Some(phi), Some(o)) = (&c.phi, output) {
            io::serialize_potential(&game, phi, o)?;
        }
        return Ok(if c.is_potential { Outcome::Pass } else { Outcome::Negative });
    }
    let phi = io::parse_potential(potential.expect("clap requires a potential"), &game)?;
    let f = potential_to_shaping(&phi, game.gamma(), game.terminals())?;
    let shaped = apply_shaping(&game, &f)?;
    for w in &shaped.warnings {
        eprintln!("warning: {w}");
    }
    io::serialize_game(&shaped.game, output.expect("clap requires an output"))?;
    Ok(Outcome::Pass)
}

fn verify(path: &Path, profile: &Path, eps: f64) -> shapegame::Result<Outcome> {
    let game = io::parse_game(path)?;
    let profile = io::parse_profile(profile, &game)?;
    let report = verify_nash(&game, &profile, eps)?;
    for i in 0..game.num_players() {
        println!("player {i} max regret {:?}", round9(report.player_max_regret(i)));
    }
    println!("nash at eps {eps:e}: {}", report.is_nash);
    Ok(if report.is_nash { Outcome::Pass } else { Outcome::Negative })
}

fn round9(x: f64) -> f64 {
    io::format_sig9(x).parse().unwrap_or(x)
}

fn invariance(
    path: &Path,
    potential: Option<&Path>,
    shaping: Option<&Path>,
    v_star: bool,
    tol: f64,
) -> shapegame::Result<Outcome> {
    let game = io::parse_game(path)?;
    let Some(solution) = equilibria(&game, REGRET_TOL)?.into_iter().next() else {
        println!("no equilibrium of the game to check");
        return Ok(Outcome::Negative);
    };
    let phi = match (potential, shaping) {
        (Some(p), _) => io::parse_potential(p, &game)?,
        (None, Some(f_path)) => {
            let f = io::parse_shaping(f_path, &game)?;
            let c = classify_shaping(&f, game.gamma(), game.terminals(), tol);
            match c.phi {
                Some(phi) => phi,
                None => {
                    let shaped = apply_shaping(&game, &f)?.game;
                    let report = verify_nash(&shaped, &solution.profile, tol)?;
                    println!(
                        "F is not potential-based (residual {})",
                        io::format_sig9(c.max_residual)
                    );
                    println!(
                        "equilibrium of M on M': regret {}, still Nash: {}",
                        io::format_sig9(report.max_regret),
                        report.is_nash
                    );
                    return Ok(Outcome::Negative);
                }
            }
        }
        (None, None) => unreachable!("clap requires a potential or shaping function"),
    };
    let f = potential_to_shaping(&phi, game.gamma(), game.terminals())?;
    let shaped = apply_shaping(&game, &f)?.game;
    let report = check_offset_identities(&game, &shaped, &phi, &solution, tol)?;
    println!("max |V' - (V - phi)| {}", io::format_sig9(report.value_offset_error));
    println!("max |Q' - (Q - phi)| {}", io::format_sig9(report.q_offset_error));
    println!(
        "equilibrium regret on M {}, on M' {}",
        io::format_sig9(report.original_regret),
        io::format_sig9(report.shaped_regret)
    );
    println!("unshaping error {}", io::format_sig9(report.unshaping_error));
    for v in &report.violations {
        println!("violation: {v}");
    }
    let mut passed = report.passed;
    if v_star {
        let eq = check_one_step_identity(&game, &solution, tol)?;
        println!(
            "one-step residual with phi = V*: {} (re-evaluated {})",
            io::format_sig9(eq.max_residual),
            io::format_sig9(eq.max_residual_shaped)
        );
        passed &= eq.passed;
    }
    println!("invariant: {passed}");
    Ok(if passed { Outcome::Pass } else { Outcome::Negative })
}

fn counterexample(delta: f64, gamma: f64, dir: &Path) -> shapegame::Result<Outcome> {
    let instance = build_necessity_counterexample(delta, gamma, None, 2)?;
    let check = confirm_necessity(&instance, REGRET_TOL)?;
    create_dir(dir)?;
    io::serialize_game(&instance.game_m, dir.join("m.json"))?;
    io::serialize_game(&instance.game_m_prime, dir.join("m_prime.json"))?;
    io::serialize_shaping(&instance.game_m, &instance.shaping, dir.join("shaping.json"))?;
    let names = instance.game_m.action_names(0);
    let acts = |xs: &[usize]| {
        xs.iter()
            .map(|&a| names.get(a).map_or("?", String::as_str))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut report = String::new();
    let _ = writeln!(report, "delta {}", io::format_sig9(delta));
    let _ = writeln!(report, "gamma {}", io::format_sig9(gamma));
    for w in &instance.warnings {
        let _ = writeln!(report, "warning {w}");
    }
    let _ = writeln!(
        report,
        "M  equilibrium action at s1: {}  Q(s1) = ({}, {})",
        acts(&check.actions_m),
        io::format_sig9(check.q_m[0]),
        io::format_sig9(check.q_m[1])
    );
    let _ = writeln!(
        report,
        "M' equilibrium action at s1: {}  Q'(s1) = ({}, {})",
        acts(&check.actions_m_prime),
        io::format_sig9(check.q_m_prime[0]),
        io::format_sig9(check.q_m_prime[1])
    );
    let _ = writeln!(
        report,
        "closed-form Q'(s1) discrepancy {}",
        io::format_sig9(check.closed_form_discrepancy)
    );
    let _ = writeln!(report, "flip confirmed: {}", check.confirmed);
    io::write(&dir.join("report.txt"), &report)?;
    print!("{report}");
    Ok(if check.confirmed { Outcome::Pass } else { Outcome::Negative })
}

fn learn(path: &Path, seed: Option<u64>) -> shapegame::Result<Outcome> {
    let mut config: ExperimentConfig = io::parse_experiment(path)?;
    if let Some(seed) = seed {
        config.seed_base = seed;
    }
    let (game, make_env): (StochasticGame, Box<dyn Fn() -> Box<dyn Environment> + Sync>) =
        match &config.environment {
            io::EnvironmentConfig::GridSoccer { start } => {
                let start = *start;
                let (game, _) = grid_soccer(start);
                (game, Box::new(move || Box::new(SoccerEnvironment::new(start))))
            }
            io::EnvironmentConfig::RepeatedMatrix { game: id, gamma } => {
                let env = repeated_matrix_env(&id.matrix(), *gamma)?;
                let game = env.model().clone();
                (game, Box::new(move || Box::new(env.clone())))
            }
            io::EnvironmentConfig::GameFile { path } => {
                let game = io::parse_game(path)?;
                let env = ModelEnvironment::new(game.clone());
                (game, Box::new(move || Box::new(env.clone())))
            }
        };
    let potential = match &config.potential {
        io::PotentialSource::Solver => solver_potential(&game)?,
        io::PotentialSource::Zero => PotentialSet::zero(game.num_players(), game.num_states()),
        io::PotentialSource::File { path } => io::parse_potential(path, &game)?,
    };
    let result = run_comparison(&Comparison {
        game: &game,
        make_env: &*make_env,
        potential,
        settings: config.settings(),
    })?;
    io::emit_csv(result.curves(), &config.output.curves)?;
    io::write(&config.output.summary, &io::to_json(&result.summary))?;
    let s = &result.summary;
    for arm in [&s.shaped, &s.unshaped] {
        println!(
            "{}: median episodes to {} = {}, all final policies verified: {}",
            arm.arm.label(),
            s.eps_learn,
            arm.median_episodes_to_threshold
                .map_or("not reached".into(), |m| m.to_string()),
            arm.all_final_verified
        );
    }
    if let Some(r) = s.speedup {
        println!("speedup {}", io::format_sig9(r));
    }
    println!("invariance holds: {}", s.invariance_holds);
    Ok(if s.invariance_holds { Outcome::Pass } else { Outcome::Negative })
}

fn generate(seed: u64, dir: &Path) -> shapegame::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = random::random_small_zero_sum(&mut rng, 0.9);
    let phi = random::random_potential(&mut rng, &game, 1.0);
    create_dir(dir)?;
    io::serialize_game(&game, dir.join("game.json"))?;
    io::serialize_potential(&game, &phi, dir.join("potential.json"))?;
    Ok(Outcome::Pass)
}
