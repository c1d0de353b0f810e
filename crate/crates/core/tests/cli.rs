use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapegame::io;
use shapegame::learn::{grid_soccer, SoccerStart};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn shapegame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapegame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const GAME_FIXTURES: [&str; 5] = [
    "chain.json",
    "prisoners_dilemma.json",
    "matching_pennies.json",
    "battle_of_the_sexes.json",
    "chain_row_sum.json",
];

#[test]
fn game_fixtures_round_trip() {
    for name in &GAME_FIXTURES[..4] {
        let text = fs::read_to_string(fixture(name)).unwrap();
        let game = io::game_from_str(&text).unwrap();
        assert_eq!(io::game_to_string(&game), text, "{name}");
    }
}

#[test]
fn auxiliary_fixtures_round_trip() {
    let chain = io::parse_game(fixture("chain.json")).unwrap();
    let pd = io::parse_game(fixture("prisoners_dilemma.json")).unwrap();
    let text = fs::read_to_string(fixture("chain_potential.json")).unwrap();
    let phi = io::parse_potential(fixture("chain_potential.json"), &chain).unwrap();
    assert_eq!(io::to_json(&io::PotentialFile::from_potential(&chain, &phi)), text);
    for name in ["pd_cooperate.json", "pd_defect.json"] {
        let text = fs::read_to_string(fixture(name)).unwrap();
        let profile = io::parse_profile(fixture(name), &pd).unwrap();
        assert_eq!(io::to_json(&io::ProfileFile::from_profile(&pd, &profile)), text);
    }
}

#[test]
fn soccer_round_trip() {
    let (game, _) = grid_soccer(SoccerStart::Littman);
    let text = io::game_to_string(&game);
    let back = io::game_from_str(&text).unwrap();
    assert_eq!(back, game);
}

#[test]
fn row_sum_fixture_is_rejected() {
    let out = shapegame(&["solve", path_str(&fixture("chain_row_sum.json"))]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("s0") && err.contains("(go)") && err.contains("0.9"), "{err}");
}

#[test]
fn verify_pd_cooperation_fails_with_regret_four() {
    let out = shapegame(&[
        "verify",
        path_str(&fixture("prisoners_dilemma.json")),
        "--profile",
        path_str(&fixture("pd_cooperate.json")),
    ]);
    assert_eq!(code(&out), 3);
    let text = stdout(&out);
    assert!(text.contains("player 0 max regret 4.0"), "{text}");
    assert!(text.contains("player 1 max regret 4.0"), "{text}");
}

#[test]
fn verify_pd_defection_passes() {
    let out = shapegame(&[
        "verify",
        path_str(&fixture("prisoners_dilemma.json")),
        "--profile",
        path_str(&fixture("pd_defect.json")),
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn solve_fixtures() {
    for name in &GAME_FIXTURES[..4] {
        let out = shapegame(&["solve", path_str(&fixture(name))]);
        assert_eq!(code(&out), 0, "{name}");
    }
    let out = shapegame(&["solve", path_str(&fixture("battle_of_the_sexes.json"))]);
    assert_eq!(stdout(&out).matches("equilibrium ").count(), 3);
}

#[test]
fn solve_rejects_oversized_search() {
    let dir = tempfile::tempdir().unwrap();
    let soccer = dir.path().join("soccer.json");
    let (game, _) = grid_soccer(SoccerStart::Littman);
    // A general-sum copy has no zero-sum or single-state method.
    let general = game.map_rewards(|i, _, _, _, r| if i == 0 { r } else { 0.0 });
    io::serialize_game(&general, &soccer).unwrap();
    assert_eq!(code(&shapegame(&["solve", path_str(&soccer)])), 3);
}

#[test]
fn invariance_on_chain_fixture() {
    let out = shapegame(&[
        "invariance",
        path_str(&fixture("chain.json")),
        "--potential",
        path_str(&fixture("chain_potential.json")),
        "--v-star",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn missing_input_is_an_input_error() {
    let out = shapegame(&["solve", "/nonexistent/game.json"]);
    assert_eq!(code(&out), 2);
    let out = shapegame(&["verify", path_str(&fixture("chain.json"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn shape_writes_shaped_game_and_classifies() {
    let dir = tempfile::tempdir().unwrap();
    let shaped = dir.path().join("shaped.json");
    let out = shapegame(&[
        "shape",
        path_str(&fixture("chain.json")),
        "--potential",
        path_str(&fixture("chain_potential.json")),
        "-o",
        path_str(&shaped),
    ]);
    assert_eq!(code(&out), 0);
    let game = io::parse_game(&shaped).unwrap();
    let s0 = game.state_index("s0").unwrap();
    let s1 = game.state_index("s1").unwrap();
    assert_eq!(game.reward(0, s0, 0, s1), -0.5);

    let ce = dir.path().join("ce");
    assert_eq!(code(&shapegame(&["counterexample", "--delta", "2", "-o", path_str(&ce)])), 0);
    let out = shapegame(&[
        "shape",
        path_str(&ce.join("m.json")),
        "--classify",
        path_str(&ce.join("shaping.json")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("potential-based: false"));
}

#[test]
fn counterexample_reports_flip() {
    let dir = tempfile::tempdir().unwrap();
    let out = shapegame(&["counterexample", "--delta", "2", "-o", path_str(dir.path())]);
    assert_eq!(code(&out), 0);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("M  equilibrium action at s1: direct"), "{report}");
    assert!(report.contains("M' equilibrium action at s1: detour"), "{report}");
    assert!(report.contains("flip confirmed: true"));

    let out = shapegame(&["counterexample", "--delta", "-2", "-o", path_str(dir.path())]);
    assert_eq!(code(&out), 0);
    let out = shapegame(&["counterexample", "--delta", "0", "-o", path_str(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invariance_on_generated_pairs_and_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..50 {
        let d = dir.path().join(format!("g{seed}"));
        let seed = seed.to_string();
        assert_eq!(code(&shapegame(&["--seed", &seed, "generate", "-o", path_str(&d)])), 0);
        let out = shapegame(&[
            "invariance",
            path_str(&d.join("game.json")),
            "--potential",
            path_str(&d.join("potential.json")),
            "--v-star",
        ]);
        assert_eq!(code(&out), 0, "seed {seed}: {}", stdout(&out));
    }
    let ce = dir.path().join("ce");
    assert_eq!(code(&shapegame(&["counterexample", "--delta", "2", "-o", path_str(&ce)])), 0);
    let out = shapegame(&[
        "invariance",
        path_str(&ce.join("m.json")),
        "--shaping",
        path_str(&ce.join("shaping.json")),
    ]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));
}

fn write_config(dir: &Path, potential: &str, name: &str) -> PathBuf {
    let config = format!(
        r#"{{
  "format": "1",
  "environment": {{ "kind": "repeated_matrix", "game": "matching_pennies", "gamma": 0.9 }},
  "schedule": {{ "alpha_visit_scale": 5.0 }},
  "potential": {potential},
  "trials": 3,
  "seed_base": 4,
  "episodes": 600,
  "eval_every": 200,
  "output": {{ "curves": "{name}.csv", "summary": "{name}.json" }}
}}
"#
    );
    let path = dir.join(format!("{name}.config.json"));
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn learn_zero_potential_arms_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{ "source": "zero" }"#, "zero");
    assert_eq!(code(&shapegame(&["learn", path_str(&config)])), 0);
    let csv = fs::read_to_string(dir.path().join("zero.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(io::CSV_HEADER));
    let body: Vec<&str> = lines.collect();
    let strip = |arm: &str| -> Vec<String> {
        body.iter()
            .filter(|l| l.ends_with(&format!(",{arm}")))
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let (shaped, unshaped) = (strip("shaped"), strip("unshaped"));
    assert_eq!(shaped.len(), 3 * 3 * 2);
    assert_eq!(shaped, unshaped);
}

#[test]
fn seeded_commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{ "source": "solver" }"#, "run");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        assert_eq!(code(&shapegame(&["learn", path_str(&config)])), 0);
        outputs.push((
            fs::read(dir.path().join("run.csv")).unwrap(),
            fs::read(dir.path().join("run.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);

    // --seed overrides the config's seed_base.
    assert_eq!(code(&shapegame(&["--seed", "4", "learn", path_str(&config)])), 0);
    assert_eq!(fs::read(dir.path().join("run.csv")).unwrap(), outputs[0].0);

    let generated: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let d = dir.path().join(format!("gen{k}"));
            assert_eq!(code(&shapegame(&["--seed", "17", "generate", "-o", path_str(&d)])), 0);
            fs::read(d.join("game.json")).unwrap()
        })
        .collect();
    assert_eq!(generated[0], generated[1]);
}

#[test]
fn learn_config_requires_existing_files_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{ "source": "file", "path": "missing.json" }"#,
        "bad",
    );
    assert_eq!(code(&shapegame(&["learn", path_str(&config)])), 2);

    let text = fs::read_to_string(write_config(dir.path(), r#"{ "source": "zero" }"#, "noseed"))
        .unwrap()
        .replace("\"seed_base\": 4,", "");
    let path = dir.path().join("noseed.config.json");
    fs::write(&path, text).unwrap();
    assert_eq!(code(&shapegame(&["learn", path_str(&path)])), 2);
}
