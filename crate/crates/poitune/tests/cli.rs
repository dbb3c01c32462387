//! End-to-end command-line tests: exit codes, seed resolution, config
//! handling, and manifest-driven reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use poitune::trace::read_sctf;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_poitune"));
    cmd.env_remove("SCA_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["simulate", "--help"])), 0);
    assert_eq!(code(&run(&["eda", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["simulate", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["simulate"])), 1); // --out is required
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.sctf");

    let missing_config = run(&[
        "simulate",
        "--config",
        dir.path().join("nope.cfg").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&missing_config), 2);
    assert!(stderr(&missing_config).starts_with("error:"), "{}", stderr(&missing_config));

    let bad_key = dir.path().join("bad.cfg");
    std::fs::write(&bad_key, "[simulate]\nn_tracez = 10\n").unwrap();
    let unknown_key = run(&[
        "simulate",
        "--config",
        bad_key.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&unknown_key), 2);
    assert!(stderr(&unknown_key).contains("n_tracez"), "{}", stderr(&unknown_key));

    let not_sctf = dir.path().join("junk.sctf");
    std::fs::write(&not_sctf, b"certainly not traces").unwrap();
    let bad_profile = run(&[
        "poi-graph",
        "--profile",
        not_sctf.to_str().unwrap(),
        "--out",
        dir.path().join("g.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&bad_profile), 2);
}

#[test]
fn simulate_is_seed_deterministic_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.sctf");
    let b = dir.path().join("b.sctf");
    for path in [&a, &b] {
        let out = run(&[
            "simulate",
            "--n-traces",
            "40",
            "--n-samples",
            "32",
            "--seed",
            "5",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "same seed must give identical bytes"
    );
    let ts = read_sctf(&a).unwrap();
    assert_eq!(ts.n_traces(), 40);
    assert_eq!(ts.n_samples(), 32);
    assert!(a.with_extension("sctf.manifest.cfg").exists() || manifest_of(&a).exists());
}

fn manifest_of(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.cfg");
    std::path::PathBuf::from(s)
}

#[test]
fn sca_seed_env_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let via_flag = dir.path().join("flag.sctf");
    let via_env = dir.path().join("env.sctf");

    let out = run(&["simulate", "--n-traces", "30", "--seed", "9", "--out", via_flag.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let out = bin()
        .args(["simulate", "--n-traces", "30", "--out", via_env.to_str().unwrap()])
        .env("SCA_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 0);
    assert_eq!(std::fs::read(&via_flag).unwrap(), std::fs::read(&via_env).unwrap());

    // A flag wins over the environment.
    let via_both = dir.path().join("both.sctf");
    let out = bin()
        .args(["simulate", "--n-traces", "30", "--seed", "9", "--out", via_both.to_str().unwrap()])
        .env("SCA_SEED", "4444")
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 0);
    assert_eq!(std::fs::read(&via_flag).unwrap(), std::fs::read(&via_both).unwrap());

    // An unparseable value is a data error, not silently zero.
    let out = bin()
        .args(["simulate", "--n-traces", "30", "--out", dir.path().join("x.sctf").to_str().unwrap()])
        .env("SCA_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 2);
}

/// Simulates profiling and attack sets once for the pipeline tests.
fn make_corpus(dir: &Path) -> (String, String) {
    let profiling = dir.join("profiling.sctf");
    let attack = dir.join("attack.sctf");
    let out = run(&[
        "simulate",
        "--n-traces",
        "4000",
        "--n-samples",
        "40",
        "--seed",
        "11",
        "--out",
        profiling.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(&[
        "simulate",
        "--n-traces",
        "150",
        "--n-samples",
        "40",
        "--key",
        "2b7e151628aed2a6abf7158809cf4f3c",
        "--seed",
        "12",
        "--out",
        attack.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (
        profiling.to_str().unwrap().to_owned(),
        attack.to_str().unwrap().to_owned(),
    )
}

#[test]
fn graph_attack_and_search_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (profiling, attack) = make_corpus(dir.path());

    let graphic_csv = dir.path().join("sost.csv");
    let out = run(&[
        "poi-graph",
        "--profile",
        &profiling,
        "--method",
        "sost",
        "--normalize",
        "--out",
        graphic_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(&graphic_csv).unwrap();
    assert!(csv.starts_with("sample_index,value\n"), "{csv}");
    assert_eq!(csv.lines().count(), 41);

    let curve_csv = dir.path().join("curve.csv");
    let out = run(&[
        "attack",
        "--profile",
        &profiling,
        "--attack",
        &attack,
        "--poi",
        "4,12,20,28,36",
        "--out",
        curve_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let curve = std::fs::read_to_string(&curve_csv).unwrap();
    assert!(curve.starts_with("n_traces_used,rank\n"), "{curve}");
    assert_eq!(curve.lines().count(), 151);
    // Plenty of signal at noise 1.0: the full curve must end at rank 1.
    assert!(curve.trim_end().ends_with(",1"), "{curve}");

    let eda_dir = dir.path().join("search");
    let out = run(&[
        "eda",
        "--profile",
        &profiling,
        "--attack",
        &attack,
        "--population-size",
        "8",
        "--n-selected",
        "4",
        "--iterations",
        "2",
        "--n-attack",
        "60",
        "--seed",
        "3",
        "--out",
        eda_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let first = std::fs::read_to_string(eda_dir.join("iteration_001.csv")).unwrap();
    assert!(first.starts_with("Ind,Eval,n_POI,ge\n"), "{first}");
    assert_eq!(first.lines().count(), 9);
    assert!(eda_dir.join("iteration_002.csv").exists());

    // The manifest is a valid config: re-running it reproduces the search.
    let manifest = eda_dir.join("manifest.cfg");
    assert!(manifest.exists());
    let replay_dir = dir.path().join("replay");
    let out = run(&[
        "eda",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        replay_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["iteration_001.csv", "iteration_002.csv"] {
        assert_eq!(
            std::fs::read(eda_dir.join(name)).unwrap(),
            std::fs::read(replay_dir.join(name)).unwrap(),
            "replayed {name} differs"
        );
    }
}

#[test]
fn factorial_experiment_writes_runs_and_effects() {
    let dir = tempfile::tempdir().unwrap();
    let (profiling, attack) = make_corpus(dir.path());

    let config = dir.path().join("doe.cfg");
    std::fs::write(
        &config,
        format!(
            "# small factorial over the optimizer\n\
             [data]\n\
             profile = {profiling}\n\
             attack = {attack}\n\
             [eda]\n\
             population_size = 6\n\
             n_selected = 3\n\
             n_iterations = 2\n\
             init = uniform\n\
             init_p = 0.15\n\
             [eval]\n\
             n_attack = 60\n\
             [doe]\n\
             factor_a = CF:cf:1:10\n\
             factor_b = ITER:iterations:2:3\n\
             factor_c = POP:population:6:8\n\
             response = best_eval\n"
        ),
    )
    .unwrap();

    let doe_dir = dir.path().join("doe-out");
    let out = run(&[
        "doe",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "21",
        "--out",
        doe_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let runs = std::fs::read_to_string(doe_dir.join("doe_runs.csv")).unwrap();
    assert!(runs.starts_with("CF,ITER,POP,"), "{runs}");
    assert_eq!(runs.lines().count(), 9);

    let effects = std::fs::read_to_string(doe_dir.join("doe_effects.csv")).unwrap();
    let names: Vec<&str> = effects
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["A", "B", "C", "AB", "AC", "BC", "ABC"]);
    assert!(doe_dir.join("manifest.cfg").exists());
}
