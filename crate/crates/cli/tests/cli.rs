use std::path::PathBuf;
use std::process::{Command, Output};

const EXAMPLE_EVAL: &str = "l1target:1,1;penalty=5";

fn winmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_winmp"))
        .args(args)
        .env_remove("WINMP_THREADS")
        .output()
        .expect("spawn winmp")
}

fn example_file(file: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "core", "data", "example1", file]
        .iter()
        .collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn wval(o: &Output) -> f64 {
    let s = stdout(o);
    let line = s.lines().find(|l| l.starts_with("wval ")).expect("wval line");
    line[5..].parse().unwrap()
}

fn eval_example(strategy: &str, dfs: bool) -> Output {
    let (mdp, strat) = (example_file("example1.mdp"), example_file(strategy));
    let mut args = vec!["eval", "--mdp", &mdp, "--strategy", &strat, "--eval", EXAMPLE_EVAL, "--window", "8"];
    if dfs {
        args.push("--dfs");
    }
    winmp(&args)
}

#[test]
fn shipped_cycle_strategy_is_one_eighth() {
    let o = eval_example("k7-cycle.strategy", false);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("wval 0.125\n"));
}

#[test]
fn dfs_agrees_with_dp_on_shipped_strategies() {
    for s in ["k1-alternate", "k1-random", "k2-aab", "k2-random", "k7-cycle"] {
        let file = format!("{s}.strategy");
        let dp = wval(&eval_example(&file, false));
        let dfs = wval(&eval_example(&file, true));
        assert!((dp - dfs).abs() <= 1e-9, "{s}: {dp} vs {dfs}");
    }
}

#[test]
fn synth_example_reaches_near_optimum_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("best.strategy");
    let trace = dir.path().join("trace.csv");
    let mdp = example_file("example1.mdp");
    let o = winmp(&[
        "synth",
        "--mdp",
        &mdp,
        "--eval",
        EXAMPLE_EVAL,
        "--window",
        "8",
        "--memory",
        "7",
        "--steps",
        "1000",
        "--restarts",
        "20",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let w = wval(&o);
    assert!(w <= 0.20, "wval {w}");
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("step,restart,wval\n"));
    assert_eq!(csv.lines().count(), 1 + 20 * 1000);
    let re = winmp(&[
        "eval",
        "--mdp",
        &mdp,
        "--strategy",
        out.to_str().unwrap(),
        "--eval",
        EXAMPLE_EVAL,
        "--window",
        "8",
    ]);
    assert_eq!(re.status.code(), Some(0));
    assert!((wval(&re) - w).abs() <= 1e-9);
    assert!(String::from_utf8_lossy(&o.stderr).contains("config: "));
}

#[test]
fn synth_is_deterministic_given_seed() {
    let mdp = example_file("example1.mdp");
    let args = [
        "synth", "--mdp", &mdp, "--eval", EXAMPLE_EVAL, "--window", "8", "--memory", "2", "--steps", "200",
        "--restarts", "3", "--seed", "9",
    ];
    assert_eq!(stdout(&winmp(&args)), stdout(&winmp(&args)));
}

#[test]
fn missing_window_is_usage_error() {
    let mdp = example_file("example1.mdp");
    let o = winmp(&["synth", "--mdp", &mdp, "--eval", EXAMPLE_EVAL, "--memory", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_memory_is_validation_error() {
    let mdp = example_file("example1.mdp");
    let o = winmp(&["synth", "--mdp", &mdp, "--eval", EXAMPLE_EVAL, "--window", "8", "--memory", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_rejected() {
    let o = winmp(&["check", "--suite", "smoke", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_eval_spec_is_validation_error() {
    let mdp = example_file("example1.mdp");
    let strat = example_file("k7-cycle.strategy");
    let o = winmp(&["eval", "--mdp", &mdp, "--strategy", &strat, "--eval", "nope:1", "--window", "8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strategy_mdp_mismatch_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let ring = dir.path().join("ring.mdp");
    let o = winmp(&["gen", "ring3", "--ell", "2", "--out", ring.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let strat = example_file("k7-cycle.strategy");
    let o = winmp(&["eval", "--mdp", ring.to_str().unwrap(), "--strategy", &strat, "--eval", "threshold:1", "--window", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown vertex"));
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let cases: [&[&str]; 4] = [
        &["gen", "ring3", "--ell", "4", "--window", "6"],
        &["gen", "example1"],
        &["gen", "subsetsum", "--nums", "3,5,7", "--target", "8"],
        &["gen", "knapsack", "--values", "3,4,2", "--weights", "2,3,4", "--value", "7", "--capacity", "5"],
    ];
    for args in cases {
        let a = winmp(args);
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, winmp(args).stdout, "{args:?}");
    }
}

#[test]
fn gen_example1_matches_shipped_file() {
    let o = winmp(&["gen", "example1"]);
    assert_eq!(stdout(&o), std::fs::read_to_string(example_file("example1.mdp")).unwrap());
}

#[test]
fn gen_ring_strategy_is_optimal() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("ring.mdp");
    let strat = dir.path().join("ring.strategy");
    let o = winmp(&[
        "gen",
        "ring3",
        "--ell",
        "4",
        "--window",
        "6",
        "--out",
        mdp.to_str().unwrap(),
        "--strategy",
        strat.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&mdp).unwrap();
    let spec = text.lines().find_map(|l| l.strip_prefix("# eval: ")).unwrap();
    let o = winmp(&[
        "eval",
        "--mdp",
        mdp.to_str().unwrap(),
        "--strategy",
        strat.to_str().unwrap(),
        "--eval",
        spec,
        "--window",
        "6",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(wval(&o).abs() <= 1e-9);
}

#[test]
fn gen_sat_reads_dimacs() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("f.cnf");
    std::fs::write(&cnf, "c tiny\np cnf 2 2\n1 -2 0\n2 0\n").unwrap();
    let o = winmp(&["gen", "sat", "--cnf", cnf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("# window: 4\n"));
    assert!(s.contains("mdp payoffs=2\n"));
}

#[test]
fn knapsack_length_mismatch_is_usage_error() {
    let o = winmp(&["gen", "knapsack", "--values", "1,2", "--weights", "1", "--value", "1", "--capacity", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_csv_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = winmp(&[
        "bench",
        "dp-vs-dfs",
        "--ell-range",
        "2..4",
        "--memory",
        "1",
        "--timeout",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "ell,d,K,method,mean_step_seconds,timed_out");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("2,2,1,dp,"));
    assert!(lines[4].starts_with("4,4,1,dfs,") && lines[4].ends_with(",false"));
}

#[test]
fn bench_rejects_bad_range() {
    let o = winmp(&["bench", "dp-vs-dfs", "--ell-range", "9..4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_suites() {
    for suite in ["smoke", "oracle", "grad", "rings"] {
        let o = winmp(&["check", "--suite", suite]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", stdout(&o));
        assert!(stdout(&o).ends_with(&format!("suite {suite}: PASS\n")));
    }
    assert_eq!(winmp(&["check", "--suite", "bogus"]).status.code(), Some(2));
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_winmp"))
        .args(["check", "--suite", "smoke"])
        .env("WINMP_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_winmp"))
        .args(["check", "--suite", "smoke"])
        .env("WINMP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("threads=2"));
}
