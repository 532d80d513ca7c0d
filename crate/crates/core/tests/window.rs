use std::time::Instant;

use winmp::bench::{brute_force_memoryless, example1_strategies, gen_example1};
use winmp::chain::point_mass;
use winmp::window::{decomposability_check, decomposability_check_random, window_expectation_dp_traced};
use winmp::{
    gval_bscc, induced_chain, tarjan_bsccs, window_expectation_dfs, window_expectation_dp, wval_strategy, Bscc,
    Decomposable, Error, Eval, EvalSpec, Mdp, Method,
};

fn example(name: &str) -> (Mdp, Eval, Vec<(String, Bscc)>) {
    let (mdp, spec, _) = gen_example1();
    let eval = Eval::bind(spec, &mdp).unwrap();
    let s = example1_strategies().into_iter().find(|s| s.name == name).unwrap();
    let sigma = s.strategy(&mdp).unwrap();
    let n = sigma.augmented().num_vertices();
    let chain = induced_chain(&mdp, &sigma, point_mass(n, 0)).unwrap();
    let aug = sigma.augmented().clone();
    let out = tarjan_bsccs(&chain)
        .into_iter()
        .map(|b| {
            let label = b
                .states()
                .iter()
                .map(|&s| {
                    let a = aug.vertices()[s];
                    format!("{}:{}", mdp.name(a.vertex), a.mem)
                })
                .collect::<Vec<_>>()
                .join(" ");
            (label, b)
        })
        .collect();
    (mdp, eval, out)
}

fn start_values(name: &str, d: usize) -> Vec<f64> {
    let (mdp, eval, bsccs) = example(name);
    assert_eq!(bsccs.len(), 1);
    let b = &bsccs[0].1;
    let dec = eval.decompose(d, &mdp.payoff_min());
    let mut vals: Vec<f64> = (0..b.len())
        .map(|s| {
            let dp = window_expectation_dp(b, &dec, s).unwrap();
            let dfs = window_expectation_dfs(b, &eval, d, s, None).unwrap();
            assert!((dp - dfs).abs() < 1e-12, "{dp} vs {dfs}");
            dp
        })
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn assert_close(got: &[f64], want: &[f64]) {
    assert_eq!(got.len(), want.len(), "{got:?}");
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

#[test]
fn alternating_windows_all_score_three_and_a_half() {
    // Every 8-window holds four A and four B: WMP (0.5, 4).
    assert_close(&start_values("k1-alternate", 8), &[3.5, 3.5]);
}

#[test]
fn two_a_one_b_phase_values() {
    // AABAABAA gives WMP (6/8, 2); the two other phases give (5/8, 3).
    assert_close(&start_values("k2-aab", 8), &[1.25, 2.375, 2.375]);
}

#[test]
fn seven_a_cycle_scores_one_eighth_everywhere() {
    assert_close(&start_values("k7-cycle", 8), &[0.125; 8]);
}

#[test]
fn single_state_window_is_eval_of_payoff() {
    // Both vertices have a zero payoff component, so every 1-window is penalized.
    assert_close(&start_values("k1-alternate", 1), &[5.0, 5.0]);
}

#[test]
fn period_multiples_equal_gval() {
    let (mdp, eval, bsccs) = example("k7-cycle");
    let b = &bsccs[0].1;
    let g = gval_bscc(b, &eval).unwrap();
    assert!((g - 0.125).abs() < 1e-12);
    for d in [8, 16, 24] {
        let dec = eval.decompose(d, &mdp.payoff_min());
        for s in 0..b.len() {
            assert!((window_expectation_dp(b, &dec, s).unwrap() - g).abs() < 1e-12);
        }
    }
}

#[test]
fn probability_mass_is_conserved() {
    for name in ["k1-random", "k2-random"] {
        let (mdp, eval, bsccs) = example(name);
        for (label, b) in &bsccs {
            let dec = eval.decompose(8, &mdp.payoff_min());
            for s in 0..b.len() {
                let t = window_expectation_dp_traced(b, &dec, s).unwrap();
                assert_eq!(t.mass.len(), 8, "{label}");
                for m in &t.mass {
                    assert!((m - 1.0).abs() < 1e-12, "{name} {label}: {:?}", t.mass);
                }
                assert!(t.live_keys.iter().all(|&k| k >= 1));
            }
        }
    }
}

#[test]
fn strategy_value_is_stationary_average() {
    let (mdp, spec, d) = gen_example1();
    let eval = Eval::bind(spec, &mdp).unwrap();
    let s = example1_strategies().into_iter().find(|s| s.name == "k2-aab").unwrap();
    let sigma = s.strategy(&mdp).unwrap();
    let dp = wval_strategy(&mdp, &sigma, &eval, d, Method::Dp).unwrap().value();
    let dfs = wval_strategy(&mdp, &sigma, &eval, d, Method::Dfs).unwrap().value();
    assert!((dp - 2.0).abs() < 1e-12);
    assert!((dfs - 2.0).abs() < 1e-12);
}

#[test]
fn brute_force_memoryless_example_is_alternation() {
    // Self-loops on A or B leave a payoff at zero (penalty 5); alternation scores 3.5.
    let (mdp, spec, d) = gen_example1();
    let eval = Eval::bind(spec, &mdp).unwrap();
    let bf = brute_force_memoryless(&mdp, &eval, d).unwrap();
    assert_eq!(bf.strategies, 4);
    assert!((bf.value - 3.5).abs() < 1e-12);
}

#[test]
fn interval_cap_passes_both_laws() {
    let eval = Eval::with_payoff_max("interval:3..5".parse().unwrap(), vec![9]).unwrap();
    let dec = eval.decompose(5, &[0]);
    let r = decomposability_check(&dec, &eval, &[vec![9], vec![0], vec![4]]);
    assert!(r.passed(), "{r:?}");
    assert_eq!(r.max_rep, 26);
    let r = decomposability_check_random(&dec, &eval, 3, 9, 20, 7);
    assert!(r.passed(), "{r:?}");
    assert!(r.max_rep <= 26);
}

#[test]
fn too_small_cap_breaks_faithfulness() {
    let eval = Eval::with_payoff_max("interval:3..5".parse().unwrap(), vec![9]).unwrap();
    let dec = Decomposable::with_caps(eval.clone(), 5, vec![Some(20)]);
    let r = decomposability_check(&dec, &eval, &[vec![9], vec![0], vec![4]]);
    assert!(r.faithfulness_failures > 0, "{r:?}");
}

#[test]
fn every_builtin_family_decomposes() {
    let specs = [
        "interval:1..3,0..2",
        "threshold:2.5",
        "l1target:1,2;penalty=4",
        "maxsum",
        "gadget:1.5,2;t=1",
        "abs",
        "positive;t=2",
    ];
    for s in specs {
        let spec: EvalSpec = s.parse().unwrap();
        let eval = Eval::with_payoff_max(spec, vec![4, 4]).unwrap();
        let dec = eval.decompose(4, &[0, 0]);
        let r = decomposability_check_random(&dec, &eval, 3, 4, 10, 11);
        assert!(r.passed(), "{s}: {r:?}");
    }
}

#[test]
fn dfs_respects_deadline() {
    let (_, eval, bsccs) = example("k1-random");
    let b = &bsccs[0].1;
    let r = window_expectation_dfs(b, &eval, 60, 0, Some(Instant::now()));
    assert!(matches!(r, Err(Error::Timeout)));
}

#[test]
fn zero_window_rejected() {
    let (_, eval, bsccs) = example("k1-random");
    assert!(matches!(
        window_expectation_dfs(&bsccs[0].1, &eval, 0, 0, None),
        Err(Error::ZeroWindow)
    ));
}
