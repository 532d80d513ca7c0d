use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use winmp::bench::random::{random_eval_spec, random_mdp};
use winmp::chain::point_mass;
use winmp::check::random_strategy;
use winmp::textfmt::{fmt_g, fmt_g17};
use winmp::{
    induced_chain, invariant_distribution, materialize_strategy, tarjan_bsccs, window_expectation_dfs,
    window_expectation_dp, Augmented, Eval, FrStrategy, Mdp, MemoryAllocation, StrategyParams, WindowPlan,
};

fn instance(seed: u64, memory: usize) -> (Mdp, Arc<Augmented>, FrStrategy, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = random_mdp(&mut rng, 3, 2, 0.3, 0, 5);
    let aug = Arc::new(Augmented::build(&mdp, &MemoryAllocation::full(mdp.len(), memory)).unwrap());
    let sigma = random_strategy(&mut rng, &mdp, aug.clone()).unwrap();
    (mdp, aug, sigma, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_plan_and_dfs_agree(seed in any::<u64>(), memory in 1usize..=2, d in 1usize..=5) {
        let (mdp, aug, sigma, mut rng) = instance(seed, memory);
        let eval = Eval::bind(random_eval_spec(&mut rng, 2, 5), &mdp).unwrap();
        let chain = induced_chain(&mdp, &sigma, point_mass(aug.num_vertices(), 0)).unwrap();
        let dec = eval.decompose(d, &mdp.payoff_min());
        for b in tarjan_bsccs(&chain) {
            let plan = WindowPlan::build(&b, &dec).unwrap();
            let values = plan.values(b.transition_probs());
            for s in 0..b.len() {
                let dp = window_expectation_dp(&b, &dec, s).unwrap();
                let dfs = window_expectation_dfs(&b, &eval, d, s, None).unwrap();
                prop_assert!((dp - dfs).abs() <= 1e-9);
                prop_assert!((values.expectations()[s] - dfs).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn invariant_distribution_is_stationary(seed in any::<u64>(), memory in 1usize..=3) {
        let (mdp, aug, sigma, _) = instance(seed, memory);
        let chain = induced_chain(&mdp, &sigma, point_mass(aug.num_vertices(), 0)).unwrap();
        for b in tarjan_bsccs(&chain) {
            let inv = invariant_distribution(&b).unwrap();
            prop_assert!((inv.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(inv.probs.iter().all(|p| *p >= -1e-12));
            prop_assert!(inv.residual(&b) < 1e-10);
        }
    }

    #[test]
    fn materialized_groups_sum_to_scale(seed in any::<u64>(), memory in 1usize..=3, spread in 0.1f64..20.0) {
        let (_, aug, _, _) = instance(seed, memory);
        let theta: Vec<f64> = (0..aug.num_edges()).map(|i| ((i as f64 + seed as f64 % 97.0) * 0.7).sin() * spread).collect();
        let sigma = materialize_strategy(&aug, &StrategyParams { theta }).unwrap();
        for g in aug.groups() {
            let total: f64 = g.edges.clone().map(|e| sigma.probs()[e]).sum();
            prop_assert!((total - g.scale).abs() < 1e-12);
        }
    }

    #[test]
    fn strategy_text_round_trips(seed in any::<u64>(), memory in 1usize..=3) {
        let (mdp, _, sigma, _) = instance(seed, memory);
        let again = FrStrategy::parse(&mdp, &sigma.to_text(&mdp)).unwrap();
        prop_assert_eq!(again.probs(), sigma.probs());
    }

    #[test]
    fn mdp_text_round_trips(seed in any::<u64>()) {
        let (mdp, _, _, _) = instance(seed, 1);
        let again = Mdp::parse(&mdp.to_text()).unwrap();
        prop_assert_eq!(again.to_text(), mdp.to_text());
    }

    #[test]
    fn g17_is_lossless(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn g12_is_within_rounding(x in -1e6f64..1e6) {
        let y: f64 = fmt_g(x, 12).parse().unwrap();
        prop_assert!((y - x).abs() <= x.abs() * 1e-11);
    }
}

#[test]
fn g12_examples() {
    assert_eq!(fmt_g(0.125, 12), "0.125");
    assert_eq!(fmt_g(1.0 / 3.0, 12), "0.333333333333");
    assert_eq!(fmt_g(1234567.0, 12), "1234567");
    assert_eq!(fmt_g(1e-7, 12), "1e-07");
    assert_eq!(fmt_g(0.0, 12), "0");
}
