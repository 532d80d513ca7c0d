//! Self-check suites exposed through `winmp check`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{Augmented, MemoryAllocation};
use crate::bench::random::{random_eval_spec, random_mdp};
use crate::bench::{
    b_formula, brute_force_memoryless, example1_strategies, gen_example1, gen_gadget, gen_ring3,
    optimal_ring_strategy, GadgetInstance,
};
use crate::chain::{induced_chain, invariant_distribution, point_mass, tarjan_bsccs};
use crate::error::{Error, Result};
use crate::eval::{Eval, EvalSpec};
use crate::mdp::Mdp;
use crate::strategy::{materialize_strategy, FrStrategy, StrategyParams};
use crate::synth::Objective;
use crate::window::{window_expectation_dfs, window_expectation_dp, wval_strategy, Method, WindowPlan};

pub const SUITES: [&str; 4] = ["smoke", "oracle", "grad", "rings"];

const EXACT_TOL: f64 = 1e-9;
const ROUNDED_TOL: f64 = 0.01;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckLine>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            writeln!(f, "{} {}: {verdict} -- {}", self.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn line(name: &str, pass: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        pass,
        detail,
    }
}

/// Runs the named suite; unknown names are a configuration error.
pub fn run_suite(name: &str) -> Result<SuiteReport> {
    let checks = match name {
        "smoke" => smoke()?,
        "oracle" => oracle()?,
        "grad" => grad()?,
        "rings" => rings()?,
        _ => {
            return Err(Error::Config(format!(
                "unknown suite `{name}` (expected one of {})",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        checks,
    })
}

fn smoke() -> Result<Vec<CheckLine>> {
    let (mdp, spec, d) = gen_example1();
    let eval = Eval::bind(spec, &mdp)?;
    let mut out = Vec::new();
    let reparsed = Mdp::parse(&mdp.to_text())?;
    out.push(line(
        "mdp round trip",
        reparsed.to_text() == mdp.to_text(),
        format!("{} vertices, {} edges", mdp.len(), mdp.edge_count()),
    ));
    for s in example1_strategies() {
        let sigma = s.strategy(&mdp)?;
        let dp = wval_strategy(&mdp, &sigma, &eval, d, Method::Dp)?.value();
        let dfs = wval_strategy(&mdp, &sigma, &eval, d, Method::Dfs)?.value();
        let tol = if s.exact { EXACT_TOL } else { ROUNDED_TOL };
        let again = FrStrategy::parse(&mdp, &sigma.to_text(&mdp))?;
        let rt = wval_strategy(&mdp, &again, &eval, d, Method::Dp)?.value();
        out.push(line(
            s.name,
            (dp - s.expected).abs() <= tol && (dp - dfs).abs() <= EXACT_TOL && (rt - dp).abs() <= EXACT_TOL,
            format!("dp {dp:.6}, dfs {dfs:.6}, expected {} ±{tol:e}", s.expected),
        ));
    }
    Ok(out)
}

/// A random strategy over `aug` with some edges switched off.
pub fn random_strategy(rng: &mut ChaCha8Rng, mdp: &Mdp, aug: Arc<Augmented>) -> Result<FrStrategy> {
    let mut probs = vec![0.0; aug.num_edges()];
    for g in aug.groups() {
        let mut w: Vec<f64> = g
            .edges
            .clone()
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.05..1.0) })
            .collect();
        if w.iter().all(|x| *x == 0.0) {
            let i = rng.gen_range(0..w.len());
            w[i] = 1.0;
        }
        let total: f64 = w.iter().sum();
        for (e, x) in g.edges.clone().zip(w) {
            probs[e] = x / total * g.scale;
        }
    }
    FrStrategy::new(mdp, aug, probs)
}

fn oracle() -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut starts = 0;
    for _ in 0..100 {
        let k = rng.gen_range(1..=2);
        let n = rng.gen_range(2..=4);
        let memory = rng.gen_range(1..=6 / n);
        let d = rng.gen_range(1..=6);
        let mdp = random_mdp(&mut rng, n, k, 0.3, 0, 6);
        let eval = Eval::bind(random_eval_spec(&mut rng, k, 6), &mdp)?;
        let aug = Arc::new(Augmented::build(&mdp, &MemoryAllocation::full(n, memory))?);
        let sigma = random_strategy(&mut rng, &mdp, aug.clone())?;
        let chain = induced_chain(&mdp, &sigma, point_mass(aug.num_vertices(), 0))?;
        let dec = eval.decompose(d, &mdp.payoff_min());
        for b in tarjan_bsccs(&chain) {
            let plan = WindowPlan::build(&b, &dec)?;
            let values = plan.values(b.transition_probs());
            for s in 0..b.len() {
                let dp = window_expectation_dp(&b, &dec, s)?;
                let dfs = window_expectation_dfs(&b, &eval, d, s, None)?;
                worst = worst.max((dp - dfs).abs()).max((values.expectations()[s] - dfs).abs());
                starts += 1;
            }
        }
    }
    let mut out = vec![line(
        "dp vs dfs",
        worst <= EXACT_TOL,
        format!("100 random triples, {starts} start states, max difference {worst:e}"),
    )];
    let instances = [
        GadgetInstance::SubsetSum {
            nums: vec![3, 5, 7],
            target: 8,
        },
        GadgetInstance::SubsetSum {
            nums: vec![2, 4],
            target: 5,
        },
        GadgetInstance::Knapsack {
            items: vec![(3, 2), (4, 3), (2, 4)],
            value: 7,
            capacity: 5,
        },
        GadgetInstance::Knapsack {
            items: vec![(3, 2), (4, 3), (2, 4)],
            value: 7,
            capacity: 4,
        },
        GadgetInstance::Sat {
            num_vars: 2,
            clauses: vec![vec![1, -2], vec![2]],
        },
        GadgetInstance::Sat {
            num_vars: 1,
            clauses: vec![vec![1], vec![-1]],
        },
    ];
    let mut wrong = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let g = gen_gadget(inst)?;
        let eval = Eval::bind(g.eval.clone(), &g.mdp)?;
        let bf = brute_force_memoryless(&g.mdp, &eval, g.d)?;
        if inst.is_yes() != (bf.value == 0.0) {
            wrong.push(i);
        }
    }
    out.push(line(
        "gadget brute force",
        wrong.is_empty(),
        format!("{} instances, mismatches {wrong:?}", instances.len()),
    ));
    Ok(out)
}

/// `wval^σ` at `θ` via per-state DP tables, independent of the tape.
fn reference_wval(mdp: &Mdp, aug: &Arc<Augmented>, eval: &Eval, d: usize, theta: &[f64]) -> Result<f64> {
    let sigma = materialize_strategy(aug, &StrategyParams { theta: theta.to_vec() })?;
    let chain = induced_chain(mdp, &sigma, point_mass(aug.num_vertices(), 0))?;
    let dec = eval.decompose(d, &mdp.payoff_min());
    let mut best = f64::INFINITY;
    for b in tarjan_bsccs(&chain) {
        let inv = invariant_distribution(&b)?;
        let mut v = 0.0;
        for s in 0..b.len() {
            v += inv.probs[s] * window_expectation_dp(&b, &dec, s)?;
        }
        best = best.min(v);
    }
    Ok(best)
}

fn grad() -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut bad = Vec::new();
    let mut coords = 0;
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let k = rng.gen_range(1..=2);
        let n = rng.gen_range(2..=4);
        let memory = rng.gen_range(1..=8 / n);
        let mdp = random_mdp(&mut rng, n, k, 0.3, 0, 6);
        let spec = random_eval_spec(&mut rng, k, 6);
        let d = rng.gen_range(1..=6);
        let eval = Eval::bind(spec, &mdp)?;
        let obj = Objective::new(&mdp, &MemoryAllocation::full(n, memory), eval.clone(), d)?;
        let aug = obj.augmented().clone();
        for point in 0..5 {
            let theta: Vec<f64> = (0..obj.num_params()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g = obj.evaluate(&theta, true, Method::Dp, None)?.grad;
            for i in 0..theta.len() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += FD_STEP;
                dn[i] -= FD_STEP;
                let fd = (reference_wval(&mdp, &aug, &eval, d, &up)? - reference_wval(&mdp, &aug, &eval, d, &dn)?)
                    / (2.0 * FD_STEP);
                coords += 1;
                let err = (g[i] - fd).abs();
                if err > FD_ABS_FLOOR {
                    let rel = err / g[i].abs().max(fd.abs());
                    worst = worst.max(rel);
                    if rel > FD_REL_TOL {
                        bad.push(format!("instance {inst} point {point} coordinate {i}"));
                    }
                }
            }
        }
    }
    Ok(vec![line(
        "finite differences",
        bad.is_empty(),
        format!(
            "100 parameter points, {coords} coordinates, worst relative error {worst:e}, {} bad {:?}",
            bad.len(),
            bad.iter().take(5).collect::<Vec<_>>()
        ),
    )])
}

fn rings() -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    for ell in (2..=20).step_by(2) {
        let mdp = gen_ring3(ell)?;
        let mut failures = Vec::new();
        for d in (2..=20).step_by(2) {
            let b = b_formula(ell, d)?;
            let sigma = FrStrategy::parse(&mdp, &optimal_ring_strategy(ell, d)?)?;
            let tight = Eval::bind(EvalSpec::Threshold(b), &mdp)?;
            let above = Eval::bind(EvalSpec::Threshold(b + 0.01), &mdp)?;
            let v = wval_strategy(&mdp, &sigma, &tight, d, Method::Dp)?.value();
            let w = wval_strategy(&mdp, &sigma, &above, d, Method::Dp)?.value();
            if v.abs() > EXACT_TOL || w <= 0.0 {
                failures.push(format!("d={d}: {v:e}/{w:e}"));
            }
        }
        out.push(line(
            &format!("ring ell={ell}"),
            failures.is_empty(),
            format!("d = 2..20 even, failures {failures:?}"),
        ));
    }
    Ok(out)
}
