//! Small random instances for property checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::eval::EvalSpec;
use crate::mdp::{Mdp, MdpBuilder, VertexKind};

/// A random MDP with `n` vertices and `k` payoff functions. Each vertex has
/// one to three successors; with probability `stochastic` a vertex is
/// stochastic with a random distribution. Payoffs lie in `pay_lo..=pay_hi`.
pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, k: usize, stochastic: f64, pay_lo: i64, pay_hi: i64) -> Mdp {
    let mut b = MdpBuilder::new(k);
    let mut kinds = Vec::with_capacity(n);
    for v in 0..n {
        let kind = if rng.gen_bool(stochastic) {
            VertexKind::Stochastic
        } else {
            VertexKind::Nondeterministic
        };
        kinds.push(kind);
        let pay: Vec<i64> = (0..k).map(|_| rng.gen_range(pay_lo..=pay_hi)).collect();
        b.vertex(&format!("v{v}"), kind, &pay);
    }
    let all: Vec<usize> = (0..n).collect();
    for (v, kind) in kinds.iter().enumerate() {
        let deg = rng.gen_range(1..=n.min(3));
        let succ: Vec<usize> = all.choose_multiple(rng, deg).copied().collect();
        match kind {
            VertexKind::Nondeterministic => {
                for u in succ {
                    b.edge(&format!("v{v}"), &format!("v{u}"));
                }
            }
            VertexKind::Stochastic => {
                let w: Vec<f64> = succ.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = w.iter().sum();
                let mut acc = 0.0;
                for (i, u) in succ.iter().enumerate() {
                    let p = if i + 1 == succ.len() { 1.0 - acc } else { w[i] / total };
                    acc += p;
                    b.prob_edge(&format!("v{v}"), &format!("v{u}"), p);
                }
            }
        }
    }
    b.build().expect("random MDP is valid by construction")
}

/// A random built-in evaluation spec over `k` payoffs whose payoffs lie in
/// `0..=pay_hi` (spec parameters are drawn on that scale).
pub fn random_eval_spec<R: Rng>(rng: &mut R, k: usize, pay_hi: i64) -> EvalSpec {
    let hi = pay_hi as f64;
    let half = |rng: &mut R| (rng.gen_range(0.0..hi) * 4.0).round() / 4.0;
    match rng.gen_range(0..7) {
        0 => EvalSpec::Interval(
            (0..k)
                .map(|_| {
                    let a = half(rng);
                    let b = half(rng);
                    (a.min(b), a.max(b))
                })
                .collect(),
        ),
        1 => EvalSpec::Threshold(half(rng).max(0.25)),
        2 => EvalSpec::L1Target {
            targets: (0..k).map(|_| half(rng)).collect(),
            penalty: rng.gen_range(1.0..10.0),
        },
        3 => EvalSpec::MaxSum,
        4 => EvalSpec::Gadget {
            thresholds: (0..k).map(|_| half(rng)).collect(),
            t: 1.0,
        },
        5 => EvalSpec::Abs,
        _ => EvalSpec::Positive { t: 2.0 },
    }
}
