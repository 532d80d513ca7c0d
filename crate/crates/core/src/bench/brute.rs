//! Exhaustive search over deterministic memoryless strategies of a graph.

use rayon::prelude::*;

use crate::chain::{tarjan_bsccs, MarkovChain};
use crate::error::{Error, Result};
use crate::eval::Eval;
use crate::mdp::Mdp;
use crate::window::{argmin, wval_bscc_dfs};

/// Largest number of strategies [`brute_force_memoryless`] will enumerate.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

/// The best deterministic memoryless strategy found.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    pub value: f64,
    /// Chosen successor of every vertex.
    pub witness: Vec<usize>,
    pub strategies: u128,
}

/// Minimum of `wval^σ` over all deterministic memoryless strategies of a graph,
/// with the windows evaluated by path enumeration. Ties go to the strategy with
/// the smallest mixed-radix index.
pub fn brute_force_memoryless(mdp: &Mdp, eval: &Eval, d: usize) -> Result<BruteForce> {
    if !mdp.is_graph() {
        return Err(Error::InvalidMdp("brute force needs a graph without stochastic vertices".into()));
    }
    if d == 0 {
        return Err(Error::ZeroWindow);
    }
    let degrees: Vec<u128> = (0..mdp.len()).map(|v| mdp.successors(v).len() as u128).collect();
    let total = degrees
        .iter()
        .try_fold(1u128, |acc, &k| acc.checked_mul(k).filter(|p| *p <= ENUMERATION_BUDGET))
        .ok_or_else(|| {
            let approx = degrees.iter().fold(1f64, |a, &k| a * k as f64);
            Error::Budget(approx.min(u128::MAX as f64) as u128, ENUMERATION_BUDGET)
        })?;
    let choice = |mut idx: u128| -> Vec<usize> {
        degrees
            .iter()
            .enumerate()
            .map(|(v, &k)| {
                let c = (idx % k) as usize;
                idx /= k;
                mdp.successors(v)[c]
            })
            .collect()
    };
    let value_of = |succ: &[usize]| -> Result<f64> {
        let rows = succ.iter().map(|&u| vec![(u, 1.0)]).collect();
        let payoffs = (0..mdp.len()).map(|v| mdp.payoff(v).to_vec()).collect();
        let mut init = vec![0.0; mdp.len()];
        init[0] = 1.0;
        let chain = MarkovChain::new(rows, payoffs, init)?;
        let values = tarjan_bsccs(&chain)
            .iter()
            .map(|b| wval_bscc_dfs(b, eval, d, None))
            .collect::<Result<Vec<_>>>()?;
        Ok(values[argmin(&values)])
    };
    let (value, idx) = (0..total as u64)
        .into_par_iter()
        .map(|i| value_of(&choice(i as u128)).map(|v| (v, i as u128)))
        .try_reduce(
            || (f64::INFINITY, u128::MAX),
            |a, b| Ok(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
        )?;
    Ok(BruteForce {
        value,
        witness: choice(idx),
        strategies: total,
    })
}
