//! Expected window evaluation inside a BSCC.
//!
//! Three evaluators share one value contract, the expectation of
//! `Eval(WMP_1[d,s], …, WMP_k[d,s])` where the window covers the `d` states
//! `s = s_0, …, s_{d−1}`:
//!
//! * [`window_expectation_dp`]: the forward dynamic program over
//!   `(state, representative)` pairs with two swapped tables, one start at a time.
//! * [`WindowPlan`]: the same dynamic program laid out once per component
//!   structure as a layered graph over `(state, representative)` keys, shared
//!   by all start states. Values are computed backwards (expected `e(ϱ)` to
//!   go) and gradients by a forward adjoint sweep. This is what the
//!   optimizer uses.
//! * [`window_expectation_dfs`]: explicit path enumeration applying `Eval`
//!   to raw payoff sums; no decomposition. Oracle and timing baseline.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::chain::{induced_chain, invariant_distribution, point_mass, tarjan_bsccs, Bscc};
use crate::error::{Error, Result};
use crate::eval::{Decomposable, Eval, Rep};
use crate::mdp::Mdp;
use crate::strategy::FrStrategy;

/// Per-step diagnostics of [`window_expectation_dp_traced`].
#[derive(Clone, Debug, PartialEq)]
pub struct DpTrace {
    pub value: f64,
    /// Number of live `(state, representative)` keys after seeding and after each step.
    pub live_keys: Vec<usize>,
    /// Total probability mass in the table at the same points.
    pub mass: Vec<f64>,
    /// Largest representative component seen.
    pub max_rep: i64,
}

fn check_start(bscc: &Bscc, d: usize, start: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::ZeroWindow);
    }
    if start >= bscc.len() {
        return Err(Error::StartNotInComponent(start));
    }
    Ok(())
}

/// Expected Eval over windows starting at local state `start`, by the
/// two-table dynamic program.
pub fn window_expectation_dp(bscc: &Bscc, dec: &Decomposable, start: usize) -> Result<f64> {
    window_expectation_dp_traced(bscc, dec, start).map(|t| t.value)
}

pub fn window_expectation_dp_traced(bscc: &Bscc, dec: &Decomposable, start: usize) -> Result<DpTrace> {
    let d = dec.horizon();
    check_start(bscc, d, start)?;
    let seed = dec.update(&dec.initial(), bscc.payoff(start));
    let mut max_rep = seed.iter().copied().max().unwrap_or(0);
    let mut map0: FxHashMap<(usize, Rep), f64> = FxHashMap::default();
    let mut map1: FxHashMap<(usize, Rep), f64> = FxHashMap::default();
    map0.insert((start, seed), 1.0);
    let mut live_keys = vec![1];
    let mut mass = vec![1.0];
    let mut next = Vec::with_capacity(dec.num_payoffs());
    for _ in 1..d {
        for ((v, rep), p) in &map0 {
            let (cols, probs) = bscc.row(*v);
            for (&u, &sigma) in cols.iter().zip(probs) {
                dec.update_into(rep, bscc.payoff(u), &mut next);
                max_rep = max_rep.max(next.iter().copied().max().unwrap_or(0));
                *map1.entry((u, next.clone())).or_insert(0.0) += p * sigma;
            }
        }
        std::mem::swap(&mut map0, &mut map1);
        map1.clear();
        live_keys.push(map0.len());
        mass.push(map0.values().sum());
    }
    // Hash iteration order is arbitrary; sum in key order for reproducibility.
    let mut items: Vec<_> = map0.into_iter().collect();
    items.sort_by(|a, b| a.0.cmp(&b.0));
    let value = items.iter().map(|((_, rep), p)| p * dec.finalize(rep)).sum();
    Ok(DpTrace {
        value,
        live_keys,
        mass,
        max_rep,
    })
}

/// Deadline checks happen every this many DFS nodes.
const DEADLINE_STRIDE: u64 = 1 << 14;

struct Dfs<'a> {
    bscc: &'a Bscc,
    eval: &'a Eval,
    d: usize,
    acc: Vec<i64>,
    nodes: u64,
    deadline: Option<Instant>,
}

impl Dfs<'_> {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes.is_multiple_of(DEADLINE_STRIDE) {
            if let Some(dl) = self.deadline {
                if Instant::now() >= dl {
                    return Err(Error::Timeout);
                }
            }
        }
        Ok(())
    }

    fn add(&mut self, v: usize, sign: i64) {
        for (a, p) in self.acc.iter_mut().zip(self.bscc.payoff(v)) {
            *a += sign * p;
        }
    }

    /// Accumulates `p · Eval` over all length-`d` paths extending the current one.
    fn value(&mut self, v: usize, p: f64, n: usize, rsl: &mut f64) -> Result<()> {
        self.tick()?;
        self.add(v, 1);
        if n < self.d {
            let (cols, probs) = self.bscc.row(v);
            for (&u, &sigma) in cols.iter().zip(probs) {
                self.value(u, p * sigma, n + 1, rsl)?;
            }
        } else {
            *rsl += p * self.eval.apply_sums(&self.acc, self.d);
        }
        self.add(v, -1);
        Ok(())
    }

    /// Returns the conditional expectation below the current node and adds
    /// `weight · ∂/∂σ` contributions into `grad` (indexed by local transition).
    fn value_grad(&mut self, v: usize, weight: f64, n: usize, grad: &mut [f64]) -> Result<f64> {
        self.tick()?;
        self.add(v, 1);
        let val = if n < self.d {
            let range = self.bscc.row_range(v);
            let (cols, probs) = self.bscc.row(v);
            let mut total = 0.0;
            for (j, (&u, &sigma)) in cols.iter().zip(probs).enumerate() {
                let child = self.value_grad(u, weight * sigma, n + 1, grad)?;
                grad[range.start + j] += weight * child;
                total += sigma * child;
            }
            total
        } else {
            self.eval.apply_sums(&self.acc, self.d)
        };
        self.add(v, -1);
        Ok(val)
    }
}

/// Expected Eval over windows starting at local state `start`, by explicit
/// enumeration of all paths of `d` states.
pub fn window_expectation_dfs(
    bscc: &Bscc,
    eval: &Eval,
    d: usize,
    start: usize,
    deadline: Option<Instant>,
) -> Result<f64> {
    check_start(bscc, d, start)?;
    let mut dfs = Dfs {
        bscc,
        eval,
        d,
        acc: vec![0; eval.num_payoffs()],
        nodes: 0,
        deadline,
    };
    let mut rsl = 0.0;
    dfs.value(start, 1.0, 1, &mut rsl)?;
    Ok(rsl)
}

/// Per-start expectations by enumeration, plus the gradient of
/// `Σ_s weights[s]·E_s` with respect to the local transition probabilities.
pub fn dfs_expectations_with_grad(
    bscc: &Bscc,
    eval: &Eval,
    d: usize,
    weights: &[f64],
    deadline: Option<Instant>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_start(bscc, d, 0)?;
    let mut dfs = Dfs {
        bscc,
        eval,
        d,
        acc: vec![0; eval.num_payoffs()],
        nodes: 0,
        deadline,
    };
    let mut grad = vec![0.0; bscc.num_transitions()];
    let mut values = Vec::with_capacity(bscc.len());
    for (s, &w) in weights.iter().enumerate().take(bscc.len()) {
        values.push(dfs.value_grad(s, w, 1, &mut grad)?);
    }
    Ok((values, grad))
}

/// One layer of a [`WindowPlan`]: keys and, for each key, the successor key
/// in the next layer for every local transition of the key's state.
#[derive(Clone, Debug, Default)]
struct PlanLayer {
    state: Vec<u32>,
    offs: Vec<u32>,
    next: Vec<u32>,
}

/// The window dynamic program of one component, laid out as layers of
/// `(state, representative)` keys reachable from any start state.
///
/// Layer 0 holds the seeded key of every start state, in state order. The
/// structure depends only on the component's support and the decomposition,
/// so it is reused across strategies with the same support.
#[derive(Clone, Debug)]
pub struct WindowPlan {
    n: usize,
    row_ptr: Vec<usize>,
    layers: Vec<PlanLayer>,
    final_values: Vec<f64>,
}

/// Backward values of a plan under concrete transition probabilities:
/// `values[t][key]` is the expected `e(ϱ)` at the end of the window given
/// that the window prefix of length `t + 1` ended in `key`.
#[derive(Clone, Debug)]
pub struct PlanValues {
    values: Vec<Vec<f64>>,
}

impl PlanValues {
    /// Expected window Eval per start state.
    pub fn expectations(&self) -> &[f64] {
        &self.values[0]
    }
}

impl WindowPlan {
    pub fn build(bscc: &Bscc, dec: &Decomposable) -> Result<WindowPlan> {
        let d = dec.horizon();
        if d == 0 {
            return Err(Error::ZeroWindow);
        }
        let n = bscc.len();
        // Distinct payoff vectors; representative updates depend only on these.
        let mut class_ids: FxHashMap<&[i64], u32> = FxHashMap::default();
        let class: Vec<u32> = (0..n)
            .map(|s| {
                let next = class_ids.len() as u32;
                *class_ids.entry(bscc.payoff(s)).or_insert(next)
            })
            .collect();
        let mut class_pay: Vec<&[i64]> = vec![&[]; class_ids.len()];
        for (pay, &c) in &class_ids {
            class_pay[c as usize] = pay;
        }

        let mut reps: Vec<Rep> = Vec::new();
        let mut rep_ids: FxHashMap<Rep, u32> = FxHashMap::default();
        let mut intern = |r: Rep, reps: &mut Vec<Rep>| -> u32 {
            if let Some(&id) = rep_ids.get(&r) {
                return id;
            }
            let id = reps.len() as u32;
            reps.push(r.clone());
            rep_ids.insert(r, id);
            id
        };
        let mut step_cache: FxHashMap<(u32, u32), u32> = FxHashMap::default();

        let init = dec.initial();
        let mut cur_state: Vec<u32> = (0..n as u32).collect();
        let mut cur_rep: Vec<u32> = (0..n)
            .map(|s| intern(dec.update(&init, bscc.payoff(s)), &mut reps))
            .collect();
        let mut layers = Vec::with_capacity(d);
        let mut buf = Vec::new();
        for _ in 1..d {
            let mut keys: FxHashMap<u64, u32> = FxHashMap::default();
            let (mut nxt_state, mut nxt_rep) = (Vec::new(), Vec::new());
            let mut offs = Vec::with_capacity(cur_state.len() + 1);
            let mut next = Vec::new();
            offs.push(0u32);
            for (&v, &r) in cur_state.iter().zip(&cur_rep) {
                let (cols, _) = bscc.row(v as usize);
                for &u in cols {
                    let c = class[u];
                    let r2 = match step_cache.get(&(r, c)) {
                        Some(&r2) => r2,
                        None => {
                            dec.update_into(&reps[r as usize], class_pay[c as usize], &mut buf);
                            let r2 = intern(buf.clone(), &mut reps);
                            step_cache.insert((r, c), r2);
                            r2
                        }
                    };
                    let key = ((u as u64) << 32) | r2 as u64;
                    let idx = *keys.entry(key).or_insert_with(|| {
                        nxt_state.push(u as u32);
                        nxt_rep.push(r2);
                        (nxt_state.len() - 1) as u32
                    });
                    next.push(idx);
                }
                offs.push(next.len() as u32);
            }
            layers.push(PlanLayer {
                state: std::mem::replace(&mut cur_state, nxt_state),
                offs,
                next,
            });
            cur_rep = nxt_rep;
        }
        let final_values = cur_rep.iter().map(|&r| dec.finalize(&reps[r as usize])).collect();
        layers.push(PlanLayer {
            state: cur_state,
            offs: Vec::new(),
            next: Vec::new(),
        });
        Ok(WindowPlan {
            n,
            row_ptr: bscc.row_ptr().to_vec(),
            layers,
            final_values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    /// Total number of keys over all layers.
    pub fn num_keys(&self) -> usize {
        self.layers.iter().map(|l| l.state.len()).sum()
    }

    /// Total number of key-to-key edges over all layers.
    pub fn num_edges(&self) -> usize {
        self.layers.iter().map(|l| l.next.len()).sum()
    }

    pub fn num_transitions(&self) -> usize {
        *self.row_ptr.last().unwrap_or(&0)
    }

    /// Backward sweep under the transition probabilities `probs` (indexed like
    /// the component's local transitions).
    pub fn values(&self, probs: &[f64]) -> PlanValues {
        assert_eq!(probs.len(), self.num_transitions());
        let depth = self.layers.len();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); depth];
        values[depth - 1] = self.final_values.clone();
        for t in (0..depth - 1).rev() {
            let layer = &self.layers[t];
            let later = &values[t + 1];
            let cur: Vec<f64> = layer
                .state
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let base = self.row_ptr[v as usize];
                    let nexts = &layer.next[layer.offs[k] as usize..layer.offs[k + 1] as usize];
                    nexts
                        .iter()
                        .enumerate()
                        .map(|(j, &nk)| probs[base + j] * later[nk as usize])
                        .sum()
                })
                .collect();
            values[t] = cur;
        }
        PlanValues { values }
    }

    /// Gradient of `Σ_s weights[s]·E_s` with respect to the transition
    /// probabilities, by a forward sweep of path weights.
    pub fn adjoint(&self, probs: &[f64], values: &PlanValues, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.n);
        let mut grad = vec![0.0; probs.len()];
        let mut w: Vec<f64> = weights.to_vec();
        for t in 0..self.layers.len() - 1 {
            let layer = &self.layers[t];
            let later = &values.values[t + 1];
            let mut w_next = vec![0.0; later.len()];
            for (k, &v) in layer.state.iter().enumerate() {
                let wk = w[k];
                if wk == 0.0 {
                    continue;
                }
                let base = self.row_ptr[v as usize];
                let nexts = &layer.next[layer.offs[k] as usize..layer.offs[k + 1] as usize];
                for (j, &nk) in nexts.iter().enumerate() {
                    grad[base + j] += wk * later[nk as usize];
                    w_next[nk as usize] += wk * probs[base + j];
                }
            }
            w = w_next;
        }
        grad
    }
}

/// Reuses plans across strategies whose components have identical support.
#[derive(Debug)]
pub struct PlanCache {
    dec: Decomposable,
    entries: Vec<(Vec<usize>, Vec<usize>, Vec<usize>, Arc<WindowPlan>)>,
}

impl PlanCache {
    pub fn new(dec: Decomposable) -> Self {
        PlanCache {
            dec,
            entries: Vec::new(),
        }
    }

    pub fn decomposition(&self) -> &Decomposable {
        &self.dec
    }

    pub fn get(&mut self, bscc: &Bscc) -> Result<Arc<WindowPlan>> {
        let hit = self.entries.iter().find(|(states, rows, cols, _)| {
            states == bscc.states() && rows == bscc.row_ptr() && cols == bscc.transition_targets()
        });
        if let Some((_, _, _, plan)) = hit {
            return Ok(Arc::clone(plan));
        }
        let plan = Arc::new(WindowPlan::build(bscc, &self.dec)?);
        self.entries.push((
            bscc.states().to_vec(),
            bscc.row_ptr().to_vec(),
            bscc.transition_targets().to_vec(),
            Arc::clone(&plan),
        ));
        Ok(plan)
    }
}

/// Which evaluator computes the per-start expectations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Dynamic programming over representatives.
    Dp,
    /// Path enumeration.
    Dfs,
}

/// `wval(C) = Σ_s 𝕀(s)·E[Eval(WMP[d,s])]` via the dynamic program.
pub fn wval_bscc(bscc: &Bscc, dec: &Decomposable) -> Result<f64> {
    let plan = WindowPlan::build(bscc, dec)?;
    let inv = invariant_distribution(bscc)?;
    let values = plan.values(bscc.transition_probs());
    Ok(dot(&inv.probs, values.expectations()))
}

/// `wval(C)` via path enumeration.
pub fn wval_bscc_dfs(bscc: &Bscc, eval: &Eval, d: usize, deadline: Option<Instant>) -> Result<f64> {
    let inv = invariant_distribution(bscc)?;
    let mut total = 0.0;
    for (s, &w) in inv.probs.iter().enumerate() {
        total += w * window_expectation_dfs(bscc, eval, d, s, deadline)?;
    }
    Ok(total)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `gval(C) = Eval(gmp_1, …, gmp_k)` with `gmp_i = Σ_s 𝕀(s)·Pay_i(s)`.
pub fn gval_bscc(bscc: &Bscc, eval: &Eval) -> Result<f64> {
    Ok(eval.apply(&global_mean_payoffs(bscc)?))
}

pub fn global_mean_payoffs(bscc: &Bscc) -> Result<Vec<f64>> {
    let inv = invariant_distribution(bscc)?;
    Ok((0..bscc.num_payoffs())
        .map(|i| {
            inv.probs
                .iter()
                .enumerate()
                .map(|(s, p)| p * bscc.payoff(s)[i] as f64)
                .sum()
        })
        .collect())
}

/// Values of every BSCC of `D^σ` and the minimizing one.
#[derive(Clone, Debug)]
pub struct WvalReport {
    pub bsccs: Vec<Bscc>,
    pub values: Vec<f64>,
    /// Index of the minimizing BSCC (first on ties).
    pub best: usize,
}

impl WvalReport {
    pub fn value(&self) -> f64 {
        self.values[self.best]
    }

    pub fn best_bscc(&self) -> &Bscc {
        &self.bsccs[self.best]
    }
}

/// Index of the minimum, first on ties.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// `wval^σ = min_i wval(C_i)` over the BSCCs of the induced chain.
pub fn wval_strategy(
    mdp: &Mdp,
    strategy: &FrStrategy,
    eval: &Eval,
    d: usize,
    method: Method,
) -> Result<WvalReport> {
    if d == 0 {
        return Err(Error::ZeroWindow);
    }
    let n = strategy.augmented().num_vertices();
    let chain = induced_chain(mdp, strategy, point_mass(n, 0))?;
    let bsccs = tarjan_bsccs(&chain);
    let dec = eval.decompose(d, &mdp.payoff_min());
    let values = bsccs
        .iter()
        .map(|b| match method {
            Method::Dp => wval_bscc(b, &dec),
            Method::Dfs => wval_bscc_dfs(b, eval, d, None),
        })
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(&values);
    Ok(WvalReport {
        bsccs,
        values,
        best,
    })
}

/// Outcome of a brute-force check of the two decomposition laws.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionReport {
    pub vectors_checked: usize,
    /// Full-length occupation vectors where `e(r(x)) ≠ Eval(WMP(x))`.
    pub faithfulness_failures: usize,
    /// Extensions `x →v y` where `r(y) ≠ m(r(x), v)`.
    pub compositionality_failures: usize,
    pub max_rep: i64,
}

impl DecompositionReport {
    pub fn passed(&self) -> bool {
        self.faithfulness_failures == 0 && self.compositionality_failures == 0
    }
}

/// Enumerates all occupation vectors `x` with `|x| ≤ d` over states with the
/// given payoffs and checks both decomposition laws against `raw`.
pub fn decomposability_check(dec: &Decomposable, raw: &Eval, payoffs: &[Vec<i64>]) -> DecompositionReport {
    fn rec(
        i: usize,
        left: usize,
        x: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if i == x.len() {
            out.push(x.clone());
            return;
        }
        for c in 0..=left {
            x[i] = c as u32;
            rec(i + 1, left - c, x, out);
        }
        x[i] = 0;
    }
    let d = dec.horizon();
    let mut all = Vec::new();
    rec(0, d, &mut vec![0; payoffs.len()], &mut all);
    let mut report = DecompositionReport {
        vectors_checked: all.len(),
        faithfulness_failures: 0,
        compositionality_failures: 0,
        max_rep: i64::MIN,
    };
    for x in &all {
        let len: u32 = x.iter().sum();
        let rx = dec.represent(x, payoffs);
        report.max_rep = report.max_rep.max(rx.iter().copied().max().unwrap_or(0));
        if len as usize == d {
            let sums: Vec<i64> = (0..raw.num_payoffs())
                .map(|i| x.iter().zip(payoffs).map(|(c, p)| *c as i64 * p[i]).sum())
                .collect();
            if (dec.finalize(&rx) - raw.apply_sums(&sums, d)).abs() > 1e-12 {
                report.faithfulness_failures += 1;
            }
        } else {
            for v in 0..payoffs.len() {
                let mut y = x.clone();
                y[v] += 1;
                if dec.represent(&y, payoffs) != dec.update(&rx, &payoffs[v]) {
                    report.compositionality_failures += 1;
                }
            }
        }
    }
    report
}

/// [`decomposability_check`] over `trials` random payoff tables with
/// `states` states and entries in `0..=max_pay`.
pub fn decomposability_check_random(
    dec: &Decomposable,
    raw: &Eval,
    states: usize,
    max_pay: i64,
    trials: usize,
    seed: u64,
) -> DecompositionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = dec.num_payoffs();
    let mut total = DecompositionReport {
        vectors_checked: 0,
        faithfulness_failures: 0,
        compositionality_failures: 0,
        max_rep: i64::MIN,
    };
    for _ in 0..trials {
        let payoffs: Vec<Vec<i64>> = (0..states)
            .map(|_| (0..k).map(|_| rng.gen_range(0..=max_pay)).collect())
            .collect();
        let r = decomposability_check(dec, raw, &payoffs);
        total.vectors_checked += r.vectors_checked;
        total.faithfulness_failures += r.faithfulness_failures;
        total.compositionality_failures += r.compositionality_failures;
        total.max_rep = total.max_rep.max(r.max_rep);
    }
    total
}
