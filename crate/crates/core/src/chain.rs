//! Markov chains induced by FR strategies, their bottom strongly connected
//! components, and invariant distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::mdp::Mdp;
use crate::strategy::FrStrategy;

const ROW_TOL: f64 = 1e-9;

/// A finite Markov chain stored in compressed sparse row form.
///
/// Every stored entry is a *transition*; transitions keep their index so
/// that derived objects (BSCCs, gradients) can refer back to the strategy
/// edge they came from. Zero-probability transitions may be stored and are
/// ignored by the graph algorithms.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    prob: Vec<f64>,
    payoffs: Vec<Vec<i64>>,
    init: Vec<f64>,
}

impl MarkovChain {
    pub fn new(rows: Vec<Vec<(usize, f64)>>, payoffs: Vec<Vec<i64>>, init: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut col = Vec::new();
        let mut prob = Vec::new();
        for row in rows {
            for (c, p) in row {
                col.push(c);
                prob.push(p);
            }
            row_ptr.push(col.len());
        }
        let chain = MarkovChain {
            row_ptr,
            col,
            prob,
            payoffs,
            init,
        };
        chain.check(n)?;
        Ok(chain)
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.payoffs.len() != n || self.init.len() != n {
            return Err(Error::Dimension(format!(
                "{n} states but {} payoff rows and {} initial entries",
                self.payoffs.len(),
                self.init.len()
            )));
        }
        if let Some(&c) = self.col.iter().find(|&&c| c >= n) {
            return Err(Error::Dimension(format!("transition to unknown state {c}")));
        }
        for s in 0..n {
            let sum: f64 = self.prob[self.row_ptr[s]..self.row_ptr[s + 1]].iter().sum();
            if (sum - 1.0).abs() > ROW_TOL || self.row(s).1.iter().any(|p| *p < 0.0) {
                return Err(Error::Dimension(format!("row {s} is not a distribution (sum {sum})")));
            }
        }
        let total: f64 = self.init.iter().sum();
        if (total - 1.0).abs() > ROW_TOL {
            return Err(Error::Dimension(format!("initial distribution sums to {total}")));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Successor states and probabilities of `s`.
    pub fn row(&self, s: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[s]..self.row_ptr[s + 1];
        (&self.col[r.clone()], &self.prob[r])
    }

    /// Index of the first transition of state `s`.
    pub fn row_start(&self, s: usize) -> usize {
        self.row_ptr[s]
    }

    pub fn payoff(&self, s: usize) -> &[i64] {
        &self.payoffs[s]
    }

    pub fn initial(&self) -> &[f64] {
        &self.init
    }

    /// Dense probability `Prob(s, t)`.
    pub fn prob(&self, s: usize, t: usize) -> f64 {
        let (cols, probs) = self.row(s);
        cols.iter().zip(probs).filter(|(c, _)| **c == t).map(|(_, p)| p).sum()
    }
}

/// Builds the chain `D^σ` over augmented vertices. Transition `e` of the
/// chain is augmented edge `e` of the strategy.
pub fn induced_chain(mdp: &Mdp, strategy: &FrStrategy, init: Vec<f64>) -> Result<MarkovChain> {
    let aug = strategy.augmented();
    let n = aug.num_vertices();
    if init.len() != n {
        return Err(Error::Dimension(format!(
            "initial distribution has {} entries for {n} augmented vertices",
            init.len()
        )));
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    for i in 0..n {
        row_ptr.push(aug.out_edges(i).start);
    }
    row_ptr.push(aug.num_edges());
    let chain = MarkovChain {
        row_ptr,
        col: aug.edges().iter().map(|e| e.1).collect(),
        prob: strategy.probs().to_vec(),
        payoffs: aug.vertices().iter().map(|a| mdp.payoff(a.vertex).to_vec()).collect(),
        init,
    };
    chain.check(n)?;
    Ok(chain)
}

/// Point mass on state `s` of an `n`-state chain.
pub fn point_mass(n: usize, s: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[s] = 1.0;
    v
}

/// A bottom strongly connected component with its restricted transition matrix.
///
/// Local state `i` is chain state `states[i]`; only positive transitions are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct Bscc {
    states: Vec<usize>,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    prob: Vec<f64>,
    trans: Vec<usize>,
    payoffs: Vec<Vec<i64>>,
}

impl Bscc {
    /// Restricts `chain` to `states` (sorted ascending); fails if the set is not closed.
    pub fn from_states(chain: &MarkovChain, mut states: Vec<usize>) -> Result<Bscc> {
        states.sort_unstable();
        states.dedup();
        let mut local = vec![usize::MAX; chain.num_states()];
        for (i, &s) in states.iter().enumerate() {
            local[s] = i;
        }
        let mut row_ptr = vec![0];
        let (mut col, mut prob, mut trans) = (Vec::new(), Vec::new(), Vec::new());
        for &s in &states {
            let (cols, probs) = chain.row(s);
            for (j, (&c, &p)) in cols.iter().zip(probs).enumerate() {
                if p <= 0.0 {
                    continue;
                }
                if local[c] == usize::MAX {
                    return Err(Error::Dimension(format!(
                        "state set is not closed: {s} -> {c} leaves it"
                    )));
                }
                col.push(local[c]);
                prob.push(p);
                trans.push(chain.row_start(s) + j);
            }
            row_ptr.push(col.len());
        }
        Ok(Bscc {
            payoffs: states.iter().map(|&s| chain.payoff(s).to_vec()).collect(),
            states,
            row_ptr,
            col,
            prob,
            trans,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Chain state ids, ascending.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn local_index(&self, state: usize) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }

    /// Local successors, probabilities and the range of local transition ids for state `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col[r.clone()], &self.prob[r])
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Number of (positive) local transitions.
    pub fn num_transitions(&self) -> usize {
        self.col.len()
    }

    /// Source, target and probability of local transition `t`.
    pub fn transition(&self, t: usize) -> (usize, usize, f64) {
        let src = self.row_ptr.partition_point(|&p| p <= t) - 1;
        (src, self.col[t], self.prob[t])
    }

    pub fn transition_probs(&self) -> &[f64] {
        &self.prob
    }

    pub fn transition_targets(&self) -> &[usize] {
        &self.col
    }

    /// Chain transition index of each local transition.
    pub fn chain_transitions(&self) -> &[usize] {
        &self.trans
    }

    /// Payoff vector of local state `i`.
    pub fn payoff(&self, i: usize) -> &[i64] {
        &self.payoffs[i]
    }

    pub fn num_payoffs(&self) -> usize {
        self.payoffs.first().map_or(0, Vec::len)
    }

    /// Same structure with replaced transition probabilities.
    pub fn with_probs(&self, prob: Vec<f64>) -> Bscc {
        assert_eq!(prob.len(), self.prob.len());
        Bscc {
            prob,
            ..self.clone()
        }
    }

    /// Transitions grouped by their source state (CSR pointer array).
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }
}

/// Strongly connected components of the positive-probability graph, via Tarjan's algorithm.
///
/// Iterative to avoid deep recursion on long cycles.
pub fn tarjan_scc(chain: &MarkovChain) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = chain.num_states();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;
    // (state, next row position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos == 0 && index[v] == UNVISITED {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let (cols, probs) = chain.row(v);
            let mut descended = false;
            while *pos < cols.len() {
                let (w, p) = (cols[*pos], probs[*pos]);
                *pos += 1;
                if p <= 0.0 {
                    continue;
                }
                if index[w] == UNVISITED {
                    call.push((w, 0));
                    descended = true;
                    break;
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            }
            if descended {
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// All bottom SCCs, ordered by their least state.
pub fn tarjan_bsccs(chain: &MarkovChain) -> Vec<Bscc> {
    let comps = tarjan_scc(chain);
    let mut comp_of = vec![0usize; chain.num_states()];
    for (c, comp) in comps.iter().enumerate() {
        for &s in comp {
            comp_of[s] = c;
        }
    }
    let mut bottom: Vec<&Vec<usize>> = comps
        .iter()
        .enumerate()
        .filter(|(c, comp)| {
            comp.iter().all(|&s| {
                let (cols, probs) = chain.row(s);
                cols.iter().zip(probs).all(|(&t, &p)| p <= 0.0 || comp_of[t] == *c)
            })
        })
        .map(|(_, comp)| comp)
        .collect();
    bottom.sort_by_key(|comp| comp[0]);
    bottom
        .into_iter()
        .map(|comp| Bscc::from_states(chain, comp.clone()).expect("bottom SCC is closed"))
        .collect()
}

/// Stationary distribution over the local states of a BSCC.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantDistribution {
    pub probs: Vec<f64>,
}

impl InvariantDistribution {
    /// Max-norm of `𝕀·P − 𝕀`.
    pub fn residual(&self, bscc: &Bscc) -> f64 {
        let mut next = vec![0.0; bscc.len()];
        for i in 0..bscc.len() {
            let (cols, probs) = bscc.row(i);
            for (&j, &p) in cols.iter().zip(probs) {
                next[j] += self.probs[i] * p;
            }
        }
        next.iter()
            .zip(&self.probs)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Dense stationarity system: balance rows `x_j − Σ_i x_i·P(i,j) = 0` for
/// all but the last state, and the normalization row `Σ x_i = 1` in its place.
pub(crate) fn stationary_matrix(n: usize, row_ptr: &[usize], cols: &[usize], probs: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for j in 0..n.saturating_sub(1) {
        a[j * n + j] = -1.0;
    }
    for i in 0..n {
        for t in row_ptr[i]..row_ptr[i + 1] {
            let j = cols[t];
            if j + 1 < n {
                a[j * n + i] += probs[t];
            }
        }
    }
    for x in &mut a[(n - 1) * n..] {
        *x = 1.0;
    }
    a
}

pub(crate) fn unit_rhs(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    b
}

/// Solves `𝕀 = 𝕀·P`, `Σ𝕀 = 1` by LU with partial pivoting.
pub fn invariant_distribution(bscc: &Bscc) -> Result<InvariantDistribution> {
    let n = bscc.len();
    if n == 0 {
        return Err(Error::Dimension("empty component".into()));
    }
    let a = stationary_matrix(n, bscc.row_ptr(), bscc.transition_targets(), bscc.transition_probs());
    let lu = Lu::factor(a, n)?;
    Ok(InvariantDistribution {
        probs: lu.solve(&unit_rhs(n)),
    })
}

/// Samples a run of `steps` states from the initial distribution.
pub fn simulate(chain: &MarkovChain, steps: usize, seed: u64) -> Vec<usize> {
    fn sample(rng: &mut ChaCha8Rng, cols: &[usize], probs: &[f64]) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (&c, &p) in cols.iter().zip(probs) {
            acc += p;
            if u < acc {
                return c;
            }
        }
        // rounding: fall back to the last positive entry
        cols.iter()
            .zip(probs)
            .rev()
            .find(|(_, p)| **p > 0.0)
            .map(|(c, _)| *c)
            .expect("row has positive mass")
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = chain.num_states();
    let all: Vec<usize> = (0..n).collect();
    let mut run = Vec::with_capacity(steps);
    if steps == 0 {
        return run;
    }
    let mut s = sample(&mut rng, &all, chain.initial());
    run.push(s);
    for _ in 1..steps {
        let (cols, probs) = chain.row(s);
        s = sample(&mut rng, cols, probs);
        run.push(s);
    }
    run
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(rows: Vec<Vec<(usize, f64)>>) -> MarkovChain {
        let n = rows.len();
        MarkovChain::new(rows, vec![vec![0]; n], point_mass(n, 0)).unwrap()
    }

    #[test]
    fn deterministic_cycle_is_one_bscc() {
        let c = chain((0..8).map(|i| vec![((i + 1) % 8, 1.0)]).collect());
        let b = tarjan_bsccs(&c);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 8);
        let inv = invariant_distribution(&b[0]).unwrap();
        assert!(inv.probs.iter().all(|p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn two_absorbing_states() {
        let c = chain(vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]]);
        let b = tarjan_bsccs(&c);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].states(), &[1]);
        assert_eq!(b[1].states(), &[2]);
    }

    #[test]
    fn zero_entries_ignored() {
        let c = chain(vec![vec![(0, 1.0), (1, 0.0)], vec![(0, 1.0)]]);
        let b = tarjan_bsccs(&c);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].states(), &[0]);
    }

    #[test]
    fn two_state_stationary() {
        let c = chain(vec![vec![(0, 0.73), (1, 0.27)], vec![(0, 1.0)]]);
        let b = &tarjan_bsccs(&c)[0];
        let inv = invariant_distribution(b).unwrap();
        assert!((inv.probs[0] - 1.0 / 1.27).abs() < 1e-12);
        assert!((inv.probs[1] - 0.27 / 1.27).abs() < 1e-12);
        assert!(inv.residual(b) < 1e-12);
    }

    #[test]
    fn reducible_input_is_singular() {
        let c = chain(vec![vec![(0, 1.0)], vec![(1, 1.0)]]);
        let whole = Bscc::from_states(&c, vec![0, 1]).unwrap();
        assert!(matches!(invariant_distribution(&whole), Err(Error::Singular { .. })));
    }

    #[test]
    fn open_set_rejected() {
        let c = chain(vec![vec![(1, 1.0)], vec![(0, 1.0)]]);
        assert!(Bscc::from_states(&c, vec![0]).is_err());
    }

    #[test]
    fn simulate_cycle() {
        let c = chain((0..3).map(|i| vec![((i + 1) % 3, 1.0)]).collect());
        assert_eq!(simulate(&c, 7, 42), vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(simulate(&c, 1, 5), vec![0]);
    }

    #[test]
    fn bad_row_rejected() {
        let r = MarkovChain::new(vec![vec![(0, 0.9)]], vec![vec![0]], vec![1.0]);
        assert!(r.is_err());
    }
}
