//! Reverse-mode differentiation tape.
//!
//! Scalar primitives plus vector records: a scaled softmax group, the
//! stationary-distribution solve of a BSCC (adjoint method) and fused
//! window-expectation records, backed either by a [`WindowPlan`] or by path
//! enumeration.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::chain::{stationary_matrix, unit_rhs, Bscc};
use crate::eval::Eval;
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::window::{dfs_expectations_with_grad, PlanValues, WindowPlan};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(0);

/// A node on a [`Tape`] with its forward value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Var {
    tape: u64,
    idx: usize,
    value: f64,
}

impl Var {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.idx
    }
}

#[derive(Debug)]
enum Op {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Exp(usize),
    Log(usize),
    /// Adjoint flows to the first input when `first` is true.
    Max { a: usize, b: usize, first: bool },
    Relu(usize),
    Scale(usize, f64),
    Dot(Vec<usize>, Vec<usize>),
    Sum(Vec<usize>),
    Softmax { inputs: Vec<usize>, scale: f64 },
    Stationary(Box<StationaryRecord>),
    Window(Box<WindowRecord>),
    WindowDfs(Box<WindowDfsRecord>),
}

#[derive(Debug)]
struct StationaryRecord {
    inputs: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    lu: Lu,
}

#[derive(Debug)]
struct WindowRecord {
    inputs: Vec<usize>,
    plan: Arc<WindowPlan>,
    probs: Vec<f64>,
    values: PlanValues,
}

#[derive(Debug)]
struct WindowDfsRecord {
    inputs: Vec<usize>,
    bscc: Bscc,
    eval: Eval,
    d: usize,
    deadline: Option<Instant>,
}

/// One primitive application; outputs occupy nodes `out..out + len`.
#[derive(Debug)]
struct Record {
    op: Op,
    out: usize,
    len: usize,
}

/// Append-only record of primitive applications.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    values: Vec<f64>,
    records: Vec<Record>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints of every node with respect to one output.
#[derive(Clone, Debug)]
pub struct Gradients {
    tape: u64,
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> f64 {
        assert_eq!(v.tape, self.tape, "variable from another tape");
        self.adj[v.idx]
    }

    pub fn wrt_all(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(*v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            values: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    fn node(&mut self, value: f64) -> Var {
        self.values.push(value);
        Var {
            tape: self.id,
            idx: self.values.len() - 1,
            value,
        }
    }

    fn own(&self, v: Var) -> Result<usize> {
        if v.tape == self.id && v.idx < self.values.len() {
            Ok(v.idx)
        } else {
            Err(Error::ForeignVar)
        }
    }

    fn push(&mut self, op: Op, values: &[f64]) -> Vec<Var> {
        let out = self.values.len();
        let vars = values.iter().map(|&x| self.node(x)).collect();
        self.records.push(Record {
            op,
            out,
            len: values.len(),
        });
        vars
    }

    fn push1(&mut self, op: Op, value: f64) -> Var {
        self.push(op, &[value])[0]
    }

    /// A leaf (input) variable.
    pub fn var(&mut self, value: f64) -> Var {
        self.node(value)
    }

    pub fn vars(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&x| self.node(x)).collect()
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.node(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (i, j) = (self.own(a)?, self.own(b)?);
        Ok(self.push1(Op::Add(i, j), a.value + b.value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (i, j) = (self.own(a)?, self.own(b)?);
        Ok(self.push1(Op::Sub(i, j), a.value - b.value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (i, j) = (self.own(a)?, self.own(b)?);
        Ok(self.push1(Op::Mul(i, j), a.value * b.value))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (i, j) = (self.own(a)?, self.own(b)?);
        if b.value == 0.0 {
            return Err(Error::DivByZero);
        }
        Ok(self.push1(Op::Div(i, j), a.value / b.value))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let i = self.own(a)?;
        Ok(self.push1(Op::Exp(i), a.value.exp()))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let i = self.own(a)?;
        if a.value <= 0.0 {
            return Err(Error::LogDomain(a.value));
        }
        Ok(self.push1(Op::Log(i), a.value.ln()))
    }

    /// `max(a, b)`; on ties the adjoint goes to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        let (i, j) = (self.own(a)?, self.own(b)?);
        let first = a.value >= b.value;
        let v = if first { a.value } else { b.value };
        Ok(self.push1(Op::Max { a: i, b: j, first }, v))
    }

    /// `max(0, a)`; zero gradient at `a = 0`.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let i = self.own(a)?;
        Ok(self.push1(Op::Relu(i), a.value.max(0.0)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let i = self.own(a)?;
        Ok(self.push1(Op::Scale(i, c), a.value * c))
    }

    pub fn dot(&mut self, xs: &[Var], ys: &[Var]) -> Result<Var> {
        if xs.len() != ys.len() {
            return Err(Error::Dimension(format!("dot of {} and {} entries", xs.len(), ys.len())));
        }
        let a = xs.iter().map(|v| self.own(*v)).collect::<Result<Vec<_>>>()?;
        let b = ys.iter().map(|v| self.own(*v)).collect::<Result<Vec<_>>>()?;
        let v = xs.iter().zip(ys).map(|(x, y)| x.value * y.value).sum();
        Ok(self.push1(Op::Dot(a, b), v))
    }

    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let a = xs.iter().map(|v| self.own(*v)).collect::<Result<Vec<_>>>()?;
        let v = xs.iter().map(|x| x.value).sum();
        Ok(self.push1(Op::Sum(a), v))
    }

    /// `scale · softmax(xs)`, computed with max subtraction.
    pub fn softmax_group(&mut self, xs: &[Var], scale: f64) -> Result<Vec<Var>> {
        if xs.is_empty() {
            return Err(Error::Dimension("empty softmax group".into()));
        }
        let inputs = xs.iter().map(|v| self.own(*v)).collect::<Result<Vec<_>>>()?;
        if let Some(v) = xs.iter().find(|v| !v.value.is_finite()) {
            return Err(Error::NonFinite(format!("softmax input {}", v.value)));
        }
        let raw: Vec<f64> = xs.iter().map(|v| v.value).collect();
        let mut out = vec![0.0; raw.len()];
        crate::strategy::softmax_scaled(&raw, scale, &mut out);
        Ok(self.push(Op::Softmax { inputs, scale }, &out))
    }

    /// Stationary distribution of an irreducible chain given in CSR form
    /// whose transition probabilities are `probs`.
    pub fn linear_solve_stationary(
        &mut self,
        probs: &[Var],
        row_ptr: &[usize],
        cols: &[usize],
    ) -> Result<Vec<Var>> {
        let n = row_ptr.len() - 1;
        if probs.len() != cols.len() || n == 0 {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} transitions over {n} states",
                probs.len(),
                cols.len()
            )));
        }
        let inputs = probs.iter().map(|v| self.own(*v)).collect::<Result<Vec<_>>>()?;
        let p: Vec<f64> = probs.iter().map(|v| v.value).collect();
        let lu = Lu::factor(stationary_matrix(n, row_ptr, cols, &p), n)?;
        let x = lu.solve(&unit_rhs(n));
        let rec = StationaryRecord {
            inputs,
            row_ptr: row_ptr.to_vec(),
            cols: cols.to_vec(),
            lu,
        };
        Ok(self.push(Op::Stationary(Box::new(rec)), &x))
    }

    /// Expected window Eval per start state of the plan's component, given
    /// its transition probabilities.
    pub fn window_expectations(&mut self, plan: Arc<WindowPlan>, probs: &[Var]) -> Result<Vec<Var>> {
        if probs.len() != plan.num_transitions() {
            return Err(Error::Dimension(format!(
                "{} probabilities for a plan with {} transitions",
                probs.len(),
                plan.num_transitions()
            )));
        }
        let inputs = probs.iter().map(|v| self.own(*v)).collect::<Result<Vec<_>>>()?;
        let p: Vec<f64> = probs.iter().map(|v| v.value).collect();
        let values = plan.values(&p);
        let e = values.expectations().to_vec();
        let rec = WindowRecord {
            inputs,
            plan,
            probs: p,
            values,
        };
        Ok(self.push(Op::Window(Box::new(rec)), &e))
    }

    /// Same as [`Tape::window_expectations`] but by path enumeration; the
    /// backward pass enumerates the paths again. `probs` must carry the
    /// transition probabilities of `bscc`.
    pub fn window_expectations_dfs(
        &mut self,
        bscc: &Bscc,
        eval: &Eval,
        d: usize,
        probs: &[Var],
        deadline: Option<Instant>,
    ) -> Result<Vec<Var>> {
        if probs.len() != bscc.num_transitions() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} transitions",
                probs.len(),
                bscc.num_transitions()
            )));
        }
        let inputs = probs.iter().map(|v| self.own(*v)).collect::<Result<Vec<_>>>()?;
        let bscc = bscc.with_probs(probs.iter().map(|v| v.value).collect());
        let (e, _) = dfs_expectations_with_grad(&bscc, eval, d, &vec![0.0; bscc.len()], deadline)?;
        let rec = WindowDfsRecord {
            inputs,
            bscc,
            eval: eval.clone(),
            d,
            deadline,
        };
        Ok(self.push(Op::WindowDfs(Box::new(rec)), &e))
    }

    /// One reverse sweep from `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let o = self.own(output)?;
        let mut adj = vec![0.0; self.values.len()];
        adj[o] = 1.0;
        let val = &self.values;
        for rec in self.records.iter().rev() {
            if rec.out > o {
                continue;
            }
            let outs = rec.out..rec.out + rec.len;
            if adj[outs.clone()].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = adj[rec.out];
            match &rec.op {
                Op::Add(a, b) => {
                    adj[*a] += g;
                    adj[*b] += g;
                }
                Op::Sub(a, b) => {
                    adj[*a] += g;
                    adj[*b] -= g;
                }
                Op::Mul(a, b) => {
                    let (x, y) = (val[*a], val[*b]);
                    adj[*a] += g * y;
                    adj[*b] += g * x;
                }
                Op::Div(a, b) => {
                    let (x, y) = (val[*a], val[*b]);
                    adj[*a] += g / y;
                    adj[*b] -= g * x / (y * y);
                }
                Op::Exp(a) => adj[*a] += g * val[rec.out],
                Op::Log(a) => adj[*a] += g / val[*a],
                Op::Max { a, b, first } => {
                    if *first {
                        adj[*a] += g;
                    } else {
                        adj[*b] += g;
                    }
                }
                Op::Relu(a) => {
                    if val[*a] > 0.0 {
                        adj[*a] += g;
                    }
                }
                Op::Scale(a, c) => adj[*a] += g * c,
                Op::Dot(xs, ys) => {
                    for (x, y) in xs.iter().zip(ys) {
                        let (vx, vy) = (val[*x], val[*y]);
                        adj[*x] += g * vy;
                        adj[*y] += g * vx;
                    }
                }
                Op::Sum(xs) => {
                    for x in xs {
                        adj[*x] += g;
                    }
                }
                Op::Softmax { inputs, scale } => {
                    let y = &val[outs.clone()];
                    let ybar = &adj[outs.clone()];
                    let inner: f64 = y.iter().zip(ybar).map(|(a, b)| a * b).sum::<f64>() / scale;
                    let upd: Vec<f64> = y.iter().zip(ybar).map(|(yi, gi)| yi * (gi - inner)).collect();
                    for (i, u) in inputs.iter().zip(upd) {
                        adj[*i] += u;
                    }
                }
                Op::Stationary(r) => {
                    let x = &val[outs.clone()];
                    let lambda = r.lu.solve_transpose(&adj[outs.clone()]);
                    let n = x.len();
                    let mut upd = Vec::with_capacity(r.inputs.len());
                    for i in 0..n {
                        for t in r.row_ptr[i]..r.row_ptr[i + 1] {
                            let j = r.cols[t];
                            upd.push(if j + 1 < n { -lambda[j] * x[i] } else { 0.0 });
                        }
                    }
                    for (i, u) in r.inputs.iter().zip(upd) {
                        adj[*i] += u;
                    }
                }
                Op::Window(r) => {
                    let grad = r.plan.adjoint(&r.probs, &r.values, &adj[outs.clone()]);
                    for (i, u) in r.inputs.iter().zip(grad) {
                        adj[*i] += u;
                    }
                }
                Op::WindowDfs(r) => {
                    let (_, grad) =
                        dfs_expectations_with_grad(&r.bscc, &r.eval, r.d, &adj[outs.clone()], r.deadline)?;
                    for (i, u) in r.inputs.iter().zip(grad) {
                        adj[*i] += u;
                    }
                }
            }
        }
        Ok(Gradients { tape: self.id, adj })
    }
}
