//! Strategy synthesis: log-uniform initialization, softmax materialization,
//! BSCC-minimal wval, reverse-mode gradient and ADAM, with best tracking
//! across steps and restarts.

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::{Augmented, MemoryAllocation};
use crate::chain::{induced_chain, point_mass, tarjan_bsccs};
use crate::error::{Error, Result};
use crate::eval::Eval;
use crate::grad::{Tape, Var};
use crate::mdp::Mdp;
use crate::strategy::{materialize_strategy, FrStrategy, StrategyParams};
use crate::window::{argmin, gval_bscc, wval_strategy, Method, PlanCache};

/// Hyperparameters of a synthesis run.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Memory size `K`.
    pub memory: usize,
    /// Custom allocation; `None` assigns all `K` states to every vertex.
    pub allocation: Option<MemoryAllocation>,
    pub init_a: f64,
    pub init_b: f64,
    /// Gradients with a larger Euclidean norm are rescaled to this norm.
    pub clip_norm: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            steps: 1000,
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            restarts: 1,
            seed: 0,
            memory: 1,
            allocation: None,
            init_a: 1e-3,
            init_b: 10.0,
            clip_norm: 1e3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.memory == 0 {
            return bad("memory size must be at least 1");
        }
        if !(self.init_a > 0.0 && self.init_a < self.init_b && self.init_b.is_finite()) {
            return bad("initialization bounds must satisfy 0 < a < b");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("ADAM betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0 && self.clip_norm > 0.0) {
            return bad("epsilon and clip norm must be positive");
        }
        if let Some(a) = &self.allocation {
            if a.size() != self.memory {
                return bad("allocation size differs from the memory size");
            }
        }
        Ok(())
    }

    pub fn allocation_for(&self, mdp: &Mdp) -> Result<MemoryAllocation> {
        match &self.allocation {
            Some(a) => {
                a.validate(mdp)?;
                Ok(a.clone())
            }
            None => Ok(MemoryAllocation::full(mdp.len(), self.memory)),
        }
    }
}

/// `θ_i = exp(u_i)` with `u_i ~ U[ln a, ln b)`, one per augmented edge.
pub fn init_params_loguniform(aug: &Augmented, seed: u64, a: f64, b: f64) -> Result<StrategyParams> {
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(Error::Config(format!("invalid log-uniform bounds [{a}, {b}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (a.ln(), b.ln());
    Ok(StrategyParams {
        theta: (0..aug.num_edges()).map(|_| rng.gen_range(lo..hi).exp()).collect(),
    })
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected ADAM descent step. A non-finite gradient leaves
/// parameters and state untouched.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradient entries, {} moments",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} = {}", grad[i])));
    }
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// Rescales `g` to Euclidean norm at most `max_norm`.
pub fn clip_gradient(g: &mut [f64], max_norm: f64) {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

/// Result of evaluating the objective at one parameter point.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `wval^σ`.
    pub wval: f64,
    /// Per-BSCC values, BSCCs ordered by least state.
    pub bscc_values: Vec<f64>,
    pub best_bscc: usize,
    /// Chain states (augmented vertex indices) of the minimizing BSCC.
    pub best_states: Vec<usize>,
    /// `∂wval^σ/∂θ`, empty when not requested.
    pub grad: Vec<f64>,
}

/// `θ ↦ wval^σ(θ)` for a fixed MDP, allocation, Eval and window length.
/// Window plans are cached across calls and shared between threads.
#[derive(Debug)]
pub struct Objective<'a> {
    mdp: &'a Mdp,
    aug: Arc<Augmented>,
    eval: Eval,
    d: usize,
    plans: Mutex<PlanCache>,
}

impl<'a> Objective<'a> {
    pub fn new(mdp: &'a Mdp, alloc: &MemoryAllocation, eval: Eval, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::ZeroWindow);
        }
        if eval.num_payoffs() != mdp.num_payoffs() {
            return Err(Error::Dimension(format!(
                "Eval over {} payoffs for an MDP with {}",
                eval.num_payoffs(),
                mdp.num_payoffs()
            )));
        }
        let aug = Arc::new(Augmented::build(mdp, alloc)?);
        let dec = eval.decompose(d, &mdp.payoff_min());
        Ok(Objective {
            mdp,
            aug,
            eval,
            d,
            plans: Mutex::new(PlanCache::new(dec)),
        })
    }

    pub fn augmented(&self) -> &Arc<Augmented> {
        &self.aug
    }

    pub fn num_params(&self) -> usize {
        self.aug.num_edges()
    }

    pub fn window(&self) -> usize {
        self.d
    }

    /// Value (and optionally gradient) at `theta`. With [`Method::Dfs`] the
    /// windows are enumerated, checking `deadline` along the way.
    pub fn evaluate(
        &self,
        theta: &[f64],
        with_grad: bool,
        method: Method,
        deadline: Option<Instant>,
    ) -> Result<StepOutput> {
        if theta.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for {} augmented edges",
                theta.len(),
                self.num_params()
            )));
        }
        let mut tape = Tape::new();
        let th = tape.vars(theta);
        let mut probs: Vec<Option<Var>> = vec![None; th.len()];
        for g in self.aug.groups() {
            let out = tape.softmax_group(&th[g.edges.clone()], g.scale)?;
            for (e, v) in g.edges.clone().zip(out) {
                probs[e] = Some(v);
            }
        }
        let probs: Vec<Var> = probs
            .into_iter()
            .map(|v| v.expect("softmax groups cover every augmented edge"))
            .collect();
        let sigma = FrStrategy::from_parts_unchecked(
            Arc::clone(&self.aug),
            probs.iter().map(|v| v.value()).collect(),
        );
        let chain = induced_chain(self.mdp, &sigma, point_mass(self.aug.num_vertices(), 0))?;
        let bsccs = tarjan_bsccs(&chain);
        let mut outputs = Vec::with_capacity(bsccs.len());
        for b in &bsccs {
            let p: Vec<Var> = b.chain_transitions().iter().map(|&t| probs[t]).collect();
            let inv = tape.linear_solve_stationary(&p, b.row_ptr(), b.transition_targets())?;
            let e = match method {
                Method::Dp => {
                    let plan = self.plans.lock().expect("plan cache poisoned").get(b)?;
                    tape.window_expectations(plan, &p)?
                }
                Method::Dfs => tape.window_expectations_dfs(b, &self.eval, self.d, &p, deadline)?,
            };
            outputs.push(tape.dot(&inv, &e)?);
        }
        let bscc_values: Vec<f64> = outputs.iter().map(|v| v.value()).collect();
        let best = argmin(&bscc_values);
        let grad = if with_grad {
            tape.backward(outputs[best])?.wrt_all(&th)
        } else {
            Vec::new()
        };
        Ok(StepOutput {
            wval: bscc_values[best],
            best_bscc: best,
            best_states: bsccs[best].states().to_vec(),
            bscc_values,
            grad,
        })
    }
}

/// One row of the optimization trace: `wval` at the parameters used in `step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub restart: usize,
    pub wval: f64,
}

/// Something that went wrong in a restart without aborting the whole run.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthEvent {
    pub restart: usize,
    pub step: usize,
    pub message: String,
    /// Whether the restart stopped here.
    pub aborted: bool,
}

/// Outcome of [`synthesize`].
#[derive(Clone, Debug)]
pub struct SynthResult {
    pub strategy: FrStrategy,
    pub params: StrategyParams,
    pub wval: f64,
    /// Index of the minimizing BSCC of the best strategy.
    pub best_bscc: usize,
    /// Augmented vertex indices of that BSCC.
    pub bscc_states: Vec<usize>,
    pub restart: usize,
    pub step: usize,
    pub trace: Vec<TraceEntry>,
    pub events: Vec<SynthEvent>,
    pub config: SynthConfig,
}

struct RestartOutcome {
    best: Option<(f64, usize, Vec<f64>, usize, Vec<usize>)>,
    trace: Vec<TraceEntry>,
    events: Vec<SynthEvent>,
}

fn run_restart(obj: &Objective, cfg: &SynthConfig, restart: usize) -> RestartOutcome {
    let mut out = RestartOutcome {
        best: None,
        trace: Vec::with_capacity(cfg.steps),
        events: Vec::new(),
    };
    let seed = cfg.seed.wrapping_add(restart as u64);
    let mut theta = match init_params_loguniform(&obj.aug, seed, cfg.init_a, cfg.init_b) {
        Ok(p) => p.theta,
        Err(e) => {
            out.events.push(SynthEvent {
                restart,
                step: 0,
                message: e.to_string(),
                aborted: true,
            });
            return out;
        }
    };
    let mut adam = AdamState::new(theta.len());
    for step in 0..cfg.steps {
        let r = match obj.evaluate(&theta, true, Method::Dp, None) {
            Ok(r) => r,
            Err(e) => {
                out.events.push(SynthEvent {
                    restart,
                    step,
                    message: e.to_string(),
                    aborted: true,
                });
                break;
            }
        };
        out.trace.push(TraceEntry {
            step,
            restart,
            wval: r.wval,
        });
        if out.best.as_ref().is_none_or(|b| r.wval < b.0) {
            out.best = Some((r.wval, step, theta.clone(), r.best_bscc, r.best_states));
        }
        let mut g = r.grad;
        if g.iter().all(|x| x.is_finite()) {
            clip_gradient(&mut g, cfg.clip_norm);
        }
        if let Err(e) = adam_step(&mut theta, &g, &mut adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps) {
            out.events.push(SynthEvent {
                restart,
                step,
                message: e.to_string(),
                aborted: false,
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            out.events.push(SynthEvent {
                restart,
                step,
                message: "parameters became non-finite".into(),
                aborted: true,
            });
            break;
        }
    }
    out
}

/// Runs `config.restarts` independent optimizations (in parallel) and
/// returns the best strategy seen in any step of any restart.
pub fn synthesize(mdp: &Mdp, eval: &Eval, d: usize, config: &SynthConfig) -> Result<SynthResult> {
    config.validate()?;
    let alloc = config.allocation_for(mdp)?;
    let obj = Objective::new(mdp, &alloc, eval.clone(), d)?;
    let outcomes: Vec<RestartOutcome> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(&obj, config, r))
        .collect();
    let mut trace = Vec::new();
    let mut events = Vec::new();
    let mut best: Option<(usize, (f64, usize, Vec<f64>, usize, Vec<usize>))> = None;
    for (r, o) in outcomes.into_iter().enumerate() {
        trace.extend(o.trace);
        events.extend(o.events);
        if let Some(b) = o.best {
            if best.as_ref().is_none_or(|(_, cur)| b.0 < cur.0) {
                best = Some((r, b));
            }
        }
    }
    let (restart, (wval, step, theta, best_bscc, bscc_states)) = best.ok_or_else(|| {
        Error::NonFinite(format!(
            "every restart aborted: {}",
            events.first().map_or("no steps ran", |e| e.message.as_str())
        ))
    })?;
    let params = StrategyParams { theta };
    let strategy = materialize_strategy(obj.augmented(), &params)?;
    Ok(SynthResult {
        strategy,
        params,
        wval,
        best_bscc,
        bscc_states,
        restart,
        step,
        trace,
        events,
        config: config.clone(),
    })
}

/// Writes the trace as CSV with header `step,restart,wval`.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceEntry]) -> std::io::Result<()> {
    writeln!(w, "step,restart,wval")?;
    for e in trace {
        writeln!(w, "{},{},{}", e.step, e.restart, e.wval)?;
    }
    Ok(())
}

/// Per-BSCC figures of a stored strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct BsccReport {
    /// Augmented vertices as `vertex:mem`.
    pub states: Vec<String>,
    pub wval: f64,
    pub gval: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub bsccs: Vec<BsccReport>,
    pub best: usize,
    pub wval: f64,
}

/// Evaluates a strategy without optimizing it.
pub fn evaluate_strategy_file(
    mdp: &Mdp,
    strategy: &FrStrategy,
    eval: &Eval,
    d: usize,
    method: Method,
) -> Result<EvalReport> {
    strategy.check(mdp)?;
    let report = wval_strategy(mdp, strategy, eval, d, method)?;
    let aug = strategy.augmented();
    let bsccs = report
        .bsccs
        .iter()
        .zip(&report.values)
        .map(|(b, &w)| {
            let states = b
                .states()
                .iter()
                .map(|&s| {
                    let a = aug.vertices()[s];
                    format!("{}:{}", mdp.name(a.vertex), a.mem)
                })
                .collect();
            Ok(BsccReport {
                states,
                wval: w,
                gval: gval_bscc(b, eval)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        bsccs,
        best: report.best,
        wval: report.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_sign_scaled() {
        let mut p = vec![1.0, 1.0, 1.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[2.0, -0.5, 0.0], &mut s, 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] - 1.01).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::NAN], &mut s, 0.01, 0.9, 0.999, 1e-8).is_err());
        assert_eq!(p, vec![1.0]);
        assert_eq!(s, AdamState::new(1));
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![0.3];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[0.0], &mut s, 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p, vec![0.3]);
        adam_step(&mut p, &[1.0], &mut s, 0.01, 0.9, 0.999, 1e-8).unwrap();
        let (m, v) = (s.m[0], s.v[0]);
        adam_step(&mut p, &[0.0], &mut s, 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert!(s.m[0] < m && s.v[0] < v);
    }

    #[test]
    fn config_validation() {
        let ok = SynthConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SynthConfig { memory: 0, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig { steps: 0, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig {
            init_a: 1.0,
            init_b: 1.0,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn clipping() {
        let mut g = vec![3e3, 4e3];
        clip_gradient(&mut g, 1e3);
        assert!((g[0] - 600.0).abs() < 1e-9 && (g[1] - 800.0).abs() < 1e-9);
    }
}
