//! Per-step timing of the dynamic-programming and path-enumeration evaluators
//! on the ring scenarios with `ℓ = d`.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::augment::MemoryAllocation;
use crate::bench::ring::{gen_ring3, ring_eval};
use crate::error::{Error, Result};
use crate::eval::Eval;
use crate::synth::{adam_step, clip_gradient, init_params_loguniform, AdamState, Objective, SynthConfig};
use crate::window::Method;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub ell: usize,
    pub d: usize,
    pub memory: usize,
    pub method: Method,
    pub mean_step_seconds: f64,
    pub timed_out: bool,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dp => "dp",
            Method::Dfs => "dfs",
        }
    }
}

/// Times training steps (forward, backward and ADAM update) on one scenario.
/// Stops after `steps` steps or once the accumulated time exceeds `timeout`;
/// a single step running past `timeout` is reported as timed out.
pub fn time_steps(
    ell: usize,
    memory: usize,
    method: Method,
    steps: usize,
    timeout: Duration,
    seed: u64,
) -> Result<BenchRow> {
    let d = ell;
    let mdp = gen_ring3(ell)?;
    let eval = Eval::bind(ring_eval(ell, d)?, &mdp)?;
    let obj = Objective::new(&mdp, &MemoryAllocation::full(mdp.len(), memory), eval, d)?;
    let cfg = SynthConfig::default();
    let mut theta = init_params_loguniform(obj.augmented(), seed, cfg.init_a, cfg.init_b)?.theta;
    let mut adam = AdamState::new(theta.len());
    let start = Instant::now();
    let mut done = 0;
    let mut timed_out = false;
    while done < steps.max(1) {
        let step_start = Instant::now();
        match obj.evaluate(&theta, true, method, Some(step_start + timeout)) {
            Ok(r) => {
                let mut g = r.grad;
                clip_gradient(&mut g, cfg.clip_norm);
                adam_step(&mut theta, &g, &mut adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)?;
            }
            Err(Error::Timeout) => {
                timed_out = true;
                break;
            }
            Err(e) => return Err(e),
        }
        done += 1;
        if start.elapsed() >= timeout {
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(BenchRow {
        ell,
        d,
        memory,
        method,
        mean_step_seconds: if timed_out { elapsed } else { elapsed / done as f64 },
        timed_out,
    })
}

/// Benchmarks both evaluators for every even `ℓ` in `ells` and every memory
/// size. Once enumeration times out at some `ℓ` for a memory size, larger `ℓ`
/// are reported as timed out without running them.
pub fn bench_dp_vs_dfs(
    ells: &[usize],
    memories: &[usize],
    steps: usize,
    timeout: Duration,
    seed: u64,
    mut progress: impl FnMut(&BenchRow),
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &k in memories {
        let mut dfs_dead = false;
        for &ell in ells.iter().filter(|l| **l >= 2 && **l % 2 == 0) {
            for method in [Method::Dp, Method::Dfs] {
                let row = if method == Method::Dfs && dfs_dead {
                    BenchRow {
                        ell,
                        d: ell,
                        memory: k,
                        method,
                        mean_step_seconds: timeout.as_secs_f64(),
                        timed_out: true,
                    }
                } else {
                    time_steps(ell, k, method, steps, timeout, seed)?
                };
                if method == Method::Dfs && row.timed_out {
                    dfs_dead = true;
                }
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub const BENCH_HEADER: &str = "ell,d,K,method,mean_step_seconds,timed_out";

pub fn write_bench_csv<W: Write>(mut w: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(w, "{BENCH_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{}",
            r.ell,
            r.d,
            r.memory,
            r.method.name(),
            r.mean_step_seconds,
            r.timed_out
        )?;
    }
    Ok(())
}
