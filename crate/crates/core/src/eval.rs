//! Evaluation functions ("badness" of a tuple of window mean payoffs) and
//! their decomposition into representatives for the window DP.
//!
//! Every built-in family is decomposed over accumulated payoff sums: the
//! representative of an occupation vector `x` is the vector of sums
//! `Σ_v x(v)·Pay_i(v)`, saturated at a per-dimension cap when the family
//! cannot distinguish larger sums. Caps are only applied in dimensions where
//! every payoff is non-negative, since saturation commutes with addition only
//! there.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::textfmt::fmt_g17;

/// Slack used in threshold and interval comparisons.
pub const CMP_EPS: f64 = 1e-9;

/// A built-in evaluation family, as written in an eval spec string.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalSpec {
    /// 0 if every `WMP_i ∈ [lo_i, hi_i]`, else 1.
    Interval(Vec<(f64, f64)>),
    /// `Σ_i max(0, b − WMP_i) / (k·b)`.
    Threshold(f64),
    /// L1 distance to `targets` if every `WMP_i > 0`, else `penalty`.
    L1Target { targets: Vec<f64>, penalty: f64 },
    /// `Σ_i (Pay_i^max − WMP_i)`.
    MaxSum,
    /// 0 if every `WMP_i ≥ c_i`, else `t`.
    Gadget { thresholds: Vec<f64>, t: f64 },
    /// `Σ_i |WMP_i|`.
    Abs,
    /// 0 if every `WMP_i > 0`, else `t`.
    Positive { t: f64 },
}

fn spec_err(spec: &str, msg: impl Into<String>) -> Error {
    Error::EvalSpec {
        spec: spec.to_string(),
        msg: msg.into(),
    }
}

fn parse_f64(spec: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| spec_err(spec, format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(spec_err(spec, format!("non-finite number `{s}`")));
    }
    Ok(v)
}

fn parse_list(spec: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| parse_f64(spec, x)).collect()
}

/// Splits `body;key=value` and returns `(body, value)`.
fn split_option<'a>(spec: &str, s: &'a str, key: &str) -> Result<(&'a str, Option<f64>)> {
    match s.split_once(';') {
        None => Ok((s, None)),
        Some((body, opt)) => {
            let v = opt
                .trim()
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| spec_err(spec, format!("expected `;{key}=<value>`")))?;
            Ok((body, Some(parse_f64(spec, v)?)))
        }
    }
}

impl FromStr for EvalSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<EvalSpec> {
        let s = spec.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => match s.split_once(';') {
                Some((n, _)) => (n, None),
                None => (s, None),
            },
        };
        let need = || rest.ok_or_else(|| spec_err(spec, "missing arguments"));
        match name {
            "interval" => {
                let bounds = need()?
                    .split(',')
                    .map(|iv| {
                        let (lo, hi) = iv
                            .split_once("..")
                            .ok_or_else(|| spec_err(spec, format!("expected lo..hi, found `{iv}`")))?;
                        let (lo, hi) = (parse_f64(spec, lo)?, parse_f64(spec, hi)?);
                        if lo > hi {
                            return Err(spec_err(spec, "empty interval"));
                        }
                        Ok((lo, hi))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(EvalSpec::Interval(bounds))
            }
            "threshold" => {
                let b = parse_f64(spec, need()?)?;
                if b <= 0.0 {
                    return Err(spec_err(spec, "bound must be positive"));
                }
                Ok(EvalSpec::Threshold(b))
            }
            "l1target" => {
                let (body, penalty) = split_option(spec, need()?, "penalty")?;
                let penalty = penalty.ok_or_else(|| spec_err(spec, "missing `;penalty=`"))?;
                Ok(EvalSpec::L1Target {
                    targets: parse_list(spec, body)?,
                    penalty,
                })
            }
            "maxsum" if rest.is_none() => Ok(EvalSpec::MaxSum),
            "abs" if rest.is_none() => Ok(EvalSpec::Abs),
            "gadget" => {
                let (body, t) = split_option(spec, need()?, "t")?;
                Ok(EvalSpec::Gadget {
                    thresholds: parse_list(spec, body)?,
                    t: t.unwrap_or(1.0),
                })
            }
            "positive" => {
                let (_, t) = split_option(spec, s, "t")?;
                Ok(EvalSpec::Positive { t: t.unwrap_or(1.0) })
            }
            _ => Err(spec_err(spec, "unknown evaluation family")),
        }
    }
}

impl fmt::Display for EvalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |xs: &[f64]| xs.iter().map(|x| fmt_g17(*x)).collect::<Vec<_>>().join(",");
        match self {
            EvalSpec::Interval(b) => {
                let parts: Vec<String> = b
                    .iter()
                    .map(|(lo, hi)| format!("{}..{}", fmt_g17(*lo), fmt_g17(*hi)))
                    .collect();
                write!(f, "interval:{}", parts.join(","))
            }
            EvalSpec::Threshold(b) => write!(f, "threshold:{}", fmt_g17(*b)),
            EvalSpec::L1Target { targets, penalty } => {
                write!(f, "l1target:{};penalty={}", list(targets), fmt_g17(*penalty))
            }
            EvalSpec::MaxSum => write!(f, "maxsum"),
            EvalSpec::Gadget { thresholds, t } => {
                write!(f, "gadget:{};t={}", list(thresholds), fmt_g17(*t))
            }
            EvalSpec::Abs => write!(f, "abs"),
            EvalSpec::Positive { t } => write!(f, "positive;t={}", fmt_g17(*t)),
        }
    }
}

/// An evaluation function bound to a payoff arity (and, for `maxsum`, the payoff maxima).
#[derive(Clone, Debug, PartialEq)]
pub struct Eval {
    spec: EvalSpec,
    k: usize,
    maxima: Vec<i64>,
}

impl Eval {
    /// Binds `spec` to the payoff functions of `mdp`.
    pub fn bind(spec: EvalSpec, mdp: &Mdp) -> Result<Eval> {
        Eval::with_payoff_max(spec, mdp.payoff_max())
    }

    /// Binds `spec` given the per-dimension payoff maxima (which fix `k`).
    pub fn with_payoff_max(spec: EvalSpec, maxima: Vec<i64>) -> Result<Eval> {
        let k = maxima.len();
        let arity = match &spec {
            EvalSpec::Interval(b) => Some(b.len()),
            EvalSpec::L1Target { targets, .. } => Some(targets.len()),
            EvalSpec::Gadget { thresholds, .. } => Some(thresholds.len()),
            _ => None,
        };
        if let Some(a) = arity {
            if a != k {
                return Err(spec_err(
                    &spec.to_string(),
                    format!("{a} components for {k} payoff functions"),
                ));
            }
        }
        Ok(Eval { spec, k, maxima })
    }

    pub fn spec(&self) -> &EvalSpec {
        &self.spec
    }

    pub fn num_payoffs(&self) -> usize {
        self.k
    }

    /// `Eval(WMP_1, …, WMP_k)`.
    pub fn apply(&self, wmp: &[f64]) -> f64 {
        debug_assert_eq!(wmp.len(), self.k);
        match &self.spec {
            EvalSpec::Interval(b) => {
                let inside = wmp
                    .iter()
                    .zip(b)
                    .all(|(p, (lo, hi))| *p >= lo - CMP_EPS && *p <= hi + CMP_EPS);
                if inside {
                    0.0
                } else {
                    1.0
                }
            }
            EvalSpec::Threshold(b) => {
                let short: f64 = wmp.iter().map(|p| (b - p).max(0.0)).sum();
                short / (self.k as f64 * b)
            }
            EvalSpec::L1Target { targets, penalty } => {
                if wmp.iter().all(|p| *p > 0.0) {
                    wmp.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum()
                } else {
                    *penalty
                }
            }
            EvalSpec::MaxSum => wmp
                .iter()
                .zip(&self.maxima)
                .map(|(p, m)| *m as f64 - p)
                .sum(),
            EvalSpec::Gadget { thresholds, t } => {
                if wmp.iter().zip(thresholds).all(|(p, c)| *p >= c - CMP_EPS) {
                    0.0
                } else {
                    *t
                }
            }
            EvalSpec::Abs => wmp.iter().map(|p| p.abs()).sum(),
            EvalSpec::Positive { t } => {
                if wmp.iter().all(|p| *p > 0.0) {
                    0.0
                } else {
                    *t
                }
            }
        }
    }

    /// Eval of the window means of the accumulated sums `sums` over `d` states.
    pub fn apply_sums(&self, sums: &[i64], d: usize) -> f64 {
        let wmp: Vec<f64> = sums.iter().map(|s| *s as f64 / d as f64).collect();
        self.apply(&wmp)
    }

    /// Saturation cap of dimension `i` for horizon `d`, if the family has one.
    fn natural_cap(&self, i: usize, d: usize) -> Option<i64> {
        let d = d as f64;
        match &self.spec {
            EvalSpec::Interval(b) => Some(((b[i].1 + CMP_EPS) * d).floor().max(-1.0) as i64 + 1),
            EvalSpec::Threshold(b) => Some((b * d).ceil() as i64),
            EvalSpec::Gadget { thresholds, .. } => {
                Some(((thresholds[i] - CMP_EPS) * d).ceil().max(0.0) as i64)
            }
            EvalSpec::Positive { .. } => Some(1),
            EvalSpec::L1Target { .. } | EvalSpec::MaxSum | EvalSpec::Abs => None,
        }
    }

    /// The `(r, e, m)` decomposition for horizon `d`, given per-dimension
    /// minimum payoffs of the model.
    pub fn decompose(&self, d: usize, payoff_min: &[i64]) -> Decomposable {
        let caps = (0..self.k)
            .map(|i| {
                if payoff_min.get(i).is_some_and(|m| *m >= 0) {
                    self.natural_cap(i, d)
                } else {
                    None
                }
            })
            .collect();
        Decomposable {
            eval: self.clone(),
            d,
            caps,
        }
    }
}

/// Accumulated (possibly saturated) payoff sums.
pub type Rep = Vec<i64>;

/// A decomposable evaluation function: initial representative `r(0)`,
/// update `m(ϱ, v)` and finalization `e(ϱ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposable {
    eval: Eval,
    d: usize,
    caps: Vec<Option<i64>>,
}

impl Decomposable {
    /// Decomposition with explicit caps (no sign checks).
    pub fn with_caps(eval: Eval, d: usize, caps: Vec<Option<i64>>) -> Decomposable {
        assert_eq!(caps.len(), eval.num_payoffs());
        Decomposable { eval, d, caps }
    }

    pub fn eval(&self) -> &Eval {
        &self.eval
    }

    pub fn horizon(&self) -> usize {
        self.d
    }

    pub fn caps(&self) -> &[Option<i64>] {
        &self.caps
    }

    pub fn num_payoffs(&self) -> usize {
        self.caps.len()
    }

    /// `r(0, …, 0)`.
    pub fn initial(&self) -> Rep {
        vec![0; self.caps.len()]
    }

    /// `m(ϱ, v)` for a state with payoff vector `pay`, written into `out`.
    pub fn update_into(&self, rep: &[i64], pay: &[i64], out: &mut Rep) {
        out.clear();
        out.extend(rep.iter().zip(pay).zip(&self.caps).map(|((r, p), cap)| {
            let s = r + p;
            match cap {
                Some(c) => s.min(*c),
                None => s,
            }
        }));
    }

    pub fn update(&self, rep: &[i64], pay: &[i64]) -> Rep {
        let mut out = Vec::with_capacity(rep.len());
        self.update_into(rep, pay, &mut out);
        out
    }

    /// `e(ϱ)`: the Eval of the window means represented by `rep`.
    pub fn finalize(&self, rep: &[i64]) -> f64 {
        self.eval.apply_sums(rep, self.d)
    }

    /// `r(x)` computed directly from an occupation vector over states with the given payoffs.
    pub fn represent(&self, occupation: &[u32], payoffs: &[Vec<i64>]) -> Rep {
        (0..self.caps.len())
            .map(|i| {
                let s: i64 = occupation
                    .iter()
                    .zip(payoffs)
                    .map(|(x, p)| *x as i64 * p[i])
                    .sum();
                match self.caps[i] {
                    Some(c) => s.min(c),
                    None => s,
                }
            })
            .collect()
    }
}
