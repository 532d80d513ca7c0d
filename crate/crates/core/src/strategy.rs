//! Finite-memory randomized (FR) strategies: raw softmax parameters, their
//! materialized distributions, and the strategy text format.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::augment::{Augmented, MemoryAllocation, MemoryId};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, VertexKind};
use crate::textfmt::{fmt_g17, key_value, parse_err, tokenized_lines};

/// Row-sum tolerance for stored strategies.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Tolerance for the stochastic-vertex marginal constraint.
pub const MARGINAL_TOL: f64 = 1e-9;

/// One real parameter per augmented edge.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyParams {
    pub theta: Vec<f64>,
}

/// Numerically stable softmax of `xs`, multiplied by `scale`.
pub fn softmax_scaled(xs: &[f64], scale: f64, out: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o = *o / total * scale;
    }
}

/// Applies per-group softmax to raw parameters.
pub fn materialize_strategy(aug: &Arc<Augmented>, params: &StrategyParams) -> Result<FrStrategy> {
    if params.theta.len() != aug.num_edges() {
        return Err(Error::Dimension(format!(
            "{} parameters for {} augmented edges",
            params.theta.len(),
            aug.num_edges()
        )));
    }
    if let Some(i) = params.theta.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("parameter {i} = {}", params.theta[i])));
    }
    let mut probs = vec![0.0; aug.num_edges()];
    for g in aug.groups() {
        softmax_scaled(&params.theta[g.edges.clone()], g.scale, &mut probs[g.edges.clone()]);
    }
    Ok(FrStrategy {
        aug: Arc::clone(aug),
        probs,
    })
}

/// For each augmented vertex, a distribution over augmented successors.
/// Probabilities are stored per augmented edge.
#[derive(Clone, Debug, PartialEq)]
pub struct FrStrategy {
    aug: Arc<Augmented>,
    probs: Vec<f64>,
}

impl FrStrategy {
    /// Wraps explicit per-edge probabilities after checking them against `mdp`.
    pub fn new(mdp: &Mdp, aug: Arc<Augmented>, probs: Vec<f64>) -> Result<FrStrategy> {
        let s = FrStrategy { aug, probs };
        s.check(mdp)?;
        Ok(s)
    }

    /// Builds a strategy from `(src, dst, prob)` triples over augmented vertex indices.
    /// Unlisted edges get probability zero.
    pub fn from_moves(mdp: &Mdp, aug: Arc<Augmented>, moves: &[(usize, usize, f64)]) -> Result<Self> {
        let mut probs = vec![0.0; aug.num_edges()];
        for &(src, dst, p) in moves {
            let e = aug.edge_index(src, dst).ok_or_else(|| {
                Error::InvalidStrategy(format!("no augmented edge {src} -> {dst}"))
            })?;
            probs[e] = p;
        }
        FrStrategy::new(mdp, aug, probs)
    }

    /// Wraps probabilities known to be valid (e.g. fresh softmax output).
    pub(crate) fn from_parts_unchecked(aug: Arc<Augmented>, probs: Vec<f64>) -> FrStrategy {
        FrStrategy { aug, probs }
    }

    pub fn augmented(&self) -> &Arc<Augmented> {
        &self.aug
    }

    /// Per-edge probabilities, parallel to [`Augmented::edges`].
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Validates row sums, non-negativity and stochastic consistency.
    pub fn check(&self, mdp: &Mdp) -> Result<()> {
        let aug = &self.aug;
        if self.probs.len() != aug.num_edges() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} augmented edges",
                self.probs.len(),
                aug.num_edges()
            )));
        }
        for (i, av) in aug.vertices().iter().enumerate() {
            let row = &self.probs[aug.out_edges(i)];
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidStrategy(format!(
                    "negative or non-finite probability at {}:{}",
                    mdp.name(av.vertex),
                    av.mem
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidStrategy(format!(
                    "distribution at {}:{} sums to {sum}",
                    mdp.name(av.vertex),
                    av.mem
                )));
            }
            if mdp.kind(av.vertex) == VertexKind::Stochastic {
                let p = mdp.probabilities(av.vertex).expect("stochastic");
                for (j, &u) in mdp.successors(av.vertex).iter().enumerate() {
                    let got: f64 = aug
                        .out_edges(i)
                        .filter(|&e| aug.vertices()[aug.edges()[e].1].vertex == u)
                        .map(|e| self.probs[e])
                        .sum();
                    if (got - p[j]).abs() > MARGINAL_TOL {
                        return Err(Error::StochasticConsistency {
                            vertex: format!("{}:{}", mdp.name(av.vertex), av.mem),
                            succ: mdp.name(u).to_string(),
                            got,
                            expected: p[j],
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Zeroes entries below `threshold` and rescales each softmax group back
    /// to its original mass. Groups whose entries all fall below the
    /// threshold are left untouched.
    pub fn pruned(&self, threshold: f64) -> FrStrategy {
        let mut probs = self.probs.clone();
        for g in self.aug.groups() {
            let slice = &mut probs[g.edges.clone()];
            let total: f64 = slice.iter().sum();
            let kept: f64 = slice.iter().filter(|&&p| p >= threshold).sum();
            if kept <= 0.0 {
                continue;
            }
            for p in slice.iter_mut() {
                *p = if *p >= threshold { *p / kept * total } else { 0.0 };
            }
        }
        FrStrategy {
            aug: Arc::clone(&self.aug),
            probs,
        }
    }

    /// Serializes to the strategy text format. Zero-probability moves are omitted.
    pub fn to_text(&self, mdp: &Mdp) -> String {
        let aug = &self.aug;
        let alloc = aug.allocation();
        let mut out = String::new();
        writeln!(out, "strategy memory={}", alloc.size()).unwrap();
        for v in 0..mdp.len() {
            let mems: Vec<String> = alloc.of(v).iter().map(|m| m.to_string()).collect();
            writeln!(out, "alloc {} {}", mdp.name(v), mems.join(",")).unwrap();
        }
        for (e, &(src, dst)) in aug.edges().iter().enumerate() {
            let p = self.probs[e];
            if p == 0.0 {
                continue;
            }
            let (s, d) = (aug.vertices()[src], aug.vertices()[dst]);
            writeln!(
                out,
                "move {}:{} -> {}:{} {}",
                mdp.name(s.vertex),
                s.mem,
                mdp.name(d.vertex),
                d.mem,
                fmt_g17(p)
            )
            .unwrap();
        }
        out
    }

    /// Parses the strategy text format against `mdp`.
    pub fn parse(mdp: &Mdp, text: &str) -> Result<FrStrategy> {
        let mut lines = tokenized_lines(text);
        let (line, header) = lines.next().ok_or_else(|| parse_err(0, "empty strategy file"))?;
        if header.len() != 2 || header[0] != "strategy" {
            return Err(parse_err(line, "expected `strategy memory=<K>`"));
        }
        let size: usize = key_value(line, header[1], "memory")?
            .parse()
            .map_err(|_| parse_err(line, "bad memory size"))?;
        if size == 0 {
            return Err(parse_err(line, "memory size must be at least 1"));
        }
        let mut alloc: Vec<Option<Vec<MemoryId>>> = vec![None; mdp.len()];
        let mut moves: Vec<(usize, (usize, MemoryId), (usize, MemoryId), f64)> = Vec::new();
        let vertex = |line: usize, name: &str| {
            mdp.index_of(name)
                .ok_or_else(|| parse_err(line, format!("unknown vertex `{name}`")))
        };
        let aug_ref = |line: usize, tok: &str| -> Result<(usize, MemoryId)> {
            let (v, m) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line, format!("expected <vertex>:<mem>, found `{tok}`")))?;
            let m: MemoryId = m.parse().map_err(|_| parse_err(line, "bad memory id"))?;
            Ok((vertex(line, v)?, m))
        };
        for (line, toks) in lines {
            match toks[0] {
                "alloc" => {
                    if toks.len() != 3 {
                        return Err(parse_err(line, "expected `alloc <vertex> <m1,m2,...>`"));
                    }
                    let v = vertex(line, toks[1])?;
                    let mems = toks[2]
                        .split(',')
                        .map(|m| m.trim().parse::<MemoryId>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| parse_err(line, "bad memory id list"))?;
                    if alloc[v].replace(mems).is_some() {
                        return Err(parse_err(line, format!("duplicate alloc for `{}`", toks[1])));
                    }
                }
                "move" => {
                    if toks.len() != 5 || toks[2] != "->" {
                        return Err(parse_err(line, "expected `move <v>:<m> -> <v'>:<m'> <p>`"));
                    }
                    let src = aug_ref(line, toks[1])?;
                    let dst = aug_ref(line, toks[3])?;
                    let p: f64 = toks[4]
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad probability `{}`", toks[4])))?;
                    moves.push((line, src, dst, p));
                }
                other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
            }
        }
        let alloc: Vec<Vec<MemoryId>> = alloc
            .into_iter()
            .enumerate()
            .map(|(v, a)| {
                a.ok_or_else(|| {
                    Error::InvalidStrategy(format!("missing alloc for vertex `{}`", mdp.name(v)))
                })
            })
            .collect::<Result<_>>()?;
        let alloc = MemoryAllocation::new(size, alloc);
        let aug = Arc::new(Augmented::build(mdp, &alloc)?);
        let mut probs = vec![0.0; aug.num_edges()];
        for (line, (sv, sm), (dv, dm), p) in moves {
            let src = aug
                .index_of(sv, sm)
                .ok_or_else(|| parse_err(line, "source memory state not allocated"))?;
            let dst = aug
                .index_of(dv, dm)
                .ok_or_else(|| parse_err(line, "target memory state not allocated"))?;
            let e = aug
                .edge_index(src, dst)
                .ok_or_else(|| parse_err(line, "move does not follow an MDP edge"))?;
            probs[e] = p;
        }
        FrStrategy::new(mdp, aug, probs)
    }
}
