//! Markov decision processes over vertices with integer payoff vectors.
//!
//! Vertices are either nondeterministic (the strategy picks a successor) or
//! stochastic (the successor is drawn from a fixed distribution). A graph is
//! an MDP without stochastic vertices.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::textfmt::{self, fmt_g17, key_value, parse_err, tokenized_lines};

/// Tolerance on the sum of a stochastic vertex's distribution.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Nondeterministic,
    Stochastic,
}

impl VertexKind {
    fn tag(self) -> &'static str {
        match self {
            VertexKind::Nondeterministic => "N",
            VertexKind::Stochastic => "S",
        }
    }
}

/// A validated MDP. Successor lists are sorted by vertex index.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    names: Vec<String>,
    kinds: Vec<VertexKind>,
    payoffs: Vec<Vec<i64>>,
    succ: Vec<Vec<usize>>,
    prob: Vec<Vec<f64>>,
    k: usize,
}

impl Mdp {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of payoff functions.
    pub fn num_payoffs(&self) -> usize {
        self.k
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn kind(&self, v: usize) -> VertexKind {
        self.kinds[v]
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    /// Successor probabilities (parallel to [`Mdp::successors`]) for stochastic vertices.
    pub fn probabilities(&self, v: usize) -> Option<&[f64]> {
        match self.kinds[v] {
            VertexKind::Stochastic => Some(&self.prob[v]),
            VertexKind::Nondeterministic => None,
        }
    }

    pub fn payoff(&self, v: usize) -> &[i64] {
        &self.payoffs[v]
    }

    pub fn is_graph(&self) -> bool {
        self.kinds.iter().all(|k| *k == VertexKind::Nondeterministic)
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Per-dimension maximum payoff over all vertices.
    pub fn payoff_max(&self) -> Vec<i64> {
        (0..self.k)
            .map(|i| self.payoffs.iter().map(|p| p[i]).max().unwrap_or(0))
            .collect()
    }

    /// Per-dimension minimum payoff over all vertices.
    pub fn payoff_min(&self) -> Vec<i64> {
        (0..self.k)
            .map(|i| self.payoffs.iter().map(|p| p[i]).min().unwrap_or(0))
            .collect()
    }

    /// Parses the line-oriented MDP text format.
    pub fn parse(text: &str) -> Result<Mdp> {
        MdpBuilder::parse(text)?.build()
    }

    /// Writes the MDP text format. `comments` are emitted as leading `#` lines.
    pub fn to_text_with_comments(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&format!("mdp payoffs={}\n", self.k));
        for v in 0..self.len() {
            let pay: Vec<String> = self.payoffs[v].iter().map(i64::to_string).collect();
            out.push_str(&format!(
                "vertex {} {} pay={}\n",
                self.names[v],
                self.kinds[v].tag(),
                pay.join(",")
            ));
        }
        for v in 0..self.len() {
            for (j, &u) in self.succ[v].iter().enumerate() {
                match self.kinds[v] {
                    VertexKind::Nondeterministic => {
                        out.push_str(&format!("edge {} {}\n", self.names[v], self.names[u]))
                    }
                    VertexKind::Stochastic => out.push_str(&format!(
                        "edge {} {} prob={}\n",
                        self.names[v],
                        self.names[u],
                        fmt_g17(self.prob[v][j])
                    )),
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.to_text_with_comments(&[])
    }
}

/// One violation of the MDP invariants.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    BadId(String),
    DuplicateVertex(String),
    DanglingEdge { src: String, dst: String },
    DuplicateEdge { src: String, dst: String },
    NoOutgoingEdge(String),
    MissingProbability { src: String, dst: String },
    UnexpectedProbability { src: String, dst: String },
    NonPositiveProbability { src: String, dst: String, prob: f64 },
    DistributionSum { vertex: String, sum: f64 },
    PayoffArity { vertex: String, expected: usize, got: usize },
    NoPayoffs,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadId(id) => write!(f, "invalid vertex id `{id}`"),
            Violation::DuplicateVertex(v) => write!(f, "duplicate vertex `{v}`"),
            Violation::DanglingEdge { src, dst } => write!(f, "dangling edge {src} -> {dst}"),
            Violation::DuplicateEdge { src, dst } => write!(f, "duplicate edge {src} -> {dst}"),
            Violation::NoOutgoingEdge(v) => write!(f, "vertex `{v}` has no outgoing edge"),
            Violation::MissingProbability { src, dst } => {
                write!(f, "edge {src} -> {dst} leaves a stochastic vertex but has no prob")
            }
            Violation::UnexpectedProbability { src, dst } => {
                write!(f, "edge {src} -> {dst} leaves a nondeterministic vertex but has a prob")
            }
            Violation::NonPositiveProbability { src, dst, prob } => {
                write!(f, "edge {src} -> {dst} has non-positive prob {prob}")
            }
            Violation::DistributionSum { vertex, sum } => {
                write!(f, "distribution sum at `{vertex}` is {sum}, expected 1")
            }
            Violation::PayoffArity {
                vertex,
                expected,
                got,
            } => write!(f, "vertex `{vertex}` has {got} payoffs, expected {expected}"),
            Violation::NoPayoffs => write!(f, "at least one payoff function is required"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Unvalidated MDP description, addressed by vertex names.
#[derive(Clone, Debug, Default)]
pub struct MdpBuilder {
    k: usize,
    vertices: Vec<(String, VertexKind, Vec<i64>)>,
    edges: Vec<(String, String, Option<f64>)>,
}

impl MdpBuilder {
    pub fn new(num_payoffs: usize) -> Self {
        MdpBuilder {
            k: num_payoffs,
            ..Default::default()
        }
    }

    pub fn vertex(&mut self, name: &str, kind: VertexKind, payoff: &[i64]) -> &mut Self {
        self.vertices.push((name.to_string(), kind, payoff.to_vec()));
        self
    }

    pub fn edge(&mut self, src: &str, dst: &str) -> &mut Self {
        self.edges.push((src.to_string(), dst.to_string(), None));
        self
    }

    pub fn prob_edge(&mut self, src: &str, dst: &str, prob: f64) -> &mut Self {
        self.edges.push((src.to_string(), dst.to_string(), Some(prob)));
        self
    }

    pub fn validate(&self) -> ValidationReport {
        validate_mdp(self)
    }

    pub fn build(&self) -> Result<Mdp> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(Error::InvalidMdp(report.to_string()));
        }
        let n = self.vertices.len();
        let index: HashMap<&str, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, (name, _, _))| (name.as_str(), i))
            .collect();
        let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (src, dst, p) in &self.edges {
            out[index[src.as_str()]].push((index[dst.as_str()], p.unwrap_or(0.0)));
        }
        let mut succ = Vec::with_capacity(n);
        let mut prob = Vec::with_capacity(n);
        for (v, mut list) in out.into_iter().enumerate() {
            list.sort_by_key(|(u, _)| *u);
            succ.push(list.iter().map(|(u, _)| *u).collect());
            prob.push(match self.vertices[v].1 {
                VertexKind::Stochastic => list.iter().map(|(_, p)| *p).collect(),
                VertexKind::Nondeterministic => Vec::new(),
            });
        }
        Ok(Mdp {
            names: self.vertices.iter().map(|v| v.0.clone()).collect(),
            kinds: self.vertices.iter().map(|v| v.1).collect(),
            payoffs: self.vertices.iter().map(|v| v.2.clone()).collect(),
            succ,
            prob,
            k: self.k,
        })
    }

    pub fn parse(text: &str) -> Result<MdpBuilder> {
        let mut lines = tokenized_lines(text);
        let (line, header) = lines.next().ok_or_else(|| parse_err(0, "empty MDP file"))?;
        if header.len() != 2 || header[0] != "mdp" {
            return Err(parse_err(line, "expected `mdp payoffs=<k>`"));
        }
        let k: usize = key_value(line, header[1], "payoffs")?
            .parse()
            .map_err(|_| parse_err(line, "bad payoff count"))?;
        let mut b = MdpBuilder::new(k);
        for (line, toks) in lines {
            match toks[0] {
                "vertex" => {
                    if toks.len() != 4 {
                        return Err(parse_err(line, "expected `vertex <id> N|S pay=<p1,...>`"));
                    }
                    let kind = match toks[2] {
                        "N" => VertexKind::Nondeterministic,
                        "S" => VertexKind::Stochastic,
                        other => return Err(parse_err(line, format!("unknown kind `{other}`"))),
                    };
                    let pay = key_value(line, toks[3], "pay")?
                        .split(',')
                        .map(|p| p.trim().parse::<i64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| parse_err(line, "payoffs must be integers"))?;
                    b.vertex(toks[1], kind, &pay);
                }
                "edge" => {
                    let prob = match toks.len() {
                        3 => None,
                        4 => Some(
                            textfmt::parse_prob(key_value(line, toks[3], "prob")?)
                                .map_err(|m| parse_err(line, m))?,
                        ),
                        _ => return Err(parse_err(line, "expected `edge <src> <dst> [prob=p]`")),
                    };
                    b.edges.push((toks[1].to_string(), toks[2].to_string(), prob));
                }
                other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
            }
        }
        Ok(b)
    }
}

/// Checks every structural invariant of an MDP description and reports all violations.
pub fn validate_mdp(b: &MdpBuilder) -> ValidationReport {
    let mut violations = Vec::new();
    if b.k == 0 {
        violations.push(Violation::NoPayoffs);
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, (name, _, pay)) in b.vertices.iter().enumerate() {
        if !textfmt::is_valid_id(name) {
            violations.push(Violation::BadId(name.clone()));
        }
        if index.insert(name.as_str(), i).is_some() {
            violations.push(Violation::DuplicateVertex(name.clone()));
        }
        if pay.len() != b.k {
            violations.push(Violation::PayoffArity {
                vertex: name.clone(),
                expected: b.k,
                got: pay.len(),
            });
        }
    }
    let n = b.vertices.len();
    let mut out_deg = vec![0usize; n];
    let mut sums = vec![0.0f64; n];
    let mut seen = std::collections::HashSet::new();
    for (src, dst, p) in &b.edges {
        let (Some(&s), Some(&_d)) = (index.get(src.as_str()), index.get(dst.as_str())) else {
            violations.push(Violation::DanglingEdge {
                src: src.clone(),
                dst: dst.clone(),
            });
            continue;
        };
        if !seen.insert((src.as_str(), dst.as_str())) {
            violations.push(Violation::DuplicateEdge {
                src: src.clone(),
                dst: dst.clone(),
            });
            continue;
        }
        out_deg[s] += 1;
        match (b.vertices[s].1, p) {
            (VertexKind::Stochastic, None) => violations.push(Violation::MissingProbability {
                src: src.clone(),
                dst: dst.clone(),
            }),
            (VertexKind::Stochastic, Some(p)) => {
                if *p <= 0.0 {
                    violations.push(Violation::NonPositiveProbability {
                        src: src.clone(),
                        dst: dst.clone(),
                        prob: *p,
                    });
                }
                sums[s] += p;
            }
            (VertexKind::Nondeterministic, Some(_)) => {
                violations.push(Violation::UnexpectedProbability {
                    src: src.clone(),
                    dst: dst.clone(),
                })
            }
            (VertexKind::Nondeterministic, None) => {}
        }
    }
    for (i, (name, kind, _)) in b.vertices.iter().enumerate() {
        if out_deg[i] == 0 {
            violations.push(Violation::NoOutgoingEdge(name.clone()));
        } else if *kind == VertexKind::Stochastic && (sums[i] - 1.0).abs() > PROB_SUM_TOL {
            violations.push(Violation::DistributionSum {
                vertex: name.clone(),
                sum: sums[i],
            });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> MdpBuilder {
        let mut b = MdpBuilder::new(2);
        b.vertex("A", VertexKind::Nondeterministic, &[1, 0])
            .vertex("B", VertexKind::Nondeterministic, &[0, 8])
            .edge("A", "A")
            .edge("A", "B")
            .edge("B", "A")
            .edge("B", "B");
        b
    }

    #[test]
    fn example1_is_valid() {
        let r = example1().validate();
        assert!(r.is_ok(), "{r}");
        let m = example1().build().unwrap();
        assert!(m.is_graph());
        assert_eq!(m.edge_count(), 4);
    }

    #[test]
    fn missing_out_edge() {
        let mut b = MdpBuilder::new(1);
        b.vertex("a", VertexKind::Nondeterministic, &[0])
            .vertex("b", VertexKind::Nondeterministic, &[0])
            .edge("a", "b");
        let r = b.validate();
        assert_eq!(r.violations, vec![Violation::NoOutgoingEdge("b".into())]);
        assert!(r.to_string().contains("no outgoing edge"));
    }

    #[test]
    fn bad_distribution_sum() {
        let mut b = MdpBuilder::new(1);
        b.vertex("s", VertexKind::Stochastic, &[0])
            .vertex("a", VertexKind::Nondeterministic, &[1])
            .prob_edge("s", "a", 0.5)
            .prob_edge("s", "s", 0.4)
            .edge("a", "s");
        let r = b.validate();
        assert!(matches!(r.violations[..], [Violation::DistributionSum { .. }]));
        assert!(r.to_string().contains("distribution sum"));
    }

    #[test]
    fn dangling_and_arity() {
        let mut b = MdpBuilder::new(2);
        b.vertex("a", VertexKind::Nondeterministic, &[0])
            .edge("a", "a")
            .edge("a", "zz");
        let r = b.validate();
        assert!(r.violations.contains(&Violation::DanglingEdge {
            src: "a".into(),
            dst: "zz".into()
        }));
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PayoffArity { .. })));
    }

    #[test]
    fn parse_and_print() {
        let text = "\
# comment
mdp payoffs=1
vertex s S pay=-3
vertex a N pay=2   # trailing comment
edge s a prob=1/4
edge s s prob=0.75
edge a s
";
        let m = Mdp::parse(text).unwrap();
        assert_eq!(m.payoff(0), &[-3]);
        assert_eq!(m.successors(0), &[0, 1]);
        assert_eq!(m.probabilities(0).unwrap(), &[0.75, 0.25]);
        let again = Mdp::parse(&m.to_text()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn parse_rejects_missing_prob() {
        let text = "mdp payoffs=1\nvertex s S pay=0\nedge s s\n";
        let err = Mdp::parse(text).unwrap_err();
        assert!(err.to_string().contains("no prob"));
    }
}
