//! The three-layer ring `D_ℓ` with payoffs (10,0) / (2,2) / (0,10).

use std::collections::HashMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::eval::EvalSpec;
use crate::mdp::{Mdp, MdpBuilder, VertexKind};

pub const INNER_PAY: [i64; 2] = [10, 0];
pub const MIDDLE_PAY: [i64; 2] = [2, 2];
pub const OUTER_PAY: [i64; 2] = [0, 10];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    Inner,
    Middle,
    Outer,
}

impl Layer {
    fn prefix(self) -> char {
        match self {
            Layer::Inner => 'i',
            Layer::Middle => 'm',
            Layer::Outer => 'o',
        }
    }

    fn successors(self) -> &'static [Layer] {
        match self {
            Layer::Inner => &[Layer::Inner, Layer::Middle],
            Layer::Middle => &[Layer::Inner, Layer::Middle, Layer::Outer],
            Layer::Outer => &[Layer::Middle, Layer::Outer],
        }
    }
}

/// Vertex name of `layer` at ring position `pos`.
pub fn ring_vertex(layer: Layer, pos: usize) -> String {
    format!("{}{pos}", layer.prefix())
}

/// `D_ℓ`: per position an inner, middle and outer vertex; edges go from
/// position `i` to position `i + 1 mod ℓ`.
pub fn gen_ring3(ell: usize) -> Result<Mdp> {
    if ell < 2 {
        return Err(Error::Instance(format!("ring length must be at least 2, got {ell}")));
    }
    let layers = [
        (Layer::Inner, INNER_PAY),
        (Layer::Middle, MIDDLE_PAY),
        (Layer::Outer, OUTER_PAY),
    ];
    let mut b = MdpBuilder::new(2);
    for pos in 0..ell {
        for (layer, pay) in layers {
            b.vertex(&ring_vertex(layer, pos), VertexKind::Nondeterministic, &pay);
        }
    }
    for pos in 0..ell {
        for (layer, _) in layers {
            for succ in layer.successors() {
                b.edge(&ring_vertex(layer, pos), &ring_vertex(*succ, (pos + 1) % ell));
            }
        }
    }
    b.build()
}

fn check_even(ell: usize, d: usize) -> Result<()> {
    if ell < 2 || d < 2 || !ell.is_multiple_of(2) || !d.is_multiple_of(2) {
        return Err(Error::Instance(format!(
            "ring scenario needs even ℓ, d ≥ 2, got ({ell}, {d})"
        )));
    }
    Ok(())
}

/// `b_{ℓ,d} = (10(d/2 − 1) + 4) / d`.
pub fn b_formula(ell: usize, d: usize) -> Result<f64> {
    check_even(ell, d)?;
    Ok((10 * (d / 2 - 1) + 4) as f64 / d as f64)
}

/// `Eval_{ℓ,d}`: the threshold shortfall at `b_{ℓ,d}`.
pub fn ring_eval(ell: usize, d: usize) -> Result<EvalSpec> {
    Ok(EvalSpec::Threshold(b_formula(ell, d)?))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The deterministic cycle `M I^k M O^k` (`k = d/2 − 1`) started at the
/// middle vertex of position 0 and repeated `lcm(ℓ,d)/d` times.
fn optimal_cycle(ell: usize, d: usize) -> Result<Vec<(Layer, usize)>> {
    check_even(ell, d)?;
    let k = d / 2 - 1;
    let mut pattern = vec![Layer::Middle];
    pattern.extend(std::iter::repeat_n(Layer::Inner, k));
    pattern.push(Layer::Middle);
    pattern.extend(std::iter::repeat_n(Layer::Outer, k));
    let len = ell / gcd(ell, d) * d;
    Ok((0..len).map(|t| (pattern[t % d], t % ell)).collect())
}

/// Memory needed to realize the optimal cycle: the largest number of visits
/// to one vertex.
pub fn ring_memory_usage(ell: usize, d: usize) -> Result<usize> {
    let mut visits: HashMap<(Layer, usize), usize> = HashMap::new();
    for v in optimal_cycle(ell, d)? {
        *visits.entry(v).or_default() += 1;
    }
    Ok(visits.into_values().max().unwrap_or(1))
}

/// The optimal cycle as a strategy file for [`gen_ring3`]`(ℓ)`.
///
/// The `j`-th visit of a vertex uses memory state `j`. Vertices off the
/// cycle get one memory state and move to the next middle vertex, so they
/// are transient.
pub fn optimal_ring_strategy(ell: usize, d: usize) -> Result<String> {
    let cycle = optimal_cycle(ell, d)?;
    let mut visits: HashMap<(Layer, usize), u32> = HashMap::new();
    let mems: Vec<u32> = cycle
        .iter()
        .map(|v| {
            let c = visits.entry(*v).or_default();
            *c += 1;
            *c - 1
        })
        .collect();
    let memory = visits.values().copied().max().unwrap_or(1);
    let mut out = String::new();
    writeln!(out, "strategy memory={memory}").unwrap();
    for pos in 0..ell {
        for layer in [Layer::Inner, Layer::Middle, Layer::Outer] {
            let n = visits.get(&(layer, pos)).copied().unwrap_or(1);
            let list: Vec<String> = (0..n).map(|m| m.to_string()).collect();
            writeln!(out, "alloc {} {}", ring_vertex(layer, pos), list.join(",")).unwrap();
        }
    }
    for t in 0..cycle.len() {
        let u = (t + 1) % cycle.len();
        let ((la, pa), (lb, pb)) = (cycle[t], cycle[u]);
        writeln!(
            out,
            "move {}:{} -> {}:{} 1",
            ring_vertex(la, pa),
            mems[t],
            ring_vertex(lb, pb),
            mems[u]
        )
        .unwrap();
    }
    for pos in 0..ell {
        for layer in [Layer::Inner, Layer::Middle, Layer::Outer] {
            if !visits.contains_key(&(layer, pos)) {
                writeln!(
                    out,
                    "move {}:0 -> {}:0 1",
                    ring_vertex(layer, pos),
                    ring_vertex(Layer::Middle, (pos + 1) % ell)
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

/// Rows ℓ = 20, 18, …, 2; columns d = 2, 4, …, 20.
const K_TABLE: [[u8; 10]; 10] = [
    [1, 1, 1, 2, 1, 2, 3, 2, 4, 1],
    [1, 2, 1, 2, 2, 2, 3, 4, 1, 5],
    [1, 1, 1, 1, 2, 2, 3, 1, 4, 3],
    [1, 2, 1, 2, 2, 3, 1, 4, 4, 5],
    [1, 1, 1, 2, 2, 1, 3, 2, 2, 3],
    [1, 2, 1, 2, 1, 3, 3, 4, 4, 2],
    [1, 1, 1, 1, 2, 2, 3, 2, 4, 3],
    [1, 2, 1, 2, 2, 2, 3, 4, 2, 5],
    [1, 1, 1, 2, 2, 2, 3, 2, 4, 3],
    [1, 2, 1, 2, 2, 3, 3, 4, 4, 5],
];

/// Tabulated maximal memory of the optimal strategy for even `ℓ, d ∈ [2, 20]`.
pub fn k_memory_table(ell: usize, d: usize) -> Option<usize> {
    if !(2..=20).contains(&ell) || !(2..=20).contains(&d) || !ell.is_multiple_of(2) || !d.is_multiple_of(2) {
        return None;
    }
    Some(K_TABLE[(20 - ell) / 2][d / 2 - 1] as usize)
}
