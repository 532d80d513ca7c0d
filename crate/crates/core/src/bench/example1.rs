//! The two-vertex graph of the introductory example and its reference strategies.

use crate::error::Result;
use crate::eval::EvalSpec;
use crate::mdp::{Mdp, MdpBuilder, VertexKind};
use crate::strategy::FrStrategy;

pub const EXAMPLE1_WINDOW: usize = 8;

/// Vertices `A` (payoffs 1, 0) and `B` (payoffs 0, 8), all four edges, with
/// the L1-to-(1,1) evaluation and penalty 5.
pub fn gen_example1() -> (Mdp, EvalSpec, usize) {
    let mut b = MdpBuilder::new(2);
    b.vertex("A", VertexKind::Nondeterministic, &[1, 0])
        .vertex("B", VertexKind::Nondeterministic, &[0, 8])
        .edge("A", "A")
        .edge("A", "B")
        .edge("B", "A")
        .edge("B", "B");
    let mdp = b.build().expect("example graph is valid");
    let spec = EvalSpec::L1Target {
        targets: vec![1.0, 1.0],
        penalty: 5.0,
    };
    (mdp, spec, EXAMPLE1_WINDOW)
}

/// A reference strategy with the expected value reported for it.
#[derive(Clone, Debug)]
pub struct Example1Strategy {
    pub name: &'static str,
    pub memory: usize,
    pub text: String,
    pub expected: f64,
    /// Whether `expected` is exact or rounded to two decimals.
    pub exact: bool,
}

impl Example1Strategy {
    pub fn strategy(&self, mdp: &Mdp) -> Result<FrStrategy> {
        FrStrategy::parse(mdp, &self.text)
    }
}

fn cycle_text(a_states: usize) -> String {
    let mems: Vec<String> = (0..a_states).map(|m| m.to_string()).collect();
    let mut s = format!("strategy memory={a_states}\nalloc A {}\nalloc B 0\n", mems.join(","));
    for m in 0..a_states - 1 {
        s += &format!("move A:{m} -> A:{} 1\n", m + 1);
    }
    s += &format!("move A:{} -> B:0 1\nmove B:0 -> A:0 1\n", a_states - 1);
    s
}

/// The five reference strategies of the two-vertex example.
pub fn example1_strategies() -> Vec<Example1Strategy> {
    vec![
        Example1Strategy {
            name: "k1-alternate",
            memory: 1,
            text: cycle_text(1),
            expected: 3.5,
            exact: true,
        },
        Example1Strategy {
            name: "k1-random",
            memory: 1,
            text: "strategy memory=1\nalloc A 0\nalloc B 0\n\
                   move A:0 -> A:0 0.73\nmove A:0 -> B:0 0.27\nmove B:0 -> A:0 1\n"
                .into(),
            expected: 1.43,
            exact: false,
        },
        Example1Strategy {
            name: "k2-aab",
            memory: 2,
            text: cycle_text(2),
            expected: 2.0,
            exact: true,
        },
        Example1Strategy {
            name: "k2-random",
            memory: 2,
            text: "strategy memory=2\nalloc A 0,1\nalloc B 0\n\
                   move A:0 -> A:0 0.55\nmove A:0 -> A:1 0.45\n\
                   move A:1 -> A:1 0.55\nmove A:1 -> B:0 0.45\nmove B:0 -> A:0 1\n"
                .into(),
            expected: 0.94,
            exact: false,
        },
        Example1Strategy {
            name: "k7-cycle",
            memory: 7,
            text: cycle_text(7),
            expected: 0.125,
            exact: true,
        },
    ]
}
