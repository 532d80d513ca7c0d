//! Reduction gadgets on the two-choice ring: `s_i → {t_i, u_i} → s_{i+1}`.
//!
//! Taking `u_i` selects item `i` (or sets variable `x_i` true); every window
//! of length `2ℓ` covers one full round.

use crate::error::{Error, Result};
use crate::eval::EvalSpec;
use crate::mdp::{Mdp, MdpBuilder, VertexKind};

/// A source combinatorial instance.
#[derive(Clone, Debug, PartialEq)]
pub enum GadgetInstance {
    /// Is there a subset of `nums` summing to `target`?
    SubsetSum { nums: Vec<i64>, target: i64 },
    /// Is there a subset with total value ≥ `value` and total weight ≤ `capacity`?
    /// Items are `(value, weight)`.
    Knapsack {
        items: Vec<(i64, i64)>,
        value: i64,
        capacity: i64,
    },
    /// Is the CNF satisfiable? Literals are DIMACS-style: `i` is `x_{i−1}`, `−i` its negation.
    Sat { num_vars: usize, clauses: Vec<Vec<i32>> },
}

/// A generated gadget: the graph, its evaluation function and window length.
#[derive(Clone, Debug)]
pub struct Gadget {
    pub mdp: Mdp,
    pub eval: EvalSpec,
    pub d: usize,
}

impl GadgetInstance {
    /// Ring length `ℓ`.
    pub fn len(&self) -> usize {
        match self {
            GadgetInstance::SubsetSum { nums, .. } => nums.len(),
            GadgetInstance::Knapsack { items, .. } => items.len(),
            GadgetInstance::Sat { num_vars, .. } => *num_vars,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Instance("instance has no items or variables".into()));
        }
        match self {
            GadgetInstance::SubsetSum { .. } => Ok(()),
            GadgetInstance::Knapsack { items, capacity, .. } => {
                if items.iter().any(|(v, w)| *v < 0 || *w < 0) {
                    return Err(Error::Instance("knapsack values and weights must be non-negative".into()));
                }
                let total: i64 = items.iter().map(|(_, w)| w).sum();
                if total <= *capacity {
                    return Err(Error::Instance(format!(
                        "total weight {total} must exceed the capacity {capacity}"
                    )));
                }
                Ok(())
            }
            GadgetInstance::Sat { num_vars, clauses } => {
                if clauses.is_empty() {
                    return Err(Error::Instance("formula has no clauses".into()));
                }
                for c in clauses {
                    if c.is_empty() {
                        return Err(Error::Instance("empty clause".into()));
                    }
                    if let Some(l) = c.iter().find(|l| **l == 0 || l.unsigned_abs() as usize > *num_vars) {
                        return Err(Error::Instance(format!("literal {l} out of range")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Decides the instance by exhaustive enumeration of subsets / assignments.
    pub fn is_yes(&self) -> bool {
        let n = self.len();
        (0u64..1 << n).any(|mask| {
            let chosen = |i: usize| mask >> i & 1 == 1;
            match self {
                GadgetInstance::SubsetSum { nums, target } => {
                    (0..n).filter(|&i| chosen(i)).map(|i| nums[i]).sum::<i64>() == *target
                }
                GadgetInstance::Knapsack {
                    items,
                    value,
                    capacity,
                } => {
                    let (v, w) = (0..n)
                        .filter(|&i| chosen(i))
                        .fold((0, 0), |(v, w), i| (v + items[i].0, w + items[i].1));
                    v >= *value && w <= *capacity
                }
                GadgetInstance::Sat { clauses, .. } => clauses.iter().all(|c| {
                    c.iter().any(|&l| chosen(l.unsigned_abs() as usize - 1) == (l > 0))
                }),
            }
        })
    }
}

fn ring(k: usize, n: usize, pay: impl Fn(char, usize) -> Vec<i64>) -> Result<Mdp> {
    let mut b = MdpBuilder::new(k);
    for i in 0..n {
        for c in ['s', 't', 'u'] {
            b.vertex(&format!("{c}{i}"), VertexKind::Nondeterministic, &pay(c, i));
        }
    }
    for i in 0..n {
        let next = format!("s{}", (i + 1) % n);
        b.edge(&format!("s{i}"), &format!("t{i}"))
            .edge(&format!("s{i}"), &format!("u{i}"))
            .edge(&format!("t{i}"), &next)
            .edge(&format!("u{i}"), &next);
    }
    b.build()
}

/// Builds the gadget for `inst` with `d = 2ℓ`.
pub fn gen_gadget(inst: &GadgetInstance) -> Result<Gadget> {
    inst.validate()?;
    let n = inst.len();
    let d = 2 * n;
    let (mdp, eval) = match inst {
        GadgetInstance::SubsetSum { nums, target } => {
            let mdp = ring(1, n, |c, i| match (c, i) {
                ('s', 0) => vec![-target],
                ('u', _) => vec![nums[i]],
                _ => vec![0],
            })?;
            (mdp, EvalSpec::Abs)
        }
        GadgetInstance::Knapsack {
            items,
            value,
            capacity,
        } => {
            let wmax = items.iter().map(|(_, w)| *w).max().unwrap_or(0);
            let mdp = ring(2, n, |c, i| match c {
                'u' => vec![items[i].0, wmax - items[i].1],
                _ => vec![0, wmax],
            })?;
            let eval = EvalSpec::Gadget {
                thresholds: vec![*value as f64 / d as f64, wmax as f64 - *capacity as f64 / d as f64],
                t: 1.0,
            };
            (mdp, eval)
        }
        GadgetInstance::Sat { clauses, .. } => {
            let mdp = ring(clauses.len(), n, |c, i| {
                let lit = match c {
                    'u' => i as i32 + 1,
                    't' => -(i as i32 + 1),
                    _ => return vec![0; clauses.len()],
                };
                clauses.iter().map(|cl| cl.contains(&lit) as i64).collect()
            })?;
            (mdp, EvalSpec::Positive { t: 1.0 })
        }
    };
    Ok(Gadget { mdp, eval, d })
}

/// Parses a CNF in DIMACS format.
pub fn parse_dimacs(text: &str) -> Result<GadgetInstance> {
    let bad = |msg: String| Error::Instance(format!("DIMACS: {msg}"));
    let mut num_vars = None;
    let mut clauses = Vec::new();
    let mut cur = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() != 3 || toks[0] != "cnf" {
                return Err(bad(format!("bad problem line `{line}`")));
            }
            num_vars = Some(toks[1].parse::<usize>().map_err(|_| bad("bad variable count".into()))?);
            continue;
        }
        for tok in line.split_whitespace() {
            let l: i32 = tok.parse().map_err(|_| bad(format!("bad literal `{tok}`")))?;
            if l == 0 {
                clauses.push(std::mem::take(&mut cur));
            } else {
                cur.push(l);
            }
        }
    }
    if !cur.is_empty() {
        clauses.push(cur);
    }
    let num_vars = num_vars.ok_or_else(|| bad("missing `p cnf` line".into()))?;
    let inst = GadgetInstance::Sat { num_vars, clauses };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_solvers() {
        let yes = GadgetInstance::SubsetSum {
            nums: vec![3, 5, 7],
            target: 8,
        };
        let no = GadgetInstance::SubsetSum {
            nums: vec![2, 4],
            target: 5,
        };
        assert!(yes.is_yes());
        assert!(!no.is_yes());
        let sat = parse_dimacs("c x\np cnf 2 2\n1 -2 0\n-1 0\n").unwrap();
        assert!(sat.is_yes());
        let unsat = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        assert!(!unsat.is_yes());
    }

    #[test]
    fn knapsack_needs_overweight() {
        let k = GadgetInstance::Knapsack {
            items: vec![(1, 1)],
            value: 1,
            capacity: 1,
        };
        assert!(gen_gadget(&k).is_err());
    }

    #[test]
    fn gadget_shape() {
        let g = gen_gadget(&GadgetInstance::SubsetSum {
            nums: vec![3, 5, 7],
            target: 8,
        })
        .unwrap();
        assert_eq!(g.d, 6);
        assert_eq!(g.mdp.len(), 9);
        assert_eq!(g.mdp.payoff(g.mdp.index_of("s0").unwrap()), &[-8]);
    }
}
