//! Instance generators and brute-force oracles.

pub mod brute;
pub mod example1;
pub mod gadget;
pub mod random;
pub mod ring;
pub mod timing;

pub use brute::{brute_force_memoryless, BruteForce, ENUMERATION_BUDGET};
pub use example1::{example1_strategies, gen_example1, Example1Strategy};
pub use gadget::{gen_gadget, parse_dimacs, Gadget, GadgetInstance};
pub use ring::{b_formula, gen_ring3, k_memory_table, optimal_ring_strategy, ring_eval, ring_memory_usage};
