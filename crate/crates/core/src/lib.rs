//! Window mean-payoff objectives for Markov decision processes: models,
//! expected window evaluation, gradient-based strategy synthesis and
//! benchmark generators.

pub mod augment;
pub mod bench;
pub mod chain;
pub mod check;
pub mod error;
pub mod eval;
pub mod grad;
pub mod linalg;
pub mod mdp;
pub mod strategy;
pub mod synth;
pub mod textfmt;
pub mod window;

pub use augment::{build_augmented, AugVertex, Augmented, MemoryAllocation, MemoryId, SoftmaxGroup};
pub use chain::{induced_chain, invariant_distribution, tarjan_bsccs, Bscc, InvariantDistribution, MarkovChain};
pub use error::{Error, Result};
pub use eval::{Decomposable, Eval, EvalSpec};
pub use grad::{Gradients, Tape, Var};
pub use mdp::{validate_mdp, Mdp, MdpBuilder, ValidationReport, VertexKind, Violation};
pub use strategy::{materialize_strategy, FrStrategy, StrategyParams};
pub use window::{
    gval_bscc, window_expectation_dfs, window_expectation_dp, wval_bscc, wval_strategy, Method, WindowPlan,
    WvalReport,
};
pub use synth::{evaluate_strategy_file, synthesize, Objective, SynthConfig, SynthResult};
