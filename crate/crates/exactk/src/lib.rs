//! Exact-K recommendation as constrained maximal-clique optimization:
//! an attention encoder-decoder policy trained by combined behavior
//! cloning and REINFORCE against a learned card-level reward estimator,
//! with greedy and brute-force baselines for verification.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gattn;
pub mod graph;
pub mod num;
pub mod reward;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

/// Concrete f64 instantiations of the generic numeric core.
pub type Tensor = num::TensorData<f64>;
pub type Tape = num::Tape<f64>;
pub type ParamStore = num::ParamStore<f64>;
pub type AdamState = num::AdamState<f64>;
