//! Inference and learning for Markov random fields with intractable
//! partition functions.
//!
//! The crate trains energy-based models (RBM, two-layer DBM, Gaussian RBM)
//! by an adversarial variational scheme: an encoder bounds the free energy
//! from above, a decoder with an auxiliary latent bounds the log partition
//! function from below, and the two bounds are optimized minimax-style by
//! alternating stochastic gradient descent. Contrastive-divergence style
//! baselines (CD/PCD/VCD) and a variational partition-function baseline
//! (NVIL) share the same trainer, and annealed importance sampling plus
//! exact brute-force oracles cover evaluation at desk scale.

pub mod arch;
pub mod array;
pub mod data;
pub mod energy;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod objectives;
pub mod rng;
pub mod tape;
pub mod trainer;
pub mod variational;

pub use array::DenseArray;
pub use error::{Error, Result};
pub use rng::Prng;
pub use tape::{GradMap, NodeId, OpKind, ParamBlock, Role, Tape};
