//! Dense-network training toolkit for generator-based manifold regularization.
//!
//! The crate is organized around a small reverse-mode MLP engine ([`nn`]),
//! synthetic 2D datasets ([`data`]), stochastic finite-difference smoothness
//! regularizers driven by a generator ([`reg`]), toy GAN training with
//! consensus updates ([`gan`]), the K+1 semi-supervised GAN ([`ssl`]), and
//! decoupled / unsupervised classifier training plus evaluation ([`train`]).
//!
//! Everything is `f64`, single-threaded, and deterministic given an explicit
//! [`Rng`] seed.

pub mod check;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gan;
pub mod nn;
pub mod reg;
pub mod report;
pub mod rng;
pub mod ssl;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::{LabeledSet, SplitSpec, UNLABELED};
pub use error::{Error, Result};
pub use gan::{ConsensusConfig, GanModel, LatentDist};
pub use nn::{
    Activation, EmaParams, Mlp, MlpParams, MlpSpec, OptimizerKind, OptimizerState,
    OutputActivation,
};
pub use reg::{Direction, RegularizerConfig, RegularizerVariant};
pub use report::LossReport;
pub use rng::Rng;
pub use ssl::{SslGanModel, SslLossWeights};
pub use train::{DecoupledConfig, EntropyMode, RunSummary, UnsupConfig};
