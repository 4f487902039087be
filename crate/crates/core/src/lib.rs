//! Parametric affine coupling flows (Para-CFlows) and the machinery around them.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense matrices, small feed-forward nets with a reverse-mode
//!   gradient tape, Adam, finite-difference Jacobians.
//! - [`flows`]: affine coupling layers, permutations, the ascend map, the full
//!   Para-CFlow model, the dimension-eliminating inverse and checkpoints.
//! - [`diffeo`]: compactly supported maps on a grid, near-identity checks and
//!   the constructive factorization into single-coordinate transforms.
//! - [`taiji`]: the "Taiji" parametric rotation experiments.
//! - [`cbo`]: contextual Bayesian optimization with ensemble surrogates.

pub mod cbo;
pub mod diffeo;
pub mod error;
pub mod flows;
pub mod numkit;
pub mod taiji;

pub use error::{Error, Result};
pub use flows::{CouplingLayer, Eliminator, FlowStack, ParaCFlowConfig, ParaCFlowModel, Permutation};
pub use numkit::{Activation, AdamState, GradTape, Mat, MlpNet, TrainConfig};
