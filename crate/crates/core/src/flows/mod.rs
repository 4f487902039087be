//! Parametric affine coupling flows.

pub mod checkpoint;
pub mod coupling;
pub mod eliminator;
pub mod model;
pub mod permutation;
pub mod stack;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_SCHEMA_VERSION};
pub use coupling::{CouplingLayer, CouplingTape, SIGMA_CLAMP};
pub use eliminator::{fit_eliminator, invert_padded, Eliminator, EliminatorConfig};
pub use model::{ascend, FeatureDataset, ParaCFlowConfig, ParaCFlowModel, ScalarDataset};
pub use permutation::Permutation;
pub use stack::{FlowStack, FlowStep, StackTape};
