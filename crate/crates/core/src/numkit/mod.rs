//! Numeric substrate: matrices, feed-forward nets with reverse-mode gradients,
//! Adam, finite differences.

pub mod adam;
pub mod fd;
pub mod linalg;
pub mod mat;
pub mod mlp;
pub mod rng;
pub mod train;

pub use adam::AdamState;
pub use fd::{fd_gradient, fd_jacobian};
pub use linalg::{determinant, numerical_rank, singular_values};
pub use mat::{gemm, Mat};
pub use mlp::{mlp_grad, Activation, GradTape, MlpGrads, MlpNet, Parameterized};
pub use rng::{derive_seed, rng_for, rng_from, Rng64};
pub use train::{mlp_mse_grad, train_minibatch, train_mlp_mse, TrainConfig};

/// Evaluates a net on one input. Alias of [`MlpNet::forward`].
pub fn mlp_forward(net: &MlpNet, x: &[f64]) -> crate::Result<Vec<f64>> {
    net.forward(x)
}
