use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mat::{gemm, Mat};
use crate::error::{shape, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Anything with a flat, ordered list of trainable parameters.
///
/// The traversal order of `visit_params` and `visit_params_mut` must agree with
/// the layout of gradient vectors produced for the implementor.
pub trait Parameterized {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |s| n += s.len());
        n
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params(&mut |s| out.extend_from_slice(s));
        out
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(shape(format!("expected {n} parameters, got {}", flat.len())));
        }
        let mut off = 0;
        self.visit_params_mut(&mut |s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        Ok(())
    }
}

/// Fully connected feed-forward network.
///
/// Weights are stored input-major (`dims[l] x dims[l+1]`) so that a batch
/// `X` (rows = samples) maps to `X·W + b`. Hidden layers use `activation`,
/// the output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    dims: Vec<usize>,
    weights: Vec<Mat>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

impl MlpNet {
    /// All-zero network.
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Argument(format!("invalid layer dims {dims:?}")));
        }
        let weights = dims.windows(2).map(|w| Mat::zeros(w[0], w[1])).collect();
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(MlpNet { dims: dims.to_vec(), weights, biases, activation })
    }

    /// Uniform Glorot initialization, biases zero.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims, activation)?;
        for w in &mut net.weights {
            let (fan_in, fan_out) = w.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn from_parts(dims: Vec<usize>, weights: Vec<Mat>, biases: Vec<Vec<f64>>, activation: Activation) -> Result<Self> {
        let mut net = Self::zeros(&dims, activation)?;
        if weights.len() != net.weights.len() || biases.len() != net.biases.len() {
            return Err(shape("layer count does not match dims"));
        }
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            if w.shape() != net.weights[l].shape() || b.len() != net.biases[l].len() {
                return Err(shape(format!("layer {l} shape does not match dims")));
            }
            net.weights[l] = w;
            net.biases[l] = b;
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Mat] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// `Σ (dims[i] + 1) · dims[i+1]`.
    pub fn expected_param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Zeroes the output layer so the network starts as the zero map.
    pub fn zero_output_layer(&mut self) {
        let last = self.weights.len() - 1;
        self.weights[last].data_mut().fill(0.0);
        self.biases[last].fill(0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(shape(format!("net input {} expected {}", x.len(), self.input_dim())));
        }
        let mut a = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = b.clone();
            for (i, &ai) in a.iter().enumerate() {
                if ai != 0.0 {
                    for (zj, wij) in z.iter_mut().zip(w.row(i)) {
                        *zj += ai * wij;
                    }
                }
            }
            if l < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Batched forward pass, rows are samples.
    pub fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        self.run_batch(x, None)
    }

    fn run_batch(&self, x: &Mat, mut tape: Option<&mut GradTape>) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(shape(format!("net input {} expected {}", x.cols(), self.input_dim())));
        }
        let last = self.weights.len() - 1;
        let mut a = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = Mat::zeros(a.rows(), w.cols());
            for i in 0..z.rows() {
                z.row_mut(i).copy_from_slice(b);
            }
            gemm(false, &a, false, w, 1.0, &mut z);
            let out = if l < last {
                let mut h = z.clone();
                h.data_mut().iter_mut().for_each(|v| *v = self.activation.apply(*v));
                h
            } else {
                z.clone()
            };
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(a);
                t.pre.push(z);
            }
            a = out;
        }
        if let Some(t) = tape {
            t.outputs = Some(a.clone());
        }
        Ok(a)
    }
}

impl Parameterized for MlpNet {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            f(w.data());
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            f(w.data_mut());
            f(b);
        }
    }
}

/// Reverse-mode record of one batched forward pass through an [`MlpNet`].
///
/// The primitive ops of a fully connected net are affine maps and elementwise
/// activations; the tape keeps each layer's input and pre-activation so the
/// backward sweep can replay them in reverse.
#[derive(Debug, Default, Clone)]
pub struct GradTape {
    inputs: Vec<Mat>,
    pre: Vec<Mat>,
    outputs: Option<Mat>,
}

/// Gradients of a backward sweep.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    /// Flat parameter gradient in [`Parameterized`] order.
    pub params: Vec<f64>,
    /// Adjoint of the network input.
    pub input: Mat,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_recorded(&self) -> bool {
        self.outputs.is_some()
    }

    /// Runs a forward pass, recording it. Any previous record is discarded.
    pub fn forward(&mut self, net: &MlpNet, x: &Mat) -> Result<Mat> {
        self.clear();
        net.run_batch(x, Some(self))
    }

    pub fn clear(&mut self) {
        self.inputs.clear();
        self.pre.clear();
        self.outputs = None;
    }

    /// Back-propagates `adjoint` (d loss / d output, same shape as the output).
    pub fn backward(&self, net: &MlpNet, adjoint: &Mat) -> Result<MlpGrads> {
        let mut params = vec![0.0; net.param_count()];
        let input = self.backward_into(net, adjoint, &mut params)?;
        Ok(MlpGrads { params, input })
    }

    /// Like [`backward`](Self::backward) but accumulates into `grad`, which must
    /// have the net's parameter count.
    pub fn backward_into(&self, net: &MlpNet, adjoint: &Mat, grad: &mut [f64]) -> Result<Mat> {
        let out = self
            .outputs
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        if adjoint.shape() != out.shape() {
            return Err(shape(format!("adjoint {:?} vs output {:?}", adjoint.shape(), out.shape())));
        }
        if self.inputs.len() != net.weights.len() || grad.len() != net.param_count() {
            return Err(Error::State("tape was recorded for a different network".into()));
        }
        // Offsets of each layer's (weight, bias) block in the flat layout.
        let mut offsets = Vec::with_capacity(net.weights.len());
        let mut off = 0;
        for (w, b) in net.weights.iter().zip(&net.biases) {
            offsets.push(off);
            off += w.data().len() + b.len();
        }
        let last = net.weights.len() - 1;
        let mut delta = adjoint.clone();
        for l in (0..=last).rev() {
            if l < last {
                let z = &self.pre[l];
                let a_out = &self.inputs[l + 1];
                for ((d, &zv), &av) in delta.data_mut().iter_mut().zip(z.data()).zip(a_out.data()) {
                    *d *= net.activation.derivative(zv, av);
                }
            }
            let w = &net.weights[l];
            let (fan_in, fan_out) = w.shape();
            let o = offsets[l];
            let mut gw = Mat::from_vec(fan_in, fan_out, grad[o..o + fan_in * fan_out].to_vec())?;
            gemm(true, &self.inputs[l], false, &delta, 1.0, &mut gw);
            grad[o..o + fan_in * fan_out].copy_from_slice(gw.data());
            let gb = &mut grad[o + fan_in * fan_out..o + fan_in * fan_out + fan_out];
            for i in 0..delta.rows() {
                for (g, d) in gb.iter_mut().zip(delta.row(i)) {
                    *g += d;
                }
            }
            let mut prev = Mat::zeros(delta.rows(), fan_in);
            gemm(false, &delta, true, w, 0.0, &mut prev);
            delta = prev;
        }
        Ok(delta)
    }
}

/// Single-sample convenience: gradient of `<loss_adjoint, net(x)>`.
pub fn mlp_grad(net: &MlpNet, tape: &GradTape, loss_adjoint: &[f64]) -> Result<MlpGrads> {
    tape.backward(net, &Mat::row_vector(loss_adjoint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::fd::fd_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_gives_zero() {
        let net = MlpNet::zeros(&[3, 5, 2], Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let net = MlpNet::from_parts(vec![2, 2], vec![Mat::identity(2)], vec![vec![0.0; 2]], Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn tanh_chain_by_hand() {
        // y = v · tanh(w·x + b) + c
        let (w, b, v, c) = (1.5, -0.2, 0.7, 0.1);
        let net = MlpNet::from_parts(
            vec![1, 1, 1],
            vec![Mat::from_vec(1, 1, vec![w]).unwrap(), Mat::from_vec(1, 1, vec![v]).unwrap()],
            vec![vec![b], vec![c]],
            Activation::Tanh,
        )
        .unwrap();
        let x = 0.5;
        let expected = v * (w * x + b).tanh() + c;
        assert!((net.forward(&[x]).unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_error_on_bad_input() {
        let net = MlpNet::zeros(&[3, 2], Activation::Tanh).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let net = MlpNet::zeros(&[2, 2], Activation::Tanh).unwrap();
        let tape = GradTape::new();
        assert!(matches!(tape.backward(&net, &Mat::zeros(1, 2)), Err(Error::State(_))));
    }

    #[test]
    fn zero_adjoint_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpNet::glorot(&[3, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let mut tape = GradTape::new();
        tape.forward(&net, &Mat::row_vector(&[0.1, 0.2, 0.3])).unwrap();
        let g = mlp_grad(&net, &tape, &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_least_squares_gradient_closed_form() {
        // L = ||W^T x + b - y||^2  =>  dL/dW = 2 x r^T, dL/db = 2 r
        let w = Mat::from_vec(2, 1, vec![0.5, -1.0]).unwrap();
        let net = MlpNet::from_parts(vec![2, 1], vec![w], vec![vec![0.25]], Activation::Tanh).unwrap();
        let x = [2.0, 3.0];
        let y = 1.0;
        let mut tape = GradTape::new();
        let out = tape.forward(&net, &Mat::row_vector(&x)).unwrap();
        let r = out.get(0, 0) - y;
        let g = mlp_grad(&net, &tape, &[2.0 * r]).unwrap();
        assert!((g.params[0] - 2.0 * r * x[0]).abs() < 1e-14);
        assert!((g.params[1] - 2.0 * r * x[1]).abs() < 1e-14);
        assert!((g.params[2] - 2.0 * r).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in [Activation::Tanh, Activation::Relu] {
            let net = MlpNet::glorot(&[4, 6, 5, 3], act, &mut rng).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let adj: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut tape = GradTape::new();
            tape.forward(&net, &Mat::row_vector(&x)).unwrap();
            let g = mlp_grad(&net, &tape, &adj).unwrap();
            let p0 = net.flat_params();
            let fd = fd_gradient(
                |p| {
                    let mut n = net.clone();
                    n.set_flat_params(p).unwrap();
                    n.forward(&x).unwrap().iter().zip(&adj).map(|(a, b)| a * b).sum()
                },
                &p0,
                1e-5,
            );
            let num: f64 = g.params.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(num / den < 1e-6, "{act:?}: rel err {}", num / den);
        }
    }

    #[test]
    fn param_count_formula() {
        let net = MlpNet::zeros(&[7, 64, 2], Activation::Tanh).unwrap();
        assert_eq!(net.param_count(), MlpNet::expected_param_count(&[7, 64, 2]));
        assert_eq!(net.param_count(), 8 * 64 + 65 * 2);
    }
}
