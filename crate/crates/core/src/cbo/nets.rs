use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::flows::ParaCFlowModel;
use crate::numkit::{gemm, mlp_mse_grad, Activation, GradTape, Mat, MlpNet, Parameterized};

/// Feed-forward net on `(c, a)` that appends the action to the input of every
/// layer after the first, including the output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppendResnet {
    context_dim: usize,
    action_dim: usize,
    weights: Vec<Mat>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

struct ResnetTape {
    inputs: Vec<Mat>,
    pre: Vec<Mat>,
}

impl AppendResnet {
    /// Scalar-output net with a scalar action.
    pub fn glorot<R: Rng + ?Sized>(context_dim: usize, hidden: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        Self::glorot_general(context_dim, 1, hidden, 1, activation, rng)
    }

    pub fn glorot_general<R: Rng + ?Sized>(
        context_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) || action_dim == 0 || output_dim == 0 {
            return Err(Error::Argument("resnet needs positive hidden, action and output widths".into()));
        }
        let mut fan_in = vec![context_dim + action_dim];
        fan_in.extend(hidden.iter().map(|h| h + action_dim));
        let mut fan_out = hidden.to_vec();
        fan_out.push(output_dim);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (&i, &o) in fan_in.iter().zip(&fan_out) {
            let limit = (6.0 / (i + o) as f64).sqrt();
            weights.push(Mat::from_fn(i, o, |_, _| rng.random_range(-limit..limit)));
            biases.push(vec![0.0; o]);
        }
        Ok(AppendResnet { context_dim, action_dim, weights, biases, activation })
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.cols())
    }

    pub fn weights_mut(&mut self) -> &mut [Mat] {
        &mut self.weights
    }

    /// Parameter count for the given shape.
    pub fn expected_param_count(context_dim: usize, hidden: &[usize]) -> usize {
        let mut fan_in = context_dim + 1;
        let mut total = 0;
        for &h in hidden {
            total += fan_in * h + h;
            fan_in = h + 1;
        }
        total + fan_in + 1
    }

    fn run(&self, x: &Mat, mut tape: Option<&mut ResnetTape>) -> Result<Mat> {
        let d = self.context_dim + self.action_dim;
        if x.cols() != d {
            return Err(shape(format!("resnet input {} expected {}", x.cols(), d)));
        }
        let a = x.cols_range(self.context_dim, d);
        let last = self.weights.len() - 1;
        let mut input = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = Mat::zeros(input.rows(), w.cols());
            for i in 0..z.rows() {
                z.row_mut(i).copy_from_slice(b);
            }
            gemm(false, &input, false, w, 1.0, &mut z);
            let next = if l < last {
                let mut h = z.clone();
                h.data_mut().iter_mut().for_each(|v| *v = self.activation.apply(*v));
                h.hcat(&a)?
            } else {
                z.clone()
            };
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(input);
                t.pre.push(z);
            }
            input = next;
        }
        Ok(input)
    }

    pub fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        self.run(x, None)
    }

    /// Inputs seen by each layer for one sample; the action fills the trailing entries of each.
    pub fn layer_inputs(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut tape = ResnetTape { inputs: vec![], pre: vec![] };
        self.run(&Mat::row_vector(x), Some(&mut tape))?;
        Ok(tape.inputs.into_iter().map(|m| m.into_vec()).collect())
    }

    /// Mean over all entries of the squared error against `y` (rows are samples).
    pub fn mse_grad(&self, x: &Mat, y: &Mat) -> Result<(f64, Vec<f64>)> {
        let mut tape = ResnetTape { inputs: vec![], pre: vec![] };
        let out = self.run(x, Some(&mut tape))?;
        if out.shape() != y.shape() {
            return Err(shape(format!("targets {:?} vs outputs {:?}", y.shape(), out.shape())));
        }
        let n = y.data().len() as f64;
        let mut delta = out;
        let mut loss = 0.0;
        for (d, &t) in delta.data_mut().iter_mut().zip(y.data()) {
            let r = *d - t;
            loss += r * r;
            *d = 2.0 * r / n;
        }
        let mut offsets = Vec::new();
        let mut off = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(off);
            off += w.data().len() + b.len();
        }
        let mut grad = vec![0.0; off];
        let last = self.weights.len() - 1;
        for l in (0..=last).rev() {
            let w = &self.weights[l];
            let (fi, fo) = w.shape();
            let o = offsets[l];
            let mut gw = Mat::zeros(fi, fo);
            gemm(true, &tape.inputs[l], false, &delta, 0.0, &mut gw);
            grad[o..o + fi * fo].copy_from_slice(gw.data());
            for i in 0..delta.rows() {
                for (g, d) in grad[o + fi * fo..o + fi * fo + fo].iter_mut().zip(delta.row(i)) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let mut din = Mat::zeros(delta.rows(), fi);
            gemm(false, &delta, true, w, 0.0, &mut din);
            // drop the appended action columns, then undo the activation
            let k = fi - self.action_dim;
            let mut dh = din.cols_range(0, k);
            let z = &tape.pre[l - 1];
            let h = tape.inputs[l].cols_range(0, k);
            for ((d, &zv), &hv) in dh.data_mut().iter_mut().zip(z.data()).zip(h.data()) {
                *d *= self.activation.derivative(zv, hv);
            }
            delta = dh;
        }
        Ok((loss / n, grad))
    }
}

impl Parameterized for AppendResnet {
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

/// MLP whose context and action are first lifted by separate affine maps to a
/// common width and then concatenated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscendMlp {
    context_dim: usize,
    lift_c: MlpNet,
    lift_a: MlpNet,
    body: MlpNet,
}

impl AscendMlp {
    pub fn glorot<R: Rng + ?Sized>(
        context_dim: usize,
        lift: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let lift_c = MlpNet::glorot(&[context_dim, lift], activation, rng)?;
        let lift_a = MlpNet::glorot(&[1, lift], activation, rng)?;
        let mut dims = vec![2 * lift];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let body = MlpNet::glorot(&dims, activation, rng)?;
        Ok(AscendMlp { context_dim, lift_c, lift_a, body })
    }

    pub fn lift_width(&self) -> usize {
        self.lift_c.output_dim()
    }

    pub fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        let d = self.context_dim;
        if x.cols() != d + 1 {
            return Err(shape(format!("input {} expected {}", x.cols(), d + 1)));
        }
        let hc = self.lift_c.forward_batch(&x.cols_range(0, d))?;
        let ha = self.lift_a.forward_batch(&x.cols_range(d, d + 1))?;
        self.body.forward_batch(&hc.hcat(&ha)?)
    }

    pub fn mse_grad(&self, x: &Mat, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.context_dim;
        if x.cols() != d + 1 {
            return Err(shape(format!("input {} expected {}", x.cols(), d + 1)));
        }
        let (mut tc, mut ta, mut tb) = (GradTape::new(), GradTape::new(), GradTape::new());
        let hc = tc.forward(&self.lift_c, &x.cols_range(0, d))?;
        let ha = ta.forward(&self.lift_a, &x.cols_range(d, d + 1))?;
        let out = tb.forward(&self.body, &hc.hcat(&ha)?)?;
        let n = y.len() as f64;
        let mut adj = Mat::zeros(y.len(), 1);
        let mut loss = 0.0;
        for (i, &t) in y.iter().enumerate() {
            let r = out.get(i, 0) - t;
            loss += r * r;
            adj.set(i, 0, 2.0 * r / n);
        }
        let (nc, na) = (self.lift_c.param_count(), self.lift_a.param_count());
        let mut grad = vec![0.0; self.param_count()];
        let dh = tb.backward_into(&self.body, &adj, &mut grad[nc + na..])?;
        let w = self.lift_width();
        tc.backward_into(&self.lift_c, &dh.cols_range(0, w), &mut grad[..nc])?;
        ta.backward_into(&self.lift_a, &dh.cols_range(w, 2 * w), &mut grad[nc..nc + na])?;
        Ok((loss / n, grad))
    }
}

impl Parameterized for AscendMlp {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        self.lift_c.visit_params(f);
        self.lift_a.visit_params(f);
        self.body.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.lift_c.visit_params_mut(f);
        self.lift_a.visit_params_mut(f);
        self.body.visit_params_mut(f);
    }
}

/// One base model of a surrogate ensemble. Inputs are rows `(c, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SurrogateNet {
    #[serde(rename = "paracflow")]
    ParaCFlow(ParaCFlowModel),
    Mlp(MlpNet),
    MlpAscend(AscendMlp),
    Resnet(AppendResnet),
}

impl SurrogateNet {
    fn context_dim(&self) -> usize {
        match self {
            SurrogateNet::ParaCFlow(m) => m.config().context_dim,
            SurrogateNet::Mlp(n) => n.input_dim() - 1,
            SurrogateNet::MlpAscend(n) => n.context_dim,
            SurrogateNet::Resnet(n) => n.context_dim,
        }
    }

    fn split(&self, x: &Mat) -> Result<(Mat, Mat)> {
        let d = self.context_dim();
        if x.cols() != d + 1 {
            return Err(shape(format!("input {} expected {}", x.cols(), d + 1)));
        }
        Ok((x.cols_range(0, d), x.cols_range(d, d + 1)))
    }

    pub fn predict_batch(&self, x: &Mat) -> Result<Vec<f64>> {
        match self {
            SurrogateNet::ParaCFlow(m) => {
                let (c, a) = self.split(x)?;
                m.predict_batch(&c, &a)
            }
            SurrogateNet::Mlp(n) => Ok(n.forward_batch(x)?.into_vec()),
            SurrogateNet::MlpAscend(n) => Ok(n.forward_batch(x)?.into_vec()),
            SurrogateNet::Resnet(n) => Ok(n.forward_batch(x)?.into_vec()),
        }
    }

    /// Batch-mean squared error against `y` and its parameter gradient.
    pub fn mse_grad(&self, x: &Mat, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.rows() != y.len() {
            return Err(shape(format!("{} inputs vs {} targets", x.rows(), y.len())));
        }
        match self {
            SurrogateNet::ParaCFlow(m) => {
                let (c, a) = self.split(x)?;
                m.scalar_loss_grad(&c, &a, y)
            }
            SurrogateNet::Mlp(n) => mlp_mse_grad(n, x, &Mat::from_vec(y.len(), 1, y.to_vec())?),
            SurrogateNet::MlpAscend(n) => n.mse_grad(x, y),
            SurrogateNet::Resnet(n) => n.mse_grad(x, &Mat::from_vec(y.len(), 1, y.to_vec())?),
        }
    }
}

impl Parameterized for SurrogateNet {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            SurrogateNet::ParaCFlow(m) => m.visit_params(f),
            SurrogateNet::Mlp(n) => n.visit_params(f),
            SurrogateNet::MlpAscend(n) => n.visit_params(f),
            SurrogateNet::Resnet(n) => n.visit_params(f),
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            SurrogateNet::ParaCFlow(m) => m.visit_params_mut(f),
            SurrogateNet::Mlp(n) => n.visit_params_mut(f),
            SurrogateNet::MlpAscend(n) => n.visit_params_mut(f),
            SurrogateNet::Resnet(n) => n.visit_params_mut(f),
        }
    }
}
