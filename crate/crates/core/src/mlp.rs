//! Fully connected networks with hand-written backpropagation.
//!
//! The same [`MlpParams`] type serves as GAN generator, GAN discriminator and
//! regression network. Adversarial losses take the logarithm of the
//! discriminator output clamped to `[LOG_CLAMP, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Matrix, Result};

/// Lower clamp applied to every probability before taking its logarithm.
pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            _ => return None,
        })
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    /// One `in x out` matrix per layer.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    hidden: Activation,
    output: Activation,
}

/// Gradients shaped exactly like the parameters of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Layer inputs and pre-activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the network input, `activations[L]` its output.
    pub activations: Vec<Matrix>,
    pub pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("at least the input")
    }
}

impl MlpParams {
    /// Zero-initialized network.
    pub fn zeros(layer_sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::config(format!(
                "layer sizes must list at least two positive widths, got {layer_sizes:?}"
            )));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[0], w[1]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden,
            output,
        })
    }

    /// Uniform Glorot initialization (He scaling for relu layers), zero biases.
    pub fn random<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, hidden, output)?;
        let n_layers = p.weights.len();
        for (l, w) in p.weights.iter_mut().enumerate() {
            let (fan_in, fan_out) = w.shape();
            let act = if l + 1 == n_layers { output } else { hidden };
            let limit = match act {
                Activation::Relu => libm::sqrt(6.0 / fan_in as f64),
                _ => libm::sqrt(6.0 / (fan_in + fan_out) as f64),
            };
            for v in w.as_mut_slice() {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(p)
    }

    pub fn from_parts(
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::shape("need one bias vector per weight matrix"));
        }
        let mut layer_sizes = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *layer_sizes.last().unwrap() || w.cols() != b.len() || w.cols() == 0 {
                return Err(Error::shape(format!("layer {l} shapes are inconsistent")));
            }
            layer_sizes.push(w.cols());
        }
        Ok(MlpParams {
            layer_sizes,
            weights,
            biases,
            hidden,
            output,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Overwrites every parameter from a vector laid out like [`flatten`](Self::flatten).
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&values[at..at + n]);
            at += n;
            let m = b.len();
            b.copy_from_slice(&values[at..at + m]);
            at += m;
        }
        Ok(())
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<ForwardCache> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.weights.len());
        activations.push(input.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].matmul(w)?;
            for i in 0..z.rows() {
                for (v, bias) in z.row_mut(i).iter_mut().zip(b) {
                    *v += bias;
                }
            }
            let act = self.activation_of(l);
            activations.push(z.map(|v| act.apply(v)));
            pre_activations.push(z);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut cache = self.forward_cached(input)?;
        Ok(cache.activations.pop().unwrap())
    }

    /// Backpropagates `∂loss/∂output` through a cached forward pass.
    ///
    /// Returns parameter gradients and `∂loss/∂input`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &Matrix,
    ) -> Result<(MlpGradients, Matrix)> {
        if grad_output.shape() != cache.output().shape() {
            return Err(Error::shape(
                "output gradient does not match the forward pass",
            ));
        }
        let n_layers = self.weights.len();
        let mut grad_w = Vec::with_capacity(n_layers);
        let mut grad_b = Vec::with_capacity(n_layers);
        let mut delta = grad_output.clone();
        for l in (0..n_layers).rev() {
            let act = self.activation_of(l);
            let z = &cache.pre_activations[l];
            let a = &cache.activations[l + 1];
            for ((d, &zv), &av) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(z.as_slice())
                .zip(a.as_slice())
            {
                *d *= act.derivative(zv, av);
            }
            grad_w.push(cache.activations[l].t_matmul(&delta)?);
            let mut gb = vec![0.0; delta.cols()];
            for r in delta.row_iter() {
                for (g, v) in gb.iter_mut().zip(r) {
                    *g += v;
                }
            }
            grad_b.push(gb);
            delta = delta.matmul(&self.weights[l].transpose())?;
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok((
            MlpGradients {
                weights: grad_w,
                biases: grad_b,
            },
            delta,
        ))
    }

    /// Plain gradient step `θ ← θ − lr·g`.
    pub fn sgd_step(&mut self, grads: &MlpGradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (v, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *v -= lr * gv;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (v, gv) in b.iter_mut().zip(g) {
                *v -= lr * gv;
            }
        }
    }
}

/// Which term of the adversarial value function (or the regression loss) to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `−mean log D(x)` over real samples.
    BceReal,
    /// `−mean log(1 − D(x))` over generated samples.
    BceFake,
    /// `−mean log D(G(z))`, the non-saturating generator objective. On a
    /// discriminator alone it equals `BceReal`; see [`generator_gradient`].
    GeneratorNonSaturating,
    /// `mean (y − t)²` against explicit targets.
    SquaredError,
}

impl LossKind {
    pub fn tag(self) -> &'static str {
        match self {
            LossKind::BceReal => "bce_real",
            LossKind::BceFake => "bce_fake",
            LossKind::GeneratorNonSaturating => "generator_nonsaturating",
            LossKind::SquaredError => "squared_error",
        }
    }
}

/// Loss value and `∂loss/∂output` for a network output.
pub fn loss_and_output_grad(
    output: &Matrix,
    loss: LossKind,
    targets: Option<&Matrix>,
) -> Result<(f64, Matrix)> {
    let count = (output.rows() * output.cols()).max(1) as f64;
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    let mut total = 0.0;
    match loss {
        LossKind::BceReal | LossKind::GeneratorNonSaturating => {
            for (g, &d) in grad.as_mut_slice().iter_mut().zip(output.as_slice()) {
                if d > LOG_CLAMP {
                    total -= libm::log(d.min(1.0));
                    *g = -1.0 / (d * count);
                } else {
                    total -= libm::log(LOG_CLAMP);
                }
            }
        }
        LossKind::BceFake => {
            for (g, &d) in grad.as_mut_slice().iter_mut().zip(output.as_slice()) {
                let q = 1.0 - d;
                if q > LOG_CLAMP {
                    total -= libm::log(q.min(1.0));
                    *g = 1.0 / (q * count);
                } else {
                    total -= libm::log(LOG_CLAMP);
                }
            }
        }
        LossKind::SquaredError => {
            let t = targets.ok_or_else(|| Error::shape("squared error needs targets"))?;
            if t.shape() != output.shape() {
                return Err(Error::shape(format!(
                    "targets are {}x{}, outputs {}x{}",
                    t.rows(),
                    t.cols(),
                    output.rows(),
                    output.cols()
                )));
            }
            for ((g, &y), &tv) in grad
                .as_mut_slice()
                .iter_mut()
                .zip(output.as_slice())
                .zip(t.as_slice())
            {
                let e = y - tv;
                total += e * e;
                *g = 2.0 * e / count;
            }
        }
    }
    Ok((total / count, grad))
}

pub fn loss_value(
    p: &MlpParams,
    input: &Matrix,
    loss: LossKind,
    targets: Option<&Matrix>,
) -> Result<f64> {
    let out = p.forward(input)?;
    Ok(loss_and_output_grad(&out, loss, targets)?.0)
}

/// Analytic gradient of the selected loss with respect to the parameters of `p`.
pub fn mlp_gradient(
    p: &MlpParams,
    input: &Matrix,
    loss: LossKind,
    targets: Option<&Matrix>,
) -> Result<(f64, MlpGradients)> {
    let cache = p.forward_cached(input)?;
    let (value, grad_out) = loss_and_output_grad(cache.output(), loss, targets)?;
    let (grads, _) = p.backward(&cache, &grad_out)?;
    Ok((value, grads))
}

/// `−mean log D(G(z))` and its gradient with respect to the generator only.
pub fn generator_gradient(
    gen: &MlpParams,
    disc: &MlpParams,
    z: &Matrix,
) -> Result<(f64, MlpGradients)> {
    let g_cache = gen.forward_cached(z)?;
    let d_cache = disc.forward_cached(g_cache.output())?;
    let (value, grad_out) =
        loss_and_output_grad(d_cache.output(), LossKind::GeneratorNonSaturating, None)?;
    let (_, grad_fake) = disc.backward(&d_cache, &grad_out)?;
    let (grads, _) = gen.backward(&g_cache, &grad_fake)?;
    Ok((value, grads))
}

pub fn generator_loss(gen: &MlpParams, disc: &MlpParams, z: &Matrix) -> Result<f64> {
    let fake = gen.forward(z)?;
    loss_value(disc, &fake, LossKind::GeneratorNonSaturating, None)
}
