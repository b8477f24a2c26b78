//! Dense feed-forward networks with reverse-mode gradients.
//!
//! An [`Mlp`] pairs an immutable [`MlpSpec`] (layer widths and activations)
//! with [`MlpParams`] (per-layer weight matrices and bias vectors). The
//! forward pass caches every pre- and post-activation so [`Mlp::backward`]
//! can produce exact reverse-mode gradients of any scalar loss seeded
//! through `output_grads`. Gradients can also be seeded at an intermediate
//! layer, which is how feature-matching losses reach the generator.
//!
//! Weight matrices are stored `(in_dim, out_dim)` so a batch forward is
//! `x.dot(w) + b` on row-major `(batch, dim)` matrices.

mod optim;

pub use optim::{EmaParams, OptimizerKind, OptimizerState};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Weight initialization scale; biases start at zero.
pub const INIT_STD: f64 = 0.05;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
}

impl Activation {
    /// Leaky ReLU with the standard 0.2 slope.
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }

    fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the cached pre-activation `z` and output `a`.
    fn grad(&self, z: f64, a: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Output-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

impl OutputActivation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Tanh => z.tanh(),
            OutputActivation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    fn grad(&self, _z: f64, a: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Tanh => 1.0 - a * a,
            OutputActivation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Layer widths and activations of a dense network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 layer widths, got {}",
                layer_widths.len()
            )));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidSpec("layer widths must be positive".into()));
        }
        if let Activation::LeakyRelu { slope } = hidden_activation {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "leaky relu slope must be in (0, 1), got {slope}"
                )));
            }
        }
        Ok(Self {
            layer_widths,
            hidden_activation,
            output_activation,
        })
    }

    /// Spec with ReLU hidden layers and identity (logit) outputs.
    pub fn relu(layer_widths: Vec<usize>) -> Result<Self> {
        Self::new(layer_widths, Activation::Relu, OutputActivation::Identity)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("at least two widths")
    }

    /// Number of weight layers.
    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    fn activation_for(&self, layer: usize) -> LayerActivation {
        if layer + 1 == self.num_layers() {
            LayerActivation::Output(self.output_activation)
        } else {
            LayerActivation::Hidden(self.hidden_activation)
        }
    }
}

#[derive(Clone, Copy)]
enum LayerActivation {
    Hidden(Activation),
    Output(OutputActivation),
}

impl LayerActivation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            LayerActivation::Hidden(a) => a.apply(z),
            LayerActivation::Output(a) => a.apply(z),
        }
    }

    fn grad(&self, z: f64, a: f64) -> f64 {
        match self {
            LayerActivation::Hidden(act) => act.grad(z, a),
            LayerActivation::Output(act) => act.grad(z, a),
        }
    }
}

/// Per-layer weights and biases. Also serves as the gradient container:
/// gradients of a loss with respect to an `MlpParams` have the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let mut weights = Vec::with_capacity(spec.num_layers());
        let mut biases = Vec::with_capacity(spec.num_layers());
        for l in 0..spec.num_layers() {
            weights.push(Array2::zeros((spec.layer_widths[l], spec.layer_widths[l + 1])));
            biases.push(Array1::zeros(spec.layer_widths[l + 1]));
        }
        Self { weights, biases }
    }

    pub fn matches_spec(&self, spec: &MlpSpec) -> bool {
        self.weights.len() == spec.num_layers()
            && self.biases.len() == spec.num_layers()
            && (0..spec.num_layers()).all(|l| {
                self.weights[l].dim() == (spec.layer_widths[l], spec.layer_widths[l + 1])
                    && self.biases[l].len() == spec.layer_widths[l + 1]
            })
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Flattens to a single vector: per layer, weights row-major then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            out.extend(self.weights[l].iter());
            out.extend(self.biases[l].iter());
        }
        out
    }

    /// Overwrites all parameters from a flat vector in [`flatten`] order.
    ///
    /// [`flatten`]: MlpParams::flatten
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat length mismatch");
        let mut i = 0;
        for l in 0..self.weights.len() {
            for w in self.weights[l].iter_mut() {
                *w = flat[i];
                i += 1;
            }
            for b in self.biases[l].iter_mut() {
                *b = flat[i];
                i += 1;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (w, ow) in self.weights.iter_mut().zip(&other.weights) {
            w.zip_mut_with(ow, |a, &b| *a += scale * b);
        }
        for (b, ob) in self.biases.iter_mut().zip(&other.biases) {
            b.zip_mut_with(ob, |a, &c| *a += scale * c);
        }
    }

    /// Sum of squared weight entries, biases excluded.
    pub fn weight_squared_norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

/// A spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

/// Draws weights from `N(0, INIT_STD^2)` and zeroes biases.
pub fn init_params(spec: &MlpSpec, rng: &mut Rng) -> MlpParams {
    let mut params = MlpParams::zeros(spec);
    for l in 0..spec.num_layers() {
        params.weights[l] =
            rng.normal_matrix(spec.layer_widths[l], spec.layer_widths[l + 1], INIT_STD);
    }
    params
}

impl Mlp {
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Self {
        let params = init_params(&spec, rng);
        Self { spec, params }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn check_input(&self, inputs: &Array2<f64>) -> Result<()> {
        if inputs.ncols() != self.spec.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "forward",
                expected: format!("{} input columns", self.spec.input_dim()),
                got: format!("{}", inputs.ncols()),
            });
        }
        Ok(())
    }

    /// Batch forward pass; rows are samples.
    pub fn forward(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(inputs)?.into_output())
    }

    /// Forward pass keeping every pre- and post-activation for [`Mlp::backward`].
    pub fn forward_cached(&self, inputs: &Array2<f64>) -> Result<ForwardCache> {
        self.check_input(inputs)?;
        let layers = self.spec.num_layers();
        let mut pre = Vec::with_capacity(layers);
        let mut post = Vec::with_capacity(layers);
        let mut current = inputs.clone();
        for l in 0..layers {
            let z = current.dot(&self.params.weights[l]) + &self.params.biases[l];
            let act = self.spec.activation_for(l);
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            current = a.clone();
            post.push(a);
        }
        Ok(ForwardCache {
            input: inputs.clone(),
            pre,
            post,
        })
    }

    /// Reverse-mode gradients of a scalarized loss.
    ///
    /// `output_grads` holds dL/d(output) per row; the returned pair is
    /// (parameter gradients, dL/d(input)).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grads: &Array2<f64>,
    ) -> Result<(MlpParams, Array2<f64>)> {
        self.backward_from_layer(cache, self.spec.num_layers(), output_grads)
    }

    /// Backpropagates from the post-activation of layer `upto - 1`.
    ///
    /// `upto` counts weight layers: `upto == num_layers` seeds at the
    /// network output; `upto == j` seeds at hidden activation `j - 1` and
    /// leaves gradients for layers `>= j` at zero. Used to push
    /// feature-layer gradients down into a generator.
    pub fn backward_from_layer(
        &self,
        cache: &ForwardCache,
        upto: usize,
        grads_at_activation: &Array2<f64>,
    ) -> Result<(MlpParams, Array2<f64>)> {
        let layers = self.spec.num_layers();
        if upto == 0 || upto > layers {
            return Err(Error::ShapeMismatch {
                context: "backward_from_layer",
                expected: format!("layer index in 1..={layers}"),
                got: format!("{upto}"),
            });
        }
        if cache.pre.len() != layers || cache.input.ncols() != self.spec.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "backward",
                expected: "cache from a matching forward".into(),
                got: "mismatched cache".into(),
            });
        }
        if grads_at_activation.dim() != cache.post[upto - 1].dim() {
            return Err(Error::ShapeMismatch {
                context: "backward",
                expected: format!("{:?}", cache.post[upto - 1].dim()),
                got: format!("{:?}", grads_at_activation.dim()),
            });
        }

        let mut grads = MlpParams::zeros(&self.spec);
        let mut upstream = grads_at_activation.clone();
        for l in (0..upto).rev() {
            let act = self.spec.activation_for(l);
            // dz = upstream ⊙ act'(pre)
            let mut dz = upstream;
            ndarray::Zip::from(&mut dz)
                .and(&cache.pre[l])
                .and(&cache.post[l])
                .for_each(|g, &z, &a| *g *= act.grad(z, a));
            let below = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            grads.weights[l] = below.t().dot(&dz);
            grads.biases[l] = dz.sum_axis(Axis(0));
            upstream = dz.dot(&self.params.weights[l].t());
        }
        Ok((grads, upstream))
    }
}

/// Activations recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("at least one layer")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.post.pop().expect("at least one layer")
    }

    /// Post-activation of weight layer `layer` (0-based).
    pub fn activation(&self, layer: usize) -> &Array2<f64> {
        &self.post[layer]
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

#[cfg(test)]
mod tests;
