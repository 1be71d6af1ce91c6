//! A small dense feed-forward network with hand-written backpropagation.
//!
//! Frames are columns: a network with input width `D` maps a `D x N` matrix to
//! an `o x N` matrix, each column independently.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::{read_matrix, write_matrix, MatrixFormat};

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenActivation {
    Tanh,
    LeakyRelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    Linear,
    /// `tanh(v) + 0.5`, the bounded increasing activation used for gate means.
    GateAlpha,
}

/// `alpha(v) = tanh(v) + 0.5`. Range `(-0.5, 1.5)`.
pub fn gate_alpha(v: f64) -> f64 {
    v.tanh() + 0.5
}

pub fn gate_alpha_prime(v: f64) -> f64 {
    let t = v.tanh();
    1.0 - t * t
}

impl HiddenActivation {
    fn apply(self, v: f64) -> f64 {
        match self {
            HiddenActivation::Tanh => v.tanh(),
            HiddenActivation::LeakyRelu => {
                if v > 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
        }
    }

    fn derivative(self, v: f64) -> f64 {
        match self {
            HiddenActivation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            HiddenActivation::LeakyRelu => {
                if v > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

impl OutputActivation {
    fn apply(self, v: f64) -> f64 {
        match self {
            OutputActivation::Linear => v,
            OutputActivation::GateAlpha => gate_alpha(v),
        }
    }

    fn derivative(self, v: f64) -> f64 {
        match self {
            OutputActivation::Linear => 1.0,
            OutputActivation::GateAlpha => gate_alpha_prime(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub seed: u64,
    /// Initial value of every bias in the last layer.
    #[serde(default)]
    pub output_bias: f64,
}

impl MlpSpec {
    /// Embedding network `[input, 128, 64, out]` with leaky-ReLU hidden units.
    pub fn embedding(input: usize, out: usize, seed: u64) -> Self {
        MlpSpec {
            layer_widths: vec![input, 128, 64, out],
            hidden_activation: HiddenActivation::LeakyRelu,
            output_activation: OutputActivation::Linear,
            seed,
            output_bias: 0.0,
        }
    }

    /// Gating network `[context, 64, gates]`; the final bias starts at 0.5 so
    /// that gates begin mostly open.
    pub fn gating(context: usize, gates: usize, seed: u64) -> Self {
        MlpSpec {
            layer_widths: vec![context, 64, gates],
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::GateAlpha,
            seed,
            output_bias: 0.5,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 || self.layer_widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network needs at least two positive widths, got {:?}",
                self.layer_widths
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    spec: MlpSpec,
}

/// Activations cached by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `inputs[l]` is what layer `l` consumed.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<DMatrix<f64>>,
}

/// Per-layer parameter gradients, shaped like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.norm_squared() + l.bias.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = spec.layer_widths.len() - 1;
        let layers = spec
            .layer_widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..bound));
                let b0 = if l + 1 == n { spec.output_bias } else { 0.0 };
                Layer {
                    weight,
                    bias: DVector::from_element(fan_out, b0),
                }
            })
            .collect();
        Ok(Mlp { layers, spec })
    }

    /// Builds a network from explicit parameters; shapes must chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() + 1 != spec.layer_widths.len() {
            return Err(Error::Shape(format!(
                "{} layers for widths {:?}",
                layers.len(),
                spec.layer_widths
            )));
        }
        for (l, (layer, w)) in layers.iter().zip(spec.layer_widths.windows(2)).enumerate() {
            if layer.weight.shape() != (w[1], w[0]) || layer.bias.len() != w[1] {
                return Err(Error::Shape(format!("layer {l} does not match widths {w:?}")));
            }
        }
        Ok(Mlp { layers, spec })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn forward(&self, input: &DMatrix<f64>) -> Result<(DMatrix<f64>, Tape)> {
        if input.nrows() != self.spec.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} input features, got {}",
                self.spec.input_width(),
                input.nrows()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weight * &h;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            let a = if l + 1 == n {
                let act = self.spec.output_activation;
                z.map(|v| act.apply(v))
            } else {
                let act = self.spec.hidden_activation;
                z.map(|v| act.apply(v))
            };
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok((h, Tape { inputs, pre }))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, grad_output: &DMatrix<f64>) -> Result<(Gradients, DMatrix<f64>)> {
        let n = self.layers.len();
        if tape.pre.len() != n {
            return Err(Error::Shape("tape was recorded by a different network".into()));
        }
        let last = &tape.pre[n - 1];
        if grad_output.shape() != last.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_output.shape(),
                last.shape()
            )));
        }
        let mut grads = Vec::with_capacity(n);
        let out_act = self.spec.output_activation;
        let mut delta = grad_output.zip_map(last, |g, z| g * out_act.derivative(z));
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.weight.ncols() != tape.inputs[l].nrows() {
                return Err(Error::Shape(format!("tape does not match layer {l}")));
            }
            let gw = &delta * tape.inputs[l].transpose();
            let gb = delta.column_sum();
            grads.push(Layer { weight: gw, bias: gb });
            let back = layer.weight.transpose() * &delta;
            delta = if l > 0 {
                let act = self.spec.hidden_activation;
                back.zip_map(&tape.pre[l - 1], |g, z| g * act.derivative(z))
            } else {
                back
            };
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Writes one binary matrix per tensor plus a `manifest.json` with the spec
    /// and tensor shapes.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tensors = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let w = format!("layer{l}_weight.bin");
            let b = format!("layer{l}_bias.bin");
            write_matrix(&dir.join(&w), &layer.weight, MatrixFormat::Binary)?;
            let bias = DMatrix::from_column_slice(layer.bias.len(), 1, layer.bias.as_slice());
            write_matrix(&dir.join(&b), &bias, MatrixFormat::Binary)?;
            tensors.push(TensorEntry {
                file: w,
                rows: layer.weight.nrows(),
                cols: layer.weight.ncols(),
            });
            tensors.push(TensorEntry {
                file: b,
                rows: layer.bias.len(),
                cols: 1,
            });
        }
        let manifest = CheckpointManifest {
            spec: self.spec.clone(),
            tensors,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CheckpointManifest =
            serde_json::from_str(&text).map_err(|e| Error::load(&path, e.to_string()))?;
        let mut layers = Vec::new();
        for pair in manifest.tensors.chunks(2) {
            let [w, b] = pair else {
                return Err(Error::load(&path, "tensor list must pair weights with biases"));
            };
            let weight = read_matrix(&dir.join(&w.file), MatrixFormat::Binary)?;
            let bias = read_matrix(&dir.join(&b.file), MatrixFormat::Binary)?;
            if weight.shape() != (w.rows, w.cols) || bias.shape() != (b.rows, b.cols) {
                return Err(Error::load(&path, "tensor shape disagrees with manifest"));
            }
            layers.push(Layer {
                weight,
                bias: DVector::from_column_slice(bias.as_slice()),
            });
        }
        Mlp::from_layers(manifest.spec, layers)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    file: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    spec: MlpSpec,
    tensors: Vec<TensorEntry>,
}

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Layer>,
    second: Vec<Layer>,
}

impl OptimizerState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let zeros: Vec<Layer> = net
            .layers
            .iter()
            .map(|l| Layer {
                weight: DMatrix::zeros(l.weight.nrows(), l.weight.ncols()),
                bias: DVector::zeros(l.bias.len()),
            })
            .collect();
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected adaptive-moment update, applied in place.
pub fn optimizer_step(net: &mut Mlp, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    if grads.layers.len() != net.layers.len()
        || grads
            .layers
            .iter()
            .zip(&net.layers)
            .any(|(g, p)| g.weight.shape() != p.weight.shape() || g.bias.len() != p.bias.len())
    {
        return Err(Error::Shape("gradient shapes do not match the network".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            p[k] -= lr * mh / (vh.sqrt() + eps);
        }
    };
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[l];
        let (m, v) = (&mut state.first[l], &mut state.second[l]);
        update(
            layer.weight.as_mut_slice(),
            g.weight.as_slice(),
            m.weight.as_mut_slice(),
            v.weight.as_mut_slice(),
        );
        update(
            layer.bias.as_mut_slice(),
            g.bias.as_slice(),
            m.bias.as_mut_slice(),
            v.bias.as_mut_slice(),
        );
    }
    Ok(())
}
