//! Small fully-connected networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat vector so the optimizer and finite-difference
//! checks can treat them uniformly. Layer `l` occupies a row-major weight
//! block `W_l` of shape `(out, in)` followed by its bias `b_l`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "PADGAN-CKPT-1";

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    /// Leaky ReLU with negative slope 0.2.
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    /// True for piecewise-linear activations with a kink at zero.
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl NetworkSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            layer_widths,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidArgument("network needs at least 2 layer widths".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// `Σ_l (w_l·w_{l+1} + w_{l+1})`
    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Offsets of (weights, bias) for layer `l`.
    fn offsets(&self, layer: usize) -> (usize, usize) {
        let start: usize = self.layer_widths[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let (fan_in, fan_out) = (self.layer_widths[layer], self.layer_widths[layer + 1]);
        (start, start + fan_in * fan_out)
    }
}

/// Row-major batch of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    context: "Matrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParameters {
    pub values: Vec<f64>,
}

impl NetworkParameters {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.values.len() != spec.param_count() {
            return Err(Error::ShapeMismatch {
                context: "network parameters",
                expected: spec.param_count(),
                actual: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(())
    }
}

/// Weights ~ U(−b, b) with `b = sqrt(3 / fan_in)` (unit-variance preserving
/// for tanh/identity layers) or `b = sqrt(6 / fan_in)` when the hidden layers
/// are (leaky) ReLU. Biases start at zero.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> NetworkParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = if spec.hidden_activation.has_kink() { 6.0 } else { 3.0 };
    let mut values = Vec::with_capacity(spec.param_count());
    for w in spec.layer_widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (gain / fan_in as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    NetworkParameters { values }
}

/// Activations saved by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    activations: Vec<Matrix>,
    preactivations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().unwrap()
    }

    pub fn preactivations(&self) -> &[Matrix] {
        &self.preactivations
    }
}

pub fn forward(spec: &NetworkSpec, params: &NetworkParameters, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
    params.check_len(spec)?;
    if input.cols != spec.input_width() {
        return Err(Error::ShapeMismatch {
            context: "forward input width",
            expected: spec.input_width(),
            actual: input.cols,
        });
    }
    let batch = input.rows;
    let mut activations = vec![input.clone()];
    let mut preactivations = Vec::with_capacity(spec.num_layers());
    for layer in 0..spec.num_layers() {
        let (fan_in, fan_out) = (spec.layer_widths[layer], spec.layer_widths[layer + 1]);
        let (w_off, b_off) = spec.offsets(layer);
        let weights = &params.values[w_off..w_off + fan_in * fan_out];
        let bias = &params.values[b_off..b_off + fan_out];
        let act = spec.activation(layer);
        let prev = activations.last().unwrap();
        let mut z = Matrix::zeros(batch, fan_out);
        let mut a = Matrix::zeros(batch, fan_out);
        for r in 0..batch {
            let x = prev.row(r);
            let zr = z.row_mut(r);
            for o in 0..fan_out {
                let w_row = &weights[o * fan_in..(o + 1) * fan_in];
                zr[o] = bias[o] + w_row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
            for (ao, zo) in a.row_mut(r).iter_mut().zip(z.row(r)) {
                *ao = act.apply(*zo);
            }
        }
        preactivations.push(z);
        activations.push(a);
    }
    let output = activations.last().unwrap().clone();
    Ok((output, ForwardCache { activations, preactivations }))
}

/// Exact gradients of `Σ_rows ⟨output_grad, output⟩` with respect to the
/// parameters and to the input batch.
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParameters,
    cache: &ForwardCache,
    output_grad: &Matrix,
) -> Result<(Vec<f64>, Matrix)> {
    params.check_len(spec)?;
    let out = cache.output();
    if output_grad.cols != out.cols || output_grad.rows != out.rows {
        return Err(Error::ShapeMismatch {
            context: "backward output gradient",
            expected: out.rows * out.cols,
            actual: output_grad.rows * output_grad.cols,
        });
    }
    if cache.preactivations.len() != spec.num_layers() {
        return Err(Error::ShapeMismatch {
            context: "backward cache depth",
            expected: spec.num_layers(),
            actual: cache.preactivations.len(),
        });
    }
    let batch = out.rows;
    let mut grads = vec![0.0; params.len()];
    let mut upstream = output_grad.clone();
    for layer in (0..spec.num_layers()).rev() {
        let (fan_in, fan_out) = (spec.layer_widths[layer], spec.layer_widths[layer + 1]);
        let (w_off, b_off) = spec.offsets(layer);
        let act = spec.activation(layer);
        let z = &cache.preactivations[layer];
        let a = &cache.activations[layer + 1];
        let prev = &cache.activations[layer];
        let weights = &params.values[w_off..w_off + fan_in * fan_out];

        // delta = upstream ⊙ act'(z)
        let mut delta = upstream;
        for r in 0..batch {
            let (zr, ar) = (z.row(r), a.row(r));
            for (o, d) in delta.row_mut(r).iter_mut().enumerate() {
                *d *= act.derivative(zr[o], ar[o]);
            }
        }

        let mut next = Matrix::zeros(batch, fan_in);
        for r in 0..batch {
            let d = delta.row(r);
            let x = prev.row(r);
            let nr = next.row_mut(r);
            for o in 0..fan_out {
                let dout = d[o];
                if dout == 0.0 {
                    continue;
                }
                grads[b_off + o] += dout;
                let gw = &mut grads[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += dout * xi;
                }
                for (n, w) in nr.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *n += dout * w;
                }
            }
        }
        upstream = next;
    }
    Ok((grads, upstream))
}

impl NetworkParameters {
    fn check_len(&self, spec: &NetworkSpec) -> Result<()> {
        if self.values.len() != spec.param_count() {
            return Err(Error::ShapeMismatch {
                context: "network parameters",
                expected: spec.param_count(),
                actual: self.values.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            config,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            context: "adam_step",
            expected: params.len(),
            actual: grads.len().min(state.m.len()),
        });
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// On-disk network record. `output_lo`/`output_hi` carry the affine output
/// map of a generator and are absent for other roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub magic: String,
    pub role: String,
    pub spec: NetworkSpec,
    pub parameters: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_hi: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(role: &str, spec: &NetworkSpec, params: &NetworkParameters, optimizer: Option<&AdamState>) -> Self {
        Self {
            magic: CHECKPOINT_MAGIC.to_string(),
            role: role.to_string(),
            spec: spec.clone(),
            parameters: params.values.clone(),
            optimizer: optimizer.cloned(),
            output_lo: None,
            output_hi: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if ckpt.magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: format!("unknown magic {:?}", ckpt.magic),
            });
        }
        ckpt.spec.validate()?;
        NetworkParameters {
            values: ckpt.parameters.clone(),
        }
        .check(&ckpt.spec)?;
        Ok(ckpt)
    }

    pub fn params(&self) -> NetworkParameters {
        NetworkParameters {
            values: self.parameters.clone(),
        }
    }
}
