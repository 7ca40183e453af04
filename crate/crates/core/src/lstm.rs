//! Stacked LSTM with a dense sequence-to-vector head.
//!
//! Per layer and timestep:
//!
//! ```text
//! f = σ(W_f x + U_f h' + b_f)      i = σ(W_i x + U_i h' + b_i)
//! o = σ(W_o x + U_o h' + b_o)      g = tanh(W_c x + U_c h' + b_c)
//! c = f ∘ c' + i ∘ g               h = o ∘ tanh(c)
//! ```
//!
//! Gate weights of a layer are stored as one `4H × in` block (and `4H × H`,
//! `4H`) with gate rows in the order forget, input, output, cell. The batched
//! forward pass runs layer by layer so that the input projection of a whole
//! sequence is a single matrix product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{FeatureVector, NormalizationParams, FEATURE_DIM, FEATURE_LAYOUT_VERSION, TARGET_HOURS};
use crate::linalg;

/// Hidden sizes of the four-layer forecaster, bottom to top.
pub const DEFAULT_HIDDEN: [usize; 4] = [100, 90, 80, 70];
/// Hidden sizes of the two-layer variant.
pub const TWO_LAYER_HIDDEN: [usize; 2] = [100, 80];

#[derive(Debug, Error, PartialEq)]
pub enum LstmError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("model needs at least one layer")]
    NoLayers,
    #[error("dropout rate {0} outside [0, 1)")]
    BadDropout(f64),
}

fn expect_dim(what: &'static str, expected: usize, found: usize) -> Result<(), LstmError> {
    if expected == found {
        Ok(())
    } else {
        Err(LstmError::DimensionMismatch { what, expected, found })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Output = 2,
    Cell = 3,
}

impl Gate {
    pub const ORDER: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Cell];
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `4H × input_size`, gate blocks in [`Gate::ORDER`].
    pub w: Vec<f64>,
    /// `4H × H`.
    pub u: Vec<f64>,
    /// `4H`.
    pub b: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let g = 4 * hidden_size;
        Self {
            input_size,
            hidden_size,
            w: vec![0.0; g * input_size],
            u: vec![0.0; g * hidden_size],
            b: vec![0.0; g],
        }
    }

    pub fn gate_w(&self, gate: Gate) -> &[f64] {
        let n = self.hidden_size * self.input_size;
        &self.w[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_u(&self, gate: Gate) -> &[f64] {
        let n = self.hidden_size * self.hidden_size;
        &self.u[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_b(&self, gate: Gate) -> &[f64] {
        let h = self.hidden_size;
        &self.b[gate as usize * h..(gate as usize + 1) * h]
    }

    pub fn parameter_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }

    fn check(&self) -> Result<(), LstmError> {
        let g = 4 * self.hidden_size;
        expect_dim("layer W", g * self.input_size, self.w.len())?;
        expect_dim("layer U", g * self.hidden_size, self.u.len())?;
        expect_dim("layer b", g, self.b.len())
    }
}

/// Affine map from the top hidden state to the outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    pub input_size: usize,
    pub output_size: usize,
    /// `output_size × input_size`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseHead {
    pub fn zeros(input_size: usize, output_size: usize) -> Self {
        Self {
            input_size,
            output_size,
            w: vec![0.0; input_size * output_size],
            b: vec![0.0; output_size],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            h: vec![0.0; hidden_size],
            c: vec![0.0; hidden_size],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateValues {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    /// tanh candidate.
    pub cell: Vec<f64>,
}

/// One LSTM step for a single sequence.
pub fn lstm_cell_step(
    layer: &LstmLayerParams,
    x: &[f64],
    state: &LstmState,
) -> Result<(LstmState, GateValues), LstmError> {
    layer.check()?;
    expect_dim("cell input", layer.input_size, x.len())?;
    expect_dim("hidden state", layer.hidden_size, state.h.len())?;
    expect_dim("cell state", layer.hidden_size, state.c.len())?;
    let h = layer.hidden_size;
    let pre = |gate: Gate, j: usize| {
        let w = &layer.gate_w(gate)[j * layer.input_size..(j + 1) * layer.input_size];
        let u = &layer.gate_u(gate)[j * h..(j + 1) * h];
        linalg::dot(w, x) + linalg::dot(u, &state.h) + layer.gate_b(gate)[j]
    };
    let mut gates = GateValues {
        forget: vec![0.0; h],
        input: vec![0.0; h],
        output: vec![0.0; h],
        cell: vec![0.0; h],
    };
    let mut next = LstmState::zeros(h);
    for j in 0..h {
        let f = sigmoid(pre(Gate::Forget, j));
        let i = sigmoid(pre(Gate::Input, j));
        let o = sigmoid(pre(Gate::Output, j));
        let g = pre(Gate::Cell, j).tanh();
        let c = f * state.c[j] + i * g;
        next.c[j] = c;
        next.h[j] = o * c.tanh();
        gates.forget[j] = f;
        gates.input[j] = i;
        gates.output[j] = o;
        gates.cell[j] = g;
    }
    Ok((next, gates))
}

/// Weights of the recurrent stack and its head; also the shape of gradients
/// and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct StackWeights {
    pub layers: Vec<LstmLayerParams>,
    pub head: DenseHead,
}

impl StackWeights {
    pub fn zeros(input_size: usize, hidden: &[usize], output_size: usize) -> Result<Self, LstmError> {
        if hidden.is_empty() {
            return Err(LstmError::NoLayers);
        }
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_size;
        for &h in hidden {
            layers.push(LstmLayerParams::zeros(fan_in, h));
            fan_in = h;
        }
        Ok(Self {
            layers,
            head: DenseHead::zeros(fan_in, output_size),
        })
    }

    /// Uniform `[-s, s]` weights with `s = 1/sqrt(fan_in)` per matrix. Biases
    /// are zero except the forget gate, which starts at 1.
    pub fn init_uniform(input_size: usize, hidden: &[usize], output_size: usize, seed: u64) -> Result<Self, LstmError> {
        let mut w = Self::zeros(input_size, hidden, output_size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |v: &mut [f64], fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for x in v {
                *x = rng.random_range(-s..=s);
            }
        };
        for layer in &mut w.layers {
            fill(&mut layer.w, layer.input_size);
            fill(&mut layer.u, layer.hidden_size);
            let h = layer.hidden_size;
            layer.b[..h].fill(1.0);
        }
        fill(&mut w.head.w, w.head.input_size);
        Ok(w)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn output_size(&self) -> usize {
        self.head.output_size
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_size).collect()
    }

    /// Every parameter tensor in storage order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(self.layers.len() * 3 + 2);
        for l in &self.layers {
            out.extend([l.w.as_slice(), l.u.as_slice(), l.b.as_slice()]);
        }
        out.extend([self.head.w.as_slice(), self.head.b.as_slice()]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(self.layers.len() * 3 + 2);
        for l in &mut self.layers {
            out.push(&mut l.w);
            out.push(&mut l.u);
            out.push(&mut l.b);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks that dimensions chain from layer to layer and into the head.
    pub fn check(&self) -> Result<(), LstmError> {
        if self.layers.is_empty() {
            return Err(LstmError::NoLayers);
        }
        let mut fan_in = self.layers[0].input_size;
        for l in &self.layers {
            expect_dim("layer input", fan_in, l.input_size)?;
            l.check()?;
            fan_in = l.hidden_size;
        }
        expect_dim("head input", fan_in, self.head.input_size)?;
        expect_dim("head W", self.head.input_size * self.head.output_size, self.head.w.len())?;
        expect_dim("head b", self.head.output_size, self.head.b.len())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    /// Batched forward pass. Returns `batch × output_size` outputs and, in
    /// training mode, the activations needed for backpropagation.
    pub fn forward_batch(&self, batch: &SequenceBatch, mode: Mode) -> Result<(Vec<f64>, Option<ForwardCache>), LstmError> {
        self.check()?;
        expect_dim("sequence features", self.input_size(), batch.features)?;
        if batch.steps == 0 {
            return Err(LstmError::DimensionMismatch {
                what: "sequence length",
                expected: 1,
                found: 0,
            });
        }
        let (dropout, seed) = match mode {
            Mode::Infer => (0.0, 0),
            Mode::Train { dropout_rate, seed } => {
                if !(0.0..1.0).contains(&dropout_rate) {
                    return Err(LstmError::BadDropout(dropout_rate));
                }
                (dropout_rate, seed)
            }
        };
        let training = matches!(mode, Mode::Train { .. });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (steps, b) = (batch.steps, batch.batch);

        let mut layer_input = batch.data.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = layer.hidden_size;
            let g4 = 4 * h;
            let rows = steps * b;
            // Input projection for every timestep at once.
            let mut gates = vec![0.0; rows * g4];
            linalg::mul_transposed(&layer_input, &layer.w, rows, layer.input_size, g4, &mut gates, false);
            let mut cells = vec![0.0; rows * h];
            let mut tanh_cells = vec![0.0; rows * h];
            let mut hidden = vec![0.0; rows * h];

            for t in 0..steps {
                let (prev_hidden, cur_hidden) = hidden.split_at_mut(t * b * h);
                let z = &mut gates[t * b * g4..(t + 1) * b * g4];
                if t > 0 {
                    let h_prev = &prev_hidden[(t - 1) * b * h..];
                    linalg::mul_transposed(h_prev, &layer.u, b, h, g4, z, true);
                }
                let cur_hidden = &mut cur_hidden[..b * h];
                for s in 0..b {
                    let zs = &mut z[s * g4..(s + 1) * g4];
                    for (v, bias) in zs.iter_mut().zip(&layer.b) {
                        *v += bias;
                    }
                    let (zf, rest) = zs.split_at_mut(h);
                    let (zi, rest) = rest.split_at_mut(h);
                    let (zo, zg) = rest.split_at_mut(h);
                    let base = t * b * h + s * h;
                    for j in 0..h {
                        let f = sigmoid(zf[j]);
                        let i = sigmoid(zi[j]);
                        let o = sigmoid(zo[j]);
                        let g = zg[j].tanh();
                        let c_prev = if t > 0 { cells[base - b * h + j] } else { 0.0 };
                        let c = f * c_prev + i * g;
                        let tc = c.tanh();
                        zf[j] = f;
                        zi[j] = i;
                        zo[j] = o;
                        zg[j] = g;
                        cells[base + j] = c;
                        tanh_cells[base + j] = tc;
                        cur_hidden[s * h + j] = o * tc;
                    }
                }
            }

            let mask = if training && dropout > 0.0 {
                let keep = 1.0 / (1.0 - dropout);
                Some(
                    (0..rows * h)
                        .map(|_| if rng.random::<f64>() < dropout { 0.0 } else { keep })
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            let mut next_input = hidden.clone();
            if let Some(m) = &mask {
                for (v, k) in next_input.iter_mut().zip(m) {
                    *v *= k;
                }
            }
            let input = std::mem::replace(&mut layer_input, next_input);
            if training {
                caches.push(LayerCache {
                    input,
                    gates,
                    cells,
                    tanh_cells,
                    hidden,
                    mask,
                });
            }
        }

        let top = self.head.input_size;
        let head_input = layer_input[(steps - 1) * b * top..].to_vec();
        let mut out = vec![0.0; b * self.head.output_size];
        linalg::mul_transposed(&head_input, &self.head.w, b, top, self.head.output_size, &mut out, false);
        for s in 0..b {
            for (v, bias) in out[s * self.head.output_size..(s + 1) * self.head.output_size]
                .iter_mut()
                .zip(&self.head.b)
            {
                *v += bias;
            }
        }
        let cache = training.then(|| ForwardCache {
            batch: b,
            steps,
            layers: caches,
            head_input,
        });
        Ok((out, cache))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Inverted dropout on each layer's output, masks drawn from `seed`.
    Train { dropout_rate: f64, seed: u64 },
    Infer,
}

/// Sequences laid out `[timestep][sample][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub batch: usize,
    pub steps: usize,
    pub features: usize,
    pub data: Vec<f64>,
}

impl SequenceBatch {
    /// Builds a batch from per-sample sequences, each `steps × features`
    /// flattened timestep-major.
    pub fn from_flat(samples: &[&[f64]], steps: usize, features: usize) -> Result<Self, LstmError> {
        let batch = samples.len();
        let mut data = vec![0.0; steps * batch * features];
        for (s, seq) in samples.iter().enumerate() {
            expect_dim("sequence length × features", steps * features, seq.len())?;
            for t in 0..steps {
                let dst = (t * batch + s) * features;
                data[dst..dst + features].copy_from_slice(&seq[t * features..(t + 1) * features]);
            }
        }
        Ok(Self {
            batch,
            steps,
            features,
            data,
        })
    }

    pub fn from_features(samples: &[&[FeatureVector]]) -> Result<Self, LstmError> {
        let steps = samples.first().map_or(0, |s| s.len());
        let flat: Vec<Vec<f64>> = samples.iter().map(|s| s.iter().flat_map(|f| f.0).collect()).collect();
        let refs: Vec<&[f64]> = flat.iter().map(|v| v.as_slice()).collect();
        Self::from_flat(&refs, steps, FEATURE_DIM)
    }
}

/// Activations of one layer over a whole batch, each `[t][sample][unit]`.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// What this layer consumed (masked output of the layer below).
    pub input: Vec<f64>,
    /// Activated gates `f, i, o, g` per row.
    pub gates: Vec<f64>,
    pub cells: Vec<f64>,
    pub tanh_cells: Vec<f64>,
    /// Unmasked hidden output.
    pub hidden: Vec<f64>,
    /// Inverted-dropout mask applied to `hidden` before the next layer.
    pub mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    pub steps: usize,
    pub layers: Vec<LayerCache>,
    /// Masked top-layer output at the final step.
    pub head_input: Vec<f64>,
}

/// A trained forecaster: stack weights plus the normalization it was
/// trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: StackWeights,
    pub normalization: NormalizationParams,
    pub feature_layout_version: u16,
}

impl ModelParams {
    /// Freshly initialized forecaster over the 39-feature layout with 24 outputs.
    pub fn new(hidden: &[usize], normalization: NormalizationParams, seed: u64) -> Result<Self, LstmError> {
        Ok(Self {
            weights: StackWeights::init_uniform(FEATURE_DIM, hidden, TARGET_HOURS, seed)?,
            normalization,
            feature_layout_version: FEATURE_LAYOUT_VERSION,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.parameter_count()
    }
}

/// Closed-form parameter count of a stack: `4(H(in + H) + H)` per layer plus
/// the head.
pub fn closed_form_parameter_count(input_size: usize, hidden: &[usize], output_size: usize) -> usize {
    let mut fan_in = input_size;
    let mut total = 0;
    for &h in hidden {
        total += 4 * (h * (fan_in + h) + h);
        fan_in = h;
    }
    total + output_size * fan_in + output_size
}

/// Single-sample forward pass; outputs are on the normalized demand scale.
pub fn forward(
    model: &ModelParams,
    inputs: &[FeatureVector],
    mode: Mode,
) -> Result<(Vec<f64>, Option<ForwardCache>), LstmError> {
    let batch = SequenceBatch::from_features(&[inputs])?;
    model.weights.forward_batch(&batch, mode)
}

/// Next-day demand in kW from the 48 preceding encoded hours.
pub fn predict_day(model: &ModelParams, inputs: &[FeatureVector]) -> Result<[f64; TARGET_HOURS], LstmError> {
    Ok(predict_days(model, &[inputs])?.remove(0))
}

/// Batched [`predict_day`].
pub fn predict_days(model: &ModelParams, samples: &[&[FeatureVector]]) -> Result<Vec<[f64; TARGET_HOURS]>, LstmError> {
    expect_dim("model outputs", TARGET_HOURS, model.weights.output_size())?;
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let batch = SequenceBatch::from_features(samples)?;
    let (out, _) = model.weights.forward_batch(&batch, Mode::Infer)?;
    Ok(out
        .chunks_exact(TARGET_HOURS)
        .map(|row| {
            let mut day = [0.0; TARGET_HOURS];
            for (d, v) in day.iter_mut().zip(row) {
                *d = model.normalization.unscale_demand(*v);
            }
            day
        })
        .collect())
}
