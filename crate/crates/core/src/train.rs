//! Supervised training: MSE on normalized targets, backpropagation through
//! time, Adam under an exponentially decaying learning rate, global-norm
//! gradient clipping, finite-difference gradient checks and grid search.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{WindowSample, FEATURE_DIM, INPUT_HOURS, TARGET_HOURS};
use crate::linalg;
use crate::lstm::{predict_days, ForwardCache, LstmError, Mode, ModelParams, SequenceBatch, StackWeights};
use crate::metrics::{self, MetricsError};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("no training samples")]
    EmptyDataset,
    #[error("no grid-search candidates")]
    EmptyCandidates,
    #[error("training config: {0}")]
    Config(String),
    #[error("epoch {epoch} outside 0..{total}")]
    Range { epoch: usize, total: usize },
    #[error("training diverged (non-finite loss at epoch {0})")]
    Diverged(usize),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64, TrainError> {
    if pred.len() != target.len() {
        return Err(TrainError::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Loss and exact gradients for a training-mode forward pass.
///
/// `targets` is `batch × outputs`; the loss is the per-sample MSE averaged
/// over the batch.
pub fn backward(weights: &StackWeights, cache: &ForwardCache, targets: &[f64]) -> Result<(f64, StackWeights), TrainError> {
    let (b, steps) = (cache.batch, cache.steps);
    let out_n = weights.head.output_size;
    let top = weights.head.input_size;
    if targets.len() != b * out_n {
        return Err(TrainError::LengthMismatch(targets.len(), b * out_n));
    }
    if cache.layers.len() != weights.layers.len() || cache.head_input.len() != b * top {
        return Err(TrainError::ShapeMismatch("cache does not match model"));
    }
    for (lc, layer) in cache.layers.iter().zip(&weights.layers) {
        if lc.hidden.len() != steps * b * layer.hidden_size || lc.input.len() != steps * b * layer.input_size {
            return Err(TrainError::ShapeMismatch("layer cache does not match layer"));
        }
    }

    let mut grads = weights.zeros_like();

    let mut y = vec![0.0; b * out_n];
    linalg::mul_transposed(&cache.head_input, &weights.head.w, b, top, out_n, &mut y, false);
    let scale = 1.0 / (out_n * b) as f64;
    let mut loss = 0.0;
    let mut dy = vec![0.0; b * out_n];
    for s in 0..b {
        for o in 0..out_n {
            let idx = s * out_n + o;
            let err = y[idx] + weights.head.b[o] - targets[idx];
            loss += err * err;
            dy[idx] = 2.0 * err * scale;
        }
    }
    loss *= scale;

    linalg::accumulate_outer(&dy, &cache.head_input, b, out_n, top, &mut grads.head.w);
    linalg::accumulate_column_sums(&dy, b, out_n, &mut grads.head.b);
    let mut d_head_in = vec![0.0; b * top];
    linalg::mul(&dy, &weights.head.w, b, out_n, top, &mut d_head_in, false);

    // Gradient w.r.t. the (masked) output sequence of the current layer.
    let mut d_out = vec![0.0; steps * b * top];
    d_out[(steps - 1) * b * top..].copy_from_slice(&d_head_in);

    for l in (0..weights.layers.len()).rev() {
        let layer = &weights.layers[l];
        let lc = &cache.layers[l];
        let h = layer.hidden_size;
        let g4 = 4 * h;
        if let Some(mask) = &lc.mask {
            for (d, m) in d_out.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        let mut dz = vec![0.0; steps * b * g4];
        let mut dh_next = vec![0.0; b * h];
        let mut dc_next = vec![0.0; b * h];
        for t in (0..steps).rev() {
            let dz_t = &mut dz[t * b * g4..(t + 1) * b * g4];
            for s in 0..b {
                let row = t * b + s;
                let gates = &lc.gates[row * g4..(row + 1) * g4];
                let dzs = &mut dz_t[s * g4..(s + 1) * g4];
                for j in 0..h {
                    let idx = row * h + j;
                    let (f, i, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let tc = lc.tanh_cells[idx];
                    let dh = d_out[idx] + dh_next[s * h + j];
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[s * h + j];
                    let c_prev = if t > 0 { lc.cells[idx - b * h] } else { 0.0 };
                    dzs[j] = dc * c_prev * f * (1.0 - f);
                    dzs[h + j] = dc * g * i * (1.0 - i);
                    dzs[2 * h + j] = dh * tc * o * (1.0 - o);
                    dzs[3 * h + j] = dc * i * (1.0 - g * g);
                    dc_next[s * h + j] = dc * f;
                }
            }
            if t > 0 {
                linalg::mul(dz_t, &layer.u, b, g4, h, &mut dh_next, false);
            }
        }

        let rows = steps * b;
        let gl = &mut grads.layers[l];
        linalg::accumulate_outer(&dz, &lc.input, rows, g4, layer.input_size, &mut gl.w);
        if steps > 1 {
            linalg::accumulate_outer(&dz[b * g4..], &lc.hidden[..(steps - 1) * b * h], (steps - 1) * b, g4, h, &mut gl.u);
        }
        linalg::accumulate_column_sums(&dz, rows, g4, &mut gl.b);
        if l > 0 {
            let mut d_in = vec![0.0; rows * layer.input_size];
            linalg::mul(&dz, &layer.w, rows, g4, layer.input_size, &mut d_in, false);
            d_out = d_in;
        }
    }
    Ok((loss, grads))
}

/// Adam moments with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: StackWeights,
    pub v: StackWeights,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(shape: &StackWeights) -> Self {
        Self {
            m: shape.zeros_like(),
            v: shape.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub fn adam_step(params: &mut StackWeights, grads: &StackWeights, state: &mut AdamState, lr: f64) -> Result<(), TrainError> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(TrainError::ShapeMismatch("adam: parameters, gradients and moments differ"));
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let ps = params.tensors_mut();
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `lr_start · (lr_end / lr_start)^(epoch / (total − 1))`.
pub fn lr_schedule(epoch: usize, total_epochs: usize, lr_start: f64, lr_end: f64) -> Result<f64, TrainError> {
    if epoch >= total_epochs {
        return Err(TrainError::Range {
            epoch,
            total: total_epochs,
        });
    }
    if total_epochs == 1 {
        return Ok(lr_start);
    }
    let frac = epoch as f64 / (total_epochs - 1) as f64;
    Ok(lr_start * (lr_end / lr_start).powf(frac))
}

pub fn global_norm(grads: &StackWeights) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescale `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut StackWeights, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for t in grads.tensors_mut() {
            for g in t.iter_mut() {
                *g *= k;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub dropout_rate: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Early-stopping patience in epochs; only used with a validation set.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            lr_start: 0.1,
            lr_end: 0.005,
            dropout_rate: 0.2,
            grad_clip_norm: 5.0,
            seed: 0,
            shuffle: true,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 {
            return err("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1");
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) || !self.lr_start.is_finite() {
            return err("learning rates must satisfy 0 < lr_end <= lr_start");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err("dropout_rate must lie in [0, 1)");
        }
        if !(self.grad_clip_norm > 0.0) {
            return err("grad_clip_norm must be positive (inf disables clipping)");
        }
        Ok(())
    }

    /// Parse the key-value config file; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per completed epoch (dropout active).
    pub epoch_loss: Vec<f64>,
    pub validation_mape: Option<Vec<f64>>,
    pub final_lr: f64,
    pub wall_time: Duration,
    /// Epoch whose weights were returned, when a validation set picked them.
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub validation_mape: Option<f64>,
}

/// Flattened inputs and normalized targets, prepared once per training run.
struct PreparedSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<[f64; TARGET_HOURS]>,
}

impl PreparedSet {
    fn new(samples: &[WindowSample], model: &ModelParams) -> Self {
        let n = &model.normalization;
        Self {
            inputs: samples.iter().map(|s| s.flat_inputs()).collect(),
            targets: samples
                .iter()
                .map(|s| {
                    let mut t = [0.0; TARGET_HOURS];
                    for (d, kw) in t.iter_mut().zip(&s.target_kw) {
                        *d = n.scale_demand(*kw);
                    }
                    t
                })
                .collect(),
        }
    }

    fn batch(&self, idx: &[usize]) -> Result<(SequenceBatch, Vec<f64>), LstmError> {
        let refs: Vec<&[f64]> = idx.iter().map(|&i| self.inputs[i].as_slice()).collect();
        let batch = SequenceBatch::from_flat(&refs, INPUT_HOURS, FEATURE_DIM)?;
        let targets = idx.iter().flat_map(|&i| self.targets[i]).collect();
        Ok((batch, targets))
    }
}

/// MAPE of the model's next-day forecasts over `samples`, all hours pooled.
pub fn evaluate_mape(model: &ModelParams, samples: &[WindowSample]) -> Result<f64, TrainError> {
    let mut actual = Vec::with_capacity(samples.len() * TARGET_HOURS);
    let mut predicted = Vec::with_capacity(samples.len() * TARGET_HOURS);
    for chunk in samples.chunks(64) {
        let refs: Vec<&[_]> = chunk.iter().map(|s| s.inputs.as_slice()).collect();
        for (s, p) in chunk.iter().zip(predict_days(model, &refs)?) {
            actual.extend_from_slice(&s.target_kw);
            predicted.extend_from_slice(&p);
        }
    }
    Ok(metrics::mape(&actual, &predicted)?)
}

pub fn train(
    init: &ModelParams,
    samples: &[WindowSample],
    config: &TrainConfig,
    validation: Option<&[WindowSample]>,
) -> Result<(ModelParams, TrainReport), TrainError> {
    train_with_progress(init, samples, config, validation, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    init: &ModelParams,
    samples: &[WindowSample],
    config: &TrainConfig,
    validation: Option<&[WindowSample]>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let validation = validation.filter(|v| !v.is_empty());
    let started = Instant::now();
    let data = PreparedSet::new(samples, init);
    let mut model = init.clone();
    let mut adam = AdamState::new(&model.weights);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut val_mape = Vec::new();
    let mut best: Option<(f64, usize, StackWeights)> = None;
    let mut lr = config.lr_start;

    for epoch in 0..config.epochs {
        lr = lr_schedule(epoch, config.epochs, config.lr_start, config.lr_end)?;
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (batch, targets) = data.batch(chunk)?;
            let mode = Mode::Train {
                dropout_rate: config.dropout_rate,
                seed: rng.random(),
            };
            let (_, cache) = model.weights.forward_batch(&batch, mode)?;
            let cache = cache.expect("training mode always yields a cache");
            let (loss, mut grads) = backward(&model.weights, &cache, &targets)?;
            if config.grad_clip_norm.is_finite() {
                clip_global_norm(&mut grads, config.grad_clip_norm);
            }
            adam_step(&mut model.weights, &grads, &mut adam, lr)?;
            total += loss * chunk.len() as f64;
        }
        let loss = total / samples.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::Diverged(epoch));
        }
        epoch_loss.push(loss);

        let mut vm = None;
        if let Some(v) = validation {
            let m = evaluate_mape(&model, v)?;
            val_mape.push(m);
            vm = Some(m);
            if best.as_ref().is_none_or(|(b, _, _)| m < *b) {
                best = Some((m, epoch, model.weights.clone()));
            }
        }
        on_epoch(&EpochStats {
            epoch,
            lr,
            loss,
            validation_mape: vm,
        });
        if let Some((_, best_epoch, _)) = &best {
            if epoch - best_epoch >= config.patience {
                break;
            }
        }
    }

    let best_epoch = best.map(|(_, e, w)| {
        model.weights = w;
        e
    });
    let report = TrainReport {
        epoch_loss,
        validation_mape: validation.map(|_| val_mape),
        final_lr: lr,
        wall_time: started.elapsed(),
        best_epoch,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(tensor index, element index)` of the worst component.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Components whose magnitude fell below [`GRAD_CHECK_FLOOR`].
    pub floored: usize,
}

/// Smallest denominator in [`relative_error`]. Rounding in an O(1) loss
/// leaves about 1e-13 of absolute noise in a central difference, so smaller
/// components cannot be resolved to 1e-6 relative.
pub const GRAD_CHECK_FLOOR: f64 = 1e-7;

/// Step for [`grad_check`]. Smaller steps let rounding in the loss swamp
/// small gradient components.
pub const GRAD_CHECK_EPSILON: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Fourth-order central difference of `loss` along one parameter:
/// `(8(L(+ε) − L(−ε)) − (L(+2ε) − L(−2ε))) / 12ε`. The parameter is restored.
pub fn central_difference<E>(
    weights: &mut StackWeights,
    tensor: usize,
    index: usize,
    epsilon: f64,
    loss: impl Fn(&StackWeights) -> Result<f64, E>,
) -> Result<f64, E> {
    let orig = weights.tensors()[tensor][index];
    let mut at = |delta: f64| {
        weights.tensors_mut()[tensor][index] = orig + delta;
        loss(weights)
    };
    let (p1, m1, p2, m2) = (at(epsilon)?, at(-epsilon)?, at(2.0 * epsilon)?, at(-2.0 * epsilon)?);
    weights.tensors_mut()[tensor][index] = orig;
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon))
}

/// Compare backpropagated gradients with central differences for one
/// sequence (`steps × input_size`, flattened) and target vector.
pub fn grad_check(weights: &StackWeights, sequence: &[f64], steps: usize, target: &[f64], epsilon: f64) -> Result<GradCheckReport, TrainError> {
    let batch = SequenceBatch::from_flat(&[sequence], steps, weights.input_size())?;
    let mode = Mode::Train {
        dropout_rate: 0.0,
        seed: 0,
    };
    let (_, cache) = weights.forward_batch(&batch, mode)?;
    let (_, grads) = backward(weights, &cache.expect("training cache"), target)?;

    let loss_at = |w: &StackWeights| -> Result<f64, TrainError> {
        let (out, _) = w.forward_batch(&batch, Mode::Infer)?;
        mse_loss(&out, target)
    };

    let mut probe = weights.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        floored: 0,
    };
    let analytic = grads.tensors().into_iter().map(|t| t.to_vec()).collect::<Vec<_>>();
    for (ti, grad_t) in analytic.iter().enumerate() {
        for k in 0..grad_t.len() {
            let numeric = central_difference(&mut probe, ti, k, epsilon, &loss_at)?;
            let err = relative_error(grad_t[k], numeric);
            report.checked += 1;
            if grad_t[k].abs().max(numeric.abs()) < GRAD_CHECK_FLOOR {
                report.floored += 1;
            }
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err.max(report.max_relative_error);
                report.worst = Some((ti, k));
                report.analytic = grad_t[k];
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// [`grad_check`] on a forecaster and one window sample (targets normalized).
pub fn grad_check_sample(model: &ModelParams, sample: &WindowSample, epsilon: f64) -> Result<GradCheckReport, TrainError> {
    let target: Vec<f64> = sample.target_kw.iter().map(|kw| model.normalization.scale_demand(*kw)).collect();
    grad_check(&model.weights, &sample.flat_inputs(), sample.inputs.len(), &target, epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub hidden: Vec<usize>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub best_model: ModelParams,
    pub validation_mape: Vec<f64>,
    pub reports: Vec<TrainReport>,
}

/// Train every candidate (initialized from its own seed) and keep the one
/// with the lowest validation MAPE; ties go to the earliest candidate.
pub fn grid_search(
    candidates: &[Candidate],
    train_set: &[WindowSample],
    validation_set: &[WindowSample],
    normalization: crate::features::NormalizationParams,
) -> Result<GridSearchResult, TrainError> {
    if candidates.is_empty() {
        return Err(TrainError::EmptyCandidates);
    }
    if validation_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut best: Option<(usize, ModelParams)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    let mut reports = Vec::with_capacity(candidates.len());
    for (i, cand) in candidates.iter().enumerate() {
        let init = ModelParams::new(&cand.hidden, normalization, cand.config.seed)?;
        let (model, report) = train(&init, train_set, &cand.config, None)?;
        let score = evaluate_mape(&model, validation_set)?;
        if best.as_ref().is_none_or(|(b, _)| score < scores[*b]) {
            best = Some((i, model));
        }
        scores.push(score);
        reports.push(report);
    }
    let (best_index, best_model) = best.expect("at least one candidate");
    Ok(GridSearchResult {
        best_index,
        best_model,
        validation_mape: scores,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::NormalizationParams;

    fn small_weights(seed: u64) -> StackWeights {
        StackWeights::init_uniform(3, &[3, 3], 2, seed).unwrap()
    }

    fn random_seq(steps: usize, features: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..steps * features).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        let a = mse_loss(&[0.2, -0.7, 3.0], &[1.0, 0.5, -2.0]).unwrap();
        let b = mse_loss(&[-0.2, 0.7, -3.0], &[-1.0, -0.5, 2.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(mse_loss(&[1.0], &[1.0, 2.0]), Err(TrainError::LengthMismatch(1, 2)));
    }

    #[test]
    fn zero_model_zero_target_has_zero_gradient() {
        let w = small_weights(1).zeros_like();
        let seq = random_seq(5, 3, 2);
        let batch = SequenceBatch::from_flat(&[&seq], 5, 3).unwrap();
        let (_, cache) = w.forward_batch(&batch, Mode::Train { dropout_rate: 0.0, seed: 0 }).unwrap();
        let (loss, g) = backward(&w, &cache.unwrap(), &[0.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)));

        let report = grad_check(&w, &seq, 5, &[0.0, 0.0], 1e-5).unwrap();
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn duplicated_samples_double_summed_gradient() {
        let w = small_weights(3);
        let seq = random_seq(5, 3, 4);
        let target = [0.4, -0.1];
        let single = SequenceBatch::from_flat(&[&seq], 5, 3).unwrap();
        let (_, c1) = w.forward_batch(&single, Mode::Train { dropout_rate: 0.0, seed: 0 }).unwrap();
        let (l1, g1) = backward(&w, &c1.unwrap(), &target).unwrap();
        let double = SequenceBatch::from_flat(&[&seq, &seq], 5, 3).unwrap();
        let (_, c2) = w.forward_batch(&double, Mode::Train { dropout_rate: 0.0, seed: 0 }).unwrap();
        let (l2, g2) = backward(&w, &c2.unwrap(), &[target, target].concat()).unwrap();
        // The batch loss is a mean, so the sum over two copies is 2 × mean.
        assert!((2.0 * l2 - 2.0 * l1).abs() < 1e-14);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                // 2 × (batch-mean gradient) is the gradient of the summed loss.
                assert!((2.0 * y - 2.0 * x).abs() <= 1e-14 + 1e-12 * x.abs());
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let w = small_weights(seed);
            let seq = random_seq(5, 3, seed + 100);
            let report = grad_check(&w, &seq, 5, &[0.3, 0.8], GRAD_CHECK_EPSILON).unwrap();
            assert_eq!(report.checked, w.parameter_count());
            assert!(report.max_relative_error < 1e-6, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn gradients_respect_dropout_masks() {
        // Central differences of the loss with the masks frozen.
        let w = small_weights(8);
        let seq = random_seq(4, 3, 9);
        let target = [0.1, 0.2];
        let batch = SequenceBatch::from_flat(&[&seq], 4, 3).unwrap();
        let mode = Mode::Train { dropout_rate: 0.3, seed: 77 };
        let (_, cache) = w.forward_batch(&batch, mode).unwrap();
        let (_, g) = backward(&w, &cache.unwrap(), &target).unwrap();
        let eps = GRAD_CHECK_EPSILON;
        let mut probe = w.clone();
        let n_t = g.tensors().len();
        for ti in 0..n_t {
            for k in 0..g.tensors()[ti].len() {
                let num = central_difference(&mut probe, ti, k, eps, |w| {
                    mse_loss(&w.forward_batch(&batch, mode)?.0, &target)
                })
                .unwrap();
                assert!(relative_error(g.tensors()[ti][k], num) < 1e-6);
            }
        }
    }

    #[test]
    fn large_epsilon_degrades_agreement() {
        let w = small_weights(2);
        let seq = random_seq(5, 3, 3);
        let fine = grad_check(&w, &seq, 5, &[0.9, -0.4], GRAD_CHECK_EPSILON).unwrap();
        let coarse = grad_check(&w, &seq, 5, &[0.9, -0.4], 1e-1).unwrap();
        assert!(coarse.max_relative_error > fine.max_relative_error * 100.0);
    }

    #[test]
    fn adam_examples() {
        let mut p = StackWeights::zeros(1, &[1], 1).unwrap();
        let shape = p.clone();
        let mut st = AdamState::new(&shape);
        let zero = shape.zeros_like();
        p.head.b[0] = 0.7;
        let before = p.clone();
        adam_step(&mut p, &zero, &mut st, 0.1).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);

        let mut st = AdamState::new(&shape);
        let mut g = shape.zeros_like();
        g.head.b[0] = 1.0;
        g.head.w[0] = 1.0;
        adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        let expected = 0.7 - 0.1 / (1.0 + 1e-8);
        assert!((p.head.b[0] - expected).abs() < 1e-15);
        assert!(((p.head.w[0] - before.head.w[0]) - (p.head.b[0] - before.head.b[0])).abs() < 1e-15);

        let other = StackWeights::zeros(2, &[1], 1).unwrap();
        assert!(adam_step(&mut p, &other, &mut st, 0.1).is_err());
    }

    #[test]
    fn schedule_endpoints() {
        assert!((lr_schedule(0, 200, 0.1, 0.005).unwrap() - 0.1).abs() < 1e-15);
        assert!((lr_schedule(199, 200, 0.1, 0.005).unwrap() - 0.005).abs() < 1e-15);
        let mid = lr_schedule(50, 101, 0.1, 0.005).unwrap();
        assert!((mid - (0.1f64 * 0.005).sqrt()).abs() < 1e-12);
        assert!((mid - 0.02236).abs() < 1e-5);
        assert_eq!(lr_schedule(0, 1, 0.1, 0.005).unwrap(), 0.1);
        assert!(matches!(lr_schedule(5, 5, 0.1, 0.005), Err(TrainError::Range { .. })));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = small_weights(4);
        let before = clip_global_norm(&mut g, 0.5);
        assert!(before > 0.5);
        assert!(global_norm(&g) <= 0.5 + 1e-12);
        let mut h = small_weights(4);
        clip_global_norm(&mut h, f64::INFINITY);
        assert_eq!(h, small_weights(4));
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let cfg = TrainConfig::from_toml("epochs = 3\nbatch_size = 4\nlr_start = 0.01\nlr_end = 0.001\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.dropout_rate, 0.2);
        assert!(TrainConfig::from_toml("epochs = 3\nlearning_rate = 0.1\n").is_err());
        assert!(TrainConfig::from_toml("lr_start = 0.001\nlr_end = 0.01\n").is_err());
        assert!(TrainConfig::from_toml("grad_clip_norm = inf\n").is_ok());
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { dropout_rate: 1.0, ..Default::default() },
            TrainConfig { lr_end: 0.0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(TrainError::Config(_))));
        }
        let model = ModelParams::new(&[2], norm(), 0).unwrap();
        assert_eq!(train(&model, &[], &TrainConfig::default(), None).unwrap_err(), TrainError::EmptyDataset);
    }

    fn norm() -> NormalizationParams {
        NormalizationParams {
            demand_min: 0.0,
            demand_max: 1.0,
            temp_min: 0.0,
            temp_max: 1.0,
            humidity_min: 0.0,
            humidity_max: 1.0,
        }
    }
}
