//! Hand-rolled multilayer perceptron with exact backpropagation and Adam,
//! plus dense per-pixel inference.
//!
//! The color experts are tiny (one to three inputs, at most two hidden
//! layers), so flat `Vec<f64>` matrices beat any tensor machinery here.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{pixel_features, shuffled_indices};
use crate::error::{CueError, Result};
use crate::raster::{CueSet, GrayMode, LabelMask, RasterImage};
use crate::rng::{rng_from_seed, stage, stage_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input dim, hidden dims, output dim.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub init_scale: f64,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, init_scale: f64) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation: Activation::Relu,
            init_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(CueError::BadSpec(
                "need at least input and output widths".into(),
            ));
        }
        if self.layer_widths.len() > 4 {
            return Err(CueError::BadSpec(
                "at most two hidden layers (two to three weight layers)".into(),
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(CueError::BadSpec("zero-width layer".into()));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(CueError::BadSpec("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

/// Dense weights (row-major, rows = outputs) and biases per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Weights and biases drawn from U(-init_scale, init_scale); deterministic
/// for a fixed generator state.
pub fn init_mlp(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> Result<MlpModel> {
    spec.validate()?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let s = spec.init_scale;
    let draw = |rng: &mut ChaCha8Rng| {
        if s == 0.0 {
            0.0
        } else {
            rng.gen_range(-s..=s)
        }
    };
    for layer in spec.layer_widths.windows(2) {
        let (fan_in, fan_out) = (layer[0], layer[1]);
        weights.push((0..fan_in * fan_out).map(|_| draw(rng)).collect());
        biases.push((0..fan_out).map(|_| draw(rng)).collect());
    }
    Ok(MlpModel {
        spec: spec.clone(),
        weights,
        biases,
    })
}

impl MlpModel {
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Forward pass of one feature vector; returns per-layer
    /// post-activations (input first, logits last).
    pub(crate) fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.n_layers() + 1);
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let fan_in = self.spec.layer_widths[l];
            let fan_out = self.spec.layer_widths[l + 1];
            let input = &acts[l];
            let mut out = self.biases[l].clone();
            for o in 0..fan_out {
                let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(input) {
                    acc += wi * xi;
                }
                out[o] += acc;
            }
            if l + 1 < self.n_layers() {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        acts
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Batched forward pass: logits and softmax probabilities, both
/// `n x output_dim` row-major.
pub fn forward(model: &MlpModel, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = model.spec.input_dim();
    if features.len() % d != 0 {
        return Err(CueError::DimMismatch {
            expected: d,
            got: features.len(),
        });
    }
    let k = model.spec.output_dim();
    let n = features.len() / d;
    let mut logits = Vec::with_capacity(n * k);
    let mut probs = Vec::with_capacity(n * k);
    for row in features.chunks_exact(d) {
        let acts = model.activations(row);
        let z = acts.last().unwrap();
        probs.extend(softmax(z));
        logits.extend_from_slice(z);
    }
    Ok((logits, probs))
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Accumulate parameter gradients for one sample given the delta at the
/// logits; shared by cross-entropy training and the fusion gate.
pub(crate) fn backprop_into(
    model: &MlpModel,
    acts: &[Vec<f64>],
    mut delta: Vec<f64>,
    grads: &mut Gradients,
) {
    for l in (0..model.n_layers()).rev() {
        let fan_in = model.spec.layer_widths[l];
        let fan_out = model.spec.layer_widths[l + 1];
        let input = &acts[l];
        for o in 0..fan_out {
            grads.biases[l][o] += delta[o];
            let g_row = &mut grads.weights[l][o * fan_in..(o + 1) * fan_in];
            for (gi, xi) in g_row.iter_mut().zip(input) {
                *gi += delta[o] * xi;
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &model.weights[l][o * fan_in..(o + 1) * fan_in];
                for (pi, wi) in prev.iter_mut().zip(row) {
                    *pi += delta[o] * wi;
                }
            }
            // ReLU mask of the post-activation.
            for (pi, &ai) in prev.iter_mut().zip(&acts[l]) {
                if ai <= 0.0 {
                    *pi = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Mean cross-entropy over a labeled batch and its exact analytic
/// gradients.
pub fn loss_and_grad(model: &MlpModel, features: &[f64], labels: &[u8]) -> Result<(f64, Gradients)> {
    let d = model.spec.input_dim();
    let k = model.spec.output_dim();
    if features.len() != labels.len() * d {
        return Err(CueError::DimMismatch {
            expected: labels.len() * d,
            got: features.len(),
        });
    }
    if labels.is_empty() {
        return Err(CueError::EmptyDataset);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(CueError::Schema(format!(
            "label {bad} out of range for {k} classes"
        )));
    }

    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(model);
    for (row, &label) in features.chunks_exact(d).zip(labels) {
        let acts = model.activations(row);
        let probs = softmax(acts.last().unwrap());
        loss -= probs[label as usize].max(f64::MIN_POSITIVE).ln() * inv_n;

        // delta at the logits: (p - onehot) / n.
        let mut delta: Vec<f64> = probs.iter().map(|&p| p * inv_n).collect();
        delta[label as usize] -= inv_n;
        backprop_into(model, &acts, delta, &mut grads);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Const,
    /// Linear decay to zero over the configured epochs.
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
    pub lr_schedule: LrSchedule,
    /// Fraction of rows held out for accuracy logging.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1024,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rng_seed: 0,
            lr_schedule: LrSchedule::Const,
            holdout_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(CueError::InvalidParameter(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(CueError::InvalidParameter("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(CueError::InvalidParameter(
                "holdout fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Const => self.learning_rate,
            LrSchedule::Poly => {
                let t = step as f64 / total_steps.max(1) as f64;
                self.learning_rate * (1.0 - t).max(0.0)
            }
        }
    }
}

/// First/second moment estimates, one entry per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            t: 0,
        }
    }
}

/// Standard bias-corrected Adam update, in place.
pub fn adam_step(
    model: &mut MlpModel,
    state: &mut AdamState,
    grads: &Gradients,
    lr: f64,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let update = |param: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
        for i in 0..param.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    };
    for l in 0..model.weights.len() {
        update(
            &mut model.weights[l],
            &mut state.m_w[l],
            &mut state.v_w[l],
            &grads.weights[l],
        );
        update(
            &mut model.biases[l],
            &mut state.m_b[l],
            &mut state.v_b[l],
            &grads.biases[l],
        );
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub holdout_accuracy: Vec<f64>,
}

/// Minibatch Adam training of a color expert on a pixel dataset.
/// Deterministic given the config seed: the split, the shuffles and the
/// init all derive from it.
pub fn train_color_expert(
    features: &[f64],
    labels: &[u8],
    feature_dim: usize,
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog)> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(CueError::EmptyDataset);
    }
    if spec.input_dim() != feature_dim {
        return Err(CueError::DimMismatch {
            expected: spec.input_dim(),
            got: feature_dim,
        });
    }

    let mut rng = stage_rng(cfg.rng_seed, stage::TRAINING, 0);
    let mut model = init_mlp(spec, &mut rng)?;
    let mut state = AdamState::new(&model);
    let mut log = TrainLog::default();

    let n = labels.len();
    let n_holdout = ((n as f64) * cfg.holdout_fraction).floor() as usize;
    let order = shuffled_indices(n, &mut rng);
    let (holdout_idx, train_idx) = order.split_at(n_holdout);
    if train_idx.is_empty() {
        return Err(CueError::EmptyDataset);
    }

    let gather = |idx: &[usize]| -> (Vec<f64>, Vec<u8>) {
        let mut f = Vec::with_capacity(idx.len() * feature_dim);
        let mut l = Vec::with_capacity(idx.len());
        for &i in idx {
            f.extend_from_slice(&features[i * feature_dim..(i + 1) * feature_dim]);
            l.push(labels[i]);
        }
        (f, l)
    };
    let (holdout_f, holdout_l) = gather(holdout_idx);

    let batches_per_epoch = train_idx.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut step = 0;
    for _ in 0..cfg.epochs {
        let perm = shuffled_indices(train_idx.len(), &mut rng);
        let mut epoch_loss = 0.0;
        for chunk in perm.chunks(cfg.batch_size) {
            let idx: Vec<usize> = chunk.iter().map(|&j| train_idx[j]).collect();
            let (bf, bl) = gather(&idx);
            let (loss, grads) = loss_and_grad(&model, &bf, &bl)?;
            let lr = cfg.lr_at(step, total_steps);
            adam_step(&mut model, &mut state, &grads, lr, cfg);
            epoch_loss += loss * bl.len() as f64;
            step += 1;
        }
        log.epoch_loss.push(epoch_loss / train_idx.len() as f64);
        if !holdout_l.is_empty() {
            let (_, probs) = forward(&model, &holdout_f)?;
            let k = spec.output_dim();
            let correct = holdout_l
                .iter()
                .enumerate()
                .filter(|&(i, &l)| argmax(&probs[i * k..(i + 1) * k]) == l as usize)
                .count();
            log.holdout_accuracy
                .push(correct as f64 / holdout_l.len() as f64);
        }
    }
    Ok((model, log))
}

/// Lowest-index argmax.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Dense per-pixel class probabilities, `data[(y * w + x) * k + c]`,
/// each pixel on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxField {
    pub height: usize,
    pub width: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl SoftmaxField {
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.k;
        &self.data[i..i + self.k]
    }

    pub fn validate_simplex(&self, tol: f64) -> bool {
        self.data.iter().all(|&p| p >= 0.0)
            && self
                .data
                .chunks_exact(self.k)
                .all(|px| (px.iter().sum::<f64>() - 1.0).abs() <= tol)
    }

    /// Argmax labels with lowest-index tie-break.
    pub fn argmax_mask(&self) -> LabelMask {
        let labels = self
            .data
            .chunks_exact(self.k)
            .map(|px| argmax(px) as u8)
            .collect();
        LabelMask::new(self.height, self.width, labels).expect("sized")
    }
}

/// Per-pixel forward pass of a color expert over a whole image.
pub fn predict_dense(
    model: &MlpModel,
    img: &RasterImage,
    keep: CueSet,
    mode: GrayMode,
) -> Result<(SoftmaxField, LabelMask)> {
    if model.spec.input_dim() != keep.feature_dim() {
        return Err(CueError::DimMismatch {
            expected: model.spec.input_dim(),
            got: keep.feature_dim(),
        });
    }
    let (h, w) = (img.height(), img.width());
    let k = model.spec.output_dim();
    let mut features = Vec::with_capacity(h * w * keep.feature_dim());
    for y in 0..h {
        for x in 0..w {
            features.extend(pixel_features(img, x, y, keep, mode));
        }
    }
    let (_, probs) = forward(model, &features)?;
    let field = SoftmaxField {
        height: h,
        width: w,
        k,
        data: probs,
    };
    let mask = field.argmax_mask();
    Ok((field, mask))
}

/// Prediction of a freshly initialized, untrained model: the absence of all
/// cues.
pub fn no_info_baseline(
    spec: &MlpSpec,
    keep: CueSet,
    mode: GrayMode,
    seed: u64,
    img: &RasterImage,
) -> Result<(SoftmaxField, LabelMask)> {
    let mut rng = rng_from_seed(seed);
    let model = init_mlp(spec, &mut rng)?;
    predict_dense(&model, img, keep, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;
    use rand::Rng;

    fn spec(widths: &[usize], scale: f64) -> MlpSpec {
        MlpSpec::new(widths.to_vec(), scale).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], 0.1).is_err());
        assert!(MlpSpec::new(vec![3, 16, 16, 16, 5], 0.1).is_err());
        assert!(MlpSpec::new(vec![3, 0, 5], 0.1).is_err());
        assert!(MlpSpec::new(vec![3, 16, 5], 0.1).is_ok());
    }

    #[test]
    fn zero_scale_init_gives_uniform_softmax() {
        let spec = spec(&[3, 8, 4], 0.0);
        let mut rng = rng_from_seed(1);
        let model = init_mlp(&spec, &mut rng).unwrap();
        let (_, probs) = forward(&model, &[0.2, 0.4, 0.9]).unwrap();
        for &p in &probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = spec(&[2, 8, 3], 0.1);
        let a = init_mlp(&spec, &mut rng_from_seed(9)).unwrap();
        let b = init_mlp(&spec, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.biases, b.biases);
    }

    #[test]
    fn single_linear_layer_is_a_logistic() {
        // Identity weight on 1-dim input with K = 2: softmax of (x, 0).
        let spec = spec(&[1, 2], 0.0);
        let mut model = init_mlp(&spec, &mut rng_from_seed(0)).unwrap();
        model.weights[0] = vec![1.0, 0.0];
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.0] {
            let (_, probs) = forward(&model, &[x]).unwrap();
            let expected = 1.0 / (1.0 + (-x).exp());
            assert!((probs[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_stay_on_the_simplex() {
        let spec = spec(&[3, 16, 8, 5], 0.5);
        let model = init_mlp(&spec, &mut rng_from_seed(4)).unwrap();
        let mut rng = rng_from_seed(5);
        let features: Vec<f64> = (0..3 * 10_000).map(|_| rng.gen()).collect();
        let (_, probs) = forward(&model, &features).unwrap();
        for px in probs.chunks_exact(5) {
            let sum: f64 = px.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
            assert!(px.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn uniform_output_loss_is_ln_k() {
        let spec = spec(&[2, 4], 0.0);
        let model = init_mlp(&spec, &mut rng_from_seed(0)).unwrap();
        let (loss, _) = loss_and_grad(&model, &[0.1, 0.9, 0.5, 0.5], &[0, 3]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_grads_unchanged() {
        let spec = spec(&[2, 8, 3], 0.2);
        let model = init_mlp(&spec, &mut rng_from_seed(2)).unwrap();
        let f = [0.1, 0.2, 0.8, 0.9, 0.4, 0.6];
        let l = [0u8, 2, 1];
        let (loss1, g1) = loss_and_grad(&model, &f, &l).unwrap();
        let f2: Vec<f64> = f.iter().chain(f.iter()).copied().collect();
        let l2: Vec<u8> = l.iter().chain(l.iter()).copied().collect();
        let (loss2, g2) = loss_and_grad(&model, &f2, &l2).unwrap();
        assert!((loss1 - loss2).abs() < 1e-12);
        for (a, b) in g1.weights.iter().zip(&g2.weights) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut worst: f64 = 0.0;
        for trial in 0..100 {
            let mut rng = rng_from_seed(4000 + trial);
            let widths = match trial % 3 {
                0 => vec![3, 8, 4],
                1 => vec![2, 6, 6, 3],
                _ => vec![1, 5, 2],
            };
            let spec = MlpSpec::new(widths, 0.5).unwrap();
            let mut model = init_mlp(&spec, &mut rng).unwrap();
            let d = spec.input_dim();
            let k = spec.output_dim();
            let n = 8;
            let features: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k) as u8).collect();
            let (_, grads) = loss_and_grad(&model, &features, &labels).unwrap();

            // Probe a handful of parameters per trial.
            let eps = 1e-5;
            for _ in 0..6 {
                let layer = rng.gen_range(0..model.n_layers());
                let in_weights = rng.gen_bool(0.8);
                let idx = if in_weights {
                    rng.gen_range(0..model.weights[layer].len())
                } else {
                    rng.gen_range(0..model.biases[layer].len())
                };
                let read = |m: &MlpModel| {
                    if in_weights {
                        m.weights[layer][idx]
                    } else {
                        m.biases[layer][idx]
                    }
                };
                let orig = read(&model);
                let write = |m: &mut MlpModel, v: f64| {
                    if in_weights {
                        m.weights[layer][idx] = v;
                    } else {
                        m.biases[layer][idx] = v;
                    }
                };
                write(&mut model, orig + eps);
                let (lp, _) = loss_and_grad(&model, &features, &labels).unwrap();
                write(&mut model, orig - eps);
                let (lm, _) = loss_and_grad(&model, &features, &labels).unwrap();
                write(&mut model, orig);
                let fd = (lp - lm) / (2.0 * eps);
                let analytic = if in_weights {
                    grads.weights[layer][idx]
                } else {
                    grads.biases[layer][idx]
                };
                let denom = fd.abs().max(analytic.abs()).max(1e-8);
                worst = worst.max((fd - analytic).abs() / denom);
            }
        }
        assert!(worst <= 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn adam_hand_checked_first_step() {
        // f(w) = w^2 at w = 1: gradient 2, first Adam step with lr 0.1
        // moves to 1 - 0.1 * 2 / (2 + eps) ~ 0.9.
        let spec = spec(&[1, 1], 0.0);
        let mut model = init_mlp(&spec, &mut rng_from_seed(0)).unwrap();
        model.weights[0][0] = 1.0;
        let mut state = AdamState::new(&model);
        let grads = Gradients {
            weights: vec![vec![2.0]],
            biases: vec![vec![0.0]],
        };
        let cfg = TrainConfig::default();
        adam_step(&mut model, &mut state, &grads, 0.1, &cfg);
        assert!((model.weights[0][0] - 0.9).abs() < 1e-6);

        // Zero gradients from a fresh state leave parameters untouched.
        let zero = Gradients {
            weights: vec![vec![0.0]],
            biases: vec![vec![0.0]],
        };
        let mut fresh = AdamState::new(&model);
        let before = model.weights[0][0];
        adam_step(&mut model, &mut fresh, &zero, 0.1, &cfg);
        assert_eq!(model.weights[0][0], before);
    }

    #[test]
    fn constant_gradient_descends() {
        let spec = spec(&[1, 1], 0.0);
        let mut model = init_mlp(&spec, &mut rng_from_seed(0)).unwrap();
        let mut state = AdamState::new(&model);
        let grads = Gradients {
            weights: vec![vec![0.7]],
            biases: vec![vec![0.0]],
        };
        let cfg = TrainConfig::default();
        for _ in 0..25 {
            adam_step(&mut model, &mut state, &grads, 0.05, &cfg);
        }
        assert!(model.weights[0][0] < 0.0);
    }

    fn separable_blobs(n_per_class: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut rng = rng_from_seed(seed);
        let centers = [(0.2, 0.2, 0.8), (0.8, 0.3, 0.2)];
        let mut f = Vec::new();
        let mut l = Vec::new();
        for (ci, &(a, b, c)) in centers.iter().enumerate() {
            for _ in 0..n_per_class {
                f.push((a + rng.gen_range(-0.08..0.08f64)).clamp(0.0, 1.0));
                f.push((b + rng.gen_range(-0.08..0.08f64)).clamp(0.0, 1.0));
                f.push((c + rng.gen_range(-0.08..0.08f64)).clamp(0.0, 1.0));
                l.push(ci as u8);
            }
        }
        (f, l)
    }

    #[test]
    fn linearly_separable_blobs_reach_high_holdout_accuracy() {
        let (f, l) = separable_blobs(300, 8);
        let spec = spec(&[3, 16, 2], 0.1);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 64,
            rng_seed: 3,
            ..TrainConfig::default()
        };
        let (_, log) = train_color_expert(&f, &l, 3, &spec, &cfg).unwrap();
        let last = *log.holdout_accuracy.last().unwrap();
        assert!(last >= 0.99, "holdout accuracy {last}");
    }

    #[test]
    fn zero_epochs_returns_the_init_model_and_training_is_deterministic() {
        let (f, l) = separable_blobs(50, 1);
        let spec = spec(&[3, 8, 2], 0.1);
        let cfg = TrainConfig {
            epochs: 0,
            rng_seed: 5,
            ..TrainConfig::default()
        };
        let (model, log) = train_color_expert(&f, &l, 3, &spec, &cfg).unwrap();
        assert!(log.epoch_loss.is_empty());
        let mut rng = stage_rng(5, stage::TRAINING, 0);
        let fresh = init_mlp(&spec, &mut rng).unwrap();
        assert_eq!(model.weights, fresh.weights);

        let cfg = TrainConfig {
            epochs: 10,
            rng_seed: 5,
            ..TrainConfig::default()
        };
        let (a, _) = train_color_expert(&f, &l, 3, &spec, &cfg).unwrap();
        let (b, _) = train_color_expert(&f, &l, 3, &spec, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.biases, b.biases);
    }

    #[test]
    fn dense_prediction_agrees_with_pixel_loop() {
        let keep = CueSet::new(false, false, true, true).unwrap();
        let spec = spec(&[3, 8, 4], 0.3);
        let model = init_mlp(&spec, &mut rng_from_seed(6)).unwrap();
        let mut rng = rng_from_seed(7);
        let data: Vec<f64> = (0..3 * 64).map(|_| rng.gen()).collect();
        let img = RasterImage::new(ColorSpace::Rgb, 8, 8, data).unwrap();
        let (field, mask) = predict_dense(&model, &img, keep, GrayMode::Mean).unwrap();
        assert!(field.validate_simplex(1e-6));
        for y in 0..8 {
            for x in 0..8 {
                let (_, probs) = forward(&model, &img.pixel(x, y)).unwrap();
                assert_eq!(field.pixel(x, y), probs.as_slice());
                assert_eq!(mask.get(x, y) as usize, argmax(&probs));
            }
        }
    }

    #[test]
    fn zero_weight_model_predicts_class_zero_everywhere() {
        let keep = CueSet::new(false, false, true, false).unwrap();
        let spec = spec(&[1, 3], 0.0);
        let img = RasterImage::filled(ColorSpace::Rgb, 4, 4, 0.3);
        let (field, mask) = no_info_baseline(&spec, keep, GrayMode::Mean, 1, &img).unwrap();
        assert!(field.data.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
        assert!(mask.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn scaling_logits_keeps_the_argmax() {
        let spec = spec(&[2, 4], 0.4);
        let model = init_mlp(&spec, &mut rng_from_seed(12)).unwrap();
        let mut scaled = model.clone();
        for w in &mut scaled.weights {
            for v in w {
                *v *= 3.5;
            }
        }
        for b in &mut scaled.biases {
            for v in b {
                *v *= 3.5;
            }
        }
        let mut rng = rng_from_seed(13);
        for _ in 0..200 {
            let f = [rng.gen::<f64>(), rng.gen::<f64>()];
            let (_, p1) = forward(&model, &f).unwrap();
            let (_, p2) = forward(&scaled, &f).unwrap();
            assert_eq!(argmax(&p1), argmax(&p2));
        }
    }

    #[test]
    fn chance_level_baseline_on_balanced_classes() {
        // Large random image, K balanced classes in the ground truth: the
        // untrained model's accuracy stays near 1/K averaged over seeds.
        let k = 4;
        let keep = CueSet::new(false, false, true, true).unwrap();
        let spec = spec(&[3, 16, k], 0.5);
        let mut rng = rng_from_seed(20);
        let (h, w) = (48, 48);
        let data: Vec<f64> = (0..3 * h * w).map(|_| rng.gen()).collect();
        let img = RasterImage::new(ColorSpace::Rgb, h, w, data).unwrap();
        let gt: Vec<u8> = (0..h * w).map(|i| (i % k) as u8).collect();

        let mut mean_acc = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let (_, mask) = no_info_baseline(&spec, keep, GrayMode::Mean, seed, &img).unwrap();
            let correct = mask
                .labels()
                .iter()
                .zip(&gt)
                .filter(|(a, b)| a == b)
                .count();
            mean_acc += correct as f64 / (h * w) as f64;
        }
        mean_acc /= seeds as f64;
        assert!(
            (mean_acc - 1.0 / k as f64).abs() < 0.05,
            "mean accuracy {mean_acc}"
        );
    }
}
