//! Pixel-wise late fusion of two experts.
//!
//! A gate MLP reads the concatenated per-pixel softmax vectors of both
//! experts (optionally over a 3x3 window for limited context), squashes its
//! scalar output through a logistic, and the fused prediction is the convex
//! combination `w * a + (1 - w) * b` trained with cross-entropy of the
//! fused distribution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::color::shuffled_indices;
use crate::error::{CueError, Result};
use crate::experts::mlp::{
    adam_step, argmax, backprop_into, init_mlp, AdamState, Gradients, MlpModel, MlpSpec,
    SoftmaxField, TrainConfig,
};
use crate::raster::{LabelMask, IGNORE};
use crate::rng::{stage, stage_rng};

/// Fusion init bound from the reference training setup.
pub const FUSION_INIT_SCALE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct FusionModel {
    pub gate: MlpModel,
    /// When set, the gate input is the 3x3 neighborhood of both softmax
    /// fields (2 * K * 9 features) instead of the center pixel only.
    pub window3: bool,
    pub k: usize,
}

impl FusionModel {
    pub fn input_dim(k: usize, window3: bool) -> usize {
        2 * k * if window3 { 9 } else { 1 }
    }

    /// Gate weight w in (0, 1) for one input vector.
    pub fn weight(&self, input: &[f64]) -> f64 {
        let acts = self.gate.activations(input);
        logistic(acts.last().unwrap()[0])
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Training pairs: two softmax fields per item plus the ground truth.
pub struct FusionTask<'a> {
    pub expert_a: &'a [SoftmaxField],
    pub expert_b: &'a [SoftmaxField],
    pub gts: &'a [LabelMask],
}

impl FusionTask<'_> {
    fn validate(&self) -> Result<usize> {
        if self.expert_a.len() != self.expert_b.len() || self.expert_a.len() != self.gts.len() {
            return Err(CueError::ShapeMismatch(
                "expert fields and ground truths must pair up".into(),
            ));
        }
        if self.expert_a.is_empty() {
            return Err(CueError::EmptyDataset);
        }
        let k = self.expert_a[0].k;
        for i in 0..self.expert_a.len() {
            let (a, b, gt) = (&self.expert_a[i], &self.expert_b[i], &self.gts[i]);
            if a.k != k || b.k != k {
                return Err(CueError::ShapeMismatch(
                    "expert fields disagree on the class count".into(),
                ));
            }
            if a.height != b.height
                || a.width != b.width
                || a.height != gt.height()
                || a.width != gt.width()
            {
                return Err(CueError::ShapeMismatch(format!(
                    "item {i}: field and mask dimensions differ"
                )));
            }
        }
        Ok(k)
    }
}

/// Gate input vector for pixel (x, y): both softmax vectors, centered or
/// over a mirrored 3x3 window.
fn gate_input(a: &SoftmaxField, b: &SoftmaxField, x: usize, y: usize, window3: bool) -> Vec<f64> {
    if !window3 {
        let mut input = Vec::with_capacity(2 * a.k);
        input.extend_from_slice(a.pixel(x, y));
        input.extend_from_slice(b.pixel(x, y));
        return input;
    }
    let mut input = Vec::with_capacity(18 * a.k);
    for field in [a, b] {
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let nx = (x as i32 + dx).clamp(0, field.width as i32 - 1) as usize;
                let ny = (y as i32 + dy).clamp(0, field.height as i32 - 1) as usize;
                input.extend_from_slice(field.pixel(nx, ny));
            }
        }
    }
    input
}

/// Train the gate with minibatch Adam on all labeled pixels. The gate
/// init uses U(-1e-3, 1e-3), so the initial weighting is 1/2 everywhere.
pub fn train_fusion(
    task: &FusionTask,
    hidden: &[usize],
    window3: bool,
    cfg: &TrainConfig,
) -> Result<FusionModel> {
    cfg.validate()?;
    let k = task.validate()?;
    let input_dim = FusionModel::input_dim(k, window3);
    let mut widths = vec![input_dim];
    widths.extend_from_slice(hidden);
    widths.push(1);
    let spec = MlpSpec::new(widths, FUSION_INIT_SCALE)?;

    let mut rng = stage_rng(cfg.rng_seed, stage::TRAINING, 1);
    let mut gate = init_mlp(&spec, &mut rng)?;
    let mut state = AdamState::new(&gate);

    // Flat index of every labeled pixel.
    let mut samples: Vec<(usize, usize, usize)> = Vec::new();
    for (item, gt) in task.gts.iter().enumerate() {
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                if gt.get(x, y) != IGNORE {
                    samples.push((item, x, y));
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(CueError::EmptyDataset);
    }

    let batches_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut step = 0;
    for _ in 0..cfg.epochs {
        let perm = shuffled_indices(samples.len(), &mut rng);
        for chunk in perm.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&gate);
            let inv_n = 1.0 / chunk.len() as f64;
            for &si in chunk {
                let (item, x, y) = samples[si];
                let (a, b) = (&task.expert_a[item], &task.expert_b[item]);
                let label = task.gts[item].get(x, y) as usize;
                let input = gate_input(a, b, x, y, window3);
                let acts = gate.activations(&input);
                let z = acts.last().unwrap()[0];
                let w = logistic(z);
                let pa = a.pixel(x, y)[label];
                let pb = b.pixel(x, y)[label];
                let fused = (w * pa + (1.0 - w) * pb).max(f64::MIN_POSITIVE);
                // d(-ln fused)/dz = -(pa - pb)/fused * w(1 - w)
                let dz = -(pa - pb) / fused * w * (1.0 - w) * inv_n;
                backprop_into(&gate, &acts, vec![dz], &mut grads);
            }
            let lr = cfg.lr_at(step, total_steps);
            adam_step(&mut gate, &mut state, &grads, lr, cfg);
            step += 1;
        }
    }
    Ok(FusionModel { gate, window3, k })
}

/// Fused argmax labels plus the per-pixel gate weight map in [0, 1].
pub fn fuse_predict(
    model: &FusionModel,
    a: &SoftmaxField,
    b: &SoftmaxField,
) -> Result<(LabelMask, Vec<f64>)> {
    if a.height != b.height || a.width != b.width || a.k != b.k || a.k != model.k {
        return Err(CueError::ShapeMismatch(
            "softmax fields must share dimensions and class count".into(),
        ));
    }
    let (h, w, k) = (a.height, a.width, a.k);
    let mut labels = vec![0u8; h * w];
    let mut weights = vec![0.0; h * w];
    let mut fused = vec![0.0; k];
    for y in 0..h {
        for x in 0..w {
            let input = gate_input(a, b, x, y, model.window3);
            let gw = model.weight(&input);
            let (pa, pb) = (a.pixel(x, y), b.pixel(x, y));
            for c in 0..k {
                fused[c] = gw * pa[c] + (1.0 - gw) * pb[c];
            }
            labels[y * w + x] = argmax(&fused) as u8;
            weights[y * w + x] = gw;
        }
    }
    Ok((LabelMask::new(h, w, labels)?, weights))
}

/// Uniform softmax field helper for baselines and tests.
pub fn uniform_field(height: usize, width: usize, k: usize) -> SoftmaxField {
    SoftmaxField {
        height,
        width,
        k,
        data: vec![1.0 / k as f64; height * width * k],
    }
}

/// One-hot-ish field that is `confidence` on the given labels and spreads
/// the rest uniformly.
pub fn field_from_labels(labels: &LabelMask, k: usize, confidence: f64) -> SoftmaxField {
    let rest = (1.0 - confidence) / (k - 1).max(1) as f64;
    let mut data = vec![0.0; labels.labels().len() * k];
    for (i, &l) in labels.labels().iter().enumerate() {
        for c in 0..k {
            data[i * k + c] = if c == l as usize { confidence } else { rest };
        }
    }
    SoftmaxField {
        height: labels.height(),
        width: labels.width(),
        k,
        data,
    }
}

/// Random-but-valid softmax field, for tests.
pub fn random_field(height: usize, width: usize, k: usize, rng: &mut ChaCha8Rng) -> SoftmaxField {
    let mut data = vec![0.0; height * width * k];
    for px in data.chunks_exact_mut(k) {
        let mut sum = 0.0;
        for v in px.iter_mut() {
            *v = rng.gen_range(0.05..1.0f64);
            sum += *v;
        }
        for v in px.iter_mut() {
            *v /= sum;
        }
    }
    SoftmaxField {
        height,
        width,
        k,
        data,
    }
}
