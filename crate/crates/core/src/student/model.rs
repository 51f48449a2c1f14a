use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureVector};
use crate::data::{LabeledSample, TaskSpec};
use crate::error::{Error, Result};

const CHECKPOINT_FORMAT: &str = "evokd-student/1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub l2: f64,
}

impl TrainParams {
    pub fn new(learning_rate: f64, clip_norm: f64) -> Self {
        Self {
            learning_rate,
            clip_norm,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub label_index: usize,
    pub distribution: Vec<f64>,
}

/// Samples featurized once so repeated steps on the same batch skip hashing.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    rows: Vec<(FeatureVector, usize)>,
}

impl EncodedBatch {
    pub fn new(task: &TaskSpec, samples: &[LabeledSample], dim: usize) -> Result<Self> {
        let rows = samples
            .iter()
            .map(|s| {
                let label = task
                    .label_index(&s.label)
                    .ok_or_else(|| Error::InvalidSample(format!("label {:?} not in task", s.label)))?;
                Ok((featurize(&s.text, dim), label))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Gradient of the mean cross-entropy (plus optional L2 term) for one batch.
///
/// The data term is sparse: only features present in the batch appear in `weights`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// feature index -> per-label partial derivatives of the data term
    pub weights: BTreeMap<u32, Vec<f64>>,
    pub bias: Vec<f64>,
    pub l2: f64,
}

impl Gradient {
    /// Full partial derivative for one weight, including the L2 term.
    pub fn weight_entry(&self, model: &StudentModel, label: usize, idx: u32) -> f64 {
        let data = self.weights.get(&idx).map_or(0.0, |g| g[label]);
        data + self.l2 * model.weight(label, idx as usize)
    }

    /// Global L2 norm over every weight and bias partial.
    pub fn norm(&self, model: &StudentModel) -> f64 {
        let mut sq: f64 = self.bias.iter().map(|g| g * g).sum();
        if self.l2 == 0.0 {
            sq += self.weights.values().flatten().map(|g| g * g).sum::<f64>();
        } else {
            for label in 0..model.num_labels() {
                for idx in 0..model.dim {
                    let g = self.weight_entry(model, label, idx as u32);
                    sq += g * g;
                }
            }
        }
        sq.sqrt()
    }
}

/// Multinomial softmax regression over hashed features.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    task: Arc<TaskSpec>,
    dim: usize,
    // label-major: weights[label * dim + feature]
    weights: Vec<f64>,
    bias: Vec<f64>,
    version: u64,
}

impl StudentModel {
    /// The untrained model: all weights and biases zero.
    pub fn zeros(task: Arc<TaskSpec>, dim: usize) -> Self {
        let labels = task.num_labels();
        Self {
            task,
            dim,
            weights: vec![0.0; labels * dim],
            bias: vec![0.0; labels],
            version: 0,
        }
    }

    pub fn from_parts(
        task: Arc<TaskSpec>,
        dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        version: u64,
    ) -> Result<Self> {
        let labels = task.num_labels();
        if dim == 0 || weights.len() != labels * dim || bias.len() != labels {
            return Err(Error::Numeric(format!(
                "shape mismatch: {} labels, dim {dim}, {} weights, {} biases",
                labels,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            task,
            dim,
            weights,
            bias,
            version,
        })
    }

    pub fn task(&self) -> &Arc<TaskSpec> {
        &self.task
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.bias.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, label: usize, idx: usize) -> f64 {
        self.weights[label * self.dim + idx]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|w| w.is_finite())
    }

    pub fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        debug_assert_eq!(x.dim(), self.dim);
        (0..self.num_labels())
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                self.bias[k] + x.entries().iter().map(|&(i, v)| row[i as usize] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        self.predict_features(&featurize(text, self.dim))
    }

    pub fn predict_features(&self, x: &FeatureVector) -> Result<Prediction> {
        let logits = self.logits(x);
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logits {logits:?}")));
        }
        let distribution = softmax(&logits);
        let label_index = argmax(&distribution);
        Ok(Prediction {
            label: self.task.label(label_index).to_string(),
            label_index,
            distribution,
        })
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &EncodedBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("loss of an empty batch".into()));
        }
        let mut total = 0.0;
        for (x, y) in &batch.rows {
            total -= log_softmax(&self.logits(x))[*y];
        }
        let loss = total / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        Ok(loss)
    }

    /// Mean cross-entropy plus `l2 / 2 * |W|^2`; the function `gradient` differentiates.
    pub fn objective(&self, batch: &EncodedBatch, l2: f64) -> Result<f64> {
        let mut value = self.loss(batch)?;
        if l2 != 0.0 {
            value += 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        }
        Ok(value)
    }

    /// Returns the gradient of `objective` and the pre-update mean cross-entropy.
    pub fn gradient(&self, batch: &EncodedBatch, l2: f64) -> Result<(Gradient, f64)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("gradient of an empty batch".into()));
        }
        let n = batch.len() as f64;
        let labels = self.num_labels();
        let mut weights: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut bias = vec![0.0; labels];
        let mut total = 0.0;
        for (x, y) in &batch.rows {
            let logits = self.logits(x);
            let log_p = log_softmax(&logits);
            total -= log_p[*y];
            let residual: Vec<f64> = log_p
                .iter()
                .enumerate()
                .map(|(k, lp)| (lp.exp() - if k == *y { 1.0 } else { 0.0 }) / n)
                .collect();
            for (k, r) in residual.iter().enumerate() {
                bias[k] += r;
            }
            for &(i, v) in x.entries() {
                let g = weights.entry(i).or_insert_with(|| vec![0.0; labels]);
                for (k, r) in residual.iter().enumerate() {
                    g[k] += r * v;
                }
            }
        }
        let loss = total / n;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} at model version {}",
                self.version
            )));
        }
        Ok((Gradient { weights, bias, l2 }, loss))
    }

    /// One SGD step with global-norm clipping. Consumes the model and returns its successor.
    pub fn train_step(self, batch: &[LabeledSample], params: &TrainParams) -> Result<(Self, f64)> {
        let encoded = EncodedBatch::new(&self.task, batch, self.dim)?;
        self.train_step_encoded(&encoded, params)
    }

    pub fn train_step_encoded(mut self, batch: &EncodedBatch, params: &TrainParams) -> Result<(Self, f64)> {
        let loss = self.apply_step(batch, params)?;
        Ok((self, loss))
    }

    /// In-place form of [`StudentModel::train_step`]. On error the model is left untouched.
    pub fn apply_step(&mut self, batch: &EncodedBatch, params: &TrainParams) -> Result<f64> {
        let (grad, loss) = self.gradient(batch, params.l2)?;
        let norm = grad.norm(self);
        let scale = clip_scale(norm, params.clip_norm);
        let step = params.learning_rate * scale;
        if params.l2 != 0.0 {
            // Shrink every weight, then add the sparse data term.
            let decay = 1.0 - step * params.l2;
            self.weights.iter_mut().for_each(|w| *w *= decay);
        }
        for (&idx, g) in &grad.weights {
            for (k, gk) in g.iter().enumerate() {
                self.weights[k * self.dim + idx as usize] -= step * gk;
            }
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= step * g;
        }
        self.version += 1;
        Ok(loss)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let weights = (0..self.num_labels())
            .flat_map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                row.iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0 || w.is_sign_negative())
                    .map(move |(i, &w)| (k, i, w))
            })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            task: (*self.task).clone(),
            dim: self.dim,
            version: self.version,
            bias: self.bias.clone(),
            weights,
        };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format {:?}", file.format)));
        }
        let labels = file.task.num_labels();
        let mut weights = vec![0.0; labels * file.dim];
        for (k, i, w) in file.weights {
            if k >= labels || i >= file.dim {
                return Err(Error::Config(format!("checkpoint weight ({k}, {i}) out of range")));
            }
            weights[k * file.dim + i] = w;
        }
        Self::from_parts(Arc::new(file.task), file.dim, weights, file.bias, file.version)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    task: TaskSpec,
    dim: usize,
    version: u64,
    bias: Vec<f64>,
    /// Non-zero weights as (label, feature, value).
    weights: Vec<(usize, usize, f64)>,
}

/// Factor applied to a gradient of norm `norm` so its norm does not exceed `clip_norm`.
pub fn clip_scale(norm: f64, clip_norm: f64) -> f64 {
    if norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task(labels: &[&str]) -> Arc<TaskSpec> {
        Arc::new(TaskSpec::new("t", "", labels.iter().copied()).unwrap())
    }

    fn samples(rows: &[(&str, &str)]) -> Vec<LabeledSample> {
        rows.iter().map(|(t, l)| LabeledSample::seed(*t, *l).unwrap()).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = StudentModel::zeros(task(&["a", "b", "c"]), 64);
        let p = model.predict("anything at all").unwrap();
        for q in &p.distribution {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(p.label, "a");
    }

    #[test]
    fn bias_ten_zero() {
        let t = task(&["a", "b"]);
        let model = StudentModel::from_parts(t, 8, vec![0.0; 16], vec![10.0, 0.0], 0).unwrap();
        let p = model.predict("x").unwrap();
        // 1 / (1 + e^-10) = 0.999954602131...
        assert!((p.distribution[0] - 0.999_954_602_131_297_6).abs() < 1e-12);
        assert!((p.distribution[1] - 4.539_786_870_243_441e-5).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[0.3, -1.2, 2.0]);
        let b = softmax(&[100.3, 98.8, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn zero_model_loss_is_ln2() {
        let t = task(&["pos", "neg"]);
        let model = StudentModel::zeros(t, 1 << 10);
        let batch = samples(&[("good", "pos"), ("bad", "neg"), ("fine", "pos")]);
        let (next, loss) = model.train_step(&batch, &TrainParams::new(0.5, 2.0)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(next.version(), 1);
    }

    #[test]
    fn clip_scales_norm_four_to_two() {
        assert_eq!(clip_scale(4.0, 2.0), 0.5);
        assert_eq!(clip_scale(1.5, 2.0), 1.0);
    }

    #[test]
    fn applied_step_is_clipped() {
        // One sample, huge learning signal: the applied update norm must equal lr * clip.
        let t = task(&["a", "b"]);
        let model = StudentModel::from_parts(t, 16, vec![0.0; 32], vec![-20.0, 20.0], 0).unwrap();
        let batch = EncodedBatch::new(model.task(), &samples(&[("x y z", "a")]), 16).unwrap();
        let (grad, _) = model.gradient(&batch, 0.0).unwrap();
        let norm = grad.norm(&model);
        assert!(norm > 1.0);
        let params = TrainParams::new(1.0, 0.25);
        let before = model.clone();
        let (after, _) = model.train_step_encoded(&batch, &params).unwrap();
        let delta: f64 = before
            .weights()
            .iter()
            .chain(before.bias())
            .zip(after.weights().iter().chain(after.bias()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((delta - 0.25).abs() < 1e-12, "{delta}");
    }

    #[test]
    fn gradient_matches_finite_differences_with_l2() {
        let t = task(&["a", "b", "c"]);
        let dim = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let weights = (0..3 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = StudentModel::from_parts(t, dim, weights, bias, 0).unwrap();
        let rows = samples(&[("red apple", "a"), ("blue sky", "b"), ("green grass", "c"), ("red sky", "b")]);
        let batch = EncodedBatch::new(model.task(), &rows, dim).unwrap();
        let l2 = 0.1;
        let (grad, _) = model.gradient(&batch, l2).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            for i in 0..dim {
                let mut plus = model.weights().to_vec();
                let mut minus = model.weights().to_vec();
                plus[k * dim + i] += h;
                minus[k * dim + i] -= h;
                let fp = StudentModel::from_parts(model.task().clone(), dim, plus, model.bias().to_vec(), 0)
                    .unwrap()
                    .objective(&batch, l2)
                    .unwrap();
                let fm = StudentModel::from_parts(model.task().clone(), dim, minus, model.bias().to_vec(), 0)
                    .unwrap()
                    .objective(&batch, l2)
                    .unwrap();
                let numeric = (fp - fm) / (2.0 * h);
                let analytic = grad.weight_entry(&model, k, i as u32);
                assert!((numeric - analytic).abs() <= 1e-6 + 1e-4 * analytic.abs(), "{numeric} vs {analytic}");
            }
        }
    }

    #[test]
    fn non_finite_model_is_numeric_error() {
        let t = task(&["a", "b"]);
        let model = StudentModel::from_parts(t, 4, vec![0.0; 8], vec![f64::NAN, 0.0], 0).unwrap();
        assert!(matches!(model.predict("x"), Err(Error::Numeric(_))));
        assert!(!model.is_finite());
    }

    #[test]
    fn empty_batch_rejected() {
        let model = StudentModel::zeros(task(&["a", "b"]), 8);
        assert!(matches!(
            model.train_step(&[], &TrainParams::new(0.5, 2.0)),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn checkpoint_round_trips_bits() {
        let t = task(&["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let weights: Vec<f64> = (0..2 * 32)
            .map(|i| if i % 3 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) / 3.0 })
            .collect();
        let model = StudentModel::from_parts(t, 32, weights, vec![0.1, -1.0 / 7.0], 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = StudentModel::load(&path).unwrap();
        assert_eq!(back.version(), 42);
        for (a, b) in model.weights().iter().chain(model.bias()).zip(back.weights().iter().chain(back.bias())) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
