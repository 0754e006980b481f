//! The diagnostic classifier: a one-hidden-layer network trained on fixed
//! word vectors to predict probing labels.
//!
//! The network is input -> hidden (ReLU, inverted dropout) -> softmax,
//! trained with cross-entropy and an adaptive-moment optimizer, early
//! stopping on dev accuracy with best-weight restore. Everything runs on
//! 64-bit reals and a seeded generator, so a run is reproducible down to
//! the last bit on a fixed floating-point environment.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EmbeddingTable, InstanceVectors};
use crate::taskgen::{InstanceKind, ProbingDataset, ProbingInstance, Split};

/// Training settings for the diagnostic classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden_dim: usize,
    /// Probability of dropping a hidden unit during training.
    pub dropout: f64,
    pub epochs: usize,
    /// Stop after this many consecutive epochs without a dev improvement.
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> ProbeConfig {
        ProbeConfig {
            hidden_dim: 300,
            dropout: 0.5,
            epochs: 20,
            patience: 5,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.hidden_dim == 0 {
            return Err(ProbeError::InvalidConfig {
                message: "hidden_dim must be positive".to_string(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ProbeError::InvalidConfig {
                message: format!("dropout must lie in [0, 1), got {}", self.dropout),
            });
        }
        if self.patience > self.epochs {
            return Err(ProbeError::InvalidConfig {
                message: format!(
                    "patience {} exceeds the epoch budget {}",
                    self.patience, self.epochs
                ),
            });
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ProbeError::InvalidConfig {
                message: "epochs and batch_size must be positive".to_string(),
            });
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(ProbeError::InvalidConfig {
                message: format!("learning rate must be positive, got {}", self.learning_rate),
            });
        }
        Ok(())
    }
}

/// Why a probe could not be trained.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("invalid probe configuration: {message}")]
    InvalidConfig { message: String },
    #[error("invalid dataset: {message}")]
    InvalidDataset { message: String },
    #[error("the {split} split is empty")]
    EmptySplit { split: &'static str },
    #[error("dataset has {labels} label(s); probing needs at least two")]
    DegenerateDataset { labels: usize },
    #[error("feature vector of length {found} disagrees with expected length {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no vector for instance {line} of the {split} split")]
    MissingVector { split: &'static str, line: usize },
}

/// Everything a finished probe run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub language: String,
    pub task: String,
    /// Name of the vector table, filled by the caller; empty when unset.
    pub embedding: String,
    /// Dev accuracy at the best epoch, in percent.
    pub dev_accuracy: f64,
    /// Test accuracy of the restored best weights, in percent.
    pub test_accuracy: f64,
    /// Accuracy of always predicting the most frequent train label.
    pub majority_baseline: f64,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    /// Share of lookups that missed the vector table, in percent.
    pub oov_rate: f64,
    pub label_set: Vec<String>,
    /// Test-split counts; rows are gold labels, columns predictions, both
    /// in `label_set` order.
    pub confusion: Vec<Vec<usize>>,
}

impl ProbeReport {
    /// Header line matching [`ProbeReport::table_row`].
    pub const TABLE_HEADER: &'static str =
        "language\ttask\tembedding\tdev\ttest\tbaseline\tbest_epoch\toov";

    /// The report as one tab-separated row.
    pub fn table_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}\t{}\t{:.2}",
            self.language,
            self.task,
            self.embedding,
            self.dev_accuracy,
            self.test_accuracy,
            self.majority_baseline,
            self.best_epoch,
            self.oov_rate
        )
    }

    /// Accuracy recomputed from the confusion matrix, in percent.
    pub fn confusion_accuracy(&self) -> f64 {
        let correct: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        let total: usize = self.confusion.iter().flatten().sum();
        100.0 * correct as f64 / total as f64
    }
}

/// Where feature vectors come from.
#[derive(Clone, Copy)]
pub enum VectorSource<'a> {
    /// Look every form up in one fixed table.
    Table(&'a EmbeddingTable),
    /// Use precomputed per-instance vectors, keyed by line number within
    /// each split. Covers external contextual encoders.
    PerInstance {
        train: &'a InstanceVectors,
        dev: &'a InstanceVectors,
        test: &'a InstanceVectors,
    },
}

/// Turns one instance into its feature vector using a table: a single form
/// maps to its vector, a pair to the concatenation of both vectors in
/// order, a token in context to the vector of the token's form. Unknown
/// forms fall back to the table's unk vector; the second value counts how
/// many lookups missed.
pub fn featurize(instance: &ProbingInstance, table: &EmbeddingTable) -> (Vec<f64>, usize) {
    let mut oov = 0;
    let mut lookup = |form: &str| -> Vec<f64> {
        if !table.contains(form) {
            oov += 1;
        }
        table.lookup(form).to_vec()
    };
    let vector = match &instance.kind {
        InstanceKind::SingleForm { form } => lookup(form),
        InstanceKind::FormPair { first, second } => {
            let mut v = lookup(first);
            v.extend(lookup(second));
            v
        }
        InstanceKind::TokenInContext { sentence, index } => {
            let form = sentence.split_whitespace().nth(*index).unwrap_or("");
            lookup(form)
        }
    };
    (vector, oov)
}

/// The most frequent train label (ties resolved toward the
/// lexicographically smallest) scored on the test split, in percent.
pub fn majority_baseline(ds: &ProbingDataset) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for instance in ds.split(Split::Train) {
        *counts.entry(instance.label.as_str()).or_insert(0) += 1;
    }
    // BTreeMap iterates labels in ascending order, so `>` keeps the
    // smallest label on ties.
    let mut majority = "";
    let mut best = 0;
    for (label, count) in counts {
        if count > best {
            majority = label;
            best = count;
        }
    }
    let test = ds.split(Split::Test);
    let hits = test.iter().filter(|i| i.label == majority).count();
    100.0 * hits as f64 / test.len() as f64
}

/// Trains the probe on vectors from a fixed table.
pub fn train_probe(
    ds: &ProbingDataset,
    table: &EmbeddingTable,
    cfg: &ProbeConfig,
) -> Result<ProbeReport, ProbeError> {
    train_probe_with(ds, VectorSource::Table(table), cfg)
}

/// Trains the probe with an arbitrary vector source.
pub fn train_probe_with(
    ds: &ProbingDataset,
    source: VectorSource,
    cfg: &ProbeConfig,
) -> Result<ProbeReport, ProbeError> {
    cfg.validate()?;
    ds.validate()
        .map_err(|message| ProbeError::InvalidDataset { message })?;
    for split in Split::ALL {
        if ds.split(split).is_empty() {
            return Err(ProbeError::EmptySplit { split: split.name() });
        }
    }
    if ds.label_set.len() < 2 {
        return Err(ProbeError::DegenerateDataset {
            labels: ds.label_set.len(),
        });
    }

    let label_index: BTreeMap<&str, usize> = ds
        .label_set
        .iter()
        .enumerate()
        .map(|(i, label)| (label.as_str(), i))
        .collect();
    let train = featurize_split(ds.split(Split::Train), "train", &label_index, source)?;
    let dev = featurize_split(ds.split(Split::Dev), "dev", &label_index, source)?;
    let test = featurize_split(ds.split(Split::Test), "test", &label_index, source)?;
    if dev.x.ncols() != train.x.ncols() || test.x.ncols() != train.x.ncols() {
        return Err(ProbeError::DimensionMismatch {
            expected: train.x.ncols(),
            found: if dev.x.ncols() != train.x.ncols() {
                dev.x.ncols()
            } else {
                test.x.ncols()
            },
        });
    }

    let lookups = train.lookups + dev.lookups + test.lookups;
    let oov = train.oov + dev.oov + test.oov;
    let oov_rate = 100.0 * oov as f64 / lookups as f64;

    let n_labels = ds.label_set.len();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::init(train.x.ncols(), cfg.hidden_dim, n_labels, &mut rng);
    let mut optimizer = Adam::new(&mlp, cfg.learning_rate);
    let keep = 1.0 - cfg.dropout;

    let mut best = mlp.clone();
    let mut best_accuracy = -1.0;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.x.nrows()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let x = train.x.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| train.y[i]).collect();
            let mask = if cfg.dropout > 0.0 {
                dropout_mask(x.nrows(), cfg.hidden_dim, keep, &mut rng)
            } else {
                Array2::ones((x.nrows(), cfg.hidden_dim))
            };
            let (_, grads) = mlp.loss_and_grads(&x, &y, &mask);
            optimizer.step(&mut mlp, &grads);
        }
        let accuracy = accuracy(&mlp, &dev);
        if accuracy > best_accuracy {
            best = mlp.clone();
            best_accuracy = accuracy;
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let predictions = best.predict(&test.x);
    let mut confusion = vec![vec![0usize; n_labels]; n_labels];
    for (&gold, &predicted) in test.y.iter().zip(&predictions) {
        confusion[gold][predicted] += 1;
    }
    let correct: usize = (0..n_labels).map(|i| confusion[i][i]).sum();
    let test_accuracy = 100.0 * correct as f64 / test.y.len() as f64;

    Ok(ProbeReport {
        language: ds.language.clone(),
        task: ds.task.id(),
        embedding: String::new(),
        dev_accuracy: 100.0 * best_accuracy,
        test_accuracy,
        majority_baseline: majority_baseline(ds),
        best_epoch,
        oov_rate,
        label_set: ds.label_set.clone(),
        confusion,
    })
}

/// Compares analytic gradients with central finite differences (step 1e-5)
/// on one batch, dropout disabled, and returns the largest relative error
/// over a seeded sample of parameters.
pub fn check_gradients(
    cfg: &ProbeConfig,
    inputs: &[Vec<f64>],
    labels: &[usize],
    n_labels: usize,
) -> f64 {
    const STEP: f64 = 1e-5;
    const COORDS_PER_PARAM: usize = 10;
    assert!(!inputs.is_empty() && inputs.len() == labels.len());

    let input_dim = inputs[0].len();
    let mut x = Array2::zeros((inputs.len(), input_dim));
    for (i, row) in inputs.iter().enumerate() {
        assert_eq!(row.len(), input_dim, "ragged gradient-check batch");
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let mask = Array2::ones((inputs.len(), cfg.hidden_dim));

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::init(input_dim, cfg.hidden_dim, n_labels, &mut rng);
    let (_, grads) = mlp.loss_and_grads(&x, labels, &mask);

    let mut worst: f64 = 0.0;
    for which in 0..4 {
        let len = param_len(&mlp, which);
        for _ in 0..COORDS_PER_PARAM.min(len) {
            let idx = rng.gen_range(0..len);
            let analytic = grad_at(&grads, which, idx);
            let base = param_at(&mlp, which, idx);
            set_param(&mut mlp, which, idx, base + STEP);
            let plus = mlp.loss(&x, labels, &mask);
            set_param(&mut mlp, which, idx, base - STEP);
            let minus = mlp.loss(&x, labels, &mask);
            set_param(&mut mlp, which, idx, base);
            let numeric = (plus - minus) / (2.0 * STEP);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

struct FeaturizedSplit {
    x: Array2<f64>,
    y: Vec<usize>,
    oov: usize,
    lookups: usize,
}

fn featurize_split(
    instances: &[ProbingInstance],
    split: &'static str,
    label_index: &BTreeMap<&str, usize>,
    source: VectorSource,
) -> Result<FeaturizedSplit, ProbeError> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(instances.len());
    let mut oov = 0;
    let mut lookups = 0;
    for (line, instance) in instances.iter().enumerate() {
        let vector = match source {
            VectorSource::Table(table) => {
                let (vector, missed) = featurize(instance, table);
                oov += missed;
                lookups += match instance.kind {
                    InstanceKind::FormPair { .. } => 2,
                    _ => 1,
                };
                vector
            }
            VectorSource::PerInstance { train, dev, test } => {
                let vectors = match split {
                    "train" => train,
                    "dev" => dev,
                    _ => test,
                };
                lookups += 1;
                vectors
                    .get(line)
                    .ok_or(ProbeError::MissingVector { split, line })?
                    .to_vec()
            }
        };
        rows.push(vector);
    }

    let dim = rows[0].len();
    let mut x = Array2::zeros((rows.len(), dim));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(ProbeError::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let y = instances
        .iter()
        .map(|i| label_index[i.label.as_str()])
        .collect();
    Ok(FeaturizedSplit { x, y, oov, lookups })
}

fn accuracy(mlp: &Mlp, split: &FeaturizedSplit) -> f64 {
    let predictions = mlp.predict(&split.x);
    let correct = predictions
        .iter()
        .zip(&split.y)
        .filter(|(p, y)| p == y)
        .count();
    correct as f64 / split.y.len() as f64
}

fn dropout_mask(rows: usize, cols: usize, keep: f64, rng: &mut ChaCha20Rng) -> Array2<f64> {
    let mut mask = Array2::zeros((rows, cols));
    for v in mask.iter_mut() {
        if rng.gen::<f64>() < keep {
            // Inverted dropout: scale at train time so evaluation uses the
            // weights unchanged.
            *v = 1.0 / keep;
        }
    }
    mask
}

#[derive(Debug, Clone)]
struct Mlp {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

struct Grads {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl Mlp {
    /// Fan-in scaled uniform init, biases at zero.
    fn init(input: usize, hidden: usize, labels: usize, rng: &mut ChaCha20Rng) -> Mlp {
        Mlp {
            w1: uniform_matrix(hidden, input, rng),
            b1: Array1::zeros(hidden),
            w2: uniform_matrix(labels, hidden, rng),
            b2: Array1::zeros(labels),
        }
    }

    /// Hidden pre-activations, one row per example.
    fn pre_hidden(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w1.t()) + &self.b1
    }

    fn logits(&self, hidden: &Array2<f64>) -> Array2<f64> {
        hidden.dot(&self.w2.t()) + &self.b2
    }

    fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        let mut hidden = self.pre_hidden(x);
        hidden.mapv_inplace(|v| v.max(0.0));
        let logits = self.logits(&hidden);
        logits.rows().into_iter().map(|row| argmax(row.as_slice().unwrap())).collect()
    }

    fn loss(&self, x: &Array2<f64>, y: &[usize], mask: &Array2<f64>) -> f64 {
        let pre = self.pre_hidden(x);
        let hidden = pre.mapv(|v| v.max(0.0)) * mask;
        let probs = softmax_rows(self.logits(&hidden));
        let mut loss = 0.0;
        for (i, &label) in y.iter().enumerate() {
            loss -= probs[[i, label]].max(f64::MIN_POSITIVE).ln();
        }
        loss / y.len() as f64
    }

    /// Mean cross-entropy and its parameter gradients on one batch. The
    /// mask already carries the inverted-dropout scale; pass ones to train
    /// without dropout.
    fn loss_and_grads(&self, x: &Array2<f64>, y: &[usize], mask: &Array2<f64>) -> (f64, Grads) {
        let batch = y.len() as f64;
        let pre = self.pre_hidden(x);
        let hidden = pre.mapv(|v| v.max(0.0)) * mask;
        let probs = softmax_rows(self.logits(&hidden));

        let mut loss = 0.0;
        for (i, &label) in y.iter().enumerate() {
            loss -= probs[[i, label]].max(f64::MIN_POSITIVE).ln();
        }
        loss /= batch;

        let mut dlogits = probs;
        for (i, &label) in y.iter().enumerate() {
            dlogits[[i, label]] -= 1.0;
        }
        dlogits /= batch;

        let dw2 = dlogits.t().dot(&hidden);
        let db2 = dlogits.sum_axis(Axis(0));
        let mut dhidden = dlogits.dot(&self.w2);
        dhidden *= mask;
        Zip::from(&mut dhidden).and(&pre).for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let dw1 = dhidden.t().dot(x);
        let db1 = dhidden.sum_axis(Axis(0));
        (loss, Grads { w1: dw1, b1: db1, w2: dw2, b2: db2 })
    }
}

struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    fn new(mlp: &Mlp, learning_rate: f64) -> Adam {
        let zeros = || Grads {
            w1: Array2::zeros(mlp.w1.dim()),
            b1: Array1::zeros(mlp.b1.dim()),
            w2: Array2::zeros(mlp.w2.dim()),
            b2: Array1::zeros(mlp.b2.dim()),
        };
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    fn step(&mut self, mlp: &mut Mlp, grads: &Grads) {
        self.step += 1;
        let t = self.step as i32;
        let rate = self.learning_rate * (1.0 - self.beta2.powi(t)).sqrt()
            / (1.0 - self.beta1.powi(t));
        update_slice(
            mlp.w1.as_slice_mut().unwrap(),
            self.m.w1.as_slice_mut().unwrap(),
            self.v.w1.as_slice_mut().unwrap(),
            grads.w1.as_slice().unwrap(),
            rate, self.beta1, self.beta2, self.epsilon,
        );
        update_slice(
            mlp.b1.as_slice_mut().unwrap(),
            self.m.b1.as_slice_mut().unwrap(),
            self.v.b1.as_slice_mut().unwrap(),
            grads.b1.as_slice().unwrap(),
            rate, self.beta1, self.beta2, self.epsilon,
        );
        update_slice(
            mlp.w2.as_slice_mut().unwrap(),
            self.m.w2.as_slice_mut().unwrap(),
            self.v.w2.as_slice_mut().unwrap(),
            grads.w2.as_slice().unwrap(),
            rate, self.beta1, self.beta2, self.epsilon,
        );
        update_slice(
            mlp.b2.as_slice_mut().unwrap(),
            self.m.b2.as_slice_mut().unwrap(),
            self.v.b2.as_slice_mut().unwrap(),
            grads.b2.as_slice().unwrap(),
            rate, self.beta1, self.beta2, self.epsilon,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &[f64],
    rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        params[i] -= rate * m[i] / (v[i].sqrt() + epsilon);
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    let uniform = Uniform::new_inclusive(-bound, bound);
    let mut w = Array2::zeros((rows, cols));
    for v in w.iter_mut() {
        *v = uniform.sample(rng);
    }
    w
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    logits
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn param_len(mlp: &Mlp, which: usize) -> usize {
    match which {
        0 => mlp.w1.len(),
        1 => mlp.b1.len(),
        2 => mlp.w2.len(),
        _ => mlp.b2.len(),
    }
}

fn param_at(mlp: &Mlp, which: usize, idx: usize) -> f64 {
    match which {
        0 => mlp.w1.as_slice().unwrap()[idx],
        1 => mlp.b1.as_slice().unwrap()[idx],
        2 => mlp.w2.as_slice().unwrap()[idx],
        _ => mlp.b2.as_slice().unwrap()[idx],
    }
}

fn set_param(mlp: &mut Mlp, which: usize, idx: usize, value: f64) {
    match which {
        0 => mlp.w1.as_slice_mut().unwrap()[idx] = value,
        1 => mlp.b1.as_slice_mut().unwrap()[idx] = value,
        2 => mlp.w2.as_slice_mut().unwrap()[idx] = value,
        _ => mlp.b2.as_slice_mut().unwrap()[idx] = value,
    }
}

fn grad_at(grads: &Grads, which: usize, idx: usize) -> f64 {
    match which {
        0 => grads.w1.as_slice().unwrap()[idx],
        1 => grads.b1.as_slice().unwrap()[idx],
        2 => grads.w2.as_slice().unwrap()[idx],
        _ => grads.b2.as_slice().unwrap()[idx],
    }
}
