//! Probing dataset generation.
//!
//! Every generator turns lexical resources into a [`ProbingDataset`] with
//! exactly filled train/dev/test splits, a fixed label set and a metadata
//! record of every filtering and sampling decision. All sampling is driven
//! by the config seed; rerunning a generator with equal inputs yields a
//! byte-identical dataset.

mod io;
mod paired;
mod single;
mod token;

pub use io::{read_dataset, write_dataset, DatasetIoError};
pub use paired::{generate_oddfeat_task, generate_samefeat_task};
pub use single::{
    character_bin, generate_characterbin_task, generate_single_feature_task,
    generate_tagcount_task,
};
pub use token::generate_token_level_task;

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FrequencyList;
use crate::schema::{FeatureDimension, LanguageConfig, SplitSizes};

/// The label used for forms that do not carry the probed dimension.
pub const NONE_LABEL: &str = "None";

/// The label for pairs related through their lemma rather than a feature.
pub const LEMMA_LABEL: &str = "Lemma";

/// Identifies one probing task.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    /// Predict the value of one dimension from a form in isolation.
    SingleFeature(FeatureDimension),
    /// Predict how many feature values a form's bundle carries.
    TagCount,
    /// Predict the length bin of a form.
    CharacterBin,
    /// Predict which dimension two forms agree on.
    SameFeat,
    /// Predict the one dimension on which two forms of a lemma differ.
    OddFeat,
    /// Distinguish real words from generated pseudowords.
    Pseudo,
    /// Predict the value of one dimension for a token in its sentence.
    TokenFeature(FeatureDimension),
}

impl TaskKind {
    /// Stable lowercase identifier, e.g. `case`, `samefeat`, `token-person`.
    pub fn id(&self) -> String {
        match self {
            TaskKind::SingleFeature(d) => d.name().to_lowercase(),
            TaskKind::TagCount => "tagcount".to_string(),
            TaskKind::CharacterBin => "charbin".to_string(),
            TaskKind::SameFeat => "samefeat".to_string(),
            TaskKind::OddFeat => "oddfeat".to_string(),
            TaskKind::Pseudo => "pseudo".to_string(),
            TaskKind::TokenFeature(d) => format!("token-{}", d.name().to_lowercase()),
        }
    }

    /// Parses an identifier as produced by [`TaskKind::id`].
    pub fn parse(s: &str) -> Option<TaskKind> {
        let s = s.trim().to_lowercase();
        if s.is_empty() {
            return None;
        }
        Some(match s.as_str() {
            "tagcount" => TaskKind::TagCount,
            "charbin" => TaskKind::CharacterBin,
            "samefeat" => TaskKind::SameFeat,
            "oddfeat" => TaskKind::OddFeat,
            "pseudo" => TaskKind::Pseudo,
            _ => match s.strip_prefix("token-") {
                Some(rest) if !rest.is_empty() => {
                    TaskKind::TokenFeature(FeatureDimension::from_name(rest))
                }
                Some(_) => return None,
                None => TaskKind::SingleFeature(FeatureDimension::from_name(&s)),
            },
        })
    }

    /// Whether instances of this task are single forms, form pairs or
    /// tokens in context.
    pub fn instance_shape(&self) -> InstanceShape {
        match self {
            TaskKind::SameFeat | TaskKind::OddFeat => InstanceShape::FormPair,
            TaskKind::TokenFeature(_) => InstanceShape::TokenInContext,
            _ => InstanceShape::SingleForm,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// The structural shape shared by all instances of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceShape {
    SingleForm,
    FormPair,
    TokenInContext,
}

/// What a probing example looks like on disk and to the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InstanceKind {
    SingleForm { form: String },
    FormPair { first: String, second: String },
    TokenInContext { sentence: String, index: usize },
}

impl InstanceKind {
    pub fn shape(&self) -> InstanceShape {
        match self {
            InstanceKind::SingleForm { .. } => InstanceShape::SingleForm,
            InstanceKind::FormPair { .. } => InstanceShape::FormPair,
            InstanceKind::TokenInContext { .. } => InstanceShape::TokenInContext,
        }
    }
}

/// How an instance entered the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// Labeled form drawn from the frequent vocabulary.
    Frequent,
    /// Labeled form outside the frequent vocabulary.
    Rare,
    /// Form without the probed dimension, labeled `None`.
    NoneClass,
    /// Member of a generated form pair.
    Pair,
    /// Taken from a corpus or lexicon as-is (tokens, real words).
    Corpus,
    /// Synthesized, e.g. a pseudoword.
    Generated,
}

impl Provenance {
    fn code(self) -> char {
        match self {
            Provenance::Frequent => 'F',
            Provenance::Rare => 'R',
            Provenance::NoneClass => 'N',
            Provenance::Pair => 'P',
            Provenance::Corpus => 'C',
            Provenance::Generated => 'G',
        }
    }

    fn from_code(c: char) -> Option<Provenance> {
        Some(match c {
            'F' => Provenance::Frequent,
            'R' => Provenance::Rare,
            'N' => Provenance::NoneClass,
            'P' => Provenance::Pair,
            'C' => Provenance::Corpus,
            'G' => Provenance::Generated,
            _ => return None,
        })
    }
}

/// One labeled probing example.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProbingInstance {
    pub kind: InstanceKind,
    pub label: String,
    pub provenance: Provenance,
}

impl ProbingInstance {
    pub fn single(form: impl Into<String>, label: impl Into<String>, provenance: Provenance) -> ProbingInstance {
        ProbingInstance {
            kind: InstanceKind::SingleForm { form: form.into() },
            label: label.into(),
            provenance,
        }
    }

    pub fn pair(first: impl Into<String>, second: impl Into<String>, label: impl Into<String>) -> ProbingInstance {
        ProbingInstance {
            kind: InstanceKind::FormPair {
                first: first.into(),
                second: second.into(),
            },
            label: label.into(),
            provenance: Provenance::Pair,
        }
    }

    pub fn token(sentence: impl Into<String>, index: usize, label: impl Into<String>) -> ProbingInstance {
        ProbingInstance {
            kind: InstanceKind::TokenInContext {
                sentence: sentence.into(),
                index,
            },
            label: label.into(),
            provenance: Provenance::Corpus,
        }
    }
}

/// Everything recorded about how a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub language: String,
    pub task: String,
    pub seed: u64,
    pub splits: SplitSizes,
    /// Snapshot of the generation settings.
    pub config: LanguageConfig,
    /// Instances per label over all splits.
    pub label_counts: BTreeMap<String, usize>,
    /// Forms dropped because their interpretations disagreed on the label.
    pub ambiguity_removed: usize,
    /// Labeled instances drawn from the frequent vocabulary.
    pub frequent: usize,
    /// Labeled instances drawn from outside it.
    pub rare: usize,
    /// None-class instances.
    pub none: usize,
    /// True when the frequent pool was too small and the rare share grew.
    pub frequent_relaxed: bool,
    /// Pairs removed per label by the oversized-label cap.
    pub rebalance_removed: BTreeMap<String, usize>,
    /// Skipped-line histogram carried over from resource loading.
    pub skipped: BTreeMap<String, usize>,
}

impl DatasetMeta {
    pub(crate) fn new(task: &TaskKind, cfg: &LanguageConfig) -> DatasetMeta {
        DatasetMeta {
            language: cfg.language.clone(),
            task: task.id(),
            seed: cfg.seed,
            splits: cfg.splits,
            config: cfg.clone(),
            label_counts: BTreeMap::new(),
            ambiguity_removed: 0,
            frequent: 0,
            rare: 0,
            none: 0,
            frequent_relaxed: false,
            rebalance_removed: BTreeMap::new(),
            skipped: BTreeMap::new(),
        }
    }
}

/// A generated probing dataset with exactly filled splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbingDataset {
    pub language: String,
    pub task: TaskKind,
    /// Sorted set of labels occurring anywhere in the dataset.
    pub label_set: Vec<String>,
    pub train: Vec<ProbingInstance>,
    pub dev: Vec<ProbingInstance>,
    pub test: Vec<ProbingInstance>,
    pub meta: DatasetMeta,
}

/// Names one of the three splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl ProbingDataset {
    pub fn split(&self, which: Split) -> &[ProbingInstance] {
        match which {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn instances(&self) -> impl Iterator<Item = &ProbingInstance> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    /// Checks the structural invariants: split sizes match the metadata,
    /// all labels are in the label set, instance shapes match the task and
    /// None-class provenance only occurs on single forms.
    pub fn validate(&self) -> Result<(), String> {
        let sizes = (self.train.len(), self.dev.len(), self.test.len());
        let expected = (self.meta.splits.train, self.meta.splits.dev, self.meta.splits.test);
        if sizes != expected {
            return Err(format!(
                "split sizes {sizes:?} disagree with metadata {expected:?}"
            ));
        }
        if self.meta.task != self.task.id() {
            return Err(format!(
                "metadata task {:?} disagrees with {:?}",
                self.meta.task,
                self.task.id()
            ));
        }
        let shape = self.task.instance_shape();
        for instance in self.instances() {
            if instance.kind.shape() != shape {
                return Err(format!(
                    "instance {:?} does not match the task shape {shape:?}",
                    instance.kind
                ));
            }
            if !self.label_set.iter().any(|l| l == &instance.label) {
                return Err(format!("label {:?} missing from label_set", instance.label));
            }
            if instance.provenance == Provenance::NoneClass
                && instance.kind.shape() != InstanceShape::SingleForm
            {
                return Err("None-class provenance on a non-single-form instance".to_string());
            }
        }
        Ok(())
    }
}

/// Why a task could not be generated.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskGenError {
    #[error("{task}: {available} eligible samples, need {needed}")]
    InsufficientData {
        task: String,
        available: usize,
        needed: usize,
    },
    #[error("{task}: degenerate feature, every eligible sample is labeled {label:?}")]
    DegenerateFeature { task: String, label: String },
}

/// Derives a child seed from the master seed and a context string, so that
/// independent sampling stages draw from independent streams.
pub(crate) fn derive_seed(base: u64, context: &str) -> u64 {
    // FNV-1a over the base seed bytes and the context string.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in base.to_le_bytes().into_iter().chain(context.bytes()) {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub(crate) fn task_rng(cfg: &LanguageConfig, task: &TaskKind, stage: &str) -> ChaCha20Rng {
    let context = format!("{}/{}/{}", cfg.language, task.id(), stage);
    ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, &context))
}

/// Sorted distinct labels over a set of instances.
pub(crate) fn collect_label_set(instances: &[ProbingInstance]) -> Vec<String> {
    let mut labels: Vec<String> = instances.iter().map(|i| i.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

pub(crate) fn count_labels(instances: &[ProbingInstance]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for instance in instances {
        *counts.entry(instance.label.clone()).or_insert(0) += 1;
    }
    counts
}

/// Splits `instances` (whose length must equal `sizes.total()`) into
/// stratified train/dev/test parts: every label is spread over the splits
/// proportionally, with rounding corrected so the sizes come out exact.
pub(crate) fn stratified_split(
    instances: Vec<ProbingInstance>,
    sizes: SplitSizes,
    rng: &mut ChaCha20Rng,
) -> (Vec<ProbingInstance>, Vec<ProbingInstance>, Vec<ProbingInstance>) {
    let total = sizes.total();
    assert_eq!(instances.len(), total, "stratified_split needs an exact fill");
    let targets = [sizes.train, sizes.dev, sizes.test];

    let mut by_label: BTreeMap<String, Vec<ProbingInstance>> = BTreeMap::new();
    for instance in instances {
        by_label.entry(instance.label.clone()).or_default().push(instance);
    }
    for group in by_label.values_mut() {
        group.shuffle(rng);
    }

    // Floor quotas per (label, split), then hand out the remainders by
    // largest fractional part while respecting both the per-label totals
    // and the exact split sizes.
    let labels: Vec<String> = by_label.keys().cloned().collect();
    let mut quota: Vec<[usize; 3]> = Vec::with_capacity(labels.len());
    let mut row_deficit: Vec<usize> = Vec::with_capacity(labels.len());
    let mut col_given = [0usize; 3];
    let mut remainders: Vec<(usize, usize, usize)> = Vec::new(); // (frac, row, col)
    for (row, label) in labels.iter().enumerate() {
        let n = by_label[label].len();
        let mut cells = [0usize; 3];
        for (col, &target) in targets.iter().enumerate() {
            cells[col] = n * target / total;
            col_given[col] += cells[col];
            remainders.push((n * target % total, row, col));
        }
        row_deficit.push(n - cells.iter().sum::<usize>());
        quota.push(cells);
    }
    let mut col_deficit = [0usize; 3];
    for col in 0..3 {
        col_deficit[col] = targets[col] - col_given[col];
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, row, col) in remainders {
        if row_deficit[row] > 0 && col_deficit[col] > 0 {
            quota[row][col] += 1;
            row_deficit[row] -= 1;
            col_deficit[col] -= 1;
        }
    }
    // Rounding can leave a few unmatched deficits; place them anywhere both
    // a row and a column still have room.
    for row in 0..labels.len() {
        while row_deficit[row] > 0 {
            let col = (0..3).find(|&c| col_deficit[c] > 0).expect("deficits balance");
            quota[row][col] += 1;
            row_deficit[row] -= 1;
            col_deficit[col] -= 1;
        }
    }

    let mut out: [Vec<ProbingInstance>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (row, label) in labels.iter().enumerate() {
        let mut group = by_label.remove(label).expect("known label");
        for col in (0..3).rev() {
            let take = quota[row][col];
            let rest = group.split_off(group.len() - take);
            out[col].extend(rest);
        }
        debug_assert!(group.is_empty());
    }
    for split in &mut out {
        split.shuffle(rng);
    }
    let [train, dev, test] = out;
    (train, dev, test)
}

/// Result of the frequent/rare selection for labeled single-form pools.
pub(crate) struct FrequencyMix {
    pub instances: Vec<ProbingInstance>,
    pub frequent: usize,
    pub rare: usize,
    pub relaxed: bool,
}

/// Selects `n_labeled` forms from the labeled pool, aiming for the
/// configured frequent share. When the frequent pool is too small the rare
/// share grows to compensate and the relaxation is flagged; a too-small
/// rare pool is topped up from the frequent side without a flag.
pub(crate) fn mix_by_frequency(
    mut labeled: Vec<(String, String)>,
    freq: &FrequencyList,
    n_labeled: usize,
    frequent_ratio: f64,
    rng: &mut ChaCha20Rng,
) -> FrequencyMix {
    assert!(labeled.len() >= n_labeled, "caller checks pool size");
    labeled.sort();
    let (mut frequent, mut rare): (Vec<_>, Vec<_>) =
        labeled.into_iter().partition(|(form, _)| freq.contains(form));
    frequent.shuffle(rng);
    rare.shuffle(rng);

    let frequent_target = ((n_labeled as f64) * frequent_ratio).round() as usize;
    let frequent_target = frequent_target.min(n_labeled);
    let rare_target = n_labeled - frequent_target;

    let (take_frequent, take_rare, relaxed) = if frequent.len() < frequent_target {
        (frequent.len(), n_labeled - frequent.len(), true)
    } else if rare.len() < rare_target {
        (n_labeled - rare.len(), rare.len(), false)
    } else {
        (frequent_target, rare_target, false)
    };

    let mut instances = Vec::with_capacity(n_labeled);
    for (form, label) in frequent.into_iter().take(take_frequent) {
        instances.push(ProbingInstance::single(form, label, Provenance::Frequent));
    }
    for (form, label) in rare.into_iter().take(take_rare) {
        instances.push(ProbingInstance::single(form, label, Provenance::Rare));
    }
    FrequencyMix {
        instances,
        frequent: take_frequent,
        rare: take_rare,
        relaxed,
    }
}
