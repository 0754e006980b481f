//! Batch entry point wiring ingestion, generation, probing and analysis.
//!
//! Five subcommands cover the pipeline: `generate` regenerates probing
//! datasets from lexical resources, `probe` trains diagnostic classifiers
//! over embeddings, `correlate` relates probing accuracies to downstream
//! scores, `diagnose` probes embedding snapshots across training, and
//! `oov` reports vocabulary coverage. Per-item failures are recorded in
//! the outputs and never abort a batch; only I/O and configuration errors
//! exit nonzero.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    correlation_matrix, diagnose_trajectory, oov_rate, read_downstream_scores, AnalysisError,
    CorrelationReport, OovRates, TaskTrajectory, DEFAULT_THRESHOLDS,
};
use crate::ingest::{
    load_annotated_treebank, load_embeddings, load_frequency_list, load_syllabified_lexicon,
    load_unimorph, AnnotatedToken, EmbeddingTable, FrequencyList, IngestError, ParadigmEntry,
    SyllabifiedWord,
};
use crate::probe::{train_probe, ProbeConfig, ProbeReport};
use crate::pseudogen::{build_grammar, generate_pseudo_task};
use crate::schema::{FeatureDimension, LanguageConfig, TagCatalog};
use crate::taskgen::{
    generate_characterbin_task, generate_oddfeat_task, generate_samefeat_task,
    generate_single_feature_task, generate_tagcount_task, generate_token_level_task, read_dataset,
    write_dataset, DatasetIoError, ProbingDataset, TaskKind,
};

/// Environment variable holding the default resource root directory.
pub const RESOURCE_ROOT_ENV: &str = "MORPHOPROBE_RESOURCE_ROOT";

/// Errors that terminate a command with a nonzero exit code. Per-task and
/// per-cell failures are not among them; those are recorded in the
/// command's outputs and the batch continues.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dataset(#[from] DatasetIoError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "morphoprobe",
    version,
    about = "Generate morphological probing datasets and evaluate word embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Regenerate probing datasets from lexical resources.
    Generate(CommonOpts),
    /// Train diagnostic classifiers on datasets under fixed embeddings.
    Probe(CommonOpts),
    /// Correlate probing accuracies with downstream task scores.
    Correlate(CommonOpts),
    /// Probe a sequence of embedding snapshots from one training run.
    Diagnose(CommonOpts),
    /// Report per-split out-of-vocabulary rates of datasets.
    Oov(CommonOpts),
}

impl CliCommand {
    fn opts(&self) -> &CommonOpts {
        match self {
            CliCommand::Generate(o)
            | CliCommand::Probe(o)
            | CliCommand::Correlate(o)
            | CliCommand::Diagnose(o)
            | CliCommand::Oov(o) => o,
        }
    }
}

/// Flags shared by every subcommand. All of them are optional here;
/// each command checks for what it actually needs after the config file
/// and the environment have been folded in.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonOpts {
    /// TOML config file; command line flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Language code to process; repeat for several languages.
    #[arg(long = "lang", value_name = "CODE")]
    pub languages: Vec<String>,
    /// Comma-separated task ids (default: every eligible task).
    #[arg(long, value_delimiter = ',', value_name = "IDS")]
    pub tasks: Option<Vec<String>>,
    /// Resource root directory; defaults to $MORPHOPROBE_RESOURCE_ROOT.
    #[arg(long, value_name = "DIR")]
    pub resources: Option<PathBuf>,
    /// Embedding vector file; repeat for several embeddings.
    #[arg(long = "embeddings", value_name = "FILE")]
    pub embeddings: Vec<PathBuf>,
    /// Ordered embedding snapshot files for diagnose.
    #[arg(long = "snapshots", value_name = "FILE")]
    pub snapshots: Vec<PathBuf>,
    /// Dataset tree produced by an earlier generate run.
    #[arg(long, value_name = "DIR")]
    pub datasets: Option<PathBuf>,
    /// Probing score file for correlate (embedding, task, score).
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
    /// Downstream score file (embedding, task, score).
    #[arg(long, value_name = "FILE")]
    pub downstream: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; required by generate, probe and diagnose.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training split size.
    #[arg(long)]
    pub train: Option<usize>,
    /// Development split size.
    #[arg(long)]
    pub dev: Option<usize>,
    /// Test split size.
    #[arg(long)]
    pub test: Option<usize>,
    /// Minimum eligible sample count below which a task is skipped.
    #[arg(long)]
    pub min_samples: Option<usize>,
    /// Worker threads for batch items (default: logical CPU count).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Probe hyperparameter overrides, usually set in the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeOverrides {
    pub hidden_dim: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

/// The resolved configuration of one run: config file values overlaid
/// with command line flags and the environment. Serialized into every
/// output document as the provenance snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub languages: Vec<String>,
    pub resources: Option<PathBuf>,
    pub tasks: Option<Vec<String>>,
    pub embeddings: Vec<PathBuf>,
    pub snapshots: Vec<PathBuf>,
    pub datasets: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub downstream: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub train: Option<usize>,
    pub dev: Option<usize>,
    pub test: Option<usize>,
    pub min_samples: Option<usize>,
    pub none_ratio: Option<f64>,
    pub frequent_ratio: Option<f64>,
    pub frequency_cutoff: Option<usize>,
    pub lowercase_frequencies: bool,
    pub threads: Option<usize>,
    pub probe: ProbeOverrides,
}

impl RunConfig {
    /// Loads the config file (when given), overlays the flags, then fills
    /// the resource root from the environment if still unset.
    pub fn resolve(opts: &CommonOpts) -> Result<RunConfig, CliError> {
        let mut cfg = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_error(path))?;
                toml::from_str(&text)
                    .map_err(|e| config_error(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if !opts.languages.is_empty() {
            cfg.languages = opts.languages.clone();
        }
        if let Some(tasks) = &opts.tasks {
            cfg.tasks = Some(tasks.clone());
        }
        if let Some(resources) = &opts.resources {
            cfg.resources = Some(resources.clone());
        }
        if !opts.embeddings.is_empty() {
            cfg.embeddings = opts.embeddings.clone();
        }
        if !opts.snapshots.is_empty() {
            cfg.snapshots = opts.snapshots.clone();
        }
        let direct = [
            (&opts.datasets, &mut cfg.datasets),
            (&opts.scores, &mut cfg.scores),
            (&opts.downstream, &mut cfg.downstream),
            (&opts.out, &mut cfg.out),
        ];
        for (flag, slot) in direct {
            if let Some(path) = flag {
                *slot = Some(path.clone());
            }
        }
        cfg.seed = opts.seed.or(cfg.seed);
        cfg.train = opts.train.or(cfg.train);
        cfg.dev = opts.dev.or(cfg.dev);
        cfg.test = opts.test.or(cfg.test);
        cfg.min_samples = opts.min_samples.or(cfg.min_samples);
        cfg.threads = opts.threads.or(cfg.threads);
        if cfg.resources.is_none() {
            cfg.resources = std::env::var_os(RESOURCE_ROOT_ENV).map(PathBuf::from);
        }
        Ok(cfg)
    }

    fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| config_error("a seed is required; pass --seed"))
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| config_error("an output directory is required; pass --out"))
    }

    fn datasets_dir(&self) -> Result<&Path, CliError> {
        let dir = self
            .datasets
            .as_deref()
            .ok_or_else(|| config_error("a dataset directory is required; pass --datasets"))?;
        if !dir.is_dir() {
            return Err(config_error(format!(
                "dataset directory {} does not exist",
                dir.display()
            )));
        }
        Ok(dir)
    }

    /// The generation settings for one language, with overrides applied.
    pub fn language_config(&self, language: &str) -> Result<LanguageConfig, CliError> {
        let mut cfg = LanguageConfig::new(language, self.require_seed()?);
        if let Some(train) = self.train {
            cfg.splits.train = train;
        }
        if let Some(dev) = self.dev {
            cfg.splits.dev = dev;
        }
        if let Some(test) = self.test {
            cfg.splits.test = test;
        }
        if let Some(min_samples) = self.min_samples {
            cfg.min_samples = min_samples;
        }
        if let Some(ratio) = self.none_ratio {
            cfg.none_class_ratio = ratio;
        }
        if let Some(ratio) = self.frequent_ratio {
            cfg.frequent_ratio = ratio;
        }
        if let Some(cutoff) = self.frequency_cutoff {
            cfg.frequency_cutoff = cutoff;
        }
        cfg.validate()
            .map_err(|e| config_error(format!("invalid generation settings: {e}")))?;
        Ok(cfg)
    }

    /// The probe settings with overrides and the run seed applied.
    pub fn probe_config(&self) -> Result<ProbeConfig, CliError> {
        let mut cfg = ProbeConfig {
            seed: self.require_seed()?,
            ..ProbeConfig::default()
        };
        if let Some(hidden_dim) = self.probe.hidden_dim {
            cfg.hidden_dim = hidden_dim;
        }
        if let Some(dropout) = self.probe.dropout {
            cfg.dropout = dropout;
        }
        if let Some(epochs) = self.probe.epochs {
            cfg.epochs = epochs;
        }
        if let Some(patience) = self.probe.patience {
            cfg.patience = patience;
        }
        if let Some(batch_size) = self.probe.batch_size {
            cfg.batch_size = batch_size;
        }
        if let Some(learning_rate) = self.probe.learning_rate {
            cfg.learning_rate = learning_rate;
        }
        cfg.validate()
            .map_err(|e| config_error(format!("invalid probe settings: {e}")))?;
        Ok(cfg)
    }

    /// Normalized task filter; `None` means every eligible task.
    fn requested_tasks(&self) -> Result<Option<BTreeSet<String>>, CliError> {
        let Some(tasks) = &self.tasks else {
            return Ok(None);
        };
        let mut ids = BTreeSet::new();
        for raw in tasks {
            let kind = TaskKind::parse(raw)
                .ok_or_else(|| config_error(format!("unknown task id {raw:?}")))?;
            ids.insert(kind.id());
        }
        Ok(Some(ids))
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(threads) = self.threads {
            if threads == 0 {
                return Err(config_error("--threads must be at least 1"));
            }
            builder = builder.num_threads(threads);
        }
        builder
            .build()
            .map_err(|e| config_error(format!("cannot build thread pool: {e}")))
    }
}

/// The per-language resource files found under the resource root.
struct ResourceSet {
    unimorph: PathBuf,
    frequencies: PathBuf,
    lexicon: Option<PathBuf>,
    treebank: Option<PathBuf>,
}

/// Locates `<root>/<lang>/unimorph.tsv` etc. The paradigm and frequency
/// files are required; the syllabified lexicon and the treebank are
/// optional and merely widen the set of eligible tasks.
fn resource_set(cfg: &RunConfig, language: &str) -> Result<ResourceSet, CliError> {
    let root = cfg.resources.as_deref().ok_or_else(|| {
        config_error(format!(
            "a resource root is required; pass --resources or set {RESOURCE_ROOT_ENV}"
        ))
    })?;
    let dir = root.join(language);
    let require = |name: &str| -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(config_error(format!(
                "missing resource {} for language {language:?}",
                path.display()
            )));
        }
        Ok(path)
    };
    let optional = |name: &str| -> Option<PathBuf> {
        let path = dir.join(name);
        path.is_file().then_some(path)
    };
    Ok(ResourceSet {
        unimorph: require("unimorph.tsv")?,
        frequencies: require("frequencies.tsv")?,
        lexicon: optional("lexicon.tsv"),
        treebank: optional("treebank.conllu"),
    })
}

/// Summary of one generate run, also written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seed: u64,
    pub languages: BTreeMap<String, LanguageManifest>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageManifest {
    /// task id -> where and what was written.
    pub generated: BTreeMap<String, GeneratedDataset>,
    /// task id -> why it was skipped.
    pub skipped: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDataset {
    /// Dataset directory relative to the output root.
    pub path: String,
    pub labels: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Manifest {
    pub fn generated_total(&self) -> usize {
        self.languages.values().map(|l| l.generated.len()).sum()
    }

    pub fn skipped_total(&self) -> usize {
        self.languages.values().map(|l| l.skipped.len()).sum()
    }
}

/// Every task the loaded resources can support, in stable order.
fn plan_tasks(
    entries: &[ParadigmEntry],
    has_lexicon: bool,
    tokens: Option<&[AnnotatedToken]>,
) -> Vec<TaskKind> {
    let mut plan = Vec::new();
    let dimensions: BTreeSet<FeatureDimension> = entries
        .iter()
        .flat_map(|e| e.bundle.dimensions().cloned())
        .collect();
    for dimension in &dimensions {
        plan.push(TaskKind::SingleFeature(dimension.clone()));
    }
    plan.push(TaskKind::TagCount);
    plan.push(TaskKind::CharacterBin);
    plan.push(TaskKind::SameFeat);
    plan.push(TaskKind::OddFeat);
    if has_lexicon {
        plan.push(TaskKind::Pseudo);
    }
    if let Some(tokens) = tokens {
        let token_dims: BTreeSet<FeatureDimension> = tokens
            .iter()
            .flat_map(|t| t.bundle.dimensions().cloned())
            .collect();
        for dimension in token_dims {
            plan.push(TaskKind::TokenFeature(dimension));
        }
    }
    plan
}

/// Generates one dataset, or explains why it cannot be.
pub fn generate_one(
    task: &TaskKind,
    entries: &[ParadigmEntry],
    freq: &FrequencyList,
    lexicon: Option<&[SyllabifiedWord]>,
    tokens: Option<&[AnnotatedToken]>,
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, String> {
    match task {
        TaskKind::SingleFeature(dimension) => {
            generate_single_feature_task(entries, dimension, freq, cfg).map_err(|e| e.to_string())
        }
        TaskKind::TagCount => generate_tagcount_task(entries, freq, cfg).map_err(|e| e.to_string()),
        TaskKind::CharacterBin => {
            generate_characterbin_task(entries, freq, cfg).map_err(|e| e.to_string())
        }
        TaskKind::SameFeat => generate_samefeat_task(entries, cfg).map_err(|e| e.to_string()),
        TaskKind::OddFeat => generate_oddfeat_task(entries, cfg).map_err(|e| e.to_string()),
        TaskKind::Pseudo => {
            let Some(lexicon) = lexicon else {
                return Err("needs a syllabified lexicon (lexicon.tsv)".to_string());
            };
            let grammar = build_grammar(lexicon).map_err(|e| e.to_string())?;
            generate_pseudo_task(lexicon, &grammar, cfg, lexicon.len()).map_err(|e| e.to_string())
        }
        TaskKind::TokenFeature(dimension) => {
            let Some(tokens) = tokens else {
                return Err("needs an annotated treebank (treebank.conllu)".to_string());
            };
            generate_token_level_task(tokens, dimension, cfg).map_err(|e| e.to_string())
        }
    }
}

/// Regenerates every eligible dataset for the configured languages and
/// writes the tree plus `manifest.json` under the output directory.
/// Ineligible tasks are recorded in the manifest with their reason.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = cfg.require_seed()?;
    let out = cfg.out_dir()?.to_path_buf();
    if cfg.languages.is_empty() {
        return Err(config_error("at least one language is required; pass --lang"));
    }
    let requested = cfg.requested_tasks()?;
    let pool = cfg.thread_pool()?;
    std::fs::create_dir_all(&out).map_err(io_error(&out))?;

    let mut manifest = Manifest {
        config: cfg.clone(),
        seed,
        languages: BTreeMap::new(),
    };
    for language in &cfg.languages {
        let lcfg = cfg.language_config(language)?;
        let resources = resource_set(cfg, language)?;
        let catalog = TagCatalog::builtin();
        let (entries, stats) = load_unimorph(&resources.unimorph, catalog)?;
        if stats.skipped_total() > 0 {
            log::warn!(
                "{}: skipped {} of {} lines",
                resources.unimorph.display(),
                stats.skipped_total(),
                stats.total()
            );
        }
        let freq = load_frequency_list(
            &resources.frequencies,
            lcfg.frequency_cutoff,
            cfg.lowercase_frequencies,
        )?;
        let lexicon = resources
            .lexicon
            .as_deref()
            .map(load_syllabified_lexicon)
            .transpose()?;
        let tokens = resources
            .treebank
            .as_deref()
            .map(|path| load_annotated_treebank(path, catalog))
            .transpose()?;

        let mut plan = plan_tasks(&entries, lexicon.is_some(), tokens.as_deref());
        if let Some(requested) = &requested {
            plan.retain(|task| requested.contains(&task.id()));
        }

        let results: Vec<(TaskKind, Result<ProbingDataset, String>)> = pool.install(|| {
            plan.into_par_iter()
                .map(|task| {
                    let result = generate_one(
                        &task,
                        &entries,
                        &freq,
                        lexicon.as_deref(),
                        tokens.as_deref(),
                        &lcfg,
                    );
                    (task, result)
                })
                .collect()
        });

        let record = manifest.languages.entry(language.clone()).or_default();
        for (task, result) in results {
            let id = task.id();
            match result {
                Ok(dataset) => {
                    let relative = format!("{language}/{id}");
                    let dir = out.join(&relative);
                    write_dataset(&dataset, &dir)?;
                    record.generated.insert(
                        id,
                        GeneratedDataset {
                            path: relative,
                            labels: dataset.label_set.len(),
                            train: dataset.train.len(),
                            dev: dataset.dev.len(),
                            test: dataset.test.len(),
                        },
                    );
                }
                Err(reason) => {
                    record.skipped.insert(id, reason);
                }
            }
        }
        if let Some(requested) = &requested {
            for id in requested {
                if !record.generated.contains_key(id) && !record.skipped.contains_key(id) {
                    record.skipped.insert(
                        id.clone(),
                        "not available: the feature is absent from the resources or a \
                         needed resource file is missing"
                            .to_string(),
                    );
                }
            }
        }
    }

    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reads every generated dataset under the root, filtered to the
/// configured languages and tasks, sorted by (language, task).
fn discover_datasets(
    root: &Path,
    languages: &[String],
    tasks: Option<&BTreeSet<String>>,
) -> Result<Vec<ProbingDataset>, CliError> {
    let mut dirs: Vec<PathBuf> = Vec::new();
    let mut language_dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io_error(root))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    language_dirs.sort();
    for language_dir in language_dirs {
        let language = language_dir
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        if !languages.is_empty() && !languages.contains(&language) {
            continue;
        }
        let mut task_dirs: Vec<PathBuf> = std::fs::read_dir(&language_dir)
            .map_err(io_error(&language_dir))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.join("metadata.json").is_file())
            .collect();
        task_dirs.sort();
        for task_dir in task_dirs {
            let id = task_dir
                .file_name()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_default();
            if let Some(tasks) = tasks {
                if !tasks.contains(&id) {
                    continue;
                }
            }
            dirs.push(task_dir);
        }
    }
    if dirs.is_empty() {
        return Err(config_error(format!(
            "no datasets found under {}",
            root.display()
        )));
    }
    dirs.iter().map(|dir| Ok(read_dataset(dir)?)).collect()
}

/// The file stem naming an embedding in reports.
fn embedding_name(path: &Path) -> String {
    path.file_stem()
        .map(|stem| stem.to_string_lossy().to_string())
        .unwrap_or_else(|| path.display().to_string())
}

fn dataset_key(ds: &ProbingDataset) -> String {
    format!("{}/{}", ds.language, ds.task.id())
}

/// Probe results over every (embedding, dataset) cell, also written as
/// `report.json`, `report.tsv` and `scores.tsv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub reports: Vec<ProbeReport>,
    /// embedding name -> language/task -> failure message.
    pub failures: BTreeMap<String, BTreeMap<String, String>>,
}

/// Trains the diagnostic classifier on every dataset under every
/// embedding. A failed cell is recorded and the batch continues; an
/// unreadable embedding file fails all of its cells.
pub fn cmd_probe(cfg: &RunConfig) -> Result<ProbeRunReport, CliError> {
    let seed = cfg.require_seed()?;
    let out = cfg.out_dir()?.to_path_buf();
    let datasets_root = cfg.datasets_dir()?;
    if cfg.embeddings.is_empty() {
        return Err(config_error(
            "at least one embedding file is required; pass --embeddings",
        ));
    }
    let mut names = BTreeSet::new();
    for path in &cfg.embeddings {
        if !names.insert(embedding_name(path)) {
            return Err(config_error(format!(
                "duplicate embedding name {:?}; files must have distinct stems",
                embedding_name(path)
            )));
        }
    }
    let probe_cfg = cfg.probe_config()?;
    let requested = cfg.requested_tasks()?;
    let pool = cfg.thread_pool()?;
    let datasets = discover_datasets(datasets_root, &cfg.languages, requested.as_ref())?;
    std::fs::create_dir_all(&out).map_err(io_error(&out))?;

    let mut run = ProbeRunReport {
        config: cfg.clone(),
        seed,
        reports: Vec::new(),
        failures: BTreeMap::new(),
    };
    for path in &cfg.embeddings {
        let name = embedding_name(path);
        let table = match load_embeddings(path, None, seed) {
            Ok(table) => table,
            Err(error) => {
                let row = run.failures.entry(name.clone()).or_default();
                for ds in &datasets {
                    row.insert(dataset_key(ds), error.to_string());
                }
                continue;
            }
        };
        let cells: Vec<(String, Result<ProbeReport, String>)> = pool.install(|| {
            datasets
                .par_iter()
                .map(|ds| {
                    let result = train_probe(ds, &table, &probe_cfg)
                        .map(|mut report| {
                            report.embedding = name.clone();
                            report
                        })
                        .map_err(|e| e.to_string());
                    (dataset_key(ds), result)
                })
                .collect()
        });
        for (key, cell) in cells {
            match cell {
                Ok(report) => run.reports.push(report),
                Err(message) => {
                    run.failures
                        .entry(name.clone())
                        .or_default()
                        .insert(key, message);
                }
            }
        }
    }
    run.reports.sort_by(|a, b| {
        (&a.embedding, &a.language, &a.task).cmp(&(&b.embedding, &b.language, &b.task))
    });

    let mut table = format!("# seed={seed}\n{}\n", ProbeReport::TABLE_HEADER);
    for report in &run.reports {
        table.push_str(&report.table_row());
        table.push('\n');
    }
    write_text(&out.join("report.tsv"), &table)?;

    let mut scores = String::from("# embedding\ttask\tscore\n");
    for report in &run.reports {
        scores.push_str(&format!(
            "{}\t{}/{}\t{:.1}\n",
            report.embedding, report.language, report.task, report.test_accuracy
        ));
    }
    write_text(&out.join("scores.tsv"), &scores)?;
    write_json(&out.join("report.json"), &run)?;
    Ok(run)
}

/// Correlation study output, also written as `correlations.json` and a
/// plain-text matrix with filtered views per threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelateDocument {
    pub config: RunConfig,
    pub report: CorrelationReport,
}

/// Correlates a probing score table (as written by `probe`) with a
/// downstream score table over their shared embeddings.
pub fn cmd_correlate(cfg: &RunConfig) -> Result<CorrelateDocument, CliError> {
    let out = cfg.out_dir()?.to_path_buf();
    let scores_path = cfg
        .scores
        .as_deref()
        .ok_or_else(|| config_error("a probing score file is required; pass --scores"))?;
    let downstream_path = cfg
        .downstream
        .as_deref()
        .ok_or_else(|| config_error("a downstream score file is required; pass --downstream"))?;
    let probing = read_downstream_scores(scores_path)?;
    let downstream = read_downstream_scores(downstream_path)?;
    let report = correlation_matrix(&probing, &downstream, &DEFAULT_THRESHOLDS)?;
    std::fs::create_dir_all(&out).map_err(io_error(&out))?;

    let mut text = report.to_text();
    for &threshold in &report.thresholds {
        text.push_str(&format!("\nsignificant at p <= {threshold}:\n"));
        let kept = report.filtered(threshold);
        if kept.is_empty() {
            text.push_str("(none)\n");
        }
        for (probing_task, downstream_task, cell) in kept {
            text.push_str(&format!(
                "{probing_task} ~ {downstream_task}: rho={:+.3} p={:.4} n={}\n",
                cell.rho, cell.p, cell.n
            ));
        }
    }
    write_text(&out.join("correlations.txt"), &text)?;

    let document = CorrelateDocument {
        config: cfg.clone(),
        report,
    };
    write_json(&out.join("correlations.json"), &document)?;
    Ok(document)
}

/// Layer diagnostic output, also written as `trajectory.json` and a
/// flat `trajectory.tsv` series table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseDocument {
    pub config: RunConfig,
    pub seed: u64,
    pub snapshots: Vec<String>,
    pub tasks: Vec<DiagnosedTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosedTask {
    pub language: String,
    pub trajectory: TaskTrajectory,
}

/// Probes every dataset against an ordered sequence of embedding
/// snapshots, tracking how probing accuracy develops over training.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<DiagnoseDocument, CliError> {
    let seed = cfg.require_seed()?;
    let out = cfg.out_dir()?.to_path_buf();
    let datasets_root = cfg.datasets_dir()?;
    if cfg.snapshots.len() < 2 {
        return Err(config_error(
            "diagnose needs at least two ordered --snapshots files",
        ));
    }
    let probe_cfg = cfg.probe_config()?;
    let requested = cfg.requested_tasks()?;
    let pool = cfg.thread_pool()?;
    let datasets = discover_datasets(datasets_root, &cfg.languages, requested.as_ref())?;

    let mut snapshots: Vec<(String, EmbeddingTable)> = Vec::new();
    for path in &cfg.snapshots {
        let name = embedding_name(path);
        if snapshots.iter().any(|(existing, _)| *existing == name) {
            return Err(config_error(format!(
                "duplicate snapshot name {name:?}; files must have distinct stems"
            )));
        }
        snapshots.push((name, load_embeddings(path, None, seed)?));
    }

    let report = pool.install(|| diagnose_trajectory(&snapshots, &datasets, &probe_cfg))?;
    std::fs::create_dir_all(&out).map_err(io_error(&out))?;

    let document = DiagnoseDocument {
        config: cfg.clone(),
        seed,
        snapshots: report.snapshots.clone(),
        tasks: datasets
            .iter()
            .zip(report.tasks)
            .map(|(ds, trajectory)| DiagnosedTask {
                language: ds.language.clone(),
                trajectory,
            })
            .collect(),
    };

    let mut table = format!("# seed={seed}\nlanguage\ttask\tsnapshot\tdev\ttest\n");
    for task in &document.tasks {
        for point in &task.trajectory.points {
            table.push_str(&format!(
                "{}\t{}\t{}\t{:.2}\t{:.2}\n",
                task.language,
                task.trajectory.task,
                point.snapshot,
                point.dev_accuracy,
                point.test_accuracy
            ));
        }
    }
    write_text(&out.join("trajectory.tsv"), &table)?;
    write_json(&out.join("trajectory.json"), &document)?;
    Ok(document)
}

/// OOV study output, also written as `oov.json` and `oov.tsv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OovDocument {
    pub config: RunConfig,
    pub rows: Vec<OovRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OovRow {
    pub language: String,
    pub task: String,
    pub embedding: String,
    pub rates: OovRates,
}

/// Reports the per-split OOV rate of every dataset under every
/// embedding vocabulary.
pub fn cmd_oov(cfg: &RunConfig) -> Result<OovDocument, CliError> {
    let out = cfg.out_dir()?.to_path_buf();
    let datasets_root = cfg.datasets_dir()?;
    if cfg.embeddings.is_empty() {
        return Err(config_error(
            "at least one embedding file is required; pass --embeddings",
        ));
    }
    let requested = cfg.requested_tasks()?;
    let datasets = discover_datasets(datasets_root, &cfg.languages, requested.as_ref())?;
    std::fs::create_dir_all(&out).map_err(io_error(&out))?;

    let mut rows = Vec::new();
    for path in &cfg.embeddings {
        let name = embedding_name(path);
        let table = load_embeddings(path, None, cfg.seed.unwrap_or(0))?;
        for ds in &datasets {
            rows.push(OovRow {
                language: ds.language.clone(),
                task: ds.task.id(),
                embedding: name.clone(),
                rates: oov_rate(ds, |w| table.contains(w)),
            });
        }
    }
    rows.sort_by(|a, b| {
        (&a.embedding, &a.language, &a.task).cmp(&(&b.embedding, &b.language, &b.task))
    });

    let mut table = String::from("language\ttask\tembedding\ttrain\tdev\ttest\n");
    for row in &rows {
        table.push_str(&format!(
            "{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}\n",
            row.language, row.task, row.embedding, row.rates.train, row.rates.dev, row.rates.test
        ));
    }
    write_text(&out.join("oov.tsv"), &table)?;

    let document = OovDocument {
        config: cfg.clone(),
        rows,
    };
    write_json(&out.join("oov.json"), &document)?;
    Ok(document)
}

/// Parses flags, resolves the config and dispatches the subcommand,
/// printing a one-line summary per command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.command.opts())?;
    match &cli.command {
        CliCommand::Generate(_) => {
            let manifest = cmd_generate(&cfg)?;
            println!(
                "generated {} dataset(s), skipped {} task(s); manifest at {}",
                manifest.generated_total(),
                manifest.skipped_total(),
                cfg.out_dir()?.join("manifest.json").display()
            );
        }
        CliCommand::Probe(_) => {
            let run = cmd_probe(&cfg)?;
            let failed: usize = run.failures.values().map(|f| f.len()).sum();
            println!(
                "probed {} cell(s), {} failed; report at {}",
                run.reports.len() + failed,
                failed,
                cfg.out_dir()?.join("report.tsv").display()
            );
        }
        CliCommand::Correlate(_) => {
            let document = cmd_correlate(&cfg)?;
            let cells: usize = document.report.cells.values().map(|r| r.len()).sum();
            let missing: usize = document.report.missing.values().map(|r| r.len()).sum();
            println!(
                "correlated {} cell(s), {} missing; matrix at {}",
                cells,
                missing,
                cfg.out_dir()?.join("correlations.txt").display()
            );
        }
        CliCommand::Diagnose(_) => {
            let document = cmd_diagnose(&cfg)?;
            println!(
                "diagnosed {} task(s) over {} snapshot(s); trajectory at {}",
                document.tasks.len(),
                document.snapshots.len(),
                cfg.out_dir()?.join("trajectory.tsv").display()
            );
        }
        CliCommand::Oov(_) => {
            let document = cmd_oov(&cfg)?;
            println!(
                "computed {} OOV row(s); table at {}",
                document.rows.len(),
                cfg.out_dir()?.join("oov.tsv").display()
            );
        }
    }
    Ok(())
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_error(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| config_error(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}
