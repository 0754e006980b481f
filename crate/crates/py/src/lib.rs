//! Python bindings over the probing toolkit. The module mirrors the
//! library pipeline: load resources, generate a dataset, train the probe,
//! then inspect accuracies, OOV rates and rank statistics.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use morphoprobe::analysis::{oov_rate, permutation_p_value, spearman_rho, PMethod, ScoreVector};
use morphoprobe::cli::generate_one;
use morphoprobe::ingest::{
    load_annotated_treebank, load_embeddings, load_frequency_list, load_syllabified_lexicon,
    load_unimorph, AnnotatedToken, EmbeddingTable, FrequencyList, ParadigmEntry, SyllabifiedWord,
};
use morphoprobe::probe::{train_probe, ProbeConfig, ProbeReport};
use morphoprobe::schema::{LanguageConfig, TagCatalog};
use morphoprobe::taskgen::{read_dataset, write_dataset, ProbingDataset, TaskKind};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Generation settings for one language.
#[pyclass(name = "Config")]
#[derive(Clone)]
struct PyConfig {
    inner: LanguageConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        language, seed, *, train=None, dev=None, test=None, min_samples=None,
        none_ratio=None, frequent_ratio=None, frequency_cutoff=None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        language: &str,
        seed: u64,
        train: Option<usize>,
        dev: Option<usize>,
        test: Option<usize>,
        min_samples: Option<usize>,
        none_ratio: Option<f64>,
        frequent_ratio: Option<f64>,
        frequency_cutoff: Option<usize>,
    ) -> PyConfig {
        let mut inner = LanguageConfig::new(language, seed);
        if let Some(v) = train {
            inner.splits.train = v;
        }
        if let Some(v) = dev {
            inner.splits.dev = v;
        }
        if let Some(v) = test {
            inner.splits.test = v;
        }
        if let Some(v) = min_samples {
            inner.min_samples = v;
        }
        if let Some(v) = none_ratio {
            inner.none_class_ratio = v;
        }
        if let Some(v) = frequent_ratio {
            inner.frequent_ratio = v;
        }
        if let Some(v) = frequency_cutoff {
            inner.frequency_cutoff = v;
        }
        PyConfig { inner }
    }

    #[getter]
    fn language(&self) -> String {
        self.inner.language.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn splits(&self) -> (usize, usize, usize) {
        let s = self.inner.splits;
        (s.train, s.dev, s.test)
    }

    #[getter]
    fn min_samples(&self) -> usize {
        self.inner.min_samples
    }

    fn __repr__(&self) -> String {
        let s = self.inner.splits;
        format!(
            "Config(language={:?}, seed={}, splits=({}, {}, {}))",
            self.inner.language, self.inner.seed, s.train, s.dev, s.test
        )
    }
}

/// Paradigm entries loaded from a lemma/form/features table.
#[pyclass(name = "Paradigms")]
struct PyParadigms {
    entries: Vec<ParadigmEntry>,
    skipped: BTreeMap<String, usize>,
}

#[pymethods]
impl PyParadigms {
    fn __len__(&self) -> usize {
        self.entries.len()
    }

    /// Skip reason mapped to the number of affected lines.
    #[getter]
    fn skipped(&self) -> BTreeMap<String, usize> {
        self.skipped.clone()
    }

    #[getter]
    fn lemma_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.lemma.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Paradigms({} entries, {} lemmas)",
            self.entries.len(),
            self.lemma_count()
        )
    }
}

/// A frequency-ranked vocabulary split at a cutoff rank.
#[pyclass(name = "Frequencies")]
struct PyFrequencies {
    inner: FrequencyList,
}

#[pymethods]
impl PyFrequencies {
    fn is_frequent(&self, word: &str) -> bool {
        self.inner.contains(word)
    }
}

/// A syllabified lexicon backing pseudoword generation.
#[pyclass(name = "Lexicon")]
struct PyLexicon {
    words: Vec<SyllabifiedWord>,
}

#[pymethods]
impl PyLexicon {
    fn __len__(&self) -> usize {
        self.words.len()
    }

    fn words(&self) -> Vec<String> {
        self.words.iter().map(|w| w.word.clone()).collect()
    }
}

/// Token annotations from a treebank, one entry per annotated token.
#[pyclass(name = "Treebank")]
struct PyTreebank {
    tokens: Vec<AnnotatedToken>,
}

#[pymethods]
impl PyTreebank {
    fn __len__(&self) -> usize {
        self.tokens.len()
    }
}

/// A fixed word-vector table.
#[pyclass(name = "Embeddings")]
struct PyEmbeddings {
    inner: EmbeddingTable,
}

#[pymethods]
impl PyEmbeddings {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    /// The word's vector; unknown words fall back to the unk vector.
    fn lookup(&self, word: &str) -> Vec<f64> {
        self.inner.lookup(word).to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Embeddings({} words, dim {})", self.inner.len(), self.inner.dim())
    }
}

/// A generated probing dataset with its three splits.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: ProbingDataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn language(&self) -> String {
        self.inner.language.clone()
    }

    #[getter]
    fn task(&self) -> String {
        self.inner.task.id()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.label_set.clone()
    }

    #[getter]
    fn sizes(&self) -> (usize, usize, usize) {
        (
            self.inner.train.len(),
            self.inner.dev.len(),
            self.inner.test.len(),
        )
    }

    /// Instances per label over all splits.
    #[getter]
    fn label_counts(&self) -> BTreeMap<String, usize> {
        self.inner.meta.label_counts.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.train.len() + self.inner.dev.len() + self.inner.test.len()
    }

    /// Writes the split files and metadata into the directory.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        write_dataset(&self.inner, &dir).map_err(value_error)
    }

    /// Reads a dataset back from a directory written by `save`.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<PyDataset> {
        let inner = read_dataset(&dir).map_err(value_error)?;
        Ok(PyDataset { inner })
    }

    fn __repr__(&self) -> String {
        let (train, dev, test) = self.sizes();
        format!(
            "Dataset(language={:?}, task={:?}, splits=({train}, {dev}, {test}), labels={})",
            self.inner.language,
            self.inner.task.id(),
            self.inner.label_set.len()
        )
    }
}

/// Hyperparameters of the diagnostic classifier.
#[pyclass(name = "ProbeSettings")]
#[derive(Clone)]
struct PyProbeSettings {
    inner: ProbeConfig,
}

#[pymethods]
impl PyProbeSettings {
    #[new]
    #[pyo3(signature = (
        *, hidden_dim=None, dropout=None, epochs=None, patience=None,
        batch_size=None, learning_rate=None, seed=None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        hidden_dim: Option<usize>,
        dropout: Option<f64>,
        epochs: Option<usize>,
        patience: Option<usize>,
        batch_size: Option<usize>,
        learning_rate: Option<f64>,
        seed: Option<u64>,
    ) -> PyProbeSettings {
        let mut inner = ProbeConfig::default();
        if let Some(v) = hidden_dim {
            inner.hidden_dim = v;
        }
        if let Some(v) = dropout {
            inner.dropout = v;
        }
        if let Some(v) = epochs {
            inner.epochs = v;
        }
        if let Some(v) = patience {
            inner.patience = v;
        }
        if let Some(v) = batch_size {
            inner.batch_size = v;
        }
        if let Some(v) = learning_rate {
            inner.learning_rate = v;
        }
        if let Some(v) = seed {
            inner.seed = v;
        }
        PyProbeSettings { inner }
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "ProbeSettings(hidden_dim={}, dropout={}, epochs={}, seed={})",
            c.hidden_dim, c.dropout, c.epochs, c.seed
        )
    }
}

/// The result of one probing run.
#[pyclass(name = "ProbeOutcome")]
struct PyProbeOutcome {
    inner: ProbeReport,
}

#[pymethods]
impl PyProbeOutcome {
    #[getter]
    fn language(&self) -> String {
        self.inner.language.clone()
    }

    #[getter]
    fn task(&self) -> String {
        self.inner.task.clone()
    }

    #[getter]
    fn dev_accuracy(&self) -> f64 {
        self.inner.dev_accuracy
    }

    #[getter]
    fn test_accuracy(&self) -> f64 {
        self.inner.test_accuracy
    }

    #[getter]
    fn majority_baseline(&self) -> f64 {
        self.inner.majority_baseline
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    #[getter]
    fn oov_rate(&self) -> f64 {
        self.inner.oov_rate
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.label_set.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "ProbeOutcome(task={:?}, test_accuracy={:.1}, majority_baseline={:.1})",
            self.inner.task, self.inner.test_accuracy, self.inner.majority_baseline
        )
    }
}

/// Loads a lemma/form/features paradigm table.
#[pyfunction]
fn load_paradigms(path: PathBuf) -> PyResult<PyParadigms> {
    let (entries, stats) = load_unimorph(&path, TagCatalog::builtin()).map_err(value_error)?;
    Ok(PyParadigms {
        entries,
        skipped: stats.skipped,
    })
}

/// Loads a frequency list, splitting the vocabulary at the cutoff rank.
#[pyfunction]
#[pyo3(signature = (path, cutoff=1_000_000, lowercase=false))]
fn load_frequencies(path: PathBuf, cutoff: usize, lowercase: bool) -> PyResult<PyFrequencies> {
    let inner = load_frequency_list(&path, cutoff, lowercase).map_err(value_error)?;
    Ok(PyFrequencies { inner })
}

/// Loads a syllabified lexicon (`word<TAB>onset:nucleus:coda-...`).
#[pyfunction]
fn load_lexicon(path: PathBuf) -> PyResult<PyLexicon> {
    let words = load_syllabified_lexicon(&path).map_err(value_error)?;
    Ok(PyLexicon { words })
}

/// Loads a token-annotated treebank.
#[pyfunction]
fn load_treebank(path: PathBuf) -> PyResult<PyTreebank> {
    let tokens = load_annotated_treebank(&path, TagCatalog::builtin()).map_err(value_error)?;
    Ok(PyTreebank { tokens })
}

/// Loads a word-vector table in the `word v1 v2 ...` format. The seed
/// draws the unk vector for out-of-vocabulary lookups.
#[pyfunction]
#[pyo3(signature = (path, seed=0, dim=None))]
fn load_vectors(path: PathBuf, seed: u64, dim: Option<usize>) -> PyResult<PyEmbeddings> {
    let inner = load_embeddings(&path, dim, seed).map_err(value_error)?;
    Ok(PyEmbeddings { inner })
}

/// Generates one probing dataset. `task` is a task identifier such as
/// `case`, `tagcount`, `samefeat`, `pseudo` or `token-number`; `pseudo`
/// needs `lexicon`, token tasks need `treebank`.
#[pyfunction]
#[pyo3(signature = (task, paradigms, frequencies, config, *, lexicon=None, treebank=None))]
fn generate(
    task: &str,
    paradigms: &PyParadigms,
    frequencies: &PyFrequencies,
    config: &PyConfig,
    lexicon: Option<&PyLexicon>,
    treebank: Option<&PyTreebank>,
) -> PyResult<PyDataset> {
    let kind = TaskKind::parse(task)
        .ok_or_else(|| value_error(format!("unknown task identifier {task:?}")))?;
    let inner = generate_one(
        &kind,
        &paradigms.entries,
        &frequencies.inner,
        lexicon.map(|l| l.words.as_slice()),
        treebank.map(|t| t.tokens.as_slice()),
        &config.inner,
    )
    .map_err(|reason| value_error(format!("{}: {reason}", kind.id())))?;
    Ok(PyDataset { inner })
}

/// Trains the diagnostic classifier on a dataset over a vector table.
#[pyfunction]
#[pyo3(signature = (dataset, embeddings, settings=None))]
fn probe(
    dataset: &PyDataset,
    embeddings: &PyEmbeddings,
    settings: Option<PyProbeSettings>,
) -> PyResult<PyProbeOutcome> {
    let cfg = settings.map(|s| s.inner).unwrap_or_default();
    let inner = train_probe(&dataset.inner, &embeddings.inner, &cfg).map_err(value_error)?;
    Ok(PyProbeOutcome { inner })
}

/// Percentage of vector lookups missing the vocabulary, per split.
#[pyfunction]
fn oov(dataset: &PyDataset, embeddings: &PyEmbeddings) -> (f64, f64, f64) {
    let rates = oov_rate(&dataset.inner, |form| embeddings.inner.contains(form));
    (rates.train, rates.dev, rates.test)
}

fn score_vector(pairs: Vec<(String, f64)>, side: &str) -> PyResult<ScoreVector> {
    ScoreVector::new(pairs).map_err(|e| value_error(format!("{side} scores: {e}")))
}

/// Spearman rank correlation of two score mappings aligned by id.
#[pyfunction]
fn spearman(a: Vec<(String, f64)>, b: Vec<(String, f64)>) -> PyResult<f64> {
    let left = score_vector(a, "left")?;
    let right = score_vector(b, "right")?;
    spearman_rho(&left, &right).map_err(value_error)
}

/// Permutation p-value of the observed rank correlation. Returns the
/// p-value and the method, `"exact"` up to eight subjects and
/// `"t-approximation"` beyond.
#[pyfunction]
#[pyo3(signature = (a, b, two_sided=true))]
fn permutation_p(
    a: Vec<(String, f64)>,
    b: Vec<(String, f64)>,
    two_sided: bool,
) -> PyResult<(f64, String)> {
    let left = score_vector(a, "left")?;
    let right = score_vector(b, "right")?;
    let value = permutation_p_value(&left, &right, two_sided).map_err(value_error)?;
    let method = match value.method {
        PMethod::ExactPermutation => "exact",
        PMethod::TApproximation => "t-approximation",
    };
    Ok((value.p, method.to_string()))
}

#[pymodule]
fn morphoprobe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyParadigms>()?;
    m.add_class::<PyFrequencies>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyTreebank>()?;
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyProbeSettings>()?;
    m.add_class::<PyProbeOutcome>()?;
    m.add_function(wrap_pyfunction!(load_paradigms, m)?)?;
    m.add_function(wrap_pyfunction!(load_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(load_lexicon, m)?)?;
    m.add_function(wrap_pyfunction!(load_treebank, m)?)?;
    m.add_function(wrap_pyfunction!(load_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    m.add_function(wrap_pyfunction!(oov, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_p, m)?)?;
    Ok(())
}
