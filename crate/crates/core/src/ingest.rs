//! Loaders for the lexical resources the generators and the probe consume.
//!
//! All loaders NFC-normalize text, report failures with file and line
//! position, and never guess: a malformed inflection line is skipped and
//! counted, a malformed frequency count or embedding row is an error.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::schema::{nfc, parse_bundle, FeatureBundle, TagCatalog};

/// Failures while reading a resource file.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: vector has {found} components, expected {expected}")]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
}

impl IngestError {
    fn format(path: &Path, line: usize, message: impl Into<String>) -> IngestError {
        IngestError::Format {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One inflected form of a lemma together with its feature bundle.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParadigmEntry {
    pub lemma: String,
    pub form: String,
    pub bundle: FeatureBundle,
}

impl ParadigmEntry {
    /// Serializes back to the three-column lexicon line. Parsing the result
    /// yields an equal entry.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.lemma,
            self.form,
            self.bundle.canonical_string()
        )
    }
}

/// Counts of parsed and skipped lines for a lexicon load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub parsed: usize,
    /// Skip reason mapped to the number of lines it affected.
    pub skipped: BTreeMap<String, usize>,
}

impl IngestStats {
    fn skip(&mut self, reason: &str) {
        *self.skipped.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }

    /// Parsed plus skipped, i.e. every non-empty line seen.
    pub fn total(&self) -> usize {
        self.parsed + self.skipped_total()
    }
}

/// Reads a three-column inflection lexicon: `lemma<TAB>form<TAB>features`.
///
/// Lines whose bundle does not parse, whose form spans several words or
/// whose lemma or form is empty are skipped and tallied in the stats; a
/// wrong column count is an error. Forms keep their case.
pub fn load_unimorph(
    path: &Path,
    catalog: &TagCatalog,
) -> Result<(Vec<ParadigmEntry>, IngestStats), IngestError> {
    let text = read_file(path)?;
    let mut entries = Vec::new();
    let mut stats = IngestStats::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(IngestError::format(
                path,
                i + 1,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let lemma = nfc(cols[0].trim());
        let form = nfc(cols[1].trim());
        if lemma.is_empty() || form.is_empty() {
            stats.skip("empty field");
            continue;
        }
        if form.chars().any(char::is_whitespace) {
            stats.skip("multi-word form");
            continue;
        }
        match parse_bundle(cols[2], catalog) {
            Ok(bundle) => {
                entries.push(ParadigmEntry { lemma, form, bundle });
                stats.parsed += 1;
            }
            Err(_) => stats.skip("malformed bundle"),
        }
    }
    Ok((entries, stats))
}

/// The frequent part of a ranked word list.
///
/// Only the first `cutoff_rank` distinct words are retained; membership is
/// what separates frequent from rare forms during dataset generation.
#[derive(Debug, Clone)]
pub struct FrequencyList {
    entries: Vec<(String, Option<u64>)>,
    index: HashMap<String, usize>,
    lowercase: bool,
    non_monotone: bool,
}

impl FrequencyList {
    /// An empty list: every word counts as rare.
    pub fn empty() -> FrequencyList {
        FrequencyList {
            entries: Vec::new(),
            index: HashMap::new(),
            lowercase: false,
            non_monotone: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(&self, word: &str) -> String {
        let word = nfc(word);
        if self.lowercase {
            word.to_lowercase()
        } else {
            word
        }
    }

    /// Whether the word sits inside the frequent cutoff.
    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&self.key(word))
    }

    /// Zero-based rank of a retained word.
    pub fn rank(&self, word: &str) -> Option<usize> {
        self.index.get(&self.key(word)).copied()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(w, _)| w.as_str())
    }

    /// True when some count exceeded the one before it in file order.
    pub fn non_monotone(&self) -> bool {
        self.non_monotone
    }
}

/// Reads a ranked frequency list and keeps the first `cutoff_rank` words.
///
/// Lines are `word<TAB>count`, `word count` or bare `word`. File order
/// defines the ranking; counts that rise again are accepted with a warning.
/// Duplicate words keep their first occurrence.
pub fn load_frequency_list(
    path: &Path,
    cutoff_rank: usize,
    lowercase: bool,
) -> Result<FrequencyList, IngestError> {
    let text = read_file(path)?;
    let mut list = FrequencyList {
        entries: Vec::new(),
        index: HashMap::new(),
        lowercase,
        non_monotone: false,
    };
    let mut last_count: Option<u64> = None;
    for (i, line) in text.lines().enumerate() {
        if list.entries.len() >= cutoff_rank {
            break;
        }
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else {
            continue;
        };
        let count = match parts.next() {
            Some(raw) => Some(raw.parse::<u64>().map_err(|_| {
                IngestError::format(path, i + 1, format!("non-numeric count {raw:?}"))
            })?),
            None => None,
        };
        if parts.next().is_some() {
            return Err(IngestError::format(
                path,
                i + 1,
                "expected at most two whitespace-separated fields",
            ));
        }
        if let (Some(prev), Some(cur)) = (last_count, count) {
            if cur > prev && !list.non_monotone {
                log::warn!(
                    "{}:{}: counts are non-monotone ({cur} after {prev}); keeping file order",
                    path.display(),
                    i + 1
                );
                list.non_monotone = true;
            }
        }
        if count.is_some() {
            last_count = count;
        }
        let word = {
            let w = nfc(word);
            if lowercase {
                w.to_lowercase()
            } else {
                w
            }
        };
        if list.index.contains_key(&word) {
            continue;
        }
        list.index.insert(word.clone(), list.entries.len());
        list.entries.push((word, count));
    }
    Ok(list)
}

/// A fixed word-vector table with a deterministic unknown-word fallback.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
    lowercase_lookup: bool,
}

impl EmbeddingTable {
    /// Builds a table from rows, keeping the first vector per word. The
    /// unknown-word vector is drawn uniformly from [-0.5/dim, 0.5/dim]
    /// using the seed, so equal seeds give equal fallbacks.
    pub fn from_rows(
        rows: impl IntoIterator<Item = (String, Vec<f64>)>,
        seed: u64,
    ) -> Result<EmbeddingTable, String> {
        let mut dim = 0;
        let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
        for (word, vector) in rows {
            if dim == 0 {
                dim = vector.len();
            }
            if vector.len() != dim {
                return Err(format!(
                    "vector for {word:?} has {} components, expected {dim}",
                    vector.len()
                ));
            }
            vectors.entry(nfc(&word)).or_insert(vector);
        }
        if dim == 0 {
            return Err("no vectors given".to_string());
        }
        Ok(EmbeddingTable {
            dim,
            unk: unk_vector(dim, seed),
            vectors,
            lowercase_lookup: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Enables or disables lowercased lookup. Off by default; the layer
    /// diagnostic workflow turns it on because its vocabularies are
    /// lowercased.
    pub fn set_lowercase_lookup(&mut self, on: bool) {
        self.lowercase_lookup = on;
    }

    pub fn lowercase_lookup(&self) -> bool {
        self.lowercase_lookup
    }

    fn key(&self, word: &str) -> String {
        let word = nfc(word);
        if self.lowercase_lookup {
            word.to_lowercase()
        } else {
            word
        }
    }

    /// The vector for a known word, if any.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&self.key(word)).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(&self.key(word))
    }

    /// Total lookup: unknown words fall back to the seeded unk vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.get(word).unwrap_or(&self.unk)
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

fn unk_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    let uniform = Uniform::new_inclusive(-half, half);
    (0..dim).map(|_| uniform.sample(&mut rng)).collect()
}

/// Reads a text embedding table: optional `count dim` header, then one
/// `word v1 .. vd` row per line. Duplicate words keep the first vector.
/// `expected_dim` cross-checks the width when given.
pub fn load_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
    seed: u64,
) -> Result<EmbeddingTable, IngestError> {
    let text = read_file(path)?;
    let mut dim: Option<usize> = expected_dim;
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    let mut first_data_line = true;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if first_data_line && fields.len() == 2 {
            // A `count dim` header: both fields are plain integers.
            if let (Ok(_count), Ok(header_dim)) =
                (fields[0].parse::<usize>(), fields[1].parse::<usize>())
            {
                if let Some(expected) = dim {
                    if header_dim != expected {
                        return Err(IngestError::DimensionMismatch {
                            path: path.to_path_buf(),
                            line: i + 1,
                            expected,
                            found: header_dim,
                        });
                    }
                }
                dim = Some(header_dim);
                first_data_line = false;
                continue;
            }
        }
        first_data_line = false;
        let word = nfc(fields[0]);
        let mut vector = Vec::with_capacity(fields.len() - 1);
        for raw in &fields[1..] {
            vector.push(raw.parse::<f64>().map_err(|_| {
                IngestError::format(path, i + 1, format!("non-numeric component {raw:?}"))
            })?);
        }
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(IngestError::DimensionMismatch {
                path: path.to_path_buf(),
                line: i + 1,
                expected,
                found: vector.len(),
            });
        }
        vectors.entry(word).or_insert(vector);
    }
    let Some(dim) = dim.filter(|_| !vectors.is_empty()) else {
        return Err(IngestError::format(path, 1, "no vectors found"));
    };
    Ok(EmbeddingTable {
        dim,
        unk: unk_vector(dim, seed),
        vectors,
        lowercase_lookup: false,
    })
}

/// Precomputed vectors keyed by instance id, one split file's worth. The
/// id of an instance is its 0-based line number in the split data file,
/// which lets external encoders supply vectors without sharing a vocabulary.
#[derive(Debug, Clone)]
pub struct InstanceVectors {
    dim: usize,
    vectors: HashMap<usize, Vec<f64>>,
}

impl InstanceVectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, instance_id: usize) -> Option<&[f64]> {
        self.vectors.get(&instance_id).map(Vec::as_slice)
    }
}

/// Reads a per-instance vector file: `instance_id<TAB>v1 v2 ... vd` per
/// line. Ids must be unique and all vectors equally wide.
pub fn load_instance_vectors(path: &Path) -> Result<InstanceVectors, IngestError> {
    let text = read_file(path)?;
    let mut dim: Option<usize> = None;
    let mut vectors: HashMap<usize, Vec<f64>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((id_field, rest)) = line.split_once('\t') else {
            return Err(IngestError::format(path, i + 1, "expected instance_id<TAB>components"));
        };
        let id: usize = id_field.trim().parse().map_err(|_| {
            IngestError::format(path, i + 1, format!("bad instance id {id_field:?}"))
        })?;
        let mut vector = Vec::new();
        for raw in rest.split_whitespace() {
            vector.push(raw.parse::<f64>().map_err(|_| {
                IngestError::format(path, i + 1, format!("non-numeric component {raw:?}"))
            })?);
        }
        if vector.is_empty() {
            return Err(IngestError::format(path, i + 1, "no vector components"));
        }
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(IngestError::DimensionMismatch {
                path: path.to_path_buf(),
                line: i + 1,
                expected,
                found: vector.len(),
            });
        }
        if vectors.insert(id, vector).is_some() {
            return Err(IngestError::format(path, i + 1, format!("duplicate instance id {id}")));
        }
    }
    let Some(dim) = dim else {
        return Err(IngestError::format(path, 1, "no vectors found"));
    };
    Ok(InstanceVectors { dim, vectors })
}

/// One syllable split into onset, nucleus and coda. Onset and coda may be
/// empty, the nucleus never is.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syllable {
    pub onset: String,
    pub nucleus: String,
    pub coda: String,
}

impl Syllable {
    pub fn text(&self) -> String {
        format!("{}{}{}", self.onset, self.nucleus, self.coda)
    }
}

/// A lexicon word with its syllable decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyllabifiedWord {
    pub word: String,
    pub syllables: Vec<Syllable>,
}

impl SyllabifiedWord {
    /// Word length in characters.
    pub fn char_len(&self) -> usize {
        self.word.chars().count()
    }

    /// Number of non-empty sub-syllabic segments.
    pub fn segment_count(&self) -> usize {
        self.syllables
            .iter()
            .map(|s| {
                [&s.onset, &s.nucleus, &s.coda]
                    .iter()
                    .filter(|p| !p.is_empty())
                    .count()
            })
            .sum()
    }
}

/// Reads a syllabified lexicon: `word<TAB>syllabification` with `-` between
/// syllables and `:` between onset, nucleus and coda, e.g. `kedi<TAB>k:e:-d:i:`.
/// The segments must re-concatenate to the word exactly.
pub fn load_syllabified_lexicon(path: &Path) -> Result<Vec<SyllabifiedWord>, IngestError> {
    let text = read_file(path)?;
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(IngestError::format(
                path,
                i + 1,
                format!("expected 2 tab-separated columns, found {}", cols.len()),
            ));
        }
        let word = nfc(cols[0].trim());
        if word.is_empty() {
            return Err(IngestError::format(path, i + 1, "empty word"));
        }
        let mut syllables = Vec::new();
        for chunk in cols[1].split('-') {
            let parts: Vec<&str> = chunk.split(':').collect();
            if parts.len() != 3 {
                return Err(IngestError::format(
                    path,
                    i + 1,
                    format!("syllable {chunk:?} needs onset:nucleus:coda"),
                ));
            }
            let syllable = Syllable {
                onset: nfc(parts[0]),
                nucleus: nfc(parts[1]),
                coda: nfc(parts[2]),
            };
            if syllable.nucleus.is_empty() {
                return Err(IngestError::format(
                    path,
                    i + 1,
                    format!("syllable {chunk:?} has an empty nucleus"),
                ));
            }
            syllables.push(syllable);
        }
        let joined: String = syllables.iter().map(|s| s.text()).collect();
        if joined != word {
            return Err(IngestError::format(
                path,
                i + 1,
                format!("segments join to {joined:?}, not {word:?}"),
            ));
        }
        words.push(SyllabifiedWord { word, syllables });
    }
    Ok(words)
}

/// One annotated token inside its sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedToken {
    /// The whole sentence, tokens joined by single spaces.
    pub sentence: String,
    /// Zero-based token position; indexing the whitespace-tokenized
    /// sentence at it yields `form`.
    pub index: usize,
    pub form: String,
    pub bundle: FeatureBundle,
}

/// Reads a token-annotated treebank. Sentences are blank-line separated;
/// each token line is `index<TAB>form<TAB>features`, indices counting from
/// zero in order. A features column of `_` means no annotation.
pub fn load_annotated_treebank(
    path: &Path,
    catalog: &TagCatalog,
) -> Result<Vec<AnnotatedToken>, IngestError> {
    let text = read_file(path)?;
    let mut tokens = Vec::new();
    // (line number, declared index, form, bundle) for the open sentence.
    let mut pending: Vec<(usize, usize, String, FeatureBundle)> = Vec::new();

    let flush = |pending: &mut Vec<(usize, usize, String, FeatureBundle)>,
                 tokens: &mut Vec<AnnotatedToken>|
     -> Result<(), IngestError> {
        if pending.is_empty() {
            return Ok(());
        }
        for (position, (line, declared, form, _)) in pending.iter().enumerate() {
            if *declared != position {
                return Err(IngestError::format(
                    path,
                    *line,
                    format!("token {form:?} declares index {declared} but sits at {position}"),
                ));
            }
        }
        let sentence = pending
            .iter()
            .map(|(_, _, form, _)| form.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        for (_, index, form, bundle) in pending.drain(..) {
            tokens.push(AnnotatedToken {
                sentence: sentence.clone(),
                index,
                form,
                bundle,
            });
        }
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut pending, &mut tokens)?;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(IngestError::format(
                path,
                i + 1,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let index: usize = cols[0].trim().parse().map_err(|_| {
            IngestError::format(path, i + 1, format!("non-numeric token index {:?}", cols[0]))
        })?;
        let form = nfc(cols[1].trim());
        if form.is_empty() || form.chars().any(char::is_whitespace) {
            return Err(IngestError::format(
                path,
                i + 1,
                format!("token form {form:?} must be one non-empty word"),
            ));
        }
        let features = cols[2].trim();
        let bundle = if features.is_empty() || features == "_" {
            FeatureBundle::empty()
        } else {
            parse_bundle(features, catalog)
                .map_err(|e| IngestError::format(path, i + 1, e.to_string()))?
        };
        pending.push((i + 1, index, form, bundle));
    }
    flush(&mut pending, &mut tokens)?;
    Ok(tokens)
}
