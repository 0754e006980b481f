//! Rank-correlation study, layer diagnostics and OOV accounting.
//!
//! Probing accuracies and downstream scores are compared through Spearman
//! correlation over a handful of embeddings, so the p-values matter more
//! than usual: with n <= 8 subjects they come from exact permutation
//! enumeration, beyond that from a t-distribution flagged as approximate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ingest::EmbeddingTable;
use crate::probe::{train_probe, ProbeConfig};
use crate::taskgen::{InstanceKind, ProbingDataset, Split};

/// Problems in the statistical layer.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} subjects, got {got}")]
    TooFewSubjects { got: usize, needed: usize },
    #[error("duplicate subject id {id:?}")]
    DuplicateSubject { id: String },
    #[error("non-finite score for subject {id:?}")]
    NonFiniteScore { id: String },
    #[error("subject ids do not match: {left:?} vs {right:?}")]
    MismatchedSubjects { left: Vec<String>, right: Vec<String> },
    #[error("every score in the {which} vector is tied; rank correlation is undefined")]
    ZeroVariance { which: &'static str },
    #[error("need at least two snapshots, got {got}")]
    TooFewSnapshots { got: usize },
    #[error("snapshot {id:?} has dimension {found}, expected {expected}")]
    SnapshotDimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("the {which} score table is empty")]
    EmptyTable { which: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Scores for a set of subjects (embedding names, epochs), aligned by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    ids: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreVector {
    /// Builds a vector from (id, score) pairs: at least two subjects, ids
    /// unique, scores finite.
    pub fn new(
        pairs: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<ScoreVector, AnalysisError> {
        let mut ids = Vec::new();
        let mut scores = Vec::new();
        for (id, score) in pairs {
            if ids.contains(&id) {
                return Err(AnalysisError::DuplicateSubject { id });
            }
            if !score.is_finite() {
                return Err(AnalysisError::NonFiniteScore { id });
            }
            ids.push(id);
            scores.push(score);
        }
        if ids.len() < 2 {
            return Err(AnalysisError::TooFewSubjects {
                got: ids.len(),
                needed: 2,
            });
        }
        Ok(ScoreVector { ids, scores })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|i| self.scores[i])
    }
}

/// Pairs `b`'s scores up with `a`'s subject order.
fn aligned(a: &ScoreVector, b: &ScoreVector) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    let mismatch = || AnalysisError::MismatchedSubjects {
        left: a.ids.clone(),
        right: b.ids.clone(),
    };
    if a.len() != b.len() {
        return Err(mismatch());
    }
    let mut right = Vec::with_capacity(a.len());
    for id in &a.ids {
        match b.get(id) {
            Some(score) => right.push(score),
            None => return Err(mismatch()),
        }
    }
    Ok((a.scores.clone(), right))
}

/// Mid-ranks: ties share the average of the ranks they span.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite scores"));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            ranks[i] = rank;
        }
        start = end + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mean_x) * (b - mean_y);
        var_x += (a - mean_x) * (a - mean_x);
        var_y += (b - mean_y) * (b - mean_y);
    }
    cov / (var_x * var_y).sqrt()
}

fn ranked(a: &ScoreVector, b: &ScoreVector) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    let (left, right) = aligned(a, b)?;
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(&left) {
        return Err(AnalysisError::ZeroVariance { which: "left" });
    }
    if constant(&right) {
        return Err(AnalysisError::ZeroVariance { which: "right" });
    }
    Ok((midranks(&left), midranks(&right)))
}

/// Spearman's rank correlation: Pearson correlation of mid-ranks, aligned
/// by subject id.
pub fn spearman_rho(a: &ScoreVector, b: &ScoreVector) -> Result<f64, AnalysisError> {
    let (ra, rb) = ranked(a, b)?;
    Ok(pearson(&ra, &rb))
}

/// How a p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PMethod {
    /// All n! rank permutations enumerated; the value is exact.
    ExactPermutation,
    /// t-distribution approximation, used beyond n = 8.
    TApproximation,
}

/// A p-value together with the method that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValue {
    pub p: f64,
    pub method: PMethod,
}

/// Largest subject count for which p-values are exact (8! permutations).
pub const EXACT_PERMUTATION_LIMIT: usize = 8;

/// Significance of the observed correlation under the permutation null.
/// Up to [`EXACT_PERMUTATION_LIMIT`] subjects every permutation of one
/// rank vector is enumerated (the identity included), so the p-value is a
/// fraction k/n!. Beyond that a t-approximation is returned, flagged.
pub fn permutation_p_value(
    a: &ScoreVector,
    b: &ScoreVector,
    two_sided: bool,
) -> Result<PValue, AnalysisError> {
    let n = a.len();
    if n < 3 {
        return Err(AnalysisError::TooFewSubjects { got: n, needed: 3 });
    }
    let (ra, rb) = ranked(a, b)?;
    let observed = pearson(&ra, &rb);

    if n <= EXACT_PERMUTATION_LIMIT {
        // Small float slack so permutations reaching exactly the observed
        // correlation are never dropped by rounding.
        const SLACK: f64 = 1e-9;
        let mut hits = 0usize;
        let mut total = 0usize;
        for perm in rb.iter().copied().permutations(n) {
            let rho = pearson(&ra, &perm);
            let hit = if two_sided {
                rho.abs() >= observed.abs() - SLACK
            } else {
                rho >= observed - SLACK
            };
            if hit {
                hits += 1;
            }
            total += 1;
        }
        return Ok(PValue {
            p: hits as f64 / total as f64,
            method: PMethod::ExactPermutation,
        });
    }

    let p = if observed.abs() >= 1.0 - 1e-12 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = observed * (df / (1.0 - observed * observed)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
        if two_sided {
            2.0 * (1.0 - dist.cdf(t.abs()))
        } else {
            1.0 - dist.cdf(t)
        }
    };
    Ok(PValue {
        p,
        method: PMethod::TApproximation,
    })
}

/// One correlation matrix entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub rho: f64,
    pub p: f64,
    pub method: PMethod,
    /// Number of shared subjects behind the correlation.
    pub n: usize,
    /// The configured thresholds at which this cell is significant.
    pub significant_at: Vec<f64>,
}

/// Spearman correlations of every probing task against every downstream
/// task, with per-cell significance and a record of what could not be
/// computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub thresholds: Vec<f64>,
    pub probing_tasks: Vec<String>,
    pub downstream_tasks: Vec<String>,
    /// probing task -> downstream task -> cell.
    pub cells: BTreeMap<String, BTreeMap<String, CorrelationCell>>,
    /// probing task -> downstream task -> reason the cell is missing.
    pub missing: BTreeMap<String, BTreeMap<String, String>>,
}

impl CorrelationReport {
    pub fn cell(&self, probing: &str, downstream: &str) -> Option<&CorrelationCell> {
        self.cells.get(probing).and_then(|row| row.get(downstream))
    }

    /// Cells whose p-value stays at or under the threshold, mirroring the
    /// figures where weak correlations are hidden.
    pub fn filtered(&self, threshold: f64) -> Vec<(&str, &str, &CorrelationCell)> {
        let mut kept = Vec::new();
        for (probing, row) in &self.cells {
            for (downstream, cell) in row {
                if cell.p <= threshold {
                    kept.push((probing.as_str(), downstream.as_str(), cell));
                }
            }
        }
        kept
    }

    /// A human-readable matrix; missing cells show a dash.
    pub fn to_text(&self) -> String {
        let mut out = String::from("probing\\downstream");
        for task in &self.downstream_tasks {
            out.push('\t');
            out.push_str(task);
        }
        out.push('\n');
        for probing in &self.probing_tasks {
            out.push_str(probing);
            for downstream in &self.downstream_tasks {
                out.push('\t');
                match self.cell(probing, downstream) {
                    Some(cell) => {
                        out.push_str(&format!("{:+.3} (p={:.4})", cell.rho, cell.p));
                    }
                    None => out.push('-'),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Correlates each probing task's per-embedding accuracies with each
/// downstream task's per-embedding scores. Cells that cannot be computed
/// (tied scores, mismatched subjects) are recorded with the reason rather
/// than imputed.
pub fn correlation_matrix(
    probing: &BTreeMap<String, ScoreVector>,
    downstream: &BTreeMap<String, ScoreVector>,
    thresholds: &[f64],
) -> Result<CorrelationReport, AnalysisError> {
    if probing.is_empty() {
        return Err(AnalysisError::EmptyTable { which: "probing" });
    }
    if downstream.is_empty() {
        return Err(AnalysisError::EmptyTable {
            which: "downstream",
        });
    }
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));

    let mut report = CorrelationReport {
        thresholds: thresholds.clone(),
        probing_tasks: probing.keys().cloned().collect(),
        downstream_tasks: downstream.keys().cloned().collect(),
        cells: BTreeMap::new(),
        missing: BTreeMap::new(),
    };
    for (probing_task, accuracy) in probing {
        for (downstream_task, score) in downstream {
            let outcome = spearman_rho(accuracy, score)
                .and_then(|rho| Ok((rho, permutation_p_value(accuracy, score, true)?)));
            match outcome {
                Ok((rho, p_value)) => {
                    let cell = CorrelationCell {
                        rho,
                        p: p_value.p,
                        method: p_value.method,
                        n: accuracy.len(),
                        significant_at: thresholds
                            .iter()
                            .copied()
                            .filter(|&t| p_value.p <= t)
                            .collect(),
                    };
                    report
                        .cells
                        .entry(probing_task.clone())
                        .or_default()
                        .insert(downstream_task.clone(), cell);
                }
                Err(error) => {
                    report
                        .missing
                        .entry(probing_task.clone())
                        .or_default()
                        .insert(downstream_task.clone(), error.to_string());
                }
            }
        }
    }
    Ok(report)
}

/// The default significance thresholds of the correlation study.
pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.1, 0.2];

/// Builds per-task score vectors from `(embedding, task, score)` rows.
pub fn score_table_from_rows(
    rows: impl IntoIterator<Item = (String, String, f64)>,
) -> Result<BTreeMap<String, ScoreVector>, AnalysisError> {
    let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (embedding, task, score) in rows {
        grouped.entry(task).or_default().push((embedding, score));
    }
    let mut table = BTreeMap::new();
    for (task, pairs) in grouped {
        table.insert(task, ScoreVector::new(pairs)?);
    }
    Ok(table)
}

/// Reads downstream scores from a flat `embedding<TAB>task<TAB>score`
/// file into per-task score vectors.
pub fn read_downstream_scores(
    path: &Path,
) -> Result<BTreeMap<String, ScoreVector>, AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [embedding, task, score] = fields.as_slice() else {
            return Err(AnalysisError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        };
        let score: f64 = score.trim().parse().map_err(|_| AnalysisError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("bad score {score:?}"),
        })?;
        rows.push((embedding.to_string(), task.to_string(), score));
    }
    score_table_from_rows(rows)
}

/// Probe accuracies of one task across training snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrajectory {
    pub task: String,
    /// One point per snapshot that probed successfully, in snapshot order.
    pub points: Vec<TrajectoryPoint>,
    /// Test-accuracy differences between consecutive points.
    pub deltas: Vec<f64>,
    /// True when the accuracy rises strictly from every point to the next.
    pub monotone_increasing: bool,
    /// snapshot id -> error message for cells that failed to probe.
    pub errors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub snapshot: String,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
}

/// Accuracy series for every probed task over the snapshot sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub snapshots: Vec<String>,
    pub tasks: Vec<TaskTrajectory>,
}

impl TrajectoryReport {
    /// Flat series table: `task<TAB>snapshot<TAB>dev<TAB>test`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("task\tsnapshot\tdev\ttest\n");
        for task in &self.tasks {
            for point in &task.points {
                out.push_str(&format!(
                    "{}\t{}\t{:.2}\t{:.2}\n",
                    task.task, point.snapshot, point.dev_accuracy, point.test_accuracy
                ));
            }
        }
        out
    }
}

/// Probes every task against every snapshot of an embedding under
/// training, tracking how the encoded information develops. A failing
/// cell is recorded and skipped; it does not abort the run.
pub fn diagnose_trajectory(
    snapshots: &[(String, EmbeddingTable)],
    tasks: &[ProbingDataset],
    cfg: &ProbeConfig,
) -> Result<TrajectoryReport, AnalysisError> {
    if snapshots.len() < 2 {
        return Err(AnalysisError::TooFewSnapshots {
            got: snapshots.len(),
        });
    }
    let expected = snapshots[0].1.dim();
    for (id, table) in snapshots {
        if table.dim() != expected {
            return Err(AnalysisError::SnapshotDimension {
                id: id.clone(),
                expected,
                found: table.dim(),
            });
        }
    }

    let task_reports: Vec<TaskTrajectory> = tasks
        .par_iter()
        .map(|ds| {
            let mut points = Vec::new();
            let mut errors = BTreeMap::new();
            for (id, table) in snapshots {
                match train_probe(ds, table, cfg) {
                    Ok(report) => points.push(TrajectoryPoint {
                        snapshot: id.clone(),
                        dev_accuracy: report.dev_accuracy,
                        test_accuracy: report.test_accuracy,
                        best_epoch: report.best_epoch,
                    }),
                    Err(error) => {
                        errors.insert(id.clone(), error.to_string());
                    }
                }
            }
            let deltas: Vec<f64> = points
                .windows(2)
                .map(|pair| pair[1].test_accuracy - pair[0].test_accuracy)
                .collect();
            let monotone_increasing = !deltas.is_empty() && deltas.iter().all(|&d| d > 0.0);
            TaskTrajectory {
                task: ds.task.id(),
                points,
                deltas,
                monotone_increasing,
                errors,
            }
        })
        .collect();

    Ok(TrajectoryReport {
        snapshots: snapshots.iter().map(|(id, _)| id.clone()).collect(),
        tasks: task_reports,
    })
}

/// OOV percentages per split, rounded to 0.01.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OovRates {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl OovRates {
    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

/// Share of word slots absent from the vocabulary, per split. Both forms
/// of a pair count separately; a token instance contributes its indexed
/// form.
pub fn oov_rate(ds: &ProbingDataset, in_vocab: impl Fn(&str) -> bool) -> OovRates {
    let rate = |split: Split| {
        let mut slots = 0usize;
        let mut missing = 0usize;
        for instance in ds.split(split) {
            let forms: [Option<&str>; 2] = match &instance.kind {
                InstanceKind::SingleForm { form } => [Some(form.as_str()), None],
                InstanceKind::FormPair { first, second } => {
                    [Some(first.as_str()), Some(second.as_str())]
                }
                InstanceKind::TokenInContext { sentence, index } => {
                    [Some(sentence.split_whitespace().nth(*index).unwrap_or("")), None]
                }
            };
            for form in forms.into_iter().flatten() {
                slots += 1;
                if !in_vocab(form) {
                    missing += 1;
                }
            }
        }
        let percent = 100.0 * missing as f64 / slots.max(1) as f64;
        (percent * 100.0).round() / 100.0
    };
    OovRates {
        train: rate(Split::Train),
        dev: rate(Split::Dev),
        test: rate(Split::Test),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FeatureDimension, LanguageConfig, SplitSizes};
    use crate::taskgen::{DatasetMeta, ProbingInstance, Provenance, TaskKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vector(pairs: &[(&str, f64)]) -> ScoreVector {
        ScoreVector::new(pairs.iter().map(|(id, s)| (id.to_string(), *s))).unwrap()
    }

    fn named(scores: &[f64]) -> ScoreVector {
        ScoreVector::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("e{i}"), s)),
        )
        .unwrap()
    }

    // Spearman

    #[test]
    fn identical_and_reversed_rankings_hit_the_poles() {
        let a = named(&[1.0, 2.0, 3.0]);
        assert_eq!(spearman_rho(&a, &named(&[10.0, 20.0, 30.0])).unwrap(), 1.0);
        assert_eq!(spearman_rho(&a, &named(&[30.0, 20.0, 10.0])).unwrap(), -1.0);
    }

    #[test]
    fn tied_scores_use_midranks() {
        // Hand-computed: ranks of a are [3, 1.5, 4, 1.5, 5], ranks of b
        // are [2.5, 4, 1, 5, 2.5]; their Pearson correlation is -7.5/9.5.
        let a = named(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        let b = named(&[2.0, 7.0, 1.0, 8.0, 2.0]);
        let rho = spearman_rho(&a, &b).unwrap();
        assert!((rho - (-7.5 / 9.5)).abs() < 1e-12, "rho {rho}");
    }

    /// Independent oracle: rank with a quadratic tie scan, then correlate
    /// with a textbook two-pass Pearson.
    fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|&a| {
                    let below = v.iter().filter(|&&b| b < a).count() as f64;
                    let tied = v.iter().filter(|&&b| b == a).count() as f64;
                    below + (tied + 1.0) / 2.0
                })
                .collect()
        };
        let rx = rank(x);
        let ry = rank(y);
        let n = rx.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let num: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let dx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let dy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        num / (dx * dy).sqrt()
    }

    #[test]
    fn random_vectors_match_the_rank_then_pearson_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let n = rng.gen_range(3..12);
            // Coarse grid scores so ties occur often.
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 2.0).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 2.0).collect();
            let constant = |v: &[f64]| v.iter().all(|&s| s == v[0]);
            if constant(&x) || constant(&y) {
                continue;
            }
            let rho = spearman_rho(&named(&x), &named(&y)).unwrap();
            assert!((rho - oracle_spearman(&x, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_and_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(3..9);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (a, b) = (named(&x), named(&y));
            let rho = spearman_rho(&a, &b).unwrap();
            assert!((rho - spearman_rho(&b, &a).unwrap()).abs() < 1e-12);
            let stretched: Vec<f64> = x.iter().map(|&v| (v * 0.5).exp() * 3.0).collect();
            assert!((rho - spearman_rho(&named(&stretched), &b).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn alignment_follows_ids_not_order() {
        let a = vector(&[("glove", 1.0), ("muse", 2.0), ("fasttext", 3.0)]);
        let b = vector(&[("fasttext", 30.0), ("glove", 10.0), ("muse", 20.0)]);
        assert_eq!(spearman_rho(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_and_degenerate_inputs_are_rejected() {
        let a = named(&[1.0, 2.0, 3.0]);
        let other = vector(&[("x", 1.0), ("y", 2.0), ("z", 3.0)]);
        assert!(matches!(
            spearman_rho(&a, &other),
            Err(AnalysisError::MismatchedSubjects { .. })
        ));
        let flat = named(&[4.0, 4.0, 4.0]);
        assert!(matches!(
            spearman_rho(&flat, &a),
            Err(AnalysisError::ZeroVariance { which: "left" })
        ));
        assert!(matches!(
            spearman_rho(&a, &flat),
            Err(AnalysisError::ZeroVariance { which: "right" })
        ));
        assert!(matches!(
            ScoreVector::new([("a".to_string(), 1.0)]),
            Err(AnalysisError::TooFewSubjects { .. })
        ));
        assert!(matches!(
            ScoreVector::new([("a".to_string(), 1.0), ("a".to_string(), 2.0)]),
            Err(AnalysisError::DuplicateSubject { .. })
        ));
    }

    // Permutation p-values

    #[test]
    fn perfect_three_subject_correlation_has_p_two_sixths() {
        let a = named(&[1.0, 2.0, 3.0]);
        let b = named(&[5.0, 6.0, 7.0]);
        let p = permutation_p_value(&a, &b, true).unwrap();
        assert_eq!(p.method, PMethod::ExactPermutation);
        assert_eq!(p.p, 2.0 / 6.0);
    }

    #[test]
    fn perfect_five_subject_correlation_has_p_two_over_120() {
        let a = named(&[10.0, 20.0, 30.0, 40.0, 50.0]);
        let b = named(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let p = permutation_p_value(&a, &b, true).unwrap();
        assert_eq!(p.p, 2.0 / 120.0);
    }

    /// Exhaustive oracle with its own correlation code.
    fn oracle_exact_p(x: &[f64], y: &[f64]) -> f64 {
        let observed = oracle_spearman(x, y).abs();
        let mut hits = 0;
        let mut total = 0;
        for perm in y.iter().copied().permutations(y.len()) {
            if oracle_spearman(x, &perm).abs() >= observed - 1e-9 {
                hits += 1;
            }
            total += 1;
        }
        hits as f64 / total as f64
    }

    #[test]
    fn five_subject_p_matches_the_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0..8) as f64).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.gen_range(0..8) as f64).collect();
            let constant = |v: &[f64]| v.iter().all(|&s| s == v[0]);
            if constant(&x) || constant(&y) {
                continue;
            }
            let p = permutation_p_value(&named(&x), &named(&y), true).unwrap();
            assert_eq!(p.p, oracle_exact_p(&x, &y));
            // Exact p-values are fractions of 5! = 120.
            let scaled = p.p * 120.0;
            assert!((scaled - scaled.round()).abs() < 1e-9);
            assert!(p.p > 0.0 && p.p <= 1.0);
        }
    }

    #[test]
    fn relabeling_subjects_changes_nothing() {
        let a = vector(&[("e0", 3.0), ("e1", 1.0), ("e2", 2.0), ("e3", 5.0), ("e4", 4.0)]);
        let b = vector(&[("e0", 7.0), ("e1", 2.0), ("e2", 2.0), ("e3", 9.0), ("e4", 6.0)]);
        let renamed = |v: &ScoreVector| {
            ScoreVector::new(
                v.ids()
                    .iter()
                    .zip(v.scores())
                    .map(|(id, &s)| (format!("muse-{id}"), s)),
            )
            .unwrap()
        };
        let p = permutation_p_value(&a, &b, true).unwrap();
        let q = permutation_p_value(&renamed(&a), &renamed(&b), true).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn large_samples_switch_to_the_t_approximation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mostly: Vec<f64> = x.iter().map(|&v| v + rng.gen_range(-2.0..2.0)).collect();
        let p = permutation_p_value(&named(&x), &named(&mostly), true).unwrap();
        assert_eq!(p.method, PMethod::TApproximation);
        assert!(p.p < 0.01, "strong correlation, p {}", p.p);

        let noise: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = permutation_p_value(&named(&x), &named(&noise), true).unwrap();
        assert!((0.0..=1.0).contains(&q.p));
        assert!(q.p > p.p);

        let perfect = permutation_p_value(&named(&x), &named(&x), true).unwrap();
        assert_eq!(perfect.p, 0.0);
    }

    #[test]
    fn too_few_subjects_for_a_p_value() {
        let a = named(&[1.0, 2.0]);
        assert!(matches!(
            permutation_p_value(&a, &named(&[2.0, 1.0]), true),
            Err(AnalysisError::TooFewSubjects { needed: 3, .. })
        ));
    }

    // Correlation matrix

    #[test]
    fn identical_tables_correlate_perfectly_on_the_diagonal() {
        let accuracies = vec![78.0, 81.5, 74.0, 90.0, 85.5];
        let mut probing = BTreeMap::new();
        probing.insert("case".to_string(), named(&accuracies));
        probing.insert("tense".to_string(), named(&[1.0, 2.0, 3.0, 5.0, 4.0]));
        let mut downstream = BTreeMap::new();
        downstream.insert("ner".to_string(), named(&accuracies));

        let report = correlation_matrix(&probing, &downstream, &DEFAULT_THRESHOLDS).unwrap();
        let cell = report.cell("case", "ner").unwrap();
        assert_eq!(cell.rho, 1.0);
        assert_eq!(cell.n, 5);
        assert_eq!(cell.method, PMethod::ExactPermutation);
        assert_eq!(cell.p, 2.0 / 120.0);
        assert_eq!(cell.significant_at, vec![0.1, 0.2]);
    }

    #[test]
    fn weak_cells_disappear_from_the_filtered_view() {
        let mut probing = BTreeMap::new();
        probing.insert("strong".to_string(), named(&[1.0, 2.0, 3.0, 4.0, 5.0]));
        probing.insert("weak".to_string(), named(&[2.0, 5.0, 1.0, 4.0, 3.0]));
        let mut downstream = BTreeMap::new();
        downstream.insert("pos".to_string(), named(&[1.5, 2.5, 3.5, 4.5, 5.5]));

        let report = correlation_matrix(&probing, &downstream, &DEFAULT_THRESHOLDS).unwrap();
        let strong = report.cell("strong", "pos").unwrap();
        let weak = report.cell("weak", "pos").unwrap();
        assert!(strong.p <= 0.2 && weak.p > 0.2, "{} vs {}", strong.p, weak.p);
        let filtered = report.filtered(0.2);
        assert!(filtered.iter().any(|(p, _, _)| *p == "strong"));
        assert!(!filtered.iter().any(|(p, _, _)| *p == "weak"));
        for (_, _, cell) in report.filtered(0.1) {
            assert!(cell.p <= 0.1);
        }
    }

    #[test]
    fn uncomputable_cells_are_recorded_not_imputed() {
        let mut probing = BTreeMap::new();
        probing.insert("case".to_string(), named(&[1.0, 2.0, 3.0, 4.0, 5.0]));
        probing.insert("flat".to_string(), named(&[7.0, 7.0, 7.0, 7.0, 7.0]));
        let mut downstream = BTreeMap::new();
        downstream.insert("ner".to_string(), named(&[2.0, 1.0, 4.0, 3.0, 5.0]));
        downstream.insert(
            "other-subjects".to_string(),
            vector(&[("x0", 1.0), ("x1", 2.0), ("x2", 3.0), ("x3", 4.0), ("x4", 5.0)]),
        );

        let report = correlation_matrix(&probing, &downstream, &DEFAULT_THRESHOLDS).unwrap();
        assert!(report.cell("case", "ner").is_some());
        assert!(report.cell("flat", "ner").is_none());
        assert!(report.missing["flat"]["ner"].contains("tied"));
        assert!(report.missing["case"]["other-subjects"].contains("ids do not match"));
        let text = report.to_text();
        assert!(text.contains('-'));
    }

    // Trajectories

    fn trajectory_fixture(
        sigmas: &[f64],
    ) -> (Vec<(String, EmbeddingTable)>, Vec<ProbingDataset>) {
        let sizes = SplitSizes::new(400, 100, 100);
        let total = sizes.total();
        let task = TaskKind::SingleFeature(FeatureDimension::Case);
        let mut cfg = LanguageConfig::new("xx", 3);
        cfg.splits = sizes;

        let mut instances = Vec::new();
        for i in 0..total {
            let label = if i % 2 == 0 { "ACC" } else { "DAT" };
            instances.push(ProbingInstance::single(
                format!("w{i}"),
                label,
                Provenance::Frequent,
            ));
        }
        let mut train = instances;
        let test = train.split_off(sizes.train + sizes.dev);
        let dev = train.split_off(sizes.train);
        let ds = ProbingDataset {
            language: cfg.language.clone(),
            task: task.clone(),
            label_set: vec!["ACC".to_string(), "DAT".to_string()],
            train,
            dev,
            test,
            meta: DatasetMeta::new(&task, &cfg),
        };
        ds.validate().unwrap();

        let mut noise = ChaCha8Rng::seed_from_u64(40);
        let snapshots = sigmas
            .iter()
            .enumerate()
            .map(|(s, &sigma)| {
                let rows: Vec<(String, Vec<f64>)> = (0..total)
                    .map(|i| {
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        let mut v: Vec<f64> =
                            (0..6).map(|_| noise.gen_range(-0.2..0.2)).collect();
                        v[0] = sign + sigma * noise.gen_range(-1.0..1.0);
                        (format!("w{i}"), v)
                    })
                    .collect();
                (
                    format!("epoch{}", s + 1),
                    EmbeddingTable::from_rows(rows, 5).unwrap(),
                )
            })
            .collect();
        (snapshots, vec![ds])
    }

    fn fast_probe_cfg() -> ProbeConfig {
        ProbeConfig {
            hidden_dim: 32,
            seed: 77,
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn sharpening_snapshots_give_a_strictly_rising_trajectory() {
        // Uniform noise of width sigma around the +-1 class poles: the
        // classes overlap at sigma > 1 and separate cleanly at 0.
        let (snapshots, tasks) = trajectory_fixture(&[3.0, 1.6, 0.0]);
        let report = diagnose_trajectory(&snapshots, &tasks, &fast_probe_cfg()).unwrap();
        assert_eq!(report.snapshots, vec!["epoch1", "epoch2", "epoch3"]);
        let trajectory = &report.tasks[0];
        assert_eq!(trajectory.points.len(), 3);
        assert!(trajectory.errors.is_empty());
        assert!(
            trajectory.monotone_increasing,
            "accuracies {:?}",
            trajectory.points
        );
        let total: f64 = trajectory.deltas.iter().sum();
        let span = trajectory.points.last().unwrap().test_accuracy
            - trajectory.points[0].test_accuracy;
        assert!((total - span).abs() < 1e-9);
        assert!(report.to_table().lines().count() == 4);
    }

    #[test]
    fn constant_snapshots_have_zero_deltas() {
        let (mut snapshots, tasks) = trajectory_fixture(&[0.5, 0.5]);
        // Make the second snapshot literally the first.
        snapshots[1].1 = snapshots[0].1.clone();
        let report = diagnose_trajectory(&snapshots, &tasks, &fast_probe_cfg()).unwrap();
        let trajectory = &report.tasks[0];
        assert_eq!(trajectory.deltas, vec![0.0]);
        assert!(!trajectory.monotone_increasing);
    }

    #[test]
    fn failing_cells_are_recorded_without_aborting() {
        let (snapshots, mut tasks) = trajectory_fixture(&[1.0, 0.0]);
        let mut degenerate = tasks[0].clone();
        for instance in degenerate
            .train
            .iter_mut()
            .chain(&mut degenerate.dev)
            .chain(&mut degenerate.test)
        {
            instance.label = "ACC".to_string();
        }
        degenerate.label_set = vec!["ACC".to_string()];
        tasks.push(degenerate);

        let report = diagnose_trajectory(&snapshots, &tasks, &fast_probe_cfg()).unwrap();
        assert_eq!(report.tasks.len(), 2);
        let broken = &report.tasks[1];
        assert!(broken.points.is_empty());
        assert_eq!(broken.errors.len(), 2);
        let healthy = &report.tasks[0];
        assert_eq!(healthy.points.len(), 2);
    }

    #[test]
    fn snapshot_preconditions_are_checked() {
        let (snapshots, tasks) = trajectory_fixture(&[1.0]);
        assert!(matches!(
            diagnose_trajectory(&snapshots, &tasks, &fast_probe_cfg()),
            Err(AnalysisError::TooFewSnapshots { got: 1 })
        ));

        let (mut snapshots, tasks) = trajectory_fixture(&[1.0, 0.5]);
        let narrow: Vec<(String, Vec<f64>)> =
            vec![("w0".to_string(), vec![1.0, 2.0])];
        snapshots[1].1 = EmbeddingTable::from_rows(narrow, 5).unwrap();
        assert!(matches!(
            diagnose_trajectory(&snapshots, &tasks, &fast_probe_cfg()),
            Err(AnalysisError::SnapshotDimension { expected: 6, found: 2, .. })
        ));
    }

    // OOV rates

    fn oov_fixture() -> ProbingDataset {
        let task = TaskKind::SameFeat;
        let mut cfg = LanguageConfig::new("tr", 1);
        cfg.splits = SplitSizes::new(2, 1, 1);
        ProbingDataset {
            language: cfg.language.clone(),
            task: task.clone(),
            label_set: vec!["Case".to_string(), "Number".to_string()],
            train: vec![
                ProbingInstance::pair("evde", "okulda", "Case"),
                ProbingInstance::pair("ev", "evler", "Number"),
            ],
            dev: vec![ProbingInstance::pair("kedi", "kediler", "Number")],
            test: vec![ProbingInstance::pair("göz", "gözler", "Number")],
            meta: DatasetMeta::new(&task, &cfg),
        }
    }

    #[test]
    fn oov_rates_match_slot_counting() {
        let ds = oov_fixture();
        let full = oov_rate(&ds, |_| true);
        assert_eq!((full.train, full.dev, full.test), (0.0, 0.0, 0.0));
        let empty = oov_rate(&ds, |_| false);
        assert_eq!((empty.train, empty.dev, empty.test), (100.0, 100.0, 100.0));

        // Two of the four train pair slots are unknown.
        let vocab = ["evde", "evler", "kedi", "göz"];
        let rates = oov_rate(&ds, |w| vocab.contains(&w));
        assert_eq!(rates.train, 50.0);
        assert_eq!(rates.dev, 50.0);
        assert_eq!(rates.test, 50.0);
    }

    #[test]
    fn oov_rate_rounds_to_hundredths_and_shrinks_with_vocabulary() {
        let task = TaskKind::SingleFeature(FeatureDimension::Case);
        let mut cfg = LanguageConfig::new("de", 2);
        cfg.splits = SplitSizes::new(3, 3, 3);
        let words = ["a", "b", "c", "d", "e", "f", "g", "h", "i"];
        let instances: Vec<ProbingInstance> = words
            .iter()
            .map(|w| ProbingInstance::single(*w, "DAT", Provenance::Rare))
            .collect();
        let ds = ProbingDataset {
            language: cfg.language.clone(),
            task: task.clone(),
            label_set: vec!["DAT".to_string()],
            train: instances[..3].to_vec(),
            dev: instances[3..6].to_vec(),
            test: instances[6..].to_vec(),
            meta: DatasetMeta::new(&task, &cfg),
        };
        let rates = oov_rate(&ds, |w| w == "a");
        // One of three train forms known: 66.67 after rounding.
        assert_eq!(rates.train, 66.67);
        assert_eq!(rates.dev, 100.0);

        let mut vocab: Vec<&str> = Vec::new();
        let mut previous = oov_rate(&ds, |_| false);
        for word in words {
            vocab.push(word);
            let wider = oov_rate(&ds, |w| vocab.contains(&w));
            for split in [Split::Train, Split::Dev, Split::Test] {
                assert!(wider.get(split) <= previous.get(split));
            }
            previous = wider;
        }
    }
}
