//! Toolkit for probing what word embeddings know about morphology.
//!
//! The pipeline has three stages. Dataset generation turns lexical resources
//! (inflection lexicons, frequency lists, syllabified lexicons, annotated
//! treebanks) into classification datasets over word forms. Probing trains a
//! small diagnostic classifier on fixed word vectors for each dataset. The
//! analysis stage correlates probing accuracies with downstream scores,
//! tracks accuracy across training snapshots and reports vocabulary
//! coverage.

pub mod analysis;
pub mod cli;
pub mod ingest;
pub mod probe;
pub mod pseudogen;
pub mod schema;
pub mod taskgen;

pub use analysis::{
    oov_rate, permutation_p_value, read_downstream_scores, spearman_rho, AnalysisError,
    CorrelationCell, CorrelationReport, OovRates, PMethod, PValue, ScoreVector, TaskTrajectory,
};
pub use ingest::{
    load_annotated_treebank, load_embeddings, load_frequency_list, load_syllabified_lexicon,
    load_unimorph, AnnotatedToken, EmbeddingTable, FrequencyList, IngestError, IngestStats,
    ParadigmEntry, Syllable, SyllabifiedWord,
};
pub use probe::{majority_baseline, train_probe, ProbeConfig, ProbeError, ProbeReport};
pub use pseudogen::{
    build_grammar, generate_pseudo_task, generate_pseudowords, PseudoCandidate, PseudoConstraints,
    PseudoGenError, SegmentGrammar,
};
pub use schema::{
    bundle_diff, bundle_shared, nfc, parse_bundle, BundleError, FeatureBundle, FeatureDimension,
    FeatureValue, LanguageConfig, SplitSizes, TagCatalog,
};
pub use taskgen::{
    read_dataset, write_dataset, ProbingDataset, ProbingInstance, TaskGenError, TaskKind,
};
