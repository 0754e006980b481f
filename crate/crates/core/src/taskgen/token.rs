//! Token-level tasks: predict a feature of a token inside its sentence.
//!
//! Unlike the type-level tasks there is no ambiguity removal, no
//! deduplication and no None class; every annotated occurrence that carries
//! the dimension is an instance, duplicates included.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::{
    collect_label_set, count_labels, stratified_split, task_rng, DatasetMeta, ProbingDataset,
    ProbingInstance, TaskGenError, TaskKind,
};
use crate::ingest::AnnotatedToken;
use crate::schema::{FeatureDimension, LanguageConfig};

/// Generates the in-context dataset for one feature dimension.
pub fn generate_token_level_task(
    tokens: &[AnnotatedToken],
    dimension: &FeatureDimension,
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, TaskGenError> {
    let task = TaskKind::TokenFeature(dimension.clone());
    let mut instances: Vec<ProbingInstance> = tokens
        .iter()
        .filter_map(|token| {
            token
                .bundle
                .get(dimension)
                .map(|tag| ProbingInstance::token(&token.sentence, token.index, tag))
        })
        .collect();

    let total = cfg.splits.total();
    let needed = cfg.min_samples.max(total);
    if instances.len() < needed {
        return Err(TaskGenError::InsufficientData {
            task: task.id(),
            available: instances.len(),
            needed,
        });
    }
    let distinct: BTreeSet<&str> = instances.iter().map(|i| i.label.as_str()).collect();
    if distinct.len() < 2 {
        return Err(TaskGenError::DegenerateFeature {
            task: task.id(),
            label: distinct.iter().next().unwrap_or(&"").to_string(),
        });
    }

    let mut rng = task_rng(cfg, &task, "sample");
    instances.shuffle(&mut rng);
    instances.truncate(total);

    let label_set = collect_label_set(&instances);
    let label_counts = count_labels(&instances);
    let (train, dev, test) = stratified_split(instances, cfg.splits, &mut rng);

    let mut meta = DatasetMeta::new(&task, cfg);
    meta.label_counts = label_counts;

    Ok(ProbingDataset {
        language: cfg.language.clone(),
        task,
        label_set,
        train,
        dev,
        test,
        meta,
    })
}
