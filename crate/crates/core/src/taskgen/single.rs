//! Single-form tasks: one feature dimension, the tag count and the length
//! bin of a form.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    collect_label_set, count_labels, mix_by_frequency, stratified_split, task_rng, DatasetMeta,
    ProbingDataset, ProbingInstance, Provenance, TaskGenError, TaskKind, NONE_LABEL,
};
use crate::ingest::{FrequencyList, ParadigmEntry};
use crate::schema::{nfc, FeatureDimension, LanguageConfig};

/// Part-of-speech tags counted as nominal when building None pools.
const NOMINAL_POS: &[&str] = &["N", "PROPN", "ADJ", "NUM", "PRO", "DET", "ART"];

/// Part-of-speech tags counted as verbal when building None pools.
const VERBAL_POS: &[&str] = &["V", "AUX", "V.PTCP", "V.MSDR", "V.CVB"];

/// Generates the dataset probing one feature dimension on isolated forms.
///
/// Forms whose interpretations disagree on the dimension's value are
/// removed, remaining forms are deduplicated, and the configured None share
/// is filled with forms of the opposite word class that lack the dimension
/// (verb forms for nominal dimensions, nominal forms for verbal ones). The
/// labeled share is drawn from frequent and rare vocabulary at the
/// configured ratio. POS datasets carry no None class.
pub fn generate_single_feature_task(
    entries: &[ParadigmEntry],
    dimension: &FeatureDimension,
    freq: &FrequencyList,
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, TaskGenError> {
    let task = TaskKind::SingleFeature(dimension.clone());

    // Label analysis per form: which values of the dimension does it carry?
    let mut values_by_form: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for entry in entries {
        if let Some(tag) = entry.bundle.get(dimension) {
            values_by_form.entry(&entry.form).or_default().insert(tag);
        }
    }
    let mut labeled: Vec<(String, String)> = Vec::new();
    let mut ambiguity_removed = 0usize;
    for (form, values) in &values_by_form {
        if values.len() == 1 {
            let tag = values.iter().next().expect("one value");
            labeled.push((form.to_string(), tag.to_string()));
        } else {
            ambiguity_removed += 1;
        }
    }

    // The None pool: forms of the opposite word class that never carry the
    // dimension. POS itself has no None class.
    let none_pool: Vec<String> = if *dimension == FeatureDimension::Pos {
        Vec::new()
    } else {
        let wanted_pos: Option<&[&str]> = if dimension.is_verbal() {
            Some(NOMINAL_POS)
        } else if dimension.is_nominal() {
            Some(VERBAL_POS)
        } else {
            None
        };
        let mut eligible: BTreeSet<&str> = BTreeSet::new();
        for entry in entries {
            if values_by_form.contains_key(entry.form.as_str()) {
                continue;
            }
            let pos_ok = match wanted_pos {
                Some(set) => entry
                    .bundle
                    .pos_tag()
                    .map(|p| set.contains(&p))
                    .unwrap_or(false),
                None => true,
            };
            if pos_ok {
                eligible.insert(&entry.form);
            }
        }
        eligible.into_iter().map(str::to_string).collect()
    };

    let total = cfg.splits.total();
    let none_target = if *dimension == FeatureDimension::Pos {
        0
    } else {
        ((total as f64) * cfg.none_class_ratio).round() as usize
    };
    let labeled_target = total - none_target;

    let eligible = labeled.len() + none_pool.len();
    if eligible < cfg.min_samples {
        return Err(TaskGenError::InsufficientData {
            task: task.id(),
            available: eligible,
            needed: cfg.min_samples,
        });
    }
    // The dimension itself must show at least two values; a None class
    // alone does not rescue a single-valued feature.
    let distinct: BTreeSet<&str> = labeled.iter().map(|(_, l)| l.as_str()).collect();
    if distinct.len() < 2 {
        return Err(TaskGenError::DegenerateFeature {
            task: task.id(),
            label: distinct.iter().next().unwrap_or(&"").to_string(),
        });
    }
    if labeled.len() < labeled_target {
        return Err(TaskGenError::InsufficientData {
            task: task.id(),
            available: labeled.len(),
            needed: labeled_target,
        });
    }
    if none_pool.len() < none_target {
        return Err(TaskGenError::InsufficientData {
            task: task.id(),
            available: none_pool.len(),
            needed: none_target,
        });
    }

    let mut rng = task_rng(cfg, &task, "sample");
    let mix = mix_by_frequency(labeled, freq, labeled_target, cfg.frequent_ratio, &mut rng);
    let mut instances = mix.instances;
    let mut none_pool = none_pool;
    use rand::seq::SliceRandom;
    none_pool.shuffle(&mut rng);
    for form in none_pool.into_iter().take(none_target) {
        instances.push(ProbingInstance::single(form, NONE_LABEL, Provenance::NoneClass));
    }

    let mut split_rng = task_rng(cfg, &task, "split");
    let label_set = collect_label_set(&instances);
    let label_counts = count_labels(&instances);
    let (train, dev, test) = stratified_split(instances, cfg.splits, &mut split_rng);

    let mut meta = DatasetMeta::new(&task, cfg);
    meta.label_counts = label_counts;
    meta.ambiguity_removed = ambiguity_removed;
    meta.frequent = mix.frequent;
    meta.rare = mix.rare;
    meta.none = none_target;
    meta.frequent_relaxed = mix.relaxed;

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

/// Generates the dataset probing how many feature values a form carries.
///
/// Forms whose interpretations disagree on the count are removed; there is
/// no None class.
pub fn generate_tagcount_task(
    entries: &[ParadigmEntry],
    freq: &FrequencyList,
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, TaskGenError> {
    let task = TaskKind::TagCount;
    let mut counts_by_form: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for entry in entries {
        counts_by_form
            .entry(&entry.form)
            .or_default()
            .insert(entry.bundle.len());
    }
    let mut labeled: Vec<(String, String)> = Vec::new();
    let mut ambiguity_removed = 0usize;
    for (form, counts) in &counts_by_form {
        if counts.len() == 1 {
            let count = counts.iter().next().expect("one count");
            labeled.push((form.to_string(), count.to_string()));
        } else {
            ambiguity_removed += 1;
        }
    }
    let mut ds = finish_unlabeled_pool(task, labeled, freq, cfg)?;
    ds.meta.ambiguity_removed = ambiguity_removed;
    Ok(ds)
}

/// The length bin for a form: character count after NFC normalization,
/// binned as 0-4, 5-8, 9-12, 13-16, 17-20 or >20.
pub fn character_bin(form: &str) -> &'static str {
    let n = nfc(form).chars().count();
    match n {
        0..=4 => "0-4",
        5..=8 => "5-8",
        9..=12 => "9-12",
        13..=16 => "13-16",
        17..=20 => "17-20",
        _ => ">20",
    }
}

/// Generates the dataset probing the length bin of a form. Every distinct
/// form is eligible; there is no ambiguity removal and no None class.
pub fn generate_characterbin_task(
    entries: &[ParadigmEntry],
    freq: &FrequencyList,
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, TaskGenError> {
    let forms: BTreeSet<&str> = entries.iter().map(|e| e.form.as_str()).collect();
    let labeled: Vec<(String, String)> = forms
        .into_iter()
        .map(|form| (form.to_string(), character_bin(form).to_string()))
        .collect();
    finish_unlabeled_pool(TaskKind::CharacterBin, labeled, freq, cfg)
}

/// Shared tail for the single-form tasks without a None class: eligibility
/// checks, frequency mixing and the stratified split.
fn finish_unlabeled_pool(
    task: TaskKind,
    labeled: Vec<(String, String)>,
    freq: &FrequencyList,
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, TaskGenError> {
    let total = cfg.splits.total();
    if labeled.len() < cfg.min_samples.max(total) {
        return Err(TaskGenError::InsufficientData {
            task: task.id(),
            available: labeled.len(),
            needed: cfg.min_samples.max(total),
        });
    }
    let distinct: BTreeSet<&str> = labeled.iter().map(|(_, l)| l.as_str()).collect();
    if distinct.len() < 2 {
        return Err(TaskGenError::DegenerateFeature {
            task: task.id(),
            label: distinct.iter().next().unwrap_or(&"").to_string(),
        });
    }

    let mut rng = task_rng(cfg, &task, "sample");
    let mix = mix_by_frequency(labeled, freq, total, cfg.frequent_ratio, &mut rng);
    let instances = mix.instances;

    let mut split_rng = task_rng(cfg, &task, "split");
    let label_set = collect_label_set(&instances);
    let label_counts = count_labels(&instances);
    let (train, dev, test) = stratified_split(instances, cfg.splits, &mut split_rng);

    let mut meta = DatasetMeta::new(&task, cfg);
    meta.label_counts = label_counts;
    meta.frequent = mix.frequent;
    meta.rare = mix.rare;
    meta.frequent_relaxed = mix.relaxed;

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
