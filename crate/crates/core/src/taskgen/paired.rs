//! Paired tasks: which dimension two forms agree on (SameFeat) and the one
//! dimension on which two forms of a lemma differ (OddFeat).
//!
//! Ambiguous forms are deliberately kept; each pair member stands for one
//! sampled interpretation. Pair identity is the ordered form tuple, with
//! mirrored duplicates removed, and oversized labels are capped at twice
//! the mean label count before splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use super::{
    collect_label_set, count_labels, stratified_split, task_rng, DatasetMeta, ProbingDataset,
    ProbingInstance, TaskGenError, TaskKind, LEMMA_LABEL,
};
use crate::ingest::ParadigmEntry;
use crate::schema::{bundle_diff, bundle_shared, FeatureDimension, LanguageConfig};

/// Words sampled per half of a value group in the SameFeat steps.
const SAMEFEAT_SAMPLE: usize = 500;

/// Words sampled per lemma group and per half of a bundle group in the
/// OddFeat steps.
const ODDFEAT_SAMPLE: usize = 100;

/// Generates the dataset probing which feature two forms share.
///
/// For every non-excluded dimension, entries carrying it are grouped by
/// value; each group is halved and sampled, and a cross pair is kept with
/// the dimension as its label when that dimension is the only one the two
/// bundles agree on. A second step pairs forms of the same lemma whose
/// bundles agree on nothing, labeled `Lemma`.
pub fn generate_samefeat_task(
    entries: &[ParadigmEntry],
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, TaskGenError> {
    let task = TaskKind::SameFeat;
    let excluded = &cfg.excluded_pair_dimensions;
    let mut rng = task_rng(cfg, &task, "pairs");
    let mut pairs: Vec<ProbingInstance> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    let mut dimensions: BTreeSet<FeatureDimension> = BTreeSet::new();
    for entry in entries {
        dimensions.extend(entry.bundle.dimensions().cloned());
    }
    dimensions.retain(|d| !excluded.contains(d));

    for dimension in &dimensions {
        let mut by_value: BTreeMap<&str, Vec<&ParadigmEntry>> = BTreeMap::new();
        for entry in entries {
            if let Some(tag) = entry.bundle.get(dimension) {
                by_value.entry(tag).or_default().push(entry);
            }
        }
        for group in by_value.values_mut() {
            for (a, b) in cross_sample(group, SAMEFEAT_SAMPLE, &mut rng) {
                if a.form == b.form {
                    continue;
                }
                let shared = bundle_shared(&a.bundle, &b.bundle, excluded);
                if shared.len() == 1 && shared.contains(dimension) {
                    push_pair(&mut pairs, &mut seen, a, b, dimension.name());
                }
            }
        }
    }

    // Lemma step: same lemma, nothing else in common.
    let mut by_lemma: BTreeMap<&str, Vec<&ParadigmEntry>> = BTreeMap::new();
    for entry in entries {
        by_lemma.entry(&entry.lemma).or_default().push(entry);
    }
    for group in by_lemma.values_mut() {
        for (a, b) in cross_sample(group, SAMEFEAT_SAMPLE, &mut rng) {
            if a.form == b.form {
                continue;
            }
            if bundle_shared(&a.bundle, &b.bundle, excluded).is_empty() {
                push_pair(&mut pairs, &mut seen, a, b, LEMMA_LABEL);
            }
        }
    }

    finish_pairs(task, pairs, cfg, &mut rng)
}

/// Generates the dataset probing the one feature on which two forms of a
/// lemma differ.
///
/// Within each lemma group, sampled entries are compared pairwise and a
/// pair is kept when the bundles disagree on exactly one non-excluded
/// dimension, counting dimensions present on one side only. A second step
/// groups entries by their exact bundle and pairs different lemmas with
/// identical features, labeled `Lemma`.
pub fn generate_oddfeat_task(
    entries: &[ParadigmEntry],
    cfg: &LanguageConfig,
) -> Result<ProbingDataset, TaskGenError> {
    let task = TaskKind::OddFeat;
    let excluded = &cfg.excluded_pair_dimensions;
    let mut rng = task_rng(cfg, &task, "pairs");
    let mut pairs: Vec<ProbingInstance> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    let mut by_lemma: BTreeMap<&str, Vec<&ParadigmEntry>> = BTreeMap::new();
    for entry in entries {
        by_lemma.entry(&entry.lemma).or_default().push(entry);
    }
    for group in by_lemma.values_mut() {
        group.shuffle(&mut rng);
        let sample = &group[..group.len().min(ODDFEAT_SAMPLE)];
        for (i, a) in sample.iter().enumerate() {
            for b in &sample[i + 1..] {
                if a.form == b.form {
                    continue;
                }
                let diff = bundle_diff(&a.bundle, &b.bundle, excluded);
                if diff.len() == 1 {
                    let dimension = diff.into_iter().next().expect("one dimension");
                    push_pair(&mut pairs, &mut seen, a, b, dimension.name());
                }
            }
        }
    }

    // Lemma step: identical bundles on different lemmas.
    let mut by_bundle: BTreeMap<String, Vec<&ParadigmEntry>> = BTreeMap::new();
    for entry in entries {
        by_bundle
            .entry(entry.bundle.canonical_string())
            .or_default()
            .push(entry);
    }
    for group in by_bundle.values_mut() {
        for (a, b) in cross_sample(group, ODDFEAT_SAMPLE, &mut rng) {
            if a.form == b.form || a.lemma == b.lemma {
                continue;
            }
            push_pair(&mut pairs, &mut seen, a, b, LEMMA_LABEL);
        }
    }

    finish_pairs(task, pairs, cfg, &mut rng)
}

/// Shuffles a group, halves it and crosses a sample of each half.
fn cross_sample<'e>(
    group: &mut Vec<&'e ParadigmEntry>,
    k: usize,
    rng: &mut ChaCha20Rng,
) -> Vec<(&'e ParadigmEntry, &'e ParadigmEntry)> {
    if group.len() < 2 {
        return Vec::new();
    }
    group.shuffle(rng);
    let mid = group.len() / 2;
    let first = &group[..mid.min(k)];
    let second = &group[mid..(mid + k).min(group.len())];
    let mut out = Vec::with_capacity(first.len() * second.len());
    for a in first {
        for b in second {
            out.push((*a, *b));
        }
    }
    out
}

fn push_pair(
    pairs: &mut Vec<ProbingInstance>,
    seen: &mut HashSet<(String, String)>,
    a: &ParadigmEntry,
    b: &ParadigmEntry,
    label: &str,
) {
    let key = if a.form <= b.form {
        (a.form.clone(), b.form.clone())
    } else {
        (b.form.clone(), a.form.clone())
    };
    if seen.insert(key) {
        pairs.push(ProbingInstance::pair(&a.form, &b.form, label));
    }
}

/// Caps oversized labels, checks the pool size and splits.
fn finish_pairs(
    task: TaskKind,
    pairs: Vec<ProbingInstance>,
    cfg: &LanguageConfig,
    rng: &mut ChaCha20Rng,
) -> Result<ProbingDataset, TaskGenError> {
    let mut by_label: BTreeMap<String, Vec<ProbingInstance>> = BTreeMap::new();
    for pair in pairs {
        by_label.entry(pair.label.clone()).or_default().push(pair);
    }
    let mut rebalance_removed: BTreeMap<String, usize> = BTreeMap::new();
    let mut pairs: Vec<ProbingInstance> = Vec::new();
    if !by_label.is_empty() {
        // One label (Number, typically) can dwarf the rest; cap each label
        // at twice the mean label count.
        let total: usize = by_label.values().map(Vec::len).sum();
        let cap = ((2.0 * total as f64) / by_label.len() as f64).ceil() as usize;
        for (label, mut group) in by_label {
            if group.len() > cap {
                group.shuffle(rng);
                rebalance_removed.insert(label, group.len() - cap);
                group.truncate(cap);
            }
            pairs.extend(group);
        }
    }

    let total = cfg.splits.total();
    let needed = cfg.min_samples.max(total);
    if pairs.len() < needed {
        return Err(TaskGenError::InsufficientData {
            task: task.id(),
            available: pairs.len(),
            needed,
        });
    }
    let distinct: BTreeSet<&str> = pairs.iter().map(|p| p.label.as_str()).collect();
    if distinct.len() < 2 {
        return Err(TaskGenError::DegenerateFeature {
            task: task.id(),
            label: distinct.iter().next().unwrap_or(&"").to_string(),
        });
    }

    pairs.shuffle(rng);
    pairs.truncate(total);

    let label_set = collect_label_set(&pairs);
    let label_counts = count_labels(&pairs);
    let (train, dev, test) = stratified_split(pairs, cfg.splits, rng);

    let mut meta = DatasetMeta::new(&task, cfg);
    meta.label_counts = label_counts;
    meta.rebalance_removed = rebalance_removed;

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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{parse_bundle, SplitSizes, TagCatalog};
    use crate::taskgen::InstanceKind;
    use std::collections::HashMap;

    fn entry(lemma: &str, form: &str, raw: &str) -> ParadigmEntry {
        ParadigmEntry {
            lemma: lemma.to_string(),
            form: form.to_string(),
            bundle: parse_bundle(raw, TagCatalog::builtin()).unwrap(),
        }
    }

    fn excluded_pos() -> BTreeSet<FeatureDimension> {
        [FeatureDimension::Pos].into_iter().collect()
    }

    #[test]
    fn published_samefeat_pairs_satisfy_their_conditions() {
        // Same lemma, nothing shared beyond POS: the Lemma condition.
        let a = entry("taşımak", "taşımam", "V;1SG;PRS;NEG");
        let b = entry("taşımak", "taşıdılar", "V;3PL;PST");
        assert!(bundle_shared(&a.bundle, &b.bundle, &excluded_pos()).is_empty());

        // Only the possessor marker agrees: labeled Possession.
        let a = entry("sarımsak", "sarımsaklarım", "N;PL;PSS1S;NOM");
        let b = entry("cümle", "cümlemde", "N;SG;PSS1S;LOC");
        let shared = bundle_shared(&a.bundle, &b.bundle, &excluded_pos());
        assert_eq!(shared.len(), 1);
        assert!(shared.contains(&FeatureDimension::Possession));
    }

    #[test]
    fn published_oddfeat_pairs_satisfy_their_conditions() {
        let excl = excluded_pos();
        // Negative future vs. its positive twin: polarity alone differs.
        let a = entry("istemek", "istemeyecek", "V;3SG;FUT;NEG");
        let b = entry("istemek", "isteyecek", "V;3SG;FUT");
        let diff = bundle_diff(&a.bundle, &b.bundle, &excl);
        assert_eq!(diff.len(), 1);
        assert!(diff.contains(&FeatureDimension::Polarity));

        // Nominative vs. dative plural: case alone differs.
        let a = entry("seçenek", "seçenekler", "N;NOM;PL");
        let b = entry("seçenek", "seçeneklere", "N;DAT;PL");
        let diff = bundle_diff(&a.bundle, &b.bundle, &excl);
        assert_eq!(diff.len(), 1);
        assert!(diff.contains(&FeatureDimension::Case));

        // Identical bundles on different lemmas: the Lemma condition.
        let a = entry("iyileşmek", "iyileşiyorlardı", "V;3PL;PST;PROG");
        let b = entry("gezmek", "geziyorlardı", "V;3PL;PST;PROG");
        assert_eq!(a.bundle, b.bundle);
        assert_ne!(a.lemma, b.lemma);
    }

    /// Paradigms with unique forms so that every emitted label can be
    /// recomputed from the entries without interpretation guessing.
    fn paradigm_fixture() -> Vec<ParadigmEntry> {
        let mut entries = Vec::new();
        for i in 0..120 {
            for case in ["NOM", "DAT", "ACC"] {
                for number in ["SG", "PL"] {
                    entries.push(entry(
                        &format!("lem{i}"),
                        &format!("w{i}{}{}", case.to_lowercase(), number.to_lowercase()),
                        &format!("N;{case};{number}"),
                    ));
                }
            }
        }
        entries
    }

    fn pair_cfg() -> LanguageConfig {
        let mut cfg = LanguageConfig::new("xx", 17);
        cfg.splits = SplitSizes::new(70, 20, 10);
        cfg.min_samples = 100;
        cfg
    }

    #[test]
    fn oddfeat_labels_survive_independent_recomputation() {
        let entries = paradigm_fixture();
        let cfg = pair_cfg();
        let ds = generate_oddfeat_task(&entries, &cfg).unwrap();
        ds.validate().unwrap();
        let by_form: HashMap<&str, &ParadigmEntry> =
            entries.iter().map(|e| (e.form.as_str(), e)).collect();
        for instance in ds.instances() {
            let InstanceKind::FormPair { first, second } = &instance.kind else {
                panic!("pair task");
            };
            let a = by_form[first.as_str()];
            let b = by_form[second.as_str()];
            if instance.label == LEMMA_LABEL {
                assert_eq!(a.bundle, b.bundle);
                assert_ne!(a.lemma, b.lemma);
            } else {
                let diff = bundle_diff(&a.bundle, &b.bundle, &cfg.excluded_pair_dimensions);
                assert_eq!(diff.len(), 1, "{first} / {second}");
                assert_eq!(diff.iter().next().unwrap().name(), instance.label);
                assert_eq!(a.lemma, b.lemma, "step one stays within a lemma");
            }
        }
    }

    #[test]
    fn samefeat_labels_survive_independent_recomputation() {
        let entries = paradigm_fixture();
        let cfg = pair_cfg();
        let ds = generate_samefeat_task(&entries, &cfg).unwrap();
        ds.validate().unwrap();
        let by_form: HashMap<&str, &ParadigmEntry> =
            entries.iter().map(|e| (e.form.as_str(), e)).collect();
        for instance in ds.instances() {
            let InstanceKind::FormPair { first, second } = &instance.kind else {
                panic!("pair task");
            };
            let a = by_form[first.as_str()];
            let b = by_form[second.as_str()];
            let shared = bundle_shared(&a.bundle, &b.bundle, &cfg.excluded_pair_dimensions);
            if instance.label == LEMMA_LABEL {
                assert!(shared.is_empty());
                assert_eq!(a.lemma, b.lemma);
            } else {
                assert_eq!(shared.len(), 1, "{first} / {second}");
                assert_eq!(shared.iter().next().unwrap().name(), instance.label);
            }
        }
    }

    #[test]
    fn pair_identity_has_no_mirrored_duplicates() {
        let entries = paradigm_fixture();
        let cfg = pair_cfg();
        for ds in [
            generate_samefeat_task(&entries, &cfg).unwrap(),
            generate_oddfeat_task(&entries, &cfg).unwrap(),
        ] {
            let mut seen = HashSet::new();
            for instance in ds.instances() {
                let InstanceKind::FormPair { first, second } = &instance.kind else {
                    unreachable!()
                };
                let key = if first <= second {
                    (first.clone(), second.clone())
                } else {
                    (second.clone(), first.clone())
                };
                assert!(seen.insert(key), "duplicate pair {first} / {second}");
            }
        }
    }

    #[test]
    fn oversized_labels_are_capped_at_twice_the_mean() {
        let entries = paradigm_fixture();
        let cfg = pair_cfg();
        let ds = generate_oddfeat_task(&entries, &cfg).unwrap();
        // The identical-bundle groups are large, so the Lemma label is the
        // one that gets capped here.
        assert!(ds.meta.rebalance_removed.contains_key(LEMMA_LABEL));
    }

    #[test]
    fn paired_generation_is_deterministic() {
        let entries = paradigm_fixture();
        let cfg = pair_cfg();
        assert_eq!(
            generate_samefeat_task(&entries, &cfg).unwrap(),
            generate_samefeat_task(&entries, &cfg).unwrap()
        );
        assert_eq!(
            generate_oddfeat_task(&entries, &cfg).unwrap(),
            generate_oddfeat_task(&entries, &cfg).unwrap()
        );
    }

    #[test]
    fn too_few_pairs_is_insufficient() {
        let entries = vec![
            entry("lemA", "formA1", "N;NOM;SG"),
            entry("lemA", "formA2", "N;DAT;SG"),
        ];
        let cfg = pair_cfg();
        assert!(matches!(
            generate_oddfeat_task(&entries, &cfg),
            Err(TaskGenError::InsufficientData { .. })
        ));
    }
}
