//! Pseudoword generation and the Pseudo probing task.
//!
//! A [`SegmentGrammar`] is a chain of sub-syllabic segment bigrams (onset,
//! nucleus, coda, with start and end sentinels) counted over a syllabified
//! lexicon. Pseudowords are built by substituting segments of a real seed
//! word and keeping only candidates that look like words of the language:
//! same segment count, same letter length, transition counts close to the
//! seed's, most segments shared, and crucially not a real word.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::{Syllable, SyllabifiedWord};
use crate::schema::LanguageConfig;
use crate::taskgen::{
    collect_label_set, count_labels, stratified_split, task_rng, DatasetMeta, ProbingDataset,
    ProbingInstance, Provenance, TaskGenError, TaskKind,
};

/// Label of the lexicon half of the Pseudo task.
pub const REAL_LABEL: &str = "Real";

/// Label of the generated half of the Pseudo task.
pub const PSEUDO_LABEL: &str = "Pseudo";

/// Position of a segment inside its syllable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotKind {
    Onset,
    Nucleus,
    Coda,
}

/// A node of the bigram chain: a segment in its syllable position, or one
/// of the word boundary sentinels. Empty onsets and codas are nodes too;
/// they carry phonotactic information.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChainNode {
    Start,
    Segment(SlotKind, String),
    End,
}

impl ChainNode {
    fn segment(kind: SlotKind, text: &str) -> ChainNode {
        ChainNode::Segment(kind, text.to_string())
    }
}

/// The chain for a syllable sequence: start sentinel, then onset, nucleus
/// and coda of every syllable, then the end sentinel.
pub fn chain_nodes(syllables: &[Syllable]) -> Vec<ChainNode> {
    let mut nodes = Vec::with_capacity(syllables.len() * 3 + 2);
    nodes.push(ChainNode::Start);
    for syllable in syllables {
        nodes.push(ChainNode::segment(SlotKind::Onset, &syllable.onset));
        nodes.push(ChainNode::segment(SlotKind::Nucleus, &syllable.nucleus));
        nodes.push(ChainNode::segment(SlotKind::Coda, &syllable.coda));
    }
    nodes.push(ChainNode::End);
    nodes
}

/// Problems building a segment grammar.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PseudoGenError {
    #[error("cannot build a segment grammar from an empty lexicon")]
    EmptyLexicon,
}

/// Bigram counts over sub-syllabic segments, plus the word list and the
/// per-position segment inventory they were counted from.
#[derive(Debug, Clone)]
pub struct SegmentGrammar {
    transitions: BTreeMap<ChainNode, BTreeMap<ChainNode, u64>>,
    lexicon_forms: BTreeSet<String>,
    inventory: BTreeMap<SlotKind, BTreeSet<String>>,
}

impl SegmentGrammar {
    /// How often `from` was followed by `to` in the lexicon, 0 if never.
    pub fn transition_count(&self, from: &ChainNode, to: &ChainNode) -> u64 {
        self.transitions
            .get(from)
            .and_then(|successors| successors.get(to))
            .copied()
            .unwrap_or(0)
    }

    /// All successors of a context with their counts.
    pub fn successors(&self, from: &ChainNode) -> impl Iterator<Item = (&ChainNode, u64)> {
        self.transitions
            .get(from)
            .into_iter()
            .flat_map(|successors| successors.iter().map(|(node, count)| (node, *count)))
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.lexicon_forms.contains(word)
    }

    pub fn lexicon_len(&self) -> usize {
        self.lexicon_forms.len()
    }

    /// Segments seen in one syllable position, the empty segment included
    /// where it occurred.
    pub fn inventory(&self, kind: SlotKind) -> impl Iterator<Item = &str> {
        self.inventory
            .get(&kind)
            .into_iter()
            .flat_map(|segments| segments.iter().map(String::as_str))
    }

    /// True when every consecutive bigram of the word's chain was seen.
    pub fn is_legal_chain(&self, word: &SyllabifiedWord) -> bool {
        let chain = chain_nodes(&word.syllables);
        chain
            .windows(2)
            .all(|pair| self.transition_count(&pair[0], &pair[1]) > 0)
    }
}

/// Counts segment bigrams over a syllabified lexicon.
pub fn build_grammar(lexicon: &[SyllabifiedWord]) -> Result<SegmentGrammar, PseudoGenError> {
    if lexicon.is_empty() {
        return Err(PseudoGenError::EmptyLexicon);
    }
    let mut grammar = SegmentGrammar {
        transitions: BTreeMap::new(),
        lexicon_forms: BTreeSet::new(),
        inventory: BTreeMap::new(),
    };
    for word in lexicon {
        grammar.lexicon_forms.insert(word.word.clone());
        let chain = chain_nodes(&word.syllables);
        for pair in chain.windows(2) {
            *grammar
                .transitions
                .entry(pair[0].clone())
                .or_default()
                .entry(pair[1].clone())
                .or_insert(0) += 1;
        }
        for node in chain {
            if let ChainNode::Segment(kind, text) = node {
                grammar.inventory.entry(kind).or_default().insert(text);
            }
        }
    }
    Ok(grammar)
}

/// Settings for the pseudoword search.
#[derive(Debug, Clone)]
pub struct PseudoConstraints {
    /// Candidates kept per seed word.
    pub max_candidates: usize,
    /// Half-width, in log10 decades, of the allowed gap between a candidate
    /// transition count and the seed's count at the same chain position.
    pub frequency_band: f64,
    /// Deterministic search budget: substitution alternatives tried per
    /// seed. `None` removes the cap.
    pub expansion_budget: Option<u64>,
    /// Optional wall-clock cap per seed. Off by default because it makes
    /// the output depend on machine speed.
    pub wall_clock_budget: Option<Duration>,
}

impl Default for PseudoConstraints {
    fn default() -> PseudoConstraints {
        PseudoConstraints {
            max_candidates: 5,
            frequency_band: 1.0,
            expansion_budget: Some(200_000),
            wall_clock_budget: None,
        }
    }
}

/// Which matching constraints a candidate satisfied. Emitted candidates
/// satisfy all five; the record exists so checks can be rerun cheaply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintRecord {
    /// Same number of non-empty sub-syllabic segments as the seed.
    pub segment_count: bool,
    /// Same number of characters as the seed.
    pub letter_length: bool,
    /// Every transition exists and its count stays within the band.
    pub transition_frequencies: bool,
    /// At least two thirds of the seed's segments kept in place.
    pub shared_segments: bool,
    /// Not a word of the lexicon.
    pub outside_lexicon: bool,
}

impl ConstraintRecord {
    pub fn all(&self) -> bool {
        self.segment_count
            && self.letter_length
            && self.transition_frequencies
            && self.shared_segments
            && self.outside_lexicon
    }
}

/// One generated pseudoword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoCandidate {
    pub word: String,
    /// The real word the candidate was derived from.
    pub seed: String,
    /// Candidate syllables; their concatenation is `word`.
    pub syllables: Vec<Syllable>,
    /// How many segments were substituted.
    pub substitutions: usize,
    pub matched_constraints: ConstraintRecord,
}

impl PseudoCandidate {
    /// Non-empty sub-syllabic segments in order.
    pub fn segments(&self) -> Vec<&str> {
        self.syllables
            .iter()
            .flat_map(|s| [s.onset.as_str(), s.nucleus.as_str(), s.coda.as_str()])
            .filter(|segment| !segment.is_empty())
            .collect()
    }
}

/// Counts slot positions where seed and candidate carry the same non-empty
/// segment.
pub fn shared_segments(seed: &SyllabifiedWord, candidate: &[Syllable]) -> usize {
    seed.syllables
        .iter()
        .zip(candidate)
        .map(|(a, b)| {
            [
                (&a.onset, &b.onset),
                (&a.nucleus, &b.nucleus),
                (&a.coda, &b.coda),
            ]
            .iter()
            .filter(|(x, y)| !x.is_empty() && x == y)
            .count()
        })
        .sum()
}

/// Minimum number of segments a candidate must share with its seed.
pub fn shared_threshold(segment_count: usize) -> usize {
    (2 * segment_count).div_ceil(3)
}

/// Recomputes the full constraint record of a candidate against its seed.
/// The search calls this before emitting; it also serves as an independent
/// re-check of generated output.
pub fn check_candidate(
    grammar: &SegmentGrammar,
    seed: &SyllabifiedWord,
    candidate: &[Syllable],
    frequency_band: f64,
) -> ConstraintRecord {
    let word: String = candidate.iter().map(Syllable::text).collect();
    let candidate_word = SyllabifiedWord {
        word: word.clone(),
        syllables: candidate.to_vec(),
    };

    let seed_chain = chain_nodes(&seed.syllables);
    let cand_chain = chain_nodes(candidate);
    let transition_frequencies = seed_chain.len() == cand_chain.len()
        && seed_chain
            .windows(2)
            .zip(cand_chain.windows(2))
            .all(|(s, c)| {
                let seed_count = grammar.transition_count(&s[0], &s[1]);
                let cand_count = grammar.transition_count(&c[0], &c[1]);
                seed_count > 0
                    && cand_count > 0
                    && ((cand_count as f64).log10() - (seed_count as f64).log10()).abs()
                        <= frequency_band
            });

    ConstraintRecord {
        segment_count: candidate_word.segment_count() == seed.segment_count(),
        letter_length: candidate_word.char_len() == seed.char_len(),
        transition_frequencies,
        shared_segments: shared_segments(seed, candidate) >= shared_threshold(seed.segment_count()),
        outside_lexicon: !grammar.contains_word(&word),
    }
}

/// Generates pseudoword candidates for every seed, in seed order. A seed
/// may yield none; no seed yields more than `max_candidates`. The search
/// is deterministic: candidates with fewer substitutions come first, ties
/// are broken by slot position and then lexicographic segment order, and a
/// finite budget only truncates that order per seed.
pub fn generate_pseudowords(
    grammar: &SegmentGrammar,
    seeds: &[SyllabifiedWord],
    constraints: &PseudoConstraints,
) -> Vec<PseudoCandidate> {
    seeds
        .par_iter()
        .map(|seed| generate_for_seed(grammar, seed, constraints))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

struct SeedSearch<'a> {
    grammar: &'a SegmentGrammar,
    seed: &'a SyllabifiedWord,
    constraints: &'a PseudoConstraints,
    /// Flattened seed slots; substitutions are applied in place.
    slots: Vec<(SlotKind, String)>,
    /// Lexicographically sorted replacement segments per substitutable slot.
    alternatives: BTreeMap<usize, Vec<String>>,
    expansions: u64,
    deadline: Option<Instant>,
    seen: BTreeSet<String>,
    out: Vec<PseudoCandidate>,
    stopped: bool,
}

fn generate_for_seed(
    grammar: &SegmentGrammar,
    seed: &SyllabifiedWord,
    constraints: &PseudoConstraints,
) -> Vec<PseudoCandidate> {
    // A seed outside the grammar has zero-count transitions, so no
    // candidate could pass the frequency check anyway.
    if constraints.max_candidates == 0 || !grammar.is_legal_chain(seed) {
        return Vec::new();
    }
    let mut slots = Vec::with_capacity(seed.syllables.len() * 3);
    for syllable in &seed.syllables {
        slots.push((SlotKind::Onset, syllable.onset.clone()));
        slots.push((SlotKind::Nucleus, syllable.nucleus.clone()));
        slots.push((SlotKind::Coda, syllable.coda.clone()));
    }

    // Only non-empty segments are substituted: swapping a segment in or
    // out of existence would change the segment count, which the matching
    // constraints forbid.
    let substitutable: Vec<usize> = (0..slots.len())
        .filter(|&i| !slots[i].1.is_empty())
        .collect();
    let max_substitutions = substitutable.len() - shared_threshold(substitutable.len());
    if max_substitutions == 0 {
        return Vec::new();
    }

    let mut alternatives = BTreeMap::new();
    for &slot in &substitutable {
        let (kind, original) = &slots[slot];
        let options: Vec<String> = grammar
            .inventory(*kind)
            .filter(|segment| !segment.is_empty() && *segment != original.as_str())
            .map(str::to_string)
            .collect();
        alternatives.insert(slot, options);
    }

    let mut search = SeedSearch {
        grammar,
        seed,
        constraints,
        slots,
        alternatives,
        expansions: 0,
        deadline: constraints.wall_clock_budget.map(|budget| Instant::now() + budget),
        seen: BTreeSet::new(),
        out: Vec::new(),
        stopped: false,
    };
    for count in 1..=max_substitutions {
        for combo in substitutable.iter().copied().combinations(count) {
            search.try_combo(&combo, 0);
            if search.stopped {
                return search.out;
            }
        }
    }
    search.out
}

impl SeedSearch<'_> {
    fn try_combo(&mut self, combo: &[usize], depth: usize) {
        if depth == combo.len() {
            self.evaluate_leaf(combo.len());
            return;
        }
        let slot = combo[depth];
        for choice in 0..self.alternatives[&slot].len() {
            self.expansions += 1;
            if let Some(budget) = self.constraints.expansion_budget {
                if self.expansions > budget {
                    self.stopped = true;
                    return;
                }
            }
            if let Some(deadline) = self.deadline {
                if Instant::now() > deadline {
                    self.stopped = true;
                    return;
                }
            }
            let replacement = self.alternatives[&slot][choice].clone();
            let original = std::mem::replace(&mut self.slots[slot].1, replacement);
            self.try_combo(combo, depth + 1);
            self.slots[slot].1 = original;
            if self.stopped {
                return;
            }
        }
    }

    fn evaluate_leaf(&mut self, substitutions: usize) {
        let syllables: Vec<Syllable> = self
            .slots
            .chunks(3)
            .map(|chunk| Syllable {
                onset: chunk[0].1.clone(),
                nucleus: chunk[1].1.clone(),
                coda: chunk[2].1.clone(),
            })
            .collect();
        let record = check_candidate(
            self.grammar,
            self.seed,
            &syllables,
            self.constraints.frequency_band,
        );
        if !record.all() {
            return;
        }
        let word: String = syllables.iter().map(Syllable::text).collect();
        if !self.seen.insert(word.clone()) {
            return;
        }
        self.out.push(PseudoCandidate {
            word,
            seed: self.seed.word.clone(),
            syllables,
            substitutions,
            matched_constraints: record,
        });
        if self.out.len() >= self.constraints.max_candidates {
            self.stopped = true;
        }
    }
}

/// Generates the Real/Pseudo dataset: half sampled lexicon words, half
/// pseudowords derived from them (the first candidate of each seed, where
/// one exists). The halves are exactly equal, so the majority baseline of
/// the task sits at 50 percent.
pub fn generate_pseudo_task(
    lexicon: &[SyllabifiedWord],
    grammar: &SegmentGrammar,
    cfg: &LanguageConfig,
    n_seeds: usize,
) -> Result<ProbingDataset, TaskGenError> {
    let task = TaskKind::Pseudo;
    let total = cfg.splits.total();
    let needed = cfg.min_samples.max(total);
    let pseudo_target = total / 2;
    let real_target = total - pseudo_target;

    let mut distinct: BTreeMap<&str, &SyllabifiedWord> = BTreeMap::new();
    for word in lexicon {
        distinct.entry(word.word.as_str()).or_insert(word);
    }
    let mut pool: Vec<&SyllabifiedWord> = distinct.into_values().collect();
    let mut rng = task_rng(cfg, &task, "seeds");
    pool.shuffle(&mut rng);
    let seeds: Vec<SyllabifiedWord> = pool.into_iter().take(n_seeds).cloned().collect();

    // One candidate per seed is enough here, and by the deterministic
    // search order it is exactly the first of the full candidate list.
    let constraints = PseudoConstraints {
        max_candidates: 1,
        ..PseudoConstraints::default()
    };
    let mut seen = BTreeSet::new();
    let mut pseudo_pool: Vec<String> = generate_pseudowords(grammar, &seeds, &constraints)
        .into_iter()
        .filter(|candidate| seen.insert(candidate.word.clone()))
        .map(|candidate| candidate.word)
        .collect();

    let available = seeds.len() + pseudo_pool.len();
    if available < needed || pseudo_pool.len() < pseudo_target || seeds.len() < real_target {
        return Err(TaskGenError::InsufficientData {
            task: task.id(),
            available,
            needed,
        });
    }

    let mut real_pool: Vec<String> = seeds.into_iter().map(|seed| seed.word).collect();
    let mut sample_rng = task_rng(cfg, &task, "sample");
    real_pool.shuffle(&mut sample_rng);
    pseudo_pool.shuffle(&mut sample_rng);

    let mut instances: Vec<ProbingInstance> = Vec::with_capacity(total);
    for word in real_pool.into_iter().take(real_target) {
        instances.push(ProbingInstance::single(word, REAL_LABEL, Provenance::Corpus));
    }
    for word in pseudo_pool.into_iter().take(pseudo_target) {
        instances.push(ProbingInstance::single(
            word,
            PSEUDO_LABEL,
            Provenance::Generated,
        ));
    }

    let label_set = collect_label_set(&instances);
    let label_counts = count_labels(&instances);
    let mut split_rng = task_rng(cfg, &task, "split");
    let (train, dev, test) = stratified_split(instances, cfg.splits, &mut split_rng);

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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::SplitSizes;
    use crate::taskgen::InstanceKind;

    fn syllable(onset: &str, nucleus: &str, coda: &str) -> Syllable {
        Syllable {
            onset: onset.to_string(),
            nucleus: nucleus.to_string(),
            coda: coda.to_string(),
        }
    }

    fn entry(parts: &[(&str, &str, &str)]) -> SyllabifiedWord {
        let syllables: Vec<Syllable> = parts
            .iter()
            .map(|(o, n, c)| syllable(o, n, c))
            .collect();
        let word: String = syllables.iter().map(Syllable::text).collect();
        SyllabifiedWord { word, syllables }
    }

    /// Every CVC combination over two onsets, two nuclei and two codas.
    fn cvc_lexicon() -> Vec<SyllabifiedWord> {
        let mut lexicon = Vec::new();
        for onset in ["k", "b"] {
            for nucleus in ["a", "i"] {
                for coda in ["t", "p"] {
                    lexicon.push(entry(&[(onset, nucleus, coda)]));
                }
            }
        }
        lexicon
    }

    /// A sparse CVCV language; most segment recombinations are not words.
    fn cvcv_lexicon() -> Vec<SyllabifiedWord> {
        let onsets = ["b", "c", "d", "f", "g", "h", "j", "k"];
        let nuclei = ["a", "e", "i", "o"];
        let mut lexicon = Vec::new();
        for (i1, o1) in onsets.iter().enumerate() {
            for (j1, n1) in nuclei.iter().enumerate() {
                for (i2, o2) in onsets.iter().enumerate() {
                    for (j2, n2) in nuclei.iter().enumerate() {
                        if (i1 + j1 + i2 + j2) % 3 == 0 {
                            lexicon.push(entry(&[(o1, n1, ""), (o2, n2, "")]));
                        }
                    }
                }
            }
        }
        lexicon
    }

    // Grammar construction

    #[test]
    fn grammar_counts_match_a_hand_count() {
        let kedi = entry(&[("k", "e", ""), ("d", "i", "")]);
        let grammar = build_grammar(std::slice::from_ref(&kedi)).unwrap();
        let onset = |s| ChainNode::segment(SlotKind::Onset, s);
        let nucleus = |s| ChainNode::segment(SlotKind::Nucleus, s);
        let coda = |s| ChainNode::segment(SlotKind::Coda, s);

        assert_eq!(grammar.transition_count(&ChainNode::Start, &onset("k")), 1);
        assert_eq!(grammar.transition_count(&onset("k"), &nucleus("e")), 1);
        assert_eq!(grammar.transition_count(&nucleus("e"), &coda("")), 1);
        assert_eq!(grammar.transition_count(&coda(""), &onset("d")), 1);
        assert_eq!(grammar.transition_count(&onset("d"), &nucleus("i")), 1);
        assert_eq!(grammar.transition_count(&nucleus("i"), &coda("")), 1);
        assert_eq!(grammar.transition_count(&coda(""), &ChainNode::End), 1);
        assert_eq!(grammar.transition_count(&onset("d"), &nucleus("e")), 0);
        assert!(grammar.is_legal_chain(&kedi));
    }

    #[test]
    fn empty_lexicon_is_rejected() {
        assert!(matches!(build_grammar(&[]), Err(PseudoGenError::EmptyLexicon)));
    }

    #[test]
    fn every_lexicon_word_has_a_legal_chain() {
        let lexicon = cvcv_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        for word in &lexicon {
            assert!(grammar.is_legal_chain(word), "{}", word.word);
        }
    }

    // Candidate search

    #[test]
    fn complete_neighborhood_yields_no_candidates() {
        // Every single substitution of "kat" is itself a word, and two
        // substitutions would break the two-thirds sharing rule.
        let lexicon = cvc_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        let candidates =
            generate_pseudowords(&grammar, &lexicon[..1], &PseudoConstraints::default());
        assert_eq!(lexicon[0].word, "kat");
        assert!(candidates.is_empty());
    }

    #[test]
    fn gap_in_the_lexicon_becomes_the_candidate() {
        let mut lexicon = cvc_lexicon();
        lexicon.retain(|w| w.word != "bip");
        let grammar = build_grammar(&lexicon).unwrap();
        let seed = lexicon.iter().find(|w| w.word == "bit").unwrap().clone();
        let candidates = generate_pseudowords(&grammar, &[seed], &PseudoConstraints::default());
        assert_eq!(candidates.len(), 1);
        assert_eq!(candidates[0].word, "bip");
        assert_eq!(candidates[0].seed, "bit");
        assert_eq!(candidates[0].substitutions, 1);
        assert_eq!(candidates[0].segments(), vec!["b", "i", "p"]);
        assert!(candidates[0].matched_constraints.all());
    }

    #[test]
    fn candidates_pass_an_independent_recheck() {
        let lexicon = cvcv_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        let candidates =
            generate_pseudowords(&grammar, &lexicon, &PseudoConstraints::default());
        assert!(candidates.len() > 100, "search found {}", candidates.len());

        let by_word: BTreeMap<&str, &SyllabifiedWord> =
            lexicon.iter().map(|w| (w.word.as_str(), w)).collect();
        let mut per_seed: BTreeMap<&str, usize> = BTreeMap::new();
        for candidate in &candidates {
            *per_seed.entry(candidate.seed.as_str()).or_insert(0) += 1;
            let seed = by_word[candidate.seed.as_str()];

            let joined: String = candidate.syllables.iter().map(Syllable::text).collect();
            assert_eq!(joined, candidate.word);
            assert!(!grammar.contains_word(&candidate.word), "{}", candidate.word);
            assert_eq!(candidate.word.chars().count(), seed.char_len());
            assert_eq!(candidate.segments().len(), seed.segment_count());
            let chain = chain_nodes(&candidate.syllables);
            for pair in chain.windows(2) {
                assert!(grammar.transition_count(&pair[0], &pair[1]) > 0);
            }
            assert!(
                shared_segments(seed, &candidate.syllables)
                    >= shared_threshold(seed.segment_count())
            );
            assert!(check_candidate(&grammar, seed, &candidate.syllables, 1.0).all());
        }
        for (seed, count) in per_seed {
            assert!(count <= 5, "{seed} produced {count} candidates");
        }
    }

    #[test]
    fn fewer_substitutions_come_first() {
        // Three-syllable words have nine non-empty segments, which allows
        // up to three substitutions per candidate. Only a third of the
        // onset combinations are words, so gaps exist at every depth.
        let mut lexicon = Vec::new();
        for (i1, o1) in ["b", "d", "g"].iter().enumerate() {
            for (i2, o2) in ["k", "l", "m"].iter().enumerate() {
                for (i3, o3) in ["n", "r", "s"].iter().enumerate() {
                    if (i1 + i2 + i3) % 3 == 0 {
                        lexicon.push(entry(&[(o1, "a", "t"), (o2, "e", "p"), (o3, "i", "z")]));
                    }
                }
            }
        }
        let grammar = build_grammar(&lexicon).unwrap();
        let constraints = PseudoConstraints {
            max_candidates: 50,
            ..PseudoConstraints::default()
        };
        let candidates = generate_pseudowords(&grammar, &lexicon[..1], &constraints);
        assert!(!candidates.is_empty());
        for pair in candidates.windows(2) {
            assert!(pair[0].substitutions <= pair[1].substitutions);
        }
        assert!(candidates.iter().any(|c| c.substitutions > 1));
    }

    #[test]
    fn budgeted_output_is_a_prefix_of_the_unbudgeted_order() {
        let lexicon = cvcv_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        let unbudgeted = PseudoConstraints {
            expansion_budget: None,
            ..PseudoConstraints::default()
        };
        for seed in lexicon.iter().take(12) {
            let full = generate_pseudowords(&grammar, std::slice::from_ref(seed), &unbudgeted);
            for budget in [1, 3, 7, 1000] {
                let capped = PseudoConstraints {
                    expansion_budget: Some(budget),
                    ..PseudoConstraints::default()
                };
                let cut = generate_pseudowords(&grammar, std::slice::from_ref(seed), &capped);
                assert!(cut.len() <= full.len());
                assert_eq!(cut, full[..cut.len()], "budget {budget} on {}", seed.word);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let lexicon = cvcv_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        let first = generate_pseudowords(&grammar, &lexicon, &PseudoConstraints::default());
        let second = generate_pseudowords(&grammar, &lexicon, &PseudoConstraints::default());
        assert_eq!(first, second);
    }

    // The Pseudo task

    fn pseudo_cfg() -> LanguageConfig {
        let mut cfg = LanguageConfig::new("tr", 99);
        cfg.splits = SplitSizes::new(70, 20, 10);
        cfg.min_samples = 100;
        cfg
    }

    #[test]
    fn pseudo_task_is_balanced_in_every_split() {
        let lexicon = cvcv_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        let ds = generate_pseudo_task(&lexicon, &grammar, &pseudo_cfg(), 200).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.label_set, vec![PSEUDO_LABEL, REAL_LABEL]);
        assert_eq!(ds.meta.label_counts[PSEUDO_LABEL], 50);
        assert_eq!(ds.meta.label_counts[REAL_LABEL], 50);

        let lexicon_words: BTreeSet<&str> =
            lexicon.iter().map(|w| w.word.as_str()).collect();
        for split in [&ds.train, &ds.dev, &ds.test] {
            let real = split.iter().filter(|i| i.label == REAL_LABEL).count();
            assert_eq!(real * 2, split.len(), "each split is half real");
        }
        for instance in ds.instances() {
            let InstanceKind::SingleForm { form } = &instance.kind else {
                panic!("pseudo task instances are single forms");
            };
            match instance.label.as_str() {
                REAL_LABEL => assert!(lexicon_words.contains(form.as_str())),
                PSEUDO_LABEL => assert!(!lexicon_words.contains(form.as_str())),
                other => panic!("unexpected label {other}"),
            }
        }
    }

    #[test]
    fn pseudo_task_is_deterministic() {
        let lexicon = cvcv_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        let first = generate_pseudo_task(&lexicon, &grammar, &pseudo_cfg(), 200).unwrap();
        let second = generate_pseudo_task(&lexicon, &grammar, &pseudo_cfg(), 200).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn tiny_lexicon_is_insufficient() {
        let lexicon = cvc_lexicon();
        let grammar = build_grammar(&lexicon).unwrap();
        assert!(matches!(
            generate_pseudo_task(&lexicon, &grammar, &pseudo_cfg(), 200),
            Err(TaskGenError::InsufficientData { .. })
        ));
    }
}
