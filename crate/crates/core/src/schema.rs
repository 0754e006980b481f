//! Morphological feature bundles and the tag catalog that interprets them.
//!
//! A bundle is a set of feature values such as `N;DAT;PL;PSS2S`, with at most
//! one value per dimension (Case, Number, ...). Raw annotations arrive either
//! semicolon-separated (lexicon format) or dot-separated (table format); both
//! parse to the same structure and re-serialize to a canonical
//! dimension-sorted, semicolon-joined, uppercase string.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Applies Unicode NFC normalization. All text entering the toolkit goes
/// through this so that composed and decomposed spellings compare equal.
pub fn nfc(s: &str) -> String {
    s.nfc().collect()
}

/// A morphological dimension. The fixed variants cover the dimensions probed
/// directly; everything else (animacy, finiteness, language-specific tags)
/// lives under `Other` with a stable name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureDimension {
    Pos,
    Case,
    Gender,
    Mood,
    Number,
    Person,
    Polarity,
    Possession,
    Tense,
    Voice,
    Aspect,
    Definiteness,
    Other(String),
}

impl FeatureDimension {
    /// Display name, e.g. "POS", "Case" or the custom name of an `Other`.
    pub fn name(&self) -> &str {
        match self {
            FeatureDimension::Pos => "POS",
            FeatureDimension::Case => "Case",
            FeatureDimension::Gender => "Gender",
            FeatureDimension::Mood => "Mood",
            FeatureDimension::Number => "Number",
            FeatureDimension::Person => "Person",
            FeatureDimension::Polarity => "Polarity",
            FeatureDimension::Possession => "Possession",
            FeatureDimension::Tense => "Tense",
            FeatureDimension::Voice => "Voice",
            FeatureDimension::Aspect => "Aspect",
            FeatureDimension::Definiteness => "Definiteness",
            FeatureDimension::Other(name) => name,
        }
    }

    /// Resolves a dimension by name, case-insensitively. Unknown names
    /// become `Other`, stored uppercase so that spellings like
    /// "Animacy" and "ANIMACY" name the same dimension.
    pub fn from_name(name: &str) -> FeatureDimension {
        match name.to_ascii_lowercase().as_str() {
            "pos" => FeatureDimension::Pos,
            "case" => FeatureDimension::Case,
            "gender" => FeatureDimension::Gender,
            "mood" => FeatureDimension::Mood,
            "number" => FeatureDimension::Number,
            "person" => FeatureDimension::Person,
            "polarity" => FeatureDimension::Polarity,
            "possession" => FeatureDimension::Possession,
            "tense" => FeatureDimension::Tense,
            "voice" => FeatureDimension::Voice,
            "aspect" => FeatureDimension::Aspect,
            "definiteness" => FeatureDimension::Definiteness,
            _ => FeatureDimension::Other(name.trim().to_uppercase()),
        }
    }

    /// Dimensions that inflect verbs. Their None pools draw on nominal forms.
    pub fn is_verbal(&self) -> bool {
        matches!(
            self,
            FeatureDimension::Mood
                | FeatureDimension::Person
                | FeatureDimension::Polarity
                | FeatureDimension::Tense
                | FeatureDimension::Voice
                | FeatureDimension::Aspect
        )
    }

    /// Dimensions that inflect nominals. Their None pools draw on verb forms.
    pub fn is_nominal(&self) -> bool {
        matches!(
            self,
            FeatureDimension::Case
                | FeatureDimension::Gender
                | FeatureDimension::Number
                | FeatureDimension::Possession
                | FeatureDimension::Definiteness
        )
    }
}

impl fmt::Display for FeatureDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for FeatureDimension {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FeatureDimension {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        if name.is_empty() {
            return Err(D::Error::custom("empty feature dimension name"));
        }
        Ok(FeatureDimension::from_name(&name))
    }
}

/// One tagged value, e.g. Case:DAT. Tags are stored uppercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureValue {
    dimension: FeatureDimension,
    tag: String,
}

impl FeatureValue {
    /// Builds a value after validating the tag: non-empty, no whitespace,
    /// no semicolons. The tag is uppercased.
    pub fn new(dimension: FeatureDimension, tag: &str) -> Result<FeatureValue, BundleError> {
        let tag = nfc(tag).to_uppercase();
        if tag.is_empty() || tag.chars().any(|c| c.is_whitespace() || c == ';') {
            return Err(BundleError::InvalidTag { tag });
        }
        Ok(FeatureValue { dimension, tag })
    }

    pub fn dimension(&self) -> &FeatureDimension {
        &self.dimension
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dimension, self.tag)
    }
}

/// Problems raised while assembling or parsing a feature bundle.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BundleError {
    #[error("empty feature bundle")]
    Empty,
    #[error("invalid feature tag {tag:?}")]
    InvalidTag { tag: String },
    #[error("tags {first} and {second} both express {dimension}")]
    DuplicateDimension {
        dimension: FeatureDimension,
        first: String,
        second: String,
    },
}

/// A set of feature values with at most one value per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FeatureBundle {
    values: BTreeMap<FeatureDimension, String>,
}

impl FeatureBundle {
    /// An empty bundle, used for tokens that carry no annotation.
    pub fn empty() -> FeatureBundle {
        FeatureBundle::default()
    }

    /// Builds a bundle from values, rejecting duplicate dimensions.
    pub fn from_values<I>(values: I) -> Result<FeatureBundle, BundleError>
    where
        I: IntoIterator<Item = FeatureValue>,
    {
        let mut bundle = FeatureBundle::empty();
        for value in values {
            bundle.insert(value)?;
        }
        Ok(bundle)
    }

    /// Adds one value. A second value for an already present dimension is an
    /// error even when the tags are identical.
    pub fn insert(&mut self, value: FeatureValue) -> Result<(), BundleError> {
        if let Some(existing) = self.values.get(&value.dimension) {
            return Err(BundleError::DuplicateDimension {
                dimension: value.dimension.clone(),
                first: existing.clone(),
                second: value.tag,
            });
        }
        self.values.insert(value.dimension, value.tag);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has(&self, dimension: &FeatureDimension) -> bool {
        self.values.contains_key(dimension)
    }

    /// The tag for a dimension, if present.
    pub fn get(&self, dimension: &FeatureDimension) -> Option<&str> {
        self.values.get(dimension).map(String::as_str)
    }

    /// Convenience accessor for the part-of-speech tag.
    pub fn pos_tag(&self) -> Option<&str> {
        self.get(&FeatureDimension::Pos)
    }

    /// Iterates values in canonical order (by dimension, then tag).
    pub fn iter(&self) -> impl Iterator<Item = (&FeatureDimension, &str)> {
        self.values.iter().map(|(d, t)| (d, t.as_str()))
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &FeatureDimension> {
        self.values.keys()
    }

    /// Canonical serialization: dimension-sorted, semicolon-joined uppercase
    /// tags. Parsing this string yields back an equal bundle.
    pub fn canonical_string(&self) -> String {
        let tags: Vec<&str> = self.values.values().map(String::as_str).collect();
        tags.join(";")
    }

    /// Parses a raw annotation with the given catalog. See [`parse_bundle`].
    pub fn parse(raw: &str, catalog: &TagCatalog) -> Result<FeatureBundle, BundleError> {
        parse_bundle(raw, catalog)
    }
}

impl fmt::Display for FeatureBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

/// Parses a raw annotation string into a bundle.
///
/// Accepts the semicolon form (`N;DAT;PL`) and, when no semicolon is present,
/// the dot form (`N.Dat.Pl`). Tags are NFC-normalized, uppercased and resolved
/// through the catalog; unknown tags land on an `Other` dimension named after
/// the tag rather than being dropped. A bare person tag next to a number tag
/// fuses into an agreement value (`3` + `SG` becomes Person `3SG`), matching
/// how annotations such as `V;NEG;FUT;3;SG` are read.
pub fn parse_bundle(raw: &str, catalog: &TagCatalog) -> Result<FeatureBundle, BundleError> {
    let raw = nfc(raw);
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(BundleError::Empty);
    }
    let sep = if trimmed.contains(';') { ';' } else { '.' };
    let mut tokens: Vec<String> = trimmed
        .split(sep)
        .map(|t| t.trim().to_uppercase())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(BundleError::Empty);
    }

    // The dot form splits compound part-of-speech tags apart; rejoin V with a
    // following participle, masdar or converb marker.
    if sep == '.' {
        if let Some(vi) = tokens.iter().position(|t| t == "V") {
            if let Some(ci) = tokens
                .iter()
                .position(|t| matches!(t.as_str(), "PTCP" | "MSDR" | "CVB"))
            {
                let compound = format!("V.{}", tokens[ci]);
                tokens[vi] = compound;
                tokens.remove(ci);
            }
        }
    }

    let mut resolved: Vec<FeatureValue> = Vec::with_capacity(tokens.len());
    for token in &tokens {
        resolved.push(catalog.resolve(token)?);
    }

    // Fuse a lone bare person with a lone number into one agreement value so
    // that `3;SG` and the composed `3SG` parse identically.
    let bare_person: Vec<usize> = resolved
        .iter()
        .enumerate()
        .filter(|(_, v)| {
            v.dimension == FeatureDimension::Person
                && matches!(v.tag.as_str(), "1" | "2" | "3" | "4")
        })
        .map(|(i, _)| i)
        .collect();
    let number: Vec<usize> = resolved
        .iter()
        .enumerate()
        .filter(|(_, v)| {
            v.dimension == FeatureDimension::Number
                && matches!(v.tag.as_str(), "SG" | "PL" | "DU")
        })
        .map(|(i, _)| i)
        .collect();
    if bare_person.len() == 1 && number.len() == 1 {
        let fused = format!("{}{}", resolved[bare_person[0]].tag, resolved[number[0]].tag);
        resolved[bare_person[0]] = FeatureValue::new(FeatureDimension::Person, &fused)?;
        resolved.remove(number[0]);
    }

    FeatureBundle::from_values(resolved)
}

/// Dimensions carried by both bundles with an equal tag, minus the excluded
/// ones. Symmetric in its two bundle arguments.
pub fn bundle_shared(
    a: &FeatureBundle,
    b: &FeatureBundle,
    excluded: &BTreeSet<FeatureDimension>,
) -> BTreeSet<FeatureDimension> {
    a.iter()
        .filter(|(dim, tag)| !excluded.contains(dim) && b.get(dim) == Some(tag))
        .map(|(dim, _)| dim.clone())
        .collect()
}

/// Dimensions on which the bundles disagree: present in both with different
/// tags, or present in exactly one. Excluded dimensions are ignored.
/// Together with [`bundle_shared`] this partitions the union of dimensions.
pub fn bundle_diff(
    a: &FeatureBundle,
    b: &FeatureBundle,
    excluded: &BTreeSet<FeatureDimension>,
) -> BTreeSet<FeatureDimension> {
    let mut out = BTreeSet::new();
    for (dim, tag) in a.iter() {
        if !excluded.contains(dim) && b.get(dim) != Some(tag) {
            out.insert(dim.clone());
        }
    }
    for (dim, _) in b.iter() {
        if !excluded.contains(dim) && !a.has(dim) {
            out.insert(dim.clone());
        }
    }
    out
}

/// Maps raw tags to dimensions and canonical spellings.
///
/// The built-in table covers the common UniMorph inventory plus the aliases
/// seen in descriptive tables (`F` for `FEM`, `Poss2Sg` for `PSS2S`, ...).
/// Unknown tags resolve to an `Other` dimension named after the tag itself.
#[derive(Debug, Clone)]
pub struct TagCatalog {
    entries: HashMap<String, (FeatureDimension, String)>,
}

/// (tag, dimension name, canonical spelling or "" when the tag is canonical).
const BUILTIN_TAGS: &[(&str, &str, &str)] = &[
    // Part of speech.
    ("N", "POS", ""),
    ("PROPN", "POS", ""),
    ("ADJ", "POS", ""),
    ("PRO", "POS", ""),
    ("CLF", "POS", ""),
    ("ART", "POS", ""),
    ("DET", "POS", ""),
    ("V", "POS", ""),
    ("ADV", "POS", ""),
    ("ADP", "POS", ""),
    ("COMP", "POS", ""),
    ("CONJ", "POS", ""),
    ("NUM", "POS", ""),
    ("PART", "POS", ""),
    ("INTJ", "POS", ""),
    ("AUX", "POS", ""),
    ("V.PTCP", "POS", ""),
    ("V.MSDR", "POS", ""),
    ("V.CVB", "POS", ""),
    ("NOUN", "POS", "N"),
    ("VERB", "POS", "V"),
    ("PTCP", "POS", "V.PTCP"),
    ("MSDR", "POS", "V.MSDR"),
    ("CVB", "POS", "V.CVB"),
    // Case.
    ("NOM", "Case", ""),
    ("ACC", "Case", ""),
    ("ERG", "Case", ""),
    ("ABS", "Case", ""),
    ("DAT", "Case", ""),
    ("GEN", "Case", ""),
    ("BEN", "Case", ""),
    ("PRP", "Case", ""),
    ("PRT", "Case", ""),
    ("INS", "Case", ""),
    ("COM", "Case", ""),
    ("VOC", "Case", ""),
    ("LOC", "Case", ""),
    ("ABL", "Case", ""),
    ("ALL", "Case", ""),
    ("ESS", "Case", ""),
    ("TRANS", "Case", ""),
    ("EQTV", "Case", ""),
    ("PRIV", "Case", ""),
    ("PROPR", "Case", ""),
    ("AVR", "Case", ""),
    ("FRML", "Case", ""),
    ("ABE", "Case", ""),
    ("IN+ESS", "Case", ""),
    ("IN+ALL", "Case", ""),
    ("IN+ABL", "Case", ""),
    ("ON+ESS", "Case", ""),
    ("ON+ALL", "Case", ""),
    ("ON+ABL", "Case", ""),
    ("AT+ESS", "Case", ""),
    ("AT+ALL", "Case", ""),
    ("AT+ABL", "Case", ""),
    ("INST", "Case", "INS"),
    ("INSTR", "Case", "INS"),
    // Gender.
    ("MASC", "Gender", ""),
    ("FEM", "Gender", ""),
    ("NEUT", "Gender", ""),
    ("F", "Gender", "FEM"),
    ("M", "Gender", "MASC"),
    // Mood.
    ("IND", "Mood", ""),
    ("SBJV", "Mood", ""),
    ("COND", "Mood", ""),
    ("IMP", "Mood", ""),
    ("JUS", "Mood", ""),
    ("POT", "Mood", ""),
    ("OPT", "Mood", ""),
    ("REAL", "Mood", ""),
    ("IRR", "Mood", ""),
    ("INTEN", "Mood", ""),
    ("OBLIG", "Mood", ""),
    ("PERM", "Mood", ""),
    ("ADM", "Mood", ""),
    ("DEB", "Mood", ""),
    ("DED", "Mood", ""),
    ("SIM", "Mood", ""),
    ("PROH", "Mood", ""),
    ("LKLY", "Mood", ""),
    ("PURP", "Mood", ""),
    // Number.
    ("SG", "Number", ""),
    ("PL", "Number", ""),
    ("DU", "Number", ""),
    ("TRI", "Number", ""),
    ("PAUC", "Number", ""),
    ("GPAUC", "Number", ""),
    ("GRPL", "Number", ""),
    ("INVN", "Number", ""),
    // Person, bare and fused with number.
    ("1", "Person", ""),
    ("2", "Person", ""),
    ("3", "Person", ""),
    ("4", "Person", ""),
    ("INCL", "Person", ""),
    ("EXCL", "Person", ""),
    ("1SG", "Person", ""),
    ("1PL", "Person", ""),
    ("1DU", "Person", ""),
    ("2SG", "Person", ""),
    ("2PL", "Person", ""),
    ("2DU", "Person", ""),
    ("3SG", "Person", ""),
    ("3PL", "Person", ""),
    ("3DU", "Person", ""),
    ("4SG", "Person", ""),
    ("4PL", "Person", ""),
    // Polarity.
    ("POS", "Polarity", ""),
    ("NEG", "Polarity", ""),
    // Possession.
    ("PSSD", "Possession", ""),
    ("PSS1S", "Possession", ""),
    ("PSS1P", "Possession", ""),
    ("PSS2S", "Possession", ""),
    ("PSS2P", "Possession", ""),
    ("PSS3S", "Possession", ""),
    ("PSS3P", "Possession", ""),
    ("PSS2SF", "Possession", ""),
    ("PSS2SM", "Possession", ""),
    ("PSS2PF", "Possession", ""),
    ("PSS2PM", "Possession", ""),
    ("PSS3SF", "Possession", ""),
    ("PSS3SM", "Possession", ""),
    ("PSS3PF", "Possession", ""),
    ("PSS3PM", "Possession", ""),
    ("POSS1SG", "Possession", "PSS1S"),
    ("POSS2SG", "Possession", "PSS2S"),
    ("POSS3SG", "Possession", "PSS3S"),
    ("POSS1PL", "Possession", "PSS1P"),
    ("POSS2PL", "Possession", "PSS2P"),
    ("POSS3PL", "Possession", "PSS3P"),
    // Tense.
    ("PRS", "Tense", ""),
    ("PST", "Tense", ""),
    ("FUT", "Tense", ""),
    ("NFUT", "Tense", ""),
    ("IMMED", "Tense", ""),
    ("HOD", "Tense", ""),
    ("1DAY", "Tense", ""),
    ("RCT", "Tense", ""),
    ("RMT", "Tense", ""),
    ("PRES", "Tense", "PRS"),
    ("PAST", "Tense", "PST"),
    // Voice.
    ("ACT", "Voice", ""),
    ("PASS", "Voice", ""),
    ("MID", "Voice", ""),
    ("ANTIP", "Voice", ""),
    ("DIR", "Voice", ""),
    ("INV", "Voice", ""),
    ("AGFOC", "Voice", ""),
    ("PFOC", "Voice", ""),
    ("LFOC", "Voice", ""),
    ("BFOC", "Voice", ""),
    // Aspect.
    ("IPFV", "Aspect", ""),
    ("PFV", "Aspect", ""),
    ("PRF", "Aspect", ""),
    ("PROG", "Aspect", ""),
    ("PROSP", "Aspect", ""),
    ("ITER", "Aspect", ""),
    ("HAB", "Aspect", ""),
    ("DUR", "Aspect", ""),
    // Definiteness.
    ("DEF", "Definiteness", ""),
    ("INDF", "Definiteness", ""),
    ("SPEC", "Definiteness", ""),
    ("NSPEC", "Definiteness", ""),
    // Dimensions outside the probed set.
    ("ANIM", "Animacy", ""),
    ("INAN", "Animacy", ""),
    ("HUM", "Animacy", ""),
    ("NHUM", "Animacy", ""),
    ("FIN", "Finiteness", ""),
    ("NFIN", "Finiteness", ""),
    ("CMPR", "Comparison", ""),
    ("SPRL", "Comparison", ""),
    ("DECL", "Interrogativity", ""),
    ("INT", "Interrogativity", ""),
    ("REFL", "Valency", ""),
    ("RECP", "Valency", ""),
    ("CAUS", "Valency", ""),
    ("APPL", "Valency", ""),
    ("FORM", "Politeness", ""),
    ("INFM", "Politeness", ""),
    ("ELEV", "Politeness", ""),
    ("HUMB", "Politeness", ""),
    ("FH", "Evidentiality", ""),
    ("NFH", "Evidentiality", ""),
    ("DRCT", "Evidentiality", ""),
    ("SEN", "Evidentiality", ""),
    ("RPRT", "Evidentiality", ""),
    ("HRSY", "Evidentiality", ""),
    ("QUOT", "Evidentiality", ""),
];

impl TagCatalog {
    /// The built-in catalog, constructed once.
    pub fn builtin() -> &'static TagCatalog {
        static CATALOG: OnceLock<TagCatalog> = OnceLock::new();
        CATALOG.get_or_init(|| {
            let mut entries = HashMap::new();
            for (tag, dim_name, canonical) in BUILTIN_TAGS {
                let canonical = if canonical.is_empty() { tag } else { canonical };
                entries.insert(
                    (*tag).to_string(),
                    (FeatureDimension::from_name(dim_name), (*canonical).to_string()),
                );
            }
            TagCatalog { entries }
        })
    }

    /// A copy of the built-in catalog extended from a file. Each non-comment
    /// line reads `TAG<TAB>DimensionName[<TAB>CANONICAL]`; later lines win
    /// over earlier ones and over the built-ins.
    pub fn with_extensions(path: &Path) -> std::io::Result<TagCatalog> {
        let mut catalog = TagCatalog::builtin().clone();
        let text = std::fs::read_to_string(path)?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(tag), Some(dim)) = (parts.next(), parts.next()) else {
                continue;
            };
            let tag = nfc(tag).to_uppercase();
            let canonical = parts
                .next()
                .map(|c| nfc(c).to_uppercase())
                .unwrap_or_else(|| tag.clone());
            catalog
                .entries
                .insert(tag, (FeatureDimension::from_name(dim.trim()), canonical));
        }
        Ok(catalog)
    }

    /// Resolves one uppercase token to a validated feature value. Unknown
    /// tokens become values on an `Other` dimension named after the token.
    pub fn resolve(&self, token: &str) -> Result<FeatureValue, BundleError> {
        match self.entries.get(token) {
            Some((dimension, canonical)) => FeatureValue::new(dimension.clone(), canonical),
            None => FeatureValue::new(FeatureDimension::Other(token.to_string()), token),
        }
    }

    /// Whether a token has a built-in or extended mapping.
    pub fn knows(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }
}

/// Train/dev/test sizes for dataset splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn new(train: usize, dev: usize, test: usize) -> SplitSizes {
        SplitSizes { train, dev, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

impl Default for SplitSizes {
    fn default() -> SplitSizes {
        SplitSizes::new(7_000, 2_000, 1_000)
    }
}

/// Invalid generation settings.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("none_class_ratio must lie strictly between 0 and 1, got {0}")]
    NoneRatioOutOfRange(f64),
    #[error("frequent_ratio must lie in [0, 1], got {0}")]
    FrequentRatioOutOfRange(f64),
    #[error("split sizes must all be positive")]
    EmptySplit,
    #[error("language code must not be empty")]
    EmptyLanguage,
}

/// Per-language generation settings. All dataset generators take one of
/// these; the seed makes every sampling step reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageConfig {
    /// ISO language code, e.g. "tr" or "fin".
    pub language: String,
    /// Master seed for sampling, splitting and shuffling.
    pub seed: u64,
    /// Dimensions ignored when comparing bundles for paired tasks. Always
    /// contains POS; mood is additionally excluded for Finnish and Turkish,
    /// interrogativity for Turkish, where the annotations are unreliable.
    pub excluded_pair_dimensions: BTreeSet<FeatureDimension>,
    /// Fraction of a single-feature dataset filled with None-class forms.
    pub none_class_ratio: f64,
    /// Fraction of labeled forms drawn from the frequent vocabulary.
    pub frequent_ratio: f64,
    /// Minimum number of eligible samples; below it a task is skipped.
    pub min_samples: usize,
    /// Split sizes; generation fills them exactly.
    pub splits: SplitSizes,
    /// Rank cutoff separating frequent from rare words.
    pub frequency_cutoff: usize,
}

impl LanguageConfig {
    /// Defaults plus the language-specific pairing exclusions.
    pub fn new(language: &str, seed: u64) -> LanguageConfig {
        let language = language.trim().to_lowercase();
        let mut excluded = BTreeSet::new();
        excluded.insert(FeatureDimension::Pos);
        if matches!(language.as_str(), "fi" | "fin" | "tr" | "tur") {
            excluded.insert(FeatureDimension::Mood);
        }
        if matches!(language.as_str(), "tr" | "tur") {
            excluded.insert(FeatureDimension::from_name("Interrogativity"));
        }
        LanguageConfig {
            language,
            seed,
            excluded_pair_dimensions: excluded,
            none_class_ratio: 0.30,
            frequent_ratio: 0.80,
            min_samples: 10_000,
            splits: SplitSizes::default(),
            frequency_cutoff: 1_000_000,
        }
    }

    /// Checks the invariants that the constructor guarantees, for configs
    /// that were adjusted after construction (e.g. from a config file).
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.language.is_empty() {
            return Err(ConfigError::EmptyLanguage);
        }
        if !(self.none_class_ratio > 0.0 && self.none_class_ratio < 1.0) {
            return Err(ConfigError::NoneRatioOutOfRange(self.none_class_ratio));
        }
        if !(0.0..=1.0).contains(&self.frequent_ratio) {
            return Err(ConfigError::FrequentRatioOutOfRange(self.frequent_ratio));
        }
        if self.splits.train == 0 || self.splits.dev == 0 || self.splits.test == 0 {
            return Err(ConfigError::EmptySplit);
        }
        Ok(())
    }
}
