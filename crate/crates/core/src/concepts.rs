//! Concept-level image-set comparison.
//!
//! Extractor answers for an image set are reduced to a [`ConceptSet`] of
//! word frequencies (normalized by image count). Two sets are compared with
//! the Concept Association Score: the histogram intersection-over-union of
//! their aligned frequencies after synonym merging. [`cas_clip`] is the
//! embedding variant, averaging cross-pair cosine similarity over recorded
//! vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{AnnotatedImageSet, AxisSet, UNKNOWN};
use crate::error::{Error, Result};

/// English stopword list applied by default during tokenization.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
    "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
    "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
    "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
    "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
    "just", "don", "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren",
    "couldn", "didn", "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn",
    "needn", "shan", "shouldn", "wasn", "weren", "won", "wouldn", "image", "person",
];

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Concepts extracted from one image set with per-image frequencies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConceptSet {
    entries: Vec<(String, f64)>,
}

impl ConceptSet {
    /// Builds a set from `(concept, frequency)` pairs. Concepts are lowercased
    /// and must be unique.
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(entries.len());
        for (concept, freq) in entries {
            let concept = concept.to_lowercase();
            if !freq.is_finite() || freq < 0.0 {
                return Err(Error::invalid(format!(
                    "concept `{concept}` has invalid frequency {freq}"
                )));
            }
            if !seen.insert(concept.clone()) {
                return Err(Error::invalid(format!("concept `{concept}` appears twice")));
            }
            out.push((concept, freq));
        }
        Ok(ConceptSet { entries: out })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn frequency(&self, concept: &str) -> Option<f64> {
        self.entries.iter().find(|(c, _)| c == concept).map(|(_, f)| *f)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, f)| f).sum()
    }

    /// Concepts ordered by descending frequency, ties lexicographic.
    pub fn top_k(&self, k: usize) -> Vec<(String, f64)> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        sorted.truncate(k);
        sorted
    }
}

/// Synonym classes, each collapsed onto a canonical representative.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SynonymTableRepr", into = "SynonymTableRepr")]
pub struct SynonymTable {
    groups: Vec<SynonymGroup>,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymGroup {
    pub canonical: String,
    pub members: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SynonymTableRepr {
    groups: Vec<SynonymGroup>,
}

impl TryFrom<SynonymTableRepr> for SynonymTable {
    type Error = Error;

    fn try_from(repr: SynonymTableRepr) -> Result<Self> {
        SynonymTable::new(repr.groups)
    }
}

impl From<SynonymTable> for SynonymTableRepr {
    fn from(table: SynonymTable) -> Self {
        SynonymTableRepr { groups: table.groups }
    }
}

impl SynonymTable {
    /// Classes must be disjoint. The canonical word is always a member of its
    /// own class, whether or not it is listed.
    pub fn new(groups: Vec<SynonymGroup>) -> Result<Self> {
        let mut lookup = HashMap::new();
        let mut normalized = Vec::with_capacity(groups.len());
        for (gi, group) in groups.into_iter().enumerate() {
            let canonical = group.canonical.to_lowercase();
            let mut members: Vec<String> = Vec::new();
            for word in std::iter::once(canonical.clone())
                .chain(group.members.iter().map(|m| m.to_lowercase()))
            {
                if members.contains(&word) {
                    continue;
                }
                if lookup.insert(word.clone(), gi).is_some() {
                    return Err(Error::invalid(format!(
                        "`{word}` belongs to more than one synonym class"
                    )));
                }
                members.push(word);
            }
            normalized.push(SynonymGroup { canonical, members });
        }
        Ok(SynonymTable { groups: normalized, lookup })
    }

    pub fn empty() -> Self {
        SynonymTable::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            location: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn groups(&self) -> &[SynonymGroup] {
        &self.groups
    }

    pub fn canonical<'a>(&'a self, word: &'a str) -> &'a str {
        match self.lookup.get(word) {
            Some(&gi) => &self.groups[gi].canonical,
            None => word,
        }
    }
}

/// Recorded image embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub source_id: String,
    pub dims: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(source_id: impl Into<String>, dims: Vec<f64>) -> Result<Self> {
        let v = EmbeddingVector { source_id: source_id.into(), dims };
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid(format!("embedding `{}` is not finite", self.source_id)));
        }
        if self.norm() == 0.0 {
            return Err(Error::invalid(format!("embedding `{}` has zero norm", self.source_id)));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.dims.iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub vectors: Vec<EmbeddingVector>,
}

impl EmbeddingFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: EmbeddingFile = serde_json::from_str(text).map_err(|e| Error::Schema {
            location: "embedding file".into(),
            message: e.to_string(),
        })?;
        for v in &file.vectors {
            v.validate()?;
        }
        Ok(file)
    }
}

/// Lowercased, punctuation-stripped tokens with stopwords removed.
pub fn tokenize<'a>(text: &'a str, stopwords: &'a HashSet<String>) -> impl Iterator<Item = String> + 'a {
    text.split_whitespace().filter_map(move |raw| {
        let word: String = raw
            .chars()
            .filter(|c| !c.is_ascii_punctuation())
            .flat_map(char::to_lowercase)
            .collect();
        (!word.is_empty() && !stopwords.contains(&word)).then_some(word)
    })
}

/// Word frequencies over all answers, divided by the number of images.
pub fn build_concept_set(
    answers: &[impl AsRef<str>],
    image_count: usize,
    stopwords: &HashSet<String>,
) -> Result<ConceptSet> {
    if image_count == 0 {
        return Err(Error::invalid("image count must be at least 1"));
    }
    let joined = answers.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for word in tokenize(&joined, stopwords) {
        let c = counts.entry(word.clone()).or_insert(0);
        if *c == 0 {
            order.push(word);
        }
        *c += 1;
    }
    let entries = order
        .into_iter()
        .map(|w| {
            let f = counts[&w] as f64 / image_count as f64;
            (w, f)
        })
        .collect();
    ConceptSet::new(entries)
}

/// Concept set whose answers are the attribute values recorded per image.
pub fn concept_set_from_annotations(
    set: &AnnotatedImageSet,
    axes: &AxisSet,
    stopwords: &HashSet<String>,
) -> Result<ConceptSet> {
    let answers: Vec<&str> = set
        .annotations
        .iter()
        .flat_map(|ann| axes.names().map(move |a| ann.value(a)))
        .filter(|v| *v != UNKNOWN)
        .collect();
    build_concept_set(&answers, set.size().max(1), stopwords)
}

/// Collapses synonyms onto their canonical concept, summing frequencies.
pub fn merge_synonyms(c: &ConceptSet, syn: &SynonymTable) -> ConceptSet {
    let mut order: Vec<String> = Vec::new();
    let mut mass: HashMap<String, f64> = HashMap::new();
    for (concept, freq) in &c.entries {
        let canonical = syn.canonical(concept).to_string();
        match mass.get_mut(&canonical) {
            Some(m) => *m += freq,
            None => {
                mass.insert(canonical.clone(), *freq);
                order.push(canonical);
            }
        }
    }
    let entries = order
        .into_iter()
        .map(|c| {
            let f = mass[&c];
            (c, f)
        })
        .collect();
    ConceptSet { entries }
}

/// Concept frequencies of two sets aligned over their lexicographically
/// ordered union vocabulary; absent concepts read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedConcepts {
    pub vocabulary: Vec<String>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

pub fn align_concepts(a: &ConceptSet, b: &ConceptSet) -> AlignedConcepts {
    let left: BTreeMap<&str, f64> = a.entries.iter().map(|(c, f)| (c.as_str(), *f)).collect();
    let right: BTreeMap<&str, f64> = b.entries.iter().map(|(c, f)| (c.as_str(), *f)).collect();
    let vocab: BTreeSet<&str> = left.keys().chain(right.keys()).copied().collect();
    AlignedConcepts {
        left: vocab.iter().map(|c| left.get(c).copied().unwrap_or(0.0)).collect(),
        right: vocab.iter().map(|c| right.get(c).copied().unwrap_or(0.0)).collect(),
        vocabulary: vocab.into_iter().map(String::from).collect(),
    }
}

/// Histogram intersection-over-union of two aligned frequency lists.
///
/// Two all-zero histograms are identical evidence and score 1.
pub fn histogram_iou(left: &[f64], right: &[f64]) -> f64 {
    let (inter, union) = left
        .iter()
        .zip(right)
        .fold((0.0, 0.0), |(i, u), (a, b)| (i + a.min(*b), u + a.max(*b)));
    if union == 0.0 {
        1.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Concept Association Score between two concept sets, in `[0, 1]`.
pub fn cas(a: &ConceptSet, b: &ConceptSet, syn: &SynonymTable) -> f64 {
    let aligned = align_concepts(&merge_synonyms(a, syn), &merge_synonyms(b, syn));
    histogram_iou(&aligned.left, &aligned.right)
}

/// CAS of an initial set against each counterfactual, in counterfactual order.
pub fn cas_distribution(
    initial: &ConceptSet,
    cfs: &[ConceptSet],
    syn: &SynonymTable,
) -> Result<Vec<f64>> {
    if cfs.is_empty() {
        return Err(Error::invalid("at least one counterfactual concept set is required"));
    }
    Ok(cfs.iter().map(|cf| cas(initial, cf, syn)).collect())
}

/// Mean cosine similarity over all cross pairs of recorded embeddings.
pub fn cas_clip(set_a: &[EmbeddingVector], set_b: &[EmbeddingVector]) -> Result<f64> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::invalid("embedding sets must be non-empty"));
    }
    let dim = set_a[0].dims.len();
    if let Some(v) = set_a.iter().chain(set_b).find(|v| v.dims.len() != dim) {
        return Err(Error::invalid(format!(
            "embedding `{}` has {} dimensions, expected {dim}",
            v.source_id,
            v.dims.len()
        )));
    }
    let mut total = 0.0;
    for a in set_a {
        for b in set_b {
            let dot: f64 = a.dims.iter().zip(&b.dims).map(|(x, y)| x * y).sum();
            total += dot / (a.norm() * b.norm());
        }
    }
    Ok(total / (set_a.len() * set_b.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cs(entries: &[(&str, f64)]) -> ConceptSet {
        ConceptSet::new(entries.iter().map(|(c, f)| (c.to_string(), *f)).collect()).unwrap()
    }

    fn freq_map(c: &ConceptSet) -> BTreeMap<String, f64> {
        c.entries().iter().cloned().collect()
    }

    fn syn(canonical: &str, members: &[&str]) -> SynonymTable {
        SynonymTable::new(vec![SynonymGroup {
            canonical: canonical.into(),
            members: members.iter().map(|m| m.to_string()).collect(),
        }])
        .unwrap()
    }

    #[test]
    fn build_concept_set_examples() {
        let stop: HashSet<String> = ["a".to_string()].into();
        let c = build_concept_set(&["a man", "a man"], 2, &stop).unwrap();
        assert_eq!(freq_map(&c), BTreeMap::from([("man".into(), 1.0)]));

        let none: [&str; 0] = [];
        assert!(build_concept_set(&none, 48, &stop).unwrap().is_empty());

        let c = build_concept_set(&["old man.", "Man, smiling"], 2, &HashSet::new()).unwrap();
        assert_eq!(
            freq_map(&c),
            BTreeMap::from([
                ("man".into(), 1.0),
                ("old".into(), 0.5),
                ("smiling".into(), 0.5)
            ])
        );
        assert!(build_concept_set(&["x"], 0, &stop).is_err());
    }

    #[test]
    fn merge_synonyms_examples() {
        let merged = merge_synonyms(&cs(&[("happy", 2.0), ("joyful", 1.0)]), &syn("happy", &["joyful"]));
        assert_eq!(merged, cs(&[("happy", 3.0)]));

        let input = cs(&[("happy", 2.0), ("joyful", 1.0)]);
        assert_eq!(merge_synonyms(&input, &SynonymTable::empty()), input);

        let merged = merge_synonyms(
            &cs(&[("car", 1.0), ("auto", 2.0), ("tree", 1.0)]),
            &syn("car", &["auto"]),
        );
        assert_eq!(freq_map(&merged), freq_map(&cs(&[("car", 3.0), ("tree", 1.0)])));
    }

    #[test]
    fn merge_into_canonical_absent_from_input() {
        let merged = merge_synonyms(&cs(&[("joyful", 1.0), ("glad", 2.0)]), &syn("happy", &["joyful", "glad"]));
        assert_eq!(merged, cs(&[("happy", 3.0)]));
    }

    #[test]
    fn synonym_classes_must_be_disjoint() {
        let groups = vec![
            SynonymGroup { canonical: "car".into(), members: vec!["auto".into()] },
            SynonymGroup { canonical: "auto".into(), members: vec![] },
        ];
        assert!(SynonymTable::new(groups).is_err());
    }

    #[test]
    fn synonym_table_json_schema() {
        let t: SynonymTable =
            serde_json::from_str(r#"{"groups":[{"canonical":"car","members":["auto"]}]}"#).unwrap();
        assert_eq!(t.canonical("auto"), "car");
        assert_eq!(t.canonical("tree"), "tree");
    }

    #[test]
    fn concept_set_json_schema() {
        let c: ConceptSet = serde_json::from_str(r#"{"entries":[["man",1.0],["hat",0.5]]}"#).unwrap();
        assert_eq!(c.frequency("hat"), Some(0.5));
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"entries":[["man",1.0],["hat",0.5]]}"#);
    }

    #[test]
    fn align_examples() {
        let a = align_concepts(&cs(&[("x", 1.0)]), &ConceptSet::default());
        assert_eq!((a.vocabulary, a.left, a.right), (vec!["x".to_string()], vec![1.0], vec![0.0]));

        let s = cs(&[("m", 2.0), ("b", 1.0)]);
        let a = align_concepts(&s, &s);
        assert_eq!(a.left, a.right);

        let a = align_concepts(&cs(&[("m", 2.0), ("b", 1.0)]), &cs(&[("m", 1.0), ("h", 1.0)]));
        assert_eq!(a.vocabulary, vec!["b", "h", "m"]);
        assert_eq!(a.left, vec![1.0, 0.0, 2.0]);
        assert_eq!(a.right, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn cas_examples() {
        let t = SynonymTable::empty();
        let a = cs(&[("man", 10.0), ("beard", 5.0)]);
        assert_eq!(cas(&a, &a, &t), 1.0);
        assert_eq!(cas(&a, &cs(&[("hat", 1.0)]), &t), 0.0);
        let b = cs(&[("man", 5.0), ("hat", 5.0)]);
        assert!((cas(&a, &b, &t) - 0.25).abs() < 1e-12);
        assert_eq!(cas(&ConceptSet::default(), &ConceptSet::default(), &t), 1.0);
        assert_eq!(cas(&a, &ConceptSet::default(), &t), 0.0);
    }

    #[test]
    fn cas_distribution_examples() {
        let t = SynonymTable::empty();
        let init = cs(&[("man", 1.0), ("apron", 0.5)]);
        let d = cas_distribution(&init, &[init.clone(), init.clone()], &t).unwrap();
        assert_eq!(d, vec![1.0, 1.0]);
        let d = cas_distribution(&init, &[init.clone(), cs(&[("tree", 1.0)])], &t).unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
        assert!(cas_distribution(&init, &[], &t).is_err());

        // min/max sums worked by hand over the union {apron, hat, man, woman}
        let cfs = [
            cs(&[("man", 0.5), ("hat", 0.5)]),
            cs(&[("woman", 1.0), ("apron", 0.5)]),
            cs(&[("man", 2.0)]),
        ];
        let d = cas_distribution(&init, &cfs, &t).unwrap();
        let expected = [0.5 / 2.0, 0.5 / 2.5, 1.0 / 2.5];
        for (got, want) in d.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn cas_clip_examples() {
        let e = |id: &str, d: &[f64]| EmbeddingVector::new(id, d.to_vec()).unwrap();
        let a = [e("a", &[1.0, 0.0])];
        assert!((cas_clip(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cas_clip(&a, &[e("b", &[0.0, 1.0])]).unwrap(), 0.0);
        let two = [e("a", &[1.0, 0.0]), e("b", &[0.0, 1.0])];
        assert!((cas_clip(&two, &a).unwrap() - 0.5).abs() < 1e-12);
        assert!(cas_clip(&a, &[e("c", &[1.0, 0.0, 0.0])]).is_err());
        assert!(EmbeddingVector::new("z", vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn embedding_file_schema() {
        let f = EmbeddingFile::from_json(r#"{"vectors":[{"source_id":"img0","dims":[0.5,0.5]}]}"#)
            .unwrap();
        assert_eq!(f.vectors[0].source_id, "img0");
        assert!(EmbeddingFile::from_json(r#"{"vectors":[{"source_id":"z","dims":[0]}]}"#).is_err());
    }

    fn concept_set_strategy() -> impl Strategy<Value = ConceptSet> {
        prop::collection::btree_map("[a-e]", 0.0f64..5.0, 0..5)
            .prop_map(|m| ConceptSet::new(m.into_iter().collect()).unwrap())
    }

    proptest! {
        #[test]
        fn cas_is_symmetric_and_bounded(a in concept_set_strategy(), b in concept_set_strategy()) {
            let t = syn("a", &["b"]);
            let ab = cas(&a, &b, &t);
            prop_assert!((ab - cas(&b, &a, &t)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn cas_self_is_one(a in concept_set_strategy()) {
            prop_assert!((cas(&a, &a, &SynonymTable::empty()) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cas_scale_invariant(a in concept_set_strategy(), b in concept_set_strategy(), k in 0.1f64..10.0) {
            let scale = |c: &ConceptSet| ConceptSet::new(
                c.entries().iter().map(|(w, f)| (w.clone(), f * k)).collect()).unwrap();
            let t = SynonymTable::empty();
            prop_assert!((cas(&a, &b, &t) - cas(&scale(&a), &scale(&b), &t)).abs() < 1e-9);
        }

        #[test]
        fn merge_conserves_mass(a in concept_set_strategy()) {
            let merged = merge_synonyms(&a, &syn("a", &["b", "c"]));
            prop_assert!((merged.total_mass() - a.total_mass()).abs() < 1e-9);
        }
    }
}
