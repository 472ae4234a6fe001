//! Soft cosine similarity between bags of words, sentence-to-category
//! similarity over seed words, and sigmoid calibration.

mod kernel;

pub use kernel::{
    build_term_similarity, load_term_similarity, read_term_similarity, save_term_similarity, vocab_fingerprint,
    write_term_similarity, KernelParams, TermSimilarityMatrix,
};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::corpus::SeedLexicon;
use crate::embedding::Vocabulary;
use crate::error::{Error, Result};
use crate::preprocess::TokenizedSentence;

/// Sparse term counts, sorted by word index, with no zero entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BagOfWords {
    entries: Vec<(usize, f64)>,
}

impl BagOfWords {
    /// Counts in-vocabulary tokens; out-of-vocabulary tokens are skipped.
    pub fn from_tokens(tokens: &[String], vocab: &Vocabulary) -> Self {
        let mut idx: Vec<usize> = vocab.indices(tokens).collect();
        idx.sort_unstable();
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(idx.len());
        for i in idx {
            match entries.last_mut() {
                Some((last, c)) if *last == i => *c += 1.0,
                _ => entries.push((i, 1.0)),
            }
        }
        Self { entries }
    }

    /// Builds a bag from `(index, weight)` pairs. Duplicate indices are
    /// summed and zero weights dropped; negative or non-finite weights are
    /// rejected.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (i, w) in pairs {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Validation(format!("invalid bag weight {w} for index {i}")));
            }
            entries.push((i, w));
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some((last, c)) if *last == i => *c += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Ok(Self { entries: merged })
    }

    pub fn single(index: usize) -> Self {
        Self {
            entries: vec![(index, 1.0)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }
}

/// `aᵀ S b` over the sparse entries of both bags.
fn quadratic_form(a: &BagOfWords, b: &BagOfWords, s: &TermSimilarityMatrix) -> f64 {
    let mut total = 0.0;
    for &(i, ai) in &a.entries {
        for &(j, bj) in &b.entries {
            let sij = s.get(i, j);
            if sij != 0.0 {
                total += ai * sij * bj;
            }
        }
    }
    total
}

/// `aᵀSb / (sqrt(aᵀSa) sqrt(bᵀSb))`. Empty bags and non-positive quadratic
/// forms give 0.
pub fn soft_cosine(a: &BagOfWords, b: &BagOfWords, s: &TermSimilarityMatrix) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let aa = quadratic_form(a, a, s);
    let bb = quadratic_form(b, b, s);
    if aa <= 0.0 || bb <= 0.0 {
        return 0.0;
    }
    quadratic_form(a, b, s) / (aa.sqrt() * bb.sqrt())
}

/// Mean soft cosine between the sentence bag and each seed taken as a
/// single-word bag. Seeds missing from the vocabulary contribute 0 but still
/// count in the denominator.
pub fn sentence_category_similarity(
    x: &BagOfWords,
    seeds: &[String],
    s: &TermSimilarityMatrix,
    vocab: &Vocabulary,
) -> f64 {
    assert!(!seeds.is_empty(), "seed list must be non-empty");
    let total: f64 = seeds
        .iter()
        .filter_map(|seed| vocab.index_of(seed))
        .map(|idx| soft_cosine(x, &BagOfWords::single(idx), s))
        .sum();
    total / seeds.len() as f64
}

/// Logistic sigmoid `e^x / (1 + e^x)`, evaluated without overflow.
pub fn calibrate(sim: f64) -> f64 {
    if sim >= 0.0 {
        1.0 / (1.0 + (-sim).exp())
    } else {
        let e = sim.exp();
        e / (1.0 + e)
    }
}

/// One real score per lexicon category, in lexicon order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    categories: Vec<String>,
    values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(categories: Vec<String>, values: Vec<f64>) -> Self {
        assert_eq!(categories.len(), values.len());
        Self { categories, values }
    }

    pub fn filled(categories: Vec<String>, value: f64) -> Self {
        let values = vec![value; categories.len()];
        Self { categories, values }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, category: &str) -> Option<f64> {
        self.categories
            .iter()
            .position(|c| c == category)
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.categories
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            categories: self.categories.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Serialize for ScoreVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len()))?;
        for (k, v) in self.iter() {
            map.serialize_entry(k, &v)?;
        }
        map.end()
    }
}

/// Scores sentences against a lexicon. Seed indices are resolved once.
#[derive(Debug, Clone)]
pub struct CategoryScorer<'a> {
    lexicon: &'a SeedLexicon,
    kernel: &'a TermSimilarityMatrix,
    vocab: &'a Vocabulary,
}

impl<'a> CategoryScorer<'a> {
    pub fn new(lexicon: &'a SeedLexicon, kernel: &'a TermSimilarityMatrix, vocab: &'a Vocabulary) -> Self {
        assert_eq!(
            kernel.vocab_size(),
            vocab.len(),
            "kernel and vocabulary must share an embedding space"
        );
        Self { lexicon, kernel, vocab }
    }

    pub fn lexicon(&self) -> &SeedLexicon {
        self.lexicon
    }

    pub fn bag(&self, sentence: &TokenizedSentence) -> BagOfWords {
        BagOfWords::from_tokens(&sentence.tokens, self.vocab)
    }

    /// Uncalibrated per-category similarities, in lexicon order.
    pub fn similarities(&self, sentence: &TokenizedSentence) -> Vec<f64> {
        let bag = self.bag(sentence);
        self.lexicon
            .categories()
            .iter()
            .map(|c| sentence_category_similarity(&bag, &c.seeds, self.kernel, self.vocab))
            .collect()
    }

    pub fn sent_score(&self, sentence: &TokenizedSentence) -> ScoreVector {
        let values = self.similarities(sentence).into_iter().map(calibrate).collect();
        ScoreVector::new(self.lexicon.category_names(), values)
    }
}

/// Calibrated per-category scores of one sentence.
pub fn sent_score(
    x: &TokenizedSentence,
    lexicon: &SeedLexicon,
    s: &TermSimilarityMatrix,
    vocab: &Vocabulary,
) -> ScoreVector {
    CategoryScorer::new(lexicon, s, vocab).sent_score(x)
}
