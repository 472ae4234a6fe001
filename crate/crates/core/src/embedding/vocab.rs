use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::preprocess::TokenizedSentence;

/// Word list with dense indices `0..len`.
///
/// Vocabularies built from a corpus are ordered by descending count, ties
/// broken lexicographically. Vocabularies loaded from pretrained vectors keep
/// file order and carry zero counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let counts = vec![0; words.len()];
        Self::from_parts(words, counts)
    }

    pub(crate) fn from_parts(words: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        debug_assert_eq!(words.len(), counts.len());
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary word `{w}`")));
            }
        }
        Ok(Self { words, index, counts })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Maps tokens to indices, skipping out-of-vocabulary tokens.
    pub fn indices<'a>(&'a self, tokens: &'a [String]) -> impl Iterator<Item = usize> + 'a {
        tokens.iter().filter_map(|t| self.index_of(t))
    }
}

pub fn build_vocabulary(corpus: &[TokenizedSentence], min_count: u64) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for sentence in corpus {
        for token in &sentence.tokens {
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::Config(format!(
            "no word occurs at least {min_count} times; lower min_count"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (words, counts): (Vec<String>, Vec<u64>) = kept.into_iter().map(|(w, c)| (w.to_string(), c)).unzip();
    Vocabulary::from_parts(words, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<TokenizedSentence> {
        vec![
            TokenizedSentence::new("1", vec!["food".into(), "good".into()]),
            TokenizedSentence::new("2", vec!["food".into(), "bad".into()]),
        ]
    }

    #[test]
    fn thresholds_counts() {
        let v = build_vocabulary(&corpus(), 2).unwrap();
        assert_eq!(v.words(), ["food"]);
        assert_eq!(v.count(0), 2);
    }

    #[test]
    fn orders_by_frequency_then_lexically() {
        let v = build_vocabulary(&corpus(), 1).unwrap();
        assert_eq!(v.words(), ["food", "bad", "good"]);
        assert_eq!(v.index_of("good"), Some(2));
    }

    #[test]
    fn empty_after_threshold_is_config_error() {
        assert!(matches!(build_vocabulary(&corpus(), 3), Err(Error::Config(_))));
        assert!(matches!(build_vocabulary(&[], 1), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_words_rejected() {
        assert!(Vocabulary::from_words(vec!["a".into(), "a".into()]).is_err());
    }
}
