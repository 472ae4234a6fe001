//! Tokenization and stopword removal shared by training, clustering and
//! scoring.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// A set of lowercase, non-empty stopwords.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordSet {
    words: HashSet<String>,
}

impl StopwordSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The vendored 179-word English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// Builds a set from arbitrary words, lowercasing them and dropping
    /// empty entries.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        Self { words }
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Self::from_words(text.lines().filter_map(|line| {
            let line = line.split('#').next().unwrap_or("").trim();
            (!line.is_empty()).then_some(line)
        }))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Splits raw text into lowercase word tokens. Implementations must not
/// emit empty tokens or tokens containing whitespace.
pub trait Tokenizer: Send + Sync {
    fn tokens(&self, text: &str) -> Vec<String>;
}

/// Lowercases, splits on every non-alphanumeric character, and drops purely
/// numeric tokens. Contractions split at the apostrophe ("don't" gives
/// "don", "t").
#[derive(Debug, Clone, Copy, Default)]
pub struct AlphanumericTokenizer;

impl Tokenizer for AlphanumericTokenizer {
    fn tokens(&self, text: &str) -> Vec<String> {
        // Lowercasing first keeps the split stable: some characters lowercase
        // to sequences containing non-alphanumeric marks.
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .filter(|t| !t.chars().all(|c| c.is_numeric()))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub source_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedSentence {
    pub fn new(source_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            source_id: source_id.into(),
            tokens,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tokenizes with the default tokenizer and removes stopwords, preserving
/// token order.
pub fn tokenize(text: &str, stopwords: &StopwordSet) -> TokenizedSentence {
    tokenize_with(&AlphanumericTokenizer, text, stopwords)
}

pub fn tokenize_with(tokenizer: &dyn Tokenizer, text: &str, stopwords: &StopwordSet) -> TokenizedSentence {
    let tokens = tokenizer
        .tokens(text)
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect();
    TokenizedSentence {
        source_id: String::new(),
        tokens,
    }
}

/// A tokenizer paired with a stopword list.
pub struct Preprocessor {
    tokenizer: Box<dyn Tokenizer>,
    stopwords: StopwordSet,
}

impl Preprocessor {
    pub fn new(stopwords: StopwordSet) -> Self {
        Self {
            tokenizer: Box::new(AlphanumericTokenizer),
            stopwords,
        }
    }

    pub fn with_tokenizer(tokenizer: Box<dyn Tokenizer>, stopwords: StopwordSet) -> Self {
        Self { tokenizer, stopwords }
    }

    pub fn stopwords(&self) -> &StopwordSet {
        &self.stopwords
    }

    pub fn sentence(&self, id: &str, text: &str) -> TokenizedSentence {
        let mut sentence = tokenize_with(self.tokenizer.as_ref(), text, &self.stopwords);
        sentence.source_id = id.to_string();
        sentence
    }
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(StopwordSet::english())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn drops_stopwords_and_punctuation() {
        let stop = StopwordSet::from_words(["the", "was"]);
        assert_eq!(
            tokenize("The food was delicious!", &stop).tokens,
            words(&["food", "delicious"])
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("", &StopwordSet::english()).tokens.is_empty());
    }

    #[test]
    fn splits_on_hyphens_and_commas() {
        assert_eq!(
            tokenize("Wine-list prices, WOW.", &StopwordSet::empty()).tokens,
            words(&["wine", "list", "prices", "wow"])
        );
    }

    #[test]
    fn numeric_tokens_dropped() {
        assert_eq!(
            tokenize("paid 25 dollars for 2nd course", &StopwordSet::empty()).tokens,
            words(&["paid", "dollars", "for", "2nd", "course"])
        );
    }

    #[test]
    fn bundled_list_has_179_entries() {
        let stop = StopwordSet::english();
        assert_eq!(stop.len(), 179);
        assert!(stop.contains("not"));
        assert!(stop.contains("don't"));
        assert!(stop.iter().all(|w| !w.is_empty() && w.to_lowercase() == w));
    }

    #[test]
    fn negations_removed_with_default_list() {
        let t = tokenize("The pasta was not good", &StopwordSet::english());
        assert_eq!(t.tokens, words(&["pasta", "good"]));
    }

    #[test]
    fn stopword_file_comments() {
        let s = StopwordSet::parse("# header\nThe\n\n  a  # article\n");
        assert_eq!(s.len(), 2);
        assert!(s.contains("the") && s.contains("a"));
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(text in "\\PC{0,80}") {
            let stop = StopwordSet::english();
            let once = tokenize(&text, &stop);
            let twice = tokenize(&once.tokens.join(" "), &stop);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn never_emits_stopwords_or_blanks(text in "[a-zA-Z ,.'!-]{0,120}") {
            let stop = StopwordSet::english();
            let out = tokenize(&text, &stop);
            for t in &out.tokens {
                prop_assert!(!stop.contains(t));
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }
    }
}
