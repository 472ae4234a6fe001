//! Word embeddings: vocabulary, CBOW training, word2vec text I/O and
//! sentence averaging.

mod cbow;
mod io;
mod vocab;

pub use cbow::{train_cbow, CbowConfig, CbowModel, NOISE_EXPONENT};
pub use io::{format_g6, load_word2vec_text, read_word2vec_text, save_word2vec_text, write_word2vec_text};
pub use vocab::{build_vocabulary, Vocabulary};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedSentence;

/// One dense vector per vocabulary word. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    vocab: Vocabulary,
    dim: usize,
    vectors: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(vocab: Vocabulary, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        if vectors.len() != vocab.len() * dim {
            return Err(Error::Validation(format!(
                "expected {} x {} embedding matrix, got {} values",
                vocab.len(),
                dim,
                vectors.len()
            )));
        }
        if let Some(pos) = vectors.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite embedding value for word `{}`",
                vocab.word(pos / dim)
            )));
        }
        Ok(Self { vocab, dim, vectors })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vector(&self, idx: usize) -> &[f64] {
        &self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vocab.index_of(word).map(|i| self.vector(i))
    }

    /// The full row-major `|V| x dim` matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.vectors
    }
}

/// Mean of the vectors of the sentence's in-vocabulary tokens, or `None` when
/// no token is in the vocabulary.
pub fn sentence_vector(sentence: &TokenizedSentence, store: &EmbeddingStore) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; store.dim()];
    let mut n = 0usize;
    for idx in store.vocab().indices(&sentence.tokens) {
        for (s, v) in sum.iter_mut().zip(store.vector(idx)) {
            *s += v;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let inv = n as f64;
    sum.iter_mut().for_each(|s| *s /= inv);
    Some(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store() -> EmbeddingStore {
        let vocab = Vocabulary::from_words(vec!["food".into(), "staff".into(), "decor".into()]).unwrap();
        EmbeddingStore::new(vocab, 2, vec![1.0, 2.0, 3.0, -4.0, 0.5, 0.25]).unwrap()
    }

    fn sent(tokens: &[&str]) -> TokenizedSentence {
        TokenizedSentence::new("s", tokens.iter().map(|t| t.to_string()).collect())
    }

    #[test]
    fn single_token_is_exact() {
        assert_eq!(sentence_vector(&sent(&["staff"]), &store()).unwrap(), vec![3.0, -4.0]);
    }

    #[test]
    fn mean_of_two_skipping_oov() {
        let v = sentence_vector(&sent(&["food", "pizza", "staff"]), &store()).unwrap();
        assert_eq!(v, vec![2.0, -1.0]);
    }

    #[test]
    fn all_oov_is_absent() {
        assert!(sentence_vector(&sent(&["pizza", "wine"]), &store()).is_none());
        assert!(sentence_vector(&sent(&[]), &store()).is_none());
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let vocab = Vocabulary::from_words(vec!["a".into()]).unwrap();
        assert!(EmbeddingStore::new(vocab.clone(), 2, vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingStore::new(vocab, 2, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(perm in Just(vec!["food", "staff", "decor", "food"]).prop_shuffle()) {
            let base = sentence_vector(&sent(&["food", "staff", "decor", "food"]), &store()).unwrap();
            let shuffled = sentence_vector(&sent(&perm), &store()).unwrap();
            for (a, b) in base.iter().zip(&shuffled) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
