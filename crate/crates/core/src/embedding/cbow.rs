//! Continuous bag-of-words training with negative sampling.
//!
//! For a target word `w` with context words `c_1..c_C`, the hidden vector is
//! the mean of the context input vectors, `h = (1/C) Σ v_c`. The loss for one
//! training example is
//!
//! ```text
//! L = -log σ(u_w · h) - Σ_n log σ(-u_n · h)
//! ```
//!
//! over negatives `n` drawn from the unigram distribution raised to 3/4.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::build_vocabulary;
use super::EmbeddingStore;
use crate::error::{Error, Result};
use crate::preprocess::TokenizedSentence;

/// Exponent applied to unigram counts for the noise distribution.
pub const NOISE_EXPONENT: f64 = 0.75;

/// Floor on the linearly decayed learning rate, as a fraction of the initial
/// rate.
const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    pub min_count: u64,
    pub rng_seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            window: 5,
            negative_samples: 5,
            epochs: 5,
            initial_learning_rate: 0.025,
            min_count: 5,
            rng_seed: 1,
        }
    }
}

impl CbowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("cbow dim must be >= 2, got {}", self.dim)));
        }
        if self.window == 0 || self.negative_samples == 0 || self.min_count == 0 {
            return Err(Error::Config(
                "cbow window, negative_samples and min_count must be positive".into(),
            ));
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate.is_finite()) {
            return Err(Error::Config("cbow learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Input (word) and output (context-prediction) matrices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowModel {
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl CbowModel {
    /// Input vectors uniform in `[-0.5, 0.5) / dim`, output vectors zero.
    pub fn init<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / dim as f64;
        let input = (0..vocab_size * dim)
            .map(|_| (rng.gen::<f64>() - 0.5) * scale)
            .collect();
        Self {
            dim,
            input,
            output: vec![0.0; vocab_size * dim],
        }
    }

    pub fn from_matrices(dim: usize, input: Vec<f64>, output: Vec<f64>) -> Self {
        assert_eq!(input.len(), output.len());
        assert_eq!(input.len() % dim, 0);
        Self { dim, input, output }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_vector(&self, word: usize) -> &[f64] {
        &self.input[word * self.dim..(word + 1) * self.dim]
    }

    pub fn input_vector_mut(&mut self, word: usize) -> &mut [f64] {
        &mut self.input[word * self.dim..(word + 1) * self.dim]
    }

    pub fn output_vector(&self, word: usize) -> &[f64] {
        &self.output[word * self.dim..(word + 1) * self.dim]
    }

    fn hidden(&self, context: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &c in context {
            for (hi, vi) in h.iter_mut().zip(self.input_vector(c)) {
                *hi += vi;
            }
        }
        let inv = 1.0 / context.len() as f64;
        h.iter_mut().for_each(|x| *x *= inv);
        h
    }

    /// Negative-sampling loss of one example.
    pub fn loss(&self, context: &[usize], target: usize, negatives: &[usize]) -> f64 {
        let h = self.hidden(context);
        let mut loss = -sigmoid(dot(self.output_vector(target), &h)).ln();
        for &n in negatives {
            loss -= sigmoid(-dot(self.output_vector(n), &h)).ln();
        }
        loss
    }

    /// Gradient of [`CbowModel::loss`] with respect to the input vector of a
    /// single context word, counted once per occurrence in `context`.
    pub fn input_gradient(&self, context: &[usize], target: usize, negatives: &[usize], word: usize) -> Vec<f64> {
        let h = self.hidden(context);
        let mut grad_h = vec![0.0; self.dim];
        for (w, label) in std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0))) {
            let u = self.output_vector(w);
            let coeff = sigmoid(dot(u, &h)) - label;
            for (g, ui) in grad_h.iter_mut().zip(u) {
                *g += coeff * ui;
            }
        }
        let occurrences = context.iter().filter(|&&c| c == word).count() as f64;
        let scale = occurrences / context.len() as f64;
        grad_h.iter_mut().for_each(|g| *g *= scale);
        grad_h
    }

    /// One stochastic gradient step on a single example. Output vectors are
    /// updated in sequence; the accumulated hidden-layer error is spread over
    /// the context words with the `1/C` factor of the mean.
    pub fn sgd_step(&mut self, context: &[usize], target: usize, negatives: &[usize], lr: f64) {
        let dim = self.dim;
        let h = self.hidden(context);
        let mut err = vec![0.0; dim];
        for (w, label) in std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0))) {
            let u = &mut self.output[w * dim..(w + 1) * dim];
            let g = lr * (label - sigmoid(dot(u, &h)));
            for i in 0..dim {
                err[i] += g * u[i];
                u[i] += g * h[i];
            }
        }
        let inv = 1.0 / context.len() as f64;
        for &c in context {
            for (vi, ei) in self.input_vector_mut(c).iter_mut().zip(&err) {
                *vi += ei * inv;
            }
        }
    }

    pub(crate) fn into_input(self) -> Vec<f64> {
        self.input
    }
}

/// Trains CBOW embeddings. Training is single-threaded and bit-reproducible
/// for a fixed `rng_seed`.
pub fn train_cbow(corpus: &[TokenizedSentence], config: &CbowConfig) -> Result<EmbeddingStore> {
    config.validate()?;
    let vocab = build_vocabulary(corpus, config.min_count)?;
    let sentences: Vec<Vec<usize>> = corpus.iter().map(|s| vocab.indices(&s.tokens).collect()).collect();
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    if total_tokens < config.window {
        return Err(Error::Training(format!(
            "corpus has {total_tokens} in-vocabulary tokens, fewer than the window size {}",
            config.window
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut model = CbowModel::init(vocab.len(), config.dim, &mut rng);
    let noise = WeightedIndex::new(vocab.counts().iter().map(|&c| (c as f64).powf(NOISE_EXPONENT)))
        .map_err(|e| Error::Training(format!("noise distribution: {e}")))?;

    let planned = (config.epochs * total_tokens) as f64;
    let mut processed = 0usize;
    let mut context = Vec::with_capacity(2 * config.window);
    let mut negatives = Vec::with_capacity(config.negative_samples);

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for sentence in &sentences {
            for (pos, &target) in sentence.iter().enumerate() {
                let reduced = config.window - rng.gen_range(0..config.window);
                let lo = pos.saturating_sub(reduced);
                let hi = (pos + reduced + 1).min(sentence.len());
                context.clear();
                context.extend((lo..hi).filter(|&j| j != pos).map(|j| sentence[j]));
                let lr = config.initial_learning_rate * (1.0 - processed as f64 / (planned + 1.0)).max(MIN_LR_FRACTION);
                processed += 1;
                if context.is_empty() {
                    continue;
                }
                negatives.clear();
                for _ in 0..config.negative_samples {
                    let n = noise.sample(&mut rng);
                    if n != target {
                        negatives.push(n);
                    }
                }
                if log::log_enabled!(log::Level::Debug) {
                    epoch_loss += model.loss(&context, target, &negatives);
                }
                model.sgd_step(&context, target, &negatives, lr);
            }
        }
        log::debug!("cbow epoch {} loss {:.4}", epoch + 1, epoch_loss);
    }

    EmbeddingStore::new(vocab, config.dim, model.into_input())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(seed: u64) -> CbowModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5 * 3;
        let input = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let output = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        CbowModel::from_matrices(3, input, output)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let context = [0, 2, 3];
        let (target, negatives) = (1, [4, 2]);
        for seed in 0..5 {
            let model = random_model(seed);
            let analytic = model.input_gradient(&context, target, &negatives, 2);
            let eps = 1e-6;
            for k in 0..3 {
                let mut plus = model.clone();
                plus.input_vector_mut(2)[k] += eps;
                let mut minus = model.clone();
                minus.input_vector_mut(2)[k] -= eps;
                let numeric =
                    (plus.loss(&context, target, &negatives) - minus.loss(&context, target, &negatives)) / (2.0 * eps);
                let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-12);
                assert!(rel < 1e-4, "seed {seed} coord {k}: {} vs {numeric}", analytic[k]);
            }
        }
    }

    #[test]
    fn sgd_step_descends() {
        let mut model = random_model(9);
        let context = [0, 3];
        let before = model.loss(&context, 1, &[4]);
        model.sgd_step(&context, 1, &[4], 0.05);
        assert!(model.loss(&context, 1, &[4]) < before);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0).is_finite() && sigmoid(-800.0).is_finite());
    }

    fn toy_corpus() -> Vec<TokenizedSentence> {
        let words = ["alpha", "beta", "gamma", "delta", "eps"];
        (0..20)
            .map(|i| {
                let toks = (0..6).map(|j| words[(i + j * 3) % 5].to_string()).collect();
                TokenizedSentence::new(i.to_string(), toks)
            })
            .collect()
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let cfg = CbowConfig {
            dim: 4,
            epochs: 0,
            min_count: 1,
            ..Default::default()
        };
        let store = train_cbow(&toy_corpus(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let init = CbowModel::init(store.vocab().len(), 4, &mut rng);
        for w in 0..store.vocab().len() {
            assert_eq!(store.vector(w), init.input_vector(w));
        }
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let cfg = CbowConfig {
            dim: 8,
            epochs: 3,
            min_count: 1,
            ..Default::default()
        };
        let a = train_cbow(&toy_corpus(), &cfg).unwrap();
        let b = train_cbow(&toy_corpus(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn tiny_corpus_is_training_error() {
        let corpus = vec![TokenizedSentence::new("1", vec!["a".into(), "b".into()])];
        let cfg = CbowConfig {
            min_count: 1,
            ..Default::default()
        };
        assert!(matches!(train_cbow(&corpus, &cfg), Err(Error::Training(_))));
    }

    #[test]
    fn invalid_config() {
        let cfg = CbowConfig {
            dim: 1,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert_eq!(CbowConfig::default().dim, 300);
    }
}
