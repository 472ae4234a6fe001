//! Unsupervised aspect category detection.
//!
//! Review sentences are scored against per-category seed words with the soft
//! cosine measure over a word-embedding similarity kernel. Scores are
//! interpolated with priors computed over k-means clusters of unlabeled
//! reviews, then thresholded. A sentence that receives no category gets the
//! lexicon's fallback category.
//!
//! The modules follow the pipeline order:
//!
//! * [`corpus`]: labeled and unlabeled corpora, the seed lexicon
//! * [`preprocess`]: tokenization and stopwords
//! * [`embedding`]: vocabulary, CBOW training, word2vec text I/O
//! * [`similarity`]: term similarity kernel, soft cosine, sentence scores
//! * [`clustering`]: k-means and per-cluster category scores
//! * [`detector`]: interpolation, thresholding, fallback
//! * [`evaluation`]: micro metrics, baselines, threshold search, sweeps
//! * [`pipeline`]: staged on-disk artifacts used by the `acd` binary

pub mod clustering;
pub mod corpus;
pub mod detector;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod preprocess;
pub mod similarity;

pub use error::{Error, Result};
