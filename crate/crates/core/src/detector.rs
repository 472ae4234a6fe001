//! Final category assignment: interpolate the normalized sentence and
//! cluster scores, threshold, and fall back when nothing passes.

use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{nearest_cluster, ClusterModel};
use crate::corpus::SeedLexicon;
use crate::embedding::{sentence_vector, EmbeddingStore};
use crate::error::{Error, Result};
use crate::preprocess::TokenizedSentence;
use crate::similarity::{CategoryScorer, ScoreVector, TermSimilarityMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Weight of the sentence score; the cluster score gets `1 - alpha`.
    pub alpha: f64,
    /// A category is assigned when its final score is strictly greater.
    pub threshold: f64,
    pub lexicon: SeedLexicon,
}

impl DetectorConfig {
    pub fn new(alpha: f64, threshold: f64, lexicon: SeedLexicon) -> Result<Self> {
        let cfg = Self {
            alpha,
            threshold,
            lexicon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    #[serde(rename = "id")]
    pub sentence_id: String,
    pub scores: ScoreVector,
    pub assigned: Vec<String>,
}

/// Divides by the Euclidean norm over categories; a zero vector stays zero.
pub fn l2_normalize(v: &ScoreVector) -> ScoreVector {
    let norm = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.clone();
    }
    v.map(|x| x / norm)
}

/// `alpha * normalize(sent) + (1 - alpha) * normalize(clust)`.
pub fn interpolate(sent: &ScoreVector, clust: &ScoreVector, alpha: f64) -> ScoreVector {
    assert_eq!(
        sent.categories(),
        clust.categories(),
        "score vectors over different categories"
    );
    let s = l2_normalize(sent);
    let c = l2_normalize(clust);
    let values = s
        .values()
        .iter()
        .zip(c.values())
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    ScoreVector::new(s.categories().to_vec(), values)
}

/// Categories scoring strictly above `threshold`, in lexicon order, or the
/// fallback alone when none does.
pub fn assign_categories(scores: &ScoreVector, threshold: f64, fallback: &str) -> Vec<String> {
    let assigned: Vec<String> = scores
        .iter()
        .filter(|(_, v)| *v > threshold)
        .map(|(c, _)| c.to_string())
        .collect();
    if assigned.is_empty() {
        vec![fallback.to_string()]
    } else {
        assigned
    }
}

/// The scoring half of detection, shared by [`detect`], threshold search
/// and sweeps.
pub struct Detector<'a> {
    scorer: CategoryScorer<'a>,
    store: &'a EmbeddingStore,
    model: &'a ClusterModel,
    alpha: f64,
}

impl<'a> Detector<'a> {
    pub fn new(
        lexicon: &'a SeedLexicon,
        kernel: &'a TermSimilarityMatrix,
        store: &'a EmbeddingStore,
        model: &'a ClusterModel,
        alpha: f64,
    ) -> Self {
        Self {
            scorer: CategoryScorer::new(lexicon, kernel, store.vocab()),
            store,
            model,
            alpha,
        }
    }

    pub fn lexicon(&self) -> &SeedLexicon {
        self.scorer.lexicon()
    }

    /// Final interpolated scores. Sentences without an embedding, and every
    /// sentence when `alpha` is 1, use the sentence scores alone.
    pub fn score(&self, sentence: &TokenizedSentence) -> ScoreVector {
        let sent = self.scorer.sent_score(sentence);
        if self.alpha == 1.0 {
            return l2_normalize(&sent);
        }
        let vec = sentence_vector(sentence, self.store);
        match nearest_cluster(vec.as_deref(), self.model) {
            Some(c) => interpolate(&sent, &self.model.cluster_scores[c], self.alpha),
            None => interpolate(&sent, &sent, 1.0),
        }
    }

    pub fn score_all(&self, sentences: &[TokenizedSentence]) -> Vec<ScoreVector> {
        sentences.par_iter().map(|s| self.score(s)).collect()
    }

    pub fn detect(&self, sentence: &TokenizedSentence, threshold: f64) -> Detection {
        let scores = self.score(sentence);
        let assigned = assign_categories(&scores, threshold, self.lexicon().fallback());
        Detection {
            sentence_id: sentence.source_id.clone(),
            scores,
            assigned,
        }
    }
}

pub fn detect(
    sentence: &TokenizedSentence,
    model: &ClusterModel,
    kernel: &TermSimilarityMatrix,
    store: &EmbeddingStore,
    config: &DetectorConfig,
) -> Detection {
    Detector::new(&config.lexicon, kernel, store, model, config.alpha).detect(sentence, config.threshold)
}

pub fn write_detections_jsonl<W: std::io::Write>(mut w: W, detections: &[Detection]) -> std::io::Result<()> {
    for d in detections {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
