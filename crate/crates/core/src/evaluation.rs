//! Micro-averaged metrics over (sentence, category) pairs, the Random and
//! Majority baselines, threshold search, and alpha / k sensitivity sweeps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_scores_from_similarities, embed_sentences, kmeans, ClusterModel, KmeansConfig};
use crate::corpus::{LabeledSentence, SeedLexicon};
use crate::detector::{assign_categories, Detection, Detector};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::preprocess::{Preprocessor, TokenizedSentence};
use crate::similarity::{CategoryScorer, ScoreVector, TermSimilarityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MicroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MicroMetrics {
    /// Precision and recall default to 1 on an empty denominator; F1 is 0
    /// when both are 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

fn gold_index(gold: &[LabeledSentence]) -> Result<HashMap<&str, &BTreeSet<String>>> {
    let mut map = HashMap::with_capacity(gold.len());
    for g in gold {
        if map.insert(g.id.as_str(), &g.gold_categories).is_some() {
            return Err(Error::Validation(format!("duplicate gold sentence id `{}`", g.id)));
        }
    }
    Ok(map)
}

/// Counts over predicted label sets keyed by sentence id. The ids must
/// cover the gold ids exactly.
pub fn micro_metrics_by_id<'a>(
    predictions: impl IntoIterator<Item = (&'a str, &'a [String])>,
    gold: &[LabeledSentence],
) -> Result<MicroMetrics> {
    let index = gold_index(gold)?;
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut extra = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (id, predicted) in predictions {
        let Some(gold_set) = index.get(id) else {
            extra.push(id.to_string());
            continue;
        };
        if !seen.insert(id) {
            return Err(Error::Validation(format!("duplicate prediction for sentence `{id}`")));
        }
        let predicted: BTreeSet<&str> = predicted.iter().map(String::as_str).collect();
        let hits = predicted.iter().filter(|c| gold_set.contains(**c)).count();
        tp += hits;
        fp += predicted.len() - hits;
        fn_ += gold_set.len() - hits;
    }
    let missing: Vec<&str> = index.keys().copied().filter(|id| !seen.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut missing = missing;
        missing.sort_unstable();
        return Err(Error::Validation(format!(
            "prediction ids do not match gold ids; missing: {missing:?}; extra: {extra:?}"
        )));
    }
    Ok(MicroMetrics::from_counts(tp, fp, fn_))
}

pub fn micro_metrics(predictions: &[Detection], gold: &[LabeledSentence]) -> Result<MicroMetrics> {
    micro_metrics_by_id(
        predictions
            .iter()
            .map(|d| (d.sentence_id.as_str(), d.assigned.as_slice())),
        gold,
    )
}

fn constant_detection(id: &str, assigned: Vec<String>) -> Detection {
    Detection {
        sentence_id: id.to_string(),
        scores: ScoreVector::new(Vec::new(), Vec::new()),
        assigned,
    }
}

/// Assigns each test sentence one category drawn from the category
/// frequencies of the training labels.
pub fn random_baseline(train: &[LabeledSentence], test: &[LabeledSentence], rng_seed: u64) -> Result<Vec<Detection>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in train {
        for c in &s.gold_categories {
            *counts.entry(c.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Validation(
            "random baseline needs a non-empty training set".into(),
        ));
    }
    let (labels, weights): (Vec<&str>, Vec<usize>) = counts.into_iter().unzip();
    let dist = WeightedIndex::new(&weights).expect("positive counts");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(test
        .iter()
        .map(|s| constant_detection(&s.id, vec![labels[dist.sample(&mut rng)].to_string()]))
        .collect())
}

/// The `n` most frequent training categories, most frequent first; ties
/// are broken by name.
pub fn most_common_categories(train: &[LabeledSentence], n: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in train {
        for c in &s.gold_categories {
            *counts.entry(c.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(c, _)| c.to_string()).collect()
}

/// The two labels the Majority baseline assigns on restaurant data.
pub fn restaurant_majority_labels() -> Vec<String> {
    vec!["food".to_string(), "anecdotes/miscellaneous".to_string()]
}

/// Assigns the same label set to every test sentence.
pub fn majority_baseline(test: &[LabeledSentence], labels: &[String]) -> Vec<Detection> {
    test.iter()
        .map(|s| constant_detection(&s.id, labels.to_vec()))
        .collect()
}

/// Final scores of one sentence, kept so that thresholds can be tried
/// without rescoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub id: String,
    pub scores: ScoreVector,
}

pub fn apply_threshold(scored: &[ScoredSentence], threshold: f64, fallback: &str) -> Vec<Detection> {
    scored
        .iter()
        .map(|s| Detection {
            sentence_id: s.id.clone(),
            scores: s.scores.clone(),
            assigned: assign_categories(&s.scores, threshold, fallback),
        })
        .collect()
}

fn metrics_at(
    scored: &[ScoredSentence],
    gold: &[LabeledSentence],
    threshold: f64,
    fallback: &str,
) -> Result<MicroMetrics> {
    let assigned: Vec<Vec<String>> = scored
        .iter()
        .map(|s| assign_categories(&s.scores, threshold, fallback))
        .collect();
    micro_metrics_by_id(
        scored.iter().zip(&assigned).map(|(s, a)| (s.id.as_str(), a.as_slice())),
        gold,
    )
}

/// `0.00, 0.01, ..., 1.00`.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Tries every grid threshold and keeps the best micro-F1; ties go to the
/// smallest threshold.
pub fn threshold_search(
    scored: &[ScoredSentence],
    gold: &[LabeledSentence],
    grid: &[f64],
    fallback: &str,
) -> Result<(f64, MicroMetrics)> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    if grid
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::Config("threshold grid must be strictly increasing".into()));
    }
    let results: Vec<MicroMetrics> = grid
        .par_iter()
        .map(|&t| metrics_at(scored, gold, t, fallback))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, m) in results.iter().enumerate() {
        if m.f1 > results[best].f1 {
            best = i;
        }
    }
    Ok((grid[best], results[best]))
}

/// Gold sentences with their tokenized text.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub gold: Vec<LabeledSentence>,
    pub tokens: Vec<TokenizedSentence>,
}

impl LabeledSet {
    pub fn new(gold: Vec<LabeledSentence>, preprocessor: &Preprocessor) -> Self {
        let tokens = gold.iter().map(|g| preprocessor.sentence(&g.id, &g.text)).collect();
        Self { gold, tokens }
    }
}

/// Where the threshold is tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// Tune on the development set, report on the test set.
    DevSet,
    /// Tune directly on the test set.
    TestSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalPoint {
    pub value: f64,
    pub threshold: f64,
    pub metrics: MicroMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub parameter: String,
    pub points: Vec<EvalPoint>,
}

impl SweepResult {
    /// `param,value,precision,recall,f1`, one row per sweep point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,value,precision,recall,f1\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.parameter, p.value, p.metrics.precision, p.metrics.recall, p.metrics.f1
            );
        }
        out
    }
}

/// Shared, immutable state for evaluation and sweeps: the embedding space,
/// the kernel, the unlabeled corpus (embedded and scored once), and the
/// labeled sets.
pub struct EvalContext<'a> {
    pub lexicon: &'a SeedLexicon,
    pub kernel: &'a TermSimilarityMatrix,
    pub store: &'a EmbeddingStore,
    pub dev: Option<&'a LabeledSet>,
    pub test: &'a LabeledSet,
    pub mode: TuningMode,
    pub grid: Vec<f64>,
    pub kmeans: KmeansConfig,
    points: Vec<Vec<f64>>,
    similarities: Vec<Vec<f64>>,
}

impl<'a> EvalContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lexicon: &'a SeedLexicon,
        kernel: &'a TermSimilarityMatrix,
        store: &'a EmbeddingStore,
        unlabeled: &[TokenizedSentence],
        dev: Option<&'a LabeledSet>,
        test: &'a LabeledSet,
        mode: TuningMode,
        kmeans: KmeansConfig,
    ) -> Self {
        let scorer = CategoryScorer::new(lexicon, kernel, store.vocab());
        let (members, points) = embed_sentences(unlabeled, store);
        let similarities = members.par_iter().map(|s| scorer.similarities(s)).collect();
        Self {
            lexicon,
            kernel,
            store,
            dev,
            test,
            mode,
            grid: default_threshold_grid(),
            kmeans,
            points,
            similarities,
        }
    }

    /// The effective tuning mode: without a development set the threshold
    /// is tuned on the test set.
    pub fn effective_mode(&self) -> TuningMode {
        match (self.mode, self.dev) {
            (TuningMode::DevSet, Some(_)) => TuningMode::DevSet,
            _ => TuningMode::TestSet,
        }
    }

    pub fn cluster(&self, k: usize) -> Result<ClusterModel> {
        let config = KmeansConfig {
            k,
            ..self.kmeans.clone()
        };
        let result = kmeans(&self.points, &config)?;
        let cluster_scores = cluster_scores_from_similarities(
            &result.assignments,
            &self.similarities,
            k,
            &self.lexicon.category_names(),
        );
        let mut sizes = vec![0; k];
        for &a in &result.assignments {
            sizes[a] += 1;
        }
        Ok(ClusterModel {
            centroids: result.centroids,
            cluster_scores,
            sizes,
        })
    }

    pub fn score(&self, model: &ClusterModel, alpha: f64, set: &LabeledSet) -> Vec<ScoredSentence> {
        let detector = Detector::new(self.lexicon, self.kernel, self.store, model, alpha);
        detector
            .score_all(&set.tokens)
            .into_iter()
            .zip(&set.gold)
            .map(|(scores, g)| ScoredSentence {
                id: g.id.clone(),
                scores,
            })
            .collect()
    }

    /// Tunes the threshold and reports test metrics for one (model, alpha).
    pub fn evaluate(&self, model: &ClusterModel, alpha: f64) -> Result<EvalPoint> {
        let fallback = self.lexicon.fallback();
        let test_scores = self.score(model, alpha, self.test);
        let threshold = match (self.effective_mode(), self.dev) {
            (TuningMode::DevSet, Some(dev)) => {
                let dev_scores = self.score(model, alpha, dev);
                threshold_search(&dev_scores, &dev.gold, &self.grid, fallback)?.0
            }
            _ => threshold_search(&test_scores, &self.test.gold, &self.grid, fallback)?.0,
        };
        let metrics = metrics_at(&test_scores, &self.test.gold, threshold, fallback)?;
        Ok(EvalPoint {
            value: alpha,
            threshold,
            metrics,
        })
    }

    /// Clusters once with `k` and evaluates every alpha.
    pub fn sweep_alpha(&self, alphas: &[f64], k: usize) -> Result<SweepResult> {
        check_sorted(alphas, "alpha")?;
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
        }
        let model = self.cluster(k)?;
        let points = alphas
            .par_iter()
            .map(|&alpha| self.evaluate(&model, alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult {
            parameter: "alpha".into(),
            points,
        })
    }

    /// Re-clusters for every k and evaluates at a fixed alpha.
    pub fn sweep_k(&self, ks: &[usize], alpha: f64) -> Result<SweepResult> {
        let as_f64: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        check_sorted(&as_f64, "k")?;
        let points = ks
            .par_iter()
            .map(|&k| {
                let model = self.cluster(k)?;
                let mut point = self.evaluate(&model, alpha)?;
                point.value = k as f64;
                Ok(point)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult {
            parameter: "k".into(),
            points,
        })
    }
}

fn check_sorted(values: &[f64], name: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} sweep needs at least one value")));
    }
    if values
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::Config(format!(
            "{name} sweep values must be strictly increasing"
        )));
    }
    Ok(())
}
