//! k-means over averaged sentence embeddings and per-cluster category
//! scores.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{sentence_vector, EmbeddingStore};
use crate::error::{Error, Result};
use crate::preprocess::TokenizedSentence;
use crate::similarity::{calibrate, CategoryScorer, ScoreVector};

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Convergence bound on the largest per-coordinate centroid shift.
    pub tolerance: f64,
    pub rng_seed: u64,
    pub n_init: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            k: 17,
            max_iters: 300,
            tolerance: 1e-4,
            rng_seed: 0,
            n_init: 10,
        }
    }
}

impl KmeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_iters == 0 || self.n_init == 0 {
            return Err(Error::Config("k-means k, max_iters and n_init must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::Config("k-means tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning restart; the last
    /// entry equals `inertia`.
    pub inertia_trace: Vec<f64>,
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|p| nearest_centroid(p, centroids)).unzip()
}

fn kmeans_plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut closest: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&closest) {
            Ok(dist) => dist.sample(rng),
            // Every point coincides with a chosen centre.
            Err(_) => rng.gen_range(0..points.len()),
        };
        let c = points[next].clone();
        for (d, p) in closest.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd<R: Rng>(points: &[Vec<f64>], config: &KmeansConfig, rng: &mut R) -> KmeansResult {
    let k = config.k;
    let dim = points[0].len();
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        iterations += 1;
        let (mut assignments, mut dists) = assign(points, &centroids);
        trace.push(dists.iter().sum());

        let mut sizes = vec![0usize; k];
        for &a in &assignments {
            sizes[a] += 1;
        }
        // Empty clusters take over the point farthest from its own centroid.
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let donor = (0..points.len())
                .filter(|&i| sizes[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                sizes[assignments[i]] -= 1;
                assignments[i] = c;
                sizes[c] = 1;
                dists[i] = 0.0;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if sizes[c] == 0 {
                continue;
            }
            let inv = sizes[c] as f64;
            for (old, s) in centroids[c].iter_mut().zip(&sums[c]) {
                let new = s / inv;
                shift = shift.max((new - *old).abs());
                *old = new;
            }
        }
        if shift <= config.tolerance {
            break;
        }
    }

    let (assignments, dists) = assign(points, &centroids);
    let inertia = dists.iter().sum();
    trace.push(inertia);
    KmeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
        inertia_trace: trace,
    }
}

/// Lloyd's algorithm with k-means++ seeding under the Euclidean metric. The
/// restart with the lowest inertia wins; earlier restarts win ties.
pub fn kmeans(points: &[Vec<f64>], config: &KmeansConfig) -> Result<KmeansResult> {
    config.validate()?;
    if points.len() < config.k {
        return Err(Error::Config(format!(
            "k-means needs at least k = {} points, got {}",
            config.k,
            points.len()
        )));
    }
    let dim = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::Validation(
            "k-means points must be finite and share one dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut best: Option<KmeansResult> = None;
    for run in 0..config.n_init {
        let result = lloyd(points, config, &mut rng);
        log::debug!(
            "k-means restart {run}: inertia {} after {} iterations",
            result.inertia,
            result.iterations
        );
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Centroids plus calibrated per-cluster category scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub cluster_scores: Vec<ScoreVector>,
    pub sizes: Vec<usize>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.centroids.len();
        if k == 0 || self.cluster_scores.len() != k || self.sizes.len() != k {
            return Err(Error::Validation("cluster model parts disagree on k".into()));
        }
        let dim = self.dim();
        if self
            .centroids
            .iter()
            .any(|c| c.len() != dim || c.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Validation(
                "centroids must be finite and share one dimension".into(),
            ));
        }
        if self
            .cluster_scores
            .iter()
            .flat_map(|s| s.values())
            .any(|v| !(*v > 0.0 && *v < 1.0))
        {
            return Err(Error::Validation("cluster scores must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-cluster mean of the uncalibrated member similarities, then the
/// sigmoid. Empty clusters average to 0 and score 0.5.
pub fn cluster_scores_from_similarities(
    assignments: &[usize],
    similarities: &[Vec<f64>],
    k: usize,
    categories: &[String],
) -> Vec<ScoreVector> {
    assert_eq!(assignments.len(), similarities.len());
    let c = categories.len();
    let mut sums = vec![vec![0.0; c]; k];
    let mut sizes = vec![0usize; k];
    for (&a, sims) in assignments.iter().zip(similarities) {
        sizes[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(sims) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(sizes)
        .map(|(sum, n)| {
            let values = sum
                .into_iter()
                .map(|s| calibrate(if n == 0 { 0.0 } else { s / n as f64 }))
                .collect();
            ScoreVector::new(categories.to_vec(), values)
        })
        .collect()
}

pub fn cluster_category_scores(
    assignments: &[usize],
    sentences: &[TokenizedSentence],
    k: usize,
    scorer: &CategoryScorer,
) -> Vec<ScoreVector> {
    let sims: Vec<Vec<f64>> = sentences.par_iter().map(|s| scorer.similarities(s)).collect();
    cluster_scores_from_similarities(assignments, &sims, k, &scorer.lexicon().category_names())
}

/// Sentences that have an embedding, with their vectors. Sentences whose
/// tokens are all out of vocabulary are dropped.
pub fn embed_sentences<'a>(
    sentences: &'a [TokenizedSentence],
    store: &EmbeddingStore,
) -> (Vec<&'a TokenizedSentence>, Vec<Vec<f64>>) {
    let embedded: Vec<(&TokenizedSentence, Vec<f64>)> = sentences
        .iter()
        .filter_map(|s| sentence_vector(s, store).map(|v| (s, v)))
        .collect();
    let dropped = sentences.len() - embedded.len();
    if dropped > 0 {
        log::info!("{dropped} sentences without in-vocabulary tokens excluded from clustering");
    }
    embedded.into_iter().unzip()
}

/// Clusters the embedded sentences and scores every cluster.
pub fn build_cluster_model(
    sentences: &[TokenizedSentence],
    store: &EmbeddingStore,
    scorer: &CategoryScorer,
    config: &KmeansConfig,
) -> Result<ClusterModel> {
    let (members, points) = embed_sentences(sentences, store);
    let result = kmeans(&points, config)?;
    let owned: Vec<TokenizedSentence> = members.into_iter().cloned().collect();
    let cluster_scores = cluster_category_scores(&result.assignments, &owned, config.k, scorer);
    let mut sizes = vec![0; config.k];
    for &a in &result.assignments {
        sizes[a] += 1;
    }
    Ok(ClusterModel {
        centroids: result.centroids,
        cluster_scores,
        sizes,
    })
}

/// Closest centroid to a sentence vector, or `None` for a sentence without
/// one.
pub fn nearest_cluster(sentence_vec: Option<&[f64]>, model: &ClusterModel) -> Option<usize> {
    let v = sentence_vec?;
    assert_eq!(v.len(), model.dim(), "sentence vector dimension mismatch");
    Some(nearest_centroid(v, &model.centroids).0)
}

#[derive(Serialize, Deserialize)]
struct ClusterHeader {
    k: usize,
    dim: usize,
    sizes: Vec<usize>,
    categories: Vec<String>,
    cluster_scores: Vec<Vec<f64>>,
    centroids_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

/// Path of the centroid matrix that accompanies a model header.
pub fn centroids_path(header: &Path) -> PathBuf {
    header.with_extension("centroids.txt")
}

/// Writes the JSON header and, next to it, a text centroid matrix with one
/// row per line. Values use the shortest round-trip representation.
pub fn save_cluster_model(header_path: &Path, model: &ClusterModel, config_hash: Option<&str>) -> Result<()> {
    model.validate()?;
    let matrix_path = centroids_path(header_path);
    let header = ClusterHeader {
        k: model.k(),
        dim: model.dim(),
        sizes: model.sizes.clone(),
        categories: model.cluster_scores[0].categories().to_vec(),
        cluster_scores: model.cluster_scores.iter().map(|s| s.values().to_vec()).collect(),
        centroids_file: matrix_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        config_hash: config_hash.map(str::to_string),
    };
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    std::fs::write(header_path, json + "\n").map_err(|e| Error::io(header_path, e))?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(&matrix_path).map_err(|e| Error::io(&matrix_path, e))?);
    for row in &model.centroids {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).map_err(|e| Error::io(&matrix_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&matrix_path, e))
}

/// Loads a model saved by [`save_cluster_model`], returning it with the
/// recorded config hash.
pub fn load_cluster_model(header_path: &Path) -> Result<(ClusterModel, Option<String>)> {
    let origin = header_path.display().to_string();
    let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: ClusterHeader =
        serde_json::from_str(&text).map_err(|e| Error::parse(&origin, e.line(), Some(e.column()), e.to_string()))?;
    let matrix_path = header_path.with_file_name(&header.centroids_file);
    let matrix_origin = matrix_path.display().to_string();
    let matrix = std::fs::read_to_string(&matrix_path).map_err(|e| Error::io(&matrix_path, e))?;

    let mut centroids = Vec::with_capacity(header.k);
    for (i, line) in matrix.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(&matrix_origin, i + 1, None, e.to_string()))?;
        if row.len() != header.dim {
            return Err(Error::parse(
                &matrix_origin,
                i + 1,
                None,
                format!("expected {} values, found {}", header.dim, row.len()),
            ));
        }
        centroids.push(row);
    }
    if centroids.len() != header.k || header.cluster_scores.len() != header.k {
        return Err(Error::parse(
            &origin,
            1,
            None,
            format!("model declares k = {} but rows disagree", header.k),
        ));
    }
    let model = ClusterModel {
        centroids,
        cluster_scores: header
            .cluster_scores
            .into_iter()
            .map(|v| ScoreVector::new(header.categories.clone(), v))
            .collect(),
        sizes: header.sizes,
    };
    model.validate()?;
    Ok((model, header.config_hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let centres = [[-5.0, -5.0], [5.0, 5.0]];
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (label, c) in centres.iter().enumerate() {
            for _ in 0..30 {
                points.push(vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
                labels.push(label);
            }
        }
        (points, labels)
    }

    fn cfg(k: usize) -> KmeansConfig {
        KmeansConfig {
            k,
            ..Default::default()
        }
    }

    #[test]
    fn single_cluster_is_mean() {
        let points = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        let r = kmeans(&points, &cfg(1)).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 0]);
        assert!((r.centroids[0][0] - 2.0).abs() < 1e-12);
        assert!((r.centroids[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_blobs_recovered() {
        let (points, labels) = blobs(3);
        let r = kmeans(&points, &cfg(2)).unwrap();
        let flip = r.assignments[0] != labels[0];
        for (a, l) in r.assignments.iter().zip(&labels) {
            assert_eq!(*a, if flip { 1 - l } else { *l });
        }
        for blob in 0..2 {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == blob)
                .map(|(p, _)| p)
                .collect();
            let mean_x = members.iter().map(|p| p[0]).sum::<f64>() / members.len() as f64;
            let c = if flip { 1 - blob } else { blob };
            assert!((r.centroids[c][0] - mean_x).abs() < 1e-9);
        }
    }

    #[test]
    fn k_equals_n_is_exact() {
        let points = vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]];
        let r = kmeans(&points, &cfg(4)).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut seen = r.assignments.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_points_and_empty_clusters() {
        let points = vec![vec![1.0, 1.0]; 5]
            .into_iter()
            .chain([vec![3.0, 3.0]])
            .collect::<Vec<_>>();
        let r = kmeans(&points, &cfg(3)).unwrap();
        assert!(r.centroids.iter().flatten().all(|x| x.is_finite()));
        assert!(r.inertia.abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(kmeans(&[vec![1.0]], &cfg(2)), Err(Error::Config(_))));
    }

    #[test]
    fn inertia_never_increases() {
        let (points, _) = blobs(8);
        let r = kmeans(
            &points,
            &KmeansConfig {
                k: 5,
                n_init: 3,
                ..Default::default()
            },
        )
        .unwrap();
        for w in r.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", r.inertia_trace);
        }
    }

    #[test]
    fn nearest_cluster_ties_and_absent() {
        let model = ClusterModel {
            centroids: vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![5.0, 5.0],
                vec![2.0, 2.0],
                vec![-1.0, 0.0],
            ],
            cluster_scores: vec![ScoreVector::filled(vec!["food".into()], 0.5); 5],
            sizes: vec![1; 5],
        };
        assert_eq!(nearest_cluster(Some(&[2.0, 2.0]), &model), Some(3));
        assert_eq!(nearest_cluster(Some(&[0.0, 0.0]), &model), Some(0));
        // Equidistant from centroids 1 and 4.
        let m2 = ClusterModel {
            centroids: vec![
                vec![9.0, 9.0],
                vec![1.0, 0.0],
                vec![7.0, 7.0],
                vec![8.0, 8.0],
                vec![-1.0, 0.0],
            ],
            ..model.clone()
        };
        assert_eq!(nearest_cluster(Some(&[0.0, 0.0]), &m2), Some(1));
        assert_eq!(nearest_cluster(None, &model), None);
    }

    #[test]
    fn cluster_scores_average_before_sigmoid() {
        let cats = vec!["food".to_string()];
        let scores = cluster_scores_from_similarities(&[0, 0, 1], &[vec![0.2], vec![0.4], vec![0.7]], 3, &cats);
        assert!((scores[0].values()[0] - calibrate(0.3)).abs() < 1e-15);
        assert_eq!(scores[1].values()[0], calibrate(0.7));
        assert_eq!(scores[2].values()[0], 0.5);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cluster_model.json");
        let model = ClusterModel {
            centroids: vec![vec![0.1, -2.0 / 3.0], vec![1e-300, 7.25]],
            cluster_scores: vec![
                ScoreVector::new(vec!["food".into(), "price".into()], vec![calibrate(0.123), 0.5]),
                ScoreVector::new(vec!["food".into(), "price".into()], vec![0.51, calibrate(1.0 / 3.0)]),
            ],
            sizes: vec![4, 2],
        };
        save_cluster_model(&path, &model, Some("abc")).unwrap();
        let (back, hash) = load_cluster_model(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(hash.as_deref(), Some("abc"));
    }
}
