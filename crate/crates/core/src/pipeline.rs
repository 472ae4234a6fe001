//! Staged batch pipeline with on-disk artifacts.
//!
//! Stages and the files they leave in the artifact directory:
//!
//! | stage     | files                                                      |
//! |-----------|------------------------------------------------------------|
//! | `ingest`  | `sentences.txt`                                            |
//! | `train`   | `embeddings.txt`                                           |
//! | `cluster` | `term_similarity.txt`, `cluster_model.json` (+ centroids)  |
//! | `eval`    | `metrics.json`, `threshold.json`                           |
//!
//! Each stage also writes `<stage>.stage.json` recording a hash of every
//! setting and input it depends on, chained through its upstream stages.
//! Downstream commands recompute the expected hash from the current config
//! and refuse to run on a mismatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{build_cluster_model, load_cluster_model, save_cluster_model, ClusterModel, KmeansConfig};
use crate::corpus::{
    ingest_unlabeled, load_seed_lexicon, parse_labeled_corpus, validate_labels, LabeledFormat, LabeledSentence,
    SeedLexicon,
};
use crate::detector::{write_detections_jsonl, Detection, Detector};
use crate::embedding::{load_word2vec_text, save_word2vec_text, train_cbow, CbowConfig, EmbeddingStore};
use crate::error::{Error, Result};
use crate::evaluation::{
    majority_baseline, micro_metrics, most_common_categories, random_baseline, restaurant_majority_labels, EvalContext,
    LabeledSet, MicroMetrics, SweepResult, TuningMode,
};
use crate::preprocess::{Preprocessor, StopwordSet, TokenizedSentence};
use crate::similarity::{
    build_term_similarity, load_term_similarity, save_term_similarity, KernelParams, TermSimilarityMatrix,
};

pub const SENTENCES_FILE: &str = "sentences.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const KERNEL_FILE: &str = "term_similarity.txt";
pub const CLUSTER_FILE: &str = "cluster_model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const THRESHOLD_FILE: &str = "threshold.json";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub unlabeled: Option<PathBuf>,
    pub labeled_train: Option<PathBuf>,
    pub labeled_dev: Option<PathBuf>,
    pub labeled_test: Option<PathBuf>,
    pub labeled_format: Option<LabeledFormat>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// Pretrained word2vec text vectors used instead of training.
    pub embeddings: Option<PathBuf>,
    pub artifacts: PathBuf,
    pub cbow: CbowConfig,
    pub kmeans: KmeansConfig,
    pub kernel: KernelParams,
    pub alpha: f64,
    pub threshold: Option<f64>,
    pub tune_on_test: bool,
    pub grid_step: f64,
    pub baseline_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            unlabeled: None,
            labeled_train: None,
            labeled_dev: None,
            labeled_test: None,
            labeled_format: None,
            lexicon: None,
            stopwords: None,
            embeddings: None,
            artifacts: PathBuf::from("artifacts"),
            cbow: CbowConfig::default(),
            kmeans: KmeansConfig::default(),
            kernel: KernelParams::default(),
            alpha: 0.7,
            threshold: None,
            tune_on_test: false,
            grid_step: 0.01,
            baseline_seed: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl PipelineConfig {
    /// Sets every random seed at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.cbow.rng_seed = seed;
        self.kmeans.rng_seed = seed;
        self.baseline_seed = seed;
    }

    /// Applies one `key = value` setting. Relative paths are resolved
    /// against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || -> PathBuf {
            let p = PathBuf::from(value);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "unlabeled" => self.unlabeled = Some(path()),
            "labeled.train" => self.labeled_train = Some(path()),
            "labeled.dev" => self.labeled_dev = Some(path()),
            "labeled.test" => self.labeled_test = Some(path()),
            "labeled.format" => self.labeled_format = Some(value.parse()?),
            "lexicon" => self.lexicon = Some(path()),
            "stopwords" => self.stopwords = Some(path()),
            "embeddings" => self.embeddings = Some(path()),
            "artifacts" => self.artifacts = path(),
            "seed" => self.set_seed(parse_value(key, value)?),
            "cbow.dim" => self.cbow.dim = parse_value(key, value)?,
            "cbow.window" => self.cbow.window = parse_value(key, value)?,
            "cbow.negative" => self.cbow.negative_samples = parse_value(key, value)?,
            "cbow.epochs" => self.cbow.epochs = parse_value(key, value)?,
            "cbow.learning_rate" => self.cbow.initial_learning_rate = parse_value(key, value)?,
            "cbow.min_count" => self.cbow.min_count = parse_value(key, value)?,
            "cbow.seed" => self.cbow.rng_seed = parse_value(key, value)?,
            "kmeans.k" => self.kmeans.k = parse_value(key, value)?,
            "kmeans.max_iters" => self.kmeans.max_iters = parse_value(key, value)?,
            "kmeans.tolerance" => self.kmeans.tolerance = parse_value(key, value)?,
            "kmeans.n_init" => self.kmeans.n_init = parse_value(key, value)?,
            "kmeans.seed" => self.kmeans.rng_seed = parse_value(key, value)?,
            "kernel.exponent" => self.kernel.exponent = parse_value(key, value)?,
            "kernel.threshold" => self.kernel.threshold = parse_value(key, value)?,
            "kernel.nonzero_limit" => self.kernel.nonzero_limit = parse_value(key, value)?,
            "detector.alpha" => self.alpha = parse_value(key, value)?,
            "detector.threshold" => self.threshold = Some(parse_value(key, value)?),
            "eval.tune_on_test" => self.tune_on_test = parse_value(key, value)?,
            "eval.grid_step" => self.grid_step = parse_value(key, value)?,
            "eval.baseline_seed" => self.baseline_seed = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. `#` starts a comment. A `seed`
    /// line applies before the specific `*.seed` keys, wherever it appears.
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(origin, idx + 1, None, "expected `key = value`"));
            };
            entries.push((idx + 1, k.trim().to_string(), v.trim().to_string()));
        }
        entries.sort_by_key(|(_, k, _)| k != "seed");
        let mut config = Self::default();
        for (line, k, v) in entries {
            config.set(&k, &v, base).map_err(|e| match e {
                Error::Config(msg) => Error::parse(origin, line, None, msg),
                other => other,
            })?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn validate(&self) -> Result<()> {
        self.cbow.validate()?;
        self.kmeans.validate()?;
        self.kernel.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "detector.alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::Config("eval.grid_step must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.artifacts.join(name)
    }

    pub fn lexicon(&self) -> Result<SeedLexicon> {
        match &self.lexicon {
            Some(p) => load_seed_lexicon(p),
            None => Ok(SeedLexicon::restaurant_default()),
        }
    }

    pub fn stopword_set(&self) -> Result<StopwordSet> {
        match &self.stopwords {
            Some(p) => StopwordSet::load(p),
            None => Ok(StopwordSet::english()),
        }
    }

    pub fn threshold_grid(&self) -> Vec<f64> {
        let steps = (1.0 / self.grid_step).round() as usize;
        (0..=steps).map(|i| i as f64 / steps as f64).collect()
    }

    fn labeled(&self, path: &Path, lexicon: &SeedLexicon) -> Result<Vec<LabeledSentence>> {
        let format = self
            .labeled_format
            .unwrap_or_else(|| LabeledFormat::from_extension(path));
        let corpus = parse_labeled_corpus(path, format)?;
        validate_labels(&corpus, lexicon)?;
        Ok(corpus)
    }
}

fn require_path<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` is not set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("`{key}` points to missing file {}", p.display())));
    }
    Ok(p)
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    format!("{:x}", h.finalize())
}

/// Stage hashes derived from the configuration and input files.
pub struct StageHashes<'a> {
    config: &'a PipelineConfig,
}

impl<'a> StageHashes<'a> {
    pub fn new(config: &'a PipelineConfig) -> Self {
        Self { config }
    }

    pub fn ingest(&self) -> Result<String> {
        let c = self.config;
        let unlabeled = require_path(&c.unlabeled, "unlabeled")?;
        let lexicon = c.lexicon()?;
        let filter: Vec<String> = lexicon.name_filter().words().map(str::to_string).collect();
        Ok(digest(&["ingest/v1", &file_digest(unlabeled)?, &filter.join(",")]))
    }

    pub fn train(&self) -> Result<String> {
        let c = self.config;
        let stop = match &c.stopwords {
            Some(p) => file_digest(p)?,
            None => "bundled".into(),
        };
        let source = match &c.embeddings {
            Some(p) => format!("pretrained:{}", file_digest(p)?),
            None => format!("{:?}", c.cbow),
        };
        Ok(digest(&["train/v1", &self.ingest()?, &stop, &source]))
    }

    pub fn cluster(&self) -> Result<String> {
        let c = self.config;
        let lexicon = c.lexicon()?;
        Ok(digest(&[
            "cluster/v1",
            &self.train()?,
            &lexicon.to_json(),
            &format!("{:?}", c.kernel),
            &format!("{:?}", c.kmeans),
        ]))
    }

    pub fn eval(&self) -> Result<String> {
        let c = self.config;
        let mut parts = vec!["eval/v1".to_string(), self.cluster()?, format!("{:?}", c.alpha)];
        for p in [&c.labeled_train, &c.labeled_dev, &c.labeled_test] {
            parts.push(match p {
                Some(p) => file_digest(p)?,
                None => "-".into(),
            });
        }
        parts.push(format!(
            "{:?} {} {} {:?}",
            c.labeled_format, c.tune_on_test, c.grid_step, c.baseline_seed
        ));
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        Ok(digest(&refs))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StageRecord {
    stage: String,
    config_hash: String,
    files: Vec<String>,
}

fn record_path(artifacts: &Path, stage: &str) -> PathBuf {
    artifacts.join(format!("{stage}.stage.json"))
}

fn write_record(artifacts: &Path, stage: &str, hash: &str, files: &[&str]) -> Result<()> {
    let record = StageRecord {
        stage: stage.to_string(),
        config_hash: hash.to_string(),
        files: files.iter().map(|f| f.to_string()).collect(),
    };
    let path = record_path(artifacts, stage);
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Checks that `stage` ran with the configuration that hashes to `expected`.
pub fn require_stage(artifacts: &Path, stage: &str, expected: &str) -> Result<()> {
    let path = record_path(artifacts, stage);
    let missing = |detail: String| Error::MissingArtifact {
        stage: stage.to_string(),
        detail,
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|_| missing(format!("{} not found; run `{stage}` first", path.display())))?;
    let record: StageRecord =
        serde_json::from_str(&text).map_err(|e| missing(format!("unreadable {}: {e}", path.display())))?;
    for f in &record.files {
        if !artifacts.join(f).exists() {
            return Err(missing(format!("{f} not found; run `{stage}` again")));
        }
    }
    if record.config_hash != expected {
        return Err(Error::StaleArtifact {
            stage: stage.to_string(),
        });
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Filters the unlabeled reviews and writes one sentence per line.
pub fn run_ingest(config: &PipelineConfig) -> Result<usize> {
    let hash = StageHashes::new(config).ingest()?;
    let unlabeled = require_path(&config.unlabeled, "unlabeled")?;
    let lexicon = config.lexicon()?;
    let sentences = ingest_unlabeled(unlabeled, &lexicon.name_filter())?;
    if sentences.is_empty() {
        return Err(Error::Validation(format!(
            "no sentence in {} contains a category name",
            unlabeled.display()
        )));
    }
    ensure_dir(&config.artifacts)?;
    let out = config.artifact(SENTENCES_FILE);
    let mut body = String::new();
    for s in &sentences {
        body.push_str(&s.text.replace(['\n', '\r'], " "));
        body.push('\n');
    }
    std::fs::write(&out, body).map_err(|e| Error::io(&out, e))?;
    write_record(&config.artifacts, "ingest", &hash, &[SENTENCES_FILE])?;
    log::info!("ingest: kept {} sentences -> {}", sentences.len(), out.display());
    Ok(sentences.len())
}

fn read_sentences(config: &PipelineConfig, pre: &Preprocessor) -> Result<Vec<TokenizedSentence>> {
    let path = config.artifact(SENTENCES_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, line)| pre.sentence(&(i + 1).to_string(), line))
        .collect())
}

/// Trains CBOW vectors on the ingested sentences, or loads pretrained ones.
pub fn run_train(config: &PipelineConfig) -> Result<EmbeddingStore> {
    let hashes = StageHashes::new(config);
    require_stage(&config.artifacts, "ingest", &hashes.ingest()?)?;
    let hash = hashes.train()?;
    let store = match &config.embeddings {
        Some(p) => load_word2vec_text(p)?,
        None => {
            let pre = Preprocessor::new(config.stopword_set()?);
            let corpus = read_sentences(config, &pre)?;
            train_cbow(&corpus, &config.cbow)?
        }
    };
    save_word2vec_text(&config.artifact(EMBEDDINGS_FILE), &store)?;
    write_record(&config.artifacts, "train", &hash, &[EMBEDDINGS_FILE])?;
    log::info!("train: {} words x {} dims", store.len(), store.dim());
    Ok(store)
}

/// Builds the similarity kernel and the cluster model.
pub fn run_cluster(config: &PipelineConfig) -> Result<ClusterModel> {
    let hashes = StageHashes::new(config);
    require_stage(&config.artifacts, "ingest", &hashes.ingest()?)?;
    require_stage(&config.artifacts, "train", &hashes.train()?)?;
    let hash = hashes.cluster()?;
    let lexicon = config.lexicon()?;
    let store = load_word2vec_text(&config.artifact(EMBEDDINGS_FILE))?;
    let kernel = build_term_similarity(&store, config.kernel)?;
    save_term_similarity(&config.artifact(KERNEL_FILE), &kernel)?;

    let pre = Preprocessor::new(config.stopword_set()?);
    let sentences = read_sentences(config, &pre)?;
    let scorer = crate::similarity::CategoryScorer::new(&lexicon, &kernel, store.vocab());
    let model = build_cluster_model(&sentences, &store, &scorer, &config.kmeans)?;
    save_cluster_model(&config.artifact(CLUSTER_FILE), &model, Some(&hash))?;
    let centroids = crate::clustering::centroids_path(Path::new(CLUSTER_FILE));
    write_record(
        &config.artifacts,
        "cluster",
        &hash,
        &[KERNEL_FILE, CLUSTER_FILE, &centroids.to_string_lossy()],
    )?;
    log::info!("cluster: k = {}, sizes {:?}", model.k(), model.sizes);
    Ok(model)
}

/// Everything detection needs, loaded from the artifact directory.
pub struct LoadedModel {
    pub lexicon: SeedLexicon,
    pub preprocessor: Preprocessor,
    pub store: EmbeddingStore,
    pub kernel: TermSimilarityMatrix,
    pub model: ClusterModel,
}

impl LoadedModel {
    /// Loads the artifacts of the `train` and `cluster` stages, checking that
    /// they match `config`.
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let hashes = StageHashes::new(config);
        require_stage(&config.artifacts, "train", &hashes.train()?)?;
        require_stage(&config.artifacts, "cluster", &hashes.cluster()?)?;
        Self::load_unchecked(config)
    }

    /// Loads artifacts without the staleness check, for consumers (such as
    /// the C API) that only have the artifact directory.
    pub fn load_unchecked(config: &PipelineConfig) -> Result<Self> {
        let lexicon = config.lexicon()?;
        let store = load_word2vec_text(&config.artifact(EMBEDDINGS_FILE))?;
        let kernel = load_term_similarity(&config.artifact(KERNEL_FILE))?;
        if kernel.vocab_size() != store.len()
            || kernel.vocab_hash() != crate::similarity::vocab_fingerprint(store.vocab())
        {
            return Err(Error::Validation(
                "term similarity matrix was built for different embeddings".into(),
            ));
        }
        let (model, _) = load_cluster_model(&config.artifact(CLUSTER_FILE))?;
        if model.dim() != store.dim() {
            return Err(Error::Validation(
                "cluster centroids and embeddings differ in dimension".into(),
            ));
        }
        if model.cluster_scores[0].categories() != lexicon.category_names().as_slice() {
            return Err(Error::Validation(
                "cluster model was scored with a different lexicon".into(),
            ));
        }
        Ok(Self {
            lexicon,
            preprocessor: Preprocessor::new(config.stopword_set()?),
            store,
            kernel,
            model,
        })
    }

    pub fn detector(&self, alpha: f64) -> Detector<'_> {
        Detector::new(&self.lexicon, &self.kernel, &self.store, &self.model, alpha)
    }

    pub fn detect_text(&self, id: &str, text: &str, alpha: f64, threshold: f64) -> Detection {
        let sentence = self.preprocessor.sentence(id, text);
        self.detector(alpha).detect(&sentence, threshold)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ThresholdRecord {
    threshold: f64,
    tuning: TuningMode,
}

/// The configured threshold, else the one tuned by `eval`.
pub fn resolve_threshold(config: &PipelineConfig) -> Result<f64> {
    if let Some(t) = config.threshold {
        return Ok(t);
    }
    let hashes = StageHashes::new(config);
    let expected = hashes.eval().map_err(|_| Error::MissingArtifact {
        stage: "eval".into(),
        detail: "set detector.threshold or run `eval` to tune one".into(),
    })?;
    require_stage(&config.artifacts, "eval", &expected)?;
    let path = config.artifact(THRESHOLD_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let record: ThresholdRecord = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.line(), Some(e.column()), e.to_string()))?;
    Ok(record.threshold)
}

/// Reads sentences to detect: JSON objects with `text` (and optional
/// `id`), or plain text lines. Ids default to the 1-based line number.
pub fn read_detect_input(path: &Path) -> Result<Vec<(String, String)>> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(trimmed)
                .map_err(|e| Error::parse(&origin, i + 1, Some(e.column()), e.to_string()))?;
            let text = v
                .get("text")
                .and_then(|t| t.as_str())
                .ok_or_else(|| Error::parse(&origin, i + 1, None, "missing string `text` field"))?;
            let id = match v.get("id") {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(other) if !other.is_null() => other.to_string(),
                _ => (i + 1).to_string(),
            };
            out.push((id, text.to_string()));
        } else {
            out.push(((i + 1).to_string(), trimmed.to_string()));
        }
    }
    Ok(out)
}

pub fn run_detect(config: &PipelineConfig, input: &Path, output: &Path) -> Result<Vec<Detection>> {
    let loaded = LoadedModel::load(config)?;
    let threshold = resolve_threshold(config)?;
    let items = read_detect_input(input)?;
    let sentences: Vec<TokenizedSentence> = items
        .iter()
        .map(|(id, text)| loaded.preprocessor.sentence(id, text))
        .collect();
    let detector = loaded.detector(config.alpha);
    let detections: Vec<Detection> = {
        use rayon::prelude::*;
        sentences.par_iter().map(|s| detector.detect(s, threshold)).collect()
    };
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let file = std::fs::File::create(output).map_err(|e| Error::io(output, e))?;
    write_detections_jsonl(std::io::BufWriter::new(file), &detections).map_err(|e| Error::io(output, e))?;
    log::info!(
        "detect: {} sentences, threshold {threshold} -> {}",
        detections.len(),
        output.display()
    );
    Ok(detections)
}

#[derive(Debug, Serialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub metrics: MicroMetrics,
    pub threshold: f64,
    pub tuning: TuningMode,
    pub alpha: f64,
    pub k: usize,
    pub baselines: BTreeMap<String, MicroMetrics>,
}

struct EvalInputs {
    loaded: LoadedModel,
    train: Option<Vec<LabeledSentence>>,
    dev: Option<LabeledSet>,
    test: LabeledSet,
    unlabeled: Vec<TokenizedSentence>,
}

fn eval_inputs(config: &PipelineConfig) -> Result<EvalInputs> {
    let loaded = LoadedModel::load(config)?;
    let test_path = require_path(&config.labeled_test, "labeled.test")?;
    let test = LabeledSet::new(config.labeled(test_path, &loaded.lexicon)?, &loaded.preprocessor);
    let dev = match &config.labeled_dev {
        Some(p) => Some(LabeledSet::new(
            config.labeled(p, &loaded.lexicon)?,
            &loaded.preprocessor,
        )),
        None => None,
    };
    let train = match &config.labeled_train {
        Some(p) => Some(config.labeled(p, &loaded.lexicon)?),
        None => None,
    };
    let unlabeled = read_sentences(config, &loaded.preprocessor)?;
    Ok(EvalInputs {
        loaded,
        train,
        dev,
        test,
        unlabeled,
    })
}

fn context<'a>(config: &PipelineConfig, inputs: &'a EvalInputs) -> EvalContext<'a> {
    let mode = if config.tune_on_test {
        TuningMode::TestSet
    } else {
        TuningMode::DevSet
    };
    let mut ctx = EvalContext::new(
        &inputs.loaded.lexicon,
        &inputs.loaded.kernel,
        &inputs.loaded.store,
        &inputs.unlabeled,
        inputs.dev.as_ref(),
        &inputs.test,
        mode,
        config.kmeans.clone(),
    );
    ctx.grid = config.threshold_grid();
    ctx
}

/// Tunes the threshold, scores the test set, and runs the baselines.
pub fn run_eval(config: &PipelineConfig) -> Result<MetricsReport> {
    let hash = StageHashes::new(config).eval()?;
    let inputs = eval_inputs(config)?;
    let ctx = context(config, &inputs);
    let point = ctx.evaluate(&inputs.loaded.model, config.alpha)?;
    let tuning = ctx.effective_mode();
    if tuning == TuningMode::TestSet {
        log::warn!("threshold tuned on the test set (no held-out tuning)");
    }

    let mut baselines = BTreeMap::new();
    let train = inputs
        .train
        .as_deref()
        .or(inputs.dev.as_ref().map(|d| d.gold.as_slice()));
    let majority_labels = match train {
        Some(t) => most_common_categories(t, 2),
        None => restaurant_majority_labels(),
    };
    baselines.insert(
        "majority".to_string(),
        micro_metrics(
            &majority_baseline(&inputs.test.gold, &majority_labels),
            &inputs.test.gold,
        )?,
    );
    if let Some(t) = train {
        let preds = random_baseline(t, &inputs.test.gold, config.baseline_seed)?;
        baselines.insert("random".to_string(), micro_metrics(&preds, &inputs.test.gold)?);
    }

    let report = MetricsReport {
        metrics: point.metrics,
        threshold: point.threshold,
        tuning,
        alpha: config.alpha,
        k: inputs.loaded.model.k(),
        baselines,
    };
    let metrics_path = config.artifact(METRICS_FILE);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&metrics_path, json + "\n").map_err(|e| Error::io(&metrics_path, e))?;
    let threshold_path = config.artifact(THRESHOLD_FILE);
    let json = serde_json::to_string_pretty(&ThresholdRecord {
        threshold: point.threshold,
        tuning,
    })
    .expect("record serializes");
    std::fs::write(&threshold_path, json + "\n").map_err(|e| Error::io(&threshold_path, e))?;
    write_record(&config.artifacts, "eval", &hash, &[METRICS_FILE, THRESHOLD_FILE])?;
    log::info!(
        "eval: P {:.4} R {:.4} F1 {:.4} at threshold {}",
        report.metrics.precision,
        report.metrics.recall,
        report.metrics.f1,
        report.threshold
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepPlan {
    Alpha(Vec<f64>),
    K(Vec<usize>),
}

impl SweepPlan {
    pub fn name(&self) -> &'static str {
        match self {
            SweepPlan::Alpha(_) => "alpha",
            SweepPlan::K(_) => "k",
        }
    }

    /// `0.0, 0.1, ..., 1.0` for alpha and `1..=30` for k.
    pub fn default_for(param: &str) -> Result<Self> {
        match param {
            "alpha" => Ok(SweepPlan::Alpha((0..=10).map(|i| i as f64 / 10.0).collect())),
            "k" => Ok(SweepPlan::K((1..=30).collect())),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}` (alpha or k)"))),
        }
    }

    /// Parses `a,b,c` or `start:stop:step` (inclusive of `stop`).
    pub fn parse(param: &str, values: &str) -> Result<Self> {
        let floats: Vec<f64> = if let Some((start, rest)) = values.split_once(':') {
            let (stop, step) = rest.split_once(':').unwrap_or((rest, "1"));
            let start: f64 = parse_value("range start", start.trim())?;
            let stop: f64 = parse_value("range stop", stop.trim())?;
            let step: f64 = parse_value("range step", step.trim())?;
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(Error::Config(format!("invalid range `{values}`")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            // Rounded to 10 decimals so that 0.1 steps print as 0.3, not 0.30000000000000004.
            (0..=n)
                .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
                .collect()
        } else {
            values
                .split(',')
                .map(|v| parse_value("sweep value", v.trim()))
                .collect::<Result<_>>()?
        };
        match param {
            "alpha" => Ok(SweepPlan::Alpha(floats)),
            "k" => {
                let ks = floats
                    .iter()
                    .map(|&v| {
                        if v >= 1.0 && v.fract() == 0.0 {
                            Ok(v as usize)
                        } else {
                            Err(Error::Config(format!("k must be a positive integer, got {v}")))
                        }
                    })
                    .collect::<Result<_>>()?;
                Ok(SweepPlan::K(ks))
            }
            other => Err(Error::Config(format!("unknown sweep parameter `{other}` (alpha or k)"))),
        }
    }
}

/// Runs an alpha or k sweep and writes `sweep_<param>.csv`.
pub fn run_sweep(config: &PipelineConfig, plan: &SweepPlan) -> Result<SweepResult> {
    let inputs = eval_inputs(config)?;
    let ctx = context(config, &inputs);
    let result = match plan {
        SweepPlan::Alpha(alphas) => ctx.sweep_alpha(alphas, config.kmeans.k)?,
        SweepPlan::K(ks) => ctx.sweep_k(ks, config.alpha)?,
    };
    let path = config.artifact(&format!("sweep_{}.csv", plan.name()));
    std::fs::write(&path, result.to_csv()).map_err(|e| Error::io(&path, e))?;
    log::info!(
        "sweep {}: {} points ({:?} tuning) -> {}",
        plan.name(),
        result.points.len(),
        ctx.effective_mode(),
        path.display()
    );
    Ok(result)
}
