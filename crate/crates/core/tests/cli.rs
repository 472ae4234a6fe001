mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acd_core::corpus::{write_labeled_jsonl, SeedLexicon};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// Raw reviews built from the synthetic category corpus, two sentences
    /// per line, each naming its category so that ingest keeps it.
    fn new(n_reviews: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = common::category_corpus(2 * n_reviews, 80, 21);
        let sentence = |i: usize| {
            let s = &corpus.unlabeled[i];
            format!(
                "The {} had {}.",
                common::category_of(&s.tokens).unwrap(),
                s.tokens.join(" ")
            )
        };
        let reviews: String = (0..n_reviews)
            .map(|i| format!("{} {}\n", sentence(2 * i), sentence(2 * i + 1)))
            .collect();
        fs::write(dir.path().join("reviews.txt"), reviews).unwrap();
        let (dev, test) = corpus.labeled.split_at(40);
        write_labeled_jsonl(fs::File::create(dir.path().join("dev.jsonl")).unwrap(), dev).unwrap();
        write_labeled_jsonl(fs::File::create(dir.path().join("test.jsonl")).unwrap(), test).unwrap();
        fs::write(
            dir.path().join("detect.txt"),
            "The pizza and pasta were delicious\n{\"id\": \"q2\", \"text\": \"Our waiter was rude and slow\"}\n",
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write_config(&self, name: &str, extra: &str) -> PathBuf {
        let text =
            format!("unlabeled = reviews.txt\nlabeled.dev = dev.jsonl\nlabeled.test = test.jsonl\nseed = 3\n{extra}\n");
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn small_config(&self) -> PathBuf {
        self.write_config(
            "small.conf",
            "cbow.dim = 16\ncbow.epochs = 15\ncbow.min_count = 1\nkmeans.k = 4\nkmeans.n_init = 3",
        )
    }
}

fn acd(config: &Path, artifacts: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acd"))
        .arg("--config")
        .arg(config)
        .arg("--artifacts")
        .arg(artifacts)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_pipeline_runs_and_writes_artifacts() {
    let ws = Workspace::new(150);
    let config = ws.small_config();
    let art = ws.path("art");
    for stage in ["ingest", "train", "cluster", "eval"] {
        assert_ok(&acd(&config, &art, &[stage]));
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(art.join("metrics.json")).unwrap()).unwrap();
    for key in ["precision", "recall", "f1", "tp", "fp", "fn", "threshold"] {
        assert!(metrics.get(key).is_some(), "metrics.json lacks {key}");
    }
    assert_eq!(metrics["tuning"], "dev_set");
    assert!(metrics["baselines"]["majority"]["f1"].is_number());
    assert!(metrics["baselines"]["random"]["f1"].is_number());

    let out = acd(&config, &art, &["detect", ws.path("detect.txt").to_str().unwrap()]);
    assert_ok(&out);
    let lines: Vec<serde_json::Value> = fs::read_to_string(art.join("detections.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["id"], "1");
    assert_eq!(lines[1]["id"], "q2");
    assert!(!lines[0]["assigned"].as_array().unwrap().is_empty());

    let out = acd(&config, &art, &["sweep", "--param", "alpha", "--values", "0:1:0.5"]);
    assert_ok(&out);
    let csv = fs::read_to_string(art.join("sweep_alpha.csv")).unwrap();
    assert_eq!(csv, String::from_utf8_lossy(&out.stdout));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "param,value,precision,recall,f1");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("alpha,1,"));
}

#[test]
fn ingest_is_idempotent_and_training_reproducible() {
    let ws = Workspace::new(100);
    let config = ws.small_config();
    let (a, b) = (ws.path("a"), ws.path("b"));
    for art in [&a, &b] {
        for stage in ["ingest", "train", "cluster"] {
            assert_ok(&acd(&config, art, &[stage]));
        }
    }
    let first = fs::read(a.join("sentences.txt")).unwrap();
    assert_ok(&acd(&config, &a, &["ingest"]));
    assert_eq!(fs::read(a.join("sentences.txt")).unwrap(), first);
    for f in [
        "sentences.txt",
        "embeddings.txt",
        "term_similarity.txt",
        "cluster_model.json",
        "cluster_model.centroids.txt",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs between seeded runs"
        );
    }
}

#[test]
fn missing_upstream_stage_exits_2_naming_it() {
    let ws = Workspace::new(20);
    let config = ws.small_config();
    let art = ws.path("empty");
    let out = acd(&config, &art, &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`ingest`"), "{}", stderr(&out));

    assert_ok(&acd(&config, &art, &["ingest"]));
    let out = acd(&config, &art, &["cluster"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`train`"), "{}", stderr(&out));

    let out = acd(&config, &art, &["detect", ws.path("detect.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn changed_settings_make_artifacts_stale() {
    let ws = Workspace::new(60);
    let config = ws.small_config();
    let art = ws.path("art");
    for stage in ["ingest", "train"] {
        assert_ok(&acd(&config, &art, &[stage]));
    }
    let out = acd(&config, &art, &["--set", "cbow.dim=8", "cluster"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("stale artifact from stage `train`"),
        "{}",
        stderr(&out)
    );

    let out = acd(&config, &art, &["--seed", "4", "cluster"]);
    assert_eq!(out.status.code(), Some(2));
    assert_ok(&acd(&config, &art, &["cluster"]));
}

#[test]
fn input_errors_exit_2() {
    let ws = Workspace::new(5);
    let art = ws.path("art");

    let nothing = ws.path("nothing.txt");
    fs::write(&nothing, "No category is named here. Nor here.\n").unwrap();
    let config = ws.write_config("empty.conf", &format!("unlabeled = {}", nothing.display()));
    let out = acd(&config, &art, &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no sentence"), "{}", stderr(&out));

    let config = ws.write_config("missing.conf", "unlabeled = does-not-exist.txt");
    assert_eq!(acd(&config, &art, &["ingest"]).status.code(), Some(2));

    let config = ws.write_config("bad.conf", "kmeans.k = 0");
    assert_eq!(acd(&config, &art, &["ingest"]).status.code(), Some(2));

    let config = ws.write_config("typo.conf", "cbow.dimension = 3");
    let out = acd(&config, &art, &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 5"), "{}", stderr(&out));

    let out = Command::new(env!("CARGO_BIN_EXE_acd"))
        .arg("frobnicate")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn defaults_use_300_dimensions_and_17_clusters() {
    let ws = Workspace::new(120);
    let config = ws.write_config("defaults.conf", "");
    let art = ws.path("art");
    for stage in ["ingest", "train", "cluster"] {
        assert_ok(&acd(&config, &art, &[stage]));
    }
    let embeddings = fs::read_to_string(art.join("embeddings.txt")).unwrap();
    let header: Vec<&str> = embeddings.lines().next().unwrap().split(' ').collect();
    assert_eq!(header[1], "300");
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(art.join("cluster_model.json")).unwrap()).unwrap();
    assert_eq!(model["k"], 17);
    assert_eq!(
        model["categories"],
        serde_json::json!(SeedLexicon::restaurant_default().category_names())
    );
}
