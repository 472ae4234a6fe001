//! Sparse word-word similarity kernel built from embedding cosines.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::embedding::{EmbeddingStore, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub exponent: f64,
    pub threshold: f64,
    pub nonzero_limit: usize,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            exponent: 2.0,
            threshold: 0.0,
            nonzero_limit: 100,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::Config(format!(
                "kernel exponent must be positive, got {}",
                self.exponent
            )));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "kernel threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        if self.nonzero_limit == 0 {
            return Err(Error::Config("kernel nonzero_limit must be positive".into()));
        }
        Ok(())
    }
}

/// Hex SHA-256 of the newline-joined vocabulary, used to tie persisted
/// artifacts to the embedding space they were built from.
pub fn vocab_fingerprint(vocab: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for w in vocab.words() {
        h.update(w.as_bytes());
        h.update(b"\n");
    }
    format!("{:x}", h.finalize())
}

/// Symmetric sparse matrix with an implicit unit diagonal. Each row holds
/// its off-diagonal entries sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct TermSimilarityMatrix {
    rows: Vec<Vec<(u32, f64)>>,
    params: KernelParams,
    vocab_hash: String,
}

impl TermSimilarityMatrix {
    /// The identity kernel: soft cosine reduces to plain cosine.
    pub fn identity(vocab_size: usize) -> Self {
        Self {
            rows: vec![Vec::new(); vocab_size],
            params: KernelParams::default(),
            vocab_hash: String::new(),
        }
    }

    /// Builds a matrix from explicit off-diagonal entries. Each pair is
    /// stored in both directions; values must lie in `[0, 1]`.
    pub fn from_entries(vocab_size: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Self::identity(vocab_size);
        for &(i, j, v) in entries {
            if i >= vocab_size || j >= vocab_size {
                return Err(Error::Validation(format!(
                    "entry ({i}, {j}) outside vocabulary of {vocab_size}"
                )));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!(
                    "similarity {v} at ({i}, {j}) outside [0, 1]"
                )));
            }
            if i == j {
                continue;
            }
            m.insert(i, j, v);
            m.insert(j, i, v);
        }
        Ok(m)
    }

    fn insert(&mut self, i: usize, j: usize, v: f64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&(j as u32), |e| e.0) {
            Ok(pos) => row[pos].1 = v,
            Err(pos) => row.insert(pos, (j as u32, v)),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len()
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let row = &self.rows[i];
        match row.binary_search_by_key(&(j as u32), |e| e.0) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    /// Number of stored off-diagonal entries (both triangles).
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Upper-triangle entries `(i, j, value)` with `i < j`, sorted.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| (j as usize) > i)
                .map(move |&(j, v)| (i, j as usize, v))
        })
    }
}

/// Builds the kernel `s(i, j) = max(0, cos(v_i, v_j))^exponent`.
///
/// Every word ranks the other words whose kernel value exceeds `threshold`
/// and offers its top `nonzero_limit` of them. Words are visited in
/// vocabulary order; an offered pair is stored (in both directions) while
/// both rows still have room, so no row exceeds `nonzero_limit` entries.
/// Words with a zero vector get no off-diagonal entries.
pub fn build_term_similarity(store: &EmbeddingStore, params: KernelParams) -> Result<TermSimilarityMatrix> {
    params.validate()?;
    if store.is_empty() {
        return Err(Error::Validation(
            "cannot build a kernel from an empty embedding store".into(),
        ));
    }
    let n = store.len();
    let dim = store.dim();
    let mut unit = vec![0.0; n * dim];
    let mut has_norm = vec![false; n];
    for i in 0..n {
        let v = store.vector(i);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            has_norm[i] = true;
            for (u, x) in unit[i * dim..(i + 1) * dim].iter_mut().zip(v) {
                *u = x / norm;
            }
        }
    }

    let limit = params.nonzero_limit;
    let candidates: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if !has_norm[i] {
                return Vec::new();
            }
            let ui = &unit[i * dim..(i + 1) * dim];
            let mut ranked: Vec<(u32, f64)> = (0..n)
                .filter(|&j| j != i && has_norm[j])
                .filter_map(|j| {
                    let cos: f64 = ui.iter().zip(&unit[j * dim..(j + 1) * dim]).map(|(a, b)| a * b).sum();
                    let value = cos.clamp(0.0, 1.0).powf(params.exponent);
                    (value > params.threshold).then_some((j as u32, value))
                })
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(limit);
            ranked
        })
        .collect();

    let mut matrix = TermSimilarityMatrix {
        rows: vec![Vec::new(); n],
        params,
        vocab_hash: vocab_fingerprint(store.vocab()),
    };
    for (i, ranked) in candidates.iter().enumerate() {
        for &(j, value) in ranked {
            let j = j as usize;
            if matrix.rows[i].len() >= limit {
                break;
            }
            if matrix.rows[j].len() >= limit || matrix.get(i, j) != 0.0 {
                continue;
            }
            matrix.insert(i, j, value);
            matrix.insert(j, i, value);
        }
    }
    Ok(matrix)
}

const MAGIC: &str = "# acd term-similarity v1";

/// Writes the coordinate list: a header, then `i j value` lines for the
/// upper triangle in sorted order.
pub fn write_term_similarity<W: Write>(w: W, m: &TermSimilarityMatrix) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    let p = m.params;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "vocab_size {}", m.vocab_size())?;
    writeln!(
        w,
        "vocab_hash {}",
        if m.vocab_hash.is_empty() { "-" } else { &m.vocab_hash }
    )?;
    writeln!(w, "exponent {}", p.exponent)?;
    writeln!(w, "threshold {}", p.threshold)?;
    writeln!(w, "nonzero_limit {}", p.nonzero_limit)?;
    writeln!(w, "entries {}", m.nnz() / 2)?;
    for (i, j, v) in m.upper_triangle() {
        writeln!(w, "{i} {j} {v}")?;
    }
    w.flush()
}

pub fn save_term_similarity(path: &Path, m: &TermSimilarityMatrix) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_term_similarity(file, m).map_err(|e| Error::io(path, e))
}

pub fn read_term_similarity<R: Read>(r: R, origin: &str) -> Result<TermSimilarityMatrix> {
    let mut lines = BufReader::new(r).lines();
    let mut line_no = 0usize;
    let mut next_line = |line_no: &mut usize| -> Result<Option<String>> {
        *line_no += 1;
        lines
            .next()
            .transpose()
            .map_err(|e| Error::parse(origin, *line_no, None, e.to_string()))
    };

    if next_line(&mut line_no)?.as_deref() != Some(MAGIC) {
        return Err(Error::parse(origin, 1, None, "not a term similarity file"));
    }
    let mut header = |key: &str, line_no: &mut usize| -> Result<String> {
        let line = next_line(line_no)?.unwrap_or_default();
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(Error::parse(origin, *line_no, None, format!("expected `{key}` header"))),
        }
    };
    let bad = |line: usize, what: &str| Error::parse(origin, line, None, format!("invalid {what}"));

    let vocab_size: usize = header("vocab_size", &mut line_no)?
        .parse()
        .map_err(|_| bad(line_no, "vocab_size"))?;
    let vocab_hash = header("vocab_hash", &mut line_no)?;
    let exponent: f64 = header("exponent", &mut line_no)?
        .parse()
        .map_err(|_| bad(line_no, "exponent"))?;
    let threshold: f64 = header("threshold", &mut line_no)?
        .parse()
        .map_err(|_| bad(line_no, "threshold"))?;
    let nonzero_limit: usize = header("nonzero_limit", &mut line_no)?
        .parse()
        .map_err(|_| bad(line_no, "nonzero_limit"))?;
    let declared: usize = header("entries", &mut line_no)?
        .parse()
        .map_err(|_| bad(line_no, "entries"))?;

    let mut entries = Vec::with_capacity(declared);
    while let Some(line) = next_line(&mut line_no)? {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(i), Some(j), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad(line_no, "entry line"));
        };
        let i: usize = i.parse().map_err(|_| bad(line_no, "row index"))?;
        let j: usize = j.parse().map_err(|_| bad(line_no, "column index"))?;
        let v: f64 = v.parse().map_err(|_| bad(line_no, "value"))?;
        if i >= j {
            return Err(Error::parse(
                origin,
                line_no,
                None,
                "entries must be strictly upper-triangular",
            ));
        }
        entries.push((i, j, v));
    }
    if entries.len() != declared {
        return Err(Error::parse(
            origin,
            line_no,
            None,
            format!("header declares {declared} entries, found {}", entries.len()),
        ));
    }
    let mut m = TermSimilarityMatrix::from_entries(vocab_size, &entries)?;
    m.params = KernelParams {
        exponent,
        threshold,
        nonzero_limit,
    };
    m.vocab_hash = if vocab_hash == "-" { String::new() } else { vocab_hash };
    Ok(m)
}

pub fn load_term_similarity(path: &Path) -> Result<TermSimilarityMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_term_similarity(file, &path.display().to_string())
}
