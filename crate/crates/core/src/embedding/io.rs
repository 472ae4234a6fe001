//! word2vec text format: a `count dim` header, then one `word v1 .. vdim`
//! line per word. Values are written like C's `%.6g`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingStore, Vocabulary};
use crate::error::{Error, Result};

/// Formats a float the way C's `printf("%.6g")` does.
pub fn format_g6(x: f64) -> String {
    const PRECISION: i32 = 6;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Rounding to six significant digits decides the exponent.
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = strip_trailing_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_trailing_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_trailing_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_word2vec_text<W: Write>(w: W, store: &EmbeddingStore) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{} {}", store.len(), store.dim())?;
    let mut line = String::new();
    for (idx, word) in store.vocab().words().iter().enumerate() {
        line.clear();
        line.push_str(word);
        for v in store.vector(idx) {
            line.push(' ');
            line.push_str(&format_g6(*v));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

pub fn save_word2vec_text(path: &Path, store: &EmbeddingStore) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_word2vec_text(file, store).map_err(|e| Error::io(path, e))
}

pub fn read_word2vec_text<R: Read>(r: R, origin: &str) -> Result<EmbeddingStore> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let io_err = |e: std::io::Error, line: usize| Error::parse(origin, line, None, e.to_string());

    let (count, dim) = match lines.next() {
        Some((_, header)) => {
            let header = header.map_err(|e| io_err(e, 1))?;
            let mut parts = header.split_whitespace();
            let parse = |p: Option<&str>| p.and_then(|s| s.parse::<usize>().ok());
            match (parse(parts.next()), parse(parts.next()), parts.next()) {
                (Some(c), Some(d), None) if d > 0 => (c, d),
                _ => return Err(Error::parse(origin, 1, None, "expected header `count dim`")),
            }
        }
        None => return Err(Error::parse(origin, 1, None, "empty embedding file")),
    };

    let mut words = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count * dim);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(e, line_no))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        let start = vectors.len();
        for tok in parts.filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(origin, line_no, None, format!("invalid number `{tok}`")))?;
            vectors.push(v);
        }
        let got = vectors.len() - start;
        if got != dim {
            return Err(Error::parse(
                origin,
                line_no,
                None,
                format!("expected {dim} values for `{word}`, found {got}"),
            ));
        }
        words.push(word.to_string());
    }
    if words.len() != count {
        return Err(Error::parse(
            origin,
            1,
            None,
            format!("header declares {count} words, file has {}", words.len()),
        ));
    }
    let vocab = Vocabulary::from_words(words)?;
    EmbeddingStore::new(vocab, dim, vectors)
}

pub fn load_word2vec_text(path: &Path) -> Result<EmbeddingStore> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_word2vec_text(file, &path.display().to_string())
}
