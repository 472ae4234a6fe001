//! Labeled evaluation corpora, unlabeled review streams and the seed lexicon.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{AlphanumericTokenizer, Tokenizer};

const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.json");

/// A sentence with its gold aspect categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub text: String,
    #[serde(rename = "categories")]
    pub gold_categories: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlabeledSentence {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabeledFormat {
    SemevalXml,
    Jsonl,
}

impl std::str::FromStr for LabeledFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semeval_xml" | "xml" => Ok(LabeledFormat::SemevalXml),
            "jsonl" => Ok(LabeledFormat::Jsonl),
            other => Err(Error::Config(format!(
                "unknown labeled format `{other}` (expected semeval_xml or jsonl)"
            ))),
        }
    }
}

impl LabeledFormat {
    /// Guesses the format from a file extension, defaulting to JSON-lines.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("xml") => LabeledFormat::SemevalXml,
            _ => LabeledFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub name: String,
    pub seeds: Vec<String>,
}

/// Ordered categories with their seed words, plus the fallback category that
/// has no seeds and is assigned only when nothing else is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedLexicon {
    categories: Vec<Category>,
    fallback: String,
}

impl SeedLexicon {
    pub fn new(categories: Vec<Category>, fallback: impl Into<String>) -> Result<Self> {
        let fallback = fallback.into();
        let mut names = HashSet::new();
        let mut owner: std::collections::HashMap<&str, &str> = Default::default();
        for cat in &categories {
            if !names.insert(cat.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate category `{}` in lexicon",
                    cat.name
                )));
            }
            if cat.seeds.is_empty() {
                return Err(Error::Validation(format!(
                    "category `{}` has an empty seed list",
                    cat.name
                )));
            }
            for seed in &cat.seeds {
                if let Some(prev) = owner.insert(seed.as_str(), cat.name.as_str()) {
                    let detail = if prev == cat.name {
                        format!("seed `{seed}` listed twice under `{prev}`")
                    } else {
                        format!("seed `{seed}` listed under both `{prev}` and `{}`", cat.name)
                    };
                    return Err(Error::Validation(detail));
                }
            }
        }
        if names.contains(fallback.as_str()) {
            return Err(Error::Validation(format!(
                "fallback category `{fallback}` must not be a seeded category"
            )));
        }
        Ok(Self { categories, fallback })
    }

    /// The bundled four-category restaurant lexicon.
    pub fn restaurant_default() -> Self {
        Self::from_json(DEFAULT_LEXICON, "bundled lexicon").expect("bundled lexicon is valid")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let raw: LexiconFile =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), Some(e.column()), e.to_string()))?;
        let categories = raw
            .categories
            .0
            .into_iter()
            .map(|(name, seeds)| Category {
                name,
                seeds: seeds.into_iter().map(|s| s.to_lowercase()).collect(),
            })
            .collect();
        Self::new(categories, raw.fallback)
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        out.push_str(&format!(
            "  \"fallback\": {},\n  \"categories\": {{\n",
            serde_json::to_string(&self.fallback).unwrap()
        ));
        for (i, cat) in self.categories.iter().enumerate() {
            let sep = if i + 1 == self.categories.len() { "" } else { "," };
            out.push_str(&format!(
                "    {}: {}{sep}\n",
                serde_json::to_string(&cat.name).unwrap(),
                serde_json::to_string(&cat.seeds).unwrap()
            ));
        }
        out.push_str("  }\n}\n");
        out
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn seed_count(&self) -> usize {
        self.categories.iter().map(|c| c.seeds.len()).sum()
    }

    /// Lexicon categories plus the fallback.
    pub fn universe(&self) -> BTreeSet<String> {
        let mut all: BTreeSet<String> = self.category_names().into_iter().collect();
        all.insert(self.fallback.clone());
        all
    }

    /// The category-name filter used when ingesting unlabeled reviews.
    pub fn name_filter(&self) -> SentenceFilter {
        SentenceFilter::new(self.categories.iter().map(|c| c.name.as_str()))
    }
}

#[derive(Deserialize)]
struct LexiconFile {
    fallback: String,
    categories: OrderedEntries,
}

/// A JSON object read as an ordered list of entries so that duplicate keys
/// are visible instead of silently overwritten.
struct OrderedEntries(Vec<(String, Vec<String>)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = OrderedEntries;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping category names to seed lists")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Vec<String>>()? {
                    entries.push((k, v));
                }
                Ok(OrderedEntries(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor).map_err(de::Error::custom)
    }
}

pub fn load_seed_lexicon(path: &Path) -> Result<SeedLexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SeedLexicon::from_json(&text, &path.display().to_string())
}

pub fn parse_labeled_corpus(path: &Path, format: LabeledFormat) -> Result<Vec<LabeledSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    match format {
        LabeledFormat::SemevalXml => parse_semeval_xml(&text, &origin),
        LabeledFormat::Jsonl => parse_labeled_jsonl(&text, &origin),
    }
}

/// Reads SemEval-2014 ABSA XML. Aspect terms and polarities are ignored.
pub fn parse_semeval_xml(text: &str, origin: &str) -> Result<Vec<LabeledSentence>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::parse(origin, pos.row as usize, Some(pos.col as usize), e.to_string())
    })?;

    let mut out = Vec::new();
    for sentence in doc.descendants().filter(|n| n.has_tag_name("sentence")) {
        let line = doc.text_pos_at(sentence.range().start).row as usize;
        let id = sentence
            .attribute("id")
            .ok_or_else(|| Error::parse(origin, line, None, "sentence without an `id` attribute"))?
            .to_string();
        let text = sentence
            .children()
            .find(|n| n.has_tag_name("text"))
            .and_then(|n| n.text())
            .unwrap_or("")
            .to_string();
        let gold_categories: BTreeSet<String> = sentence
            .children()
            .filter(|n| n.has_tag_name("aspectCategories"))
            .flat_map(|n| n.children().filter(|c| c.has_tag_name("aspectCategory")))
            .filter_map(|c| c.attribute("category").map(str::to_string))
            .collect();
        if gold_categories.is_empty() {
            return Err(Error::Validation(format!(
                "sentence `{id}` has no aspect category annotation"
            )));
        }
        out.push(LabeledSentence {
            id,
            text,
            gold_categories,
        });
    }
    Ok(out)
}

pub fn parse_labeled_jsonl(text: &str, origin: &str) -> Result<Vec<LabeledSentence>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentence: LabeledSentence =
            serde_json::from_str(line).map_err(|e| Error::parse(origin, idx + 1, Some(e.column()), e.to_string()))?;
        if sentence.gold_categories.is_empty() {
            return Err(Error::Validation(format!(
                "sentence `{}` has no aspect category annotation",
                sentence.id
            )));
        }
        out.push(sentence);
    }
    Ok(out)
}

pub fn write_labeled_jsonl<W: Write>(mut w: W, sentences: &[LabeledSentence]) -> std::io::Result<()> {
    for s in sentences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Checks every gold category against the lexicon's category universe.
pub fn validate_labels(sentences: &[LabeledSentence], lexicon: &SeedLexicon) -> Result<()> {
    let universe = lexicon.universe();
    for s in sentences {
        if let Some(bad) = s.gold_categories.iter().find(|c| !universe.contains(*c)) {
            return Err(Error::Validation(format!(
                "sentence `{}` carries category `{bad}` which is not in the lexicon",
                s.id
            )));
        }
    }
    Ok(())
}

/// Keeps sentences containing at least one of the given words as a whole,
/// case-insensitive token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceFilter {
    words: BTreeSet<String>,
}

impl SentenceFilter {
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            words: words.into_iter().map(str::to_lowercase).collect(),
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn accepts(&self, sentence: &str) -> bool {
        AlphanumericTokenizer
            .tokens(sentence)
            .iter()
            .any(|t| self.words.contains(t))
    }
}

/// Rule-based sentence splitter: a run of `.`, `!` or `?` ends a sentence
/// when followed by whitespace and then an uppercase letter or an opening
/// quote.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        if matches!(chars[i].1, '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end].1, '.' | '!' | '?') {
                end += 1;
            }
            let mut next = end;
            while next < chars.len() && chars[next].1.is_whitespace() {
                next += 1;
            }
            let boundary = next > end
                && next < chars.len()
                && (chars[next].1.is_uppercase() || matches!(chars[next].1, '"' | '\'' | '“' | '‘'));
            if boundary {
                let byte_end = chars[end].0;
                push_trimmed(&mut out, &text[start..byte_end]);
                start = chars[next].0;
                i = next;
                continue;
            }
            i = end;
        } else {
            i += 1;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Extracts the review text from one input line: the `text` field of a JSON
/// object, or the line itself.
fn review_text(line: &str, origin: &str, line_no: usize) -> Result<Option<String>> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    if trimmed.starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(trimmed)
            .map_err(|e| Error::parse(origin, line_no, Some(e.column()), e.to_string()))?;
        return match value.get("text").and_then(|t| t.as_str()) {
            Some(t) => Ok(Some(t.to_string())),
            None => Err(Error::parse(
                origin,
                line_no,
                None,
                "JSON review without a string `text` field",
            )),
        };
    }
    Ok(Some(trimmed.to_string()))
}

/// Splits every review into sentences and keeps those accepted by `filter`.
/// Sentence ids are `<line>:<index within review>`, both 1-based.
pub fn ingest_reviews(text: &str, origin: &str, filter: &SentenceFilter) -> Result<Vec<UnlabeledSentence>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let Some(review) = review_text(line, origin, idx + 1)? else {
            continue;
        };
        for (s_idx, sentence) in split_sentences(&review).into_iter().enumerate() {
            if filter.accepts(&sentence) {
                out.push(UnlabeledSentence {
                    id: format!("{}:{}", idx + 1, s_idx + 1),
                    text: sentence,
                });
            }
        }
    }
    if out.is_empty() {
        log::warn!("no sentence in {origin} passed the category-name filter");
    }
    Ok(out)
}

pub fn ingest_unlabeled(path: &Path, filter: &SentenceFilter) -> Result<Vec<UnlabeledSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_reviews(&text, &path.display().to_string(), filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn semeval_multi_label_sentence() {
        let xml = r#"<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="3121">
    <text>the food was great but service slow</text>
    <aspectTerms><aspectTerm term="food" polarity="positive" from="4" to="8"/></aspectTerms>
    <aspectCategories>
      <aspectCategory category="food" polarity="positive"/>
      <aspectCategory category="service" polarity="negative"/>
    </aspectCategories>
  </sentence>
  <sentence id="77"><text>Nice.</text><aspectCategories><aspectCategory category="anecdotes/miscellaneous"/></aspectCategories></sentence>
</sentences>"#;
        let parsed = parse_semeval_xml(xml, "t.xml").unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].id, "3121");
        assert_eq!(parsed[0].text, "the food was great but service slow");
        assert_eq!(parsed[0].gold_categories, set(&["food", "service"]));
        assert_eq!(parsed[1].id, "77");
    }

    #[test]
    fn semeval_malformed_reports_position() {
        let err = parse_semeval_xml("<sentences>\n<sentence id=\"1\">\n</sentences>", "bad.xml").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert!(line >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semeval_unannotated_sentence_names_id() {
        let xml = r#"<sentences><sentence id="s9"><text>hi</text></sentence></sentences>"#;
        let err = parse_semeval_xml(xml, "x").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("s9")));
    }

    #[test]
    fn empty_inputs_are_empty_corpora() {
        assert!(parse_semeval_xml("", "x").unwrap().is_empty());
        assert!(parse_labeled_jsonl("", "x").unwrap().is_empty());
    }

    #[test]
    fn jsonl_errors() {
        let err =
            parse_labeled_jsonl("{\"id\":\"a\",\"text\":\"t\",\"categories\":[\"food\"]}\n{oops", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let err = parse_labeled_jsonl("{\"id\":\"q\",\"text\":\"t\",\"categories\":[]}", "x").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("`q`")));
    }

    #[test]
    fn default_lexicon_matches_seed_table() {
        let lex = SeedLexicon::restaurant_default();
        assert_eq!(lex.len(), 4);
        assert_eq!(lex.seed_count(), 20);
        assert_eq!(lex.fallback(), "anecdotes/miscellaneous");
        let expect = [
            ("food", ["food", "delicious", "menu", "fresh", "tasty"]),
            ("service", ["service", "staff", "friendly", "attentive", "manager"]),
            ("price", ["price", "cheap", "expensive", "money", "affordable"]),
            ("ambience", ["ambience", "atmosphere", "decor", "romantic", "loud"]),
        ];
        for (cat, (name, seeds)) in lex.categories().iter().zip(expect) {
            assert_eq!(cat.name, name);
            assert_eq!(cat.seeds, seeds);
        }
    }

    #[test]
    fn lexicon_round_trips_through_json() {
        let lex = SeedLexicon::restaurant_default();
        assert_eq!(SeedLexicon::from_json(&lex.to_json(), "x").unwrap(), lex);
    }

    #[test]
    fn lexicon_duplicate_category() {
        let json = r#"{"fallback":"misc","categories":{"price":["cheap"],"food":["food"],"price":["money"]}}"#;
        let err = SeedLexicon::from_json(json, "x").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate category `price`")));
    }

    #[test]
    fn lexicon_cross_category_seed() {
        let json = r#"{"fallback":"misc","categories":{"price":["cheap"],"food":["food","cheap"]}}"#;
        let err = SeedLexicon::from_json(json, "x").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("`cheap`")));
    }

    #[test]
    fn lexicon_empty_seeds_and_fallback_clash() {
        let json = r#"{"fallback":"misc","categories":{"price":[]}}"#;
        assert!(matches!(SeedLexicon::from_json(json, "x"), Err(Error::Validation(_))));
        let json = r#"{"fallback":"price","categories":{"price":["cheap"]}}"#;
        assert!(matches!(SeedLexicon::from_json(json, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn label_universe_check() {
        let lex = SeedLexicon::restaurant_default();
        let ok = LabeledSentence {
            id: "1".into(),
            text: "x".into(),
            gold_categories: set(&["food", "anecdotes/miscellaneous"]),
        };
        let bad = LabeledSentence {
            id: "2".into(),
            text: "x".into(),
            gold_categories: set(&["drinks"]),
        };
        assert!(validate_labels(std::slice::from_ref(&ok), &lex).is_ok());
        assert!(validate_labels(&[ok, bad], &lex).is_err());
    }

    #[test]
    fn filter_keeps_only_category_sentences() {
        let filter = SeedLexicon::restaurant_default().name_filter();
        let kept = ingest_reviews("The food was amazing. We sat outside.\n", "x", &filter).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].text, "The food was amazing.");

        assert!(ingest_reviews("Great value for money", "x", &filter)
            .unwrap()
            .is_empty());

        let kept = ingest_reviews("Service was slow; food cold.", "x", &filter).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].text, "Service was slow; food cold.");
    }

    #[test]
    fn filter_matches_whole_tokens_only() {
        let filter = SentenceFilter::new(["food"]);
        assert!(filter.accepts("FOOD!"));
        assert!(!filter.accepts("seafood platter"));
        assert!(!filter.accepts("foods galore"));
    }

    #[test]
    fn ingest_reads_json_lines() {
        let filter = SentenceFilter::new(["price"]);
        let text = "{\"text\": \"Fair price. Rude host.\", \"stars\": 3}\nprice was ok\n";
        let kept = ingest_reviews(text, "x", &filter).unwrap();
        let texts: Vec<_> = kept.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["Fair price.", "price was ok"]);
        assert_eq!(kept[0].id, "1:1");
        assert_eq!(kept[1].id, "2:1");
        assert!(ingest_reviews("{\"stars\": 3}", "x", &filter).is_err());
    }

    #[test]
    fn splitter_rules() {
        assert_eq!(
            split_sentences("Wow!! Really? \"Yes\" it was. ok. Fine"),
            ["Wow!!", "Really?", "\"Yes\" it was. ok.", "Fine"]
        );
        assert_eq!(split_sentences("Paid $3.50 total."), ["Paid $3.50 total."]);
        assert!(split_sentences("   ").is_empty());
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(items in proptest::collection::vec(
            ("[a-z0-9]{1,6}", "\\PC{0,30}", proptest::collection::btree_set("[a-z/]{1,8}", 1..4)),
            0..8,
        )) {
            let corpus: Vec<LabeledSentence> = items
                .into_iter()
                .map(|(id, text, gold_categories)| LabeledSentence { id, text, gold_categories })
                .collect();
            let mut buf = Vec::new();
            write_labeled_jsonl(&mut buf, &corpus).unwrap();
            let back = parse_labeled_jsonl(std::str::from_utf8(&buf).unwrap(), "x").unwrap();
            prop_assert_eq!(back, corpus);
        }

        #[test]
        fn every_ingested_sentence_passes_filter(text in "[A-Za-z .!?;]{0,200}") {
            let filter = SentenceFilter::new(["food", "service", "price", "ambience"]);
            for s in ingest_reviews(&text, "x", &filter).unwrap() {
                prop_assert!(filter.accepts(&s.text));
                prop_assert!(!s.text.trim().is_empty());
            }
        }
    }
}
