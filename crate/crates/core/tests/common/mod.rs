//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use acd_core::corpus::{LabeledSentence, SeedLexicon};
use acd_core::preprocess::TokenizedSentence;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tokens(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

/// Two disjoint topic vocabularies; each sentence draws all of its words
/// from one topic.
pub struct TwoTopicCorpus {
    pub topic_a: Vec<String>,
    pub topic_b: Vec<String>,
    pub sentences: Vec<TokenizedSentence>,
}

pub fn two_topic_corpus(n_sentences: usize, words_per_topic: usize, sentence_len: usize, seed: u64) -> TwoTopicCorpus {
    let topic_a: Vec<String> = (0..words_per_topic).map(|i| format!("alpha{i}")).collect();
    let topic_b: Vec<String> = (0..words_per_topic).map(|i| format!("beta{i}")).collect();
    let mut rng = rng(seed);
    let sentences = (0..n_sentences)
        .map(|i| {
            let topic = if i % 2 == 0 { &topic_a } else { &topic_b };
            let toks = (0..sentence_len)
                .map(|_| topic.choose(&mut rng).unwrap().clone())
                .collect();
            TokenizedSentence::new(i.to_string(), toks)
        })
        .collect();
    TwoTopicCorpus {
        topic_a,
        topic_b,
        sentences,
    }
}

/// Topic-correlated filler words for each default restaurant category.
pub const FILLER: [(&str, &[&str]); 4] = [
    (
        "food",
        &[
            "pizza", "pasta", "sushi", "burger", "dessert", "sauce", "flavor", "dish", "salad", "steak", "bread",
            "cheese",
        ],
    ),
    (
        "service",
        &[
            "waiter", "waitress", "server", "host", "rude", "polite", "helpful", "served", "greeted", "tip", "slow",
            "quick",
        ],
    ),
    (
        "price",
        &[
            "dollars",
            "bill",
            "cost",
            "overpriced",
            "value",
            "budget",
            "pricey",
            "deal",
            "paid",
            "worth",
            "bucks",
            "cents",
        ],
    ),
    (
        "ambience",
        &[
            "music", "lighting", "candles", "cozy", "noisy", "interior", "seating", "view", "patio", "crowded",
            "quiet", "vibe",
        ],
    ),
];

/// The category whose filler words occur in `tokens`, first match wins.
pub fn category_of(tokens: &[String]) -> Option<&'static str> {
    FILLER
        .iter()
        .find(|(_, filler)| tokens.iter().any(|t| filler.contains(&t.as_str())))
        .map(|(name, _)| *name)
}

/// Words that appear in every topic.
pub const NEUTRAL: &[&str] = &[
    "place",
    "really",
    "night",
    "went",
    "friends",
    "today",
    "pretty",
    "definitely",
];

pub struct CategoryCorpus {
    pub lexicon: SeedLexicon,
    pub unlabeled: Vec<TokenizedSentence>,
    pub labeled: Vec<LabeledSentence>,
}

/// Generates sentences around the default lexicon. A sentence about a set
/// of categories mixes filler words of those categories, an occasional seed
/// word, and neutral words. Roughly one labeled sentence in five carries two
/// categories. The generator's category choice is the gold label.
pub fn category_corpus(n_unlabeled: usize, n_labeled: usize, seed: u64) -> CategoryCorpus {
    let lexicon = SeedLexicon::restaurant_default();
    let mut rng = rng(seed);
    let unlabeled = (0..n_unlabeled)
        .map(|i| {
            let c = rng.gen_range(0..FILLER.len());
            TokenizedSentence::new(format!("u{i}"), category_sentence(&lexicon, &[c], 0.5, &mut rng))
        })
        .collect();
    let labeled = (0..n_labeled)
        .map(|i| {
            let first = rng.gen_range(0..FILLER.len());
            let mut cats = vec![first];
            if rng.gen_bool(0.2) {
                let second = (first + rng.gen_range(1..FILLER.len())) % FILLER.len();
                cats.push(second);
            }
            let toks = category_sentence(&lexicon, &cats, 0.3, &mut rng);
            let gold: BTreeSet<String> = cats.iter().map(|&c| FILLER[c].0.to_string()).collect();
            LabeledSentence {
                id: format!("t{i}"),
                text: toks.join(" "),
                gold_categories: gold,
            }
        })
        .collect();
    CategoryCorpus {
        lexicon,
        unlabeled,
        labeled,
    }
}

fn category_sentence(lexicon: &SeedLexicon, cats: &[usize], seed_prob: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::new();
    for &c in cats {
        let (name, filler) = FILLER[c];
        let seeds = &lexicon.categories().iter().find(|cat| cat.name == name).unwrap().seeds;
        if rng.gen_bool(seed_prob) {
            out.push(seeds.choose(rng).unwrap().clone());
        }
        let n = if cats.len() == 1 { 5 } else { 3 };
        for _ in 0..n {
            out.push(filler.choose(rng).unwrap().to_string());
        }
    }
    for _ in 0..2 {
        out.push(NEUTRAL.choose(rng).unwrap().to_string());
    }
    out.shuffle(rng);
    out
}
