//! Seeded synthetic corpora with embedded gold labels.
//!
//! Every query owns a block of rare pseudo-words that appears in its base
//! text and in each of its gold documents; everything else is drawn from a
//! shared Zipf-weighted background vocabulary. Output is byte-identical for
//! a given seed.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_article_queries, write_articles, write_case_queries, write_pairs, Document, EntailPair, QueryCase};
use crate::error::{Error, Result};
use crate::textprep::{preprocess_text, PrepConfig};

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const FUNCTION_WORDS: [&str; 10] = ["the", "of", "and", "to", "in", "that", "was", "by", "for", "with"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Directory per query with its own candidate pool.
    Cases,
    /// Shared `articles.jsonl`, `questions/` and an entailment `pairs.xml`.
    Statutes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub queries: usize,
    pub candidates: usize,
    pub seed: u64,
    pub layout: Layout,
    pub background_vocab: usize,
    pub rare_block: usize,
    pub max_gold: usize,
}

impl FixtureSpec {
    pub fn new(queries: usize, candidates: usize, seed: u64) -> Self {
        FixtureSpec {
            queries,
            candidates,
            seed,
            layout: Layout::Cases,
            background_vocab: 1500,
            rare_block: 12,
            max_gold: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 || self.candidates == 0 {
            return Err(Error::InvalidParameter("queries and candidates must be at least 1".into()));
        }
        if self.background_vocab < 20 || self.rare_block == 0 || self.max_gold == 0 {
            return Err(Error::InvalidParameter(
                "background_vocab >= 20, rare_block >= 1 and max_gold >= 1 are required".into(),
            ));
        }
        Ok(())
    }
}

/// A generated corpus held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub queries: Vec<QueryCase>,
    /// Statute layout only.
    pub articles: Vec<Document>,
    /// Statute layout only.
    pub pairs: Vec<EntailPair>,
}

struct Generator {
    rng: ChaCha8Rng,
    background: Vec<String>,
    weights: WeightedIndex<f64>,
    used_stems: HashSet<String>,
    prep: PrepConfig,
}

impl Generator {
    fn new(seed: u64, vocab: usize) -> Self {
        let mut g = Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            background: Vec::new(),
            weights: WeightedIndex::new([1.0]).expect("nonempty weights"),
            used_stems: HashSet::new(),
            prep: PrepConfig::stage2(),
        };
        g.background = g.fresh_words(vocab);
        g.weights = WeightedIndex::new((0..vocab).map(|r| 1.0 / (r as f64 + 2.0))).expect("positive weights");
        g
    }

    /// Pseudo-words whose preprocessed form is a single, previously unused stem.
    fn fresh_words(&mut self, n: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let syllables = self.rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(&mut self.rng).unwrap());
                w.push_str(VOWELS.choose(&mut self.rng).unwrap());
            }
            if self.rng.gen_bool(0.5) {
                w.push_str(ONSETS[..14].choose(&mut self.rng).unwrap());
            }
            let toks = preprocess_text(&w, &self.prep);
            if toks.len() == 1 && self.used_stems.insert(toks[0].clone()) {
                out.push(w);
            }
        }
        out
    }

    fn background_words(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| self.background[self.weights.sample(&mut self.rng)].clone())
            .collect()
    }

    /// Shuffles `words` into numbered paragraphs of sentences.
    fn render(&mut self, mut words: Vec<String>, numbered: bool) -> String {
        words.shuffle(&mut self.rng);
        let mut sentences = Vec::new();
        let mut rest = &words[..];
        while !rest.is_empty() {
            let take = self.rng.gen_range(8..=12).min(rest.len());
            let mut s: Vec<String> = Vec::with_capacity(take + 3);
            for w in &rest[..take] {
                if self.rng.gen_bool(0.3) {
                    s.push(FUNCTION_WORDS.choose(&mut self.rng).unwrap().to_string());
                }
                s.push(w.clone());
            }
            rest = &rest[take..];
            let mut sentence = s.join(" ");
            if let Some(first) = sentence.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            sentence.push('.');
            sentences.push(sentence);
        }
        let mut out = String::new();
        for (i, para) in sentences.chunks(3).enumerate() {
            if numbered {
                out.push_str(&format!("[{}] ", i + 1));
            }
            out.push_str(&para.join(" "));
            out.push('\n');
        }
        out
    }

    fn document(&mut self, len: usize, inserts: &[String], numbered: bool) -> String {
        let mut words = self.background_words(len);
        words.extend(inserts.iter().cloned());
        self.render(words, numbered)
    }

    fn pick_gold(&mut self, n: usize, max_gold: usize) -> BTreeSet<usize> {
        let g = self.rng.gen_range(1..=max_gold.min(n));
        rand::seq::index::sample(&mut self.rng, n, g).into_iter().collect()
    }

    /// A few rare words leaked into a non-gold document.
    fn near_miss(&mut self, block: &[String]) -> Vec<String> {
        if self.rng.gen_bool(0.7) {
            return Vec::new();
        }
        let k = self.rng.gen_range(1..=2).min(block.len());
        block.choose_multiple(&mut self.rng, k).cloned().collect()
    }
}

fn twice(block: &[String]) -> Vec<String> {
    block.iter().chain(block).cloned().collect()
}

/// Generates a fixture in memory.
pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    spec.validate()?;
    let mut g = Generator::new(spec.seed, spec.background_vocab);
    let width = spec.queries.to_string().len().max(3);
    let cwidth = spec.candidates.to_string().len().max(3);
    match spec.layout {
        Layout::Cases => {
            let mut queries = Vec::with_capacity(spec.queries);
            for qi in 0..spec.queries {
                let qid = format!("q{:0width$}", qi + 1);
                let block = g.fresh_words(spec.rare_block);
                let gold_idx = g.pick_gold(spec.candidates, spec.max_gold);
                let base_len = g.rng.gen_range(60..=90);
                let base = g.document(base_len, &twice(&block), true);
                let mut candidates = Vec::with_capacity(spec.candidates);
                let mut gold = BTreeSet::new();
                for ci in 0..spec.candidates {
                    let cid = format!("c{:0cwidth$}", ci + 1);
                    let inserts = if gold_idx.contains(&ci) {
                        gold.insert(cid.clone());
                        block.clone()
                    } else {
                        g.near_miss(&block)
                    };
                    let len = g.rng.gen_range(70..=100);
                    candidates.push(Document::new(cid, g.document(len, &inserts, true)));
                }
                queries.push(QueryCase {
                    base: Document::new(qid.clone(), base),
                    id: qid,
                    candidates,
                    gold: Some(gold),
                });
            }
            Ok(Fixture {
                queries,
                articles: Vec::new(),
                pairs: Vec::new(),
            })
        }
        Layout::Statutes => {
            let mut articles: Vec<(String, Vec<String>)> = (0..spec.candidates)
                .map(|i| (format!("a{:0cwidth$}", i + 1), Vec::new()))
                .collect();
            let mut plan = Vec::with_capacity(spec.queries);
            for qi in 0..spec.queries {
                let block = g.fresh_words(spec.rare_block);
                let gold_idx = g.pick_gold(spec.candidates, spec.max_gold.min(2));
                for &i in &gold_idx {
                    articles[i].1.extend(block.iter().cloned());
                }
                plan.push((format!("h{:0width$}", qi + 1), block, gold_idx));
            }
            let articles: Vec<Document> = articles
                .into_iter()
                .map(|(id, inserts)| {
                    let len = g.rng.gen_range(25..=40);
                    let text = g.document(len, &inserts, false);
                    Document::new(id, text)
                })
                .collect();
            let mut queries = Vec::with_capacity(spec.queries);
            let mut pairs = Vec::with_capacity(spec.queries);
            for (qid, block, gold_idx) in plan {
                let len = g.rng.gen_range(10..=20);
                let mut question = g.document(len, &block, false);
                let entailed = g.rng.gen_bool(0.5);
                if !entailed {
                    question = format!("It is not the case that {}", question.trim_end());
                }
                let t1: Vec<&str> = gold_idx.iter().map(|&i| articles[i].text.trim_end()).collect();
                pairs.push(EntailPair {
                    id: qid.clone(),
                    t1: Document::new(format!("{qid}/t1"), t1.join("\n")),
                    t2: Document::new(format!("{qid}/t2"), question.trim_end()),
                    label: Some(entailed),
                });
                queries.push(QueryCase {
                    base: Document::new(qid.clone(), question),
                    id: qid,
                    candidates: Vec::new(),
                    gold: Some(gold_idx.iter().map(|&i| articles[i].id.clone()).collect()),
                });
            }
            Ok(Fixture {
                queries,
                articles,
                pairs,
            })
        }
    }
}

/// Generates a fixture and writes it under `out`.
pub fn gen_fixture(spec: &FixtureSpec, out: impl AsRef<Path>) -> Result<Fixture> {
    let out = out.as_ref();
    let fx = generate(spec)?;
    match spec.layout {
        Layout::Cases => write_case_queries(out, &fx.queries)?,
        Layout::Statutes => {
            write_articles(out.join("articles.jsonl"), &fx.articles)?;
            write_article_queries(out.join("questions"), &fx.queries)?;
            write_pairs(out.join("pairs.xml"), &fx.pairs)?;
        }
    }
    Ok(fx)
}
