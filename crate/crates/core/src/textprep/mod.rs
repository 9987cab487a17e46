//! Two-stage text preprocessing.
//!
//! Stage 1 strips line-leading paragraph numbers and tokenizes. Stage 2 then
//! drops short tokens, all-digit tokens and stopwords, and stems what is left
//! with the bundled rule table.

mod stemmer;

use std::collections::HashSet;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use stemmer::Stemmer;

use crate::corpus::{read_text, Document};
use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const BUNDLED_NEGATIONS: &str = include_str!("../../data/negations.txt");

/// Upper bound on stemming passes when iterating to a fixed point.
const MAX_STEM_PASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

/// Data tables the preprocessor and the entailment features depend on.
#[derive(Debug, Clone)]
pub struct DataTables {
    pub stopwords: HashSet<String>,
    pub negations: HashSet<String>,
    pub stemmer: Stemmer,
}

fn word_list(name: &str, src: &str) -> Result<HashSet<String>> {
    let mut set = HashSet::new();
    for line in src.lines() {
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        if w.chars().any(|c| c.is_uppercase()) {
            return Err(Error::DataTable {
                name: name.into(),
                reason: format!("entry {w:?} is not lowercase"),
            });
        }
        set.insert(w.to_owned());
    }
    Ok(set)
}

impl DataTables {
    pub fn bundled() -> Self {
        DataTables {
            stopwords: word_list("stopwords.txt", BUNDLED_STOPWORDS).expect("bundled stopwords"),
            negations: word_list("negations.txt", BUNDLED_NEGATIONS).expect("bundled negations"),
            stemmer: Stemmer::default(),
        }
    }

    /// Loads tables from `dir`; any file that is absent falls back to the
    /// bundled copy.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut tables = DataTables::bundled();
        let stop = dir.join("stopwords.txt");
        if stop.is_file() {
            tables.stopwords = word_list("stopwords.txt", &read_text(&stop)?)?;
        }
        let neg = dir.join("negations.txt");
        if neg.is_file() {
            tables.negations = word_list("negations.txt", &read_text(&neg)?)?;
        }
        let rules = dir.join("stemmer_rules.tsv");
        if rules.is_file() {
            tables.stemmer = Stemmer::from_tsv(&read_text(&rules)?)?;
        }
        Ok(tables)
    }
}

/// Preprocessing settings.
#[derive(Debug, Clone)]
pub struct PrepConfig {
    pub stage: Stage,
    pub stopwords: Arc<HashSet<String>>,
    pub stemmer: Arc<Stemmer>,
    pub min_token_len: usize,
}

impl PrepConfig {
    pub fn new(stage: Stage, tables: &DataTables) -> Self {
        PrepConfig {
            stage,
            stopwords: Arc::new(tables.stopwords.clone()),
            stemmer: Arc::new(tables.stemmer.clone()),
            min_token_len: 3,
        }
    }

    pub fn stage1() -> Self {
        PrepConfig::new(Stage::Stage1, &DataTables::bundled())
    }

    pub fn stage2() -> Self {
        PrepConfig::new(Stage::Stage2, &DataTables::bundled())
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_token_len < 1 {
            return Err(Error::InvalidParameter("min_token_len must be at least 1".into()));
        }
        if let Some(w) = self.stopwords.iter().find(|w| w.chars().any(char::is_uppercase)) {
            return Err(Error::InvalidParameter(format!("stopword {w:?} is not lowercase")));
        }
        Ok(())
    }
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn paragraph_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*(?:\[[0-9]+\]|\([0-9]+\)|[0-9]+\.)[ \t]*").unwrap())
}

/// Removes `[N]`, `(N)` and `N.` markers at the start of a line, together
/// with the whitespace that follows them.
pub fn strip_paragraph_numbers(text: &str) -> String {
    paragraph_marker().replace_all(text, "").into_owned()
}

fn stem_fixpoint(stemmer: &Stemmer, token: &str) -> String {
    let mut cur = token.to_owned();
    for _ in 0..MAX_STEM_PASSES {
        let next = stemmer.stem(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn keep(cfg: &PrepConfig, token: &str) -> bool {
    token.chars().count() >= cfg.min_token_len
        && !token.chars().all(char::is_numeric)
        && !cfg.stopwords.contains(token)
}

/// Tokens for `text` under `cfg`.
pub fn preprocess_text(text: &str, cfg: &PrepConfig) -> Vec<String> {
    let tokens = tokenize(&strip_paragraph_numbers(text));
    match cfg.stage {
        Stage::Stage1 => tokens,
        Stage::Stage2 => tokens
            .into_iter()
            .filter(|t| keep(cfg, t))
            .map(|t| stem_fixpoint(&cfg.stemmer, &t))
            // a stem can itself be short or a stopword ("having" -> "have")
            .filter(|t| keep(cfg, t))
            .collect(),
    }
}

/// Returns `doc` with its token stream filled in.
pub fn preprocess(doc: &Document, cfg: &PrepConfig) -> Document {
    Document {
        id: doc.id.clone(),
        text: doc.text.clone(),
        tokens: preprocess_text(&doc.text, cfg),
    }
}

pub fn preprocess_all(docs: &[Document], cfg: &PrepConfig) -> Vec<Document> {
    docs.iter().map(|d| preprocess(d, cfg)).collect()
}
