//! Model variants wired end to end: preprocessing, scoring, fusion and
//! selection for each task.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Params, InvertedIndex};
use crate::corpus::{read_text, Document, QueryCase};
use crate::error::{Error, Result};
use crate::fusion::{fuse_multiply, select, ScoredList, SelectionRule};
use crate::pvdm::{cosine, EmbeddingModel};
use crate::textprep::{preprocess_text, DataTables, PrepConfig, Stage};
use crate::tfidf::TfidfModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Case retrieval: base case against its candidate pool.
    T1,
    /// Paragraph retrieval within one case.
    T2,
    /// Statute article retrieval for a question.
    T3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    D2v,
    Bm25,
    Docbm,
    Tfidf,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::D2v => "d2v",
            Variant::Bm25 => "bm25",
            Variant::Docbm => "docbm",
            Variant::Tfidf => "tfidf",
        }
    }

    pub fn needs_embedding(self) -> bool {
        matches!(self, Variant::D2v | Variant::Docbm)
    }

    pub fn needs_lexical(self) -> bool {
        !matches!(self, Variant::D2v)
    }
}

/// Selection rule a task and variant use unless overridden.
pub fn default_rule(task: Task, variant: Variant) -> SelectionRule {
    match (task, variant) {
        (Task::T1, Variant::Docbm) => SelectionRule::relative(0.8),
        (Task::T1, _) => SelectionRule::relative(0.9),
        (Task::T2 | Task::T3, _) => SelectionRule::Argmax,
    }
}

/// Queries plus, for statute retrieval, the article collection every
/// question is ranked against.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub task: Task,
    pub queries: Vec<QueryCase>,
    pub articles: Vec<Document>,
}

impl Corpus {
    pub fn cases(task: Task, queries: Vec<QueryCase>) -> Self {
        Corpus {
            task,
            queries,
            articles: Vec::new(),
        }
    }

    pub fn statutes(queries: Vec<QueryCase>, articles: Vec<Document>) -> Self {
        Corpus {
            task: Task::T3,
            queries,
            articles,
        }
    }

    fn candidates<'a>(&'a self, q: &'a QueryCase) -> &'a [Document] {
        match self.task {
            Task::T3 => &self.articles,
            _ => &q.candidates,
        }
    }
}

const ARTICLES_KEY: &str = "";

/// Key of a document inside the embedding model. Case tasks namespace
/// candidates by query; statute articles are shared and keep their ids.
pub fn embed_key(task: Task, query_id: &str, doc_id: Option<&str>) -> String {
    match (task, doc_id) {
        (Task::T3, Some(d)) => d.to_owned(),
        (_, Some(d)) => format!("{query_id}/{d}"),
        (_, None) => query_id.to_owned(),
    }
}

/// Stage-1 documents the embedding model is trained on.
pub fn embedding_corpus(corpus: &Corpus, tables: &DataTables) -> Vec<Document> {
    let prep = PrepConfig::new(Stage::Stage1, tables);
    let tok = |id: String, text: &str| Document {
        id,
        text: String::new(),
        tokens: preprocess_text(text, &prep),
    };
    match corpus.task {
        Task::T3 => corpus.articles.iter().map(|a| tok(a.id.clone(), &a.text)).collect(),
        task => corpus
            .queries
            .iter()
            .flat_map(|q| {
                std::iter::once(tok(embed_key(task, &q.id, None), &q.base.text)).chain(
                    q.candidates
                        .iter()
                        .map(move |c| tok(embed_key(task, &q.id, Some(&c.id)), &c.text)),
                )
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub bm25: InvertedIndex,
    pub tfidf: TfidfModel,
}

/// Stage-2 lexical statistics: one collection per query for case tasks,
/// a single shared one for statute retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    pub task: Task,
    pub stage: Stage,
    pub collections: BTreeMap<String, Collection>,
}

impl LexicalIndex {
    pub fn build(corpus: &Corpus, prep: &PrepConfig) -> Result<Self> {
        let fit = |docs: &[Document]| -> Result<Collection> {
            let docs: Vec<Document> = docs
                .iter()
                .map(|d| Document {
                    id: d.id.clone(),
                    text: String::new(),
                    tokens: preprocess_text(&d.text, prep),
                })
                .collect();
            Ok(Collection {
                bm25: InvertedIndex::build(&docs)?,
                tfidf: TfidfModel::fit(&docs)?,
            })
        };
        let mut collections = BTreeMap::new();
        match corpus.task {
            Task::T3 => {
                collections.insert(ARTICLES_KEY.to_owned(), fit(&corpus.articles)?);
            }
            _ => {
                for q in &corpus.queries {
                    collections.insert(q.id.clone(), fit(&q.candidates)?);
                }
            }
        }
        Ok(LexicalIndex {
            task: corpus.task,
            stage: prep.stage,
            collections,
        })
    }

    fn collection(&self, query_id: &str) -> Result<&Collection> {
        let key = if self.task == Task::T3 { ARTICLES_KEY } else { query_id };
        self.collections
            .get(key)
            .ok_or_else(|| Error::Config(format!("index has no collection for query {query_id:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieveConfig {
    pub task: Task,
    pub variant: Variant,
    pub bm25: Bm25Params,
    pub rule: SelectionRule,
    pub infer_steps: usize,
}

impl RetrieveConfig {
    pub fn new(task: Task, variant: Variant) -> Self {
        RetrieveConfig {
            task,
            variant,
            bm25: Bm25Params::default(),
            rule: default_rule(task, variant),
            infer_steps: 50,
        }
    }
}

/// Prebuilt artifacts a variant may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct Artifacts<'a> {
    pub index: Option<&'a LexicalIndex>,
    pub embedding: Option<&'a EmbeddingModel>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub scores: BTreeMap<String, ScoredList>,
    pub selections: BTreeMap<String, Vec<String>>,
}

fn embedding_scores(
    model: &EmbeddingModel,
    corpus: &Corpus,
    q: &QueryCase,
    prep: &PrepConfig,
    steps: usize,
) -> Result<ScoredList> {
    let task = corpus.task;
    let vector = |key: String, text: &str| -> Result<Vec<f64>> {
        match model.doc_vector(&key) {
            Some(v) => Ok(v.to_vec()),
            None => Ok(model.infer(&preprocess_text(text, prep), steps)?.vector),
        }
    };
    // statute questions are never part of the training set
    let query = match task {
        Task::T3 => model.infer(&preprocess_text(&q.base.text, prep), steps)?.vector,
        _ => vector(embed_key(task, &q.id, None), &q.base.text)?,
    };
    let entries = corpus
        .candidates(q)
        .iter()
        .map(|c| Ok((c.id.clone(), cosine(&query, &vector(embed_key(task, &q.id, Some(&c.id)), &c.text)?))))
        .collect::<Result<Vec<_>>>()?;
    ScoredList::new(q.id.clone(), entries)
}

/// Scores and selects for every query, in query-id order.
pub fn run_variant(corpus: &Corpus, artifacts: Artifacts<'_>, cfg: &RetrieveConfig, tables: &DataTables) -> Result<RunOutput> {
    if cfg.task != corpus.task {
        return Err(Error::Config(format!(
            "corpus was loaded for {:?} but the run asks for {:?}",
            corpus.task, cfg.task
        )));
    }
    cfg.bm25.validate()?;
    cfg.rule.validate()?;
    if cfg.infer_steps == 0 {
        return Err(Error::InvalidParameter("infer_steps must be at least 1".into()));
    }
    let embedding = match (cfg.variant.needs_embedding(), artifacts.embedding) {
        (true, None) => {
            return Err(Error::Config(format!(
                "variant {} needs a trained embedding model (train-embed)",
                cfg.variant.name()
            )))
        }
        (_, m) => m,
    };
    let stage2 = PrepConfig::new(Stage::Stage2, tables);
    let stage1 = PrepConfig::new(Stage::Stage1, tables);
    let built;
    let index = match (cfg.variant.needs_lexical(), artifacts.index) {
        (true, Some(ix)) => {
            if ix.task != cfg.task || ix.stage != Stage::Stage2 {
                return Err(Error::Config(format!(
                    "lexical index was built for {:?}/{:?}, expected {:?}/stage2",
                    ix.task, ix.stage, cfg.task
                )));
            }
            Some(ix)
        }
        (true, None) => {
            built = LexicalIndex::build(corpus, &stage2)?;
            Some(&built)
        }
        (false, _) => None,
    };

    let mut out = RunOutput::default();
    let mut queries: Vec<&QueryCase> = corpus.queries.iter().collect();
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    for q in queries {
        let ids: Vec<&str> = corpus.candidates(q).iter().map(|d| d.id.as_str()).collect();
        let lexical_query = || preprocess_text(&q.base.text, &stage2);
        let list = match cfg.variant {
            Variant::Bm25 => index.unwrap().collection(&q.id)?.bm25.rank(cfg.bm25, &q.id, &lexical_query(), &ids)?,
            Variant::Tfidf => index.unwrap().collection(&q.id)?.tfidf.rank_cosine(&q.id, &lexical_query(), &ids)?,
            Variant::D2v => embedding_scores(embedding.unwrap(), corpus, q, &stage1, cfg.infer_steps)?,
            Variant::Docbm => {
                let lexical = index.unwrap().collection(&q.id)?.bm25.rank(cfg.bm25, &q.id, &lexical_query(), &ids)?;
                let dense = embedding_scores(embedding.unwrap(), corpus, q, &stage1, cfg.infer_steps)?;
                fuse_multiply(&lexical, &dense)?
            }
        };
        let chosen = if list.is_empty() { Vec::new() } else { select(&list, &cfg.rule)? };
        out.selections.insert(q.id.clone(), chosen);
        out.scores.insert(q.id.clone(), list);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RunLine {
    query: String,
    retrieved: Vec<String>,
}

fn write_lines<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, &row).map_err(|e| Error::Config(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Writes `{"query": id, "retrieved": [...]}` lines in query-id order.
pub fn write_run(path: impl AsRef<Path>, selections: &BTreeMap<String, Vec<String>>) -> Result<()> {
    write_lines(
        path.as_ref(),
        selections.iter().map(|(q, r)| RunLine {
            query: q.clone(),
            retrieved: r.clone(),
        }),
    )
}

pub fn read_run(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: RunLine = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if out.insert(row.query.clone(), row.retrieved).is_some() {
            return Err(Error::DuplicateId {
                id: row.query,
                context: path.display().to_string(),
            });
        }
    }
    Ok(out)
}

/// Writes one serialized [`ScoredList`] per line.
pub fn write_scores(path: impl AsRef<Path>, scores: &BTreeMap<String, ScoredList>) -> Result<()> {
    write_lines(path.as_ref(), scores.values())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, ScoredList>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: ScoredList = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let list = ScoredList::new(raw.query_id, raw.entries).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if let Some(prev) = out.insert(list.query_id.clone(), list) {
            return Err(Error::DuplicateId {
                id: prev.query_id,
                context: path.display().to_string(),
            });
        }
    }
    Ok(out)
}

/// Fuses two score files query by query and applies `rule`.
pub fn fuse_runs(
    a: &BTreeMap<String, ScoredList>,
    b: &BTreeMap<String, ScoredList>,
    rule: &SelectionRule,
) -> Result<RunOutput> {
    rule.validate()?;
    if a.len() != b.len() {
        return Err(Error::Config("score files cover different query sets".into()));
    }
    let mut out = RunOutput::default();
    for (q, la) in a {
        let lb = b.get(q).ok_or_else(|| Error::FusionMismatch { query: q.clone() })?;
        let fused = fuse_multiply(la, lb)?;
        let chosen = if fused.is_empty() { Vec::new() } else { select(&fused, rule)? };
        out.selections.insert(q.clone(), chosen);
        out.scores.insert(q.clone(), fused);
    }
    Ok(out)
}
