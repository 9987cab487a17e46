//! Corpus ingestion and persistence.
//!
//! Three on-disk layouts are understood:
//!
//! * case-law queries: one directory per query holding `base.txt`,
//!   `candidates/<id>.txt` and an optional `gold.json` (array of candidate ids);
//! * statute articles: JSON lines of `{"id": ..., "text": ...}`;
//! * entailment pairs: XML `<pair id=".." label="Y|N"><t1>..</t1><t2>..</t2></pair>`.
//!
//! All text must be valid UTF-8. Everything returned is sorted or kept in file
//! order so that loading is independent of directory enumeration order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A unit of text: a case, a candidate paragraph, an article, or one side of
/// an entailment pair. `tokens` stays empty until preprocessing fills it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            tokens: Vec::new(),
        }
    }

    /// Builds a document whose token stream is already known.
    pub fn from_tokens<S: AsRef<str>>(id: impl Into<String>, tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_owned()).collect();
        Document {
            id: id.into(),
            text: tokens.join(" "),
            tokens,
        }
    }
}

/// A base case together with its candidate pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryCase {
    pub id: String,
    pub base: Document,
    pub candidates: Vec<Document>,
    /// Relevant candidate ids; `None` when no `gold.json` was present.
    pub gold: Option<BTreeSet<String>>,
}

impl QueryCase {
    pub fn candidate_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|d| d.id.as_str())
    }
}

/// One `<pair>` of an entailment file. `label` is `Some(true)` for "Y".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntailPair {
    pub id: String,
    pub t1: Document,
    pub t2: Document,
    pub label: Option<bool>,
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|_| Error::InvalidUtf8 {
        path: path.to_owned(),
    })
}

fn sorted_subdirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_gold(path: &Path) -> Result<Option<BTreeSet<String>>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = read_text(path)?;
    let ids: Vec<String> = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, e.line(), format!("expected a JSON array of ids: {e}")))?;
    let mut set = BTreeSet::new();
    for id in ids {
        if !set.insert(id.clone()) {
            return Err(Error::DuplicateId {
                id,
                context: path.display().to_string(),
            });
        }
    }
    Ok(Some(set))
}

fn check_gold(query: &str, gold: &Option<BTreeSet<String>>, known: &HashSet<&str>) -> Result<()> {
    if let Some(gold) = gold {
        if let Some(bad) = gold.iter().find(|id| !known.contains(id.as_str())) {
            return Err(Error::GoldMismatch {
                query: query.to_owned(),
                id: bad.clone(),
            });
        }
    }
    Ok(())
}

fn read_base(dir: &Path) -> Result<Document> {
    let base_path = dir.join("base.txt");
    if !base_path.is_file() {
        return Err(Error::MalformedQuery {
            dir: dir.to_owned(),
            reason: "missing base.txt".into(),
        });
    }
    Ok(Document::new(dir_name(dir), read_text(&base_path)?))
}

/// Loads every query directory under `root`, sorted by id.
pub fn load_case_queries(root: impl AsRef<Path>) -> Result<Vec<QueryCase>> {
    let root = root.as_ref();
    let mut queries = Vec::new();
    for dir in sorted_subdirs(root)? {
        let id = dir_name(&dir);
        let base = read_base(&dir)?;
        let cand_dir = dir.join("candidates");
        if !cand_dir.is_dir() {
            return Err(Error::MalformedQuery {
                dir,
                reason: "missing candidates/ directory".into(),
            });
        }
        let mut files = Vec::new();
        for entry in fs::read_dir(&cand_dir).map_err(|e| Error::io(&cand_dir, e))? {
            let path = entry.map_err(|e| Error::io(&cand_dir, e))?.path();
            if path.is_file() && path.extension().is_some_and(|x| x == "txt") {
                files.push(path);
            }
        }
        files.sort();
        let mut candidates = Vec::with_capacity(files.len());
        let mut seen = HashSet::new();
        for path in files {
            let cid = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if cid.is_empty() {
                return Err(Error::MalformedQuery {
                    dir: dir.clone(),
                    reason: format!("candidate file {} has an empty id", path.display()),
                });
            }
            if !seen.insert(cid.clone()) {
                return Err(Error::DuplicateId {
                    id: cid,
                    context: format!("candidates of query {id}"),
                });
            }
            candidates.push(Document::new(cid, read_text(&path)?));
        }
        let gold = read_gold(&dir.join("gold.json"))?;
        let known: HashSet<&str> = candidates.iter().map(|d| d.id.as_str()).collect();
        check_gold(&id, &gold, &known)?;
        queries.push(QueryCase {
            id,
            base,
            candidates,
            gold,
        });
    }
    Ok(queries)
}

/// Loads statute-style questions: query directories with `base.txt` and an
/// optional `gold.json` whose ids refer to the shared article collection.
/// The returned queries have an empty `candidates` list.
pub fn load_article_queries(root: impl AsRef<Path>, articles: &[Document]) -> Result<Vec<QueryCase>> {
    let root = root.as_ref();
    let known: HashSet<&str> = articles.iter().map(|d| d.id.as_str()).collect();
    let mut queries = Vec::new();
    for dir in sorted_subdirs(root)? {
        let id = dir_name(&dir);
        let base = read_base(&dir)?;
        let gold = read_gold(&dir.join("gold.json"))?;
        check_gold(&id, &gold, &known)?;
        queries.push(QueryCase {
            id,
            base,
            candidates: Vec::new(),
            gold,
        });
    }
    Ok(queries)
}

/// Reads only the `gold.json` files under `root`, keyed by query id.
/// Query directories without a gold file are omitted.
pub fn load_gold(root: impl AsRef<Path>) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut out = BTreeMap::new();
    for dir in sorted_subdirs(root.as_ref())? {
        if let Some(gold) = read_gold(&dir.join("gold.json"))? {
            out.insert(dir_name(&dir), gold);
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ArticleLine {
    id: String,
    text: String,
}

/// Loads a JSON-lines article collection in file order.
pub fn load_articles(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArticleLine =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if rec.id.is_empty() {
            return Err(Error::parse(path, i + 1, "empty id"));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId {
                id: rec.id,
                context: path.display().to_string(),
            });
        }
        docs.push(Document::new(rec.id, rec.text));
    }
    Ok(docs)
}

fn attr(path: &Path, e: &BytesStart<'_>, name: &[u8]) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::parse(path, 0, err.to_string()))?;
        if a.key.as_ref() == name {
            let v = a
                .unescape_value()
                .map_err(|err| Error::parse(path, 0, err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn line_of(src: &str, pos: u64) -> usize {
    let end = (pos as usize).min(src.len());
    src.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    None,
    T1,
    T2,
}

/// Parses an entailment pair file.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<EntailPair>> {
    let path = path.as_ref();
    let src = read_text(path)?;
    parse_pairs(path, &src)
}

fn parse_pairs(path: &Path, src: &str) -> Result<Vec<EntailPair>> {
    let mut reader = Reader::from_str(src);
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();

    // state of the pair being read
    let mut current: Option<(String, Option<bool>, usize)> = None;
    let mut t1: Option<String> = None;
    let mut t2: Option<String> = None;
    let mut slot = Slot::None;
    let mut buf = String::new();

    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| Error::parse(path, line_of(src, reader.error_position()), e.to_string()))?;
        match event {
            Event::Start(e) if e.name().as_ref() == b"pair" => {
                let line = line_of(src, pos);
                let id = attr(path, &e, b"id")?
                    .ok_or_else(|| Error::parse(path, line, "<pair> without an id attribute"))?;
                let label = match attr(path, &e, b"label")?.as_deref() {
                    None => None,
                    Some("Y") => Some(true),
                    Some("N") => Some(false),
                    Some(other) => {
                        return Err(Error::InvalidLabel {
                            id,
                            label: other.to_owned(),
                        })
                    }
                };
                current = Some((id, label, line));
                t1 = None;
                t2 = None;
            }
            Event::Empty(e) if e.name().as_ref() == b"pair" => {
                return Err(Error::parse(path, line_of(src, pos), "<pair> has no <t1>/<t2> children"));
            }
            Event::Start(e) if current.is_some() && matches!(e.name().as_ref(), b"t1" | b"t2") => {
                slot = if e.name().as_ref() == b"t1" { Slot::T1 } else { Slot::T2 };
                buf.clear();
            }
            Event::Empty(e) if current.is_some() && matches!(e.name().as_ref(), b"t1" | b"t2") => {
                if e.name().as_ref() == b"t1" {
                    t1 = Some(String::new());
                } else {
                    t2 = Some(String::new());
                }
            }
            Event::Text(t) if slot != Slot::None => {
                let text = t
                    .unescape()
                    .map_err(|e| Error::parse(path, line_of(src, pos), e.to_string()))?;
                buf.push_str(&text);
            }
            Event::CData(t) if slot != Slot::None => {
                buf.push_str(&String::from_utf8_lossy(t.as_ref()));
            }
            Event::End(e) if matches!(e.name().as_ref(), b"t1" | b"t2") && slot != Slot::None => {
                let text = buf.trim().to_owned();
                match slot {
                    Slot::T1 => t1 = Some(text),
                    Slot::T2 => t2 = Some(text),
                    Slot::None => {}
                }
                slot = Slot::None;
            }
            Event::End(e) if e.name().as_ref() == b"pair" => {
                let (id, label, line) = current.take().expect("pair end without start");
                let t1 = t1
                    .take()
                    .ok_or_else(|| Error::parse(path, line, format!("pair {id:?} is missing <t1>")))?;
                let t2 = t2
                    .take()
                    .ok_or_else(|| Error::parse(path, line, format!("pair {id:?} is missing <t2>")))?;
                if !seen.insert(id.clone()) {
                    return Err(Error::DuplicateId {
                        id,
                        context: path.display().to_string(),
                    });
                }
                pairs.push(EntailPair {
                    t1: Document::new(format!("{id}/t1"), t1),
                    t2: Document::new(format!("{id}/t2"), t2),
                    id,
                    label,
                });
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some((id, _, line)) = current {
        return Err(Error::parse(path, line, format!("pair {id:?} is never closed")));
    }
    Ok(pairs)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes queries in the directory-per-query layout read by [`load_case_queries`].
pub fn write_case_queries(root: impl AsRef<Path>, queries: &[QueryCase]) -> Result<()> {
    let root = root.as_ref();
    for q in queries {
        let dir = root.join(&q.id);
        write_file(&dir.join("base.txt"), &q.base.text)?;
        let cand_dir = dir.join("candidates");
        fs::create_dir_all(&cand_dir).map_err(|e| Error::io(&cand_dir, e))?;
        for c in &q.candidates {
            write_file(&cand_dir.join(format!("{}.txt", c.id)), &c.text)?;
        }
        write_gold(&dir, &q.gold)?;
    }
    Ok(())
}

/// Writes statute-style questions (no candidate directories).
pub fn write_article_queries(root: impl AsRef<Path>, queries: &[QueryCase]) -> Result<()> {
    let root = root.as_ref();
    for q in queries {
        let dir = root.join(&q.id);
        write_file(&dir.join("base.txt"), &q.base.text)?;
        write_gold(&dir, &q.gold)?;
    }
    Ok(())
}

fn write_gold(dir: &Path, gold: &Option<BTreeSet<String>>) -> Result<()> {
    if let Some(gold) = gold {
        let ids: Vec<&String> = gold.iter().collect();
        let json = serde_json::to_string(&ids).expect("string list serializes");
        write_file(&dir.join("gold.json"), &format!("{json}\n"))?;
    }
    Ok(())
}

pub fn write_articles(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        text: &'a str,
    }
    let mut out = String::new();
    for d in docs {
        let line = serde_json::to_string(&Line {
            id: &d.id,
            text: &d.text,
        })
        .expect("article serializes");
        out.push_str(&line);
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[EntailPair]) -> Result<()> {
    use quick_xml::escape::escape;
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<pairs>\n");
    for p in pairs {
        out.push_str(&format!("<pair id=\"{}\"", escape(p.id.as_str())));
        if let Some(label) = p.label {
            out.push_str(if label { " label=\"Y\"" } else { " label=\"N\"" });
        }
        out.push_str(">\n");
        out.push_str(&format!("<t1>\n{}\n</t1>\n", escape(p.t1.text.as_str())));
        out.push_str(&format!("<t2>\n{}\n</t2>\n", escape(p.t2.text.as_str())));
        out.push_str("</pair>\n");
    }
    out.push_str("</pairs>\n");
    write_file(path.as_ref(), &out)
}
