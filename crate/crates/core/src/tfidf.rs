//! tf*idf document vectors and cosine ranking.
//!
//! Raw counts are weighted by the smoothed idf `ln((1 + N)/(1 + df)) + 1`
//! and every vector is L2-normalized, so a cosine is a plain dot product.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::fusion::ScoredList;

/// Sparse vector as `(column, value)` pairs sorted by column.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocab: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub doc_vectors: BTreeMap<String, SparseVec>,
}

fn normalize(v: &mut SparseVec) {
    let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, x) in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Dot product of two column-sorted sparse vectors.
pub fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

impl TfidfModel {
    pub fn fit(docs: &[Document]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.tokens.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let vocab: BTreeMap<String, usize> = df.keys().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
        let idf = df
            .values()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let mut model = TfidfModel {
            vocab,
            idf,
            doc_vectors: BTreeMap::new(),
        };
        for doc in docs {
            let v = model.transform(&doc.tokens);
            if model.doc_vectors.insert(doc.id.clone(), v).is_some() {
                return Err(Error::DuplicateId {
                    id: doc.id.clone(),
                    context: "tf*idf input".into(),
                });
            }
        }
        Ok(model)
    }

    /// Projects tokens onto the fitted vocabulary; unknown tokens are ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in tokens {
            if let Some(&col) = self.vocab.get(t.as_ref()) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().map(|(c, tf)| (c, tf * self.idf[c])).collect();
        v.sort_unstable_by_key(|e| e.0);
        normalize(&mut v);
        v
    }

    pub fn cosine<S: AsRef<str>>(&self, query: &[S], doc_id: &str) -> Result<f64> {
        let dv = self
            .doc_vectors
            .get(doc_id)
            .ok_or_else(|| Error::MissingDocument(doc_id.to_owned()))?;
        Ok(sparse_dot(&self.transform(query), dv))
    }

    pub fn rank_cosine<S: AsRef<str>, C: AsRef<str>>(
        &self,
        query_id: &str,
        query: &[S],
        candidates: &[C],
    ) -> Result<ScoredList> {
        let q = self.transform(query);
        let entries = candidates
            .iter()
            .map(|c| {
                let c = c.as_ref();
                self.doc_vectors
                    .get(c)
                    .map(|dv| (c.to_owned(), sparse_dot(&q, dv)))
                    .ok_or_else(|| Error::MissingDocument(c.to_owned()))
            })
            .collect::<Result<Vec<_>>>()?;
        ScoredList::new(query_id, entries)
    }
}
