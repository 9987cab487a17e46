//! Okapi BM25 over an in-memory inverted index.
//!
//! ```text
//! score(D, Q) = Σ_i idf(q_i) · f(q_i, D)·(k1 + 1) / (f(q_i, D) + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! The sum runs over query token *instances*, so a term repeated in the query
//! counts once per repetition. The idf form is never negative, which keeps
//! multiplicative fusion well defined.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::fusion::ScoredList;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidParameter(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Term → postings map plus the collection statistics BM25 needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// Postings sorted by document id; every frequency is at least 1.
    pub postings: BTreeMap<String, Vec<(String, u32)>>,
    pub doc_len: BTreeMap<String, usize>,
    pub df: BTreeMap<String, usize>,
    pub n_docs: usize,
    pub avgdl: f64,
}

impl InvertedIndex {
    /// Indexes preprocessed documents. Empty token lists are allowed.
    pub fn build(docs: &[Document]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
        let mut doc_len = BTreeMap::new();
        for doc in docs {
            if doc_len.insert(doc.id.clone(), doc.tokens.len()).is_some() {
                return Err(Error::DuplicateId {
                    id: doc.id.clone(),
                    context: "index input".into(),
                });
            }
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in &doc.tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, f) in tf {
                postings
                    .entry(term.to_owned())
                    .or_default()
                    .push((doc.id.clone(), f));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        }
        let df = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        let n_docs = doc_len.len();
        let total: usize = doc_len.values().sum();
        Ok(InvertedIndex {
            postings,
            doc_len,
            df,
            n_docs,
            avgdl: total as f64 / n_docs as f64,
        })
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.doc_len.contains_key(doc_id)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_len.keys().map(String::as_str)
    }

    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| {
                p.binary_search_by(|(d, _)| d.as_str().cmp(doc_id))
                    .ok()
                    .map(|i| p[i].1)
            })
            .unwrap_or(0)
    }

    /// `ln(1 + (N − df + 0.5)/(df + 0.5))`; unseen terms have `df = 0`.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        let n = self.n_docs as f64;
        ((n - df + 0.5) / (df + 0.5)).ln_1p()
    }

    fn term_weight(&self, params: Bm25Params, tf: f64, len: f64) -> f64 {
        if tf == 0.0 {
            return 0.0;
        }
        // avgdl is zero only when every document is empty, and then tf is zero too.
        let norm = 1.0 - params.b + params.b * len / self.avgdl;
        tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    /// BM25 score of an indexed document.
    pub fn score<S: AsRef<str>>(&self, params: Bm25Params, query: &[S], doc_id: &str) -> Result<f64> {
        let len = *self
            .doc_len
            .get(doc_id)
            .ok_or_else(|| Error::MissingDocument(doc_id.to_owned()))? as f64;
        Ok(query
            .iter()
            .map(|q| {
                let q = q.as_ref();
                let tf = self.term_frequency(q, doc_id) as f64;
                self.idf(q) * self.term_weight(params, tf, len)
            })
            .sum())
    }

    /// Scores an arbitrary token stream against this collection's statistics
    /// (idf and avgdl) without it being part of the index.
    pub fn score_tokens<S: AsRef<str>, T: AsRef<str>>(
        &self,
        params: Bm25Params,
        query: &[S],
        doc_tokens: &[T],
    ) -> f64 {
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in doc_tokens {
            *tf.entry(t.as_ref()).or_default() += 1;
        }
        let len = doc_tokens.len() as f64;
        query
            .iter()
            .map(|q| {
                let q = q.as_ref();
                let f = tf.get(q).copied().unwrap_or(0) as f64;
                if f == 0.0 {
                    0.0
                } else {
                    let norm = if self.avgdl > 0.0 {
                        1.0 - params.b + params.b * len / self.avgdl
                    } else {
                        1.0
                    };
                    self.idf(q) * f * (params.k1 + 1.0) / (f + params.k1 * norm)
                }
            })
            .sum()
    }

    /// Scores every candidate and sorts descending, ties by ascending id.
    pub fn rank<S: AsRef<str>, C: AsRef<str>>(
        &self,
        params: Bm25Params,
        query_id: &str,
        query: &[S],
        candidates: &[C],
    ) -> Result<ScoredList> {
        let entries = candidates
            .iter()
            .map(|c| {
                let c = c.as_ref();
                self.score(params, query, c).map(|s| (c.to_owned(), s))
            })
            .collect::<Result<Vec<_>>>()?;
        ScoredList::new(query_id, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> InvertedIndex {
        InvertedIndex::build(&[
            Document::from_tokens("D1", &["a", "b", "a"]),
            Document::from_tokens("D2", &["b", "c"]),
        ])
        .unwrap()
    }

    #[test]
    fn build_counts() {
        let idx = toy();
        assert_eq!(idx.n_docs, 2);
        assert_eq!(idx.avgdl, 2.5);
        assert_eq!(idx.df["a"], 1);
        assert_eq!(idx.df["b"], 2);
        assert_eq!(idx.postings["a"], vec![("D1".to_string(), 2)]);
    }

    #[test]
    fn degenerate_corpora() {
        let idx = InvertedIndex::build(&[Document::from_tokens::<&str>("E", &[])]).unwrap();
        assert_eq!(idx.n_docs, 1);
        assert_eq!(idx.avgdl, 0.0);
        assert!(idx.postings.is_empty());
        assert_eq!(idx.score(Bm25Params::default(), &["x"], "E").unwrap(), 0.0);
        assert!(matches!(InvertedIndex::build(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn idf_values() {
        let idx = toy();
        assert!((idx.idf("a") - 2f64.ln()).abs() < 1e-15);
        assert!((idx.idf("zzz") - 6f64.ln()).abs() < 1e-15);
        assert!(idx.idf("b") > 0.0);
    }

    #[test]
    fn hand_computed_score() {
        let idx = toy();
        let s = idx.score(Bm25Params::default(), &["a"], "D1").unwrap();
        let expected = 2f64.ln() * 4.4 / 3.38;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.9023).abs() < 5e-4);
        assert_eq!(idx.score(Bm25Params::default(), &["a"], "D2").unwrap(), 0.0);
        assert!(matches!(
            idx.score(Bm25Params::default(), &["a"], "D9"),
            Err(Error::MissingDocument(_))
        ));
    }

    #[test]
    fn k1_zero_is_boolean_idf() {
        let idx = toy();
        let p = Bm25Params::new(0.0, 0.75).unwrap();
        let s = idx.score(p, &["a", "b", "c"], "D1").unwrap();
        assert!((s - (idx.idf("a") + idx.idf("b"))).abs() < 1e-12);
    }

    #[test]
    fn rank_order_and_ties() {
        let idx = toy();
        let list = idx.rank(Bm25Params::default(), "q", &["a"], &["D2", "D1"]).unwrap();
        assert_eq!(list.ids(), ["D1", "D2"]);
        let list = idx.rank::<&str, _>(Bm25Params::default(), "q", &[], &["D2", "D1"]).unwrap();
        assert_eq!(list.ids(), ["D1", "D2"]);
        assert!(list.entries.iter().all(|(_, s)| *s == 0.0));

        let twins = InvertedIndex::build(&[
            Document::from_tokens("y", &["a", "b"]),
            Document::from_tokens("x", &["a", "b"]),
        ])
        .unwrap();
        let list = twins.rank(Bm25Params::default(), "q", &["a"], &["y", "x"]).unwrap();
        assert_eq!(list.ids(), ["x", "y"]);
        assert_eq!(list.entries[0].1, list.entries[1].1);
    }

    #[test]
    fn params_are_validated() {
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(1.0, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn tf_monotone_and_length_penalty(
            tf in 1u32..50, len in 1usize..200, avgdl in 1.0f64..100.0,
            k1 in 0.01f64..3.0, b in 0.01f64..1.0,
        ) {
            let idx = InvertedIndex { postings: BTreeMap::new(), doc_len: BTreeMap::new(), df: BTreeMap::new(), n_docs: 1, avgdl };
            let p = Bm25Params { k1, b };
            let w = idx.term_weight(p, tf as f64, len as f64);
            prop_assert!(idx.term_weight(p, tf as f64 + 1.0, len as f64) > w);
            prop_assert!(idx.term_weight(p, tf as f64, len as f64 + 1.0) < w);
        }

        #[test]
        fn order_invariant_and_nonnegative(
            docs in prop::collection::vec(prop::collection::vec(0u8..8, 0..12), 1..8),
            query in prop::collection::vec(0u8..10, 0..6),
        ) {
            let tok = |v: &Vec<u8>| v.iter().map(|x| format!("t{x}")).collect::<Vec<_>>();
            let fwd: Vec<Document> = docs.iter().enumerate()
                .map(|(i, d)| Document::from_tokens(format!("d{i}"), &tok(d))).collect();
            let mut rev = fwd.clone();
            rev.reverse();
            let a = InvertedIndex::build(&fwd).unwrap();
            let b = InvertedIndex::build(&rev).unwrap();
            let q = tok(&query);
            for d in &fwd {
                let sa = a.score(Bm25Params::default(), &q, &d.id).unwrap();
                prop_assert_eq!(sa, b.score(Bm25Params::default(), &q, &d.id).unwrap());
                prop_assert!(sa >= 0.0);
                let ext = a.score_tokens(Bm25Params::default(), &q, &d.tokens);
                prop_assert!((ext - sa).abs() <= 1e-12 * sa.max(1.0));
            }
        }
    }
}
