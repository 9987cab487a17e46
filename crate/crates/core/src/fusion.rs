//! Score lists, multiplicative fusion, and candidate selection rules.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-query candidates sorted by descending score, ascending id on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredList {
    #[serde(rename = "query")]
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl ScoredList {
    /// Sorts `entries` into canonical order. Rejects duplicate ids and
    /// non-finite scores.
    pub fn new(query_id: impl Into<String>, mut entries: Vec<(String, f64)>) -> Result<Self> {
        let query_id = query_id.into();
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, s) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    context: format!("score list of query {query_id}"),
                });
            }
            if !s.is_finite() {
                return Err(Error::InvalidParameter(format!("score of {id:?} is not finite")));
            }
        }
        entries.sort_by(by_score_then_id);
        Ok(ScoredList { query_id, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, s)| *s).collect()
    }

    pub fn has_negative(&self) -> bool {
        self.entries.iter().any(|(_, s)| *s < 0.0)
    }

    /// Min-max rescales to `[0, 1]` when any score is negative; otherwise
    /// returns the list unchanged. A constant negative list maps to all ones.
    pub fn shifted_nonnegative(&self) -> ScoredList {
        if !self.has_negative() {
            return self.clone();
        }
        let min = self.entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let max = self.entries.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        let entries = self
            .entries
            .iter()
            .map(|(id, s)| {
                let v = if range > 0.0 { (s - min) / range } else { 1.0 };
                (id.clone(), v)
            })
            .collect();
        ScoredList::new(self.query_id.clone(), entries).expect("rescaling keeps ids and finiteness")
    }
}

/// Multiplies two score lists entry by entry. Lists holding a negative score
/// are first min-max shifted into `[0, 1]`.
pub fn fuse_multiply(a: &ScoredList, b: &ScoredList) -> Result<ScoredList> {
    let mismatch = || Error::FusionMismatch {
        query: a.query_id.clone(),
    };
    if a.query_id != b.query_id || a.len() != b.len() {
        return Err(mismatch());
    }
    let a = a.shifted_nonnegative();
    let b = b.shifted_nonnegative();
    let lookup: BTreeMap<&str, f64> = b.entries.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let entries = a
        .entries
        .iter()
        .map(|(id, s)| lookup.get(id.as_str()).map(|t| (id.clone(), s * t)).ok_or_else(mismatch))
        .collect::<Result<Vec<_>>>()?;
    ScoredList::new(a.query_id.clone(), entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Up to `max_k` entries scoring strictly above
    /// `rel_frac × mean(top two scores)`.
    TopKRelative { max_k: usize, rel_frac: f64 },
    /// The single best entry.
    Argmax,
    /// The first `n` entries.
    TopN { n: usize },
}

impl SelectionRule {
    pub fn relative(rel_frac: f64) -> Self {
        SelectionRule::TopKRelative { max_k: 10, rel_frac }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::TopKRelative { max_k, rel_frac } => {
                if max_k < 1 {
                    return Err(Error::InvalidParameter("max_k must be at least 1".into()));
                }
                if !(rel_frac > 0.0 && rel_frac <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "rel_frac must lie in (0, 1], got {rel_frac}"
                    )));
                }
            }
            SelectionRule::TopN { n } if n < 1 => {
                return Err(Error::InvalidParameter("top-n must be at least 1".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Threshold of the relative rule: `rel_frac × (s1 + s2)/2`, or
/// `rel_frac × s1` for a single entry. `None` for an empty list.
pub fn relative_threshold(list: &ScoredList, rel_frac: f64) -> Option<f64> {
    match list.entries.as_slice() {
        [] => None,
        [(_, s1)] => Some(rel_frac * s1),
        [(_, s1), (_, s2), ..] => Some(rel_frac * (s1 + s2) / 2.0),
    }
}

/// Applies `rule` to a canonically ordered list.
pub fn select(list: &ScoredList, rule: &SelectionRule) -> Result<Vec<String>> {
    rule.validate()?;
    let ids = match *rule {
        SelectionRule::TopKRelative { max_k, rel_frac } => match relative_threshold(list, rel_frac) {
            None => Vec::new(),
            Some(tau) => list
                .entries
                .iter()
                .filter(|(_, s)| *s > tau)
                .take(max_k)
                .map(|(id, _)| id.clone())
                .collect(),
        },
        SelectionRule::Argmax => {
            let (id, _) = list.entries.first().ok_or(Error::EmptySelection)?;
            vec![id.clone()]
        }
        SelectionRule::TopN { n } => list.entries.iter().take(n).map(|(id, _)| id.clone()).collect(),
    };
    Ok(ids)
}
