//! Micro-averaged precision / recall / F-β, MAP@k and accuracy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retrieved lists and gold sets for a batch of queries.
///
/// A query that appears only in `gold` counts as an empty retrieval. A query
/// whose gold set is empty still contributes its retrieved items to the
/// precision denominator but is skipped by MAP.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub retrieved: BTreeMap<String, Vec<String>>,
    pub gold: BTreeMap<String, BTreeSet<String>>,
}

impl RunResult {
    pub fn new(retrieved: BTreeMap<String, Vec<String>>, gold: BTreeMap<String, BTreeSet<String>>) -> Self {
        RunResult { retrieved, gold }
    }

    /// Queries that have gold labels.
    fn judged(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>, &[String])> {
        self.gold.iter().map(move |(q, g)| {
            let r = self.retrieved.get(q).map(Vec::as_slice).unwrap_or(&[]);
            (q, g, r)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub retrieved: usize,
    pub relevant: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub beta: f64,
    pub f_beta: f64,
    pub map_at_k: Option<f64>,
    pub k: Option<usize>,
    pub counts: Counts,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

/// `(1 + β²)·P·R / (β²·P + R)`, or 0 when `P + R = 0`.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    if precision + recall <= 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * precision * recall / (b2 * precision + recall)
}

/// Pooled counts over every judged query.
pub fn micro_prf(run: &RunResult, beta: f64) -> Result<MetricsReport> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let mut counts = Counts::default();
    for (_, gold, retrieved) in run.judged() {
        counts.retrieved += retrieved.len();
        counts.relevant += gold.len();
        counts.correct += retrieved.iter().filter(|id| gold.contains(*id)).count();
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(counts.correct, counts.retrieved);
    let recall = ratio(counts.correct, counts.relevant);
    Ok(MetricsReport {
        precision,
        recall,
        beta,
        f_beta: f_beta(precision, recall, beta),
        map_at_k: None,
        k: None,
        counts,
        zero_division: counts.retrieved == 0 || counts.relevant == 0,
    })
}

/// Average precision of one ranked list over its first `k` items.
pub fn average_precision(retrieved: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, id) in retrieved.iter().take(k).enumerate() {
        if gold.contains(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / gold.len() as f64
}

/// Mean of [`average_precision`] over queries with a nonempty gold set.
pub fn map_at_k(run: &RunResult, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let aps: Vec<f64> = run
        .judged()
        .filter(|(_, g, _)| !g.is_empty())
        .map(|(_, g, r)| average_precision(r, g, k))
        .collect();
    if aps.is_empty() {
        return Err(Error::UndefinedMetric("no query has relevant documents".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Fraction of predictions that match the gold label.
pub fn accuracy(predictions: &BTreeMap<String, bool>, gold: &BTreeMap<String, bool>) -> Result<f64> {
    if let Some(extra) = predictions.keys().find(|id| !gold.contains_key(*id)) {
        return Err(Error::InvalidParameter(format!("prediction {extra:?} has no gold label")));
    }
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric("no predictions overlap the gold labels".into()));
    }
    let correct = predictions.iter().filter(|(id, p)| gold[*id] == **p).count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn list(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn single(retrieved: &[&str], gold: &[&str]) -> RunResult {
        RunResult::new(
            BTreeMap::from([("q".to_string(), list(retrieved))]),
            BTreeMap::from([("q".to_string(), set(gold))]),
        )
    }

    #[test]
    fn perfect_and_empty_runs() {
        let r = micro_prf(&single(&["a", "b"], &["a", "b"]), 1.0).unwrap();
        assert_eq!((r.precision, r.recall, r.f_beta), (1.0, 1.0, 1.0));
        let r = micro_prf(&single(&[], &["a"]), 1.0).unwrap();
        assert_eq!((r.precision, r.recall, r.f_beta), (0.0, 0.0, 0.0));
        assert!(r.zero_division);
        assert!(micro_prf(&single(&[], &["a"]), 0.0).is_err());
    }

    #[test]
    fn published_f_values() {
        assert!((f_beta(0.4653, 0.3455, 1.0) - 0.3965).abs() < 5e-4);
        assert!((f_beta(0.7045, 0.6889, 1.0) - 0.6966).abs() < 5e-4);
        assert!((f_beta(0.5510, 0.4462, 2.0) - 0.4639).abs() < 5e-4);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&list(&["A", "X"]), &set(&["A"]), 100), 1.0);
        assert_eq!(average_precision(&list(&["X", "A"]), &set(&["A"]), 100), 0.5);
        let ap = average_precision(&list(&["A", "X", "B"]), &set(&["A", "B"]), 100);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        // nothing after rank k counts
        assert_eq!(average_precision(&list(&["X", "A"]), &set(&["A"]), 1), 0.0);
    }

    #[test]
    fn map_skips_unjudged_and_empty_gold() {
        let run = RunResult::new(
            BTreeMap::from([("q1".into(), list(&["A"])), ("q2".into(), list(&["B"])), ("q3".into(), list(&["C"]))]),
            BTreeMap::from([("q1".into(), set(&["A"])), ("q2".into(), set(&[]))]),
        );
        assert_eq!(map_at_k(&run, 100).unwrap(), 1.0);
        // q2's retrieved item still counts against precision; q3 has no gold at all
        let r = micro_prf(&run, 1.0).unwrap();
        assert_eq!(r.counts, Counts { retrieved: 2, relevant: 1, correct: 1 });
        let none = RunResult::new(BTreeMap::new(), BTreeMap::from([("q".into(), set(&[]))]));
        assert!(matches!(map_at_k(&none, 10), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn accuracy_cases() {
        let gold: BTreeMap<String, bool> = [("a", true), ("b", false), ("c", true), ("d", false)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        assert_eq!(accuracy(&gold, &gold).unwrap(), 1.0);
        let half: BTreeMap<String, bool> = [("a", true), ("b", true), ("c", false), ("d", false)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        assert_eq!(accuracy(&half, &gold).unwrap(), 0.5);
        assert!(accuracy(&BTreeMap::new(), &gold).is_err());
        let stray = BTreeMap::from([("z".to_string(), true)]);
        assert!(accuracy(&stray, &gold).is_err());
    }

    #[test]
    fn f_beta_moves_toward_recall() {
        let (p, r) = (0.8, 0.3);
        let f: Vec<f64> = [1.0, 2.0, 10.0].iter().map(|b| f_beta(p, r, *b)).collect();
        assert!(f[0] > f[1] && f[1] > f[2] && f[2] > r);
        assert!((f[2] - r).abs() < (f[1] - r).abs());
    }

    proptest! {
        #[test]
        fn metrics_are_bounded(
            queries in prop::collection::vec(
                (prop::collection::btree_set(0u8..20, 0..8), prop::collection::btree_set(0u8..20, 0..6)),
                1..6,
            ),
            beta in 0.1f64..10.0,
        ) {
            let mut retrieved = BTreeMap::new();
            let mut gold = BTreeMap::new();
            for (i, (r, g)) in queries.iter().enumerate() {
                retrieved.insert(format!("q{i}"), r.iter().map(|x| format!("d{x}")).collect::<Vec<_>>());
                gold.insert(format!("q{i}"), g.iter().map(|x| format!("d{x}")).collect::<BTreeSet<_>>());
            }
            let run = RunResult::new(retrieved.clone(), gold.clone());
            let m = micro_prf(&run, beta).unwrap();
            for v in [m.precision, m.recall, m.f_beta] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let f1 = micro_prf(&run, 1.0).unwrap().f_beta;
            if m.precision + m.recall > 0.0 {
                prop_assert!(f1 >= m.precision.min(m.recall) - 1e-12);
                prop_assert!(f1 <= m.precision.max(m.recall) + 1e-12);
            }
            if let Ok(map) = map_at_k(&run, 5) {
                prop_assert!((0.0..=1.0).contains(&map));
                // query order is irrelevant: rebuild with renamed, reversed keys
                let n = queries.len();
                let rr: BTreeMap<String, Vec<String>> = retrieved.iter().map(|(k, v)| (format!("z{}", n - k[1..].parse::<usize>().unwrap()), v.clone())).collect();
                let rg: BTreeMap<String, BTreeSet<String>> = gold.iter().map(|(k, v)| (format!("z{}", n - k[1..].parse::<usize>().unwrap()), v.clone())).collect();
                prop_assert!((map_at_k(&RunResult::new(rr, rg), 5).unwrap() - map).abs() < 1e-12);
            }
            // retrieving every gold id (plus noise) gives full recall
            let all: BTreeMap<String, Vec<String>> = gold.iter().map(|(k, g)| {
                let mut v: Vec<String> = g.iter().cloned().collect();
                v.push("noise".into());
                (k.clone(), v)
            }).collect();
            let full = micro_prf(&RunResult::new(all, gold.clone()), beta).unwrap();
            if full.counts.relevant > 0 {
                prop_assert_eq!(full.recall, 1.0);
            }
        }
    }
}
