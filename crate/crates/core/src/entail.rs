//! Yes/No entailment with lexical pair features and logistic regression.
//!
//! The feature interface is open: [`LexicalContext::featurize`] produces five
//! similarity features per pair, but any fixed-width vector (for example one
//! read from a JSON-lines feature file) can be trained on with the same
//! [`train_classifier`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Params, InvertedIndex};
use crate::corpus::{read_text, Document, EntailPair};
use crate::error::{Error, Result};
use crate::pvdm::sigmoid;
use crate::textprep::{preprocess_text, PrepConfig, Stage};
use crate::tfidf::{sparse_dot, TfidfModel};

const LEN_RATIO_BOUND: f64 = 16.0;
const MIN_STD: f64 = 1e-12;
const PROB_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub bm25_t2_given_t1: f64,
    pub tfidf_cosine: f64,
    pub token_overlap_jaccard: f64,
    pub len_ratio: f64,
    pub negation_mismatch: f64,
}

impl PairFeatures {
    pub const NAMES: [&'static str; 5] = [
        "bm25_t2_given_t1",
        "tfidf_cosine",
        "token_overlap_jaccard",
        "len_ratio",
        "negation_mismatch",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.bm25_t2_given_t1,
            self.tfidf_cosine,
            self.token_overlap_jaccard,
            self.len_ratio,
            self.negation_mismatch,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurized {
    pub features: PairFeatures,
    /// Either side was empty after preprocessing.
    pub degenerate: bool,
}

/// Collection statistics used to featurize pairs, fitted on stage-2 tokens
/// of the article collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalContext {
    pub index: InvertedIndex,
    pub params: Bm25Params,
    pub tfidf: TfidfModel,
}

impl LexicalContext {
    pub fn fit(articles: &[Document], prep: &PrepConfig, params: Bm25Params) -> Result<Self> {
        let docs: Vec<Document> = articles
            .iter()
            .map(|d| Document {
                id: d.id.clone(),
                text: String::new(),
                tokens: preprocess_text(&d.text, prep),
            })
            .collect();
        Ok(LexicalContext {
            index: InvertedIndex::build(&docs)?,
            params,
            tfidf: TfidfModel::fit(&docs)?,
        })
    }

    /// Features of one pair. `prep` must be a stage-2 configuration; the
    /// negation check runs on unfiltered tokens because most negation words
    /// are stopwords or shorter than three characters.
    pub fn featurize(&self, pair: &EntailPair, prep: &PrepConfig, negations: &HashSet<String>) -> Featurized {
        debug_assert_eq!(prep.stage, Stage::Stage2);
        let t1 = preprocess_text(&pair.t1.text, prep);
        let t2 = preprocess_text(&pair.t2.text, prep);
        let degenerate = t1.is_empty() || t2.is_empty();

        let bm25 = self.index.score_tokens(self.params, &t2, &t1);
        let cos = sparse_dot(&self.tfidf.transform(&t1), &self.tfidf.transform(&t2));
        let s1: BTreeSet<&str> = t1.iter().map(String::as_str).collect();
        let s2: BTreeSet<&str> = t2.iter().map(String::as_str).collect();
        let union = s1.union(&s2).count();
        let jaccard = if union == 0 {
            0.0
        } else {
            s1.intersection(&s2).count() as f64 / union as f64
        };
        let len_ratio = match (t1.len(), t2.len()) {
            (0, 0) => 1.0,
            (0, _) => LEN_RATIO_BOUND,
            (a, b) => (b as f64 / a as f64).clamp(1.0 / LEN_RATIO_BOUND, LEN_RATIO_BOUND),
        };
        let raw1 = crate::textprep::tokenize(&pair.t1.text);
        let raw2 = crate::textprep::tokenize(&pair.t2.text);
        let neg1 = raw1.iter().any(|t| negations.contains(t));
        let neg2 = raw2.iter().any(|t| negations.contains(t));

        Featurized {
            features: PairFeatures {
                bm25_t2_given_t1: bm25,
                tfidf_cosine: cos,
                token_overlap_jaccard: jaccard,
                len_ratio,
                negation_mismatch: if neg1 != neg2 { 1.0 } else { 0.0 },
            },
            degenerate,
        }
    }
}

/// Externally computed per-pair feature vectors, one JSON object per line:
/// `{"id": "...", "features": [f64, ...]}`. All rows must have equal width.
pub fn load_feature_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        features: Vec<f64>,
    }
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    let mut width = None;
    for (i, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if *width.get_or_insert(rec.features.len()) != rec.features.len() {
            return Err(Error::parse(path, i + 1, "feature vector width differs from earlier lines"));
        }
        if rec.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(path, i + 1, "non-finite feature value"));
        }
        if out.insert(rec.id.clone(), rec.features).is_some() {
            return Err(Error::DuplicateId {
                id: rec.id,
                context: path.display().to_string(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    /// One update per example, in a seeded shuffled order each epoch.
    Sgd,
    /// One update per epoch on the mean gradient.
    FullBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 200,
            lr: 0.05,
            l2: 1e-4,
            seed: 7,
            optimizer: Optimizer::Sgd,
        }
    }
}

/// Standardized logistic-regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    /// Indices of retained features; zero-variance ones are dropped.
    pub kept: Vec<usize>,
    pub dropped: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub seed: u64,
    /// Mean training log-loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl LinearModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .enumerate()
            .map(|(j, &i)| (x[i] - self.means[j]) / self.stds[j])
            .collect()
    }

    fn logit(&self, z: &[f64]) -> f64 {
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `(label, probability)` with `label = probability > 0.5`.
    pub fn predict(&self, x: &[f64]) -> Result<(bool, f64)> {
        if x.len() != self.feature_names.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                x.len()
            )));
        }
        let p = sigmoid(self.logit(&self.standardize(x))).clamp(PROB_EPS, 1.0 - PROB_EPS);
        Ok((p > 0.5, p))
    }
}

fn log_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Trains on `(features, label)` rows.
pub fn train_classifier(
    rows: &[(Vec<f64>, bool)],
    feature_names: &[String],
    opts: &TrainOptions,
) -> Result<LinearModel> {
    if rows.len() < 2 || rows.iter().all(|r| r.1) || rows.iter().all(|r| !r.1) {
        return Err(Error::DegenerateLabels);
    }
    let width = feature_names.len();
    if let Some(r) = rows.iter().find(|r| r.0.len() != width) {
        return Err(Error::InvalidParameter(format!(
            "feature row has {} values, expected {width}",
            r.0.len()
        )));
    }
    if opts.epochs == 0 || !(opts.lr > 0.0) || !(opts.l2 >= 0.0) {
        return Err(Error::InvalidParameter("epochs >= 1, lr > 0 and l2 >= 0 are required".into()));
    }
    let n = rows.len() as f64;
    let (mut kept, mut dropped, mut means, mut stds) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for j in 0..width {
        let mean = rows.iter().map(|r| r.0[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.0[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > MIN_STD {
            kept.push(j);
            means.push(mean);
            stds.push(std);
        } else {
            dropped.push(feature_names[j].clone());
        }
    }
    let mut model = LinearModel {
        feature_names: feature_names.to_vec(),
        weights: vec![0.0; kept.len()],
        kept,
        dropped,
        means,
        stds,
        bias: 0.0,
        seed: opts.seed,
        loss_history: Vec::with_capacity(opts.epochs),
    };
    let data: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .map(|(x, y)| (model.standardize(x), if *y { 1.0 } else { 0.0 }))
        .collect();
    let d = model.weights.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..opts.epochs {
        match opts.optimizer {
            Optimizer::Sgd => {
                order.shuffle(&mut rng);
                for &i in &order {
                    let (z, y) = &data[i];
                    let g = sigmoid(model.logit(z)) - y;
                    for k in 0..d {
                        model.weights[k] -= opts.lr * (g * z[k] + opts.l2 * model.weights[k]);
                    }
                    model.bias -= opts.lr * g;
                }
            }
            Optimizer::FullBatch => {
                let mut gw = vec![0.0; d];
                let mut gb = 0.0;
                for (z, y) in &data {
                    let g = sigmoid(model.logit(z)) - y;
                    for k in 0..d {
                        gw[k] += g * z[k];
                    }
                    gb += g;
                }
                for k in 0..d {
                    model.weights[k] -= opts.lr * (gw[k] / n + opts.l2 * model.weights[k]);
                }
                model.bias -= opts.lr * gb / n;
            }
        }
        let loss = data.iter().map(|(z, y)| log_loss(sigmoid(model.logit(z)), *y)).sum::<f64>() / n
            + 0.5 * opts.l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
        model.loss_history.push(loss);
    }
    Ok(model)
}

/// Everything `predict` needs: the classifier plus, for lexical features,
/// the article statistics it was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailModel {
    pub linear: LinearModel,
    pub context: Option<LexicalContext>,
    pub validation_accuracy: Option<f64>,
}

impl EntailModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::ModelFormat {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::ModelFormat {
            path: path.to_owned(),
            reason: e.to_string(),
        })
    }
}

/// Seeded 80/20 split of `0..n` into (train, validation) indices.
pub fn holdout_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n * 4).div_ceil(5);
    let val = idx.split_off(n_train);
    (idx, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::DataTables;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn context() -> LexicalContext {
        let articles = vec![
            Document::new("a1", "A contract of sale becomes effective when the seller promises to transfer property."),
            Document::new("a2", "A guarantor is liable to perform the obligation if the principal obligor fails."),
            Document::new("a3", "Possession of movables acquired in good faith confers ownership."),
        ];
        LexicalContext::fit(&articles, &PrepConfig::stage2(), Bm25Params::default()).unwrap()
    }

    fn pair(t1: &str, t2: &str) -> EntailPair {
        EntailPair {
            id: "p".into(),
            t1: Document::new("p/t1", t1),
            t2: Document::new("p/t2", t2),
            label: None,
        }
    }

    #[test]
    fn identity_and_disjoint_pairs() {
        let ctx = context();
        let tables = DataTables::bundled();
        let prep = PrepConfig::stage2();
        let text = "The seller promises to transfer property under the contract.";
        let f = ctx.featurize(&pair(text, text), &prep, &tables.negations);
        assert_eq!(f.features.token_overlap_jaccard, 1.0);
        assert_eq!(f.features.len_ratio, 1.0);
        assert!((f.features.tfidf_cosine - 1.0).abs() < 1e-12);
        assert!(f.features.bm25_t2_given_t1 > 0.0);
        assert!(!f.degenerate);

        let f = ctx.featurize(&pair("seller contract property", "guarantor obligation liable"), &prep, &tables.negations);
        assert_eq!(f.features.token_overlap_jaccard, 0.0);
        assert_eq!(f.features.tfidf_cosine, 0.0);
        assert_eq!(f.features.bm25_t2_given_t1, 0.0);
    }

    #[test]
    fn negation_and_degenerate_pairs() {
        let ctx = context();
        let tables = DataTables::bundled();
        let prep = PrepConfig::stage2();
        let t1 = "The guarantor is liable";
        let f = ctx.featurize(&pair(t1, &format!("{t1} not")), &prep, &tables.negations);
        assert_eq!(f.features.negation_mismatch, 1.0);
        let f = ctx.featurize(&pair("not liable", "never liable"), &prep, &tables.negations);
        assert_eq!(f.features.negation_mismatch, 0.0);

        let f = ctx.featurize(&pair("of the", "guarantor liable"), &prep, &tables.negations);
        assert!(f.degenerate);
        assert_eq!(f.features.len_ratio, 16.0);
        assert!(f.features.to_vec().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn single_class_is_rejected() {
        let rows = vec![(vec![1.0], true), (vec![2.0], true)];
        assert!(matches!(
            train_classifier(&rows, &names(1), &TrainOptions::default()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn constant_features_predict_majority() {
        let rows: Vec<(Vec<f64>, bool)> = (0..10).map(|i| (vec![3.0, 3.0], i < 7)).collect();
        let m = train_classifier(&rows, &names(2), &TrainOptions::default()).unwrap();
        assert!(m.kept.is_empty());
        assert_eq!(m.dropped, ["f0", "f1"]);
        assert!(m.predict(&[3.0, 3.0]).unwrap().0);
    }

    #[test]
    fn zero_model_is_undecided() {
        let m = LinearModel {
            feature_names: names(1),
            kept: vec![0],
            dropped: vec![],
            means: vec![0.0],
            stds: vec![1.0],
            weights: vec![0.0],
            bias: 0.0,
            seed: 0,
            loss_history: vec![],
        };
        assert_eq!(m.predict(&[4.0]).unwrap(), (false, 0.5));
        assert!(m.predict(&[4.0, 1.0]).is_err());
    }

    #[test]
    fn split_sizes() {
        let (tr, va) = holdout_split(724, 7);
        assert_eq!((tr.len(), va.len()), (580, 144));
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..724).collect::<Vec<_>>());
        assert_eq!(holdout_split(724, 7), (tr, va));
    }
}
