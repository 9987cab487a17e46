//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use lexcase::corpus::Document;
use lexcase::pvdm::{EmbedConfig, EmbeddingModel, Matrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Okapi BM25 evaluated term by term straight from the definition.
pub fn bm25_direct(docs: &[Vec<String>], query: &[String], doc: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let dl = docs[doc].len() as f64;
    let mut total = 0.0;
    for q in query {
        let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let tf = docs[doc].iter().filter(|t| *t == q).count() as f64;
        if tf > 0.0 {
            total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
    }
    total
}

pub fn random_corpus(rng: &mut impl Rng, max_docs: usize, vocab: usize, max_len: usize) -> Vec<Vec<String>> {
    let n = rng.gen_range(1..=max_docs);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
        })
        .collect()
}

/// Dense tf*idf cosine ranking: full matrix, columns in sorted term order.
pub fn tfidf_dense_ranking(docs: &[Vec<String>], query: &[String]) -> Vec<(String, f64)> {
    let terms: BTreeSet<&String> = docs.iter().flatten().collect();
    let terms: Vec<&String> = terms.into_iter().collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let vectorize = |tokens: &[String]| -> Vec<f64> {
        let mut v: Vec<f64> = terms
            .iter()
            .zip(&idf)
            .map(|(t, w)| tokens.iter().filter(|x| x == t).count() as f64 * w)
            .collect();
        let norm = v.iter().filter(|x| **x != 0.0).map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    };
    let q = vectorize(query);
    let mut out: Vec<(String, f64)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let v = vectorize(d);
            let dot = q.iter().zip(&v).filter(|(a, b)| **a != 0.0 && **b != 0.0).map(|(a, b)| a * b).sum();
            (format!("d{i:02}"), dot)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Average precision recomputed from precision@k at every relevant rank.
pub fn ap_brute(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    let top = &ranked[..ranked.len().min(k)];
    let mut sum = 0.0;
    for (i, id) in top.iter().enumerate() {
        if gold.contains(id) {
            let hits = top[..=i].iter().filter(|x| gold.contains(*x)).count();
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / gold.len() as f64
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for x in &mut m.data {
        *x = rng.gen::<f64>() - 0.5;
    }
    m
}

fn close(analytic: f64, numeric: f64, rel: f64) -> bool {
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()) + 1e-9
}

/// Compares analytic negative-sampling gradients with central differences
/// on a 3-word, 4-dimensional toy model. Returns the worst relative error.
pub fn ns_gradient_check(h: f64, rel: f64) -> Result<f64, String> {
    use lexcase::pvdm::{ns_gradients, ns_loss, NsExample};
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dim = 4;
    let word_in = random_matrix(3, dim, &mut rng);
    let word_out = random_matrix(3, dim, &mut rng);
    let doc: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    let context = [0usize, 1];
    let negatives = [1usize, 0];
    let ex = NsExample {
        context: &context,
        target: 2,
        negatives: &negatives,
    };
    let g = ns_gradients(&doc, &word_in, &word_out, ex);
    let mut worst: f64 = 0.0;
    let mut check = |name: String, a: f64, n: f64| -> Result<(), String> {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
        worst = worst.max(err);
        if close(a, n, rel) {
            Ok(())
        } else {
            Err(format!("{name}: analytic {a:e} numeric {n:e}"))
        }
    };
    for i in 0..dim {
        let (mut p, mut m) = (doc.clone(), doc.clone());
        p[i] += h;
        m[i] -= h;
        let n = (ns_loss(&p, &word_in, &word_out, ex) - ns_loss(&m, &word_in, &word_out, ex)) / (2.0 * h);
        check(format!("doc[{i}]"), g.doc[i], n)?;
    }
    for row in 0..3 {
        for i in 0..dim {
            let idx = row * dim + i;
            let (mut p, mut m) = (word_in.clone(), word_in.clone());
            p.data[idx] += h;
            m.data[idx] -= h;
            let n = (ns_loss(&doc, &p, &word_out, ex) - ns_loss(&doc, &m, &word_out, ex)) / (2.0 * h);
            let a = g.word_in.get(&row).map_or(0.0, |v| v[i]);
            check(format!("word_in[{row}][{i}]"), a, n)?;

            let (mut p, mut m) = (word_out.clone(), word_out.clone());
            p.data[idx] += h;
            m.data[idx] -= h;
            let n = (ns_loss(&doc, &word_in, &p, ex) - ns_loss(&doc, &word_in, &m, ex)) / (2.0 * h);
            let a = g.word_out.get(&row).map_or(0.0, |v| v[i]);
            check(format!("word_out[{row}][{i}]"), a, n)?;
        }
    }
    Ok(worst)
}

/// Twenty documents, ten per topic, with disjoint topic vocabularies.
pub fn two_topics() -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let topics = [
        ["lease", "rent", "landlord", "tenant", "arrears", "evict", "premises", "covenant"],
        ["patent", "claim", "invent", "prior", "novelty", "infringe", "licence", "royalty"],
    ];
    let mut docs = Vec::new();
    for (t, words) in topics.iter().enumerate() {
        for i in 0..10 {
            let toks: Vec<&str> = (0..60).map(|_| *words.choose(&mut rng).unwrap()).collect();
            docs.push(Document::from_tokens(format!("t{t}d{i}"), &toks));
        }
    }
    docs
}

pub fn two_topic_config() -> EmbedConfig {
    EmbedConfig {
        dim: 50,
        window: 3,
        epochs: 50,
        negatives: 5,
        min_count: 1,
        ..EmbedConfig::default()
    }
}

/// Mean cosine between doc vectors of the same topic and of different topics.
pub fn topic_cosines(model: &EmbeddingModel, docs: &[Document]) -> (f64, f64) {
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for (i, a) in docs.iter().enumerate() {
        for b in &docs[i + 1..] {
            let c = lexcase::pvdm::cosine(model.doc_vector(&a.id).unwrap(), model.doc_vector(&b.id).unwrap());
            if a.id[..2] == b.id[..2] {
                intra.push(c);
            } else {
                inter.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&intra), mean(&inter))
}

/// Linearly separable 3-feature rows with a margin.
pub fn separable_rows(n: usize, seed: u64) -> Vec<(Vec<f64>, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    while rows.len() < n {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s = x[0] + 0.5 * x[1] - x[2];
        if s.abs() > 0.3 {
            rows.push((x, s > 0.0));
        }
    }
    rows
}

pub fn id_map(pairs: &[(&str, bool)]) -> BTreeMap<String, bool> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}
