//! Paragraph vectors (PV-DM) trained with negative sampling.
//!
//! For each position `t` of a document the predictor is the mean of the
//! document vector and the input vectors of the words within `window`
//! positions of `t`. It is scored against the output vector of the word at
//! `t` and of `negatives` noise words drawn from the unigram distribution
//! raised to 0.75, under the logistic loss
//!
//! ```text
//! L = −ln σ(h·u_target) − Σ_noise ln σ(−h·u_noise)
//! ```
//!
//! Training is plain single-threaded SGD with a linearly decaying learning
//! rate, so a fixed seed reproduces the model bit for bit. Inference freezes
//! both word matrices and fits only a fresh document vector.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::fusion::ScoredList;

const UNIGRAM_POWER: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub min_count: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 100,
            window: 5,
            epochs: 50,
            negatives: 5,
            lr_start: 0.025,
            lr_end: 0.0001,
            seed: 7,
            min_count: 2,
        }
    }
}

impl EmbedConfig {
    /// Case-retrieval setting: 150 dimensions, window 10, 50 epochs.
    pub fn case_retrieval() -> Self {
        EmbedConfig {
            dim: 150,
            window: 10,
            ..EmbedConfig::default()
        }
    }

    /// Paragraph-entailment setting: 100 dimensions, window 5, 50 epochs.
    pub fn paragraph_entailment() -> Self {
        EmbedConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_owned()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return bad("learning rates must satisfy lr_start >= lr_end > 0");
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for x in &mut m.data {
            *x = init_value(rng, cols);
        }
        m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

fn init_value(rng: &mut ChaCha8Rng, dim: usize) -> f64 {
    (rng.gen::<f64>() - 0.5) / dim as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−ln σ(z)`, computed without overflow.
fn neg_log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// One training example: vocabulary rows of the context window, the target
/// word, and the sampled noise words.
#[derive(Debug, Clone, Copy)]
pub struct NsExample<'a> {
    pub context: &'a [usize],
    pub target: usize,
    pub negatives: &'a [usize],
}

impl NsExample<'_> {
    fn outputs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        std::iter::once((self.target, 1.0)).chain(self.negatives.iter().map(|&n| (n, 0.0)))
    }
}

/// Gradients of the negative-sampling loss for a single example.
#[derive(Debug, Clone, PartialEq)]
pub struct NsGradients {
    pub loss: f64,
    pub doc: Vec<f64>,
    /// Gradient per distinct input row, ascending by row.
    pub word_in: BTreeMap<usize, Vec<f64>>,
    /// Gradient per distinct output row, ascending by row.
    pub word_out: BTreeMap<usize, Vec<f64>>,
}

fn predictor(doc: &[f64], word_in: &Matrix, context: &[usize], out: &mut [f64]) {
    out.copy_from_slice(doc);
    for &c in context {
        axpy(1.0, word_in.row(c), out);
    }
    let scale = 1.0 / (context.len() + 1) as f64;
    for x in out.iter_mut() {
        *x *= scale;
    }
}

/// Loss of one example.
pub fn ns_loss(doc: &[f64], word_in: &Matrix, word_out: &Matrix, ex: NsExample<'_>) -> f64 {
    let mut h = vec![0.0; doc.len()];
    predictor(doc, word_in, ex.context, &mut h);
    ex.outputs()
        .map(|(row, label)| {
            let z = dot(&h, word_out.row(row));
            if label > 0.5 {
                neg_log_sigmoid(z)
            } else {
                neg_log_sigmoid(-z)
            }
        })
        .sum()
}

/// Analytic gradients of [`ns_loss`] with respect to every parameter it touches.
pub fn ns_gradients(doc: &[f64], word_in: &Matrix, word_out: &Matrix, ex: NsExample<'_>) -> NsGradients {
    let dim = doc.len();
    let mut h = vec![0.0; dim];
    predictor(doc, word_in, ex.context, &mut h);
    let mut grad_h = vec![0.0; dim];
    let mut word_out_g: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut loss = 0.0;
    for (row, label) in ex.outputs() {
        let u = word_out.row(row);
        let z = dot(&h, u);
        loss += if label > 0.5 { neg_log_sigmoid(z) } else { neg_log_sigmoid(-z) };
        let g = sigmoid(z) - label;
        axpy(g, u, &mut grad_h);
        axpy(g, &h, word_out_g.entry(row).or_insert_with(|| vec![0.0; dim]));
    }
    let scale = 1.0 / (ex.context.len() + 1) as f64;
    let doc_g: Vec<f64> = grad_h.iter().map(|g| g * scale).collect();
    let mut word_in_g: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &c in ex.context {
        axpy(1.0, &doc_g, word_in_g.entry(c).or_insert_with(|| vec![0.0; dim]));
    }
    NsGradients {
        loss,
        doc: doc_g,
        word_in: word_in_g,
        word_out: word_out_g,
    }
}

/// Reusable buffers for the SGD inner loop.
struct Scratch {
    h: Vec<f64>,
    grad_h: Vec<f64>,
    gs: Vec<f64>,
    negatives: Vec<usize>,
    context: Vec<usize>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            h: vec![0.0; dim],
            grad_h: vec![0.0; dim],
            gs: Vec::new(),
            negatives: Vec::new(),
            context: Vec::new(),
        }
    }
}

/// Forward pass of one example into the scratch buffers: the predictor `h`,
/// `grad_h = ∂L/∂h` and the per-output logistic residuals. Returns the loss.
fn forward(doc: &[f64], word_in: &Matrix, word_out: &Matrix, ex: NsExample<'_>, s: &mut Scratch) -> f64 {
    predictor(doc, word_in, ex.context, &mut s.h);
    s.grad_h.iter_mut().for_each(|x| *x = 0.0);
    s.gs.clear();
    let mut loss = 0.0;
    for (row, label) in ex.outputs() {
        let u = word_out.row(row);
        let z = dot(&s.h, u);
        loss += if label > 0.5 { neg_log_sigmoid(z) } else { neg_log_sigmoid(-z) };
        let g = sigmoid(z) - label;
        axpy(g, u, &mut s.grad_h);
        s.gs.push(g);
    }
    loss
}

/// One SGD step on every parameter of a single example. All gradients are
/// taken at the parameters as they were before the step.
fn sgd_step(
    doc: &mut [f64],
    word_in: &mut Matrix,
    word_out: &mut Matrix,
    ex: NsExample<'_>,
    lr: f64,
    s: &mut Scratch,
) -> f64 {
    let loss = forward(doc, word_in, word_out, ex, s);
    for ((row, _), &g) in ex.outputs().zip(&s.gs) {
        axpy(-lr * g, &s.h, word_out.row_mut(row));
    }
    let step = -lr / (ex.context.len() + 1) as f64;
    axpy(step, &s.grad_h, doc);
    for &c in ex.context {
        axpy(step, &s.grad_h, word_in.row_mut(c));
    }
    loss
}

/// Like [`sgd_step`] but only the document vector moves.
fn doc_step(doc: &mut [f64], word_in: &Matrix, word_out: &Matrix, ex: NsExample<'_>, lr: f64, s: &mut Scratch) -> f64 {
    let loss = forward(doc, word_in, word_out, ex, s);
    axpy(-lr / (ex.context.len() + 1) as f64, &s.grad_h, doc);
    loss
}

fn context_rows(tokens: &[usize], t: usize, window: usize, out: &mut Vec<usize>) {
    out.clear();
    let lo = t.saturating_sub(window);
    let hi = (t + window).min(tokens.len() - 1);
    for (j, &row) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
        if j != t {
            out.push(row);
        }
    }
}

fn sample_negatives(cdf: &[f64], target: usize, k: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
    out.clear();
    let total = *cdf.last().expect("nonempty vocabulary");
    for _ in 0..k {
        let u = rng.gen::<f64>() * total;
        let row = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        // a draw of the target itself carries no contrast and is skipped
        if row != target {
            out.push(row);
        }
    }
}

fn fnv1a(tokens: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tokens {
        for b in t.bytes().chain(std::iter::once(0)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// A trained paragraph-vector model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub config: EmbedConfig,
    pub vocab: BTreeMap<String, usize>,
    pub counts: Vec<u64>,
    pub word_in: Matrix,
    pub word_out: Matrix,
    pub doc_index: BTreeMap<String, usize>,
    pub doc_vectors: Matrix,
    /// Cumulative noise distribution over vocabulary rows.
    pub unigram_cdf: Vec<f64>,
    /// Mean per-example loss of every training epoch.
    pub epoch_losses: Vec<f64>,
}

/// Result of fitting a vector for unseen text.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub vector: Vec<f64>,
    /// Set when no token was in the vocabulary; the vector is then the
    /// untouched seeded initialization.
    pub all_oov: bool,
}

impl EmbeddingModel {
    pub fn train(docs: &[Document], cfg: &EmbedConfig) -> Result<Self> {
        cfg.validate()?;
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for d in docs {
            for t in &d.tokens {
                *freq.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|&(_, c)| c as usize >= cfg.min_count)
            .collect();
        if kept.is_empty() {
            return Err(Error::DegenerateCorpus {
                min_count: cfg.min_count,
            });
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let vocab: BTreeMap<String, usize> = kept.iter().enumerate().map(|(i, (t, _))| (t.to_string(), i)).collect();
        let counts: Vec<u64> = kept.iter().map(|&(_, c)| c).collect();
        let mut acc = 0.0;
        let unigram_cdf = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(UNIGRAM_POWER);
                acc
            })
            .collect();

        let mut doc_index = BTreeMap::new();
        for (i, d) in docs.iter().enumerate() {
            if doc_index.insert(d.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: d.id.clone(),
                    context: "embedding training set".into(),
                });
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let word_in = Matrix::uniform(vocab.len(), cfg.dim, &mut rng);
        let doc_vectors = Matrix::uniform(docs.len(), cfg.dim, &mut rng);
        let mut model = EmbeddingModel {
            config: *cfg,
            word_out: Matrix::zeros(vocab.len(), cfg.dim),
            vocab,
            counts,
            word_in,
            doc_index,
            doc_vectors,
            unigram_cdf,
            epoch_losses: Vec::with_capacity(cfg.epochs),
        };

        let sequences: Vec<Vec<usize>> = docs.iter().map(|d| model.rows_of(&d.tokens)).collect();
        let total_tokens: usize = sequences.iter().map(Vec::len).sum();
        let total_steps = (cfg.epochs * total_tokens).max(1) as f64;
        let mut step = 0usize;
        let mut s = Scratch::new(cfg.dim);
        let mut doc = vec![0.0; cfg.dim];

        for _ in 0..cfg.epochs {
            let mut epoch_loss = 0.0;
            for (d, seq) in sequences.iter().enumerate() {
                if seq.is_empty() {
                    continue;
                }
                doc.copy_from_slice(model.doc_vectors.row(d));
                for t in 0..seq.len() {
                    let lr = cfg.lr_start - (cfg.lr_start - cfg.lr_end) * step as f64 / total_steps;
                    context_rows(seq, t, cfg.window, &mut s.context);
                    sample_negatives(&model.unigram_cdf, seq[t], cfg.negatives, &mut rng, &mut s.negatives);
                    let context = std::mem::take(&mut s.context);
                    let negatives = std::mem::take(&mut s.negatives);
                    let ex = NsExample {
                        context: &context,
                        target: seq[t],
                        negatives: &negatives,
                    };
                    epoch_loss += sgd_step(&mut doc, &mut model.word_in, &mut model.word_out, ex, lr, &mut s);
                    s.context = context;
                    s.negatives = negatives;
                    step += 1;
                }
                model.doc_vectors.row_mut(d).copy_from_slice(&doc);
            }
            model.epoch_losses.push(epoch_loss / total_tokens.max(1) as f64);
        }
        Ok(model)
    }

    fn rows_of<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .filter_map(|t| self.vocab.get(t.as_ref()).copied())
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Trained vector of a training document.
    pub fn doc_vector(&self, id: &str) -> Option<&[f64]> {
        self.doc_index.get(id).map(|&i| self.doc_vectors.row(i))
    }

    /// Fits a new document vector for `tokens` over `steps` passes with the
    /// word matrices frozen. The starting point is seeded from the model seed
    /// and the token sequence, so repeated calls agree.
    pub fn infer<S: AsRef<str>>(&self, tokens: &[S], steps: usize) -> Result<Inference> {
        if steps == 0 {
            return Err(Error::InvalidParameter("inference needs at least one step".into()));
        }
        let dim = self.config.dim;
        let strs: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ fnv1a(&strs));
        let mut doc: Vec<f64> = (0..dim).map(|_| init_value(&mut rng, dim)).collect();
        let seq = self.rows_of(tokens);
        if seq.is_empty() {
            log::warn!("no in-vocabulary tokens; returning the seeded initial vector");
            return Ok(Inference {
                vector: doc,
                all_oov: true,
            });
        }
        let cfg = &self.config;
        let total_steps = (steps * seq.len()) as f64;
        let mut step = 0usize;
        let mut s = Scratch::new(dim);
        let (mut context, mut negatives) = (Vec::new(), Vec::new());
        for _ in 0..steps {
            for t in 0..seq.len() {
                let lr = cfg.lr_start - (cfg.lr_start - cfg.lr_end) * step as f64 / total_steps;
                context_rows(&seq, t, cfg.window, &mut context);
                sample_negatives(&self.unigram_cdf, seq[t], cfg.negatives, &mut rng, &mut negatives);
                let ex = NsExample {
                    context: &context,
                    target: seq[t],
                    negatives: &negatives,
                };
                doc_step(&mut doc, &self.word_in, &self.word_out, ex, lr, &mut s);
                step += 1;
            }
        }
        Ok(Inference {
            vector: doc,
            all_oov: false,
        })
    }

    /// Ranks candidates by cosine to the inferred query vector. Candidates
    /// seen in training use their trained vectors; others are inferred.
    pub fn rank(
        &self,
        query_id: &str,
        query_tokens: &[String],
        candidates: &[Document],
        steps: usize,
    ) -> Result<ScoredList> {
        let q = self.infer(query_tokens, steps)?.vector;
        let entries = candidates
            .iter()
            .map(|c| {
                let score = match self.doc_vector(&c.id) {
                    Some(v) => cosine(&q, v),
                    None => cosine(&q, &self.infer(&c.tokens, steps)?.vector),
                };
                Ok((c.id.clone(), score))
            })
            .collect::<Result<Vec<_>>>()?;
        ScoredList::new(query_id, entries)
    }

    pub fn all_finite(&self) -> bool {
        self.word_in.data.iter().chain(&self.word_out.data).chain(&self.doc_vectors.data).all(|x| x.is_finite())
    }
}
