//! Hashed bag-of-n-grams linear quality classifier (0–5 score scale),
//! two-model ensembling and binarized F1 evaluation.
//!
//! Features are lowercased word unigrams and bigrams hashed with 64-bit
//! FNV-1a modulo the bucket count. A document is the mean of its feature
//! embeddings, followed by a linear softmax layer over six classes.

use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const NUM_CLASSES: usize = 6;
/// Lowest score counted as high quality when binarizing.
pub const POSITIVE_MIN_SCORE: usize = 3;

const MAGIC: &[u8; 8] = b"MXQCLF\0\x01";
const FORMAT_VERSION: u32 = 1;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn word_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{M}\p{N}]+").unwrap())
}

/// Bucket indices of the text's unigram and bigram features, in text order.
pub fn hashed_features(text: &str, buckets: usize) -> Vec<usize> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = word_pattern().find_iter(&lower).map(|m| m.as_str()).collect();
    let bucket = |bytes: &[u8]| (fnv1a64(bytes) % buckets as u64) as usize;
    let mut out = Vec::with_capacity(words.len() * 2);
    for (i, w) in words.iter().enumerate() {
        out.push(bucket(w.as_bytes()));
        if let Some(next) = words.get(i + 1) {
            out.push(bucket(format!("{w} {next}").as_bytes()));
        }
    }
    out
}

/// A document with its 0–5 quality label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    #[serde(flatten)]
    pub doc: Document,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub hash_buckets: usize,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            hash_buckets: 1 << 21,
            embedding_dim: 32,
            epochs: 5,
            learning_rate: 0.1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.hash_buckets == 0 || self.embedding_dim == 0 || self.epochs == 0 {
            return Err(Error::config(
                "hash_buckets, embedding_dim and epochs must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    hash_buckets: usize,
    embedding_dim: usize,
    num_classes: usize,
    ngram_orders: Vec<usize>,
    hash: String,
    seed: u64,
}

/// Linear classifier over mean-pooled hashed feature embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier<T> {
    hash_buckets: usize,
    embedding_dim: usize,
    seed: u64,
    embeddings: Vec<T>,
    output: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> TextClassifier<T> {
    pub fn hash_buckets(&self) -> usize {
        self.hash_buckets
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn init(params: &TrainParams, seed: u64) -> Self {
        let dim = params.embedding_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / dim as f64;
        let embeddings = (0..params.hash_buckets * dim)
            .map(|_| T::lit(rng.gen_range(-scale..scale)))
            .collect();
        TextClassifier {
            hash_buckets: params.hash_buckets,
            embedding_dim: dim,
            seed,
            embeddings,
            output: vec![T::zero(); NUM_CLASSES * dim],
            bias: vec![T::zero(); NUM_CLASSES],
        }
    }

    fn hidden(&self, features: &[usize]) -> Vec<T> {
        let dim = self.embedding_dim;
        let mut h = vec![T::zero(); dim];
        if features.is_empty() {
            return h;
        }
        for &f in features {
            let row = &self.embeddings[f * dim..(f + 1) * dim];
            for (acc, &v) in h.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        let n = T::lit(features.len() as f64);
        h.iter_mut().for_each(|v| *v = *v / n);
        h
    }

    fn probabilities(&self, hidden: &[T]) -> [T; NUM_CLASSES] {
        let dim = self.embedding_dim;
        let mut logits = [T::zero(); NUM_CLASSES];
        for (c, logit) in logits.iter_mut().enumerate() {
            let row = &self.output[c * dim..(c + 1) * dim];
            *logit = self.bias[c] + row.iter().zip(hidden).map(|(&w, &h)| w * h).sum::<T>();
        }
        softmax(logits)
    }

    /// Probability of each quality score 0..=5.
    pub fn score_text(&self, text: &str) -> Result<[T; NUM_CLASSES]> {
        if text.trim().is_empty() {
            return Err(Error::data("cannot score empty text"));
        }
        let features = hashed_features(text, self.hash_buckets);
        Ok(self.probabilities(&self.hidden(&features)))
    }

    pub fn positive_probability(&self, text: &str) -> Result<f64> {
        let p = self.score_text(text)?;
        Ok(p[POSITIVE_MIN_SCORE..]
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .sum())
    }

    fn sgd_step(&mut self, features: &[usize], label: usize, lr: T) {
        let dim = self.embedding_dim;
        let hidden = self.hidden(features);
        let probs = self.probabilities(&hidden);
        let mut grad_hidden = vec![T::zero(); dim];
        for c in 0..NUM_CLASSES {
            let g = probs[c] - if c == label { T::one() } else { T::zero() };
            let row = &mut self.output[c * dim..(c + 1) * dim];
            for ((w, gh), &h) in row.iter_mut().zip(grad_hidden.iter_mut()).zip(&hidden) {
                *gh = *gh + g * *w;
                *w = *w - lr * g * h;
            }
            self.bias[c] = self.bias[c] - lr * g;
        }
        if features.is_empty() {
            return;
        }
        let scale = lr / T::lit(features.len() as f64);
        for &f in features {
            let row = &mut self.embeddings[f * dim..(f + 1) * dim];
            for (e, &gh) in row.iter_mut().zip(&grad_hidden) {
                *e = *e - scale * gh;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.embeddings
            .iter()
            .chain(&self.output)
            .chain(&self.bias)
            .all(|v| v.is_finite())
    }

    fn header(&self) -> Header {
        Header {
            version: FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            hash_buckets: self.hash_buckets,
            embedding_dim: self.embedding_dim,
            num_classes: NUM_CLASSES,
            ngram_orders: vec![1, 2],
            hash: "fnv1a64".to_string(),
            seed: self.seed,
        }
    }

    /// Magic, little-endian u32 header length, JSON header, then the
    /// embedding table, output weights and biases as little-endian scalars.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let body = self.embeddings.len() + self.output.len() + self.bias.len();
        let mut out = Vec::with_capacity(12 + header.len() + body * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for &v in self.embeddings.iter().chain(&self.output).chain(&self.bias) {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::data(format!("classifier model: {m}"));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12 + header_len;
        let header: Header = serde_json::from_slice(bytes.get(12..header_end).ok_or_else(|| bad("truncated header"))?)
            .map_err(|e| bad(&e.to_string()))?;
        if header.version != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        if header.dtype != T::DTYPE {
            return Err(bad(&format!("stored as {}, expected {}", header.dtype, T::DTYPE)));
        }
        if header.num_classes != NUM_CLASSES || header.hash != "fnv1a64" {
            return Err(bad("unsupported class count or hash"));
        }
        let (buckets, dim) = (header.hash_buckets, header.embedding_dim);
        let n_emb = buckets * dim;
        let n_out = NUM_CLASSES * dim;
        let total = n_emb + n_out + NUM_CLASSES;
        let body = &bytes[header_end..];
        if body.len() != total * T::BYTES {
            return Err(bad("body length does not match header"));
        }
        let values: Vec<T> = body.chunks_exact(T::BYTES).map(T::read_le).collect();
        let model = TextClassifier {
            hash_buckets: buckets,
            embedding_dim: dim,
            seed: header.seed,
            embeddings: values[..n_emb].to_vec(),
            output: values[n_emb..n_emb + n_out].to_vec(),
            bias: values[n_emb + n_out..].to_vec(),
        };
        if !model.all_finite() {
            return Err(bad("non-finite weights"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn softmax<T: Scalar>(logits: [T; NUM_CLASSES]) -> [T; NUM_CLASSES] {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out = logits.map(|l| (l - max).exp());
    let sum: T = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v = *v / sum);
    out
}

/// Trains with plain SGD over the data in order, linearly decaying the step
/// size to zero across all epochs. Single worker, so the result is a pure
/// function of (data order, params, seed).
pub fn train_classifier<T: Scalar>(
    data: &[LabeledDocument],
    params: &TrainParams,
    seed: u64,
) -> Result<TextClassifier<T>> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::data("no training documents"));
    }
    if let Some(bad) = data.iter().find(|d| d.label as usize >= NUM_CLASSES) {
        return Err(Error::data(format!(
            "label {} of {} outside 0..=5",
            bad.label, bad.doc.id
        )));
    }
    let first = data[0].label;
    if data.iter().all(|d| d.label == first) {
        return Err(Error::data("training data contains a single label"));
    }
    let features: Vec<Vec<usize>> = data
        .par_iter()
        .map(|d| hashed_features(&d.doc.text, params.hash_buckets))
        .collect();
    let mut model = TextClassifier::<T>::init(params, seed);
    let total = (params.epochs * data.len()) as f64;
    let mut step = 0usize;
    for _ in 0..params.epochs {
        for (f, d) in features.iter().zip(data) {
            let lr = T::lit(params.learning_rate * (1.0 - step as f64 / total));
            model.sgd_step(f, d.label as usize, lr);
            step += 1;
        }
    }
    if !model.all_finite() {
        return Err(Error::data("training diverged to non-finite weights"));
    }
    Ok(model)
}

/// Anything that yields P(score ≥ 3) for a text and a keep threshold.
pub trait QualityScorer: Sync {
    fn positive_probability(&self, text: &str) -> Result<f64>;

    fn keep_threshold(&self) -> f64 {
        0.5
    }

    fn is_positive(&self, text: &str) -> Result<bool> {
        Ok(self.positive_probability(text)? >= self.keep_threshold())
    }
}

impl<T: Scalar> QualityScorer for TextClassifier<T> {
    fn positive_probability(&self, text: &str) -> Result<f64> {
        TextClassifier::positive_probability(self, text)
    }
}

/// A single model with its own keep threshold.
#[derive(Debug, Clone)]
pub struct Thresholded<T> {
    model: TextClassifier<T>,
    keep_threshold: f64,
}

impl<T: Scalar> Thresholded<T> {
    pub fn new(model: TextClassifier<T>, keep_threshold: f64) -> Result<Self> {
        validate_threshold(keep_threshold)?;
        Ok(Thresholded {
            model,
            keep_threshold,
        })
    }
}

impl<T: Scalar> QualityScorer for Thresholded<T> {
    fn positive_probability(&self, text: &str) -> Result<f64> {
        self.model.positive_probability(text)
    }

    fn keep_threshold(&self) -> f64 {
        self.keep_threshold
    }
}

/// Paths and threshold of a two-member ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub models: Vec<String>,
    #[serde(default = "default_threshold")]
    pub keep_threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.len() != 2 {
            return Err(Error::config(format!(
                "an ensemble has exactly two members, got {}",
                self.models.len()
            )));
        }
        validate_threshold(self.keep_threshold)
    }
}

fn validate_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config(format!("keep threshold must be in [0, 1], got {t}")));
    }
    Ok(())
}

/// Keeps a document iff the mean of the members' P(score ≥ 3) reaches the
/// threshold.
#[derive(Debug, Clone)]
pub struct Ensemble<T> {
    members: [TextClassifier<T>; 2],
    keep_threshold: f64,
}

impl<T: Scalar> Ensemble<T> {
    pub fn new(a: TextClassifier<T>, b: TextClassifier<T>, keep_threshold: f64) -> Result<Self> {
        validate_threshold(keep_threshold)?;
        if a.hash_buckets != b.hash_buckets || a.embedding_dim != b.embedding_dim {
            return Err(Error::config(format!(
                "ensemble members differ in shape: {}x{} vs {}x{}",
                a.hash_buckets, a.embedding_dim, b.hash_buckets, b.embedding_dim
            )));
        }
        Ok(Ensemble {
            members: [a, b],
            keep_threshold,
        })
    }

    pub fn load(cfg: &EnsembleConfig) -> Result<Self> {
        cfg.validate()?;
        let a = TextClassifier::load(&cfg.models[0])?;
        let b = TextClassifier::load(&cfg.models[1])?;
        Self::new(a, b, cfg.keep_threshold)
    }

    pub fn members(&self) -> &[TextClassifier<T>; 2] {
        &self.members
    }
}

impl<T: Scalar> QualityScorer for Ensemble<T> {
    fn positive_probability(&self, text: &str) -> Result<f64> {
        let a = self.members[0].positive_probability(text)?;
        let b = self.members[1].positive_probability(text)?;
        Ok((a + b) / 2.0)
    }

    fn keep_threshold(&self) -> f64 {
        self.keep_threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDrop {
    pub id: String,
    /// `None` for texts that cannot be scored (empty).
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityFilterOutcome {
    pub kept: Vec<Document>,
    pub dropped: Vec<ScoredDrop>,
}

/// Applies a scorer to every document; order is preserved.
pub fn quality_filter(scorer: &dyn QualityScorer, docs: Vec<Document>) -> QualityFilterOutcome {
    let scores: Vec<Option<f64>> = docs
        .par_iter()
        .map(|d| scorer.positive_probability(&d.text).ok())
        .collect();
    let threshold = scorer.keep_threshold();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (doc, score) in docs.into_iter().zip(scores) {
        match score {
            Some(s) if s >= threshold => kept.push(doc),
            _ => dropped.push(ScoredDrop { id: doc.id, score }),
        }
    }
    QualityFilterOutcome { kept, dropped }
}

/// [`quality_filter`] through a two-model ensemble.
pub fn ensemble_filter<T: Scalar>(ensemble: &Ensemble<T>, docs: Vec<Document>) -> QualityFilterOutcome {
    quality_filter(ensemble, docs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn class_scores(tp: u64, fp: u64, fn_: u64) -> ClassScores {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    ClassScores {
        precision,
        recall,
        f1,
    }
}

impl ConfusionMatrix {
    pub fn positive(&self) -> ClassScores {
        class_scores(self.tp, self.fp, self.fn_)
    }

    pub fn negative(&self) -> ClassScores {
        class_scores(self.tn, self.fn_, self.fp)
    }

    pub fn f1(&self) -> f64 {
        self.positive().f1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub confusion: ConfusionMatrix,
    pub positive: ClassScores,
    pub negative: ClassScores,
    pub macro_f1: f64,
}

impl F1Report {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let positive = confusion.positive();
        let negative = confusion.negative();
        F1Report {
            confusion,
            positive,
            negative,
            macro_f1: (positive.f1 + negative.f1) / 2.0,
        }
    }
}

/// Binarized evaluation: gold positive iff label ≥ 3, predicted positive
/// iff the scorer keeps the text.
pub fn evaluate_f1(scorer: &dyn QualityScorer, holdout: &[LabeledDocument]) -> Result<F1Report> {
    if holdout.is_empty() {
        return Err(Error::data("empty holdout"));
    }
    let gold: Vec<bool> = holdout
        .iter()
        .map(|d| d.label as usize >= POSITIVE_MIN_SCORE)
        .collect();
    if gold.iter().all(|&g| g) || gold.iter().all(|&g| !g) {
        return Err(Error::data("holdout must contain both positive and negative labels"));
    }
    let predicted: Vec<bool> = holdout
        .par_iter()
        .map(|d| scorer.is_positive(&d.doc.text))
        .collect::<Result<_>>()?;
    let mut cm = ConfusionMatrix::default();
    for (g, p) in gold.into_iter().zip(predicted) {
        match (g, p) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(F1Report::from_confusion(cm))
}
