//! Word-level n-gram language model with interpolated Kneser-Ney smoothing
//! (one absolute discount shared by all orders) and perplexity-cutoff
//! filtering.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const EOS_ID: u32 = 2;

pub const MODEL_MAGIC: &str = "mixcurate-ngram";
pub const MODEL_VERSION: u32 = 1;

pub const DEFAULT_ORDER: usize = 5;
pub const DEFAULT_DISCOUNT: f64 = 0.75;
pub const DEFAULT_MAX_VOCAB: usize = 500_000;

const SENTENCE_ENDS: [&str; 4] = [".", "!", "?", "。"];

fn word_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}\p{S}]|[^\s\p{P}\p{S}]+").unwrap())
}

/// Splits text into lowercased word sequences, one per sentence.
///
/// Sentences end at newlines and after `.`, `!`, `?` or `。`; punctuation
/// and symbol characters are tokens of their own.
pub fn sentences(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let lower = line.to_lowercase();
        let mut current = Vec::new();
        for m in word_pattern().find_iter(&lower) {
            let tok = m.as_str();
            current.push(tok.to_string());
            if SENTENCE_ENDS.contains(&tok) {
                out.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgramParams {
    pub order: usize,
    /// Absolute discount; 0 gives unsmoothed maximum likelihood.
    pub discount: f64,
    pub max_vocab: usize,
}

impl Default for NgramParams {
    fn default() -> Self {
        NgramParams {
            order: DEFAULT_ORDER,
            discount: DEFAULT_DISCOUNT,
            max_vocab: DEFAULT_MAX_VOCAB,
        }
    }
}

impl NgramParams {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::config("n-gram order must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config(format!(
                "discount must be in [0, 1), got {}",
                self.discount
            )));
        }
        Ok(())
    }
}

/// Raw n-gram counts over a shard of the corpus. Shards merge
/// commutatively; the finished model does not depend on shard boundaries.
#[derive(Debug, Clone)]
pub struct NgramCounter {
    order: usize,
    words: Vec<String>,
    index: HashMap<String, u32>,
    freq: Vec<u64>,
    grams: HashMap<Vec<u32>, u64>,
    sentences: u64,
}

impl NgramCounter {
    pub fn new(order: usize) -> Self {
        let mut c = NgramCounter {
            order,
            words: Vec::new(),
            index: HashMap::new(),
            freq: Vec::new(),
            grams: HashMap::new(),
            sentences: 0,
        };
        for sym in [UNK, BOS, EOS] {
            c.intern(sym);
        }
        c
    }

    fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        self.freq.push(0);
        id
    }

    pub fn add_text(&mut self, text: &str) {
        for sentence in sentences(text) {
            self.add_sentence(&sentence);
        }
    }

    fn add_sentence(&mut self, words: &[String]) {
        let n = self.order;
        let mut seq = vec![BOS_ID; n - 1];
        for w in words {
            let id = self.intern(w);
            self.freq[id as usize] += 1;
            seq.push(id);
        }
        seq.push(EOS_ID);
        for window in seq.windows(n) {
            *self.grams.entry(window.to_vec()).or_insert(0) += 1;
        }
        self.sentences += 1;
    }

    pub fn merge(&mut self, other: NgramCounter) {
        assert_eq!(self.order, other.order, "merging counters of different order");
        let remap: Vec<u32> = other.words.iter().map(|w| self.intern(w)).collect();
        for (id, f) in other.freq.iter().enumerate() {
            self.freq[remap[id] as usize] += f;
        }
        for (gram, c) in other.grams {
            let key: Vec<u32> = gram.iter().map(|&i| remap[i as usize]).collect();
            *self.grams.entry(key).or_insert(0) += c;
        }
        self.sentences += other.sentences;
    }

    pub fn is_empty(&self) -> bool {
        self.sentences == 0
    }

    /// Freezes the counts into a smoothed model.
    pub fn finish(self, params: &NgramParams) -> Result<NgramModel> {
        params.validate()?;
        if params.order != self.order {
            return Err(Error::config("counter order differs from requested order"));
        }
        if self.is_empty() {
            return Err(Error::data("cannot train an n-gram model on an empty corpus"));
        }
        let mut ranked: Vec<u32> = (3..self.words.len() as u32).collect();
        ranked.sort_by(|&a, &b| {
            self.freq[b as usize]
                .cmp(&self.freq[a as usize])
                .then_with(|| self.words[a as usize].cmp(&self.words[b as usize]))
        });
        ranked.truncate(params.max_vocab);
        let mut vocab = vec![UNK.to_string(), BOS.to_string(), EOS.to_string()];
        let mut remap = vec![UNK_ID; self.words.len()];
        remap[BOS_ID as usize] = BOS_ID;
        remap[EOS_ID as usize] = EOS_ID;
        for old in ranked {
            remap[old as usize] = vocab.len() as u32;
            vocab.push(self.words[old as usize].clone());
        }
        let mut top: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
        for (gram, c) in self.grams {
            let key: Vec<u32> = gram.iter().map(|&i| remap[i as usize]).collect();
            *top.entry(key).or_insert(0) += c;
        }
        Ok(NgramModel::from_top_counts(
            params.order,
            params.discount,
            vocab,
            top,
        ))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextStats {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Smoothed n-gram model. Table `k` (1-based) maps a context of `k-1`
/// word ids to next-word counts: raw counts at the highest order,
/// continuation counts (distinct left extensions) below it.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    word_ids: HashMap<String, u32>,
    tables: Vec<HashMap<Box<[u32]>, ContextStats>>,
}

impl NgramModel {
    fn from_top_counts(
        order: usize,
        discount: f64,
        vocab: Vec<String>,
        top: BTreeMap<Vec<u32>, u64>,
    ) -> Self {
        let mut levels: Vec<BTreeMap<Vec<u32>, u64>> = vec![BTreeMap::new(); order];
        levels[order - 1] = top;
        for k in (1..order).rev() {
            let mut cont = BTreeMap::new();
            for gram in levels[k].keys() {
                *cont.entry(gram[1..].to_vec()).or_insert(0) += 1;
            }
            levels[k - 1] = cont;
        }
        Self::from_levels(order, discount, vocab, levels)
    }

    fn from_levels(
        order: usize,
        discount: f64,
        vocab: Vec<String>,
        levels: Vec<BTreeMap<Vec<u32>, u64>>,
    ) -> Self {
        let tables = levels
            .into_iter()
            .map(|level| {
                let mut table: HashMap<Box<[u32]>, ContextStats> = HashMap::new();
                for (gram, c) in level {
                    let (ctx, w) = gram.split_at(gram.len() - 1);
                    let stats = table.entry(ctx.into()).or_default();
                    stats.total += c;
                    stats.next.insert(w[0], c);
                }
                table
            })
            .collect();
        let word_ids = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        NgramModel {
            order,
            discount,
            vocab,
            word_ids,
            tables,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Number of symbols the model can predict: every vocabulary entry
    /// except the sentence-start marker.
    pub fn predictable_size(&self) -> usize {
        self.vocab.len() - 1
    }

    pub fn word_id(&self, word: &str) -> u32 {
        self.word_ids.get(word).copied().unwrap_or(UNK_ID)
    }

    /// Ids of every predictable symbol.
    pub fn predictable_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.vocab.len() as u32).filter(|&i| i != BOS_ID)
    }

    /// Every context stored at `order` (1-based), as word ids.
    pub fn contexts(&self, order: usize) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = self.tables[order - 1].keys().map(|k| k.to_vec()).collect();
        out.sort();
        out
    }

    /// Smoothed P(word | context); `context` holds up to `order-1` preceding
    /// ids, most recent last.
    pub fn prob(&self, context: &[u32], word: u32) -> f64 {
        let k = (context.len() + 1).min(self.order);
        self.prob_at(k, &context[context.len() + 1 - k..], word)
    }

    fn prob_at(&self, k: usize, context: &[u32], word: u32) -> f64 {
        let d = self.discount;
        let lower = if k == 1 {
            1.0 / self.predictable_size() as f64
        } else {
            self.prob_at(k - 1, &context[1..], word)
        };
        match self.tables[k - 1].get(context) {
            Some(stats) if stats.total > 0 => {
                let total = stats.total as f64;
                let c = stats.next.get(&word).copied().unwrap_or(0) as f64;
                let types = stats.next.len() as f64;
                (c - d).max(0.0) / total + d * types / total * lower
            }
            _ => lower,
        }
    }

    /// Sum of ln P over every scored position (words plus one end marker
    /// per sentence) and the number of positions.
    pub fn log_prob(&self, text: &str) -> (f64, usize) {
        let n = self.order;
        let mut total = 0.0;
        let mut count = 0;
        for sentence in sentences(text) {
            let mut seq = vec![BOS_ID; n - 1];
            seq.extend(sentence.iter().map(|w| self.word_id(w)));
            seq.push(EOS_ID);
            for i in n - 1..seq.len() {
                total += self.prob(&seq[i + 1 - n..i], seq[i]).ln();
                count += 1;
            }
        }
        (total, count)
    }

    pub fn perplexity(&self, text: &str) -> Result<f64> {
        let (log_prob, count) = self.log_prob(text);
        if count == 0 {
            return Err(Error::data("perplexity of text with no words"));
        }
        let ppl = (-log_prob / count as f64).exp();
        if !ppl.is_finite() {
            return Err(Error::data("text has zero probability under the model"));
        }
        Ok(ppl)
    }

    fn to_file(&self) -> ModelFile {
        let tables = self
            .tables
            .iter()
            .enumerate()
            .map(|(k, table)| {
                let mut entries: Vec<Vec<u64>> = table
                    .iter()
                    .flat_map(|(ctx, stats)| {
                        stats.next.iter().map(move |(&w, &c)| {
                            let mut row: Vec<u64> = ctx.iter().map(|&i| i as u64).collect();
                            row.push(w as u64);
                            row.push(c);
                            row
                        })
                    })
                    .collect();
                entries.sort_unstable();
                CountTable {
                    order: k + 1,
                    entries,
                }
            })
            .collect();
        ModelFile {
            magic: MODEL_MAGIC.to_string(),
            version: MODEL_VERSION,
            order: self.order,
            discount: self.discount,
            vocab: self.vocab.clone(),
            tables,
        }
    }

    /// Canonical serialization: identical models give identical bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_file()).expect("model serializes")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes)
            .map_err(|e| Error::data(format!("malformed n-gram model: {e}")))?;
        if file.magic != MODEL_MAGIC {
            return Err(Error::data("not an n-gram model file"));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::data(format!(
                "unsupported n-gram model version {}",
                file.version
            )));
        }
        NgramParams {
            order: file.order,
            discount: file.discount,
            max_vocab: usize::MAX,
        }
        .validate()?;
        if file.tables.len() != file.order || file.vocab.len() < 3 {
            return Err(Error::data("n-gram model tables do not match its order"));
        }
        let mut levels = Vec::with_capacity(file.order);
        for (k, table) in file.tables.into_iter().enumerate() {
            let mut level = BTreeMap::new();
            for row in table.entries {
                if row.len() != k + 2 {
                    return Err(Error::data("n-gram table row has the wrong width"));
                }
                let (gram, count) = row.split_at(k + 1);
                if count[0] == 0 || gram.iter().any(|&i| i >= file.vocab.len() as u64) {
                    return Err(Error::data("invalid n-gram table row"));
                }
                level.insert(gram.iter().map(|&i| i as u32).collect(), count[0]);
            }
            levels.push(level);
        }
        Ok(Self::from_levels(file.order, file.discount, file.vocab, levels))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_bytes(&bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct CountTable {
    order: usize,
    entries: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    tables: Vec<CountTable>,
}

/// Trains a model over the documents' text, counting in parallel shards.
pub fn train_ngram<'a, I>(docs: I, params: &NgramParams) -> Result<NgramModel>
where
    I: IntoIterator<Item = &'a Document>,
{
    params.validate()?;
    let texts: Vec<&str> = docs.into_iter().map(|d| d.text.as_str()).collect();
    let shard = texts.len().div_ceil(rayon::current_num_threads().max(1)).max(1);
    let counter = texts
        .par_chunks(shard)
        .map(|chunk| {
            let mut c = NgramCounter::new(params.order);
            for t in chunk {
                c.add_text(t);
            }
            c
        })
        .reduce(
            || NgramCounter::new(params.order),
            |mut a, b| {
                a.merge(b);
                a
            },
        );
    counter.finish(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffMode {
    Absolute,
    Percentile,
}

/// How the perplexity bound is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoffPolicy {
    pub mode: CutoffMode,
    pub value: f64,
    pub calibration_sample_size: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy {
            mode: CutoffMode::Percentile,
            value: 95.0,
            calibration_sample_size: 100_000,
        }
    }
}

impl CutoffPolicy {
    pub fn absolute(bound: f64) -> Self {
        CutoffPolicy {
            mode: CutoffMode::Absolute,
            value: bound,
            calibration_sample_size: 0,
        }
    }

    pub fn percentile(value: f64, calibration_sample_size: usize) -> Self {
        CutoffPolicy {
            mode: CutoffMode::Percentile,
            value,
            calibration_sample_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            CutoffMode::Percentile if !(self.value > 0.0 && self.value < 100.0) => Err(
                Error::config(format!("percentile must be in (0, 100), got {}", self.value)),
            ),
            CutoffMode::Absolute if self.value.is_nan() => {
                Err(Error::config("absolute bound is NaN"))
            }
            _ => Ok(()),
        }
    }
}

/// Nearest-rank percentile of the finite values.
pub fn nearest_rank_percentile(values: &[f64], pct: f64) -> Option<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedDoc {
    pub id: String,
    /// `None` when the text has no scoreable words.
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityFilterOutcome {
    pub bound: f64,
    pub kept: Vec<Document>,
    pub dropped: Vec<DroppedDoc>,
}

/// Scores every document (in parallel, order preserved); unscoreable
/// texts yield `None`.
pub fn score_documents(model: &NgramModel, docs: &[Document]) -> Vec<Option<f64>> {
    docs.par_iter()
        .map(|d| model.perplexity(&d.text).ok())
        .collect()
}

/// Resolves the absolute bound for `policy`, calibrating on the first
/// `calibration_sample_size` scores in percentile mode.
pub fn resolve_bound(policy: &CutoffPolicy, scores: &[Option<f64>]) -> Result<f64> {
    policy.validate()?;
    match policy.mode {
        CutoffMode::Absolute => Ok(policy.value),
        CutoffMode::Percentile => {
            let n = policy.calibration_sample_size.min(scores.len());
            let sample: Vec<f64> = scores[..n].iter().flatten().copied().collect();
            nearest_rank_percentile(&sample, policy.value)
                .ok_or_else(|| Error::data("perplexity calibration sample is empty"))
        }
    }
}

/// Keeps a document iff its perplexity is at most the resolved bound.
pub fn perplexity_filter(
    model: &NgramModel,
    docs: Vec<Document>,
    policy: &CutoffPolicy,
) -> Result<PerplexityFilterOutcome> {
    let scores = score_documents(model, &docs);
    let bound = resolve_bound(policy, &scores)?;
    log::info!("perplexity bound resolved to {bound}");
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (doc, score) in docs.into_iter().zip(scores) {
        match score {
            Some(p) if p <= bound => kept.push(doc),
            _ => dropped.push(DroppedDoc {
                id: doc.id,
                perplexity: score,
            }),
        }
    }
    Ok(PerplexityFilterOutcome {
        bound,
        kept,
        dropped,
    })
}
