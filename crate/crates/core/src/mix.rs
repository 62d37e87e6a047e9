//! Language sampling distributions and the staged mixing scheduler.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::fnv1a64;
use crate::corpus::{write_jsonl, CorpusIndex, CorpusManifest};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Normalized weights over languages (or any string keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution<T> {
    pub weights: BTreeMap<String, T>,
}

impl<T: Scalar> Distribution<T> {
    pub fn new(weights: BTreeMap<String, T>) -> Result<Self> {
        let d = Distribution { weights };
        d.validate()?;
        Ok(d)
    }

    /// Normalizes non-negative masses.
    pub fn from_counts<I, K>(counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, T)>,
        K: Into<String>,
    {
        let weights: BTreeMap<String, T> = counts.into_iter().map(|(k, v)| (k.into(), v)).collect();
        if weights.values().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::data("counts must be finite and non-negative"));
        }
        let total: T = weights.values().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::data("total mass is zero"));
        }
        Ok(Distribution {
            weights: weights.into_iter().map(|(k, v)| (k, v / total)).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::config("distribution is empty"));
        }
        for (k, v) in &self.weights {
            if !(*v >= T::zero()) || !v.is_finite() {
                return Err(Error::config(format!("weight for {k} is not a non-negative number")));
            }
        }
        let sum = self.weights.values().copied().sum::<T>().to_f64().unwrap_or(f64::NAN);
        if !((sum - 1.0).abs() <= T::SUM_TOLERANCE) {
            return Err(Error::config(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> T {
        self.weights.get(key).copied().unwrap_or_else(T::zero)
    }
}

/// p_l = n_l / Σ n.
pub fn proportional_distribution<T: Scalar>(manifest: &CorpusManifest) -> Result<Distribution<T>> {
    let counts = manifest.language_tokens();
    if counts.is_empty() {
        return Err(Error::data("manifest has no languages"));
    }
    Distribution::from_counts(counts.into_iter().map(|(l, n)| (l, T::lit(n as f64))))
}

/// q_l ∝ p_l^(1/t).
pub fn temperature_distribution<T: Scalar>(p: &Distribution<T>, t: f64) -> Result<Distribution<T>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::config(format!("temperature must be positive, got {t}")));
    }
    p.validate()?;
    if t == 1.0 {
        return Ok(p.clone());
    }
    let inv = T::lit(1.0 / t);
    // scale by the max first so large 1/t does not underflow everything
    let max = p.weights.values().copied().fold(T::zero(), T::max);
    Distribution::from_counts(p.weights.iter().map(|(k, &v)| {
        let q = if v > T::zero() { (v / max).powf(inv) } else { T::zero() };
        (k.clone(), q)
    }))
}

/// UniMax: languages visited in ascending n_l (ties by code), each gets
/// min(n_l·R, remaining / languages_left).
pub fn unimax_allocation(
    manifest: &CorpusManifest,
    budget: u64,
    max_repeats: u32,
) -> Result<BTreeMap<String, u64>> {
    unimax_from_counts(&manifest.language_tokens(), budget, max_repeats)
}

pub fn unimax_from_counts(
    counts: &BTreeMap<String, u64>,
    budget: u64,
    max_repeats: u32,
) -> Result<BTreeMap<String, u64>> {
    if budget == 0 {
        return Err(Error::config("budget must be positive"));
    }
    if max_repeats == 0 {
        return Err(Error::config("max_repeats must be at least 1"));
    }
    let mut order: Vec<(&String, u64)> = counts.iter().map(|(l, &n)| (l, n)).collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let mut remaining = budget;
    let mut out = BTreeMap::new();
    let k = order.len() as u64;
    for (i, (lang, n)) in order.into_iter().enumerate() {
        let fair = remaining / (k - i as u64);
        let cap = (n as u128 * max_repeats as u128).min(u64::MAX as u128) as u64;
        let alloc = cap.min(fair);
        remaining -= alloc;
        out.insert(lang.clone(), alloc);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub token_budget: u64,
    pub target: Distribution<f64>,
    /// Fraction of each language's tokens drawn from the named source.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_overrides: BTreeMap<String, f64>,
    /// Linear interpolation from the previous stage's target over this many
    /// tokens; 0 switches abruptly.
    #[serde(default)]
    pub ramp_tokens: u64,
}

fn default_repeats() -> u32 {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
    #[serde(default = "default_repeats")]
    pub max_repeats: u32,
    #[serde(default)]
    pub seed: u64,
    /// Shuffle each source's documents per pass with a seeded permutation.
    #[serde(default)]
    pub shuffle_within_language: bool,
}

impl StagePlan {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::config("plan has no stages"));
        }
        if self.max_repeats == 0 {
            return Err(Error::config("max_repeats must be at least 1"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.token_budget == 0 {
                return Err(Error::config(format!("stage {i}: token_budget must be positive")));
            }
            s.target
                .validate()
                .map_err(|e| Error::config(format!("stage {i}: target {e}")))?;
            let mut sum = 0.0;
            for (src, &f) in &s.source_overrides {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::config(format!(
                        "stage {i}: override for {src} outside [0, 1]"
                    )));
                }
                sum += f;
            }
            if sum > 1.0 + 1e-9 {
                return Err(Error::config(format!("stage {i}: source overrides sum to {sum}")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let plan: StagePlan = crate::corpus::read_json(path)?;
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub step: u64,
    pub stage: usize,
    pub lang: String,
    pub source: String,
    pub doc_index: u64,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exhaustion {
    pub lang: String,
    pub stage: usize,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSchedule {
    pub stage_budgets: Vec<u64>,
    pub emissions: Vec<Emission>,
    pub exhausted: Vec<Exhaustion>,
}

impl MixSchedule {
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<usize> {
        write_jsonl(path, &self.emissions)
    }
}

struct SourceCursor<'a> {
    source: &'a str,
    docs: &'a [u64],
    pos: usize,
    passes: u32,
    order: Option<Vec<u32>>,
}

impl SourceCursor<'_> {
    fn exhausted(&self, cap: u32) -> bool {
        self.passes >= cap
    }

    fn reshuffle(&mut self, seed: u64, lang: &str) {
        let mut key = Vec::with_capacity(lang.len() + self.source.len() + 1);
        key.extend_from_slice(lang.as_bytes());
        key.push(0);
        key.extend_from_slice(self.source.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(&key) ^ self.passes as u64);
        let mut order: Vec<u32> = (0..self.docs.len() as u32).collect();
        order.shuffle(&mut rng);
        self.order = Some(order);
    }

    fn doc_index(&self) -> usize {
        match &self.order {
            Some(order) => order[self.pos] as usize,
            None => self.pos,
        }
    }
}

struct LangState<'a> {
    sources: Vec<SourceCursor<'a>>,
    exhausted: bool,
    segment_tokens: u64,
    segment_source_tokens: Vec<u64>,
}

impl LangState<'_> {
    /// Without overrides, sources are walked in manifest order pass by pass;
    /// with overrides, a per-source deficit rule picks among them.
    fn pick_source(&self, weights: Option<&[f64]>, cap: u32) -> Option<usize> {
        let live = |i: &usize| !self.sources[*i].exhausted(cap);
        if let Some(w) = weights {
            let mut best: Option<(usize, f64)> = None;
            for i in (0..self.sources.len()).filter(live).filter(|&i| w[i] > 0.0) {
                let d = w[i] * self.segment_tokens as f64 - self.segment_source_tokens[i] as f64;
                if best.map_or(true, |(_, b)| d > b) {
                    best = Some((i, d));
                }
            }
            if let Some((i, _)) = best {
                return Some(i);
            }
        }
        (0..self.sources.len())
            .filter(live)
            .min_by_key(|&i| (self.sources[i].passes, i))
    }
}

fn source_weights(lang: &LangState, overrides: &BTreeMap<String, f64>) -> Option<Vec<f64>> {
    if overrides.is_empty() {
        return None;
    }
    let listed: f64 = lang
        .sources
        .iter()
        .filter_map(|s| overrides.get(s.source))
        .sum();
    let rest = (1.0 - listed).max(0.0);
    let unlisted_tokens: u64 = lang
        .sources
        .iter()
        .filter(|s| !overrides.contains_key(s.source))
        .map(|s| s.docs.iter().sum::<u64>())
        .sum();
    Some(
        lang.sources
            .iter()
            .map(|s| match overrides.get(s.source) {
                Some(&f) => f,
                None if unlisted_tokens > 0 => {
                    rest * s.docs.iter().sum::<u64>() as f64 / unlisted_tokens as f64
                }
                None => 0.0,
            })
            .collect(),
    )
}

fn stage_target(plan: &StagePlan, stage: usize, stage_tokens: u64) -> BTreeMap<&str, f64> {
    let cur = &plan.stages[stage];
    let mut out: BTreeMap<&str, f64> =
        cur.target.weights.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    if stage > 0 && cur.ramp_tokens > 0 && stage_tokens < cur.ramp_tokens {
        let a = stage_tokens as f64 / cur.ramp_tokens as f64;
        let prev = &plan.stages[stage - 1].target;
        for k in prev.weights.keys() {
            out.entry(k.as_str()).or_insert(0.0);
        }
        for (k, v) in out.iter_mut() {
            *v = (1.0 - a) * prev.get(k) + a * *v;
        }
    }
    out
}

/// Realizes the plan with the deficit rule: at each step the live language
/// maximizing q_l·E − e_l emits its next document (ties by code).
///
/// E and e_l count tokens since the start of the current segment; a segment
/// starts at every stage boundary and whenever a language exhausts its R
/// passes, so surviving languages track the renormalized target from then on.
pub fn build_schedule(plan: &StagePlan, index: &CorpusIndex) -> Result<MixSchedule> {
    plan.validate()?;
    let mut langs: BTreeMap<&str, LangState> = BTreeMap::new();
    for ((lang, source), docs) in &index.groups {
        let state = langs.entry(lang.as_str()).or_insert_with(|| LangState {
            sources: Vec::new(),
            exhausted: false,
            segment_tokens: 0,
            segment_source_tokens: Vec::new(),
        });
        if docs.doc_tokens.is_empty() {
            continue;
        }
        state.sources.push(SourceCursor {
            source: source.as_str(),
            docs: &docs.doc_tokens,
            pos: 0,
            passes: 0,
            order: None,
        });
        state.segment_source_tokens.push(0);
    }
    for (i, stage) in plan.stages.iter().enumerate() {
        for (lang, &w) in &stage.target.weights {
            if w <= 0.0 {
                continue;
            }
            let tokens: u64 = langs
                .get(lang.as_str())
                .map(|s| s.sources.iter().flat_map(|c| c.docs.iter()).sum())
                .unwrap_or(0);
            if tokens == 0 {
                return Err(Error::config(format!(
                    "stage {i}: target language {lang} has no tokens in the corpus"
                )));
            }
        }
    }
    if plan.shuffle_within_language {
        for (lang, state) in langs.iter_mut() {
            for c in &mut state.sources {
                c.reshuffle(plan.seed, lang);
            }
        }
    }

    let cap = plan.max_repeats;
    let mut emissions = Vec::new();
    let mut exhausted = Vec::new();
    let mut step = 0u64;
    for (stage_idx, stage) in plan.stages.iter().enumerate() {
        let mut stage_tokens = 0u64;
        let mut segment_tokens = 0u64;
        let reset = |langs: &mut BTreeMap<&str, LangState>| {
            for s in langs.values_mut() {
                s.segment_tokens = 0;
                s.segment_source_tokens.iter_mut().for_each(|t| *t = 0);
            }
        };
        reset(&mut langs);
        let weights: BTreeMap<&str, Option<Vec<f64>>> = langs
            .iter()
            .map(|(l, s)| (*l, source_weights(s, &stage.source_overrides)))
            .collect();
        while stage_tokens < stage.token_budget {
            let target = stage_target(plan, stage_idx, stage_tokens);
            let live: Vec<(&str, f64)> = target
                .iter()
                .filter(|(l, &w)| w > 0.0 && langs.get(*l).is_some_and(|s| !s.exhausted))
                .map(|(l, &w)| (*l, w))
                .collect();
            let mass: f64 = live.iter().map(|(_, w)| w).sum();
            if live.is_empty() || mass <= 0.0 {
                return Err(Error::data(format!(
                    "stage {stage_idx}: every target language exhausted its {cap} passes after \
                     {stage_tokens} of {} tokens",
                    stage.token_budget
                )));
            }
            let mut best: Option<(&str, f64)> = None;
            for &(l, w) in &live {
                let d = w / mass * segment_tokens as f64 - langs[l].segment_tokens as f64;
                if best.map_or(true, |(_, b)| d > b) {
                    best = Some((l, d));
                }
            }
            let lang = best.expect("live is non-empty").0;
            let state = langs.get_mut(lang).expect("live language has state");
            let si = state
                .pick_source(weights[lang].as_deref(), cap)
                .expect("non-exhausted language has a live source");
            let cursor = &mut state.sources[si];
            let doc_index = cursor.doc_index();
            let tokens = cursor.docs[doc_index];
            emissions.push(Emission {
                step,
                stage: stage_idx,
                lang: lang.to_string(),
                source: cursor.source.to_string(),
                doc_index: doc_index as u64,
                tokens,
            });
            step += 1;
            cursor.pos += 1;
            if cursor.pos == cursor.docs.len() {
                cursor.pos = 0;
                cursor.passes += 1;
                if plan.shuffle_within_language && cursor.passes < cap {
                    cursor.reshuffle(plan.seed, lang);
                }
            }
            state.segment_tokens += tokens;
            state.segment_source_tokens[si] += tokens;
            stage_tokens += tokens;
            segment_tokens += tokens;
            if state.sources.iter().all(|c| c.exhausted(cap)) {
                state.exhausted = true;
                exhausted.push(Exhaustion {
                    lang: lang.to_string(),
                    stage: stage_idx,
                    step,
                });
                reset(&mut langs);
                segment_tokens = 0;
            }
        }
    }
    Ok(MixSchedule {
        stage_budgets: plan.stages.iter().map(|s| s.token_budget).collect(),
        emissions,
        exhausted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: usize,
    pub budget: u64,
    pub tokens: u64,
    pub documents: u64,
    pub language_tokens: BTreeMap<String, u64>,
    pub languages: BTreeMap<String, f64>,
    pub sources: BTreeMap<String, f64>,
    /// Shares keyed "lang/source".
    pub language_sources: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixStats {
    pub total_tokens: u64,
    pub stages: Vec<StageStats>,
}

fn shares(counts: &BTreeMap<String, u64>, total: u64) -> BTreeMap<String, f64> {
    counts
        .iter()
        .map(|(k, &v)| (k.clone(), if total == 0 { 0.0 } else { v as f64 / total as f64 }))
        .collect()
}

/// Per-stage language and source token shares, recounted from the emissions.
pub fn realized_stats(schedule: &MixSchedule) -> MixStats {
    let stage_count = schedule
        .stage_budgets
        .len()
        .max(schedule.emissions.iter().map(|e| e.stage + 1).max().unwrap_or(0));
    type Counts = BTreeMap<String, u64>;
    let mut per_stage: Vec<(u64, Counts, Counts, Counts)> =
        vec![Default::default(); stage_count];
    for e in &schedule.emissions {
        let (docs, langs, sources, pairs) = &mut per_stage[e.stage];
        *docs += 1;
        *langs.entry(e.lang.clone()).or_insert(0) += e.tokens;
        *sources.entry(e.source.clone()).or_insert(0) += e.tokens;
        *pairs.entry(format!("{}/{}", e.lang, e.source)).or_insert(0) += e.tokens;
    }
    let stages: Vec<StageStats> = per_stage
        .into_iter()
        .enumerate()
        .map(|(i, (documents, langs, sources, pairs))| {
            let tokens = langs.values().sum();
            StageStats {
                stage: i,
                budget: schedule.stage_budgets.get(i).copied().unwrap_or(0),
                tokens,
                documents,
                languages: shares(&langs, tokens),
                sources: shares(&sources, tokens),
                language_sources: shares(&pairs, tokens),
                language_tokens: langs,
            }
        })
        .collect();
    MixStats {
        total_tokens: stages.iter().map(|s| s.tokens).sum(),
        stages,
    }
}
