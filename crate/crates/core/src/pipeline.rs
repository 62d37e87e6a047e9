//! Recipes chaining the curation steps, and their run reports.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bpe::{load_bpe_spec, load_tokenizer, BpeTokenizer};
use crate::classifier::{quality_filter, Ensemble, QualityScorer, TextClassifier};
use crate::corpus::{read_documents, write_documents, write_json, write_jsonl, CorpusIndex, Document, Tokenizer};
use crate::error::{Error, Result};
use crate::heuristics::{apply_heuristics, AuditRecord, BoilerplateDetector, HeuristicConfig, MetadataStripper};
use crate::longctx::{
    pack_sequences, select_long_documents, write_packed_binary, PackedSequence, PackingConfig, TokenizedDocument,
};
use crate::mix::{build_schedule, realized_stats, StagePlan};
use crate::ngram::{perplexity_filter, CutoffPolicy, NgramModel};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    StripMeta,
    Heuristics,
    NgramFilter,
    ClassifierFilter,
    MixEmit,
    PackLongctx,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::StripMeta => "strip_meta",
            StepKind::Heuristics => "heuristics",
            StepKind::NgramFilter => "ngram_filter",
            StepKind::ClassifierFilter => "classifier_filter",
            StepKind::MixEmit => "mix_emit",
            StepKind::PackLongctx => "pack_longctx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inputs {
    One(String),
    Many(Vec<String>),
}

impl Inputs {
    pub fn paths(&self) -> Vec<&str> {
        match self {
            Inputs::One(p) => vec![p.as_str()],
            Inputs::Many(ps) => ps.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: StepKind,
    pub input: Inputs,
    pub output: String,
    /// Inline JSON object, or a string naming a JSON file.
    #[serde(default)]
    pub config: Option<Value>,
}

impl StepSpec {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }
}

fn default_tokenizer() -> String {
    "whitespace".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecipe {
    #[serde(default)]
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Tokenizer used to count tokens for pass rates.
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default)]
    pub report: Option<String>,
}

impl PipelineRecipe {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::corpus::read_json(path)
    }

    /// Every input must exist or be the output of an earlier step.
    pub fn validate(&self) -> Result<()> {
        let mut produced: HashSet<&str> = HashSet::new();
        let mut names = BTreeSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            let name = step.display_name();
            if !names.insert(name.clone()) {
                return Err(Error::config(format!("step name {name} repeats; set distinct names")));
            }
            let inputs = step.input.paths();
            if inputs.is_empty() {
                return Err(Error::config(format!("step {i} ({name}) has no input")));
            }
            if inputs.len() > 1 && step.kind != StepKind::MixEmit {
                return Err(Error::config(format!("step {i} ({name}) takes a single input")));
            }
            for input in inputs {
                if !produced.contains(input) && !Path::new(input).exists() {
                    return Err(Error::config(format!(
                        "step {i} ({name}): input {input} neither exists nor is produced earlier"
                    )));
                }
            }
            produced.insert(step.output.as_str());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub name: String,
    pub kind: StepKind,
    pub status: StepStatus,
    pub inputs: Vec<String>,
    pub output: String,
    pub config_hash: Option<String>,
    pub docs_in: u64,
    pub docs_out: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub doc_pass_rate: Option<f64>,
    pub token_pass_rate: Option<f64>,
    pub wall_clock_ms: u64,
    /// Set when the step failed after its output file appeared.
    pub partial_output: bool,
    pub error: Option<String>,
    /// Step-specific results (resolved bounds, stage composition, ...).
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub tokenizer: String,
    pub status: StepStatus,
    pub steps: Vec<StepReport>,
}

#[derive(Debug)]
pub struct PipelineRun {
    pub report: RunReport,
    pub error: Option<Error>,
}

fn load_config<T: serde::de::DeserializeOwned>(cfg: &Option<Value>) -> Result<(T, Option<String>)> {
    let (value, bytes) = match cfg {
        None => (Value::Object(Default::default()), None),
        Some(Value::String(path)) => {
            let p = Path::new(path);
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let v: Value = serde_json::from_slice(&bytes)
                .map_err(|e| Error::config(format!("{path}: {e}")))?;
            (v, Some(bytes))
        }
        Some(v) => (v.clone(), Some(serde_json::to_vec(v).expect("json value serializes"))),
    };
    let hash = bytes.map(|b| format!("{:x}", Sha256::digest(&b)));
    let parsed = serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))?;
    Ok((parsed, hash))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct StripConfig {
    detect_boilerplate: Option<BoilerplateDetector>,
}

#[derive(Debug, Clone, Deserialize)]
struct NgramFilterConfig {
    model: String,
    #[serde(flatten)]
    policy: CutoffPolicy,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
struct ClassifierFilterConfig {
    models: Vec<String>,
    #[serde(default = "half")]
    keep_threshold: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct MixEmitConfig {
    plan: Value,
    #[serde(default = "default_tokenizer")]
    tokenizer: String,
    #[serde(default)]
    stats: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PackFormat {
    #[default]
    Jsonl,
    Binary,
}

#[derive(Debug, Clone, Deserialize)]
struct PackConfig {
    tokenizer: String,
    #[serde(default)]
    format: PackFormat,
    #[serde(flatten)]
    packing: PackingConfig,
}

struct StepResult {
    docs_out: u64,
    tokens_out: u64,
    details: Value,
}

fn count_tokens(tok: &dyn Tokenizer, docs: &[Document]) -> Result<u64> {
    use rayon::prelude::*;
    docs.par_iter()
        .map(|d| tok.count_tokens(&d.text).map(|n| n as u64))
        .sum()
}

fn write_docs(path: &str, docs: &[Document]) -> Result<()> {
    write_documents(path, docs.iter()).map(|_| ())
}

/// Executes one step over its loaded input and writes its output.
pub fn strip_documents(docs: &[Document], detector: Option<BoilerplateDetector>) -> Vec<Document> {
    use rayon::prelude::*;
    let blacklist = detector.map(|d| d.detect(docs)).unwrap_or_default();
    let stripper = MetadataStripper::new(blacklist);
    docs.par_iter().map(|d| stripper.strip(d)).collect()
}

/// Splits documents by verdict, returning the kept ones and an audit row
/// per input document.
pub fn heuristic_filter(docs: Vec<Document>, cfg: &HeuristicConfig) -> (Vec<Document>, Vec<AuditRecord>) {
    use rayon::prelude::*;
    let verdicts: Vec<_> = docs.par_iter().map(|d| apply_heuristics(d, cfg)).collect();
    let mut kept = Vec::new();
    let mut audit = Vec::with_capacity(docs.len());
    for (doc, v) in docs.into_iter().zip(verdicts) {
        audit.push(AuditRecord {
            id: doc.id.clone(),
            passed: v.passed,
            reasons: v.reasons,
        });
        if v.passed {
            kept.push(doc);
        }
    }
    (kept, audit)
}

/// Recounts tokens with `tok`, keeps documents of at least
/// `min_doc_tokens` and packs them.
pub fn pack_documents(
    docs: Vec<Document>,
    tok: &BpeTokenizer,
    cfg: &PackingConfig,
) -> Result<(Vec<Document>, Vec<PackedSequence>)> {
    use rayon::prelude::*;
    cfg.validate()?;
    let encoded: Vec<Vec<u32>> = docs.par_iter().map(|d| tok.encode(&d.text)).collect();
    let mut ids_by_doc = std::collections::HashMap::new();
    let counted = docs.into_iter().zip(encoded).map(|(mut d, ids)| {
        d.token_count = Some(ids.len() as u64);
        ids_by_doc.insert(d.id.clone(), ids);
        d
    });
    let selected: Vec<Document> = select_long_documents(counted, cfg.min_doc_tokens).collect();
    let tokenized: Vec<TokenizedDocument> = selected
        .iter()
        .map(|d| TokenizedDocument {
            id: d.id.clone(),
            tokens: ids_by_doc.remove(&d.id).unwrap_or_default(),
        })
        .collect();
    let seqs = pack_sequences(&tokenized, cfg)?;
    Ok((selected, seqs))
}

/// JSONL of sequences, or `output` as the flat token file plus a `.idx`
/// sidecar next to it.
pub fn write_packed(seqs: &[PackedSequence], output: &str, format: PackFormat) -> Result<()> {
    match format {
        PackFormat::Jsonl => write_jsonl(output, seqs).map(|_| ()),
        PackFormat::Binary => {
            let bin = Path::new(output);
            write_packed_binary(seqs, bin, &bin.with_extension("idx"))
        }
    }
}

fn run_step(
    step: &StepSpec,
    docs: Vec<Document>,
    counter: &dyn Tokenizer,
    hash: &mut Option<String>,
) -> Result<StepResult> {
    let filtered = |kept: Vec<Document>, details: Value| -> Result<StepResult> {
        write_docs(&step.output, &kept)?;
        Ok(StepResult {
            docs_out: kept.len() as u64,
            tokens_out: count_tokens(counter, &kept)?,
            details,
        })
    };
    match step.kind {
        StepKind::StripMeta => {
            let (cfg, h): (StripConfig, _) = load_config(&step.config)?;
            *hash = h;
            filtered(strip_documents(&docs, cfg.detect_boilerplate), Value::Null)
        }
        StepKind::Heuristics => {
            let (cfg, h): (HeuristicConfig, _) = load_config(&step.config)?;
            *hash = h;
            cfg.validate()?;
            let (kept, _) = heuristic_filter(docs, &cfg);
            filtered(kept, Value::Null)
        }
        StepKind::NgramFilter => {
            let (cfg, h): (NgramFilterConfig, _) = load_config(&step.config)?;
            *hash = h;
            cfg.policy.validate()?;
            let model = NgramModel::load(&cfg.model)?;
            let out = perplexity_filter(&model, docs, &cfg.policy)?;
            filtered(out.kept, serde_json::json!({ "bound": out.bound }))
        }
        StepKind::ClassifierFilter => {
            let (cfg, h): (ClassifierFilterConfig, _) = load_config(&step.config)?;
            *hash = h;
            let scorer: Box<dyn QualityScorer> = match cfg.models.as_slice() {
                [a] => {
                    let model = TextClassifier::<f32>::load(a)?;
                    Box::new(crate::classifier::Thresholded::new(model, cfg.keep_threshold)?)
                }
                [a, b] => Box::new(Ensemble::new(
                    TextClassifier::<f32>::load(a)?,
                    TextClassifier::<f32>::load(b)?,
                    cfg.keep_threshold,
                )?),
                other => {
                    return Err(Error::config(format!(
                        "classifier_filter takes one or two models, got {}",
                        other.len()
                    )))
                }
            };
            let out = quality_filter(scorer.as_ref(), docs);
            filtered(out.kept, serde_json::json!({ "dropped": out.dropped.len() }))
        }
        StepKind::MixEmit => {
            let (cfg, h): (MixEmitConfig, _) = load_config(&step.config)?;
            *hash = h;
            let plan: StagePlan = match &cfg.plan {
                Value::String(path) => StagePlan::load(path)?,
                v => serde_json::from_value(v.clone()).map_err(|e| Error::config(format!("plan: {e}")))?,
            };
            let tok = load_tokenizer(&cfg.tokenizer)?;
            let mut index = CorpusIndex::default();
            let mut keys = Vec::with_capacity(docs.len());
            for d in &docs {
                let n = tok.count_tokens(&d.text)? as u64;
                index.push(&d.lang, &d.source, n, &step.output);
                let group = &index.groups[&(d.lang.clone(), d.source.clone())];
                keys.push(((d.lang.clone(), d.source.clone()), group.doc_tokens.len() - 1));
            }
            let schedule = build_schedule(&plan, &index)?;
            schedule.write_jsonl(&step.output)?;
            let stats = realized_stats(&schedule);
            if let Some(path) = &cfg.stats {
                write_json(path, &stats)?;
            }
            let emitted: HashSet<(&str, &str, u64)> = schedule
                .emissions
                .iter()
                .map(|e| (e.lang.as_str(), e.source.as_str(), e.doc_index))
                .collect();
            let mut distinct = Vec::new();
            for (d, ((lang, source), idx)) in docs.iter().zip(&keys) {
                if emitted.contains(&(lang.as_str(), source.as_str(), *idx as u64)) {
                    distinct.push(d.clone());
                }
            }
            Ok(StepResult {
                docs_out: distinct.len() as u64,
                tokens_out: count_tokens(counter, &distinct)?,
                details: serde_json::to_value(&stats).expect("stats serialize"),
            })
        }
        StepKind::PackLongctx => {
            let (cfg, h): (PackConfig, _) = load_config(&step.config)?;
            *hash = h;
            cfg.packing.validate()?;
            let tok = load_bpe_spec(&cfg.tokenizer)?;
            let (selected, seqs) = pack_documents(docs, &tok, &cfg.packing)?;
            write_packed(&seqs, &step.output, cfg.format)?;
            let at_max = seqs.iter().filter(|s| s.at_max).count();
            Ok(StepResult {
                docs_out: selected.len() as u64,
                tokens_out: count_tokens(counter, &selected)?,
                details: serde_json::json!({
                    "sequences": seqs.len(),
                    "sequences_at_max": at_max,
                    "packed_tokens": seqs.iter().map(|s| s.tokens.len()).sum::<usize>(),
                }),
            })
        }
    }
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn read_inputs(step: &StepSpec) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for p in step.input.paths() {
        docs.extend(read_documents(p)?);
    }
    Ok(docs)
}

/// Runs the steps in order, materializing every output. A failing step
/// stops the run; later steps are reported as not run. The report is
/// written to `recipe.report` in every case.
pub fn run_pipeline(recipe: &PipelineRecipe) -> PipelineRun {
    let mut report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: recipe.seed,
        tokenizer: recipe.tokenizer.clone(),
        status: StepStatus::Ok,
        steps: Vec::new(),
    };
    let mut error = recipe.validate().err();
    let counter = match &error {
        None => match load_tokenizer(&recipe.tokenizer) {
            Ok(t) => Some(t),
            Err(e) => {
                error = Some(e);
                None
            }
        },
        Some(_) => None,
    };
    for step in &recipe.steps {
        let mut row = StepReport {
            name: step.display_name(),
            kind: step.kind,
            status: StepStatus::NotRun,
            inputs: step.input.paths().into_iter().map(String::from).collect(),
            output: step.output.clone(),
            config_hash: None,
            docs_in: 0,
            docs_out: 0,
            tokens_in: 0,
            tokens_out: 0,
            doc_pass_rate: None,
            token_pass_rate: None,
            wall_clock_ms: 0,
            partial_output: false,
            error: None,
            details: Value::Null,
        };
        if let (None, Some(counter)) = (&error, &counter) {
            let started = Instant::now();
            log::info!("step {} ({})", row.name, step.kind.as_str());
            let existed = Path::new(&step.output).exists();
            let outcome = read_inputs(step).and_then(|docs| {
                row.docs_in = docs.len() as u64;
                row.tokens_in = count_tokens(counter.as_ref(), &docs)?;
                run_step(step, docs, counter.as_ref(), &mut row.config_hash)
            });
            row.wall_clock_ms = started.elapsed().as_millis() as u64;
            match outcome {
                Ok(r) => {
                    row.status = StepStatus::Ok;
                    row.docs_out = r.docs_out;
                    row.tokens_out = r.tokens_out;
                    row.doc_pass_rate = ratio(r.docs_out, row.docs_in);
                    row.token_pass_rate = ratio(r.tokens_out, row.tokens_in);
                    row.details = r.details;
                }
                Err(e) => {
                    row.status = StepStatus::Failed;
                    row.partial_output = !existed && Path::new(&step.output).exists();
                    row.error = Some(e.to_string());
                    error = Some(e.context(&format!("step {}", row.name)));
                }
            }
        }
        report.steps.push(row);
    }
    if error.is_some() {
        report.status = StepStatus::Failed;
    }
    if let Some(path) = &recipe.report {
        if let Err(e) = write_json(path, &report) {
            error.get_or_insert(e);
        }
    }
    PipelineRun { report, error }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub path: String,
    pub a: Value,
    pub b: Value,
}

const IGNORED_FIELDS: [&str; 1] = ["wall_clock_ms"];
const NUMERIC_TOLERANCE: f64 = 1e-9;

fn diff_values(path: &str, a: &Value, b: &Value, out: &mut Vec<FieldDiff>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                if IGNORED_FIELDS.contains(&k.as_str()) {
                    continue;
                }
                let sub = format!("{path}.{k}");
                diff_values(&sub, x.get(k).unwrap_or(&Value::Null), y.get(k).unwrap_or(&Value::Null), out);
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                diff_values(&format!("{path}[{i}]"), p, q, out);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (p, q) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            let same = x == y || (p - q).abs() <= NUMERIC_TOLERANCE * p.abs().max(q.abs()).max(1.0);
            if !same {
                out.push(FieldDiff { path: path.to_string(), a: a.clone(), b: b.clone() });
            }
        }
        _ => {
            if a != b {
                out.push(FieldDiff { path: path.to_string(), a: a.clone(), b: b.clone() });
            }
        }
    }
}

/// Field-level differences between two reports of the same recipe shape,
/// ignoring wall-clock timings; numbers compare with a 1e-9 relative
/// tolerance.
pub fn diff_reports(a: &RunReport, b: &RunReport) -> Result<Vec<FieldDiff>> {
    let shape = |r: &RunReport| -> Vec<(String, StepKind)> {
        r.steps.iter().map(|s| (s.name.clone(), s.kind)).collect()
    };
    if a.schema_version != b.schema_version || shape(a) != shape(b) {
        return Err(Error::Usage(format!(
            "reports have different step structure ({} vs {} steps)",
            a.steps.len(),
            b.steps.len()
        )));
    }
    let mut out = Vec::new();
    let va = serde_json::to_value(a).expect("report serializes");
    let vb = serde_json::to_value(b).expect("report serializes");
    diff_values("", &va, &vb, &mut out);
    Ok(out)
}

/// Reads a JSON report for diffing.
pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport> {
    crate::corpus::read_json(path)
}
