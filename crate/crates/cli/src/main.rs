use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use mixcurate::bpe::{load_bpe_spec, load_tokenizer};
use mixcurate::classifier::{
    evaluate_f1, quality_filter, train_classifier, Ensemble, LabeledDocument, QualityScorer, Thresholded,
    TrainParams,
};
use mixcurate::corpus::{
    estimate_training_flops, read_documents, read_json, read_jsonl, write_documents, write_json, write_jsonl,
    CorpusIndex, CorpusManifest,
};
use mixcurate::fertility::{compute_fertility, format_fertility_table};
use mixcurate::heuristics::{BoilerplateDetector, HeuristicConfig};
use mixcurate::longctx::{check_context_coverage, FracMode, PackingConfig};
use mixcurate::mcf::{assemble_sft_mixture, render_items, McfItem, MixturePlan};
use mixcurate::mix::{
    build_schedule, proportional_distribution, realized_stats, temperature_distribution, unimax_allocation,
    Emission, MixSchedule, StagePlan,
};
use mixcurate::ngram::{perplexity_filter, score_documents, train_ngram, CutoffMode, CutoffPolicy, NgramModel, NgramParams};
use mixcurate::pipeline::{diff_reports, heuristic_filter, load_report, pack_documents, run_pipeline, strip_documents, write_packed, PackFormat, PipelineRecipe};
use mixcurate::{Error, LanguageDistribution, Result, TextClassifierModel};

/// Parses integers written plainly or in scientific notation (18e12).
fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(v >= 0.0 && v.fract() == 0.0 && v < 18_446_744_073_709_551_616.0) {
        return Err(format!("{s:?} is not a non-negative integer"));
    }
    Ok(v as u64)
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    parse_count(s).and_then(|v| usize::try_from(v).map_err(|e| e.to_string()))
}

fn parse_u32(s: &str) -> std::result::Result<u32, String> {
    parse_count(s).and_then(|v| u32::try_from(v).map_err(|e| e.to_string()))
}

fn parse_real(s: &str) -> std::result::Result<f64, String> {
    s.parse().map_err(|_| format!("{s:?} is not a number"))
}

#[derive(Parser)]
#[command(name = "mixcurate", version, about = "Multilingual corpus curation toolkit", arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON file with per-command sections (heuristics, ngram, cutoff, classifier, packing)
    #[arg(long, global = true, env = "MIXCURATE_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "0", value_parser = parse_count)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value = "0", value_parser = parse_usize)]
    workers: usize,
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    /// Run single-threaded
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Keep documents passing every quality heuristic
    FilterHeuristics {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// JSONL of (id, passed, reasons) per document
        #[arg(long)]
        audit: Option<PathBuf>,
        #[arg(long, value_parser = parse_usize)]
        min_words: Option<usize>,
        #[arg(long, value_parser = parse_usize)]
        max_words: Option<usize>,
        #[arg(long, value_parser = parse_usize)]
        min_stopword_hits: Option<usize>,
        #[arg(long = "disable-rule")]
        disable_rules: Vec<String>,
    },
    /// Remove hashtags, links, timestamps, emails and repeated headers/footers
    StripMeta {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Skip header/footer detection
        #[arg(long)]
        no_boilerplate: bool,
        #[arg(long, default_value = "100", value_parser = parse_usize)]
        window: usize,
        #[arg(long, default_value = "3", value_parser = parse_usize)]
        min_repeats: usize,
    },
    #[command(subcommand)]
    Ngram(NgramCmd),
    #[command(subcommand)]
    Classifier(ClassifierCmd),
    #[command(subcommand)]
    Mix(MixCmd),
    /// Tokens per treebank word, per language
    Fertility {
        /// Tokenizer directory, `bytes` or `whitespace`
        #[arg(long)]
        tokenizer: String,
        /// LANG=PATH, repeatable
        #[arg(long, required = true)]
        treebank: Vec<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Select long documents and pack them into training sequences
    PackLongctx {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: String,
        /// Tokenizer directory or `bytes`
        #[arg(long)]
        tokenizer: String,
        #[arg(long, value_parser = parse_usize)]
        max_len: Option<usize>,
        #[arg(long, value_parser = parse_real)]
        frac_max: Option<f64>,
        #[arg(long, value_parser = parse_count)]
        min_doc_tokens: Option<u64>,
        #[arg(long, value_parser = parse_u32, conflicts_with = "no_separator")]
        separator: Option<u32>,
        #[arg(long)]
        no_separator: bool,
        #[arg(long, value_enum)]
        frac_mode: Option<FracModeArg>,
        #[arg(long)]
        pack_short: bool,
        /// Shuffle documents with --seed before packing
        #[arg(long)]
        shuffle: bool,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: PackFormatArg,
    },
    /// RoPE wavelength coverage of a target context
    RopeCheck {
        #[arg(long, value_parser = parse_real)]
        base: f64,
        #[arg(long, value_parser = parse_usize)]
        head_dim: usize,
        #[arg(long, value_parser = parse_count)]
        target: u64,
    },
    #[command(subcommand)]
    Mcf(McfCmd),
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Training compute 6·T·P
    Flops {
        #[arg(long, value_parser = parse_count)]
        tokens: u64,
        #[arg(long, value_parser = parse_count)]
        params: u64,
    },
}

#[derive(Subcommand)]
enum NgramCmd {
    /// Train a smoothed n-gram model
    Train {
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_parser = parse_usize)]
        order: Option<usize>,
        #[arg(long, value_parser = parse_real)]
        discount: Option<f64>,
        #[arg(long, value_parser = parse_usize)]
        max_vocab: Option<usize>,
    },
    /// Per-document perplexity as JSONL
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Keep documents under the perplexity cutoff
    Filter {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        dropped: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<CutoffModeArg>,
        #[arg(long, value_parser = parse_real)]
        value: Option<f64>,
        #[arg(long, value_parser = parse_usize)]
        calibration_sample_size: Option<usize>,
    },
}

#[derive(Args)]
struct ScorerArgs {
    /// One or two model files
    #[arg(long = "model", required = true, num_args = 1)]
    models: Vec<PathBuf>,
    #[arg(long, default_value = "0.5", value_parser = parse_real)]
    threshold: f64,
}

#[derive(Subcommand)]
enum ClassifierCmd {
    /// Train on labeled JSONL (field "label", 0..5)
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_parser = parse_usize)]
        buckets: Option<usize>,
        #[arg(long, value_parser = parse_usize)]
        dim: Option<usize>,
        #[arg(long, value_parser = parse_usize)]
        epochs: Option<usize>,
        #[arg(long, value_parser = parse_real)]
        lr: Option<f64>,
    },
    /// Score distribution per document as JSONL
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Keep documents whose P(score >= 3) reaches the threshold
    Filter {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        dropped: Option<PathBuf>,
    },
    /// Binarized F1 on a labeled holdout
    Eval {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum MixCmd {
    /// Language weights or budgets from a manifest
    Plan {
        #[arg(long, conflicts_with = "input")]
        manifest: Option<PathBuf>,
        /// Corpus files to build the manifest from
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "whitespace")]
        tokenizer: String,
        /// Also write the built manifest here
        #[arg(long)]
        manifest_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "proportional")]
        method: MixMethod,
        #[arg(long, default_value = "1", value_parser = parse_real)]
        temperature: f64,
        #[arg(long, value_parser = parse_count)]
        budget: Option<u64>,
        #[arg(long, default_value = "6", value_parser = parse_u32)]
        max_repeats: u32,
    },
    /// Emit the document schedule realizing a stage plan
    Emit {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "whitespace")]
        tokenizer: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Realized per-stage shares of a schedule
    Stats {
        #[arg(long)]
        schedule: PathBuf,
        /// Plan supplying stage budgets
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum McfCmd {
    /// Render QA items as chat records across the format space
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Keep options in their given order
        #[arg(long)]
        no_balance: bool,
    },
    /// Assemble the SFT mixture described by a plan
    MixSft {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run a recipe
    Run {
        #[arg(long)]
        recipe: PathBuf,
        /// Overrides the recipe's report path
        #[arg(long)]
        report: Option<String>,
    },
    /// Compare two run reports
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum FracModeArg {
    Sequences,
    Tokens,
}

#[derive(Clone, Copy, ValueEnum)]
enum PackFormatArg {
    Jsonl,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum CutoffModeArg {
    Absolute,
    Percentile,
}

#[derive(Clone, Copy, ValueEnum)]
enum MixMethod {
    Proportional,
    Temperature,
    Unimax,
}

struct Ctx {
    config: Value,
    seed: u64,
}

impl Ctx {
    fn section<T: serde::de::DeserializeOwned + Default>(&self, key: &str) -> Result<T> {
        match self.config.get(key) {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::config(format!("config section {key}: {e}"))),
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn scorer(args: &ScorerArgs) -> Result<Box<dyn QualityScorer>> {
    match args.models.as_slice() {
        [a] => Ok(Box::new(Thresholded::new(TextClassifierModel::load(a)?, args.threshold)?)),
        [a, b] => Ok(Box::new(Ensemble::new(
            TextClassifierModel::load(a)?,
            TextClassifierModel::load(b)?,
            args.threshold,
        )?)),
        _ => Err(Error::Usage("pass one or two --model files".into())),
    }
}

fn run(cmd: Command, ctx: &Ctx) -> Result<()> {
    match cmd {
        Command::FilterHeuristics {
            input,
            output,
            audit,
            min_words,
            max_words,
            min_stopword_hits,
            disable_rules,
        } => {
            let mut cfg: HeuristicConfig = ctx.section("heuristics")?;
            if let Some(v) = min_words {
                cfg.min_words = v;
            }
            if let Some(v) = max_words {
                cfg.max_words = v;
            }
            if let Some(v) = min_stopword_hits {
                cfg.min_stopword_hits = v;
            }
            cfg.disabled_rules.extend(disable_rules);
            cfg.validate()?;
            let docs = read_documents(&input)?;
            let total = docs.len();
            let (kept, records) = heuristic_filter(docs, &cfg);
            write_documents(&output, kept.iter())?;
            if let Some(a) = audit {
                write_jsonl(a, &records)?;
            }
            log::info!("kept {} of {total}", kept.len());
        }
        Command::StripMeta {
            input,
            output,
            no_boilerplate,
            window,
            min_repeats,
        } => {
            let docs = read_documents(&input)?;
            let detector = (!no_boilerplate).then_some(BoilerplateDetector { window, min_repeats });
            write_documents(&output, strip_documents(&docs, detector).iter())?;
        }
        Command::Ngram(cmd) => run_ngram(cmd, ctx)?,
        Command::Classifier(cmd) => run_classifier(cmd, ctx)?,
        Command::Mix(cmd) => run_mix(cmd)?,
        Command::Fertility {
            tokenizer,
            treebank,
            format,
        } => {
            let tok = load_tokenizer(&tokenizer)?;
            let mut banks: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
            for spec in treebank {
                let (lang, path) = spec
                    .split_once('=')
                    .ok_or_else(|| Error::Usage(format!("--treebank expects LANG=PATH, got {spec}")))?;
                banks.entry(lang.to_string()).or_default().push(PathBuf::from(path));
            }
            let report = compute_fertility(tok.as_ref(), &banks)?;
            match format {
                ReportFormat::Json => print_json(&report),
                ReportFormat::Table => print!("{}", format_fertility_table(&[report])),
            }
        }
        Command::PackLongctx {
            input,
            output,
            tokenizer,
            max_len,
            frac_max,
            min_doc_tokens,
            separator,
            no_separator,
            frac_mode,
            pack_short,
            shuffle,
            format,
        } => {
            let mut cfg: PackingConfig = ctx.section("packing")?;
            cfg.seed = ctx.seed;
            if let Some(v) = max_len {
                cfg.max_length = v;
            }
            if let Some(v) = frac_max {
                cfg.frac_at_max = v;
            }
            if let Some(v) = min_doc_tokens {
                cfg.min_doc_tokens = v;
            }
            if separator.is_some() {
                cfg.separator = separator;
            }
            if no_separator {
                cfg.separator = None;
            }
            if let Some(m) = frac_mode {
                cfg.frac_mode = match m {
                    FracModeArg::Sequences => FracMode::Sequences,
                    FracModeArg::Tokens => FracMode::Tokens,
                };
            }
            cfg.pack_short |= pack_short;
            cfg.shuffle |= shuffle;
            let tok = load_bpe_spec(&tokenizer)?;
            let (selected, seqs) = pack_documents(read_documents(&input)?, &tok, &cfg)?;
            let format = match format {
                PackFormatArg::Jsonl => PackFormat::Jsonl,
                PackFormatArg::Binary => PackFormat::Binary,
            };
            write_packed(&seqs, &output, format)?;
            print_json(&serde_json::json!({
                "documents": selected.len(),
                "sequences": seqs.len(),
                "sequences_at_max": seqs.iter().filter(|s| s.at_max).count(),
                "packed_tokens": seqs.iter().map(|s| s.tokens.len()).sum::<usize>(),
            }));
        }
        Command::RopeCheck { base, head_dim, target } => {
            print_json(&check_context_coverage(base, head_dim, target)?);
        }
        Command::Mcf(McfCmd::Render {
            input,
            output,
            no_balance,
        }) => {
            let items: Vec<McfItem> = read_jsonl(&input)?;
            write_jsonl(&output, &render_items(&items, ctx.seed, !no_balance)?)?;
        }
        Command::Mcf(McfCmd::MixSft { plan, output, report }) => {
            let plan = MixturePlan::load(&plan)?;
            let (lines, rep) = assemble_sft_mixture(&plan)?;
            let mut text = lines.join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&output, text).map_err(|e| Error::io(&output, e))?;
            if let Some(r) = report {
                write_json(r, &rep)?;
            }
            print_json(&rep);
        }
        Command::Pipeline(PipelineCmd::Run { recipe, report }) => {
            let mut recipe = PipelineRecipe::load(&recipe)?;
            if report.is_some() {
                recipe.report = report;
            }
            let run = run_pipeline(&recipe);
            print_json(&run.report);
            if let Some(e) = run.error {
                return Err(e);
            }
        }
        Command::Pipeline(PipelineCmd::Diff { a, b }) => {
            print_json(&diff_reports(&load_report(&a)?, &load_report(&b)?)?);
        }
        Command::Flops { tokens, params } => {
            println!("{:e}", estimate_training_flops(tokens, params) as f64);
        }
    }
    Ok(())
}

fn run_ngram(cmd: NgramCmd, ctx: &Ctx) -> Result<()> {
    match cmd {
        NgramCmd::Train {
            input,
            output,
            order,
            discount,
            max_vocab,
        } => {
            let mut params: NgramParams = ctx.section("ngram")?;
            if let Some(v) = order {
                params.order = v;
            }
            if let Some(v) = discount {
                params.discount = v;
            }
            if let Some(v) = max_vocab {
                params.max_vocab = v;
            }
            let mut docs = Vec::new();
            for p in &input {
                docs.extend(read_documents(p)?);
            }
            train_ngram(&docs, &params)?.save(&output)?;
        }
        NgramCmd::Score { model, input, output } => {
            let model = NgramModel::load(&model)?;
            let docs = read_documents(&input)?;
            let rows: Vec<Value> = docs
                .iter()
                .zip(score_documents(&model, &docs))
                .map(|(d, p)| serde_json::json!({ "id": d.id, "perplexity": p }))
                .collect();
            write_jsonl(&output, &rows)?;
        }
        NgramCmd::Filter {
            model,
            input,
            output,
            dropped,
            mode,
            value,
            calibration_sample_size,
        } => {
            let mut policy: CutoffPolicy = ctx.section("cutoff")?;
            if let Some(m) = mode {
                policy.mode = match m {
                    CutoffModeArg::Absolute => CutoffMode::Absolute,
                    CutoffModeArg::Percentile => CutoffMode::Percentile,
                };
            }
            if let Some(v) = value {
                policy.value = v;
            }
            if let Some(v) = calibration_sample_size {
                policy.calibration_sample_size = v;
            }
            policy.validate()?;
            let model = NgramModel::load(&model)?;
            let out = perplexity_filter(&model, read_documents(&input)?, &policy)?;
            write_documents(&output, out.kept.iter())?;
            if let Some(d) = dropped {
                write_jsonl(d, &out.dropped)?;
            }
            print_json(&serde_json::json!({
                "bound": out.bound,
                "kept": out.kept.len(),
                "dropped": out.dropped.len(),
            }));
        }
    }
    Ok(())
}

fn run_classifier(cmd: ClassifierCmd, ctx: &Ctx) -> Result<()> {
    match cmd {
        ClassifierCmd::Train {
            input,
            output,
            buckets,
            dim,
            epochs,
            lr,
        } => {
            let mut params: TrainParams = ctx.section("classifier")?;
            if let Some(v) = buckets {
                params.hash_buckets = v;
            }
            if let Some(v) = dim {
                params.embedding_dim = v;
            }
            if let Some(v) = epochs {
                params.epochs = v;
            }
            if let Some(v) = lr {
                params.learning_rate = v;
            }
            let data: Vec<LabeledDocument> = read_jsonl(&input)?;
            train_classifier::<f32>(&data, &params, ctx.seed)?.save(&output)?;
        }
        ClassifierCmd::Score { model, input, output } => {
            let model = TextClassifierModel::load(&model)?;
            let docs = read_documents(&input)?;
            let mut rows = Vec::with_capacity(docs.len());
            for d in &docs {
                let probs = model.score_text(&d.text)?;
                rows.push(serde_json::json!({
                    "id": d.id,
                    "scores": probs,
                    "positive": model.positive_probability(&d.text)?,
                }));
            }
            write_jsonl(&output, &rows)?;
        }
        ClassifierCmd::Filter {
            scorer: args,
            input,
            output,
            dropped,
        } => {
            let s = scorer(&args)?;
            let out = quality_filter(s.as_ref(), read_documents(&input)?);
            write_documents(&output, out.kept.iter())?;
            if let Some(d) = dropped {
                write_jsonl(d, &out.dropped)?;
            }
        }
        ClassifierCmd::Eval { scorer: args, input } => {
            let s = scorer(&args)?;
            let holdout: Vec<LabeledDocument> = read_jsonl(&input)?;
            print_json(&evaluate_f1(s.as_ref(), &holdout)?);
        }
    }
    Ok(())
}

fn run_mix(cmd: MixCmd) -> Result<()> {
    match cmd {
        MixCmd::Plan {
            manifest,
            input,
            tokenizer,
            manifest_out,
            method,
            temperature,
            budget,
            max_repeats,
        } => {
            let manifest = match manifest {
                Some(p) => CorpusManifest::load(&p)?,
                None if !input.is_empty() => {
                    let tok = load_tokenizer(&tokenizer)?;
                    CorpusIndex::build(&input, tok.as_ref())?.manifest(tok.id())?
                }
                None => return Err(Error::Usage("pass --manifest or --input".into())),
            };
            if let Some(p) = manifest_out {
                manifest.save(&p)?;
            }
            match method {
                MixMethod::Proportional => print_json(&proportional_distribution::<f64>(&manifest)?),
                MixMethod::Temperature => {
                    let p: LanguageDistribution = proportional_distribution(&manifest)?;
                    print_json(&temperature_distribution(&p, temperature)?);
                }
                MixMethod::Unimax => {
                    let budget = budget.ok_or_else(|| Error::Usage("unimax needs --budget".into()))?;
                    print_json(&unimax_allocation(&manifest, budget, max_repeats)?);
                }
            }
        }
        MixCmd::Emit {
            plan,
            input,
            tokenizer,
            output,
            stats,
        } => {
            let plan = StagePlan::load(&plan)?;
            let tok = load_tokenizer(&tokenizer)?;
            let index = CorpusIndex::build(&input, tok.as_ref())?;
            let schedule = build_schedule(&plan, &index)?;
            schedule.write_jsonl(&output)?;
            let s = realized_stats(&schedule);
            if let Some(p) = stats {
                write_json(p, &s)?;
            }
            print_json(&s);
        }
        MixCmd::Stats { schedule, plan } => {
            let emissions: Vec<Emission> = read_jsonl(&schedule)?;
            if emissions.is_empty() {
                return Err(Error::data("schedule is empty"));
            }
            let stage_budgets = match plan {
                Some(p) => read_json::<StagePlan>(&p)?.stages.iter().map(|s| s.token_budget).collect(),
                None => Vec::new(),
            };
            let sched = MixSchedule {
                stage_budgets,
                emissions,
                exhausted: Vec::new(),
            };
            print_json(&realized_stats(&sched));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    let workers = if cli.global.deterministic { 1 } else { cli.global.workers };
    if workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            log::warn!("worker pool: {e}");
        }
    }
    let config = match &cli.global.config {
        Some(p) => match read_json::<Value>(p) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => Value::Null,
    };
    let ctx = Ctx {
        config,
        seed: cli.global.seed,
    };
    match run(cli.command, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
