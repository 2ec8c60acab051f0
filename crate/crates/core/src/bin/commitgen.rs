//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use commitgen::corpus::{
    self, build_vocabulary, load_parallel_corpus, load_prefix, reduce_vocabulary, split_by_file_type, LoadOptions, Reduction, Scenario,
    Side,
};
use commitgen::eval::{aggregate, parse_report_tsv, per_type_bleu, token_frequency_report, EvalError};
use commitgen::nmt::NmtError;
use commitgen::nngen::{BowIndex, NngenError, Weighting, DEFAULT_K};
use commitgen::pipeline::{
    run_experiment, train_from_config, EnsembleSpec, LoadedEnsemble, ModelDescriptor, PipelineError, TrainConfig,
};
use commitgen::sketch::{self, SketchError};
use commitgen::tokenize::{decode_bpe, BpeModel, TokenizeError};

#[derive(Parser)]
#[command(name = "commitgen", version, about = "Generate commit messages from diffs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build source and target vocabularies of a split.
    Prepare(PrepareArgs),
    /// Partition a split into per-file-type splits.
    Split(SplitArgs),
    /// Java sketch encoding.
    #[command(subcommand)]
    Sketch(SketchCommand),
    /// Byte-pair encoding.
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Train a model from a TOML config.
    Train(TrainArgs),
    /// Translate a split with a checkpoint or an ensemble.
    Predict(PredictArgs),
    /// Nearest-neighbour baseline.
    Nngen(NngenArgs),
    /// Score predictions with BLEU-4, overall and by file type.
    Evaluate(EvaluateArgs),
    /// Average several `bleu.tsv` reports.
    Aggregate(AggregateArgs),
    /// Run an experiment config end to end.
    RunExperiment(RunExperimentArgs),
    /// Most frequent tokens of one side of a split.
    Frequencies(FrequenciesArgs),
}

#[derive(Args)]
struct Load {
    /// Split prefix: reads `<prefix>.diff` and `<prefix>.msg`.
    #[arg(long, conflicts_with_all = ["diff", "msg"], required_unless_present = "diff")]
    prefix: Option<PathBuf>,
    /// Diff file, one example per line.
    #[arg(long, visible_alias = "src", visible_alias = "test-diff")]
    diff: Option<PathBuf>,
    /// Message file aligned with `--diff`.
    #[arg(long, visible_alias = "test-msg")]
    msg: Option<PathBuf>,
    /// Skip examples with an empty side instead of failing.
    #[arg(long)]
    skip_empty: bool,
}

impl Load {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            skip_empty: self.skip_empty,
        }
    }

    /// Loads diffs and messages; both are required.
    fn load(&self) -> Result<corpus::CorpusSplit> {
        let split = match (&self.prefix, &self.diff, &self.msg) {
            (Some(p), _, _) => load_prefix(p, self.options())?,
            (None, Some(d), Some(m)) => load_parallel_corpus(d, m, "input", self.options())?,
            _ => bail!("messages are required: pass --prefix or both --diff and --msg"),
        };
        if split.diagnostics.missing_headers > 0 {
            log::warn!("{} diffs without a diff header", split.diagnostics.missing_headers);
        }
        Ok(split)
    }

    /// Loads diffs; messages are optional and left empty when absent.
    fn load_sources(&self) -> Result<corpus::CorpusSplit> {
        match (&self.prefix, &self.diff, &self.msg) {
            (None, Some(d), None) => {
                let commits = corpus::read_token_lines(d)?
                    .into_iter()
                    .enumerate()
                    .map(|(i, diff)| corpus::Commit::new(i, diff, Vec::new()))
                    .collect();
                Ok(corpus::CorpusSplit::new("input", commits))
            }
            _ => self.load(),
        }
    }
}

/// Training split given as a prefix or as a diff/message pair.
#[derive(Args)]
struct TrainData {
    /// Training split prefix.
    #[arg(long = "train", visible_alias = "train-prefix", required_unless_present = "train_diff")]
    train_prefix: Option<PathBuf>,
    #[arg(long, requires = "train_msg", conflicts_with = "train_prefix")]
    train_diff: Option<PathBuf>,
    #[arg(long)]
    train_msg: Option<PathBuf>,
}

impl TrainData {
    fn load(&self) -> Result<corpus::CorpusSplit> {
        Ok(match (&self.train_prefix, &self.train_diff, &self.train_msg) {
            (Some(p), _, _) => load_prefix(p, LoadOptions::default())?,
            (None, Some(d), Some(m)) => load_parallel_corpus(d, m, "train", LoadOptions::default())?,
            _ => bail!("pass --train or both --train-diff and --train-msg"),
        })
    }
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    load: Load,
    /// Output prefix: writes `<out>.diff.vocab` and `<out>.msg.vocab`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    /// Vocabulary reduction configuration (1 or 2).
    #[arg(long)]
    reduction: Option<u8>,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    load: Load,
    #[arg(long, default_value = "top9")]
    scenario: Scenario,
    /// Directory receiving `<type>.diff` / `<type>.msg`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum SketchCommand {
    /// Replace Java identifiers by placeholders; other types pass through.
    Encode {
        #[command(flatten)]
        load: Load,
        /// Output prefix of the sketched split.
        #[arg(long, visible_alias = "out-prefix")]
        out: PathBuf,
        /// Placeholder dictionary sidecar (default `<out>.dict`).
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Encoding draws no random numbers; accepted so both directions
        /// share their flags.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Restore identifier names in predicted messages.
    Decode {
        /// Predictions, one message per line.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BpeCommand {
    /// Learn merges from token files.
    Learn {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Target symbol inventory, or a preset name (bpe1, bpe2, bpe3).
        #[arg(long)]
        vocab_size: String,
        #[arg(long)]
        out: PathBuf,
        /// One shared merge table over all inputs (default).
        #[arg(long, conflicts_with = "bpe_separate")]
        bpe_joint: bool,
        /// One merge table per input, written to `<out>.<input file name>`.
        #[arg(long)]
        bpe_separate: bool,
    },
    /// Segment a token file.
    Apply {
        #[arg(long)]
        merges: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join subword units back into tokens.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, visible_alias = "train-prefix")]
    train: PathBuf,
    #[arg(long, visible_alias = "valid-prefix")]
    valid: PathBuf,
    /// Checkpoint path; vocabularies go to `<out>.src.vocab` / `<out>.tgt.vocab`.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the model seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    load: Load,
    /// Ensemble spec (TOML).
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    ensemble: Option<PathBuf>,
    /// Single checkpoint used for every file type.
    #[arg(long, visible_alias = "ckpt")]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    beam: usize,
    #[arg(long, default_value_t = 1.0)]
    len_penalty: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NngenArgs {
    #[command(flatten)]
    train: TrainData,
    #[command(flatten)]
    load: Load,
    /// Candidates kept by cosine similarity before BLEU re-ranking.
    #[arg(long, visible_alias = "nn-k", default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    tfidf: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Reference split; file types come from its diffs.
    #[command(flatten)]
    load: Load,
    /// Also write a `bleu.tsv` report.
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

#[derive(Args)]
struct RunExperimentArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct FrequenciesArgs {
    #[command(flatten)]
    load: Load,
    #[arg(long, default_value = "msg")]
    side: String,
    #[arg(long, default_value_t = 20)]
    top: usize,
}

fn write_token_lines(path: &Path, lines: &[Vec<String>]) -> Result<()> {
    corpus::write_lines(path, lines.iter().map(|l| l.join(" ")))?;
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => {
            let split = a.load.load()?;
            let mut diff = build_vocabulary(&split, Side::Diff, a.min_count, None)?;
            let mut msg = build_vocabulary(&split, Side::Msg, a.min_count, None)?;
            if let Some(i) = a.reduction {
                let r = Reduction::from_index(i).with_context(|| format!("unknown reduction configuration {i}"))?;
                (msg, diff) = reduce_vocabulary(&msg, &diff, r);
            }
            diff.save(&suffixed(&a.out, ".diff.vocab"))?;
            msg.save(&suffixed(&a.out, ".msg.vocab"))?;
            println!("{} examples, diff vocabulary {}, message vocabulary {}", split.len(), diff.len(), msg.len());
        }
        Command::Split(a) => {
            let split = a.load.load()?;
            std::fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
            for (ft, part) in split_by_file_type(&split, a.scenario) {
                part.write(&a.out_dir.join(ft.as_str()))?;
                println!("{ft}\t{}", part.len());
            }
        }
        Command::Sketch(SketchCommand::Encode { load, out, dict, seed: _ }) => {
            let split = load.load()?;
            let mut sketched = Vec::with_capacity(split.len());
            let mut dicts = Vec::new();
            for c in &split.commits {
                if c.file_type == corpus::FileType::Java {
                    let sk = sketch::encode_sketch(c);
                    sketched.push(corpus::Commit::new(c.id, sk.sketched_diff, sk.sketched_msg));
                    dicts.push(sk.dictionary);
                } else {
                    sketched.push(c.clone());
                }
            }
            corpus::CorpusSplit::new(split.name.clone(), sketched).write(&out)?;
            let dict = dict.unwrap_or_else(|| suffixed(&out, ".dict"));
            sketch::save_dictionaries(&dict, &dicts)?;
            println!("sketched {} of {} examples", dicts.len(), split.len());
        }
        Command::Sketch(SketchCommand::Decode { pred, dict, out, seed }) => {
            let preds = corpus::read_token_lines(&pred)?;
            let dicts = sketch::load_dictionaries(&dict)?;
            let decoded: Vec<Vec<String>> = preds
                .iter()
                .enumerate()
                .map(|(i, p)| match dicts.get(&i) {
                    Some(d) => sketch::decode_sketch(p, d, &d.names(), sketch::example_seed(seed, i)),
                    None => p.clone(),
                })
                .collect();
            write_token_lines(&out, &decoded)?;
        }
        Command::Bpe(BpeCommand::Learn {
            input,
            vocab_size,
            out,
            bpe_joint: _,
            bpe_separate,
        }) => {
            let size = match commitgen::tokenize::bpe_preset(&vocab_size) {
                Some(p) => p.vocab_size,
                None => vocab_size
                    .parse()
                    .with_context(|| format!("vocabulary size '{vocab_size}' is neither a number nor a preset"))?,
            };
            if bpe_separate {
                for p in &input {
                    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    let model = BpeModel::learn(&corpus::read_token_lines(p)?, size)?;
                    model.save(&suffixed(&out, &format!(".{name}")))?;
                    println!("{name}\t{} merges", model.merges().len());
                }
            } else {
                let mut lines = Vec::new();
                for p in &input {
                    lines.extend(corpus::read_token_lines(p)?);
                }
                let model = BpeModel::learn(&lines, size)?;
                model.save(&out)?;
                println!("{} merges", model.merges().len());
            }
        }
        Command::Bpe(BpeCommand::Apply { merges, input, out }) => {
            let model = BpeModel::load(&merges)?;
            let lines: Vec<Vec<String>> = corpus::read_token_lines(&input)?.iter().map(|l| model.apply(l)).collect();
            write_token_lines(&out, &lines)?;
        }
        Command::Bpe(BpeCommand::Decode { input, out }) => {
            let mut dangling = 0;
            let lines: Vec<Vec<String>> = corpus::read_token_lines(&input)?
                .iter()
                .map(|l| {
                    let d = decode_bpe(l);
                    dangling += usize::from(d.dangling);
                    d.tokens
                })
                .collect();
            if dangling > 0 {
                log::warn!("{dangling} lines ended inside a word");
            }
            write_token_lines(&out, &lines)?;
        }
        Command::Train(a) => {
            let mut cfg = TrainConfig::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.model.seed = s;
            }
            let train = load_prefix(&a.train, LoadOptions::default())?;
            let valid = load_prefix(&a.valid, LoadOptions::default())?;
            let report = train_from_config(&cfg, &train, &valid)?;
            let ck = &report.checkpoint;
            ck.save(&a.out)?;
            ck.model.config.src_vocab.save(&suffixed(&a.out, ".src.vocab"))?;
            ck.model.config.tgt_vocab.save(&suffixed(&a.out, ".tgt.vocab"))?;
            println!(
                "ran {} steps, kept step {}{}",
                report.steps_run,
                report.best_step,
                if report.stopped_early { " (stopped early)" } else { "" }
            );
            if let Some((_, l)) = report.validation.iter().find(|(s, _)| *s == report.best_step) {
                println!("validation loss {l:.5}");
            }
        }
        Command::Predict(a) => {
            let split = a.load.load_sources()?;
            let spec = match (&a.ensemble, &a.checkpoint) {
                (Some(e), _) => EnsembleSpec::load(e)?,
                (None, Some(c)) => {
                    let mut d = ModelDescriptor::new(c);
                    d.beam = a.beam;
                    d.len_penalty = a.len_penalty;
                    EnsembleSpec::single(d)
                }
                (None, None) => bail!("either --ensemble or --checkpoint is required"),
            };
            let out = LoadedEnsemble::load(&spec)?.predict(&split, a.seed)?;
            write_token_lines(&a.out, &out.predictions)?;
            for (route, n) in &out.route_counts {
                println!("{route}\t{n}");
            }
        }
        Command::Nngen(a) => {
            let train = a.train.load()?;
            let test = a.load.load_sources()?;
            let w = if a.tfidf { Weighting::TfIdf } else { Weighting::TermFrequency };
            let index = BowIndex::build_with(&train, w)?;
            let mut preds = Vec::with_capacity(test.len());
            let mut degenerate = 0;
            for c in &test.commits {
                let r = index.generate(&c.diff_tokens, a.k)?;
                degenerate += usize::from(r.degenerate);
                preds.push(r.message);
            }
            if degenerate > 0 {
                log::warn!("{degenerate} queries share no term with the training diffs");
            }
            write_token_lines(&a.out, &preds)?;
        }
        Command::Evaluate(a) => {
            let preds = corpus::read_token_lines(&a.pred)?;
            let refs = a.load.load()?;
            let ref_msgs: Vec<Vec<String>> = refs.commits.iter().map(|c| c.msg_tokens.clone()).collect();
            let types: Vec<_> = refs.commits.iter().map(|c| c.file_type).collect();
            let report = per_type_bleu(&preds, &ref_msgs, &types)?;
            print!("{}", report.to_table());
            if let Some(p) = &a.tsv {
                report.save_tsv(p, a.run_id.as_deref())?;
            }
        }
        Command::Aggregate(a) => {
            let runs = a.reports.iter().map(|p| parse_report_tsv(p)).collect::<Result<Vec<_>, _>>()?;
            let mut out = std::io::stdout().lock();
            for row in aggregate(&runs) {
                writeln!(out, "{}\t{}\t{:.4}", row.label, row.count, row.bleu)?;
            }
        }
        Command::RunExperiment(a) => {
            let report = run_experiment(&a.config)?;
            print!("{}", report.bleu.to_table());
            println!("{:.3} ms per example", report.timing.mean_ms_per_example);
        }
        Command::Frequencies(a) => {
            let side = match a.side.as_str() {
                "diff" => Side::Diff,
                "msg" => Side::Msg,
                s => bail!("unknown side '{s}' (expected diff or msg)"),
            };
            let split = a.load.load()?;
            for (tok, n) in token_frequency_report(&split, side, a.top) {
                println!("{tok}\t{n}");
            }
        }
    }
    Ok(())
}

/// Category name of the innermost library error, if any.
fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return e.category();
        }
        if let Some(e) = cause.downcast_ref::<corpus::CorpusError>() {
            return e.category();
        }
        if let Some(e) = cause.downcast_ref::<TokenizeError>() {
            return e.category();
        }
        if let Some(e) = cause.downcast_ref::<SketchError>() {
            return e.category();
        }
        if let Some(e) = cause.downcast_ref::<NmtError>() {
            return e.category();
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return e.category();
        }
        if let Some(e) = cause.downcast_ref::<NngenError>() {
            return e.category();
        }
    }
    "Usage"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e:#}", category(&e));
            ExitCode::FAILURE
        }
    }
}
