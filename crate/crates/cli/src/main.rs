//! Command-line driver: `train`, `eval {sts|transfer|metrics}`,
//! `attack {classify|advsts}` and `plot`.
//!
//! All commands are deterministic given `--seed`. Outputs land in `--out`,
//! or under `$ROBUST_EMBED_HOME` (default `./runs`) otherwise; every output
//! directory receives the fully resolved configuration as
//! `config.resolved`. Exit codes: 0 success, 2 invalid input or
//! configuration, 3 non-finite loss.

mod config;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use robust_embed_core::attacks::{attack_classification_dataset, AttackConfig, Lexicon};
use robust_embed_core::data::{load_classification_tsv, load_corpus, load_sts_tsv, render_sts_tsv};
use robust_embed_core::error::Error;
use robust_embed_core::evaluation::{
    alignment, build_advsts, normalize_unit, spearman, sts_score, transfer_probe, uniformity,
    LogisticOptions, LogisticRegression, SentenceEncoder,
};
use robust_embed_core::report::MetricReport;
use robust_embed_core::rng::shuffled_indices;
use robust_embed_core::trainer::checkpoint::{load_model, save_checkpoint};
use robust_embed_core::trainer::{train, StepRecord, TrainSettings};
use robust_embed_core::Result;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "robust-embed",
    about = "Adversarially robust sentence embeddings: train, evaluate, attack, plot",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder on a sentence corpus.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint.
    Eval {
        #[command(subcommand)]
        what: EvalCommand,
    },
    /// Run black-box attacks against a trained checkpoint.
    Attack {
        #[command(subcommand)]
        what: AttackCommand,
    },
    /// Render report files into SVG scatter plots.
    Plot(PlotArgs),
}

/// Flags mirroring the config keys; every flag overrides file and default.
#[derive(Args, Default)]
struct OverrideArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k_steps: Option<usize>,
    #[arg(long)]
    t_steps: Option<usize>,
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, alias = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dropout_p: Option<f64>,
    #[arg(long)]
    mask_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, alias = "delta")]
    delta_threshold: Option<f64>,
    #[arg(long)]
    max_fraction_modified: Option<f64>,
    #[arg(long)]
    attack: Option<String>,
    #[arg(long, alias = "n")]
    n_attacks: Option<usize>,
    #[arg(long)]
    reset_table_each_epoch: bool,
}

impl OverrideArgs {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("epsilon", self.epsilon.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("gamma", self.gamma.map(|v| v.to_string()));
        push("rho", self.rho.map(|v| v.to_string()));
        push("lambda1", self.lambda1.map(|v| v.to_string()));
        push("lambda2", self.lambda2.map(|v| v.to_string()));
        push("tau", self.tau.map(|v| v.to_string()));
        push("k_steps", self.k_steps.map(|v| v.to_string()));
        push("t_steps", self.t_steps.map(|v| v.to_string()));
        push("norm", self.norm.clone());
        push("sigma", self.sigma.map(|v| v.to_string()));
        push("learning_rate", self.learning_rate.map(|v| v.to_string()));
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("dim", self.dim.map(|v| v.to_string()));
        push("layers", self.layers.map(|v| v.to_string()));
        push("heads", self.heads.map(|v| v.to_string()));
        push("max_len", self.max_len.map(|v| v.to_string()));
        push("dropout_p", self.dropout_p.map(|v| v.to_string()));
        push("mask_rate", self.mask_rate.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("workers", self.workers.map(|v| v.to_string()));
        push("budget", self.budget.map(|v| v.to_string()));
        push("delta_threshold", self.delta_threshold.map(|v| v.to_string()));
        push("max_fraction_modified", self.max_fraction_modified.map(|v| v.to_string()));
        push("attack", self.attack.clone());
        push("n_attacks", self.n_attacks.map(|v| v.to_string()));
        if self.reset_table_each_epoch {
            out.push(("reset_table_each_epoch".into(), "true".into()));
        }
        out
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus file, one sentence per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $ROBUST_EMBED_HOME/train or ./runs/train).
    #[arg(long)]
    out: Option<PathBuf>,
    /// STS TSV used to pick the best epoch checkpoint.
    #[arg(long)]
    val_data: Option<PathBuf>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Spearman correlation of model scores against gold similarity.
    Sts(EvalArgs),
    /// Logistic-probe accuracy on frozen embeddings.
    Transfer(TransferArgs),
    /// Alignment and uniformity of the embedding distribution.
    Metrics(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// STS TSV: `sentence_a<TAB>sentence_b<TAB>score`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Classification TSV: `text<TAB>label`.
    #[arg(long)]
    train_data: PathBuf,
    #[arg(long)]
    test_data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Subcommand)]
enum AttackCommand {
    /// Label-flip attacks on a classification task.
    Classify(ClassifyArgs),
    /// Build an adversarial STS dataset by score-deviation attacks.
    Advsts(AdvStsArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Head-training split (`text<TAB>label`).
    #[arg(long)]
    train_data: PathBuf,
    /// Attacked split (`text<TAB>label`).
    #[arg(long)]
    test_data: PathBuf,
    /// Synonym lexicon (`word<TAB>syn1,syn2,...`).
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct AdvStsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// STS TSV to transform.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Report files (metric=value lines), one point per report.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code_for(&e));
    }
}

/// 3 for a non-finite loss, 2 for any other input/config failure.
fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval { what } => match what {
            EvalCommand::Sts(args) => cmd_eval_sts(args),
            EvalCommand::Transfer(args) => cmd_eval_transfer(args),
            EvalCommand::Metrics(args) => cmd_eval_metrics(args),
        },
        Command::Attack { what } => match what {
            AttackCommand::Classify(args) => cmd_attack_classify(args),
            AttackCommand::Advsts(args) => cmd_attack_advsts(args),
        },
        Command::Plot(args) => cmd_plot(args),
    }
}

fn out_dir(explicit: Option<PathBuf>, run_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        std::env::var_os("ROBUST_EMBED_HOME")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(run_name)
    })
}

fn prepare_out(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved"), cfg.render())?;
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Input(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn write_report(dir: &Path, report: &MetricReport) -> Result<()> {
    fs::write(dir.join("report.txt"), report.to_lines())?;
    fs::write(dir.join("summary.json"), report.to_json())?;
    print!("{}", report.to_lines());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides.pairs())?;
    if args.dump_config {
        print!("{}", cfg.render());
        return Ok(());
    }
    let corpus_path = args
        .corpus
        .ok_or_else(|| Error::Input("--corpus is required (or use --dump-config)".into()))?;
    require_file(&corpus_path, "corpus")?;
    let corpus = load_corpus(&corpus_path)?;
    let val = match &args.val_data {
        Some(p) => {
            require_file(p, "validation data")?;
            Some(load_sts_tsv(p)?)
        }
        None => None,
    };

    let settings = TrainSettings {
        master_seed: cfg.seed,
        mask_rate: cfg.mask_rate,
        reset_table_each_epoch: cfg.reset_table_each_epoch,
        val,
    };
    let out = out_dir(args.out, "train");
    prepare_out(&out, &cfg)?;

    let outcome = train(&corpus, &cfg.encoder_config(0), &cfg.hyper, &settings)?;

    let mut csv = String::from(StepRecord::CSV_HEADER);
    csv.push('\n');
    for rec in &outcome.records {
        csv.push_str(&rec.to_csv_line());
        csv.push('\n');
    }
    fs::write(out.join("metrics.csv"), csv)?;
    save_checkpoint(&outcome.state, &out.join("checkpoint"))?;

    let mut report = MetricReport::new();
    for (i, mean) in outcome.epoch_mean_total.iter().enumerate() {
        report.set(&format!("epoch{}_mean_total", i + 1), *mean)?;
    }
    report.set("selected_epoch", outcome.selected_epoch as f64)?;
    if let Some(last) = outcome.records.last() {
        report.set("final_l_total", last.l_total)?;
        report.set("final_l_con", last.l_con)?;
        report.set("final_l_rtd", last.l_rtd)?;
    }
    for (i, v) in outcome.val_metrics.iter().enumerate() {
        report.set(&format!("val_spearman_epoch{}", i + 1), *v)?;
    }
    write_report(&out, &report)?;
    println!("checkpoint written to {}", out.join("checkpoint").display());
    Ok(())
}

fn cmd_eval_sts(args: EvalArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides.pairs())?;
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.data, "STS data")?;
    let model = load_model(&args.checkpoint)?;
    let data = load_sts_tsv(&args.data)?;
    let out = out_dir(args.out, "eval-sts");
    prepare_out(&out, &cfg)?;

    let mut pred = Vec::with_capacity(data.len());
    let mut gold = Vec::with_capacity(data.len());
    let mut lines = String::new();
    for ex in &data {
        let s = sts_score(&model, &ex.sentence_a, &ex.sentence_b)?;
        lines.push_str(&format!("{}\t{}\t{}\t{}\n", ex.sentence_a, ex.sentence_b, ex.gold, s));
        pred.push(s);
        gold.push(ex.gold);
    }
    fs::write(out.join("scores.tsv"), lines)?;

    let mut report = MetricReport::new();
    report.set("spearman", spearman(&pred, &gold)?)?;
    report.set("n_examples", data.len() as f64)?;
    write_report(&out, &report)
}

fn cmd_eval_transfer(args: TransferArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides.pairs())?;
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.train_data, "train data")?;
    require_file(&args.test_data, "test data")?;
    let model = load_model(&args.checkpoint)?;
    let train_set = load_classification_tsv(&args.train_data)?;
    let test_set = load_classification_tsv(&args.test_data)?;
    let out = out_dir(args.out, "eval-transfer");
    prepare_out(&out, &cfg)?;

    let accuracy = transfer_probe(&model, &train_set, &test_set, LogisticOptions::default())?;
    let mut report = MetricReport::new();
    report.set("accuracy", accuracy)?;
    report.set("n_train", train_set.len() as f64)?;
    report.set("n_test", test_set.len() as f64)?;
    write_report(&out, &report)
}

/// Positive pairs for the alignment metric: STS items at or above this gold
/// score.
const ALIGNMENT_GOLD_MIN: f64 = 4.0;

fn cmd_eval_metrics(args: EvalArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides.pairs())?;
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.data, "STS data")?;
    let model = load_model(&args.checkpoint)?;
    let data = load_sts_tsv(&args.data)?;
    let out = out_dir(args.out, "eval-metrics");
    prepare_out(&out, &cfg)?;

    let mut pairs = Vec::new();
    for ex in &data {
        if ex.gold >= ALIGNMENT_GOLD_MIN {
            let a = normalize_unit(&model.embed_one(&ex.sentence_a)?)?;
            let b = normalize_unit(&model.embed_one(&ex.sentence_b)?)?;
            pairs.push((a, b));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Input(format!(
            "no positive pairs (gold >= {ALIGNMENT_GOLD_MIN}) for alignment"
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut embeddings = Vec::new();
    for ex in &data {
        for s in [&ex.sentence_a, &ex.sentence_b] {
            if seen.insert(s.clone()) {
                embeddings.push(normalize_unit(&model.embed_one(s)?)?);
            }
        }
    }

    let mut report = MetricReport::new();
    report.set("alignment", alignment(&pairs)?)?;
    report.set("uniformity", uniformity(&embeddings)?)?;
    report.set("n_positive_pairs", pairs.len() as f64)?;
    report.set("n_embeddings", embeddings.len() as f64)?;
    write_report(&out, &report)
}

fn cmd_attack_classify(args: ClassifyArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides.pairs())?;
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.train_data, "train data")?;
    require_file(&args.test_data, "test data")?;
    require_file(&args.lexicon, "lexicon")?;
    let model = load_model(&args.checkpoint)?;
    let train_set = load_classification_tsv(&args.train_data)?;
    let test_set = load_classification_tsv(&args.test_data)?;
    let lexicon = Lexicon::load(&args.lexicon)?;
    let out = out_dir(args.out, "attack-classify");
    prepare_out(&out, &cfg)?;

    // seeded sample of n_attacks examples
    let mut order = shuffled_indices(test_set.len(), cfg.seed, "attack-sample", &[]);
    order.truncate(cfg.n_attacks.min(test_set.len()));
    let sample: Vec<(String, usize)> = order.iter().map(|&i| test_set[i].clone()).collect();

    let head = fit_head(&model, &train_set)?;
    let attack_cfg =
        AttackConfig { max_fraction_modified: cfg.max_fraction_modified, ..AttackConfig::default() };
    let summary = attack_classification_dataset(
        &model,
        &head,
        &sample,
        cfg.attack,
        &lexicon,
        cfg.budget,
        &attack_cfg,
        cfg.workers,
    )?;

    let mut lines =
        String::from("idx\teligible\tsuccess\tqueries\twords_modified\toriginal\tperturbed\n");
    for (i, outcome) in summary.outcomes.iter().enumerate() {
        match outcome {
            Some(res) => lines.push_str(&format!(
                "{i}\ttrue\t{}\t{}\t{}\t{}\t{}\n",
                res.success, res.queries, res.words_modified, res.original, res.perturbed
            )),
            None => lines.push_str(&format!("{i}\tfalse\t\t\t\t{}\t\n", sample[i].0)),
        }
    }
    fs::write(out.join("results.tsv"), lines)?;

    let mut report = MetricReport::new();
    report.set("success_rate", summary.success_rate)?;
    report.set("mean_queries", summary.mean_queries)?;
    report.set("original_accuracy", summary.original_accuracy)?;
    report.set("accuracy_reduction", summary.accuracy_reduction)?;
    report.set("n_total", summary.total as f64)?;
    report.set("n_eligible", summary.eligible as f64)?;
    report.set("n_successes", summary.successes as f64)?;
    write_report(&out, &report)
}

fn fit_head(
    model: &dyn SentenceEncoder,
    train_set: &[(String, usize)],
) -> Result<LogisticRegression> {
    let features: Vec<Vec<f64>> =
        train_set.iter().map(|(t, _)| model.embed_one(t)).collect::<Result<_>>()?;
    let labels: Vec<usize> = train_set.iter().map(|(_, y)| *y).collect();
    LogisticRegression::fit(&features, &labels, LogisticOptions::default())
}

fn cmd_attack_advsts(args: AdvStsArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides.pairs())?;
    require_file(&args.checkpoint, "checkpoint")?;
    require_file(&args.data, "STS data")?;
    require_file(&args.lexicon, "lexicon")?;
    let model = load_model(&args.checkpoint)?;
    let data = load_sts_tsv(&args.data)?;
    let lexicon = Lexicon::load(&args.lexicon)?;
    let out = out_dir(args.out, "attack-advsts");
    prepare_out(&out, &cfg)?;

    let attack_cfg =
        AttackConfig { max_fraction_modified: cfg.max_fraction_modified, ..AttackConfig::default() };
    let outcome = build_advsts(
        &model,
        &data,
        &lexicon,
        cfg.delta_threshold,
        cfg.budget,
        &attack_cfg,
        cfg.workers,
    )?;

    fs::write(out.join("advsts.tsv"), render_sts_tsv(&outcome.dataset))?;
    let mut lines = String::from("idx\tsuccess\tqueries\twords_modified\toriginal\tperturbed\n");
    for (i, res) in outcome.results.iter().enumerate() {
        lines.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}\t{}\n",
            res.success, res.queries, res.words_modified, res.original, res.perturbed
        ));
    }
    fs::write(out.join("results.tsv"), lines)?;

    let mut report = MetricReport::new();
    report.set("success_rate", outcome.success_rate)?;
    report.set("mean_queries", outcome.mean_queries)?;
    report.set("delta_threshold", cfg.delta_threshold)?;
    report.set("n_examples", data.len() as f64)?;
    write_report(&out, &report)
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let mut align_points: Vec<(String, f64, f64)> = Vec::new();
    let mut query_points: Vec<(String, f64, f64)> = Vec::new();
    for path in &args.reports {
        require_file(path, "report")?;
        let report = MetricReport::load(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        if let (Some(u), Some(a)) = (report.get("uniformity"), report.get("alignment")) {
            align_points.push((label.clone(), u, a));
        }
        if let (Some(q), Some(ar)) = (report.get("mean_queries"), report.get("accuracy_reduction"))
        {
            query_points.push((label, ar, q));
        }
    }
    if align_points.is_empty() && query_points.is_empty() {
        return Err(Error::Input(
            "no plottable metrics: need alignment+uniformity or mean_queries+accuracy_reduction"
                .into(),
        ));
    }
    let out = out_dir(args.out, "plot");
    fs::create_dir_all(&out)?;
    if !align_points.is_empty() {
        let rendered = svg::scatter_svg(
            &svg::ScatterSpec {
                title: "Embedding distribution",
                x_label: "uniformity",
                y_label: "alignment",
                hint: "lower-left is better",
            },
            &align_points,
        );
        fs::write(out.join("alignment_uniformity.svg"), rendered)?;
        println!("wrote {}", out.join("alignment_uniformity.svg").display());
    }
    if !query_points.is_empty() {
        let rendered = svg::scatter_svg(
            &svg::ScatterSpec {
                title: "Attack cost vs damage",
                x_label: "accuracy reduction",
                y_label: "mean queries",
                hint: "top-left is better",
            },
            &query_points,
        );
        fs::write(out.join("queries_accuracy.svg"), rendered)?;
        println!("wrote {}", out.join("queries_accuracy.svg").display());
    }
    Ok(())
}
