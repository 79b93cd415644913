use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use judgekit_core::augmentation::load_paraphrase_pool;
use judgekit_core::dataset::{
    labeled_pairs, load_annotations, load_classification, load_items, load_labels, write_jsonl,
};
use judgekit_core::judge::{
    load_runs, run_classifier, save_runs, AggregateOptions, RunAggregation, RunBundle, RunResult,
};
use judgekit_core::prompt::CLASSIFICATION_INSTRUCTION;
use judgekit_core::{
    aggregate_classification, aggregate_runs, augment_dataset, default_sps_rubric,
    export_training_jsonl, reports_from_results, run_judge, split_train_test, AugmentationConfig,
    AugmentedExample, CriterionPooling, JudgeRunConfig, Metric, PromptTemplate, Rubric,
    SystemResult, TrainingExample,
};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "judgekit",
    version,
    about = "Rubric judge evaluation, agreement and training-data tools"
)]
struct Cli {
    /// Rubric JSON file; defaults to the built-in six-criterion rubric.
    #[arg(long, global = true)]
    rubric: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Augment labeled items and optionally split them into train/test JSONL.
    Augment(AugmentArgs),
    /// Write prompt/completion training JSONL without augmentation.
    Export(ExportArgs),
    /// Score items with a judge model behind a chat-completions endpoint.
    RunJudge(RunJudgeArgs),
    /// Compute Krippendorff's alpha between human raters and saved judge runs.
    Agreement(AgreementArgs),
    /// Label classification texts with a model behind a chat-completions endpoint.
    RunClassifier(RunClassifierArgs),
    /// Score saved classifier runs against gold labels.
    EvalClassification(EvalClassificationArgs),
    /// Combine saved system results into agreement/classification tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct AugmentArgs {
    /// Evaluation items (JSONL).
    #[arg(long = "in")]
    input: PathBuf,
    /// Human annotations (JSONL or CSV); each scored record becomes one example.
    #[arg(long)]
    annotations: PathBuf,
    /// Augmented examples (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Token dropout probability.
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    /// Augmented variants per example.
    #[arg(long, default_value_t = 3)]
    variants: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep every original and its variants on the same side of the split.
    #[arg(long)]
    group_aware: bool,
    /// Disable component reordering.
    #[arg(long)]
    no_permute: bool,
    /// Instruction templates, one per line; defaults to the built-in pool.
    #[arg(long)]
    paraphrase_pool: Option<PathBuf>,
    /// Training JSONL for the train side; requires --test-out.
    #[arg(long, requires = "test_out")]
    train_out: Option<PathBuf>,
    /// Training JSONL for the test side; requires --train-out.
    #[arg(long, requires = "train_out")]
    test_out: Option<PathBuf>,
    /// Fraction of examples on the train side.
    #[arg(long, default_value_t = 0.9)]
    ratio: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EndpointArgs {
    /// Full chat-completions URL.
    #[arg(long)]
    endpoint: String,
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 0.0)]
    temp: f64,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File whose contents are prepended to every prompt.
    #[arg(long)]
    prefix_file: Option<PathBuf>,
    /// Output directory for runs.json and audit.jsonl.
    #[arg(long)]
    out: PathBuf,
}

impl EndpointArgs {
    fn config(&self) -> Result<JudgeRunConfig> {
        let prompt_prefix = match &self.prefix_file {
            Some(p) => Some(
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            ),
            None => None,
        };
        Ok(JudgeRunConfig {
            api_key_env_var: self.api_key_env.clone(),
            temperature: self.temp,
            num_runs: self.runs,
            max_concurrency: self.concurrency,
            request_timeout_secs: self.timeout,
            max_retries: self.retries,
            seed: self.seed,
            prompt_prefix,
            ..JudgeRunConfig::new(self.endpoint.clone(), self.model.clone())
        })
    }
}

#[derive(Args)]
struct RunJudgeArgs {
    #[arg(long)]
    items: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Args)]
struct AgreementArgs {
    /// Human annotations (JSONL or CSV).
    #[arg(long)]
    annotations: PathBuf,
    /// Directory (or runs.json) written by run-judge. Without it, agreement
    /// among the human raters alone is reported.
    #[arg(long)]
    runs: Option<PathBuf>,
    /// System name used in reports; defaults to the judge model name.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = Metric::Ordinal)]
    metric: Metric,
    /// One alpha per criterion, averaged, instead of pooling criteria.
    #[arg(long)]
    per_criterion: bool,
    /// Treat every run as an extra rater in one matrix instead of averaging per-run alphas.
    #[arg(long)]
    pool_runs: bool,
    /// Where to write the system result JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunClassifierArgs {
    /// Classification data: TSV (text, label indices, annotator) or JSONL.
    #[arg(long)]
    data: PathBuf,
    /// Label names, one per line; the line number is the label index.
    #[arg(long)]
    labels: PathBuf,
    /// Instruction template with a {labels} slot; defaults to the built-in one.
    #[arg(long)]
    instruction: Option<PathBuf>,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Args)]
struct EvalClassificationArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Directory (or runs.json) written by run-classifier.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// System result files.
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Output path stem; `.json` and `.txt` files are written next to it.
    #[arg(long)]
    out: PathBuf,
}

fn load_rubric(path: Option<&Path>) -> Result<Rubric> {
    match path {
        None => Ok(default_sps_rubric()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing rubric {}", p.display()))
        }
    }
}

/// `report` and `report.json` both yield `report.json` / `report.txt`.
fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let stem = match stem.extension().and_then(|e| e.to_str()) {
        Some("json" | "txt") => stem.with_extension(""),
        _ => stem.to_path_buf(),
    };
    let mut s = stem.into_os_string();
    s.push(ext);
    PathBuf::from(s)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Runtime::new()?)
}

fn summarize_runs(runs: &[RunResult]) {
    for run in runs {
        let retried: u32 = run.retries.values().sum();
        eprintln!(
            "run {}: {} records, {} failures, {} retries",
            run.run_index,
            run.records.len(),
            run.failures.len(),
            retried
        );
    }
}

fn augment(args: AugmentArgs, rubric: &Rubric) -> Result<()> {
    let items =
        load_items(&args.input).with_context(|| format!("loading {}", args.input.display()))?;
    let annotations = load_annotations(&args.annotations, rubric)
        .with_context(|| format!("loading {}", args.annotations.display()))?;
    let pairs = labeled_pairs(&items, &annotations)?;
    let paraphrase_pool = match &args.paraphrase_pool {
        Some(p) => load_paraphrase_pool(p).with_context(|| format!("loading {}", p.display()))?,
        None => AugmentationConfig::default().paraphrase_pool,
    };
    let cfg = AugmentationConfig {
        paraphrase_pool,
        permute_components: !args.no_permute,
        dropout_probability: args.p,
        variants_per_item: args.variants,
        seed: args.seed,
    };
    let out = augment_dataset(&pairs, &PromptTemplate::canonical(), rubric, &cfg)?;
    write_jsonl(&out, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "{} examples ({} inputs) -> {}",
        out.len(),
        pairs.len(),
        args.out.display()
    );

    if let (Some(train_out), Some(test_out)) = (&args.train_out, &args.test_out) {
        let (train, test) = split_train_test(&out, args.ratio, args.seed, args.group_aware)?;
        let to_examples = |xs: &[AugmentedExample]| {
            xs.iter()
                .map(AugmentedExample::to_training_example)
                .collect::<Vec<TrainingExample>>()
        };
        write_jsonl(&to_examples(&train), train_out)?;
        write_jsonl(&to_examples(&test), test_out)?;
        eprintln!("split: {} train, {} test", train.len(), test.len());
    }
    Ok(())
}

fn export(args: ExportArgs, rubric: &Rubric) -> Result<()> {
    let items =
        load_items(&args.items).with_context(|| format!("loading {}", args.items.display()))?;
    let annotations = load_annotations(&args.annotations, rubric)
        .with_context(|| format!("loading {}", args.annotations.display()))?;
    let pairs = labeled_pairs(&items, &annotations)?;
    let n = export_training_jsonl(&pairs, &PromptTemplate::canonical(), rubric, &args.out)?;
    eprintln!("{n} examples -> {}", args.out.display());
    Ok(())
}

fn run_judge_cmd(args: RunJudgeArgs, rubric: &Rubric) -> Result<()> {
    let items =
        load_items(&args.items).with_context(|| format!("loading {}", args.items.display()))?;
    let cfg = args.endpoint.config()?;
    let runs = runtime()?.block_on(run_judge(
        &items,
        &PromptTemplate::canonical(),
        rubric,
        &cfg,
    ))?;
    summarize_runs(&runs);
    save_runs(&RunBundle { config: cfg, runs }, &args.endpoint.out)?;
    Ok(())
}

fn write_result(result: &SystemResult, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => result
            .save(p)
            .with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{}", serde_json::to_string_pretty(result)?);
            Ok(())
        }
    }
}

fn agreement(args: AgreementArgs, rubric: &Rubric) -> Result<()> {
    let humans = load_annotations(&args.annotations, rubric)
        .with_context(|| format!("loading {}", args.annotations.display()))?;
    let opts = AggregateOptions {
        criterion_pooling: if args.per_criterion {
            CriterionPooling::PerCriterion
        } else {
            CriterionPooling::Pooled
        },
        run_aggregation: if args.pool_runs {
            RunAggregation::Pooled
        } else {
            RunAggregation::MeanOfRuns
        },
    };
    let (name, runs) = match &args.runs {
        Some(dir) => {
            let bundle =
                load_runs(dir).with_context(|| format!("loading runs from {}", dir.display()))?;
            (
                args.name.clone().unwrap_or(bundle.config.model_name),
                bundle.runs,
            )
        }
        None => (
            args.name.clone().unwrap_or_else(|| "human".into()),
            Vec::new(),
        ),
    };
    let agg = aggregate_runs(&runs, &humans, rubric, args.metric, opts)?;
    eprintln!(
        "{name}: {} alpha {:.4} ± {:.4} over {} run(s)",
        agg.metric, agg.mean_alpha, agg.std_alpha, agg.n_runs
    );
    write_result(
        &SystemResult::Agreement {
            system_name: name,
            agreement: agg,
        },
        args.out.as_deref(),
    )
}

fn run_classifier_cmd(args: RunClassifierArgs) -> Result<()> {
    let labels =
        load_labels(&args.labels).with_context(|| format!("loading {}", args.labels.display()))?;
    let data = load_classification(&args.data, &labels)
        .with_context(|| format!("loading {}", args.data.display()))?;
    if data.skipped > 0 {
        eprintln!(
            "skipped {} of {} rows with more than one label",
            data.skipped, data.rows
        );
    }
    let instruction = match &args.instruction {
        Some(p) => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => CLASSIFICATION_INSTRUCTION.to_owned(),
    };
    let cfg = args.endpoint.config()?;
    let runs = runtime()?.block_on(run_classifier(&data.records, &instruction, &labels, &cfg))?;
    summarize_runs(&runs);
    save_runs(&RunBundle { config: cfg, runs }, &args.endpoint.out)?;
    Ok(())
}

fn eval_classification(args: EvalClassificationArgs) -> Result<()> {
    let labels =
        load_labels(&args.labels).with_context(|| format!("loading {}", args.labels.display()))?;
    let data = load_classification(&args.data, &labels)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let bundle = load_runs(&args.runs)
        .with_context(|| format!("loading runs from {}", args.runs.display()))?;
    let agg = aggregate_classification(&bundle.runs, &data.records, &labels)?;
    let name = args.name.unwrap_or(bundle.config.model_name);
    eprintln!(
        "{name}: accuracy {:.4}, macro-F1 {:.4} over {} run(s)",
        agg.accuracy_mean,
        agg.macro_f1_mean,
        agg.per_run.len()
    );
    write_result(
        &SystemResult::Classification {
            system_name: name,
            classification: agg,
        },
        args.out.as_deref(),
    )
}

fn report(args: ReportArgs) -> Result<()> {
    let mut results = Vec::with_capacity(args.input.len());
    for p in &args.input {
        results.push(SystemResult::load(p).with_context(|| format!("loading {}", p.display()))?);
    }
    let mut seen = std::collections::BTreeSet::new();
    for r in &results {
        if !seen.insert(r.system_name()) {
            bail!(
                "system {:?} appears in more than one result file",
                r.system_name()
            );
        }
    }
    let set = reports_from_results(&results)?;
    let json = with_suffix(&args.out, ".json");
    let txt = with_suffix(&args.out, ".txt");
    std::fs::write(&json, set.to_json()).with_context(|| format!("writing {}", json.display()))?;
    std::fs::write(&txt, set.to_text()).with_context(|| format!("writing {}", txt.display()))?;
    print!("{}", set.to_text());
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let rubric = load_rubric(cli.rubric.as_deref())?;
    match cli.command {
        Command::Augment(a) => augment(a, &rubric),
        Command::Export(a) => export(a, &rubric),
        Command::RunJudge(a) => run_judge_cmd(a, &rubric),
        Command::Agreement(a) => agreement(a, &rubric),
        Command::RunClassifier(a) => run_classifier_cmd(a),
        Command::EvalClassification(a) => eval_classification(a),
        Command::Report(a) => report(a),
    }
}
