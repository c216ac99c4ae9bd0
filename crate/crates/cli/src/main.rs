//! `crl`: build class-representative models from feature bundles, classify
//! with them, and compare the geometry of two models.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when an input file
//! or value is rejected.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use crl_core::analytics::{
    profile_with_id, render_comparison, render_histogram, render_profile, similarity_histogram,
};
use crl_core::evaluation::parse_counts;
use crl_core::{
    build_model, classify_batch, compare_domains, load_model, merge_models, read_bundle,
    run_instance_curve, run_task_comparison, save_model, split_bundle, synth_bundle, with_threads,
    write_bundle, BuildOptions, CountSetting, CrModel, FeatureBundle, GcsMode, PoolMode,
    PoolingSpec, Shape, SynthSpec, TransferThresholds,
};
use log::info;

#[derive(Debug, Parser)]
#[command(
    name = "crl",
    version,
    about = "Class-representative feature-space classifier"
)]
struct Cli {
    /// Worker threads; results are identical for any value. Defaults to all cores.
    #[arg(long, global = true, env = "CRL_THREADS")]
    threads: Option<usize>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic feature bundle.
    Synth(SynthArgs),
    /// Build a model from a feature bundle.
    Build(BuildArgs),
    /// Classify every record of a bundle and write the ranked predictions.
    Infer(InferArgs),
    /// Run the instance-count curve and, with --model, the task comparison.
    Eval(EvalArgs),
    /// Profile one model, or compare two.
    Analyze(AnalyzeArgs),
    /// Merge two models.
    Merge(MergeArgs),
    /// Stratified seeded train/test split of a bundle.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    /// Feature-map shape as HxWxC.
    #[arg(long, default_value = "1x1x64")]
    shape: Shape,
    /// Minimum distance between class means, in units of the noise deviation.
    #[arg(long, default_value_t = 6.0)]
    sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    features: PathBuf,
    /// Use only the first N records of each class.
    #[arg(long)]
    max_per_class: Option<usize>,
    /// Pool every instance before averaging.
    #[arg(long, value_parser = ["avg", "max", "min"])]
    pool: Option<String>,
    /// Pooling window as FhxFw (or F).
    #[arg(long, default_value = "2x2", requires = "pool")]
    filter: String,
    /// Pooling stride as ShxSw (or S).
    #[arg(long, default_value = "2x2", requires = "pool")]
    stride: String,
    /// Network the features came from, recorded in the model.
    #[arg(long)]
    source_env: Option<String>,
    /// Layer the features came from, recorded in the model.
    #[arg(long)]
    layer: Option<String>,
    /// Prepended to every class name, e.g. to keep a source model's classes
    /// distinct from a target's.
    #[arg(long)]
    prefix: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Further models whose classes join the candidate set.
    #[arg(long)]
    merge: Vec<PathBuf>,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 1)]
    topk: usize,
    /// Predictions CSV: index, true label, then (class, score) pairs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Source model; enables the target-only versus source-plus-target comparison.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Further source models merged into --model.
    #[arg(long, requires = "model")]
    merge: Vec<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Per-class training budgets; a row using every instance is always added.
    #[arg(long, default_value = "1,2,3,4,5,6,7,8,9,10,all", value_parser = counts_arg)]
    counts: Counts,
    #[arg(long, default_value = "1,5", value_parser = k_list_arg)]
    topk: KList,
    /// Recorded in the report header.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Text report; the CSV form goes to the same path with `.csv` appended.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Second model to compare against.
    #[arg(long)]
    model_b: Option<PathBuf>,
    /// Aggregation of each class's similarities to the others.
    #[arg(long, default_value = "mean", value_parser = ["mean", "sum"])]
    gcs: String,
    /// KS thresholds LOW,HIGH for heterogeneous and negative transfer.
    #[arg(long, default_value = "0.05,0.3")]
    thresholds: TransferThresholds,
    /// Also write a 50-bin histogram of pairwise similarities.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// Exactly two input models.
    #[arg(long = "in", required = true, num_args = 1)]
    inputs: Vec<PathBuf>,
    /// Prefix for class names of the second model that collide with the first.
    #[arg(long)]
    prefix_b: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
}

#[derive(Debug, Clone)]
struct Counts(Vec<CountSetting>);

#[derive(Debug, Clone)]
struct KList(Vec<usize>);

fn counts_arg(s: &str) -> Result<Counts, String> {
    parse_counts(s).map(Counts).map_err(|e| e.to_string())
}

fn k_list_arg(s: &str) -> Result<KList, String> {
    s.split(',')
        .map(|p| match p.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k),
            _ => Err(format!("{p:?} is not a positive integer")),
        })
        .collect::<Result<_, _>>()
        .map(KList)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let threads = cli.threads;
    let outcome = with_threads(threads, move || run(cli.command))
        .context("--threads")
        .and_then(|r| r);
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Build(a) => build(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
        Command::Merge(a) => merge(a),
        Command::Split(a) => split(a),
    }
}

fn load_bundle(flag: &str, path: &Path) -> Result<FeatureBundle> {
    let t = Instant::now();
    let b = read_bundle(path).with_context(|| format!("{flag} {}", path.display()))?;
    info!(
        "read {} records from {} in {:?}",
        b.len(),
        path.display(),
        t.elapsed()
    );
    Ok(b)
}

fn load(flag: &str, path: &Path) -> Result<CrModel> {
    load_model(path).with_context(|| format!("{flag} {}", path.display()))
}

/// Loads `first` and folds every `--merge` model into it.
fn load_merged(first: &Path, rest: &[PathBuf]) -> Result<CrModel> {
    let mut model = load("--model", first)?;
    for path in rest {
        let other = load("--merge", path)?;
        model =
            merge_models(&model, &other).with_context(|| format!("--merge {}", path.display()))?;
    }
    Ok(model)
}

fn write_file(flag: &str, path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("{flag} {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        num_classes: a.classes,
        per_class: a.per_class,
        shape: a.shape,
        separation: a.sep,
        seed: a.seed,
    };
    let bundle = synth_bundle(&spec).context("synth")?;
    write_bundle(&bundle, &a.out).with_context(|| format!("--out {}", a.out.display()))?;
    println!(
        "wrote {} records, {} classes, dim {}",
        bundle.len(),
        bundle.labels().len(),
        bundle.dim()
    );
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let pooling = match &a.pool {
        None => None,
        Some(mode) => {
            let mode: PoolMode = mode.parse().context("--pool")?;
            let filter = crl_core::pooling::parse_pair(&a.filter).context("--filter")?;
            let stride = crl_core::pooling::parse_pair(&a.stride).context("--stride")?;
            Some(PoolingSpec::new(mode, filter, stride).context("--filter/--stride")?)
        }
    };
    if a.max_per_class == Some(0) {
        bail!("--max-per-class must be at least 1");
    }
    let bundle = load_bundle("--features", &a.features)?;
    let opts = BuildOptions {
        max_per_class: a.max_per_class,
        pooling,
        source_env: a.source_env,
        layer: a.layer,
    };
    let t = Instant::now();
    let mut model = build_model(&bundle, &opts)
        .with_context(|| format!("--features {}", a.features.display()))?;
    if let Some(prefix) = &a.prefix {
        model = model.with_prefix(prefix).context("--prefix")?;
    }
    info!("built {} representatives in {:?}", model.len(), t.elapsed());
    save_model(&model, &a.out).with_context(|| format!("--out {}", a.out.display()))?;
    println!(
        "model: {} classes, dim {} ({})",
        model.len(),
        model.dim(),
        model.shape()
    );
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let model = load_merged(&a.model, &a.merge)?;
    let bundle = load_bundle("--features", &a.features)?;
    if a.topk == 0 || a.topk > model.len() {
        bail!(
            "--topk {} outside 1..={} (model classes)",
            a.topk,
            model.len()
        );
    }
    let t = Instant::now();
    let batch = classify_batch(&bundle, &model, a.topk)
        .with_context(|| format!("--features {}", a.features.display()))?;
    info!("classified {} records in {:?}", batch.len(), t.elapsed());

    let file = File::create(&a.out).with_context(|| format!("--out {}", a.out.display()))?;
    let mut w = BufWriter::new(file);
    batch
        .write_csv(&mut w)
        .with_context(|| format!("--out {}", a.out.display()))?;
    w.flush()
        .with_context(|| format!("--out {}", a.out.display()))?;

    println!("records: {}", batch.len());
    let mut ks = vec![1];
    if a.topk > 1 {
        ks.push(a.topk);
    }
    for k in ks {
        match batch.accuracy(k) {
            Some(acc) => println!("top-{k}: {acc:.4}"),
            None => println!("top-{k}: N/A"),
        }
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let train = load_bundle("--train", &a.train)?;
    let test = load_bundle("--test", &a.test)?;
    let curve = run_instance_curve(&train, &test, &a.counts.0, &a.topk.0, a.seed)
        .context("--train/--test")?;
    log_timings("instance curve", &curve);
    let mut text = curve.render_text();
    let mut csv = curve.render_csv();

    if let Some(model_path) = &a.model {
        let source = load_merged(model_path, &a.merge)?;
        let cmp =
            run_task_comparison(&source, &train, &test, &a.topk.0, a.seed).context("--model")?;
        log_timings("task comparison", &cmp);
        text.push('\n');
        text.push_str(&cmp.render_text());
        csv.push('\n');
        csv.push_str(&cmp.render_csv());
    }

    let mut csv_path = a.out.clone().into_os_string();
    csv_path.push(".csv");
    write_file("--out", &a.out, &text)?;
    write_file("--out", Path::new(&csv_path), &csv)?;
    print!("{text}");
    Ok(())
}

fn log_timings(what: &str, r: &crl_core::ExperimentReport) {
    info!(
        "{what}: ingest {:?}, build {:?}, infer {:?}",
        r.timings.ingest, r.timings.build, r.timings.infer
    );
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let gcs: GcsMode = a.gcs.parse().context("--gcs")?;
    let model = load("--model", &a.model)?;
    let id_a = model.metadata().built_from.clone();
    let pa = profile_with_id(&model, id_a, gcs)
        .with_context(|| format!("--model {}", a.model.display()))?;

    let (report, target_pairs) = match &a.model_b {
        None => (render_profile(&pa), Vec::new()),
        Some(path) => {
            let other = load("--model-b", path)?;
            let id_b = other.metadata().built_from.clone();
            let pb = profile_with_id(&other, id_b, gcs)
                .with_context(|| format!("--model-b {}", path.display()))?;
            let ks = compare_domains(&pa, &pb, &a.thresholds).context("--model-b")?;
            (render_comparison(&pa, &pb, &ks), pb.pair_similarities)
        }
    };
    write_file("--out", &a.out, &report)?;
    if let Some(path) = &a.histogram {
        let bins = similarity_histogram(&pa.pair_similarities, &target_pairs);
        write_file("--histogram", path, &render_histogram(&bins))?;
    }
    print!("{report}");
    Ok(())
}

fn merge(a: MergeArgs) -> Result<()> {
    let [first, second] = a.inputs.as_slice() else {
        bail!("--in must be given exactly twice, got {}", a.inputs.len());
    };
    let ma = load("--in", first)?;
    let mut mb = load("--in", second)?;
    if let Some(prefix) = &a.prefix_b {
        mb = mb.prefix_collisions(&ma, prefix).context("--prefix-b")?;
    }
    let merged = merge_models(&ma, &mb).with_context(|| format!("--in {}", second.display()))?;
    save_model(&merged, &a.out).with_context(|| format!("--out {}", a.out.display()))?;
    println!("model: {} classes, dim {}", merged.len(), merged.dim());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let bundle = load_bundle("--features", &a.features)?;
    let (train, test) = split_bundle(&bundle, a.ratio, a.seed).context("--ratio")?;
    write_bundle(&train, &a.out_train)
        .with_context(|| format!("--out-train {}", a.out_train.display()))?;
    write_bundle(&test, &a.out_test)
        .with_context(|| format!("--out-test {}", a.out_test.display()))?;
    println!(
        "train: {} records, test: {} records",
        train.len(),
        test.len()
    );
    Ok(())
}
