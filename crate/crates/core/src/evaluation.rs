//! Experiment protocols: accuracy as the per-class instance budget grows,
//! target-only versus source-plus-target recognition, and per-class accuracy
//! summaries.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::FeatureBundle;
use crate::error::{CrlError, Result};
use crate::inference::{classify_batch, BatchResult};
use crate::model::{build_model, merge_models, BuildOptions, CrModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CountSetting {
    Limit(usize),
    All,
}

impl fmt::Display for CountSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountSetting::Limit(n) => write!(f, "{n}"),
            CountSetting::All => f.write_str("all"),
        }
    }
}

impl FromStr for CountSetting {
    type Err = CrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(CountSetting::All),
            n => match n.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(CountSetting::Limit(v)),
                _ => Err(CrlError::InvalidArgument(format!(
                    "count {s:?} must be a positive integer or 'all'"
                ))),
            },
        }
    }
}

/// Parses a comma-separated list such as `1,2,5,all`.
pub fn parse_counts(s: &str) -> Result<Vec<CountSetting>> {
    s.split(',').map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub setting: String,
    /// `(k, top-k accuracy)`; `None` when the test set is empty.
    pub topk: Vec<(usize, Option<f64>)>,
}

impl ReportRow {
    fn from_batch(setting: String, batch: &BatchResult, k_list: &[usize]) -> Self {
        let topk = k_list
            .iter()
            .map(|&k| (k, batch.accuracy(k.min(batch.k))))
            .collect();
        Self { setting, topk }
    }

    pub fn accuracy(&self, k: usize) -> Option<f64> {
        self.topk
            .iter()
            .find(|(kk, _)| *kk == k)
            .and_then(|(_, a)| *a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub per_class: BTreeMap<String, f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

/// Top-1 accuracy per true class. Classes without test records are absent.
pub fn per_class_accuracy(batch: &BatchResult) -> Option<ClassAccuracy> {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (pred, label) in batch.predictions.iter().zip(&batch.true_labels) {
        let entry = tally.entry(label.as_str()).or_default();
        entry.1 += 1;
        if pred.top1() == label {
            entry.0 += 1;
        }
    }
    if tally.is_empty() {
        return None;
    }
    let per_class: BTreeMap<String, f64> = tally
        .into_iter()
        .map(|(name, (hit, total))| (name.to_string(), hit as f64 / total as f64))
        .collect();
    let n = per_class.len() as f64;
    let mean = per_class.values().sum::<f64>() / n;
    let var = per_class
        .values()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n;
    let min = per_class.values().cloned().fold(f64::INFINITY, f64::min);
    let max = per_class
        .values()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    Some(ClassAccuracy {
        per_class,
        mean,
        std_dev: var.sqrt(),
        min,
        max,
    })
}

/// Wall-clock time per phase. Informational only; never written to report files.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub ingest: Duration,
    pub build: Duration,
    pub infer: Duration,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub protocol: String,
    pub seed: u64,
    /// Full parameterisation, echoed in the report header.
    pub params: Vec<(String, String)>,
    pub k_list: Vec<usize>,
    pub rows: Vec<ReportRow>,
    /// From the row that uses every training instance (or the target-only row).
    pub per_class: Option<ClassAccuracy>,
    pub timings: PhaseTimings,
}

impl ExperimentReport {
    pub fn row(&self, setting: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    fn header_line(&self) -> String {
        let mut line = format!("# protocol={} seed={}", self.protocol, self.seed);
        for (k, v) in &self.params {
            let _ = write!(line, " {k}={v}");
        }
        line
    }

    /// Human-readable table.
    pub fn render_text(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        let width = self
            .rows
            .iter()
            .map(|r| r.setting.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let _ = write!(out, "{:<width$}", "setting");
        for k in &self.k_list {
            let _ = write!(out, "  {:>8}", format!("top-{k}"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<width$}", row.setting);
            for (_, acc) in &row.topk {
                let _ = write!(out, "  {:>8}", fmt_fraction(*acc, 4));
            }
            out.push('\n');
        }
        if let Some(pc) = &self.per_class {
            out.push('\n');
            let w = pc
                .per_class
                .keys()
                .map(String::len)
                .max()
                .unwrap_or(0)
                .max(10);
            let _ = writeln!(out, "{:<w$}  {:>8}", "class_name", "top-1");
            for (name, acc) in &pc.per_class {
                let _ = writeln!(out, "{name:<w$}  {acc:>8.4}");
            }
            let _ = writeln!(
                out,
                "summary: mean={:.4} std={:.4} min={:.4} max={:.4}",
                pc.mean, pc.std_dev, pc.min, pc.max
            );
        }
        out
    }

    /// Comma-separated rows, after the same header comment line.
    pub fn render_csv(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        out.push_str("setting");
        for k in &self.k_list {
            let _ = write!(out, ",top{k}");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.setting);
            for (_, acc) in &row.topk {
                let _ = write!(out, ",{}", fmt_fraction(*acc, 6));
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_fraction(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(v) => format!("{v:.digits$}"),
        None => "N/A".to_string(),
    }
}

fn check_k_list(k_list: &[usize]) -> Result<()> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(CrlError::InvalidArgument(
            "top-k list must hold positive values".into(),
        ));
    }
    Ok(())
}

fn check_pair(train: &FeatureBundle, test: &FeatureBundle) -> Result<()> {
    if train.shape() != test.shape() {
        return Err(CrlError::ShapeMismatch {
            expected: train.shape(),
            found: test.shape(),
        });
    }
    if train.labels() != test.labels() {
        return Err(CrlError::LabelTableMismatch("train and test bundles"));
    }
    Ok(())
}

fn evaluate(test: &FeatureBundle, model: &CrModel, k_list: &[usize]) -> Result<BatchResult> {
    let k_max = k_list.iter().copied().max().unwrap_or(1).min(model.len());
    classify_batch(test, model, k_max)
}

/// Accuracy as a function of the per-class training budget. A row using
/// every training instance is appended when `counts` lacks one.
pub fn run_instance_curve(
    train: &FeatureBundle,
    test: &FeatureBundle,
    counts: &[CountSetting],
    k_list: &[usize],
    seed: u64,
) -> Result<ExperimentReport> {
    check_k_list(k_list)?;
    check_pair(train, test)?;
    let mut settings: Vec<CountSetting> = Vec::with_capacity(counts.len() + 1);
    for &c in counts {
        if !settings.contains(&c) {
            settings.push(c);
        }
    }
    if !settings.contains(&CountSetting::All) {
        settings.push(CountSetting::All);
    }

    let mut timings = PhaseTimings::default();
    let mut rows = Vec::with_capacity(settings.len());
    let mut per_class = None;
    for setting in &settings {
        let opts = BuildOptions {
            max_per_class: match setting {
                CountSetting::Limit(n) => Some(*n),
                CountSetting::All => None,
            },
            ..Default::default()
        };
        let t = Instant::now();
        let model = build_model(train, &opts)?;
        timings.build += t.elapsed();
        let t = Instant::now();
        let batch = evaluate(test, &model, k_list)?;
        timings.infer += t.elapsed();
        rows.push(ReportRow::from_batch(
            format!("count={setting}"),
            &batch,
            k_list,
        ));
        if *setting == CountSetting::All {
            per_class = per_class_accuracy(&batch);
        }
    }

    Ok(ExperimentReport {
        protocol: "instance_curve".into(),
        seed,
        params: vec![
            ("train".into(), train.domain_tag().to_string()),
            ("test".into(), test.domain_tag().to_string()),
            (
                "counts".into(),
                settings
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("topk".into(), join_k(k_list)),
        ],
        k_list: k_list.to_vec(),
        rows,
        per_class,
        timings,
    })
}

pub const TARGET_ONLY: &str = "T=>T";
pub const SOURCE_AND_TARGET: &str = "T=>S+T";

/// Target-only versus source-plus-target recognition on the target test set.
///
/// Fails if any record is correct under the union but not under the target
/// classes alone, which would mean the rankings disagree.
pub fn run_task_comparison(
    source: &CrModel,
    target_train: &FeatureBundle,
    target_test: &FeatureBundle,
    k_list: &[usize],
    seed: u64,
) -> Result<ExperimentReport> {
    check_k_list(k_list)?;
    check_pair(target_train, target_test)?;
    let mut timings = PhaseTimings::default();

    let t = Instant::now();
    let target = build_model(target_train, &BuildOptions::default())?;
    let union = merge_models(source, &target)?;
    timings.build += t.elapsed();

    let t = Instant::now();
    let subset = evaluate(target_test, &target, k_list)?;
    let full = evaluate(target_test, &union, k_list)?;
    timings.infer += t.elapsed();

    let violations = subset
        .hits(1)
        .into_iter()
        .zip(full.hits(1))
        .filter(|&(sub, all)| all && !sub)
        .count();
    if violations > 0 {
        return Err(CrlError::InvariantViolated(format!(
            "{violations} records correct over source+target but wrong over target alone"
        )));
    }

    Ok(ExperimentReport {
        protocol: "task_comparison".into(),
        seed,
        params: vec![
            ("source".into(), source.metadata().built_from.clone()),
            ("source_classes".into(), source.len().to_string()),
            ("train".into(), target_train.domain_tag().to_string()),
            ("test".into(), target_test.domain_tag().to_string()),
            ("topk".into(), join_k(k_list)),
        ],
        k_list: k_list.to_vec(),
        rows: vec![
            ReportRow::from_batch(TARGET_ONLY.into(), &subset, k_list),
            ReportRow::from_batch(SOURCE_AND_TARGET.into(), &full, k_list),
        ],
        per_class: per_class_accuracy(&subset),
        timings,
    })
}

fn join_k(k_list: &[usize]) -> String {
    k_list
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Per-class stratified split. Each class is shuffled with a seeded RNG and
/// `round(n * ratio)` of its records go to the training side; a class with
/// at least two records keeps one on each side when `0 < ratio < 1`.
/// Both outputs keep bundle order.
pub fn split_bundle(
    bundle: &FeatureBundle,
    ratio: f64,
    seed: u64,
) -> Result<(FeatureBundle, FeatureBundle)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CrlError::InvalidArgument(format!(
            "ratio {ratio} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in bundle.indices_by_class() {
        let n = idx.len();
        let mut n_train = (n as f64 * ratio).round() as usize;
        if n >= 2 && ratio > 0.0 && ratio < 1.0 {
            n_train = n_train.clamp(1, n - 1);
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let tag = bundle.domain_tag();
    Ok((
        bundle.select(&train, format!("{tag}:train")),
        bundle.select(&test, format!("{tag}:test")),
    ))
}
