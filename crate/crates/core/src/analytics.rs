//! Distribution statistics over a model's representative space: pairwise
//! cosine similarities, their median, per-class group similarity, and the
//! two-sample Kolmogorov-Smirnov distance between two models.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{CrlError, Result};
use crate::inference::{cosine_from_parts, dot};
use crate::model::CrModel;

/// How a class's similarities to every other class are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GcsMode {
    #[default]
    Mean,
    Sum,
}

impl fmt::Display for GcsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GcsMode::Mean => "mean",
            GcsMode::Sum => "sum",
        })
    }
}

impl FromStr for GcsMode {
    type Err = CrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(GcsMode::Mean),
            "sum" => Ok(GcsMode::Sum),
            other => Err(CrlError::InvalidArgument(format!(
                "gcs mode {other:?}, expected sum or mean"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainProfile {
    pub model_id: String,
    /// Cosine similarity of every unordered class pair, ascending.
    pub pair_similarities: Vec<f64>,
    pub median: f64,
    pub gcs: BTreeMap<String, f64>,
    pub gcs_mode: GcsMode,
}

/// Profiles `model`, identified by the domain tag it was built from.
pub fn profile(model: &CrModel, gcs_mode: GcsMode) -> Result<DomainProfile> {
    profile_with_id(model, model.metadata().built_from.clone(), gcs_mode)
}

pub fn profile_with_id(
    model: &CrModel,
    model_id: String,
    gcs_mode: GcsMode,
) -> Result<DomainProfile> {
    let n = model.len();
    if n < 2 {
        return Err(CrlError::TooFewClasses {
            required: 2,
            found: n,
        });
    }
    let crs = model.crs();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &crs[i];
            crs[i + 1..]
                .iter()
                .map(|b| cosine_from_parts(dot(a.vector(), b.vector()), a.norm(), b.norm()))
                .collect()
        })
        .collect();
    let sim = |i: usize, j: usize| {
        if i < j {
            upper[i][j - i - 1]
        } else {
            upper[j][i - j - 1]
        }
    };

    let gcs = (0..n)
        .map(|i| {
            let total: f64 = (0..n).filter(|&j| j != i).map(|j| sim(i, j)).sum();
            let value = match gcs_mode {
                GcsMode::Mean => total / (n - 1) as f64,
                GcsMode::Sum => total,
            };
            (crs[i].name().to_string(), value)
        })
        .collect();

    let mut pair_similarities: Vec<f64> = upper.into_iter().flatten().collect();
    pair_similarities.sort_by(f64::total_cmp);
    let median = median_of_sorted(&pair_similarities);

    Ok(DomainProfile {
        model_id,
        pair_similarities,
        median,
        gcs,
        gcs_mode,
    })
}

/// Order-statistic median; the mean of the central pair for even counts.
pub fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Exact two-sample Kolmogorov-Smirnov statistic: the largest gap between
/// the two empirical CDFs.
pub fn ks_distance(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(CrlError::EmptySample);
    }
    let sorted = |s: &[f64]| -> Result<Vec<f64>> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(CrlError::NonFiniteSample);
        }
        // +0.0 folds -0.0 into 0.0 so the two compare as one point
        let mut v: Vec<f64> = s.iter().map(|x| x + 0.0).collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    };
    let a = sorted(sample_a)?;
    let b = sorted(sample_b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);

    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferThresholds {
    /// `d_star` at or below this is heterogeneous transfer.
    pub heterogeneous_max: f64,
    /// `d_star` at or above this is negative transfer.
    pub negative_min: f64,
}

impl Default for TransferThresholds {
    fn default() -> Self {
        Self {
            heterogeneous_max: 0.05,
            negative_min: 0.3,
        }
    }
}

impl FromStr for TransferThresholds {
    type Err = CrlError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CrlError::InvalidArgument(format!("thresholds {s:?}, expected LOW,HIGH"));
        let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(bad());
        }
        Ok(Self {
            heterogeneous_max: lo,
            negative_min: hi,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferType {
    Homogeneous,
    Heterogeneous,
    Negative,
    Indeterminate,
}

impl fmt::Display for TransferType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferType::Homogeneous => "homogeneous",
            TransferType::Heterogeneous => "heterogeneous",
            TransferType::Negative => "negative",
            TransferType::Indeterminate => "indeterminate",
        })
    }
}

pub fn transfer_type(
    same_domain: bool,
    d_star: f64,
    thresholds: &TransferThresholds,
) -> TransferType {
    if same_domain {
        TransferType::Homogeneous
    } else if d_star <= thresholds.heterogeneous_max {
        TransferType::Heterogeneous
    } else if d_star >= thresholds.negative_min {
        TransferType::Negative
    } else {
        TransferType::Indeterminate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsReport {
    pub median_source: f64,
    pub median_target: f64,
    /// `median_source - median_target`
    pub median_distance: f64,
    pub d_star: f64,
    pub transfer_type: TransferType,
}

pub fn compare_domains(
    source: &DomainProfile,
    target: &DomainProfile,
    thresholds: &TransferThresholds,
) -> Result<KsReport> {
    let d_star = ks_distance(&source.pair_similarities, &target.pair_similarities)?;
    Ok(KsReport {
        median_source: source.median,
        median_target: target.median,
        median_distance: source.median - target.median,
        d_star,
        transfer_type: transfer_type(source.model_id == target.model_id, d_star, thresholds),
    })
}

fn push_gcs_table(out: &mut String, title: &str, profile: &DomainProfile) {
    let _ = writeln!(
        out,
        "# gcs {title} ({}) model={}",
        profile.gcs_mode, profile.model_id
    );
    out.push_str("class_name,gcs\n");
    for (name, value) in &profile.gcs {
        let _ = writeln!(out, "{name},{value:.6}");
    }
}

/// `key: value` report for a single model.
pub fn render_profile(profile: &DomainProfile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "median_source: {:.6}", profile.median);
    let _ = writeln!(out, "pairs_source: {}", profile.pair_similarities.len());
    push_gcs_table(&mut out, "source", profile);
    out
}

/// `key: value` report comparing two models, followed by both gcs tables.
pub fn render_comparison(
    source: &DomainProfile,
    target: &DomainProfile,
    report: &KsReport,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "median_source: {:.6}", report.median_source);
    let _ = writeln!(out, "median_target: {:.6}", report.median_target);
    let _ = writeln!(out, "median_distance: {:.6}", report.median_distance);
    let _ = writeln!(out, "ks_score: {:.6}", report.d_star);
    let _ = writeln!(out, "transfer_type: {}", report.transfer_type);
    push_gcs_table(&mut out, "source", source);
    push_gcs_table(&mut out, "target", target);
    out
}

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count_source: u64,
    pub count_target: u64,
}

/// 50 equal bins over `[-1, 1]`; the last bin is closed on the right.
pub fn similarity_histogram(source: &[f64], target: &[f64]) -> Vec<HistogramBin> {
    let width = 2.0 / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            left: i as f64 * width - 1.0,
            right: (i + 1) as f64 * width - 1.0,
            count_source: 0,
            count_target: 0,
        })
        .collect();
    let per_unit = HISTOGRAM_BINS as f64 / 2.0;
    let index = |x: f64| (((x + 1.0) * per_unit).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
    for &x in source {
        bins[index(x)].count_source += 1;
    }
    for &x in target {
        bins[index(x)].count_target += 1;
    }
    bins
}

pub fn render_histogram(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_left,bin_right,count_source,count_target\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{:.2},{:.2},{},{}",
            b.left, b.right, b.count_source, b.count_target
        );
    }
    out
}
