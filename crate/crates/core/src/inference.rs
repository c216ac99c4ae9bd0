//! Cosine-similarity ranking of query feature maps against a model.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;

use crate::afm::AfmVector;
use crate::bundle::FeatureBundle;
use crate::error::{CrlError, Result};
use crate::model::{merge_models, CrModel};

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

pub(crate) fn norm(a: &[f32]) -> f64 {
    a.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// `dot / (norm_a * norm_b)` clamped to `[-1, 1]`; negative zero becomes zero.
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0) + 0.0
}

/// Cosine similarity with 64-bit accumulation.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CrlError::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(CrlError::ZeroNorm);
    }
    Ok(cosine_from_parts(dot(a, b), na, nb))
}

/// The `k` best classes for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub ranked: Vec<(String, f64)>,
}

impl Prediction {
    pub fn top1(&self) -> &str {
        &self.ranked[0].0
    }

    /// Whether `label` appears in the first `m` ranks.
    pub fn hit_within(&self, label: &str, m: usize) -> bool {
        self.ranked.iter().take(m).any(|(name, _)| name == label)
    }
}

/// Higher score first, then ascending name.
fn rank_order(a: &(&str, f64), b: &(&str, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

pub fn classify(query: &AfmVector, model: &CrModel, k: usize) -> Result<Prediction> {
    classify_values(query.values(), model, k)
}

pub fn classify_values(query: &[f32], model: &CrModel, k: usize) -> Result<Prediction> {
    if model.is_empty() {
        return Err(CrlError::EmptyModel);
    }
    if k == 0 || k > model.len() {
        return Err(CrlError::InvalidTopK {
            k,
            classes: model.len(),
        });
    }
    if query.len() != model.dim() {
        return Err(CrlError::LengthMismatch {
            expected: model.dim(),
            found: query.len(),
        });
    }
    let query_norm = norm(query);
    if query_norm == 0.0 {
        return Err(CrlError::ZeroNorm);
    }

    let mut scored: Vec<(&str, f64)> = model
        .crs()
        .iter()
        .map(|cr| {
            let score = cosine_from_parts(dot(cr.vector(), query), cr.norm(), query_norm);
            (cr.name(), score)
        })
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);

    Ok(Prediction {
        ranked: scored
            .into_iter()
            .map(|(n, s)| (n.to_string(), s))
            .collect(),
    })
}

/// The class set a task mode classifies against: the target model alone, or
/// the union of source and target when a source model is given.
pub fn task_model<'a>(target: &'a CrModel, source: Option<&CrModel>) -> Result<Cow<'a, CrModel>> {
    match source {
        None => Ok(Cow::Borrowed(target)),
        Some(src) => Ok(Cow::Owned(merge_models(src, target)?)),
    }
}

pub fn classify_task(
    query: &AfmVector,
    target: &CrModel,
    source: Option<&CrModel>,
    k: usize,
) -> Result<Prediction> {
    classify(query, task_model(target, source)?.as_ref(), k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub k: usize,
    /// One per bundle record, in record order.
    pub predictions: Vec<Prediction>,
    pub true_labels: Vec<String>,
}

impl BatchResult {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Per-record top-`m` hits.
    pub fn hits(&self, m: usize) -> Vec<bool> {
        self.predictions
            .iter()
            .zip(&self.true_labels)
            .map(|(p, label)| p.hit_within(label, m))
            .collect()
    }

    /// Fraction of records whose label is in the first `m` ranks; `None`
    /// for an empty batch.
    pub fn accuracy(&self, m: usize) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let hits = self.hits(m).into_iter().filter(|&h| h).count();
        Some(hits as f64 / self.len() as f64)
    }

    /// Top-1 through top-k accuracy.
    pub fn accuracies(&self) -> Vec<Option<f64>> {
        (1..=self.k).map(|m| self.accuracy(m)).collect()
    }

    /// One row per record: `index,true_label,rank1_label,rank1_score,...`,
    /// scores with six decimals. No header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_writer(out);
        for (i, (p, label)) in self.predictions.iter().zip(&self.true_labels).enumerate() {
            let mut row = Vec::with_capacity(2 + 2 * p.ranked.len());
            row.push(i.to_string());
            row.push(label.clone());
            for (name, score) in &p.ranked {
                row.push(name.clone());
                row.push(format!("{score:.6}"));
            }
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> CrlError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CrlError::Io(io),
        other => CrlError::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// Classifies every record of `bundle`. Queries run in parallel on the
/// current rayon pool; output order is record order.
pub fn classify_batch(bundle: &FeatureBundle, model: &CrModel, k: usize) -> Result<BatchResult> {
    if bundle.dim() != model.dim() {
        return Err(CrlError::LengthMismatch {
            expected: model.dim(),
            found: bundle.dim(),
        });
    }
    let predictions = bundle
        .records()
        .par_iter()
        .map(|r| classify(&r.afm, model, k))
        .collect::<Result<Vec<_>>>()?;
    let true_labels = bundle
        .records()
        .iter()
        .map(|r| bundle.label_of(r).to_string())
        .collect();
    Ok(BatchResult {
        k,
        predictions,
        true_labels,
    })
}
