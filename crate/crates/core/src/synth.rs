//! Seeded synthetic feature bundles with well-separated Gaussian classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::afm::{AfmVector, Shape};
use crate::bundle::{FeatureBundle, LabeledInstance};
use crate::error::{CrlError, Result};

/// Attempts allowed when placing each class mean.
pub const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub shape: Shape,
    pub separation: f64,
    pub seed: u64,
}

/// Generates `per_class` unit-variance Gaussian draws around each of
/// `num_classes` means.
///
/// Means are drawn uniformly on a sphere of radius `separation * sqrt(num_classes)`
/// and any candidate closer than `separation` to an accepted mean is redrawn.
/// Records are emitted class by class; labels are `class_NN`.
pub fn synth_bundle(spec: &SynthSpec) -> Result<FeatureBundle> {
    let SynthSpec {
        num_classes,
        per_class,
        shape,
        separation,
        seed,
    } = *spec;
    if num_classes == 0 || per_class == 0 {
        return Err(CrlError::InvalidArgument(
            "num_classes and per_class must be at least 1".into(),
        ));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(CrlError::InvalidArgument(format!(
            "separation must be a finite value >= 0, got {separation}"
        )));
    }
    shape.validate()?;
    let dim = shape.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let means = place_means(&mut rng, num_classes, dim, separation)?;

    let width = (num_classes - 1).to_string().len().max(2);
    let labels = (0..num_classes)
        .map(|c| format!("class_{c:0width$}"))
        .collect();

    let mut records = Vec::with_capacity(num_classes * per_class);
    for (class_id, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            let values = mean
                .iter()
                .map(|m| (m + rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            records.push(LabeledInstance::new(
                class_id as u32,
                AfmVector::new(values, shape)?,
            ));
        }
    }

    let tag = format!(
        "synth(classes={num_classes},per_class={per_class},shape={shape},sep={separation},seed={seed})"
    );
    FeatureBundle::new(shape, labels, records, tag)
}

/// Generates one synthetic population and splits each class into the first
/// `train_per_class` draws and the remaining `test_per_class` draws.
pub fn synth_train_test(
    num_classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    shape: Shape,
    separation: f64,
    seed: u64,
) -> Result<(FeatureBundle, FeatureBundle)> {
    let per_class = train_per_class + test_per_class;
    let all = synth_bundle(&SynthSpec {
        num_classes,
        per_class,
        shape,
        separation,
        seed,
    })?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in all.indices_by_class() {
        train.extend_from_slice(&idx[..train_per_class]);
        test.extend_from_slice(&idx[train_per_class..]);
    }
    let tag = all.domain_tag().to_string();
    Ok((
        all.select(&train, format!("{tag}:train")),
        all.select(&test, format!("{tag}:test")),
    ))
}

fn place_means(
    rng: &mut ChaCha8Rng,
    num_classes: usize,
    dim: usize,
    separation: f64,
) -> Result<Vec<Vec<f64>>> {
    let radius = separation * (num_classes as f64).sqrt();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let candidate = sphere_point(rng, dim, radius);
            let clear = means.iter().all(|m| euclidean(m, &candidate) >= separation);
            if clear {
                means.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CrlError::SeparationUnreachable {
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(means)
}

fn sphere_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm * radius).collect();
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
