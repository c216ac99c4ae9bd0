use crate::afm::AfmVector;
use crate::error::{CrlError, Result};
use crate::inference::norm;

/// The mean feature vector of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRepresentative {
    name: String,
    count: u64,
    vector: Vec<f32>,
    norm: f64,
}

impl ClassRepresentative {
    /// Assembles a representative from stored parts (e.g. a model file).
    /// The norm is recomputed here.
    pub fn from_parts(name: impl Into<String>, count: u64, vector: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if count == 0 {
            return Err(CrlError::EmptyClass(name));
        }
        if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
            return Err(CrlError::NonFinite { record: 0, index });
        }
        let norm = norm(&vector);
        if norm == 0.0 {
            return Err(CrlError::ZeroVector(name));
        }
        Ok(Self {
            name,
            count,
            vector,
            norm,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Euclidean norm of [`Self::vector`], cached at construction.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub(crate) fn renamed(&self, name: String) -> Self {
        Self {
            name,
            ..self.clone()
        }
    }
}

/// Component-wise mean of `instances`.
///
/// Sums run in input order in 64 bits and the mean is rounded to `f32` once,
/// so the result does not depend on how classes are scheduled.
pub fn build_cr(class_name: &str, instances: &[AfmVector]) -> Result<ClassRepresentative> {
    build_cr_from_slices(class_name, instances.iter().map(AfmVector::values))
}

pub fn build_cr_from_slices<'a, I>(class_name: &str, instances: I) -> Result<ClassRepresentative>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut iter = instances.into_iter();
    let first = iter.next().ok_or(CrlError::EmptyInstances)?;
    let mut sums: Vec<f64> = first.iter().map(|&v| f64::from(v)).collect();
    let mut count: u64 = 1;
    for inst in iter {
        if inst.len() != sums.len() {
            return Err(CrlError::LengthMismatch {
                expected: sums.len(),
                found: inst.len(),
            });
        }
        for (acc, &v) in sums.iter_mut().zip(inst) {
            *acc += f64::from(v);
        }
        count += 1;
    }
    let n = count as f64;
    let vector = sums.into_iter().map(|s| (s / n) as f32).collect();
    ClassRepresentative::from_parts(class_name, count, vector)
}
