//! Activation feature maps: the flattened per-instance feature vectors every
//! other module consumes.
//!
//! Values are laid out channels-last, so the component for grid cell
//! `(h, w)` and channel `c` lives at `(h * width + w) * channels + c`.

use std::fmt;
use std::str::FromStr;

use crate::error::{CrlError, Result};

/// Largest number of components a single record may declare.
pub const MAX_DIM: usize = 1 << 24;

/// Spatial grid of an activation map: `height x width` cells of `channels` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    /// A flat vector of `dim` components with a `1 x 1 x dim` grid.
    pub const fn flat(dim: usize) -> Self {
        Self::new(1, 1, dim)
    }

    pub fn dim(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Checks extents are non-zero and the product stays under [`MAX_DIM`].
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(CrlError::InvalidShape(*self));
        }
        let dim = (self.height as u64)
            .checked_mul(self.width as u64)
            .and_then(|hw| hw.checked_mul(self.channels as u64))
            .unwrap_or(u64::MAX);
        if dim > MAX_DIM as u64 {
            return Err(CrlError::DimTooLarge(dim));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl FromStr for Shape {
    type Err = CrlError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let bad = || CrlError::InvalidArgument(format!("shape {s:?} is not of the form HxWxC"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut extents = [0usize; 3];
        for (slot, part) in extents.iter_mut().zip(&parts) {
            *slot = part.trim().parse().map_err(|_| bad())?;
        }
        let shape = Shape::new(extents[0], extents[1], extents[2]);
        shape.validate()?;
        Ok(shape)
    }
}

/// One instance's activation feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct AfmVector {
    values: Vec<f32>,
    shape: Shape,
}

impl AfmVector {
    pub fn new(values: Vec<f32>, shape: Shape) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.dim() {
            return Err(CrlError::LengthMismatch {
                expected: shape.dim(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CrlError::NonFinite { record: 0, index });
        }
        Ok(Self { values, shape })
    }

    /// Wraps a plain vector as a `1 x 1 x n` map.
    pub fn from_flat(values: Vec<f32>) -> Result<Self> {
        let shape = Shape::flat(values.len());
        Self::new(values, shape)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Euclidean norm accumulated in 64 bits.
    pub fn norm(&self) -> f64 {
        crate::inference::norm(&self.values)
    }
}
