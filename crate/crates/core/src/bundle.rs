//! Labeled feature bundles and their on-disk encoding.
//!
//! Layout (all integers little-endian `u32`, floats IEEE-754 `f32`):
//!
//! ```text
//! magic        "CRLAFM1\0"
//! version      1
//! H, W, C      grid shape, dim = H*W*C
//! num_labels, num_records
//! tag_len, domain tag bytes (UTF-8)
//! labels       num_labels x (len, UTF-8 bytes)
//! records      num_records x (class_id, dim x f32)
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::afm::{AfmVector, Shape};
use crate::binio::{decode_f32s, put_f32s, put_len, put_str, put_u32, Cursor};
use crate::error::{CrlError, Result};

pub const BUNDLE_MAGIC: &[u8; 8] = b"CRLAFM1\0";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub class_id: u32,
    pub afm: AfmVector,
}

impl LabeledInstance {
    pub fn new(class_id: u32, afm: AfmVector) -> Self {
        Self { class_id, afm }
    }
}

/// A labeled collection of feature maps for one dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    shape: Shape,
    labels: Vec<String>,
    records: Vec<LabeledInstance>,
    domain_tag: String,
}

impl FeatureBundle {
    pub fn new(
        shape: Shape,
        labels: Vec<String>,
        records: Vec<LabeledInstance>,
        domain_tag: impl Into<String>,
    ) -> Result<Self> {
        let bundle = Self {
            shape,
            labels,
            records,
            domain_tag: domain_tag.into(),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let mut seen = HashSet::with_capacity(self.labels.len());
        for label in &self.labels {
            if !seen.insert(label.as_str()) {
                return Err(CrlError::DuplicateLabel(label.clone()));
            }
        }
        for (record, inst) in self.records.iter().enumerate() {
            if inst.class_id as usize >= self.labels.len() {
                return Err(CrlError::ClassIdOutOfRange {
                    record,
                    class_id: inst.class_id,
                    num_labels: self.labels.len(),
                });
            }
            if inst.afm.shape() != self.shape {
                return Err(CrlError::ShapeMismatch {
                    expected: self.shape,
                    found: inst.afm.shape(),
                });
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn records(&self) -> &[LabeledInstance] {
        &self.records
    }

    pub fn domain_tag(&self) -> &str {
        &self.domain_tag
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_of(&self, record: &LabeledInstance) -> &str {
        &self.labels[record.class_id as usize]
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Record indices per class id, each list in bundle order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.labels.len()];
        for (i, r) in self.records.iter().enumerate() {
            out[r.class_id as usize].push(i);
        }
        out
    }

    /// Same labels and shape, a chosen subset of records (in the given order).
    pub fn select(&self, indices: &[usize], domain_tag: impl Into<String>) -> Self {
        Self {
            shape: self.shape,
            labels: self.labels.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            domain_tag: domain_tag.into(),
        }
    }
}

pub fn encode_bundle(bundle: &FeatureBundle) -> Result<Vec<u8>> {
    bundle.validate()?;
    let dim = bundle.dim();
    let mut out = Vec::with_capacity(36 + bundle.records.len() * (4 + dim * 4));
    out.extend_from_slice(BUNDLE_MAGIC);
    put_u32(&mut out, BUNDLE_VERSION);
    put_len(&mut out, bundle.shape.height, "height")?;
    put_len(&mut out, bundle.shape.width, "width")?;
    put_len(&mut out, bundle.shape.channels, "channels")?;
    put_len(&mut out, bundle.labels.len(), "label table")?;
    put_len(&mut out, bundle.records.len(), "record table")?;
    put_str(&mut out, &bundle.domain_tag, "domain tag")?;
    for label in &bundle.labels {
        put_str(&mut out, label, "label")?;
    }
    for r in &bundle.records {
        put_u32(&mut out, r.class_id);
        put_f32s(&mut out, r.afm.values());
    }
    Ok(out)
}

pub fn decode_bundle(bytes: &[u8]) -> Result<FeatureBundle> {
    let mut cur = Cursor::new(bytes);
    cur.magic(BUNDLE_MAGIC, "CRLAFM1\\0")?;
    let version = cur.u32("version")?;
    if version != BUNDLE_VERSION {
        return Err(CrlError::UnsupportedVersion(version));
    }
    let shape = read_shape(&mut cur)?;
    let num_labels = cur.u32("label count")? as usize;
    let num_records = cur.u32("record count")? as u64;
    let tag_len = cur.u32("domain tag")? as usize;
    let domain_tag = cur.utf8(tag_len, "domain tag")?;

    let mut labels = Vec::with_capacity(num_labels.min(cur.remaining() / 4));
    let mut seen = HashSet::new();
    for _ in 0..num_labels {
        let label = cur.string("label table")?;
        if !seen.insert(label.clone()) {
            return Err(CrlError::DuplicateLabel(label));
        }
        labels.push(label);
    }

    let dim = shape.dim();
    let record_size = 4 + dim * 4;
    let complete = (cur.remaining() / record_size) as u64;
    if complete < num_records {
        return Err(CrlError::TruncatedRecords {
            declared: num_records,
            complete,
        });
    }
    let body = cur.take(num_records as usize * record_size, "records")?;
    if cur.remaining() > 0 {
        return Err(CrlError::TrailingBytes(cur.remaining()));
    }

    let mut records = Vec::with_capacity(num_records as usize);
    for (record, chunk) in body.chunks_exact(record_size).enumerate() {
        let class_id = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if class_id as usize >= labels.len() {
            return Err(CrlError::ClassIdOutOfRange {
                record,
                class_id,
                num_labels: labels.len(),
            });
        }
        let values = decode_f32s(&chunk[4..], record)?;
        records.push(LabeledInstance::new(
            class_id,
            AfmVector::new(values, shape)?,
        ));
    }

    FeatureBundle::new(shape, labels, records, domain_tag)
}

pub(crate) fn read_shape(cur: &mut Cursor<'_>) -> Result<Shape> {
    let h = cur.u32("shape")? as u64;
    let w = cur.u32("shape")? as u64;
    let c = cur.u32("shape")? as u64;
    let dim = h.saturating_mul(w).saturating_mul(c);
    if dim > crate::afm::MAX_DIM as u64 {
        return Err(CrlError::DimTooLarge(dim));
    }
    let shape = Shape::new(h as usize, w as usize, c as usize);
    shape.validate()?;
    Ok(shape)
}

/// Validates the bundle, then writes it in the bundle format.
pub fn write_bundle(bundle: &FeatureBundle, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_bundle(bundle)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<FeatureBundle> {
    decode_bundle(&fs::read(path)?)
}
