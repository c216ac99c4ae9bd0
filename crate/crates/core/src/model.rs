//! Class-representative models: construction from bundles, merging, and the
//! model file format.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! magic "CRLMDL1\0", u32 version = 1, u32 H, u32 W, u32 C, u32 num_crs,
//! u32 metadata_len, metadata (UTF-8 key=value lines),
//! num_crs x (u32 name_len, name, u64 count, dim x f32)
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::afm::Shape;
use crate::binio::{decode_f32s, put_f32s, put_len, put_str, put_u32, Cursor};
use crate::bundle::{read_shape, FeatureBundle};
use crate::error::{CrlError, Result};
use crate::pooling::{pool, PoolingSpec};
use crate::representative::{build_cr_from_slices, ClassRepresentative};

pub const MODEL_MAGIC: &[u8; 8] = b"CRLMDL1\0";
pub const MODEL_VERSION: u32 = 1;

const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelMetadata {
    /// Network / dataset the features were extracted with.
    pub source_env: String,
    pub layer: String,
    /// `none`, or a pooling descriptor such as `avg:2x2:2x2`.
    pub pooling: String,
    /// Domain tag of the bundle the model was built from.
    pub built_from: String,
}

impl Default for ModelMetadata {
    fn default() -> Self {
        Self {
            source_env: UNSPECIFIED.into(),
            layer: UNSPECIFIED.into(),
            pooling: "none".into(),
            built_from: String::new(),
        }
    }
}

impl ModelMetadata {
    fn fields(&self) -> [(&'static str, &str); 4] {
        [
            ("source_env", &self.source_env),
            ("layer", &self.layer),
            ("pooling", &self.pooling),
            ("built_from", &self.built_from),
        ]
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for (key, value) in self.fields() {
            if value.contains(['\n', '\r']) {
                return Err(CrlError::InvalidMetadata(format!(
                    "{key} contains a line break"
                )));
            }
            out.push_str(key);
            out.push('=');
            out.push_str(value);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses `key=value` lines. Unknown keys are ignored, missing keys
    /// keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut meta = ModelMetadata::default();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CrlError::InvalidMetadata(format!("line {line:?} has no '='")))?;
            let value = value.to_string();
            match key {
                "source_env" => meta.source_env = value,
                "layer" => meta.layer = value,
                "pooling" => meta.pooling = value,
                "built_from" => meta.built_from = value,
                _ => {}
            }
        }
        Ok(meta)
    }

    fn combine(a: &Self, b: &Self) -> Self {
        let join = |x: &str, y: &str| {
            if x == y {
                x.to_string()
            } else {
                format!("{x}+{y}")
            }
        };
        Self {
            source_env: join(&a.source_env, &b.source_env),
            layer: join(&a.layer, &b.layer),
            pooling: join(&a.pooling, &b.pooling),
            built_from: join(&a.built_from, &b.built_from),
        }
    }
}

/// An ordered set of class representatives sharing one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct CrModel {
    shape: Shape,
    crs: Vec<ClassRepresentative>,
    metadata: ModelMetadata,
}

impl CrModel {
    pub fn new(
        shape: Shape,
        crs: Vec<ClassRepresentative>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        shape.validate()?;
        let mut names = HashSet::with_capacity(crs.len());
        for cr in &crs {
            if cr.dim() != shape.dim() {
                return Err(CrlError::LengthMismatch {
                    expected: shape.dim(),
                    found: cr.dim(),
                });
            }
            if !names.insert(cr.name()) {
                return Err(CrlError::DuplicateClass(cr.name().to_string()));
            }
        }
        Ok(Self {
            shape,
            crs,
            metadata,
        })
    }

    pub fn empty(shape: Shape) -> Result<Self> {
        Self::new(shape, Vec::new(), ModelMetadata::default())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn crs(&self) -> &[ClassRepresentative] {
        &self.crs
    }

    pub fn len(&self) -> usize {
        self.crs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crs.is_empty()
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn get(&self, name: &str) -> Option<&ClassRepresentative> {
        self.crs.iter().find(|cr| cr.name() == name)
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.crs.iter().map(ClassRepresentative::name)
    }

    /// Copy of `self` with every class name that also occurs in `other`
    /// prefixed by `prefix`.
    pub fn prefix_collisions(&self, other: &CrModel, prefix: &str) -> Result<CrModel> {
        let taken: HashSet<&str> = other.class_names().collect();
        self.prefix_where(prefix, |name| taken.contains(name))
    }

    /// Copy of `self` with `prefix` prepended to every class name.
    pub fn with_prefix(&self, prefix: &str) -> Result<CrModel> {
        self.prefix_where(prefix, |_| true)
    }

    /// Fails if a renamed class lands on an existing name.
    fn prefix_where(&self, prefix: &str, pick: impl Fn(&str) -> bool) -> Result<CrModel> {
        let crs = self
            .crs
            .iter()
            .map(|cr| {
                if pick(cr.name()) {
                    cr.renamed(format!("{prefix}{}", cr.name()))
                } else {
                    cr.clone()
                }
            })
            .collect();
        CrModel::new(self.shape, crs, self.metadata.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    /// Use only the first `n` records of each class, in bundle order.
    pub max_per_class: Option<usize>,
    /// Pool every instance before it is aggregated.
    pub pooling: Option<PoolingSpec>,
    pub source_env: Option<String>,
    pub layer: Option<String>,
}

/// Builds one representative per class that has records, in label-table order.
///
/// Classes are built in parallel on the current rayon pool; each class is
/// summed sequentially in record order, so the result is identical for any
/// thread count.
pub fn build_model(bundle: &FeatureBundle, opts: &BuildOptions) -> Result<CrModel> {
    if bundle.is_empty() {
        return Err(CrlError::EmptyBundle);
    }
    let out_shape = match &opts.pooling {
        Some(spec) => spec.output_shape(bundle.shape())?,
        None => bundle.shape(),
    };

    let by_class: Vec<(usize, Vec<usize>)> = bundle
        .indices_by_class()
        .into_iter()
        .enumerate()
        .filter(|(_, idx)| !idx.is_empty())
        .collect();

    let records = bundle.records();
    let crs = by_class
        .par_iter()
        .map(|(class_id, idx)| {
            let name = &bundle.labels()[*class_id];
            let take = opts.max_per_class.map_or(idx.len(), |k| k.min(idx.len()));
            let chosen = &idx[..take];
            if chosen.is_empty() {
                return Err(CrlError::EmptyClass(name.clone()));
            }
            match &opts.pooling {
                None => build_cr_from_slices(name, chosen.iter().map(|&i| records[i].afm.values())),
                Some(spec) => {
                    let pooled = chosen
                        .iter()
                        .map(|&i| pool(&records[i].afm, spec))
                        .collect::<Result<Vec<_>>>()?;
                    build_cr_from_slices(name, pooled.iter().map(|a| a.values()))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let metadata = ModelMetadata {
        source_env: opts
            .source_env
            .clone()
            .unwrap_or_else(|| UNSPECIFIED.into()),
        layer: opts.layer.clone().unwrap_or_else(|| UNSPECIFIED.into()),
        pooling: opts
            .pooling
            .map_or_else(|| "none".to_string(), |p| p.to_string()),
        built_from: bundle.domain_tag().to_string(),
    };
    CrModel::new(out_shape, crs, metadata)
}

/// Union of two models over the same feature space. Representatives are
/// copied unchanged; a class name present in both is an error.
pub fn merge_models(a: &CrModel, b: &CrModel) -> Result<CrModel> {
    if a.shape != b.shape {
        return Err(CrlError::ShapeMismatch {
            expected: a.shape,
            found: b.shape,
        });
    }
    let names: HashSet<&str> = a.class_names().collect();
    if let Some(dup) = b.class_names().find(|n| names.contains(n)) {
        return Err(CrlError::DuplicateClass(dup.to_string()));
    }
    let metadata = match (a.is_empty(), b.is_empty()) {
        (_, true) => a.metadata.clone(),
        (true, false) => b.metadata.clone(),
        (false, false) => ModelMetadata::combine(&a.metadata, &b.metadata),
    };
    let crs = a.crs.iter().chain(&b.crs).cloned().collect();
    CrModel::new(a.shape, crs, metadata)
}

pub fn encode_model(model: &CrModel) -> Result<Vec<u8>> {
    let dim = model.dim();
    let mut out = Vec::with_capacity(64 + model.len() * (16 + dim * 4));
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    put_len(&mut out, model.shape.height, "height")?;
    put_len(&mut out, model.shape.width, "width")?;
    put_len(&mut out, model.shape.channels, "channels")?;
    put_len(&mut out, model.len(), "representative table")?;
    put_str(&mut out, &model.metadata.to_text()?, "metadata")?;
    for cr in &model.crs {
        put_str(&mut out, cr.name(), "class name")?;
        out.extend_from_slice(&cr.count().to_le_bytes());
        put_f32s(&mut out, cr.vector());
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<CrModel> {
    let mut cur = Cursor::new(bytes);
    cur.magic(MODEL_MAGIC, "CRLMDL1\\0")?;
    let version = cur.u32("version")?;
    if version != MODEL_VERSION {
        return Err(CrlError::UnsupportedVersion(version));
    }
    let shape = read_shape(&mut cur)?;
    let num_crs = cur.u32("representative count")? as u64;
    let meta_len = cur.u32("metadata")? as usize;
    let metadata = ModelMetadata::from_text(&cur.utf8(meta_len, "metadata")?)?;

    let dim = shape.dim();
    let mut crs = Vec::with_capacity((num_crs as usize).min(cur.remaining() / (dim * 4 + 12)));
    let mut names = HashSet::new();
    for i in 0..num_crs {
        let truncated = || CrlError::TruncatedRecords {
            declared: num_crs,
            complete: i,
        };
        let name = cur.string("class name").map_err(|e| match e {
            CrlError::TruncatedHeader(_) => truncated(),
            other => other,
        })?;
        let count_bytes = cur.take(8, "count").map_err(|_| truncated())?;
        let count = u64::from_le_bytes(count_bytes.try_into().expect("8 bytes"));
        let vector_bytes = cur.take(dim * 4, "vector").map_err(|_| truncated())?;
        let vector = decode_f32s(vector_bytes, i as usize)?;
        if !names.insert(name.clone()) {
            return Err(CrlError::DuplicateClass(name));
        }
        crs.push(ClassRepresentative::from_parts(name, count, vector)?);
    }
    if cur.remaining() > 0 {
        return Err(CrlError::TrailingBytes(cur.remaining()));
    }
    CrModel::new(shape, crs, metadata)
}

pub fn save_model(model: &CrModel, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_model(model)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CrModel> {
    decode_model(&fs::read(path)?)
}
