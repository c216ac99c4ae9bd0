//! Class-representative classification.
//!
//! A model holds one mean feature vector per class, built from pre-extracted
//! activation maps. Queries are labeled by the highest cosine similarity to
//! those representatives, and the spread of pairwise similarities between
//! representatives gives a cheap transferability signal between datasets.
//!
//! Parallel work runs on the ambient rayon pool; use [`with_threads`] to pin
//! a worker count. Results never depend on it.

pub mod afm;
pub mod analytics;
mod binio;
pub mod bundle;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod pooling;
pub mod representative;
pub mod synth;

pub use afm::{AfmVector, Shape};
pub use analytics::{
    compare_domains, ks_distance, profile, DomainProfile, GcsMode, KsReport, TransferThresholds,
    TransferType,
};
pub use bundle::{read_bundle, write_bundle, FeatureBundle, LabeledInstance};
pub use error::{CrlError, Result};
pub use evaluation::{
    per_class_accuracy, run_instance_curve, run_task_comparison, split_bundle, CountSetting,
    ExperimentReport,
};
pub use inference::{classify, classify_batch, classify_task, cosine, BatchResult, Prediction};
pub use model::{
    build_model, load_model, merge_models, save_model, BuildOptions, CrModel, ModelMetadata,
};
pub use pooling::{pool, PoolMode, PoolingSpec};
pub use representative::{build_cr, ClassRepresentative};
pub use synth::{synth_bundle, synth_train_test, SynthSpec};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`.
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(CrlError::InvalidArgument(
            "thread count must be at least 1".into(),
        )),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CrlError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
