//! Batch harness: configuration, dataset ingest, artifact formats and the
//! `generate` / `evaluate` / `sanity` pipelines.

pub mod config;
pub mod dataset;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use config::{ClassPolicy, EvaluateConfig, GenerateConfig, ModelConfig, SCORER_ENV};
pub use dataset::{ingest, Dataset, DatasetManifest, ManifestEntry, Sample};
pub use io::{load_smap, save_smap};
pub use pipeline::{evaluate, generate, sanity, EvaluateOutcome, MetricRecord};
pub use report::AggregateTable;
