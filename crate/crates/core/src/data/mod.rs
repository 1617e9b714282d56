//! Datasets, feature archives, annotation aggregation and batching.

mod annotation;
pub(crate) mod archive;
mod batch;
mod dataset;
mod sequence;
mod synth;

pub use annotation::{aggregate_annotations, aggregate_csv, AnnotationRecord};
pub use archive::{load_feature_archive, write_feature_archive, ARCHIVE_VERSION};
pub use batch::{batch_iterator, Batch, BatchIter};
pub use dataset::{Dataset, DatasetStats};
pub use sequence::pad_or_truncate;
pub use synth::{generate_synthetic, SyntheticOptions};
