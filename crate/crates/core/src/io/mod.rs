//! Data in and out: page documents, rasters, dataset adapters, the
//! synthetic generator, checkpoints, and detection export.

mod checkpoint;
mod coco;
mod funsd;
mod page;
mod raster;
mod synth;

pub use checkpoint::{
    ensure_config_matches, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
};
pub use coco::{
    detections_from_instances, read_detections, write_detections, CocoDetection, DetectionExport,
};
pub use funsd::{funsd_to_page, load_funsd_dir, FunsdLevel, FUNSD_CATEGORIES};
pub use page::{load_page, load_pages_dir, save_page, PageDocument, PAGE_SCHEMA_VERSION};
pub use raster::{load_raster, raster_for_page};
pub use synth::{generate_pages, SynthConfig, SYNTH_CATEGORIES};

use crate::doc::InvalidLabels;

/// Anything that can go wrong reading or writing project data.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid page {path}: {reason}")]
    InvalidPage { path: String, reason: String },
    #[error(transparent)]
    Labels(#[from] InvalidLabels),
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: String, reason: String },
    #[error("checkpoint was trained with a different config; differing fields: {0}")]
    ConfigMismatch(String),
    #[error("image {path}: {reason}")]
    BadImage { path: String, reason: String },
    #[error("synthetic data config: {0}")]
    SynthConfig(String),
}
