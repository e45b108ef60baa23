//! The trainable network: per-node fusion of image and layout features,
//! message passing over the sampled graph, and classification heads for
//! nodes and candidate edges.

mod config;
mod forward;
mod train;

pub use config::{
    init_model, param_count, GnnArch, ImageProviderConfig, ModelConfig, RefreshMode, RoiConfig,
    TaskKind,
};
pub use forward::{forward, prepare_page, run_forward, ForwardOutput, ForwardVars, PreparedPage};
pub use train::{edge_targets, page_loss, train, EpochMetrics, LossParts, TrainHyper};

use crate::doc::{GeomError, InvalidLabels};
use crate::features::FeatureError;
use crate::nn::NnError;
use crate::sampling::SamplingError;

/// Anything that can go wrong building, running, or training the model.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Labels(#[from] InvalidLabels),
    #[error("page {0:?} has no gold labels")]
    MissingLabels(String),
    #[error("page {0:?} has no gold links but the task is linking")]
    MissingLinks(String),
    #[error("no pages to train on")]
    EmptyDataset,
}
