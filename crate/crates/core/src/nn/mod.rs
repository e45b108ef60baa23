//! Minimal dense-tensor core: reverse-mode differentiation over a flat
//! tape, the few layers the model needs, deterministic parameter
//! initialization, Adam with decoupled weight decay, and a finite-difference
//! gradient checker. Everything computes in `f64`.

mod check;
mod optim;
mod store;
mod tape;
mod tensor;

pub use check::{grad_check, Evaluation};
pub use optim::{AdamConfig, AdamState};
pub use store::ParamStore;
pub use tape::{GradMap, Tape, Var};
pub use tensor::Tensor;

/// Bijective 64-bit mixer for deriving independent substream seeds.
pub fn mix_seed(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("target {target} at row {row} is outside 0..{n_classes}")]
    InvalidTarget {
        row: usize,
        target: usize,
        n_classes: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("parameter {0} registered twice")]
    DuplicateParam(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("segment {0} received no rows")]
    EmptySegment(usize),
}
