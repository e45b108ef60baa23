//! Document layout analysis over OCR text boxes.
//!
//! The pipeline: normalize page geometry, sample a sparse candidate graph
//! over the boxes, assemble node and edge features, run a small trainable
//! graph network with node- and edge-classification heads, and decode the
//! predicted edges into labeled, scored layout instances.

pub mod doc;
pub mod eval;
pub mod features;
pub mod io;
pub mod model;
pub mod nn;
pub mod sampling;
