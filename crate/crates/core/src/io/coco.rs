//! Detection export: decoded instances as pixel-space records for external
//! scoring, plus a reader for our own files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc::Page;
use crate::eval::LayoutInstance;
use crate::io::IoError;

/// One detection in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoDetection {
    pub page_id: String,
    pub category_id: usize,
    /// `[x, y, width, height]` in pixels.
    pub bbox_px: [f64; 4],
    pub score: f64,
}

/// A whole export: category names plus detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionExport {
    pub schema_version: u32,
    pub categories: Vec<String>,
    pub detections: Vec<CocoDetection>,
}

/// Converts decoded instances back to the page's pixel space.
pub fn detections_from_instances(page: &Page, instances: &[LayoutInstance]) -> Vec<CocoDetection> {
    let (w, h) = (page.width_px as f64, page.height_px as f64);
    instances
        .iter()
        .map(|inst| CocoDetection {
            page_id: page.page_id.clone(),
            category_id: inst.category,
            bbox_px: [
                inst.bbox.xmin * w,
                inst.bbox.ymin * h,
                inst.bbox.width() * w,
                inst.bbox.height() * h,
            ],
            score: inst.score,
        })
        .collect()
}

pub fn write_detections(path: &Path, export: &DetectionExport) -> Result<(), IoError> {
    let json = serde_json::to_vec_pretty(export).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_detections(path: &Path) -> Result<DetectionExport, IoError> {
    let raw = fs::read(path)?;
    serde_json::from_slice(&raw).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}
