//! The on-disk page format: one JSON document per page.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::doc::{GoldLabels, Page, TextBox};
use crate::io::IoError;

pub const PAGE_SCHEMA_VERSION: u32 = 1;

/// Serialized form of a [`Page`]. The image path is stored relative to the
/// document's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageDocument {
    pub schema_version: u32,
    pub page_id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub boxes: Vec<TextBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<GoldLabels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

impl PageDocument {
    pub fn from_page(page: &Page) -> PageDocument {
        PageDocument {
            schema_version: PAGE_SCHEMA_VERSION,
            page_id: page.page_id.clone(),
            width_px: page.width_px,
            height_px: page.height_px,
            boxes: page.boxes.clone(),
            labels: page.labels.clone(),
            image_path: page
                .image_path
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
        }
    }

    /// Validates the document and resolves it against the directory it was
    /// read from.
    pub fn into_page(self, base_dir: &Path, path: &str) -> Result<Page, IoError> {
        let err = |reason: String| IoError::InvalidPage {
            path: path.to_string(),
            reason,
        };
        if self.schema_version != PAGE_SCHEMA_VERSION {
            return Err(err(format!(
                "schema_version {} (this build reads {PAGE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(err("page has zero area".into()));
        }
        if self.boxes.is_empty() {
            return Err(err("page has no boxes".into()));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if b.id != i {
                return Err(err(format!("box {i} carries id {}, ids must be dense", b.id)));
            }
            let [x0, y0, x1, y1] = b.bbox_px;
            if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
                return Err(err(format!("box {i} has a non-finite corner")));
            }
            if x0 >= x1 || y0 >= y1 {
                return Err(err(format!(
                    "box {i} is degenerate: [{x0}, {y0}, {x1}, {y1}]"
                )));
            }
        }
        if let Some(labels) = &self.labels {
            labels
                .validate(self.boxes.len())
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(Page {
            page_id: self.page_id,
            width_px: self.width_px,
            height_px: self.height_px,
            boxes: self.boxes,
            labels: self.labels,
            image_path: self.image_path.map(|rel| base_dir.join(rel)),
        })
    }
}

/// Writes one page as pretty JSON.
pub fn save_page(path: &Path, page: &Page) -> Result<(), IoError> {
    let doc = PageDocument::from_page(page);
    let json = serde_json::to_vec_pretty(&doc).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, json)?;
    Ok(())
}

/// Reads and validates one page document.
pub fn load_page(path: &Path) -> Result<Page, IoError> {
    let shown = path.display().to_string();
    let raw = fs::read(path)?;
    let doc: PageDocument = serde_json::from_slice(&raw).map_err(|source| IoError::Json {
        path: shown.clone(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    doc.into_page(base, &shown)
}

/// Loads every `.json` page in a directory, ordered by file name.
pub fn load_pages_dir(dir: &Path) -> Result<Vec<Page>, IoError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files.iter().map(|p| load_page(p)).collect()
}
