//! Adapter for FUNSD-style form annotations: entities with word boxes,
//! labels, and entity-to-entity links.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::doc::{GoldLabels, Page, TextBox};
use crate::io::IoError;

/// Category names, index-aligned with generated node labels.
pub const FUNSD_CATEGORIES: [&str; 4] = ["header", "question", "answer", "other"];

/// Granularity of the produced boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunsdLevel {
    /// One box per word; an entity's words form a group.
    Word,
    /// One box per entity; every group is a single box.
    Entity,
}

#[derive(Deserialize)]
struct FunsdFile {
    form: Vec<FunsdEntity>,
}

#[derive(Deserialize)]
struct FunsdEntity {
    id: i64,
    #[serde(default)]
    text: Option<String>,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    label: String,
    #[serde(default)]
    words: Vec<FunsdWord>,
    #[serde(default)]
    linking: Vec<[i64; 2]>,
}

#[derive(Deserialize)]
struct FunsdWord {
    #[serde(default)]
    text: Option<String>,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

fn category_index(label: &str, page_id: &str, warnings: &mut Vec<String>) -> usize {
    match FUNSD_CATEGORIES.iter().position(|&c| c == label) {
        Some(i) => i,
        None => {
            warnings.push(format!(
                "{page_id}: unknown label {label:?} treated as \"other\""
            ));
            FUNSD_CATEGORIES.len() - 1
        }
    }
}

fn usable_box(b: [f64; 4]) -> bool {
    b.iter().all(|v| v.is_finite()) && b[0] < b[2] && b[1] < b[3]
}

fn usable_text(t: &Option<String>) -> bool {
    t.as_deref().is_some_and(|s| !s.trim().is_empty())
}

/// Converts one annotation file's JSON to a labeled [`Page`]. The page size
/// is derived from the content extent. Degenerate or empty words, empty
/// entities, and links to dropped entities are skipped with a warning.
pub fn funsd_to_page(
    json: &str,
    page_id: &str,
    level: FunsdLevel,
) -> Result<(Option<Page>, Vec<String>), IoError> {
    let file: FunsdFile = serde_json::from_str(json).map_err(|source| IoError::Json {
        path: page_id.to_string(),
        source,
    })?;
    let mut warnings = Vec::new();
    let mut boxes: Vec<TextBox> = Vec::new();
    let mut categories = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    // FUNSD entity id to group index, for link resolution.
    let mut group_of_entity: BTreeMap<i64, usize> = BTreeMap::new();

    for entity in &file.form {
        let category = category_index(&entity.label, page_id, &mut warnings);
        let mut members = Vec::new();
        match level {
            FunsdLevel::Word => {
                for (w, word) in entity.words.iter().enumerate() {
                    if !usable_box(word.bbox) {
                        warnings.push(format!(
                            "{page_id}: entity {} word {w} has a degenerate box, skipped",
                            entity.id
                        ));
                        continue;
                    }
                    if !usable_text(&word.text) {
                        warnings.push(format!(
                            "{page_id}: entity {} word {w} has no text, skipped",
                            entity.id
                        ));
                        continue;
                    }
                    let id = boxes.len();
                    boxes.push(TextBox {
                        id,
                        bbox_px: word.bbox,
                        text: word.text.clone(),
                    });
                    categories.push(category);
                    members.push(id);
                }
            }
            FunsdLevel::Entity => {
                if !usable_box(entity.bbox) {
                    warnings.push(format!(
                        "{page_id}: entity {} has a degenerate box, skipped",
                        entity.id
                    ));
                } else {
                    let id = boxes.len();
                    boxes.push(TextBox {
                        id,
                        bbox_px: entity.bbox,
                        text: entity.text.clone(),
                    });
                    categories.push(category);
                    members.push(id);
                }
            }
        }
        if members.is_empty() {
            warnings.push(format!(
                "{page_id}: entity {} kept no boxes, dropped",
                entity.id
            ));
            continue;
        }
        group_of_entity.insert(entity.id, groups.len());
        groups.push(members);
    }

    if boxes.is_empty() {
        warnings.push(format!("{page_id}: no usable boxes, page skipped"));
        return Ok((None, warnings));
    }

    // Links are recorded on both endpoints; dedup while mapping ids.
    let mut links: Vec<(usize, usize)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for entity in &file.form {
        for &[from, to] in &entity.linking {
            if !seen.insert((from, to)) {
                continue;
            }
            match (group_of_entity.get(&from), group_of_entity.get(&to)) {
                (Some(&f), Some(&t)) => links.push((f, t)),
                _ => warnings.push(format!(
                    "{page_id}: link ({from}, {to}) touches a dropped entity, skipped"
                )),
            }
        }
    }

    let width = boxes
        .iter()
        .map(|b| b.bbox_px[2])
        .fold(0.0f64, f64::max)
        .ceil()
        .max(1.0) as u32;
    let height = boxes
        .iter()
        .map(|b| b.bbox_px[3])
        .fold(0.0f64, f64::max)
        .ceil()
        .max(1.0) as u32;

    let labels = GoldLabels {
        node_category: categories,
        groups,
        links: Some(links),
    };
    labels.validate(boxes.len())?;
    Ok((
        Some(Page {
            page_id: page_id.to_string(),
            width_px: width,
            height_px: height,
            boxes,
            labels: Some(labels),
            image_path: None,
        }),
        warnings,
    ))
}

/// Loads every annotation file in a directory, ordered by file name. Pages
/// that keep no usable boxes are skipped with a warning.
pub fn load_funsd_dir(dir: &Path, level: FunsdLevel) -> Result<(Vec<Page>, Vec<String>), IoError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let mut pages = Vec::new();
    let mut warnings = Vec::new();
    for path in &files {
        let json = fs::read_to_string(path)?;
        let page_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (page, mut w) = funsd_to_page(&json, &page_id, level)?;
        warnings.append(&mut w);
        if let Some(p) = page {
            pages.push(p);
        }
    }
    Ok((pages, warnings))
}
