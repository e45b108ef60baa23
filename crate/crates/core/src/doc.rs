//! Pages, text boxes, gold labels, and normalized-box geometry.
//!
//! All downstream stages work on [`NormBox`] coordinates in the unit square;
//! pixel geometry only exists at the ingestion and rendering boundaries.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate box ({xmin}, {ymin}, {xmax}, {ymax}): needs xmin < xmax and ymin < ymax inside the page")]
    DegenerateBox {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },
    #[error("minimum bounding rectangle of an empty set")]
    EmptySet,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid gold labels: {0}")]
pub struct InvalidLabels(pub String);

/// One OCR text box in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub id: usize,
    /// `[xmin, ymin, xmax, ymax]` in pixels.
    pub bbox_px: [f64; 4],
    pub text: Option<String>,
}

/// Gold annotations for one page: a category per box, a partition of the
/// boxes into instance groups, and optional directed group-to-group links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabels {
    pub node_category: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub links: Option<Vec<(usize, usize)>>,
}

impl GoldLabels {
    /// Checks that categories cover every box and the groups partition them.
    pub fn validate(&self, n_boxes: usize) -> Result<(), InvalidLabels> {
        if self.node_category.len() != n_boxes {
            return Err(InvalidLabels(format!(
                "node_category has {} entries for {} boxes",
                self.node_category.len(),
                n_boxes
            )));
        }
        let mut seen = vec![false; n_boxes];
        for (g, group) in self.groups.iter().enumerate() {
            if group.is_empty() {
                return Err(InvalidLabels(format!("group {g} is empty")));
            }
            for &m in group {
                if m >= n_boxes {
                    return Err(InvalidLabels(format!(
                        "group {g} references box {m}, page has {n_boxes}"
                    )));
                }
                if seen[m] {
                    return Err(InvalidLabels(format!("box {m} appears in two groups")));
                }
                seen[m] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(InvalidLabels(format!("box {missing} belongs to no group")));
        }
        if let Some(links) = &self.links {
            for &(s, d) in links {
                if s >= self.groups.len() || d >= self.groups.len() {
                    return Err(InvalidLabels(format!(
                        "link ({s}, {d}) references a missing group, page has {}",
                        self.groups.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Group index per box. Labels must have been validated.
    pub fn node_to_group(&self, n_boxes: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_boxes];
        for (g, group) in self.groups.iter().enumerate() {
            for &m in group {
                out[m] = g;
            }
        }
        out
    }
}

/// One document page: identity, pixel size, text boxes, optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub page_id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub boxes: Vec<TextBox>,
    pub labels: Option<GoldLabels>,
    /// Resolved path of the page raster, when one exists.
    pub image_path: Option<PathBuf>,
}

impl Page {
    /// Normalizes every box on the page, in id order.
    pub fn norm_boxes(&self) -> Result<Vec<NormBox>, GeomError> {
        self.boxes.iter().map(|b| normalize_box(b, self)).collect()
    }
}

/// An axis-aligned box in page-normalized coordinates (unit square).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl NormBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeomError> {
        let ok = (0.0..1.0).contains(&xmin)
            && (0.0..1.0).contains(&ymin)
            && xmin < xmax
            && ymin < ymax
            && xmax <= 1.0
            && ymax <= 1.0;
        if !ok {
            return Err(GeomError::DegenerateBox {
                xmin,
                ymin,
                xmax,
                ymax,
            });
        }
        Ok(NormBox {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    /// Center point `(x, y)`.
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.xmin + self.xmax),
            0.5 * (self.ymin + self.ymax),
        )
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Which per-box layout vector the model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxInfoMode {
    /// `(xmin, ymin, w, h)`
    Four,
    /// `(xmin, ymin, xmax, ymax, xctr, yctr, w, h)`
    Eight,
}

impl BoxInfoMode {
    pub fn dim(&self) -> usize {
        match self {
            BoxInfoMode::Four => 4,
            BoxInfoMode::Eight => 8,
        }
    }
}

/// Clamps a pixel box to the page and scales it into the unit square.
pub fn normalize_box(b: &TextBox, page: &Page) -> Result<NormBox, GeomError> {
    let w = page.width_px as f64;
    let h = page.height_px as f64;
    let xmin = b.bbox_px[0].clamp(0.0, w);
    let ymin = b.bbox_px[1].clamp(0.0, h);
    let xmax = b.bbox_px[2].clamp(0.0, w);
    let ymax = b.bbox_px[3].clamp(0.0, h);
    NormBox::new(xmin / w, ymin / h, xmax / w, ymax / h)
}

/// The per-box coordinate vector in the order the model was trained with.
pub fn layout_vector(b: &NormBox, mode: BoxInfoMode) -> Vec<f64> {
    let (xctr, yctr) = b.center();
    match mode {
        BoxInfoMode::Four => vec![b.xmin, b.ymin, b.width(), b.height()],
        BoxInfoMode::Eight => vec![
            b.xmin,
            b.ymin,
            b.xmax,
            b.ymax,
            xctr,
            yctr,
            b.width(),
            b.height(),
        ],
    }
}

/// Smallest axis-aligned box containing all inputs.
pub fn min_bounding_rect<I>(boxes: I) -> Result<NormBox, GeomError>
where
    I: IntoIterator<Item = NormBox>,
{
    let mut it = boxes.into_iter();
    let first = it.next().ok_or(GeomError::EmptySet)?;
    let mut out = first;
    for b in it {
        out.xmin = out.xmin.min(b.xmin);
        out.ymin = out.ymin.min(b.ymin);
        out.xmax = out.xmax.max(b.xmax);
        out.ymax = out.ymax.max(b.ymax);
    }
    Ok(out)
}

/// Overlap length of two closed intervals; zero when disjoint.
pub fn interval_overlap_1d(a: (f64, f64), b: (f64, f64)) -> f64 {
    debug_assert!(a.0 <= a.1 && b.0 <= b.1);
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn page_1000() -> Page {
        Page {
            page_id: "t".into(),
            width_px: 1000,
            height_px: 1000,
            boxes: vec![],
            labels: None,
            image_path: None,
        }
    }

    fn tb(bbox: [f64; 4]) -> TextBox {
        TextBox {
            id: 0,
            bbox_px: bbox,
            text: None,
        }
    }

    #[test]
    fn normalize_scales_into_unit_square() {
        let b = normalize_box(&tb([100.0, 200.0, 300.0, 600.0]), &page_1000()).unwrap();
        assert_eq!(
            b,
            NormBox {
                xmin: 0.1,
                ymin: 0.2,
                xmax: 0.3,
                ymax: 0.6
            }
        );
    }

    #[test]
    fn normalize_clamps_overflow_to_page() {
        let b = normalize_box(&tb([-50.0, 10.0, 1100.0, 20.0]), &page_1000()).unwrap();
        assert_eq!(b.xmin, 0.0);
        assert_eq!(b.xmax, 1.0);
    }

    #[test]
    fn normalize_rejects_degenerate_after_clamp() {
        // Fully outside the page on the left: clamps to a zero-width sliver.
        let err = normalize_box(&tb([-50.0, 10.0, -10.0, 20.0]), &page_1000()).unwrap_err();
        assert!(matches!(err, GeomError::DegenerateBox { .. }));
        let err = normalize_box(&tb([10.0, 20.0, 10.0, 30.0]), &page_1000()).unwrap_err();
        assert!(matches!(err, GeomError::DegenerateBox { .. }));
    }

    #[test]
    fn layout_vector_eight_and_four() {
        let b = NormBox::new(0.1, 0.2, 0.3, 0.6).unwrap();
        let v8 = layout_vector(&b, BoxInfoMode::Eight);
        for (got, want) in v8.iter().zip([0.1, 0.2, 0.3, 0.6, 0.2, 0.4, 0.2, 0.4]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let v4 = layout_vector(&b, BoxInfoMode::Four);
        for (got, want) in v4.iter().zip([0.1, 0.2, 0.2, 0.4]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn mbr_of_two_boxes() {
        let a = NormBox::new(0.1, 0.1, 0.2, 0.2).unwrap();
        let b = NormBox::new(0.3, 0.15, 0.5, 0.4).unwrap();
        let r = min_bounding_rect([a, b]).unwrap();
        assert_eq!(r, NormBox::new(0.1, 0.1, 0.5, 0.4).unwrap());
    }

    #[test]
    fn mbr_of_empty_set_errors() {
        assert_eq!(min_bounding_rect([]).unwrap_err(), GeomError::EmptySet);
    }

    #[test]
    fn interval_overlap_cases() {
        assert_abs_diff_eq!(interval_overlap_1d((0.0, 1.0), (0.5, 2.0)), 0.5);
        assert_eq!(interval_overlap_1d((0.0, 1.0), (2.0, 3.0)), 0.0);
        // Touching intervals overlap by exactly zero.
        assert_eq!(interval_overlap_1d((0.0, 1.0), (1.0, 2.0)), 0.0);
    }

    #[test]
    fn labels_partition_checks() {
        let good = GoldLabels {
            node_category: vec![0, 1, 0],
            groups: vec![vec![0, 2], vec![1]],
            links: Some(vec![(0, 1)]),
        };
        good.validate(3).unwrap();
        assert_eq!(good.node_to_group(3), vec![0, 1, 0]);

        let overlap = GoldLabels {
            node_category: vec![0, 1],
            groups: vec![vec![0, 1], vec![1]],
            links: None,
        };
        assert!(overlap.validate(2).is_err());

        let uncovered = GoldLabels {
            node_category: vec![0, 1],
            groups: vec![vec![0]],
            links: None,
        };
        assert!(uncovered.validate(2).is_err());

        let bad_link = GoldLabels {
            node_category: vec![0],
            groups: vec![vec![0]],
            links: Some(vec![(0, 3)]),
        };
        assert!(bad_link.validate(1).is_err());
    }

    proptest! {
        // Normalization is scale-free: the same layout at 2x resolution
        // normalizes to the same unit-square box.
        #[test]
        fn normalize_is_resolution_invariant(
            x0 in 0.0..900.0f64, y0 in 0.0..900.0f64,
            w in 1.0..100.0f64, h in 1.0..100.0f64,
        ) {
            let bx = [x0, y0, x0 + w, y0 + h];
            let b1 = normalize_box(&tb(bx), &page_1000()).unwrap();
            let mut big = page_1000();
            big.width_px = 2000;
            big.height_px = 2000;
            let bx2 = [2.0 * x0, 2.0 * y0, 2.0 * (x0 + w), 2.0 * (y0 + h)];
            let b2 = normalize_box(&tb(bx2), &big).unwrap();
            prop_assert!((b1.xmin - b2.xmin).abs() < 1e-12);
            prop_assert!((b1.ymin - b2.ymin).abs() < 1e-12);
            prop_assert!((b1.xmax - b2.xmax).abs() < 1e-12);
            prop_assert!((b1.ymax - b2.ymax).abs() < 1e-12);
        }

        // mBR is idempotent and order-free.
        #[test]
        fn mbr_algebra(
            coords in proptest::collection::vec((0.0..0.9f64, 0.0..0.9f64, 0.01..0.1f64, 0.01..0.1f64), 1..8)
        ) {
            let boxes: Vec<NormBox> = coords
                .iter()
                .map(|&(x, y, w, h)| NormBox::new(x, y, (x + w).min(1.0), (y + h).min(1.0)).unwrap())
                .collect();
            let r = min_bounding_rect(boxes.iter().copied()).unwrap();
            let mut rev = boxes.clone();
            rev.reverse();
            prop_assert_eq!(min_bounding_rect(rev).unwrap(), r);
            prop_assert_eq!(min_bounding_rect([r]).unwrap(), r);
            for b in &boxes {
                prop_assert!(r.xmin <= b.xmin && r.xmax >= b.xmax);
                prop_assert!(r.ymin <= b.ymin && r.ymax >= b.ymax);
            }
        }
    }
}
