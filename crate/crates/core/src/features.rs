//! Node and edge feature assembly.
//!
//! Node inputs concatenate pooled image features (when an image provider is
//! configured) with the per-box layout vector. Edge inputs concatenate, in
//! fixed order, the two endpoint embeddings, a sinusoidal encoding of the
//! neighbor's reading-order rank around the pivot, and an 18-dimensional
//! pairwise geometry vector built from scale-free box deltas.

use thiserror::Error;

use crate::doc::{min_bounding_rect, GeomError, NormBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("sinusoidal encoding needs a positive even dimension, got {0}")]
    OddDim(usize),
    #[error("feature map has no cells")]
    EmptyFeatureMap,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("edge features need at least one of pair, rope, rel enabled")]
    AllPartsDisabled,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Scale-free deltas between a subject box and an object box.
///
/// Center offsets are normalized by the measuring box's own extent, so the
/// six values are invariant to translating or uniformly scaling the page.
/// Offsets are clamped to `OFFSET_CLAMP` because sliver boxes (bullets, thin
/// glyphs) would otherwise produce ratios in the hundreds and destabilize
/// whatever consumes the feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelDelta {
    /// `(x_subj - x_obj) / w_subj`
    pub dx_by_subj: f64,
    /// `(y_subj - y_obj) / h_subj`
    pub dy_by_subj: f64,
    /// `ln(w_subj / w_obj)`
    pub log_w_ratio: f64,
    /// `ln(h_subj / h_obj)`
    pub log_h_ratio: f64,
    /// `(x_obj - x_subj) / w_obj`
    pub dx_by_obj: f64,
    /// `(y_obj - y_subj) / h_obj`
    pub dy_by_obj: f64,
}

impl RelDelta {
    pub fn to_array(self) -> [f64; 6] {
        [
            self.dx_by_subj,
            self.dy_by_subj,
            self.log_w_ratio,
            self.log_h_ratio,
            self.dx_by_obj,
            self.dy_by_obj,
        ]
    }
}

/// Largest magnitude kept for an offset-over-extent ratio.
pub const OFFSET_CLAMP: f64 = 25.0;

/// Pairwise geometry deltas between subject `s` and object `o`.
pub fn rel_delta(s: &NormBox, o: &NormBox) -> Result<RelDelta, FeatureError> {
    for b in [s, o] {
        if !(b.width() > 0.0 && b.height() > 0.0) {
            return Err(GeomError::DegenerateBox {
                xmin: b.xmin,
                ymin: b.ymin,
                xmax: b.xmax,
                ymax: b.ymax,
            }
            .into());
        }
    }
    let (sx, sy) = s.center();
    let (ox, oy) = o.center();
    let cl = |v: f64| v.clamp(-OFFSET_CLAMP, OFFSET_CLAMP);
    Ok(RelDelta {
        dx_by_subj: cl((sx - ox) / s.width()),
        dy_by_subj: cl((sy - oy) / s.height()),
        log_w_ratio: (s.width() / o.width()).ln(),
        log_h_ratio: (s.height() / o.height()).ln(),
        dx_by_obj: cl((ox - sx) / o.width()),
        dy_by_obj: cl((oy - sy) / o.height()),
    })
}

/// The 18-dimensional pair geometry vector: deltas of subject-object,
/// subject-enclosure, and object-enclosure, where the enclosure is the
/// minimum bounding rectangle of the two boxes.
pub fn rel_feature(s: &NormBox, o: &NormBox) -> Result<[f64; 18], FeatureError> {
    let r = min_bounding_rect([*s, *o])?;
    let so = rel_delta(s, o)?.to_array();
    let sr = rel_delta(s, &r)?.to_array();
    let or = rel_delta(o, &r)?.to_array();
    let mut out = [0.0; 18];
    out[..6].copy_from_slice(&so);
    out[6..12].copy_from_slice(&sr);
    out[12..].copy_from_slice(&or);
    Ok(out)
}

/// Reading-order rank of each listed neighbor: neighbors sorted by
/// `(y-center, x-center, id)`, rank aligned with the input order.
pub fn reading_order_codes(neighbors: &[usize], boxes: &[NormBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..neighbors.len()).collect();
    order.sort_by(|&a, &b| {
        let (ax, ay) = boxes[neighbors[a]].center();
        let (bx, by) = boxes[neighbors[b]].center();
        ay.total_cmp(&by)
            .then(ax.total_cmp(&bx))
            .then(neighbors[a].cmp(&neighbors[b]))
    });
    let mut codes = vec![0usize; neighbors.len()];
    for (rank, &slot) in order.iter().enumerate() {
        codes[slot] = rank;
    }
    codes
}

/// Interleaved sinusoidal position encoding of an integer index.
///
/// Entry `2t` is `sin(index / 10000^(2t/dim))` and entry `2t + 1` the
/// matching cosine.
pub fn sinusoidal_encode(index: usize, dim: usize) -> Result<Vec<f64>, FeatureError> {
    if dim == 0 || dim % 2 != 0 {
        return Err(FeatureError::OddDim(dim));
    }
    let mut out = vec![0.0; dim];
    for t in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * t as f64 / dim as f64);
        let arg = index as f64 / freq;
        out[2 * t] = arg.sin();
        out[2 * t + 1] = arg.cos();
    }
    Ok(out)
}

/// A dense feature map, `channels` planes of `height x width`, covering the
/// unit square of the page.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width);
        FeatureMap {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn empty() -> Self {
        FeatureMap {
            channels: 0,
            height: 0,
            width: 0,
            data: Vec::new(),
        }
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Bilinear read at continuous map coordinates, pixel centers at half
/// integers, samples outside the map clamped to the border.
fn bilinear(map: &FeatureMap, c: usize, x: f64, y: f64) -> f64 {
    let xs = (x - 0.5).clamp(0.0, (map.width - 1) as f64);
    let ys = (y - 0.5).clamp(0.0, (map.height - 1) as f64);
    let x0 = xs.floor() as usize;
    let y0 = ys.floor() as usize;
    let x1 = (x0 + 1).min(map.width - 1);
    let y1 = (y0 + 1).min(map.height - 1);
    let fx = xs - x0 as f64;
    let fy = ys - y0 as f64;
    map.at(c, y0, x0) * (1.0 - fx) * (1.0 - fy)
        + map.at(c, y0, x1) * fx * (1.0 - fy)
        + map.at(c, y1, x0) * (1.0 - fx) * fy
        + map.at(c, y1, x1) * fx * fy
}

/// Average-pooled bilinear region-of-interest sampling.
///
/// The box is cut into an `out x out` bin grid; each bin averages
/// `sampling_ratio^2` bilinear reads at regularly spaced interior points.
/// Output is channel-major: `channels * out * out` values, bins row-major
/// within each channel. Linear in the feature map values.
pub fn roi_align(
    map: &FeatureMap,
    b: &NormBox,
    out: usize,
    sampling_ratio: usize,
) -> Result<Vec<f64>, FeatureError> {
    if map.channels == 0 || map.height == 0 || map.width == 0 {
        return Err(FeatureError::EmptyFeatureMap);
    }
    assert!(out > 0 && sampling_ratio > 0);
    let px0 = b.xmin * map.width as f64;
    let py0 = b.ymin * map.height as f64;
    let bin_w = b.width() * map.width as f64 / out as f64;
    let bin_h = b.height() * map.height as f64 / out as f64;
    let s = sampling_ratio;
    let inv = 1.0 / (s * s) as f64;
    let mut feats = Vec::with_capacity(map.channels * out * out);
    for c in 0..map.channels {
        for by in 0..out {
            for bx in 0..out {
                let mut acc = 0.0;
                for sy in 0..s {
                    for sx in 0..s {
                        let x = px0 + (bx as f64 + (sx as f64 + 0.5) / s as f64) * bin_w;
                        let y = py0 + (by as f64 + (sy as f64 + 0.5) / s as f64) * bin_h;
                        acc += bilinear(map, c, x, y);
                    }
                }
                feats.push(acc * inv);
            }
        }
    }
    Ok(feats)
}

/// Page raster in grayscale, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PageRaster {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<f64>,
}

/// Turns an optional page raster into the feature map ROIAlign pools from.
pub trait FeatureProvider {
    fn channels(&self) -> usize;
    fn feature_map(&self, raster: Option<&PageRaster>) -> FeatureMap;
}

/// No image pathway: zero channels, node inputs are layout-only.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullProvider;

impl FeatureProvider for NullProvider {
    fn channels(&self) -> usize {
        0
    }

    fn feature_map(&self, _raster: Option<&PageRaster>) -> FeatureMap {
        FeatureMap::empty()
    }
}

/// Downsamples the page raster to a square grayscale map by bilinear
/// interpolation. Pages without a raster pool a blank white page.
#[derive(Debug, Clone, Copy)]
pub struct RawPixelProvider {
    pub size: usize,
}

impl Default for RawPixelProvider {
    fn default() -> Self {
        RawPixelProvider { size: 112 }
    }
}

impl FeatureProvider for RawPixelProvider {
    fn channels(&self) -> usize {
        1
    }

    fn feature_map(&self, raster: Option<&PageRaster>) -> FeatureMap {
        let n = self.size;
        let Some(r) = raster else {
            return FeatureMap::new(1, n, n, vec![1.0; n * n]);
        };
        let src = FeatureMap::new(1, r.height, r.width, r.gray.clone());
        let mut data = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let x = (col as f64 + 0.5) * r.width as f64 / n as f64;
                let y = (row as f64 + 0.5) * r.height as f64 / n as f64;
                data.push(bilinear(&src, 0, x, y));
            }
        }
        FeatureMap::new(1, n, n, data)
    }
}

/// Node input: pooled image features first, then the layout vector.
pub fn assemble_node_input(image_feat: &[f64], layout: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(image_feat.len() + layout.len());
    out.extend_from_slice(image_feat);
    out.extend_from_slice(layout);
    out
}

/// Which parts make up an edge input vector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeFeatureConfig {
    /// Endpoint embeddings, pivot first.
    pub pair: bool,
    /// Sinusoidal encoding of the neighbor's reading-order rank.
    pub rope: bool,
    /// The 18-dimensional pairwise geometry vector.
    pub rel: bool,
    pub rope_dim: usize,
    /// Center-offset distance and angle, appended after `rel`.
    pub polar: bool,
    /// Endpoint node-class logits, appended last.
    pub node_class: bool,
}

impl Default for EdgeFeatureConfig {
    fn default() -> Self {
        EdgeFeatureConfig {
            pair: true,
            rope: true,
            rel: true,
            rope_dim: 32,
            polar: false,
            node_class: false,
        }
    }
}

impl EdgeFeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.pair || self.rope || self.rel) {
            return Err(FeatureError::AllPartsDisabled);
        }
        if self.rope && (self.rope_dim == 0 || self.rope_dim % 2 != 0) {
            return Err(FeatureError::OddDim(self.rope_dim));
        }
        Ok(())
    }

    /// Input width for embedding width `h` and `c` node classes.
    pub fn input_dim(&self, h: usize, n_classes: usize) -> usize {
        let mut d = 0;
        if self.pair {
            d += 2 * h;
        }
        if self.rope {
            d += self.rope_dim;
        }
        if self.rel {
            d += 18;
        }
        if self.polar {
            d += 2;
        }
        if self.node_class {
            d += 2 * n_classes;
        }
        d
    }
}

/// Edge input for one oriented pair: enabled parts concatenated in the
/// fixed order pair, rope, rel.
pub fn assemble_edge_input(
    emb_i: &[f64],
    emb_j: &[f64],
    code_ij: usize,
    rel: &[f64; 18],
    cfg: &EdgeFeatureConfig,
) -> Result<Vec<f64>, FeatureError> {
    cfg.validate()?;
    if emb_i.len() != emb_j.len() {
        return Err(FeatureError::ShapeMismatch(format!(
            "endpoint embeddings differ: {} vs {}",
            emb_i.len(),
            emb_j.len()
        )));
    }
    let mut out = Vec::new();
    if cfg.pair {
        out.extend_from_slice(emb_i);
        out.extend_from_slice(emb_j);
    }
    if cfg.rope {
        out.extend(sinusoidal_encode(code_ij, cfg.rope_dim)?);
    }
    if cfg.rel {
        out.extend_from_slice(rel);
    }
    Ok(out)
}
