//! Forward pass: feature preparation, graph refresh, message passing, and
//! the two classification heads.

use crate::doc::{layout_vector, GoldLabels, NormBox, Page};
use crate::features::{
    assemble_node_input, reading_order_codes, rel_feature, roi_align, sinusoidal_encode,
    FeatureProvider, NullProvider, PageRaster, RawPixelProvider,
};
use crate::model::{ImageProviderConfig, ModelConfig, ModelError, RefreshMode};
use crate::nn::{ParamStore, Tape, Tensor, Var};
use crate::sampling::{sample_directional, SampledGraph};

/// A page turned into model inputs: normalized boxes, the fused node input
/// matrix, and the sampled candidate graph.
#[derive(Debug, Clone)]
pub struct PreparedPage {
    pub page_id: String,
    pub boxes: Vec<NormBox>,
    /// One row per box: pooled image features then the layout vector.
    pub node_input: Tensor,
    /// The geometric candidate graph; its edges are the pairs the edge head
    /// scores.
    pub graph: SampledGraph,
    pub labels: Option<GoldLabels>,
}

impl PreparedPage {
    pub fn n_nodes(&self) -> usize {
        self.boxes.len()
    }
}

/// Builds model inputs for one page. The raster is optional; without one the
/// image pathway pools a blank page.
pub fn prepare_page(
    cfg: &ModelConfig,
    page: &Page,
    raster: Option<&PageRaster>,
) -> Result<PreparedPage, ModelError> {
    cfg.validate()?;
    let boxes = page.norm_boxes()?;
    if let Some(labels) = &page.labels {
        labels.validate(boxes.len())?;
    }
    let map = match cfg.image_provider {
        ImageProviderConfig::Null => NullProvider.feature_map(raster),
        ImageProviderConfig::RawPixel { size } => RawPixelProvider { size }.feature_map(raster),
    };
    let d = cfg.node_input_dim();
    let mut data = Vec::with_capacity(boxes.len() * d);
    for b in &boxes {
        let image_feat = if map.channels > 0 {
            roi_align(&map, b, cfg.roi.output_size, cfg.roi.sampling_ratio)?
        } else {
            Vec::new()
        };
        let layout = layout_vector(b, cfg.box_info);
        data.extend(assemble_node_input(&image_feat, &layout));
    }
    let graph = sample_directional(&boxes, &cfg.sampler);
    Ok(PreparedPage {
        page_id: page.page_id.clone(),
        node_input: Tensor::matrix(boxes.len(), d, data),
        boxes,
        graph,
        labels: page.labels.clone(),
    })
}

/// Tape handles produced by [`forward`].
pub struct ForwardVars {
    /// `[n, n_node_classes]` node class logits.
    pub node_logits: Var,
    /// Edge logits, absent when the page has no candidate pairs. With a
    /// symmetric edge head this is `[m, 2]`, row `r` scoring `candidates[r]`.
    /// Otherwise it is `[2m, 2]`: row `2r` scores the oriented pair
    /// `(i, j) = candidates[r]` and row `2r + 1` scores `(j, i)`.
    pub edge_logits: Option<Var>,
    /// Candidate pairs in canonical `(low, high)` order.
    pub candidates: Vec<(usize, usize)>,
    /// The graph each message-passing layer actually used.
    pub layer_graphs: Vec<SampledGraph>,
}

/// Plain-tensor forward results for inference and evaluation.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub node_logits: Tensor,
    /// Empty `[0, 2]` when the page has no candidate pairs; see
    /// [`ForwardVars::edge_logits`] for the row contract.
    pub edge_logits: Tensor,
    pub candidates: Vec<(usize, usize)>,
    pub layer_graphs: Vec<SampledGraph>,
}

fn fc(
    tape: &mut Tape,
    params: &ParamStore,
    name: &str,
    x: Var,
) -> Result<Var, ModelError> {
    let w_name = format!("{name}.w");
    let b_name = format!("{name}.b");
    let w = tape.param(&w_name, params.get(&w_name)?);
    let b = tape.param(&b_name, params.get(&b_name)?);
    Ok(tape.linear(x, w, b)?)
}

/// k-nearest-neighbor graph over rows of `emb` extended with the layout
/// vector, squared euclidean distance, ties broken by lower id.
fn knn_in_feature_space(emb: &Tensor, boxes: &[NormBox], k: usize) -> SampledGraph {
    let n = boxes.len();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut p = emb.row(i).to_vec();
        p.extend(layout_vector(&boxes[i], crate::doc::BoxInfoMode::Eight));
        points.push(p);
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2 = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, j)
            })
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in cand.iter().take(k) {
            pairs.push((i, j));
        }
    }
    SampledGraph::new(n, pairs)
}

/// Resolves one layer's graph according to its refresh mode.
fn refresh_graph(
    mode: RefreshMode,
    static_graph: &SampledGraph,
    emb: &Tensor,
    boxes: &[NormBox],
) -> SampledGraph {
    match mode {
        RefreshMode::Static => static_graph.clone(),
        RefreshMode::DynamicKnn { k } => knn_in_feature_space(emb, boxes, k),
        RefreshMode::Union { k } => {
            static_graph.union(&knn_in_feature_space(emb, boxes, k))
        }
    }
}

/// One max-aggregation edge-convolution layer. Every node contributes a
/// self-loop message first, then one message per neighbor; each message MLPs
/// the concatenation of the center embedding and the neighbor difference,
/// and the node takes the columnwise max over its messages.
fn edgeconv(
    tape: &mut Tape,
    params: &ParamStore,
    layer: usize,
    x: Var,
    graph: &SampledGraph,
) -> Result<Var, ModelError> {
    let n = graph.n_nodes();
    let adjacency = graph.adjacency();
    let mut centers = Vec::new();
    let mut neighbors = Vec::new();
    let mut segments = Vec::new();
    for i in 0..n {
        centers.push(i);
        neighbors.push(i);
        segments.push(i);
        for &j in &adjacency[i] {
            centers.push(i);
            neighbors.push(j);
            segments.push(i);
        }
    }
    let xc = tape.gather_rows(x, &centers)?;
    let xn = tape.gather_rows(x, &neighbors)?;
    let diff = tape.sub(xn, xc)?;
    let inp = tape.concat_cols(&[xc, diff])?;
    let h1 = fc(tape, params, &format!("gnn.{layer}.fc1"), inp)?;
    let h1 = tape.relu(h1);
    let h2 = fc(tape, params, &format!("gnn.{layer}.fc2"), h1)?;
    Ok(tape.segment_max(h2, &segments, n)?)
}

/// Runs the full model on a prepared page, recording onto `tape`.
pub fn forward(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &ModelConfig,
    page: &PreparedPage,
) -> Result<ForwardVars, ModelError> {
    cfg.validate()?;
    let n = page.n_nodes();
    let boxes = &page.boxes;

    let x0 = tape.input(page.node_input.clone());
    let f1 = fc(tape, params, "fusion.fc1", x0)?;
    let f1 = tape.relu(f1);
    let mut state = fc(tape, params, "fusion.fc2", f1)?;

    let mut layer_graphs = Vec::with_capacity(cfg.graph_refresh.len());
    for (l, &mode) in cfg.graph_refresh.iter().enumerate() {
        let graph = refresh_graph(mode, &page.graph, tape.value(state), boxes);
        let conv = edgeconv(tape, params, l, state, &graph)?;
        state = if cfg.gnn_residual {
            tape.rowwise_max(&[state, conv])?
        } else {
            conv
        };
        layer_graphs.push(graph);
    }

    let nh = fc(tape, params, "node_head.fc", state)?;
    let nh = tape.relu(nh);
    let node_logits = fc(tape, params, "node_head.out", nh)?;

    let candidates: Vec<(usize, usize)> = page.graph.edges().to_vec();
    let edge_logits = if candidates.is_empty() {
        None
    } else {
        let mut pivots = Vec::with_capacity(2 * candidates.len());
        let mut others = Vec::with_capacity(2 * candidates.len());
        for &(i, j) in &candidates {
            pivots.push(i);
            others.push(j);
            pivots.push(j);
            others.push(i);
        }
        let efc = &cfg.edge_features;
        let mut parts: Vec<Var> = Vec::new();
        if efc.pair {
            parts.push(tape.gather_rows(state, &pivots)?);
            parts.push(tape.gather_rows(state, &others)?);
        }
        if efc.rope {
            // Rank of each neighbor in its pivot's reading order, looked up
            // through the candidate graph's adjacency.
            let adjacency = page.graph.adjacency();
            let codes: Vec<Vec<usize>> = adjacency
                .iter()
                .map(|nbrs| reading_order_codes(nbrs, boxes))
                .collect();
            let mut rows = Vec::with_capacity(2 * candidates.len() * efc.rope_dim);
            for (&p, &o) in pivots.iter().zip(&others) {
                let pos = adjacency[p]
                    .binary_search(&o)
                    .expect("candidate endpoints are graph neighbors");
                rows.extend(sinusoidal_encode(codes[p][pos], efc.rope_dim)?);
            }
            parts.push(tape.input(Tensor::matrix(2 * candidates.len(), efc.rope_dim, rows)));
        }
        if efc.rel {
            let mut rows = Vec::with_capacity(2 * candidates.len() * 18);
            for (&p, &o) in pivots.iter().zip(&others) {
                rows.extend(rel_feature(&boxes[p], &boxes[o])?);
            }
            parts.push(tape.input(Tensor::matrix(2 * candidates.len(), 18, rows)));
        }
        if efc.polar {
            let mut rows = Vec::with_capacity(2 * candidates.len() * 2);
            for (&p, &o) in pivots.iter().zip(&others) {
                let (px, py) = boxes[p].center();
                let (ox, oy) = boxes[o].center();
                let (dx, dy) = (ox - px, oy - py);
                rows.push(dx.hypot(dy));
                rows.push(dy.atan2(dx));
            }
            parts.push(tape.input(Tensor::matrix(2 * candidates.len(), 2, rows)));
        }
        if efc.node_class {
            parts.push(tape.gather_rows(node_logits, &pivots)?);
            parts.push(tape.gather_rows(node_logits, &others)?);
        }
        let cat = tape.concat_cols(&parts)?;
        let eh = fc(tape, params, "edge_head.fc", cat)?;
        let eh = tape.relu(eh);
        let oriented = fc(tape, params, "edge_head.out", eh)?;
        if cfg.edge_head_symmetric {
            let evens: Vec<usize> = (0..candidates.len()).map(|r| 2 * r).collect();
            let odds: Vec<usize> = (0..candidates.len()).map(|r| 2 * r + 1).collect();
            let fwd_rows = tape.gather_rows(oriented, &evens)?;
            let rev_rows = tape.gather_rows(oriented, &odds)?;
            let sum = tape.add(fwd_rows, rev_rows)?;
            Some(tape.scale(sum, 0.5))
        } else {
            Some(oriented)
        }
    };

    debug_assert_eq!(tape.value(node_logits).rows(), n);
    Ok(ForwardVars {
        node_logits,
        edge_logits,
        candidates,
        layer_graphs,
    })
}

/// Inference entry point: runs [`forward`] on a throwaway tape and returns
/// plain tensors.
pub fn run_forward(
    params: &ParamStore,
    cfg: &ModelConfig,
    page: &PreparedPage,
) -> Result<ForwardOutput, ModelError> {
    let mut tape = Tape::new();
    let vars = forward(&mut tape, params, cfg, page)?;
    Ok(ForwardOutput {
        node_logits: tape.value(vars.node_logits).clone(),
        edge_logits: vars
            .edge_logits
            .map(|v| tape.value(v).clone())
            .unwrap_or_else(|| Tensor::matrix(0, 2, Vec::new())),
        candidates: vars.candidates,
        layer_graphs: vars.layer_graphs,
    })
}
