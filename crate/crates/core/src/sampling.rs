//! Sparse candidate-graph construction over the boxes of one page.
//!
//! Three strategies are provided. The directional sampler is the default:
//! for every box it keeps the nearest few boxes to its left, right, above,
//! and below, where "left/right" candidates must share a horizontal band
//! with the box and "above/below" candidates a vertical one. The
//! alternatives are plain k-nearest-neighbors over box centers and a
//! beta-skeleton over box centers.

use thiserror::Error;

use crate::doc::{interval_overlap_1d, GoldLabels, NormBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("beta must lie in (0, 1], got {0}")]
    InvalidBeta(f64),
    #[error("page has no gold labels")]
    MissingLabels,
}

/// An undirected candidate graph over `n_nodes` boxes.
///
/// Edges are stored canonically: each pair once as `(i, j)` with `i < j`,
/// sorted lexicographically, no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl SampledGraph {
    /// Canonicalizes an arbitrary pair list: orients, dedupes, sorts, and
    /// drops self-loops. Indices must be below `n_nodes`.
    pub fn new<I>(n_nodes: usize, pairs: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|&(a, b)| a != b)
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        for &(a, b) in &edges {
            assert!(a < n_nodes && b < n_nodes, "edge ({a}, {b}) out of range");
        }
        edges.sort_unstable();
        edges.dedup();
        SampledGraph { n_nodes, edges }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&key).is_ok()
    }

    /// Neighbor lists, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Union of two graphs over the same node set.
    pub fn union(&self, other: &SampledGraph) -> SampledGraph {
        assert_eq!(self.n_nodes, other.n_nodes);
        SampledGraph::new(
            self.n_nodes,
            self.edges.iter().chain(other.edges.iter()).copied(),
        )
    }

    pub fn is_subgraph_of(&self, other: &SampledGraph) -> bool {
        self.edges.iter().all(|&(a, b)| other.contains(a, b))
    }
}

/// Parameters of the directional sampler.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectionalConfig {
    /// Nearest boxes kept on each of the left and right sides.
    pub horizontal_k: usize,
    /// Nearest boxes kept on each of the above and below sides.
    pub vertical_k: usize,
    /// A candidate must overlap the pivot's perpendicular extent by strictly
    /// more than this fraction of the smaller of the two extents. Zero means
    /// any positive overlap qualifies.
    pub band_overlap_min: f64,
}

impl Default for DirectionalConfig {
    fn default() -> Self {
        DirectionalConfig {
            horizontal_k: 1,
            vertical_k: 2,
            band_overlap_min: 0.0,
        }
    }
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
    Above,
    Below,
}

/// Candidate sort key: edge-to-edge gap, then center distance, then id.
fn rank_key(gap: f64, d2: f64, id: usize) -> (f64, f64, usize) {
    (gap, d2, id)
}

fn center_dist2(a: &NormBox, b: &NormBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx) * (ax - bx) + (ay - by) * (ay - by)
}

/// Qualification + ranking of `j` as a candidate of `i` on one side.
/// Returns the sort key, or `None` when `j` does not qualify.
fn side_key(
    boxes: &[NormBox],
    i: usize,
    j: usize,
    side: Side,
    band_overlap_min: f64,
) -> Option<(f64, f64, usize)> {
    let bi = &boxes[i];
    let bj = &boxes[j];
    let (ixc, iyc) = bi.center();
    let (jxc, jyc) = bj.center();
    let (band_overlap, band_min_extent, ahead, gap) = match side {
        Side::Left => (
            interval_overlap_1d((bi.ymin, bi.ymax), (bj.ymin, bj.ymax)),
            bi.height().min(bj.height()),
            jxc < ixc,
            bi.xmin - bj.xmax,
        ),
        Side::Right => (
            interval_overlap_1d((bi.ymin, bi.ymax), (bj.ymin, bj.ymax)),
            bi.height().min(bj.height()),
            jxc > ixc,
            bj.xmin - bi.xmax,
        ),
        Side::Above => (
            interval_overlap_1d((bi.xmin, bi.xmax), (bj.xmin, bj.xmax)),
            bi.width().min(bj.width()),
            jyc < iyc,
            bi.ymin - bj.ymax,
        ),
        Side::Below => (
            interval_overlap_1d((bi.xmin, bi.xmax), (bj.xmin, bj.xmax)),
            bi.width().min(bj.width()),
            jyc > iyc,
            bj.ymin - bi.ymax,
        ),
    };
    if !ahead || band_overlap <= band_overlap_min * band_min_extent {
        return None;
    }
    Some(rank_key(gap.max(0.0), center_dist2(bi, bj), j))
}

/// Directional candidate sampling: per box, the `horizontal_k` nearest
/// banded boxes on each horizontal side and the `vertical_k` nearest on
/// each vertical side, unioned into one undirected graph.
pub fn sample_directional(boxes: &[NormBox], cfg: &DirectionalConfig) -> SampledGraph {
    let n = boxes.len();
    let mut pairs = Vec::new();
    let mut cands: Vec<((f64, f64, usize), usize)> = Vec::new();
    for i in 0..n {
        for (side, k) in [
            (Side::Left, cfg.horizontal_k),
            (Side::Right, cfg.horizontal_k),
            (Side::Above, cfg.vertical_k),
            (Side::Below, cfg.vertical_k),
        ] {
            if k == 0 {
                continue;
            }
            cands.clear();
            for j in 0..n {
                if j == i {
                    continue;
                }
                if let Some(key) = side_key(boxes, i, j, side, cfg.band_overlap_min) {
                    cands.push((key, j));
                }
            }
            cands.sort_unstable_by(|a, b| {
                a.0 .0
                    .total_cmp(&b.0 .0)
                    .then(a.0 .1.total_cmp(&b.0 .1))
                    .then(a.0 .2.cmp(&b.0 .2))
            });
            pairs.extend(cands.iter().take(k).map(|&(_, j)| (i, j)));
        }
    }
    SampledGraph::new(n, pairs)
}

/// Plain k-nearest-neighbors over box centers, ties to the lower id.
pub fn sample_knn(boxes: &[NormBox], k: usize) -> SampledGraph {
    let n = boxes.len();
    let mut pairs = Vec::new();
    let mut cands: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        cands.clear();
        for j in 0..n {
            if j != i {
                cands.push((center_dist2(&boxes[i], &boxes[j]), j));
            }
        }
        cands.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pairs.extend(cands.iter().take(k).map(|&(_, j)| (i, j)));
    }
    SampledGraph::new(n, pairs)
}

/// Lune-based beta-skeleton over box centers for `beta` in `(0, 1]`.
///
/// A pair is kept unless some third center lies strictly inside both disks
/// of radius `d / (2 beta)` that pass through the two endpoints; points on
/// the boundary do not block. `beta = 1` is the Gabriel graph, and the edge
/// set grows as `beta` decreases.
pub fn sample_beta_skeleton(boxes: &[NormBox], beta: f64) -> Result<SampledGraph, SamplingError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(SamplingError::InvalidBeta(beta));
    }
    let centers: Vec<(f64, f64)> = boxes.iter().map(|b| b.center()).collect();
    let n = centers.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (px, py) = centers[i];
            let (qx, qy) = centers[j];
            let dx = qx - px;
            let dy = qy - py;
            let d2 = dx * dx + dy * dy;
            let blocked = if beta == 1.0 {
                // Gabriel case: strictly inside the diameter disk. Kept
                // square-root free so exact boundary points never block.
                let (mx, my) = (0.5 * (px + qx), 0.5 * (py + qy));
                (0..n).any(|l| {
                    if l == i || l == j {
                        return false;
                    }
                    let (zx, zy) = centers[l];
                    (zx - mx) * (zx - mx) + (zy - my) * (zy - my) < 0.25 * d2
                })
            } else {
                // Disk centers sit on the perpendicular bisector, `m` away
                // from the midpoint on each side.
                let d = d2.sqrt();
                let r = d / (2.0 * beta);
                let m = (r * r - 0.25 * d2).max(0.0).sqrt();
                let (mx, my) = (0.5 * (px + qx), 0.5 * (py + qy));
                let (ux, uy) = if d > 0.0 {
                    (-dy / d, dx / d)
                } else {
                    (0.0, 0.0)
                };
                let c1 = (mx + m * ux, my + m * uy);
                let c2 = (mx - m * ux, my - m * uy);
                (0..n).any(|l| {
                    if l == i || l == j {
                        return false;
                    }
                    let (zx, zy) = centers[l];
                    let in1 = (zx - c1.0) * (zx - c1.0) + (zy - c1.1) * (zy - c1.1) < r * r;
                    let in2 = (zx - c2.0) * (zx - c2.0) + (zy - c2.1) * (zy - c2.1) < r * r;
                    in1 && in2
                })
            };
            if !blocked {
                pairs.push((i, j));
            }
        }
    }
    Ok(SampledGraph::new(n, pairs))
}

/// How well a candidate graph covers the gold structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerRecall {
    /// Fraction of gold groups whose members induce a connected subgraph.
    pub group_connectivity: f64,
    /// Fraction of gold links bridged by at least one sampled edge, when
    /// the page carries links.
    pub link_coverage: Option<f64>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Attach the larger root id under the smaller one, so component
            // representatives are stable and deterministic.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Measures gold-group connectivity and gold-link coverage of a graph.
pub fn sampler_recall(
    graph: &SampledGraph,
    labels: Option<&GoldLabels>,
) -> Result<SamplerRecall, SamplingError> {
    let labels = labels.ok_or(SamplingError::MissingLabels)?;
    let n = graph.n_nodes();
    let group_of = labels.node_to_group(n);

    let mut connected_groups = 0usize;
    for group in &labels.groups {
        let mut uf = UnionFind::new(group.len());
        let index_in_group: std::collections::HashMap<usize, usize> = group
            .iter()
            .enumerate()
            .map(|(slot, &m)| (m, slot))
            .collect();
        for &(a, b) in graph.edges() {
            if let (Some(&sa), Some(&sb)) = (index_in_group.get(&a), index_in_group.get(&b)) {
                uf.union(sa, sb);
            }
        }
        let root0 = uf.find(0);
        if (1..group.len()).all(|s| uf.find(s) == root0) {
            connected_groups += 1;
        }
    }
    let group_connectivity = if labels.groups.is_empty() {
        1.0
    } else {
        connected_groups as f64 / labels.groups.len() as f64
    };

    let link_coverage = labels.links.as_ref().map(|links| {
        if links.is_empty() {
            return 1.0;
        }
        let covered = links
            .iter()
            .filter(|&&(sg, dg)| {
                graph.edges().iter().any(|&(a, b)| {
                    let (ga, gb) = (group_of[a], group_of[b]);
                    (ga == sg && gb == dg) || (ga == dg && gb == sg)
                })
            })
            .count();
        covered as f64 / links.len() as f64
    });

    Ok(SamplerRecall {
        group_connectivity,
        link_coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> NormBox {
        NormBox::new(xmin, ymin, xmax, ymax).unwrap()
    }

    /// Four identical boxes stacked vertically with uniform gaps.
    fn stack4() -> Vec<NormBox> {
        (0..4)
            .map(|i| {
                let y = 0.05 + 0.2 * i as f64;
                nb(0.1, y, 0.9, y + 0.16)
            })
            .collect()
    }

    #[test]
    fn directional_stack_takes_top_two_below_and_above() {
        let g = sample_directional(&stack4(), &DirectionalConfig::default());
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn directional_row_links_neighbors() {
        // Three boxes side by side in one band: each links to its
        // horizontal neighbors only.
        let boxes = vec![
            nb(0.05, 0.4, 0.25, 0.5),
            nb(0.40, 0.4, 0.60, 0.5),
            nb(0.75, 0.4, 0.95, 0.5),
        ];
        let g = sample_directional(&boxes, &DirectionalConfig::default());
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn band_rule_excludes_disjoint_rows() {
        // Second box sits below and to the right with no y-overlap, so no
        // horizontal candidate qualifies; it is still a vertical candidate
        // only if the x-intervals overlap.
        let boxes = vec![nb(0.1, 0.1, 0.3, 0.2), nb(0.5, 0.5, 0.7, 0.6)];
        let g = sample_directional(&boxes, &DirectionalConfig::default());
        assert!(g.edges().is_empty());
    }

    #[test]
    fn band_overlap_min_is_strict() {
        // Two boxes of height 0.1 whose y-intervals overlap by exactly half
        // of the smaller height: a 0.5 threshold excludes them.
        let boxes = vec![nb(0.1, 0.40, 0.3, 0.50), nb(0.5, 0.45, 0.7, 0.55)];
        let half = DirectionalConfig {
            band_overlap_min: 0.5,
            ..DirectionalConfig::default()
        };
        assert!(sample_directional(&boxes, &half).edges().is_empty());
        let below = DirectionalConfig {
            band_overlap_min: 0.49,
            ..DirectionalConfig::default()
        };
        assert_eq!(sample_directional(&boxes, &below).edges(), &[(0, 1)]);
    }

    #[test]
    fn single_box_yields_empty_graph() {
        let g = sample_directional(&[nb(0.1, 0.1, 0.2, 0.2)], &DirectionalConfig::default());
        assert_eq!(g.n_nodes(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn knn_collinear_tie_goes_to_lower_id() {
        let boxes = vec![
            nb(0.10, 0.4, 0.20, 0.5),
            nb(0.40, 0.4, 0.50, 0.5),
            nb(0.70, 0.4, 0.80, 0.5),
        ];
        let g = sample_knn(&boxes, 1);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn knn_caps_k_at_n_minus_one() {
        let boxes = vec![nb(0.1, 0.1, 0.2, 0.2), nb(0.5, 0.5, 0.6, 0.6)];
        let g = sample_knn(&boxes, 10);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn gabriel_right_triangle_keeps_all_edges() {
        // Vertices of a right triangle: the right-angle vertex lies exactly
        // on the hypotenuse's diameter circle, and boundary points do not
        // block. Dyadic coordinates keep the boundary test exact.
        let boxes = vec![
            nb(0.109375, 0.109375, 0.140625, 0.140625),
            nb(0.484375, 0.109375, 0.515625, 0.140625),
            nb(0.109375, 0.484375, 0.140625, 0.515625),
        ];
        let g = sample_beta_skeleton(&boxes, 1.0).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn gabriel_midpoint_blocks_edge() {
        let boxes = vec![
            nb(0.095, 0.395, 0.105, 0.405),
            nb(0.495, 0.395, 0.505, 0.405),
            nb(0.895, 0.395, 0.905, 0.405),
        ];
        let g = sample_beta_skeleton(&boxes, 1.0).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn beta_out_of_range_rejected() {
        let boxes = vec![nb(0.1, 0.1, 0.2, 0.2)];
        assert_eq!(
            sample_beta_skeleton(&boxes, 0.0).unwrap_err(),
            SamplingError::InvalidBeta(0.0)
        );
        assert_eq!(
            sample_beta_skeleton(&boxes, 1.1).unwrap_err(),
            SamplingError::InvalidBeta(1.1)
        );
    }

    #[test]
    fn graph_canonicalizes_pairs() {
        let g = SampledGraph::new(4, vec![(2, 1), (1, 2), (3, 0), (1, 1)]);
        assert_eq!(g.edges(), &[(0, 3), (1, 2)]);
        assert!(g.contains(2, 1));
        assert!(!g.contains(0, 1));
        assert_eq!(g.adjacency(), vec![vec![3], vec![2], vec![1], vec![0]]);
    }

    #[test]
    fn recall_on_stack_groups() {
        let g = sample_directional(&stack4(), &DirectionalConfig::default());
        let labels = GoldLabels {
            node_category: vec![0; 4],
            groups: vec![vec![0, 1], vec![2, 3]],
            links: Some(vec![(0, 1)]),
        };
        let r = sampler_recall(&g, Some(&labels)).unwrap();
        assert_eq!(r.group_connectivity, 1.0);
        assert_eq!(r.link_coverage, Some(1.0));

        // A group split across the page without sampled edges in between.
        let apart = vec![
            nb(0.05, 0.05, 0.15, 0.10),
            nb(0.80, 0.80, 0.90, 0.85),
            nb(0.05, 0.12, 0.15, 0.17),
        ];
        let g2 = sample_directional(&apart, &DirectionalConfig::default());
        let labels2 = GoldLabels {
            node_category: vec![0; 3],
            groups: vec![vec![0, 1], vec![2]],
            links: None,
        };
        let r2 = sampler_recall(&g2, Some(&labels2)).unwrap();
        assert_eq!(r2.group_connectivity, 0.5);
        assert_eq!(r2.link_coverage, None);
    }

    #[test]
    fn recall_requires_labels() {
        let g = sample_directional(&stack4(), &DirectionalConfig::default());
        assert_eq!(
            sampler_recall(&g, None).unwrap_err(),
            SamplingError::MissingLabels
        );
    }
}
