//! From logits to labeled layout instances: threshold candidate edges, take
//! connected components, vote on a category, and pool a confidence.

use serde::{Deserialize, Serialize};

use crate::doc::{min_bounding_rect, GoldLabels, NormBox};
use crate::nn::Tensor;

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (n, c) = (logits.rows(), logits.cols());
    let mut out = Tensor::zeros(&[n, c]);
    for r in 0..n {
        let row = logits.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - m).exp();
        }
        let dst = &mut out.data_mut()[r * c..(r + 1) * c];
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - m).exp() / denom;
        }
    }
    out
}

/// How instance decoding reads the edge head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    /// Minimum positive-class probability for an edge to join two boxes.
    pub edge_threshold: f64,
    /// Whether edge logits carry one row per pair or two oriented rows.
    pub symmetric_edges: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            edge_threshold: 0.5,
            symmetric_edges: true,
        }
    }
}

/// Candidate pairs whose positive probability clears the threshold. With an
/// oriented edge head the two orientations' probabilities are averaged
/// before thresholding.
pub fn predicted_edges(
    candidates: &[(usize, usize)],
    edge_logits: &Tensor,
    cfg: &DecodeConfig,
) -> Vec<(usize, usize)> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let probs = softmax_rows(edge_logits);
    candidates
        .iter()
        .enumerate()
        .filter(|&(r, _)| {
            let p = if cfg.symmetric_edges {
                probs.at(r, 1)
            } else {
                0.5 * (probs.at(2 * r, 1) + probs.at(2 * r + 1, 1))
            };
            p > cfg.edge_threshold
        })
        .map(|(_, &pair)| pair)
        .collect()
}

/// Connected components of an undirected edge list over `n` nodes, each
/// component's members ascending, components ordered by smallest member.
pub fn connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in 0..n {
        let r = find(&mut parent, x);
        members[r].push(x);
    }
    members.retain(|m| !m.is_empty());
    members
}

/// One decoded (or gold) layout instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutInstance {
    /// Box ids in ascending order.
    pub member_ids: Vec<usize>,
    /// Union bounding box of the members, normalized.
    pub bbox: NormBox,
    pub category: usize,
    /// Mean member probability of the voted category, 1 for gold.
    pub score: f64,
}

/// Most frequent value, ties to the smallest.
fn majority(values: impl Iterator<Item = usize>, n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for v in values {
        counts[v] += 1;
    }
    let mut best = 0;
    for (c, &k) in counts.iter().enumerate().skip(1) {
        if k > counts[best] {
            best = c;
        }
    }
    best
}

/// Groups boxes through thresholded edges and labels each component by
/// majority vote over its members' argmax classes.
pub fn decode_instances(
    boxes: &[NormBox],
    node_logits: &Tensor,
    candidates: &[(usize, usize)],
    edge_logits: &Tensor,
    cfg: &DecodeConfig,
) -> Vec<LayoutInstance> {
    let n = boxes.len();
    if n == 0 {
        return Vec::new();
    }
    let n_classes = node_logits.cols();
    let node_probs = softmax_rows(node_logits);
    let edges = predicted_edges(candidates, edge_logits, cfg);
    connected_components(n, &edges)
        .into_iter()
        .map(|members| {
            let category = majority(
                members.iter().map(|&m| argmax(node_probs.row(m))),
                n_classes,
            );
            let score = members
                .iter()
                .map(|&m| node_probs.at(m, category))
                .sum::<f64>()
                / members.len() as f64;
            let bbox = min_bounding_rect(members.iter().map(|&m| boxes[m]))
                .expect("components are never empty");
            LayoutInstance {
                member_ids: members,
                bbox,
                category,
                score,
            }
        })
        .collect()
}

/// Gold instances from labels: one per group, scored 1.
pub fn gold_instances(boxes: &[NormBox], labels: &GoldLabels, n_classes: usize) -> Vec<LayoutInstance> {
    labels
        .groups
        .iter()
        .map(|group| {
            let mut members = group.clone();
            members.sort_unstable();
            let category = majority(
                members.iter().map(|&m| labels.node_category[m]),
                n_classes,
            );
            let bbox = min_bounding_rect(members.iter().map(|&m| boxes[m]))
                .expect("label validation rejects empty groups");
            LayoutInstance {
                member_ids: members,
                bbox,
                category,
                score: 1.0,
            }
        })
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
