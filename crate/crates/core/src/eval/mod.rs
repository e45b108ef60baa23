//! Turning model outputs into labeled instances and scoring them: edge
//! thresholding, connected components, classification F1, and
//! detection-style average precision.

mod decode;
mod metrics;

pub use decode::{
    connected_components, decode_instances, gold_instances, predicted_edges, softmax_rows,
    DecodeConfig, LayoutInstance,
};
pub use metrics::{
    coco_map, edge_f1, instance_match_counts, iou, node_f1, CocoMap, Detection, GroundTruth,
    MatchCounts, MulticlassF1, Prf,
};
