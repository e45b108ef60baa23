//! Classification and detection metrics: precision/recall/F1 and
//! interpolated average precision over IoU thresholds.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::doc::NormBox;
use crate::eval::LayoutInstance;

/// Precision, recall, and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(c: MatchCounts) -> Prf {
        let p = safe_div(c.tp as f64, (c.tp + c.fp) as f64);
        let r = safe_div(c.tp as f64, (c.tp + c.fn_) as f64);
        Prf {
            precision: p,
            recall: r,
            f1: safe_div(2.0 * p * r, p + r),
        }
    }
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// True positive, false positive, and false negative tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn prf(self) -> Prf {
        Prf::from_counts(self)
    }
}

/// Per-class and aggregate F1 for single-label multiclass predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassF1 {
    pub per_class: Vec<Prf>,
    /// Pooled counts over classes; for single-label data its F1 equals
    /// accuracy.
    pub micro: Prf,
    /// Unweighted mean of per-class F1.
    pub macro_f1: f64,
}

/// Scores predicted class ids against gold ids.
pub fn node_f1(pred: &[usize], gold: &[usize], n_classes: usize) -> MulticlassF1 {
    assert_eq!(pred.len(), gold.len(), "prediction and gold lengths differ");
    let mut counts = vec![MatchCounts::default(); n_classes];
    let mut pooled = MatchCounts::default();
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            counts[p].tp += 1;
            pooled.tp += 1;
        } else {
            counts[p].fp += 1;
            counts[g].fn_ += 1;
            pooled.fp += 1;
            pooled.fn_ += 1;
        }
    }
    let per_class: Vec<Prf> = counts.into_iter().map(Prf::from_counts).collect();
    let macro_f1 = per_class.iter().map(|p| p.f1).sum::<f64>() / n_classes.max(1) as f64;
    MulticlassF1 {
        per_class,
        micro: Prf::from_counts(pooled),
        macro_f1,
    }
}

/// F1 of a predicted undirected edge set against gold, both deduplicated
/// and order-normalized.
pub fn edge_f1(pred: &[(usize, usize)], gold: &[(usize, usize)]) -> Prf {
    let canon = |&(a, b): &(usize, usize)| if a <= b { (a, b) } else { (b, a) };
    let pred: BTreeSet<_> = pred.iter().map(canon).collect();
    let gold: BTreeSet<_> = gold.iter().map(canon).collect();
    let tp = pred.intersection(&gold).count();
    Prf::from_counts(MatchCounts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    })
}

/// Intersection over union of two normalized boxes.
pub fn iou(a: &NormBox, b: &NormBox) -> f64 {
    let iw = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let ih = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    safe_div(inter, union)
}

/// Greedy instance matching: predictions in descending score order claim the
/// unclaimed same-category gold with the highest IoU at or above the
/// threshold. Score ties keep input order; IoU ties take the earliest gold.
pub fn instance_match_counts(
    pred: &[LayoutInstance],
    gold: &[LayoutInstance],
    iou_threshold: f64,
) -> MatchCounts {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].score.total_cmp(&pred[a].score).then(a.cmp(&b)));
    let mut gold_taken = vec![false; gold.len()];
    let mut tp = 0;
    for &pi in &order {
        let p = &pred[pi];
        let mut best: Option<(f64, usize)> = None;
        for (gi, g) in gold.iter().enumerate() {
            if gold_taken[gi] || g.category != p.category {
                continue;
            }
            let v = iou(&p.bbox, &g.bbox);
            if v >= iou_threshold && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, gi));
            }
        }
        if let Some((_, gi)) = best {
            gold_taken[gi] = true;
            tp += 1;
        }
    }
    MatchCounts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// One detection for average-precision scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub page: String,
    pub category: usize,
    pub bbox: NormBox,
    pub score: f64,
}

/// One gold region for average-precision scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub page: String,
    pub category: usize,
    pub bbox: NormBox,
}

/// Mean average precision over the ten IoU thresholds `0.50, 0.55, .., 0.95`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoMap {
    /// Mean over classes that have gold regions, `None` when no class does.
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    /// Threshold-averaged AP per class; `None` for classes without gold.
    pub per_class: Vec<Option<f64>>,
}

/// The ten evaluation thresholds.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// 101-point interpolated average precision for one class at one threshold.
fn average_precision(
    dets: &[&Detection],
    golds: &[&GroundTruth],
    threshold: f64,
) -> f64 {
    if golds.is_empty() {
        return 0.0;
    }
    let mut taken = vec![false; golds.len()];
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(dets.len());
    let mut tp = 0usize;
    for (seen, d) in dets.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (gi, g) in golds.iter().enumerate() {
            if taken[gi] || g.page != d.page {
                continue;
            }
            let v = iou(&d.bbox, &g.bbox);
            if v >= threshold && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, gi));
            }
        }
        if let Some((_, gi)) = best {
            taken[gi] = true;
            tp += 1;
        }
        curve.push((
            tp as f64 / golds.len() as f64,
            tp as f64 / (seen + 1) as f64,
        ));
    }
    // Precision envelope from the high-recall end, then sample the 101
    // canonical recall levels.
    let mut envelope = curve.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
    }
    let mut total = 0.0;
    for level in 0..=100 {
        let r = level as f64 / 100.0;
        let p = envelope
            .iter()
            .find(|&&(rec, _)| rec >= r)
            .map_or(0.0, |&(_, prec)| prec);
        total += p;
    }
    total / 101.0
}

/// Detection-style scoring: per class, detections sorted by descending
/// score greedily match same-page gold regions; AP is averaged over the ten
/// thresholds and then over classes that have gold.
pub fn coco_map(dets: &[Detection], golds: &[GroundTruth], n_classes: usize) -> CocoMap {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut per_class: Vec<Option<f64>> = Vec::with_capacity(n_classes);
    let mut ap50_sum = 0.0;
    let mut ap75_sum = 0.0;
    let mut with_gold = 0usize;
    for c in 0..n_classes {
        let class_golds: Vec<&GroundTruth> = golds.iter().filter(|g| g.category == c).collect();
        if class_golds.is_empty() {
            per_class.push(None);
            continue;
        }
        with_gold += 1;
        let class_dets: Vec<&Detection> = order
            .iter()
            .map(|&i| &dets[i])
            .filter(|d| d.category == c)
            .collect();
        let mut sum = 0.0;
        for (ti, t) in iou_thresholds().into_iter().enumerate() {
            let ap = average_precision(&class_dets, &class_golds, t);
            sum += ap;
            if ti == 0 {
                ap50_sum += ap;
            }
            if ti == 5 {
                ap75_sum += ap;
            }
        }
        per_class.push(Some(sum / 10.0));
    }
    let mean = |s: f64| (with_gold > 0).then(|| s / with_gold as f64);
    CocoMap {
        map: mean(per_class.iter().flatten().sum()),
        ap50: mean(ap50_sum),
        ap75: mean(ap75_sum),
        per_class,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nb(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> NormBox {
        NormBox::new(xmin, ymin, xmax, ymax).unwrap()
    }

    fn inst(members: Vec<usize>, bbox: NormBox, category: usize, score: f64) -> LayoutInstance {
        LayoutInstance {
            member_ids: members,
            bbox,
            category,
            score,
        }
    }

    #[test]
    fn iou_of_quarter_overlap() {
        let a = nb(0.0, 0.0, 0.2, 0.2);
        let b = nb(0.1, 0.1, 0.3, 0.3);
        assert_abs_diff_eq!(iou(&a, &b), 1.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(iou(&a, &a), 1.0, epsilon = 1e-15);
        let far = nb(0.5, 0.5, 0.6, 0.6);
        assert_eq!(iou(&a, &far), 0.0);
    }

    #[test]
    fn node_f1_small_case() {
        let got = node_f1(&[0, 1, 1, 2], &[0, 0, 1, 2], 3);
        assert_abs_diff_eq!(got.per_class[0].f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got.per_class[1].f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got.per_class[2].f1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got.micro.f1, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(got.macro_f1, 7.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_f1_normalizes_orientation() {
        let prf = edge_f1(&[(1, 0), (2, 3), (4, 5)], &[(0, 1), (3, 2), (6, 7)]);
        // Two of three predictions hit, one gold missed.
        assert_abs_diff_eq!(prf.precision, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prf.recall, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prf.f1, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn instance_f1_two_one_one() {
        let gold = vec![
            inst(vec![0], nb(0.1, 0.1, 0.2, 0.2), 0, 1.0),
            inst(vec![1], nb(0.4, 0.1, 0.5, 0.2), 0, 1.0),
            inst(vec![2], nb(0.1, 0.5, 0.2, 0.6), 1, 1.0),
        ];
        let pred = vec![
            inst(vec![0], nb(0.1, 0.1, 0.2, 0.2), 0, 0.9),
            inst(vec![1], nb(0.4, 0.1, 0.5, 0.2), 0, 0.8),
            // Right place, wrong class.
            inst(vec![2], nb(0.1, 0.5, 0.2, 0.6), 0, 0.7),
        ];
        let c = instance_match_counts(&pred, &gold, 0.5);
        assert_eq!(c, MatchCounts { tp: 2, fp: 1, fn_: 1 });
        assert_abs_diff_eq!(c.prf().f1, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn perfect_detections_score_full_map() {
        let golds = vec![
            GroundTruth {
                page: "p".into(),
                category: 0,
                bbox: nb(0.1, 0.1, 0.3, 0.2),
            },
            GroundTruth {
                page: "p".into(),
                category: 1,
                bbox: nb(0.5, 0.5, 0.7, 0.8),
            },
        ];
        let dets: Vec<Detection> = golds
            .iter()
            .map(|g| Detection {
                page: g.page.clone(),
                category: g.category,
                bbox: g.bbox,
                score: 0.9,
            })
            .collect();
        let m = coco_map(&dets, &golds, 2);
        assert_abs_diff_eq!(m.map.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.ap50.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.ap75.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn iou_point_six_matches_three_thresholds() {
        // Intersection 3/16 over union 5/16: IoU exactly 0.6.
        let gold = vec![GroundTruth {
            page: "p".into(),
            category: 0,
            bbox: nb(0.0, 0.0, 0.5, 0.5),
        }];
        let det = vec![Detection {
            page: "p".into(),
            category: 0,
            bbox: nb(0.0, 0.125, 0.5, 0.625),
            score: 0.9,
        }];
        let m = coco_map(&det, &gold, 1);
        assert_abs_diff_eq!(m.map.unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(m.ap50.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.ap75.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn missed_gold_halves_the_interpolated_ap() {
        let golds = vec![
            GroundTruth {
                page: "p".into(),
                category: 0,
                bbox: nb(0.1, 0.1, 0.2, 0.2),
            },
            GroundTruth {
                page: "p".into(),
                category: 0,
                bbox: nb(0.6, 0.6, 0.7, 0.7),
            },
        ];
        let dets = vec![
            Detection {
                page: "p".into(),
                category: 0,
                bbox: nb(0.1, 0.1, 0.2, 0.2),
                score: 0.9,
            },
            // A stray detection overlapping nothing.
            Detection {
                page: "p".into(),
                category: 0,
                bbox: nb(0.4, 0.4, 0.5, 0.5),
                score: 0.8,
            },
        ];
        let m = coco_map(&dets, &golds, 1);
        // Recall stalls at one half: 51 of the 101 recall levels see
        // precision one, the rest zero.
        assert_abs_diff_eq!(m.map.unwrap(), 51.0 / 101.0, epsilon = 1e-12);
    }

    #[test]
    fn classes_without_gold_are_skipped() {
        let golds = vec![
            GroundTruth {
                page: "p".into(),
                category: 0,
                bbox: nb(0.1, 0.1, 0.2, 0.2),
            },
            GroundTruth {
                page: "p".into(),
                category: 2,
                bbox: nb(0.5, 0.5, 0.6, 0.6),
            },
        ];
        let dets = vec![Detection {
            page: "p".into(),
            category: 0,
            bbox: nb(0.1, 0.1, 0.2, 0.2),
            score: 0.9,
        }];
        let m = coco_map(&dets, &golds, 3);
        assert!(m.per_class[1].is_none());
        assert_abs_diff_eq!(m.per_class[0].unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.per_class[2].unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.map.unwrap(), 0.5, epsilon = 1e-12);
        let empty = coco_map(&[], &[], 2);
        assert!(empty.map.is_none());
    }

    #[test]
    fn duplicate_detections_keep_score_order() {
        let golds = vec![GroundTruth {
            page: "p".into(),
            category: 0,
            bbox: nb(0.1, 0.1, 0.3, 0.3),
        }];
        let dets = vec![
            Detection {
                page: "p".into(),
                category: 0,
                bbox: nb(0.1, 0.1, 0.3, 0.3),
                score: 0.7,
            },
            Detection {
                page: "p".into(),
                category: 0,
                bbox: nb(0.1, 0.1, 0.3, 0.3),
                score: 0.9,
            },
        ];
        // The higher-score duplicate matches first; the other is a false
        // positive at every threshold, which the envelope hides.
        let m = coco_map(&dets, &golds, 1);
        assert_abs_diff_eq!(m.map.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_counts_stay_finite() {
        let prf = Prf::from_counts(MatchCounts::default());
        assert_eq!(prf.precision, 0.0);
        assert_eq!(prf.recall, 0.0);
        assert_eq!(prf.f1, 0.0);
    }
}
