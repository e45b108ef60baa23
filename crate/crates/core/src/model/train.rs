//! Loss assembly and the epoch-driven training loop.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::doc::GoldLabels;
use crate::model::{forward, ModelConfig, ModelError, PreparedPage, TaskKind};
use crate::nn::{AdamConfig, AdamState, GradMap, ParamStore, Tape, Var};

/// Training hyperparameters around the optimizer: schedule, batching, and
/// the loss mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub epochs: usize,
    /// Pages per optimizer step; the last batch of an epoch may be smaller.
    pub batch_size: usize,
    /// Weight of the edge loss term against the node loss.
    pub lambda_edge: f64,
    /// Optional extra weight on the positive edge class.
    pub positive_edge_weight: Option<f64>,
    /// Linear learning-rate ramp over this many initial epochs.
    pub warmup_epochs: usize,
    pub shuffle: bool,
    pub adam: AdamConfig,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 100,
            batch_size: 4,
            lambda_edge: 1.0,
            positive_edge_weight: None,
            warmup_epochs: 2,
            shuffle: true,
            adam: AdamConfig::default(),
        }
    }
}

/// Gold class per edge-logit row, aligned with the row contract of
/// [`crate::model::ForwardVars::edge_logits`]: class 1 means "same instance"
/// for grouping and "linked" for linking.
pub fn edge_targets(
    task: TaskKind,
    candidates: &[(usize, usize)],
    symmetric: bool,
    labels: &GoldLabels,
    n_nodes: usize,
    page_id: &str,
) -> Result<Vec<usize>, ModelError> {
    let group_of = labels.node_to_group(n_nodes);
    let links: Option<std::collections::BTreeSet<(usize, usize)>> = match task {
        TaskKind::Grouping => None,
        TaskKind::Linking => Some(
            labels
                .links
                .as_ref()
                .ok_or_else(|| ModelError::MissingLinks(page_id.to_string()))?
                .iter()
                .copied()
                .collect(),
        ),
    };
    let oriented_label = |a: usize, b: usize| -> usize {
        match task {
            TaskKind::Grouping => usize::from(group_of[a] == group_of[b]),
            TaskKind::Linking => usize::from(
                links
                    .as_ref()
                    .is_some_and(|s| s.contains(&(group_of[a], group_of[b]))),
            ),
        }
    };
    let mut out = Vec::with_capacity(if symmetric {
        candidates.len()
    } else {
        2 * candidates.len()
    });
    for &(i, j) in candidates {
        if symmetric {
            out.push(usize::from(oriented_label(i, j) == 1 || oriented_label(j, i) == 1));
        } else {
            out.push(oriented_label(i, j));
            out.push(oriented_label(j, i));
        }
    }
    Ok(out)
}

/// Forward values that accompany a page's loss.
pub struct LossParts {
    pub loss: Var,
    pub node_loss: f64,
    /// Absent when the page has no candidate pairs.
    pub edge_loss: Option<f64>,
    pub node_correct: usize,
    pub edge_correct: usize,
    pub edge_rows: usize,
}

/// Records one labeled page's combined loss onto the tape: node
/// cross-entropy plus `lambda_edge` times edge cross-entropy.
pub fn page_loss(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &ModelConfig,
    page: &PreparedPage,
    hyper: &TrainHyper,
) -> Result<LossParts, ModelError> {
    let labels = page
        .labels
        .as_ref()
        .ok_or_else(|| ModelError::MissingLabels(page.page_id.clone()))?;
    let vars = forward(tape, params, cfg, page)?;
    let node_ce = tape.softmax_cross_entropy(vars.node_logits, &labels.node_category, None)?;
    let node_correct = count_argmax_hits(tape, vars.node_logits, &labels.node_category);

    let mut loss = node_ce;
    let mut edge_loss = None;
    let mut edge_correct = 0;
    let mut edge_rows = 0;
    if let Some(edge_logits) = vars.edge_logits {
        let targets = edge_targets(
            cfg.task,
            &vars.candidates,
            cfg.edge_head_symmetric,
            labels,
            page.n_nodes(),
            &page.page_id,
        )?;
        let weights = hyper.positive_edge_weight.map(|w| [1.0, w]);
        let edge_ce =
            tape.softmax_cross_entropy(edge_logits, &targets, weights.as_ref().map(|w| &w[..]))?;
        edge_loss = Some(tape.value(edge_ce).item());
        edge_correct = count_argmax_hits(tape, edge_logits, &targets);
        edge_rows = targets.len();
        let scaled = tape.scale(edge_ce, hyper.lambda_edge);
        loss = tape.add(node_ce, scaled)?;
    }
    Ok(LossParts {
        node_loss: tape.value(node_ce).item(),
        edge_loss,
        loss,
        node_correct,
        edge_correct,
        edge_rows,
    })
}

fn count_argmax_hits(tape: &Tape, logits: Var, targets: &[usize]) -> usize {
    let z = tape.value(logits);
    targets
        .iter()
        .enumerate()
        .filter(|&(r, &t)| argmax(z.row(r)) == t)
        .count()
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

/// Aggregate training measurements for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean combined loss per page.
    pub mean_loss: f64,
    pub node_accuracy: f64,
    /// Absent when no page contributed edge rows.
    pub edge_accuracy: Option<f64>,
    pub lr_scale: f64,
}

/// Deterministic in-place shuffle keyed by the store seed and epoch.
fn shuffle_order(order: &mut [usize], seed: u64, epoch: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::nn::mix_seed(seed ^ (epoch as u64)));
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

fn merge_grads(total: &mut GradMap, part: GradMap) {
    for (name, g) in part {
        match total.entry(name) {
            indexmap::map::Entry::Occupied(mut e) => {
                for (a, &b) in e.get_mut().data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            indexmap::map::Entry::Vacant(e) => {
                e.insert(g);
            }
        }
    }
}

/// Runs the optimization loop over prepared, labeled pages. Pages are
/// shuffled each epoch, batches average their page losses, and the callback
/// sees every epoch's metrics as they complete.
pub fn train(
    params: &mut ParamStore,
    opt: &mut AdamState,
    cfg: &ModelConfig,
    pages: &[PreparedPage],
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>, ModelError> {
    cfg.validate()?;
    if pages.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if hyper.batch_size == 0 {
        return Err(ModelError::InvalidConfig("batch_size must be positive".into()));
    }
    for page in pages {
        if page.labels.is_none() {
            return Err(ModelError::MissingLabels(page.page_id.clone()));
        }
    }

    let seed = params.seed();
    let mut order: Vec<usize> = (0..pages.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        if hyper.shuffle {
            shuffle_order(&mut order, seed, epoch);
        }
        let lr_scale = if hyper.warmup_epochs > 0 {
            ((epoch + 1) as f64 / hyper.warmup_epochs as f64).min(1.0)
        } else {
            1.0
        };

        let mut loss_sum = 0.0;
        let mut node_hits = 0;
        let mut node_total = 0;
        let mut edge_hits = 0;
        let mut edge_total = 0;
        for batch in order.chunks(hyper.batch_size) {
            let inv = 1.0 / batch.len() as f64;
            let mut grads = GradMap::new();
            for &p in batch {
                let mut tape = Tape::new();
                let parts = page_loss(&mut tape, params, cfg, &pages[p], hyper)?;
                let scaled = tape.scale(parts.loss, inv);
                merge_grads(&mut grads, tape.backward(scaled)?);
                loss_sum += tape.value(parts.loss).item();
                node_hits += parts.node_correct;
                node_total += pages[p].n_nodes();
                edge_hits += parts.edge_correct;
                edge_total += parts.edge_rows;
            }
            opt.step(params, &grads, lr_scale)?;
        }

        let metrics = EpochMetrics {
            epoch,
            mean_loss: loss_sum / pages.len() as f64,
            node_accuracy: node_hits as f64 / node_total.max(1) as f64,
            edge_accuracy: (edge_total > 0).then(|| edge_hits as f64 / edge_total as f64),
            lr_scale,
        };
        on_epoch(&metrics);
        history.push(metrics);
    }
    Ok(history)
}
