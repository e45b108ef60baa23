//! The subcommands: corpus generation and conversion, graph sampling,
//! training, evaluation, inference, and a gradient self-check.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use layoutgraph::doc::{GoldLabels, Page, TextBox};
use layoutgraph::eval::{
    coco_map, decode_instances, gold_instances, node_f1, predicted_edges, softmax_rows,
    DecodeConfig, Detection, GroundTruth, MatchCounts,
};
use layoutgraph::features::EdgeFeatureConfig;
use layoutgraph::io::{
    detections_from_instances, ensure_config_matches, generate_pages, load_checkpoint,
    load_funsd_dir, load_page, load_pages_dir, raster_for_page, save_checkpoint, save_page,
    write_detections, DetectionExport, FunsdLevel, FUNSD_CATEGORIES,
};
use layoutgraph::model::{
    init_model, page_loss, prepare_page, run_forward, train, ImageProviderConfig, ModelConfig,
    ModelError, PreparedPage, RefreshMode,
};
use layoutgraph::nn::{grad_check, AdamState, Evaluation, NnError, Tape};
use layoutgraph::sampling::{sample_beta_skeleton, sample_directional, sample_knn};

use crate::config::RunConfig;
use crate::svg::{missing_group_links, render_page};
use crate::CliError;

fn model_err(e: ModelError) -> CliError {
    match &e {
        ModelError::InvalidConfig(_) => CliError::Config(e.to_string()),
        ModelError::Nn(NnError::NonFinite(_)) => CliError::Numeric(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

/// Writes `text` to `path` when given, otherwise prints it.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_svg(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Loads rasters where the pages reference one and runs page preparation.
fn prepare_pages(cfg: &ModelConfig, pages: &[Page]) -> Result<Vec<PreparedPage>, CliError> {
    pages
        .iter()
        .map(|p| {
            let raster = raster_for_page(p)?;
            prepare_page(cfg, p, raster.as_ref()).map_err(model_err)
        })
        .collect()
}

/// The decode settings implied by a model: the orientation handling is not a
/// free choice, it must match how the edge head laid out its logit rows.
fn decode_for(model: &ModelConfig, run: &RunConfig, threshold: Option<f64>) -> DecodeConfig {
    DecodeConfig {
        edge_threshold: threshold.unwrap_or(run.decode.edge_threshold),
        symmetric_edges: model.edge_head_symmetric,
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory that receives one JSON document per page.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration; missing sections fall back to defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the corpus seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the page count from the configuration.
    #[arg(long)]
    pub pages: Option<usize>,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.synth.seed = seed;
    }
    if let Some(pages) = args.pages {
        cfg.synth.pages = pages;
    }
    cfg.echo();
    let pages = generate_pages(&cfg.synth)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    for page in &pages {
        save_page(&args.out.join(format!("{}.json", page.page_id)), page)?;
    }
    println!("wrote {} pages to {}", pages.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// Nearest neighbors per side with a band-overlap gate.
    Directional,
    /// Plain k-nearest-neighbors on center distance.
    Knn,
    /// Empty-region test between each pair (1.0 keeps Gabriel pairs).
    Beta,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Page document to sample.
    pub page: PathBuf,
    #[arg(long, value_enum, default_value_t = Strategy::Directional)]
    pub strategy: Strategy,
    /// Neighbor count for the knn strategy.
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Exclusion-zone parameter for the beta strategy, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// TOML run configuration; the directional strategy reads model.sampler.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Writes the edge list as JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also renders the sampled graph to this SVG file.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn sample(args: &SampleArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let page = load_page(&args.page)?;
    let boxes = page.norm_boxes().map_err(|e| CliError::Data(e.to_string()))?;
    let (name, graph) = match args.strategy {
        Strategy::Directional => ("directional", sample_directional(&boxes, &cfg.model.sampler)),
        Strategy::Knn => ("knn", sample_knn(&boxes, args.k)),
        Strategy::Beta => (
            "beta",
            sample_beta_skeleton(&boxes, args.beta)
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
    };
    let report = serde_json::json!({
        "page_id": page.page_id,
        "strategy": name,
        "n_nodes": graph.n_nodes(),
        "n_edges": graph.edges().len(),
        "edges": graph.edges(),
    });
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&report).unwrap())?;
    if let Some(svg_path) = &args.svg {
        let classes = page.labels.as_ref().map(|l| l.node_category.clone());
        let content = render_page(&page, classes.as_deref(), graph.edges(), &[]);
        write_svg(svg_path, &content)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of labeled page documents.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration; missing sections fall back to defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the parameter initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also writes the per-epoch metric lines to this file.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.init_seed = seed;
    }
    cfg.echo();
    cfg.model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let pages = load_pages_dir(&args.data)?;
    if pages.is_empty() {
        return Err(CliError::Data(format!(
            "no page documents in {}",
            args.data.display()
        )));
    }
    let prepared = prepare_pages(&cfg.model, &pages)?;
    let mut params = init_model(&cfg.model, cfg.init_seed).map_err(model_err)?;
    let mut opt = AdamState::new(cfg.train.adam);
    let metrics = train(&mut params, &mut opt, &cfg.model, &prepared, &cfg.train, |m| {
        println!("{}", serde_json::to_string(m).expect("metrics serialize"));
    })
    .map_err(model_err)?;
    if let Some(last) = metrics.last() {
        if !last.mean_loss.is_finite() {
            return Err(CliError::Numeric(format!(
                "training diverged: final mean loss {}",
                last.mean_loss
            )));
        }
    }
    if let Some(log) = &args.log {
        let lines: Vec<String> = metrics
            .iter()
            .map(|m| serde_json::to_string(m).expect("metrics serialize"))
            .collect();
        fs::write(log, lines.join("\n") + "\n")
            .map_err(|e| CliError::Data(format!("{}: {e}", log.display())))?;
    }
    save_checkpoint(&args.out, &cfg.model, &params, Some(&opt))?;
    eprintln!(
        "trained {} epochs on {} pages, checkpoint at {}",
        cfg.train.epochs,
        pages.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint to score.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of labeled page documents.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML run configuration; when given, its model section must match the
    /// checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the decode threshold from the configuration.
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    /// Writes the decoded detections of every page to this JSON file.
    #[arg(long)]
    pub detections: Option<PathBuf>,
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let run = RunConfig::load(args.config.as_deref())?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    if args.config.is_some() {
        ensure_config_matches(&run.model, &ckpt.config)?;
    }
    let model = ckpt.config;
    let decode = decode_for(&model, &run, args.edge_threshold);
    let pages = load_pages_dir(&args.data)?;
    if pages.is_empty() {
        return Err(CliError::Data(format!(
            "no page documents in {}",
            args.data.display()
        )));
    }
    let prepared = prepare_pages(&model, &pages)?;

    let n_classes = model.n_node_classes;
    let mut pred_classes = Vec::new();
    let mut gold_classes = Vec::new();
    let mut edge_counts = MatchCounts::default();
    let mut dets: Vec<Detection> = Vec::new();
    let mut golds: Vec<GroundTruth> = Vec::new();
    let mut export = DetectionExport {
        schema_version: 1,
        categories: (0..n_classes).map(|c| format!("category-{c}")).collect(),
        detections: Vec::new(),
    };
    for (page, prep) in pages.iter().zip(&prepared) {
        let labels = prep.labels.as_ref().ok_or_else(|| {
            CliError::Data(format!("page {:?} has no gold labels", prep.page_id))
        })?;
        let out = run_forward(&ckpt.params, &model, prep).map_err(model_err)?;
        let node_probs = softmax_rows(&out.node_logits);
        for (i, &gold) in labels.node_category.iter().enumerate() {
            let row = node_probs.row(i);
            let pred = (0..n_classes)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            pred_classes.push(pred);
            gold_classes.push(gold);
        }
        let kept: BTreeSet<(usize, usize)> =
            predicted_edges(&out.candidates, &out.edge_logits, &decode)
                .into_iter()
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
        let group = labels.node_to_group(prep.n_nodes());
        let wanted: BTreeSet<(usize, usize)> = out
            .candidates
            .iter()
            .filter(|(a, b)| group[*a] == group[*b])
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        edge_counts.tp += kept.intersection(&wanted).count();
        edge_counts.fp += kept.difference(&wanted).count();
        edge_counts.fn_ += wanted.difference(&kept).count();
        let instances = decode_instances(
            &prep.boxes,
            &out.node_logits,
            &out.candidates,
            &out.edge_logits,
            &decode,
        );
        for inst in &instances {
            dets.push(Detection {
                page: prep.page_id.clone(),
                category: inst.category,
                bbox: inst.bbox,
                score: inst.score,
            });
        }
        for inst in gold_instances(&prep.boxes, labels, n_classes) {
            golds.push(GroundTruth {
                page: prep.page_id.clone(),
                category: inst.category,
                bbox: inst.bbox,
            });
        }
        export
            .detections
            .extend(detections_from_instances(page, &instances));
    }
    let nodes = node_f1(&pred_classes, &gold_classes, n_classes);
    let edges = edge_counts.prf();
    let map = coco_map(&dets, &golds, n_classes);
    let report = serde_json::json!({
        "pages": pages.len(),
        "node_f1": nodes,
        "edge_f1": edges,
        "instance_map": map,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    if let Some(path) = &args.detections {
        write_detections(path, &export)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Page document to run.
    pub page: PathBuf,
    /// Trained checkpoint to run.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Overrides the default decode threshold.
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    /// Writes the decoded instances as JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Renders the prediction to this SVG file. Predicted grouping edges are
    /// solid; when the page carries gold labels, the pairs a split group is
    /// missing are dashed red.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn infer(args: &InferArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let model = ckpt.config;
    let decode = decode_for(&model, &RunConfig::default(), args.edge_threshold);
    let page = load_page(&args.page)?;
    let raster = raster_for_page(&page)?;
    let prep = prepare_page(&model, &page, raster.as_ref()).map_err(model_err)?;
    let out = run_forward(&ckpt.params, &model, &prep).map_err(model_err)?;
    let node_probs = softmax_rows(&out.node_logits);
    let classes: Vec<usize> = (0..prep.n_nodes())
        .map(|i| {
            let row = node_probs.row(i);
            (0..model.n_node_classes)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap()
        })
        .collect();
    let kept = predicted_edges(&out.candidates, &out.edge_logits, &decode);
    let instances = decode_instances(
        &prep.boxes,
        &out.node_logits,
        &out.candidates,
        &out.edge_logits,
        &decode,
    );
    let report = serde_json::json!({
        "page_id": prep.page_id,
        "node_category": classes,
        "instances": instances,
    });
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&report).unwrap())?;
    if let Some(svg_path) = &args.svg {
        let dashed = match &page.labels {
            Some(labels) => missing_group_links(&page, &kept, &labels.groups),
            None => Vec::new(),
        };
        let content = render_page(&page, Some(&classes), &kept, &dashed);
        write_svg(svg_path, &content)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// import
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    /// One box per word; an entity's words form a group.
    Word,
    /// One box per entity; every group is a single box.
    Entity,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Directory of FUNSD-style annotation JSON files.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory that receives the converted page documents.
    #[arg(long)]
    pub out: PathBuf,
    /// Box granularity of the conversion.
    #[arg(long, value_enum, default_value_t = Level::Word)]
    pub level: Level,
}

pub fn import(args: &ImportArgs) -> Result<(), CliError> {
    let level = match args.level {
        Level::Word => FunsdLevel::Word,
        Level::Entity => FunsdLevel::Entity,
    };
    let (pages, warnings) = load_funsd_dir(&args.input, level)?;
    if pages.is_empty() {
        return Err(CliError::Data(format!(
            "no annotation files in {}",
            args.input.display()
        )));
    }
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    for page in &pages {
        save_page(&args.out.join(format!("{}.json", page.page_id)), page)?;
    }
    println!(
        "imported {} pages (categories: {}) to {}",
        pages.len(),
        FUNSD_CATEGORIES.join(", "),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Initialization seed for the probed parameters.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Finite difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

/// Two short lines of text in two groups, enough to light up both heads.
/// The boxes are deliberately irregular: ties in distances or pooled maxima
/// would put finite differences on a selection boundary.
fn probe_page() -> Page {
    let rows = [
        ([57.0, 78.0, 149.0, 107.0], 0, 0),
        ([166.0, 81.0, 271.0, 113.0], 0, 0),
        ([283.0, 76.0, 331.0, 109.0], 0, 0),
        ([61.0, 143.0, 137.0, 168.0], 1, 1),
        ([151.0, 139.0, 247.0, 171.0], 1, 1),
        ([259.0, 145.0, 318.0, 166.0], 1, 1),
    ];
    Page {
        page_id: "probe".into(),
        width_px: 400,
        height_px: 250,
        boxes: rows
            .iter()
            .enumerate()
            .map(|(id, &(bbox_px, _, _))| TextBox {
                id,
                bbox_px,
                text: None,
            })
            .collect(),
        labels: Some(GoldLabels {
            node_category: rows.iter().map(|&(_, c, _)| c).collect(),
            groups: vec![vec![0, 1, 2], vec![3, 4, 5]],
            links: None,
        }),
        image_path: None,
    }
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    if args.step <= 0.0 || args.tol <= 0.0 {
        return Err(CliError::Config(
            "step and tol must be positive".into(),
        ));
    }
    let cfg = ModelConfig {
        hidden_dim: 12,
        image_provider: ImageProviderConfig::Null,
        graph_refresh: vec![RefreshMode::Static, RefreshMode::Union { k: 2 }],
        n_node_classes: 2,
        edge_features: EdgeFeatureConfig {
            rope_dim: 8,
            ..EdgeFeatureConfig::default()
        },
        ..ModelConfig::default()
    };
    let prep = prepare_page(&cfg, &probe_page(), None).map_err(model_err)?;
    let hyper = layoutgraph::model::TrainHyper::default();
    let params = init_model(&cfg, args.seed).map_err(model_err)?;
    let worst = grad_check(&params, args.step, |probe, need_grads| {
        let mut tape = Tape::new();
        let parts = page_loss(&mut tape, probe, &cfg, &prep, &hyper)
            .map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
        let grads = if need_grads {
            Some(tape.backward(parts.loss)?)
        } else {
            None
        };
        Ok(Evaluation {
            loss: tape.value(parts.loss).item(),
            grads,
        })
    })
    .map_err(|e| CliError::Numeric(e.to_string()))?;
    println!("worst_rel_err={worst:.3e} (step {:.1e})", args.step);
    if worst > args.tol {
        return Err(CliError::Numeric(format!(
            "gradient check failed: worst relative error {worst:.3e} exceeds {:.1e}",
            args.tol
        )));
    }
    Ok(())
}
