//! Command implementations behind the CLI verbs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::autodiff::{BnMode, BnStats, NodeId, ParamSet, Tape};
use crate::cli::config::{DataSource, ExperimentConfig, ModelKind, ModelScale};
use crate::cli::manifest::RunManifest;
use crate::cli::svg::render_signal_overlay;
use crate::dataset::{generate_synthetic_dataset, Dataset, WindowGroundTruth};
use crate::error::{Error, Result};
use crate::model::{
    checkpoint_kind, evaluate, predict, train, CamNetConfig, CamNetModel, ClassifierConfig,
    ClassifierModel, LogitsGraph, LstmVisConfig, LstmVisModel, Metrics, Network, TrainControl,
};
use crate::saliency::{cam_for_window, optimize_mask, saliency_from_mask};
use crate::signal::{balance_classes, RhythmClass, Window};
use crate::synth::TEMPLATE_VERSION;

/// A loaded network of any kind, delegating the trainable surface.
pub enum AnyModel {
    Classifier(ClassifierModel),
    CamNet(CamNetModel),
    LstmVis(LstmVisModel),
}

macro_rules! delegate {
    ($self:expr, $m:ident ( $($arg:expr),* )) => {
        match $self {
            AnyModel::Classifier(inner) => inner.$m($($arg),*),
            AnyModel::CamNet(inner) => inner.$m($($arg),*),
            AnyModel::LstmVis(inner) => inner.$m($($arg),*),
        }
    };
}

impl Network for AnyModel {
    fn kind(&self) -> &'static str {
        delegate!(self, kind())
    }
    fn params(&self) -> &ParamSet {
        delegate!(self, params())
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        delegate!(self, params_mut())
    }
    fn bn_running(&self) -> &[BnStats] {
        delegate!(self, bn_running())
    }
    fn bn_running_mut(&mut self) -> &mut [BnStats] {
        delegate!(self, bn_running_mut())
    }
    fn input_len(&self) -> usize {
        delegate!(self, input_len())
    }
    fn classes(&self) -> usize {
        delegate!(self, classes())
    }
    fn build_logits(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mode: BnMode,
        param_grads: bool,
    ) -> Result<LogitsGraph> {
        delegate!(self, build_logits(tape, x, mode, param_grads))
    }
    fn config_kv(&self) -> String {
        delegate!(self, config_kv())
    }
}

impl AnyModel {
    pub fn load(path: &Path) -> Result<AnyModel> {
        match checkpoint_kind(path)?.as_str() {
            "classifier" => Ok(AnyModel::Classifier(ClassifierModel::load(path)?)),
            "camnet" => Ok(AnyModel::CamNet(CamNetModel::load(path)?)),
            "lstmvis" => Ok(AnyModel::LstmVis(LstmVisModel::load(path)?)),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::model::save_network(self, path)
    }
}

fn build_model(cfg: &ExperimentConfig) -> Result<AnyModel> {
    Ok(match (cfg.model, cfg.model_scale) {
        (ModelKind::Classifier, ModelScale::Desk) => {
            AnyModel::Classifier(ClassifierModel::new(ClassifierConfig::desk_scale(), cfg.seed)?)
        }
        (ModelKind::Classifier, ModelScale::Paper) => {
            AnyModel::Classifier(ClassifierModel::new(ClassifierConfig::paper_scale(), cfg.seed)?)
        }
        (ModelKind::CamNet, ModelScale::Desk) => {
            AnyModel::CamNet(CamNetModel::new(CamNetConfig::desk_scale(), cfg.seed)?)
        }
        (ModelKind::CamNet, ModelScale::Paper) => {
            AnyModel::CamNet(CamNetModel::new(CamNetConfig::paper_scale(), cfg.seed)?)
        }
        (ModelKind::LstmVis, _) => {
            AnyModel::LstmVis(LstmVisModel::new(LstmVisConfig::desk_scale(), cfg.seed)?)
        }
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_window_pool(cfg: &ExperimentConfig) -> Result<(Vec<Window>, WindowGroundTruth)> {
    let dataset = Dataset::load_csv_dir(&cfg.dataset_dir())?;
    let set = dataset.windows()?;
    if set.skipped_boundary > 0 {
        log::info!("skipped {} boundary annotations", set.skipped_boundary);
    }
    Ok((set.windows, dataset.ground_truth))
}

fn split_pool(cfg: &ExperimentConfig, pool: Vec<Window>) -> Result<(Vec<Window>, Vec<Window>)> {
    balance_classes(pool, cfg.split_per_class, cfg.seed)
}

/// Runs `f` on a dedicated pool when a worker count is configured.
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool")
            .install(f)
    }
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("synth", &cfg.resolved, cfg.seed);
    ensure_dir(&cfg.out)?;
    let dataset = manifest.stage("generate", || {
        generate_synthetic_dataset(cfg.synth_per_class, cfg.seed, cfg.synth_duration_s)
    })?;
    let dir = cfg.out.join("dataset");
    let files = manifest.stage("write", || dataset.save_csv_dir(&dir))?;
    manifest.note(format!(
        "synthetic templates v{TEMPLATE_VERSION}; {} windows ({} per class)",
        dataset.records.len(),
        cfg.synth_per_class
    ));
    manifest.add_outputs(files);
    manifest.write(&cfg.out)?;
    println!(
        "synth: {} windows into {}",
        dataset.records.len(),
        dir.display()
    );
    Ok(manifest)
}

pub fn cmd_ingest(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("ingest", &cfg.resolved, cfg.seed);
    if cfg.data_source != DataSource::PhysionetDir {
        return Err(Error::Config(
            "ingest expects data.source = physionet (csv datasets are read in place)".to_string(),
        ));
    }
    let src = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("data.dir is required".to_string()))?;
    ensure_dir(&cfg.out)?;
    let dataset = manifest.stage("parse", || Dataset::load_physionet_dir(src))?;
    let dir = cfg.out.join("dataset");
    let files = manifest.stage("write", || dataset.save_csv_dir(&dir))?;
    let n_annotations: usize = dataset.records.iter().map(|r| r.annotations.len()).sum();
    manifest.note(format!(
        "{} records, {} annotations",
        dataset.records.len(),
        n_annotations
    ));
    manifest.add_outputs(files);
    manifest.write(&cfg.out)?;
    println!(
        "ingest: {} records into {}",
        dataset.records.len(),
        dir.display()
    );
    Ok(manifest)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("train", &cfg.resolved, cfg.seed);
    ensure_dir(&cfg.out)?;
    let (pool, _) = manifest.stage("load", || load_window_pool(cfg))?;
    let (train_set, test_set) = manifest.stage("split", || split_pool(cfg, pool))?;
    println!(
        "train: {} training windows, {} held out",
        train_set.len(),
        test_set.len()
    );
    let mut model = build_model(cfg)?;
    let ckpt_dir = cfg.out.join("checkpoints");
    ensure_dir(&ckpt_dir)?;
    let mut epoch_files = Vec::new();
    let curve = manifest.stage("train", || {
        with_workers(cfg.workers, || {
            train(&mut model, &train_set, &cfg.train, |model, report| {
                let path = ckpt_dir.join(format!("epoch_{:03}.ckpt", report.epoch));
                if let Err(err) = model.save(&path) {
                    log::error!("checkpoint write failed: {err}");
                    return TrainControl::Stop;
                }
                epoch_files.push(path);
                println!("epoch {:3}  loss {:.6}", report.epoch, report.mean_loss);
                TrainControl::Continue
            })
        })
    })?;
    let model_path = cfg.out.join("model.ckpt");
    model.save(&model_path)?;
    let curve_path = cfg.out.join("loss_curve.csv");
    let mut text = String::from("epoch,mean_loss\n");
    for (epoch, loss) in curve.iter().enumerate() {
        text.push_str(&format!("{epoch},{loss}\n"));
    }
    write_text(&curve_path, &text)?;
    manifest.add_outputs(epoch_files);
    manifest.add_output(model_path);
    manifest.add_output(curve_path);
    manifest.write(&cfg.out)?;
    Ok(manifest)
}

/// Returns the manifest and whether the metrics are partial (some class
/// metric undefined).
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<(RunManifest, bool)> {
    let mut manifest = RunManifest::new("eval", &cfg.resolved, cfg.seed);
    ensure_dir(&cfg.out)?;
    let model = AnyModel::load(&cfg.checkpoint_path())?;
    let (pool, _) = manifest.stage("load", || load_window_pool(cfg))?;
    let (_, test_set) = manifest.stage("split", || split_pool(cfg, pool))?;
    if test_set.is_empty() {
        return Err(Error::Config(
            "test split is empty; lower split.per_class".to_string(),
        ));
    }
    let metrics = manifest.stage("evaluate", || {
        with_workers(cfg.workers, || evaluate(&model, &test_set))
    })?;
    let metrics_path = cfg.out.join("metrics.csv");
    write_text(&metrics_path, &format_metrics_csv(&metrics))?;
    let confusion_path = cfg.out.join("confusion.csv");
    write_text(&confusion_path, &format_confusion_csv(&metrics))?;
    manifest.add_output(metrics_path);
    manifest.add_output(confusion_path);
    let partial = !metrics.complete;
    if partial {
        manifest.note("partial result: at least one class metric is undefined");
    }
    manifest.write(&cfg.out)?;
    println!(
        "eval: accuracy {:.4}, macro F1 {}",
        metrics.accuracy,
        metrics
            .macro_f1
            .map_or("undefined".to_string(), |v| format!("{v:.4}"))
    );
    Ok((manifest, partial))
}

pub fn format_metrics_csv(metrics: &Metrics) -> String {
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut text = String::from("class,precision,recall,f1,support\n");
    for m in &metrics.per_class {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            m.class.name(),
            cell(m.precision),
            cell(m.recall),
            cell(m.f1),
            m.support
        ));
    }
    text.push_str(&format!(
        "macro,{},{},{},\n",
        cell(metrics.macro_precision),
        cell(metrics.macro_recall),
        cell(metrics.macro_f1)
    ));
    text.push_str(&format!("accuracy,{:.6},,,\n", metrics.accuracy));
    text
}

pub fn format_confusion_csv(metrics: &Metrics) -> String {
    let mut text = String::from("true\\predicted");
    for class in RhythmClass::ALL {
        text.push_str(&format!(",{}", class.name()));
    }
    text.push('\n');
    for (i, row) in metrics.confusion.iter().enumerate() {
        text.push_str(RhythmClass::from_index(i).expect("8 classes").name());
        for count in row {
            text.push_str(&format!(",{count}"));
        }
        text.push('\n');
    }
    text
}

/// Correctly classified test windows with the highest confidence, per class.
struct Selection {
    /// `(window index, confidence)` in deterministic order.
    picks: Vec<(usize, f64)>,
    notes: Vec<String>,
}

fn select_windows(
    model: &AnyModel,
    test_set: &[Window],
    class_filter: Option<RhythmClass>,
    top_k: usize,
) -> Result<Selection> {
    let predictions: Vec<Result<(usize, Vec<f64>)>> = test_set
        .par_iter()
        .map(|w| predict(model, &w.samples))
        .collect();
    let mut by_class: Vec<Vec<(usize, f64)>> = vec![Vec::new(); RhythmClass::COUNT];
    for (i, prediction) in predictions.into_iter().enumerate() {
        let (pred, probs) = prediction?;
        let label = test_set[i].label;
        if pred == label.index() {
            by_class[label.index()].push((i, probs[pred]));
        }
    }
    let mut picks = Vec::new();
    let mut notes = Vec::new();
    for class in RhythmClass::ALL {
        if class_filter.is_some_and(|c| c != class) {
            continue;
        }
        let group = &mut by_class[class.index()];
        if group.is_empty() {
            notes.push(format!(
                "no correctly classified test window for class {}",
                class.name()
            ));
            continue;
        }
        group.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| test_set[a.0].source.id().cmp(&test_set[b.0].source.id()))
        });
        picks.extend(group.iter().take(top_k).copied());
    }
    Ok(Selection { picks, notes })
}

fn overlay_csv(samples: &[f64], overlay: &[f64]) -> String {
    let mut text = String::with_capacity(samples.len() * 24);
    for (t, (x, o)) in samples.iter().zip(overlay).enumerate() {
        text.push_str(&format!("{t},{x},{o}\n"));
    }
    text
}

fn sanitize_id(id: &str) -> String {
    id.replace([':', '/', '\\'], "_")
}

pub fn cmd_cam(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("cam", &cfg.resolved, cfg.seed);
    ensure_dir(&cfg.out)?;
    let model = AnyModel::load(&cfg.checkpoint_path())?;
    let AnyModel::CamNet(camnet) = &model else {
        return Err(Error::Config(
            "cam requires a camnet checkpoint (train with model = camnet)".to_string(),
        ));
    };
    let (pool, _) = manifest.stage("load", || load_window_pool(cfg))?;
    let (_, test_set) = manifest.stage("split", || split_pool(cfg, pool))?;
    let selection = manifest.stage("select", || {
        with_workers(cfg.workers, || {
            select_windows(&model, &test_set, cfg.saliency_class, cfg.top_k)
        })
    })?;
    let dir = cfg.out.join("cam");
    ensure_dir(&dir)?;
    let outputs = manifest.stage("render", || {
        let rendered: Vec<Result<Vec<PathBuf>>> = with_workers(cfg.workers, || {
            selection
                .picks
                .par_iter()
                .map(|(idx, confidence)| {
                    let window = &test_set[*idx];
                    let cam = cam_for_window(camnet, &window.samples, window.label)?;
                    let id = sanitize_id(&window.source.id());
                    let csv_path = dir.join(format!("{id}.csv"));
                    write_text(&csv_path, &overlay_csv(&window.samples, &cam.overlay))?;
                    let title = format!(
                        "CAM {} {} (confidence {:.3})",
                        window.label.name(),
                        window.source.id(),
                        confidence
                    );
                    let svg_path = dir.join(format!("{id}.svg"));
                    write_text(
                        &svg_path,
                        &render_signal_overlay(&window.samples, &cam.overlay, &title),
                    )?;
                    Ok(vec![csv_path, svg_path])
                })
                .collect()
        });
        let mut outputs = Vec::new();
        for r in rendered {
            outputs.extend(r?);
        }
        Ok(outputs)
    })?;
    for note in &selection.notes {
        manifest.note(note.clone());
    }
    manifest.add_outputs(outputs);
    manifest.write(&cfg.out)?;
    println!("cam: {} overlays into {}", selection.picks.len(), dir.display());
    Ok(manifest)
}

pub fn cmd_mask(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("mask", &cfg.resolved, cfg.seed);
    ensure_dir(&cfg.out)?;
    let model = AnyModel::load(&cfg.checkpoint_path())?;
    if !matches!(model, AnyModel::LstmVis(_)) {
        return Err(Error::Config(
            "mask requires an lstmvis checkpoint (train with model = lstmvis)".to_string(),
        ));
    }
    let (pool, _) = manifest.stage("load", || load_window_pool(cfg))?;
    let (_, test_set) = manifest.stage("split", || split_pool(cfg, pool))?;
    let selection = manifest.stage("select", || {
        with_workers(cfg.workers, || {
            select_windows(&model, &test_set, cfg.saliency_class, cfg.top_k)
        })
    })?;
    let dir = cfg.out.join("mask");
    ensure_dir(&dir)?;
    let outputs = manifest.stage("optimize", || {
        let rendered: Vec<Result<Vec<PathBuf>>> = with_workers(cfg.workers, || {
            selection
                .picks
                .par_iter()
                .map(|(idx, confidence)| {
                    let window = &test_set[*idx];
                    let state = optimize_mask(&model, &window.samples, window.label, &cfg.mask)?;
                    let overlay = saliency_from_mask(&state.mask, cfg.mask.convention);
                    let id = sanitize_id(&window.source.id());
                    let csv_path = dir.join(format!("{id}.csv"));
                    write_text(&csv_path, &overlay_csv(&window.samples, &overlay))?;
                    let loss_path = dir.join(format!("{id}.loss.csv"));
                    let mut text =
                        String::from("iteration,total,sparsity,smoothness,confidence\n");
                    for (i, terms) in state.loss_history.iter().enumerate() {
                        text.push_str(&format!(
                            "{i},{},{},{},{}\n",
                            terms.total, terms.sparsity, terms.smoothness, terms.confidence
                        ));
                    }
                    text.push_str(&format!(
                        "final,{},{},{},{}\n",
                        state.final_loss.total,
                        state.final_loss.sparsity,
                        state.final_loss.smoothness,
                        state.final_loss.confidence
                    ));
                    write_text(&loss_path, &text)?;
                    let title = format!(
                        "mask {} {} (confidence {:.3}, {})",
                        window.label.name(),
                        window.source.id(),
                        confidence,
                        cfg.mask.convention.name()
                    );
                    let svg_path = dir.join(format!("{id}.svg"));
                    write_text(
                        &svg_path,
                        &render_signal_overlay(&window.samples, &overlay, &title),
                    )?;
                    Ok(vec![csv_path, loss_path, svg_path])
                })
                .collect()
        });
        let mut outputs = Vec::new();
        for r in rendered {
            outputs.extend(r?);
        }
        Ok(outputs)
    })?;
    for note in &selection.notes {
        manifest.note(note.clone());
    }
    manifest.add_outputs(outputs);
    manifest.write(&cfg.out)?;
    println!(
        "mask: {} overlays into {}",
        selection.picks.len(),
        dir.display()
    );
    Ok(manifest)
}
