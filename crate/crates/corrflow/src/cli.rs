//! Command-line entry point: shared config and seed handling, atomic run
//! manifests, and the train / infer-flow / eval-tapvid / eval-articulation /
//! plan-action / viz subcommands.
//!
//! Exit contract: 0 on success, 1 on data errors, 2 on configuration or
//! argument errors, with a machine-readable record on stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::core::{
    read_flow, scale_intrinsics, storage_roundtrip, write_flow, CameraIntrinsics, FlowField,
    ImageTensor, FEATURE_STRIDE,
};
use crate::datapipe::{
    list_frames, load_articulated_pair, load_depth_meters, load_image, load_track_annotations,
    resize_image, resize_nearest, save_image, ArticulatedPairAnnotation,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    eval_resize_dims, evaluate_articulated_pair, plan_action, scale_tracks,
    video_correspondence_sets, ArticulatedPairResult, ArticulationErrors, CorrespondenceSet,
    MetricCounts, OcclusionPolicy, DONE_THRESHOLD_PX, EVAL_SHORT_SIDE,
};
use crate::model::Pipeline;
use crate::training::{fit, load_checkpoint, pipeline_from_checkpoint, Checkpoint, VideoPairSource};
use crate::viz::{correspondence_overlay, flow_color_wheel, pca_feature_panel};

pub const MANIFEST_NAME: &str = "run_manifest.json";

/// Provenance record written next to every run's outputs: once at start
/// (finished_at null) and again on success.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub code_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<String>,
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("cannot serialize {}: {e}", path.display())))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| Error::Data(format!("cannot publish {}: {e}", path.display())))?;
    Ok(())
}

struct RunScope {
    path: PathBuf,
    manifest: RunManifest,
}

impl RunScope {
    fn begin(out_dir: &Path, command: &str, config_hash: String, seed: u64) -> Result<RunScope> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| Error::Data(format!("cannot create {}: {e}", out_dir.display())))?;
        let manifest = RunManifest {
            command: command.into(),
            argv: std::env::args().collect(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            seed,
            started_at: now_rfc3339(),
            finished_at: None,
            outputs: Vec::new(),
        };
        let path = out_dir.join(MANIFEST_NAME);
        write_json_atomic(&path, &manifest)?;
        Ok(RunScope { path, manifest })
    }

    fn finish(mut self, outputs: &[&Path]) -> Result<()> {
        self.manifest.finished_at = Some(now_rfc3339());
        self.manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        write_json_atomic(&self.path, &self.manifest)
    }
}

/// Stderr record emitted on failure.
pub fn error_record(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

#[derive(Parser)]
#[command(
    name = "corrflow",
    version,
    about = "Dense visual correspondence: train, infer flow, evaluate, plan actions, visualize"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the correspondence encoder on a video corpus.
    Train(TrainArgs),
    /// Predict dense flow for one image pair and write a flow file.
    InferFlow(InferFlowArgs),
    /// Point-tracking metrics (AD, delta, AJ) over annotated videos.
    EvalTapvid(EvalTapvidArgs),
    /// Revolute-joint recovery errors over articulated RGB-D pairs.
    EvalArticulation(EvalArticulationArgs),
    /// Goal-conditioned displacement command from an RGB-D observation.
    PlanAction(PlanActionArgs),
    /// Render correspondence overlays, flow color wheels, or PCA panels.
    Viz(VizArgs),
}

#[derive(Args)]
struct Shared {
    /// TOML run configuration; defaults apply when omitted. Subcommands
    /// that take --ckpt run under the checkpoint's stored config and refuse
    /// a --config that hashes differently.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override; defaults to the seed in the effective config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    shared: Shared,
    /// Output directory for checkpoints, metrics, and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// Continue from this checkpoint; config hashes must match.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct InferFlowArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint holding the trained encoder and its config.
    #[arg(long)]
    ckpt: PathBuf,
    /// Source image.
    #[arg(long)]
    src: PathBuf,
    /// Target image.
    #[arg(long)]
    tgt: PathBuf,
    /// Output flow file.
    #[arg(long)]
    out: PathBuf,
    /// Shorter-side size before inference; 0 keeps the native size. Both
    /// sides snap to the feature-stride grid either way.
    #[arg(long, default_value_t = EVAL_SHORT_SIDE)]
    short_side: usize,
}

#[derive(Args)]
struct EvalTapvidArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint to run inference with.
    #[arg(long, conflicts_with = "flows", required_unless_present = "flows")]
    ckpt: Option<PathBuf>,
    /// Precomputed flow root: <video>/<src>-<tgt>.dfl1 at the evaluation
    /// raster.
    #[arg(long)]
    flows: Option<PathBuf>,
    /// Video corpus root: <video>/ numbered frames plus <video>/tracks.json.
    #[arg(long)]
    data: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = EVAL_SHORT_SIDE)]
    short_side: usize,
    /// How occluded ground-truth points score: as false positives or
    /// excluded entirely.
    #[arg(long, value_enum, default_value_t = OcclusionArg::CountFp)]
    occlusion: OcclusionArg,
}

#[derive(Args)]
struct EvalArticulationArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint to run inference with.
    #[arg(long, conflicts_with = "flows", required_unless_present = "flows")]
    ckpt: Option<PathBuf>,
    /// Precomputed flow root: <instance>.dfl1 at the evaluation raster.
    #[arg(long)]
    flows: Option<PathBuf>,
    /// Instance root: one directory per articulated pair.
    #[arg(long)]
    data: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = EVAL_SHORT_SIDE)]
    short_side: usize,
    /// Correspondence budget per instance; moving-part pixels are thinned
    /// to at most this many queries.
    #[arg(long, default_value_t = 512)]
    max_queries: usize,
}

#[derive(Args)]
struct PlanActionArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint for observation-to-goal inference; needs --goal.
    #[arg(
        long,
        conflicts_with = "flow",
        required_unless_present = "flow",
        requires = "goal"
    )]
    ckpt: Option<PathBuf>,
    /// Goal image.
    #[arg(long, requires = "ckpt", conflicts_with = "flow")]
    goal: Option<PathBuf>,
    /// Precomputed observation-to-goal flow file.
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Observation directory: rgb.png, depth.png (16-bit millimeters),
    /// intrinsics.json, optional mask.png restricting candidate pixels.
    #[arg(long)]
    current: PathBuf,
    /// Output action file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Remaining displacement below this many pixels means done.
    #[arg(long, default_value_t = DONE_THRESHOLD_PX)]
    done_threshold: f64,
    #[arg(long, default_value_t = EVAL_SHORT_SIDE)]
    short_side: usize,
}

#[derive(Args)]
struct VizArgs {
    #[command(flatten)]
    shared: Shared,
    /// Flow file (overlay and wheel modes).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Source image.
    #[arg(long)]
    src: Option<PathBuf>,
    /// Target image.
    #[arg(long)]
    tgt: Option<PathBuf>,
    /// Output raster (PNG).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = VizMode::Overlay)]
    mode: VizMode,
    /// Checkpoint providing the encoder (pca mode).
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Correspondence grid points per side (overlay mode).
    #[arg(long, default_value_t = 12)]
    per_side: usize,
    /// Shorter-side size before encoding (pca mode); 0 keeps native.
    #[arg(long, default_value_t = EVAL_SHORT_SIDE)]
    short_side: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VizMode {
    /// Side-by-side pair with lines joining sampled correspondences.
    Overlay,
    /// Hue encodes flow direction, saturation encodes magnitude.
    Wheel,
    /// Joint 3-component PCA of the encoder features, painted side by side.
    Pca,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OcclusionArg {
    /// Occluded ground truth counts against jaccard as a false positive.
    CountFp,
    /// Occluded ground truth is dropped from every metric.
    Exclude,
}

impl From<OcclusionArg> for OcclusionPolicy {
    fn from(a: OcclusionArg) -> Self {
        match a {
            OcclusionArg::CountFp => OcclusionPolicy::CountAsFalsePositive,
            OcclusionArg::Exclude => OcclusionPolicy::Exclude,
        }
    }
}

impl Cli {
    pub fn execute(self) -> Result<()> {
        match self.command {
            Command::Train(args) => run_train(args),
            Command::InferFlow(args) => run_infer_flow(args),
            Command::EvalTapvid(args) => run_eval_tapvid(args),
            Command::EvalArticulation(args) => run_eval_articulation(args),
            Command::PlanAction(args) => run_plan_action(args),
            Command::Viz(args) => run_viz(args),
        }
    }
}

/// The config a run actually uses. A checkpoint pins its training config;
/// an explicit --config must hash identically so runs stay reproducible
/// from their manifests.
fn effective_config(explicit: Option<&Path>, ck: Option<&Checkpoint>) -> Result<Config> {
    let from_file = explicit.map(Config::load).transpose()?;
    match (from_file, ck) {
        (Some(cfg), Some(ck)) => {
            if cfg.hash() != ck.config_hash {
                return Err(Error::Config(format!(
                    "--config hashes to {} but the checkpoint was trained under {}; \
                     drop --config or pass the original file",
                    cfg.hash(),
                    ck.config_hash
                )));
            }
            Ok(cfg)
        }
        (None, Some(ck)) => Ok(ck.config.clone()),
        (Some(cfg), None) => Ok(cfg),
        (None, None) => Ok(Config::default()),
    }
}

/// Directory a file output lives in; the manifest goes there too.
fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Sorted (name, path) list of the direct subdirectories of `root`.
fn instance_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(root)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", root.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::Data(format!("{}: {e}", root.display())))?;
        if entry.path().is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "no instance directories under {}",
            root.display()
        )));
    }
    out.sort();
    Ok(out)
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.shared.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = args.shared.seed {
        config.train.seed = seed;
    }
    if config.data.root.is_empty() {
        return Err(Error::Config(
            "data.root is empty; point it at a video corpus in --config".into(),
        ));
    }
    let scope = RunScope::begin(&args.out, "train", config.hash(), config.train.seed)?;
    let source = VideoPairSource::from_config(&config)?;
    let ck = fit(&config, &source, &args.out, args.resume.as_deref())?;
    let final_ckpt = args.out.join(format!("ckpt_{:06}.bin", ck.step));
    scope.finish(&[&final_ckpt, &args.out.join("metrics.jsonl")])
}

/// Loads a pair, resizes both frames to the evaluation raster, and predicts
/// full-resolution flow.
fn infer_pair_flow(
    pipe: &Pipeline,
    src: &Path,
    tgt: &Path,
    short_side: usize,
) -> Result<FlowField> {
    let i1 = load_image(src)?;
    let i2 = load_image(tgt)?;
    if (i2.height(), i2.width()) != (i1.height(), i1.width()) {
        return Err(Error::Data(format!(
            "image sizes differ: {} is {}x{}, {} is {}x{}",
            src.display(),
            i1.width(),
            i1.height(),
            tgt.display(),
            i2.width(),
            i2.height()
        )));
    }
    let (eh, ew) = eval_resize_dims(i1.height(), i1.width(), short_side)?;
    let i1 = resize_image(&i1, eh, ew)?;
    let i2 = resize_image(&i2, eh, ew)?;
    Ok(pipe.predict_flow(&i1, &i2)?.full)
}

fn run_infer_flow(args: InferFlowArgs) -> Result<()> {
    let ck = load_checkpoint(&args.ckpt)?;
    let config = effective_config(args.shared.config.as_deref(), Some(&ck))?;
    let seed = args.shared.seed.unwrap_or(config.train.seed);
    let scope = RunScope::begin(&parent_dir(&args.out), "infer-flow", config.hash(), seed)?;
    let pipe = pipeline_from_checkpoint(&ck)?;
    let flow = infer_pair_flow(&pipe, &args.src, &args.tgt, args.short_side)?;
    write_flow(&flow, &args.out)?;
    scope.finish(&[&args.out])
}

/// Correspondence sets for one annotated video, from inference or from
/// precomputed flow files. Checkpoint predictions pass through storage
/// precision so both paths score identically.
fn tapvid_video_sets(
    id: &str,
    dir: &Path,
    pipe: Option<&Pipeline>,
    flows: Option<&Path>,
    short_side: usize,
) -> Result<Vec<CorrespondenceSet>> {
    let ann = load_track_annotations(&dir.join("tracks.json"))?;
    let frames = list_frames(dir)?;
    let covered = ann.num_frames().unwrap_or(0);
    if frames.len() != covered {
        return Err(Error::Data(format!(
            "{} has {} frames but its annotation covers {covered}",
            dir.display(),
            frames.len()
        )));
    }
    let (eh, ew) = eval_resize_dims(ann.height, ann.width, short_side)?;
    let scaled = scale_tracks(&ann, eh, ew)?;
    let mut cache: BTreeMap<usize, ImageTensor> = BTreeMap::new();
    let flow_for = |s: usize, t: usize| -> Result<FlowField> {
        if let Some(pipe) = pipe {
            for idx in [s, t] {
                if !cache.contains_key(&idx) {
                    let img = load_image(&frames[idx].1)?;
                    cache.insert(idx, resize_image(&img, eh, ew)?);
                }
            }
            let pred = pipe.predict_flow(&cache[&s], &cache[&t])?;
            return Ok(storage_roundtrip(&pred.full));
        }
        let path = flows
            .expect("one of --ckpt/--flows is present")
            .join(id)
            .join(format!("{s}-{t}.dfl1"));
        let flow = read_flow(&path)?;
        if (flow.height(), flow.width()) != (eh, ew) {
            return Err(Error::Data(format!(
                "{}: flow raster {}x{} does not match the {ew}x{eh} evaluation raster",
                path.display(),
                flow.width(),
                flow.height()
            )));
        }
        Ok(flow)
    };
    video_correspondence_sets(&scaled, flow_for)
}

fn run_eval_tapvid(args: EvalTapvidArgs) -> Result<()> {
    let ck = args.ckpt.as_deref().map(load_checkpoint).transpose()?;
    let config = effective_config(args.shared.config.as_deref(), ck.as_ref())?;
    let seed = args.shared.seed.unwrap_or(config.train.seed);
    let scope = RunScope::begin(&parent_dir(&args.out), "eval-tapvid", config.hash(), seed)?;
    let pipe = ck.as_ref().map(pipeline_from_checkpoint).transpose()?;

    let mut counts = MetricCounts::default();
    for (id, dir) in &instance_dirs(&args.data)? {
        let sets = tapvid_video_sets(
            id,
            dir,
            pipe.as_ref(),
            args.flows.as_deref(),
            args.short_side,
        )
        .map_err(|e| Error::Data(format!("video {id}: {e}")))?;
        for (i, set) in sets.iter().enumerate() {
            counts
                .add_set(set)
                .map_err(|e| Error::Data(format!("video {id} set {i}: {e}")))?;
        }
    }
    let report = counts.report(args.occlusion.into())?;
    write_json_atomic(&args.out, &report)?;
    scope.finish(&[&args.out])
}

/// The instance resampled onto the evaluation raster. Color resizes
/// bilinearly; depth and the mask take nearest samples so holes stay holes;
/// intrinsics follow the raster. The metric ground truth is unchanged.
fn resize_instance(
    inst: &ArticulatedPairAnnotation,
    eh: usize,
    ew: usize,
) -> Result<ArticulatedPairAnnotation> {
    let (h, w) = (inst.rgb[0].height(), inst.rgb[0].width());
    if (eh, ew) == (h, w) {
        return Ok(inst.clone());
    }
    Ok(ArticulatedPairAnnotation {
        rgb: [
            resize_image(&inst.rgb[0], eh, ew)?,
            resize_image(&inst.rgb[1], eh, ew)?,
        ],
        depth: [
            resize_nearest(&inst.depth[0], eh, ew)?,
            resize_nearest(&inst.depth[1], eh, ew)?,
        ],
        intrinsics: scale_intrinsics(
            &inst.intrinsics,
            ew as f64 / w as f64,
            eh as f64 / h as f64,
        )?,
        part_mask: resize_nearest(&inst.part_mask, eh, ew)?,
        gt_axis: inst.gt_axis,
        gt_pivot: inst.gt_pivot,
        gt_angle_deg: inst.gt_angle_deg,
    })
}

#[derive(Debug, Serialize)]
struct ArticulationSummary {
    evaluated: usize,
    failed: usize,
    /// Component-wise medians over the evaluated instances.
    medians: ArticulationErrors,
    results: BTreeMap<String, ArticulatedPairResult>,
    failures: BTreeMap<String, String>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

fn articulation_instance(
    dir: &Path,
    pipe: Option<&Pipeline>,
    flow_path: Option<PathBuf>,
    short_side: usize,
    max_queries: usize,
) -> Result<ArticulatedPairResult> {
    let inst = load_articulated_pair(dir)?;
    let (eh, ew) = eval_resize_dims(inst.rgb[0].height(), inst.rgb[0].width(), short_side)?;
    let inst = resize_instance(&inst, eh, ew)?;
    let flow = if let Some(pipe) = pipe {
        storage_roundtrip(&pipe.predict_flow(&inst.rgb[0], &inst.rgb[1])?.full)
    } else {
        let path = flow_path.expect("one of --ckpt/--flows is present");
        let flow = read_flow(&path)?;
        if (flow.height(), flow.width()) != (eh, ew) {
            return Err(Error::Data(format!(
                "{}: flow raster {}x{} does not match the {ew}x{eh} evaluation raster",
                path.display(),
                flow.width(),
                flow.height()
            )));
        }
        flow
    };
    evaluate_articulated_pair(&inst, &flow, max_queries)
}

fn run_eval_articulation(args: EvalArticulationArgs) -> Result<()> {
    let ck = args.ckpt.as_deref().map(load_checkpoint).transpose()?;
    let config = effective_config(args.shared.config.as_deref(), ck.as_ref())?;
    let seed = args.shared.seed.unwrap_or(config.train.seed);
    let scope = RunScope::begin(
        &parent_dir(&args.out),
        "eval-articulation",
        config.hash(),
        seed,
    )?;
    let pipe = ck.as_ref().map(pipeline_from_checkpoint).transpose()?;

    let mut results = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (id, dir) in &instance_dirs(&args.data)? {
        let flow_path = args
            .flows
            .as_ref()
            .map(|root| root.join(format!("{id}.dfl1")));
        match articulation_instance(
            dir,
            pipe.as_ref(),
            flow_path,
            args.short_side,
            args.max_queries,
        ) {
            Ok(res) => {
                results.insert(id.clone(), res);
            }
            Err(e) => {
                failures.insert(id.clone(), e.to_string());
            }
        }
    }
    if results.is_empty() {
        return Err(Error::Data(format!(
            "no instance evaluated successfully; first failure: {}",
            failures
                .iter()
                .next()
                .map(|(id, e)| format!("{id}: {e}"))
                .unwrap_or_default()
        )));
    }
    let pick = |f: fn(&ArticulationErrors) -> f64| {
        let mut v: Vec<f64> = results.values().map(|r| f(&r.errors)).collect();
        median(&mut v)
    };
    let summary = ArticulationSummary {
        evaluated: results.len(),
        failed: failures.len(),
        medians: ArticulationErrors {
            angle_deg: pick(|e| e.angle_deg),
            pos_m: pick(|e| e.pos_m),
            pivot_to_axis_m: pick(|e| e.pivot_to_axis_m),
            state_deg: pick(|e| e.state_deg),
            dist_m: pick(|e| e.dist_m),
        },
        results,
        failures,
    };
    write_json_atomic(&args.out, &summary)?;
    scope.finish(&[&args.out])
}

fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let k: CameraIntrinsics = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    k.validate()?;
    Ok(k)
}

fn run_plan_action(args: PlanActionArgs) -> Result<()> {
    let ck = args.ckpt.as_deref().map(load_checkpoint).transpose()?;
    let config = effective_config(args.shared.config.as_deref(), ck.as_ref())?;
    let seed = args.shared.seed.unwrap_or(config.train.seed);
    let scope = RunScope::begin(&parent_dir(&args.out), "plan-action", config.hash(), seed)?;

    let rgb = load_image(&args.current.join("rgb.png"))?;
    let depth = load_depth_meters(&args.current.join("depth.png"))?;
    let (h, w) = (rgb.height(), rgb.width());
    if depth.dim() != (h, w) {
        return Err(Error::Data(format!(
            "depth raster {}x{} does not match rgb {w}x{h}",
            depth.dim().1,
            depth.dim().0
        )));
    }
    let k = read_intrinsics(&args.current.join("intrinsics.json"))?;
    let mask_path = args.current.join("mask.png");
    let region: Option<Array2<bool>> = if mask_path.exists() {
        let m = load_image(&mask_path)?;
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::Data(format!(
                "mask raster {}x{} does not match rgb {w}x{h}",
                m.width(),
                m.height()
            )));
        }
        Some(Array2::from_shape_fn((h, w), |(y, x)| {
            m.data()[[y, x, 0]] > 0.0
        }))
    } else {
        None
    };

    let (eh, ew) = eval_resize_dims(h, w, args.short_side)?;
    let k = scale_intrinsics(&k, ew as f64 / w as f64, eh as f64 / h as f64)?;
    let depth = resize_nearest(&depth, eh, ew)?;
    let region = region
        .as_ref()
        .map(|m| resize_nearest(m, eh, ew))
        .transpose()?;

    let flow = if let Some(ck) = &ck {
        let goal = args.goal.as_ref().expect("clap ties --ckpt to --goal");
        let pipe = pipeline_from_checkpoint(ck)?;
        let obs = resize_image(&rgb, eh, ew)?;
        let goal = resize_image(&load_image(goal)?, eh, ew)?;
        storage_roundtrip(&pipe.predict_flow(&obs, &goal)?.full)
    } else {
        let path = args.flow.as_ref().expect("clap requires --flow here");
        let flow = read_flow(path)?;
        if (flow.height(), flow.width()) != (eh, ew) {
            return Err(Error::Data(format!(
                "{}: flow raster {}x{} does not match the {ew}x{eh} evaluation raster",
                path.display(),
                flow.width(),
                flow.height()
            )));
        }
        flow
    };

    let action = plan_action(&depth, &k, &flow, region.as_ref(), args.done_threshold)?;
    write_json_atomic(&args.out, &action)?;
    scope.finish(&[&args.out])
}

fn need<T>(v: Option<T>, flag: &str, mode: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument(format!("{mode} mode needs {flag}")))
}

fn run_viz(args: VizArgs) -> Result<()> {
    let ck = args.ckpt.as_deref().map(load_checkpoint).transpose()?;
    let config = effective_config(args.shared.config.as_deref(), ck.as_ref())?;
    let seed = args.shared.seed.unwrap_or(config.train.seed);
    let scope = RunScope::begin(&parent_dir(&args.out), "viz", config.hash(), seed)?;

    let image = match args.mode {
        VizMode::Overlay => {
            let flow = read_flow(&need(args.flow, "--flow", "overlay")?)?;
            let src = load_image(&need(args.src, "--src", "overlay")?)?;
            let tgt = load_image(&need(args.tgt, "--tgt", "overlay")?)?;
            // panels follow the flow raster, whatever the images' native size
            let src = resize_image(&src, flow.height(), flow.width())?;
            let tgt = resize_image(&tgt, flow.height(), flow.width())?;
            correspondence_overlay(&src, &tgt, &flow, args.per_side)?
        }
        VizMode::Wheel => flow_color_wheel(&read_flow(&need(args.flow, "--flow", "wheel")?)?)?,
        VizMode::Pca => {
            let ck = need(ck, "--ckpt", "pca")?;
            let pipe = pipeline_from_checkpoint(&ck)?;
            let src = load_image(&need(args.src, "--src", "pca")?)?;
            let tgt = load_image(&need(args.tgt, "--tgt", "pca")?)?;
            let (eh, ew) = eval_resize_dims(src.height(), src.width(), args.short_side)?;
            let src = resize_image(&src, eh, ew)?;
            let tgt = resize_image(&tgt, eh, ew)?;
            let (f1, f2) = pipe.encoder().encode_pair(&src, &tgt)?;
            pca_feature_panel(
                &f1.as_rows(),
                &f2.as_rows(),
                (f1.height(), f1.width()),
                FEATURE_STRIDE,
            )?
        }
    };
    save_image(&args.out, &image)?;
    scope.finish(&[&args.out])
}
