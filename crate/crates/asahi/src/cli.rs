//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on a usage error (bad flags, unreadable or
//! missing inputs named on the command line), 2 when work started and failed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use asahi_core::detector::{OracleParams, ScoreModel};
use asahi_core::eval::{evaluate, EvalParams, EvalReport, Throughput, UnmatchedPolicy};
use asahi_core::fusion::{PipelineConfig, SliceStrategy};
use asahi_core::redundancy::{analyze_plan, reduction_rate, BENCH_RESOLUTIONS};
use asahi_core::scenegen::{generate, render, Relaxation, SceneSpec};
use asahi_core::slicing::{extract_patch, fixed_plan};
use asahi_core::{AsahiConfig, Detection, ImageDims, SlicePlan, Slicer};

use crate::bench::{bench_table, run_bench, BenchOptions, BenchStrategy};
use crate::coco::{CocoAnnotation, CocoDataset, CocoImage};
use crate::config::{RunConfig, SuppressorKind};
use crate::detector::{Capability, Detector, ExternalDetector, OracleDetector};
use crate::interchange::{self, Record};
use crate::pipeline::{run_pipeline, ImageInput, RunOptions};
use crate::ppm;
use crate::report::{fixed, Format, Table};
use crate::saf_io::{build_saf, dir_loader, verify_saf, SafOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Annotation file `detect` looks for inside its input directory.
pub const ANNOTATIONS: &str = "annotations.json";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "asahi", version, about = "Adaptive slicing toolkit for small-object detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the slice plan for an image size.
    Plan(PlanArgs),
    /// Cut an image into resized slice patches.
    Slice(SliceArgs),
    /// Redundant-area table: adaptive plan against a fixed patch size.
    Redundancy(RedundancyArgs),
    /// Generate synthetic scenes with COCO ground truth.
    Scenegen(ScenegenArgs),
    /// Run the sliced detection pipeline over a directory of images.
    Detect(DetectArgs),
    /// Score an interchange file against COCO ground truth.
    Eval(EvalArgs),
    /// Build (or re-check) a fine-tuning set of full images plus slices.
    SafBuild(SafArgs),
    /// Compare slicing strategies on synthetic scenes.
    Bench(BenchArgs),
}

/// Settings shared by the commands that plan or run slices. Flags override
/// values from `--config`.
#[derive(Debug, Clone, Args, Default)]
pub struct RunFlags {
    /// key = value file with defaults for these flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overlap ratio between neighbouring slices, in [0, 1).
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Limiting dimension r of the adaptive planner.
    #[arg(long)]
    pub limit: Option<u32>,
    /// Longer side every patch is resized to.
    #[arg(long)]
    pub target: Option<u32>,
    /// Post-processing: cdn, cluster, nms, soft or wbf.
    #[arg(long)]
    pub suppressor: Option<String>,
    /// Overlap metric for cluster or nms: iou, giou, diou or ciou.
    #[arg(long)]
    pub metric: Option<String>,
    /// Suppression threshold (Soft-NMS sigma, WBF IoU threshold).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Upper bound on concurrent detector calls. Defaults to the number of
    /// logical processors.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p).map_err(usage)?,
            None => RunConfig::default(),
        };
        let over = RunConfig {
            overlap: self.overlap,
            limit: self.limit,
            target: self.target,
            suppressor: self
                .suppressor
                .as_deref()
                .map(str::parse::<SuppressorKind>)
                .transpose()
                .map_err(usage)?,
            metric: self
                .metric
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(usage)?,
            threshold: self.threshold,
            parallelism: self.parallelism,
            seed: self.seed,
        };
        let cfg = base.overridden_by(&over);
        cfg.asahi().map_err(usage)?;
        cfg.suppressor().map_err(usage)?;
        cfg.parallelism().map_err(usage)?;
        Ok(cfg)
    }
}

fn parse_dims(s: &str) -> Result<ImageDims, String> {
    s.parse::<ImageDims>().map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

/// Comma-separated `WxH` list; an empty string is an empty list.
fn parse_resolutions(s: &str) -> Result<Vec<ImageDims>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_dims(p).map_err(usage))
        .collect()
}

fn default_resolutions() -> String {
    BENCH_RESOLUTIONS
        .iter()
        .map(|(w, h)| format!("{w}x{h}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn slicer_for(strategy: &str, asahi: AsahiConfig) -> Result<Slicer, CliError> {
    match strategy.parse::<BenchStrategy>().map_err(usage)? {
        BenchStrategy::Asahi => Ok(Slicer::Asahi(asahi)),
        BenchStrategy::Sahi(patch) => Ok(Slicer::Fixed {
            patch,
            overlap: asahi.overlap_ratio,
        }),
        BenchStrategy::Grid(n) => Ok(Slicer::grid_of(n, asahi.overlap_ratio).expect("checked when parsed")),
    }
}

fn slice_strategy(strategy: &str) -> Result<SliceStrategy, CliError> {
    Ok(match strategy.parse::<BenchStrategy>().map_err(usage)? {
        BenchStrategy::Asahi => SliceStrategy::Asahi,
        BenchStrategy::Sahi(patch) => SliceStrategy::Fixed { patch },
        BenchStrategy::Grid(n) => match Slicer::grid_of(n, 0.0) {
            Some(Slicer::Grid { major, minor, .. }) => SliceStrategy::Grid { major, minor },
            _ => unreachable!("checked when parsed"),
        },
    })
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes()).map_err(runtime)
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- plan

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_dims, required_unless_present = "image", conflicts_with = "image")]
    pub dims: Option<ImageDims>,
    /// Read the size from a PPM image instead.
    #[arg(long, value_name = "PPM")]
    pub image: Option<PathBuf>,
    /// asahi, grid-N or sahi-P.
    #[arg(long, default_value = "asahi")]
    pub strategy: String,
    /// text or csv; csv lists the windows only.
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    #[command(flatten)]
    pub run: RunFlags,
}

fn window_table(plan: &SlicePlan) -> Table {
    let mut t = Table::new(["row", "col", "x1", "y1", "x2", "y2"]);
    for w in &plan.windows {
        let (x1, y1, x2, y2) = w.pixel_bounds();
        t.push([w.row, w.col, x1, y1, x2, y2].map(|v| v.to_string()));
    }
    t
}

fn cmd_plan(a: &PlanArgs, out: &mut dyn Write) -> CliResult {
    let cfg = a.run.resolve()?;
    let dims = match (&a.dims, &a.image) {
        (Some(d), _) => *d,
        (None, Some(p)) => {
            let r = ppm::load_ppm(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            ImageDims::new(r.width(), r.height()).map_err(usage)?
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let slicer = slicer_for(&a.strategy, cfg.asahi().map_err(usage)?)?;
    let plan = slicer.plan(dims).map_err(runtime)?;
    let text = match a.format {
        Format::Csv => window_table(&plan).to_csv(),
        Format::Text => {
            let red = analyze_plan(&plan);
            let mut s = format!(
                "strategy {slicer}\ndims {dims}\ngrid {} rows x {} cols\nwindows {}\nedge {} x {}\n",
                plan.rows,
                plan.cols,
                plan.len(),
                fixed(plan.edge_x, 2),
                fixed(plan.edge_y, 2)
            );
            if let Some(sc) = plan.asahi {
                s.push_str(&format!("threshold {}\n", fixed(sc.threshold, 2)));
            }
            s.push_str(&format!(
                "processed_pixels {}\nredundant_pixels {}\n",
                fixed(red.total, 2),
                fixed(red.sr, 2)
            ));
            plan.write_windows(&mut s).expect("string write");
            s
        }
    };
    emit(out, &text)
}

// ---------------------------------------------------------------- slice

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// Source image (P6 PPM).
    #[arg(long, value_name = "PPM")]
    pub image: PathBuf,
    /// Directory for the patches; created if needed.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// asahi, grid-N or sahi-P.
    #[arg(long, default_value = "asahi")]
    pub strategy: String,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    #[command(flatten)]
    pub run: RunFlags,
}

fn cmd_slice(a: &SliceArgs, out: &mut dyn Write) -> CliResult {
    let cfg = a.run.resolve()?;
    let asahi = cfg.asahi().map_err(usage)?;
    let raster = ppm::load_ppm(&a.image).map_err(|e| usage(format!("{}: {e}", a.image.display())))?;
    let dims = ImageDims::new(raster.width(), raster.height()).map_err(usage)?;
    let plan = slicer_for(&a.strategy, asahi)?.plan(dims).map_err(runtime)?;
    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let mut t = Table::new(["file", "row", "col", "x1", "y1", "x2", "y2", "width", "height"]);
    for w in &plan.windows {
        let p = extract_patch(&raster, w, asahi.resize_target).map_err(runtime)?;
        let name = format!("patch_{:02}_{:02}.ppm", w.row, w.col);
        let path = a.out.join(&name);
        ppm::save_ppm(&p.raster, &path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let (x1, y1, x2, y2) = w.pixel_bounds();
        t.push([
            name,
            w.row.to_string(),
            w.col.to_string(),
            x1.to_string(),
            y1.to_string(),
            x2.to_string(),
            y2.to_string(),
            p.raster.width().to_string(),
            p.raster.height().to_string(),
        ]);
    }
    emit(out, &t.render(a.format))
}

// ---------------------------------------------------------------- redundancy

#[derive(Debug, Args)]
pub struct RedundancyArgs {
    /// Comma-separated WIDTHxHEIGHT list.
    #[arg(long, default_value_t = default_resolutions())]
    pub resolutions: String,
    /// Baseline patch size.
    #[arg(long, default_value_t = 512)]
    pub patch: u32,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    /// Also write the table as comma-separated values to this file.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

fn cmd_redundancy(a: &RedundancyArgs, out: &mut dyn Write) -> CliResult {
    let cfg = a.run.resolve()?;
    let asahi = cfg.asahi().map_err(usage)?;
    if a.patch == 0 {
        return Err(usage("--patch must be at least 1"));
    }
    let resolutions = parse_resolutions(&a.resolutions)?;
    let mut t = Table::new([
        "resolution",
        "asahi_slices",
        "asahi_rx",
        "asahi_ry",
        "asahi_sr",
        "sahi_slices",
        "sahi_rx",
        "sahi_ry",
        "sahi_sr",
        "reduction_pct",
    ]);
    for dims in resolutions {
        let ap = Slicer::Asahi(asahi).plan(dims).map_err(runtime)?;
        let sp = fixed_plan(dims, a.patch, asahi.overlap_ratio).map_err(runtime)?;
        let (ar, sr) = (analyze_plan(&ap), analyze_plan(&sp));
        let red = reduction_rate(&ar, &sr).map_err(runtime)?;
        t.push([
            dims.to_string(),
            ap.len().to_string(),
            fixed(ar.rx, 2),
            fixed(ar.ry, 2),
            fixed(ar.sr, 2),
            sp.len().to_string(),
            fixed(sr.rx, 2),
            fixed(sr.ry, 2),
            fixed(sr.sr, 2),
            fixed(100.0 * red, 2),
        ]);
    }
    if let Some(p) = &a.csv {
        write_file(p, &t.to_csv())?;
    }
    emit(out, &t.render(a.format))
}

// ---------------------------------------------------------------- scenegen

#[derive(Debug, Args)]
pub struct ScenegenArgs {
    /// Output directory; receives annotations.json and, with --render, PPMs.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of scenes.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_dims, default_value = "1920x1080")]
    pub dims: ImageDims,
    /// Objects per scene.
    #[arg(long, default_value_t = 100)]
    pub objects: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: u32,
    /// Smallest box edge, px.
    #[arg(long, default_value_t = 6.0)]
    pub min_edge: f64,
    /// Largest box edge, px.
    #[arg(long, default_value_t = 200.0)]
    pub max_edge: f64,
    /// Largest IoU allowed between two objects.
    #[arg(long, default_value_t = 0.3)]
    pub max_iou: f64,
    /// Fraction of objects with area below 32x32.
    #[arg(long, default_value_t = 0.7)]
    pub small_fraction: f64,
    /// Keep objects that could not be placed under the IoU cap.
    #[arg(long)]
    pub relax: bool,
    /// Also write a PPM per scene.
    #[arg(long)]
    pub render: bool,
}

fn cmd_scenegen(a: &ScenegenArgs, out: &mut dyn Write) -> CliResult {
    let base = SceneSpec {
        seed: a.seed,
        dims: a.dims,
        object_count: a.objects,
        class_count: a.classes,
        min_edge: a.min_edge,
        max_edge: a.max_edge,
        max_iou: a.max_iou,
        small_fraction: a.small_fraction,
        relaxation: if a.relax {
            Relaxation::BestEffort
        } else {
            Relaxation::Skip
        },
    };
    base.validate().map_err(usage)?;
    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let mut ds = CocoDataset {
        categories: CocoDataset::categories_for(a.classes),
        ..CocoDataset::default()
    };
    let mut t = Table::new(["image_id", "file", "objects", "skipped", "relaxed"]);
    for i in 0..a.count {
        let spec = SceneSpec {
            seed: a.seed.wrapping_add(i as u64),
            ..base
        };
        let scene = generate(&spec).map_err(runtime)?;
        let id = i as u64 + 1;
        let name = format!("scene_{id:06}.ppm");
        if a.render {
            let path = a.out.join(&name);
            ppm::save_ppm(&render(&scene), &path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        }
        ds.images.push(CocoImage::new(id, name.clone(), a.dims.width, a.dims.height));
        for g in &scene.annotations {
            let ann_id = ds.annotations.len() as u64 + 1;
            ds.annotations
                .push(CocoAnnotation::from_box(ann_id, id, g.class_id, &g.bbox));
        }
        t.push([
            id.to_string(),
            name,
            scene.annotations.len().to_string(),
            scene.skipped.to_string(),
            scene.relaxed.to_string(),
        ]);
    }
    ds.save(&a.out.join(ANNOTATIONS)).map_err(runtime)?;
    emit(out, &t.to_text())
}

// ---------------------------------------------------------------- detect

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Directory holding annotations.json (image list, and ground truth for
    /// the oracle) and, for external detectors, the PPM images.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Detections in interchange format; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Run summary file; standard error when absent.
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
    /// oracle or external.
    #[arg(long, default_value = "oracle")]
    pub detector: String,
    /// External command template; `{input}` becomes the patch path.
    #[arg(long)]
    pub command: Option<String>,
    /// Seconds each external call may take.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    /// Call the external command one patch at a time.
    #[arg(long)]
    pub serial: bool,
    /// asahi, grid-N or sahi-P.
    #[arg(long, default_value = "asahi")]
    pub strategy: String,
    /// Skip the whole-image pass.
    #[arg(long)]
    pub no_full: bool,
    /// Plan slices without overlap.
    #[arg(long)]
    pub no_overlap: bool,
    /// Oracle: smallest detectable edge at the detector input, px.
    #[arg(long, default_value_t = 4.0)]
    pub min_detectable: f64,
    /// Oracle: coordinate noise sigma, px.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Oracle: probability of missing a detectable object.
    #[arg(long, default_value_t = 0.0)]
    pub miss_rate: f64,
    /// Oracle: expected false positives per call.
    #[arg(long, default_value_t = 0.0)]
    pub fp_rate: f64,
    /// Oracle: fraction of an object that must be inside a window.
    #[arg(long, default_value_t = 1.0)]
    pub min_visible: f64,
    /// Stop at the first image that fails.
    #[arg(long)]
    pub fail_fast: bool,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    #[command(flatten)]
    pub run: RunFlags,
}

fn cmd_detect(a: &DetectArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    if !a.input.is_dir() {
        return Err(usage(format!("input directory {} does not exist", a.input.display())));
    }
    let ann_path = a.input.join(ANNOTATIONS);
    if !ann_path.is_file() {
        return Err(usage(format!("{} not found", ann_path.display())));
    }
    let cfg = a.run.resolve()?;
    let ds = CocoDataset::load(&ann_path).map_err(usage)?;
    let dims = ds.dims().map_err(usage)?;
    let gts = ds.ground_truth().map_err(usage)?;
    let class_count = ds
        .categories
        .iter()
        .map(|c| c.id + 1)
        .chain(gts.values().flatten().map(|g| g.class_id + 1))
        .max()
        .unwrap_or(1);

    let pipeline = PipelineConfig {
        asahi: cfg.asahi().map_err(usage)?,
        strategy: slice_strategy(&a.strategy)?,
        suppressor: cfg.suppressor().map_err(usage)?,
        enable_full_inference: !a.no_full,
        enable_patch_overlap: !a.no_overlap,
    };
    let detector: Box<dyn Detector> = match a.detector.as_str() {
        "oracle" => {
            let params = OracleParams {
                min_detectable_px: a.min_detectable,
                jitter_sigma: a.jitter,
                miss_rate: a.miss_rate,
                fp_rate: a.fp_rate,
                score_model: ScoreModel::default(),
                seed: cfg.seed(),
                class_count,
                min_visible_fraction: a.min_visible,
            };
            params.validate().map_err(usage)?;
            Box::new(OracleDetector::new(params, gts.clone()))
        }
        "external" => {
            let template = a
                .command
                .clone()
                .ok_or_else(|| usage("--detector external needs --command"))?;
            if !(a.timeout > 0.0 && a.timeout.is_finite()) {
                return Err(usage("--timeout must be positive"));
            }
            let mut d = ExternalDetector::new(template, Duration::from_secs_f64(a.timeout));
            if a.serial {
                d.capability = Capability::Serial;
            }
            Box::new(d)
        }
        other => return Err(usage(format!("unknown detector `{other}` (expected oracle or external)"))),
    };
    let opts = RunOptions {
        parallelism: cfg.parallelism().map_err(usage)?,
    };

    let mut records: Vec<Record> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut summary = Table::new([
        "image_id", "slices", "calls", "raw_full", "raw_slices", "dropped", "merged", "final", "processed_px",
        "total_s",
    ]);
    let started = Instant::now();
    let mut processed_total = 0.0;
    let mut done = 0usize;
    let mut images: Vec<&CocoImage> = ds.images.iter().collect();
    images.sort_by_key(|i| i.id);
    for img in images {
        let raster = if detector.needs_raster() {
            match ppm::load_ppm(&a.input.join(&img.file_name)) {
                Ok(r) => Some(r),
                Err(e) => {
                    let msg = format!("image {}: {}: {e}", img.id, img.file_name);
                    if a.fail_fast {
                        return Err(runtime(msg));
                    }
                    failures.push(msg);
                    continue;
                }
            }
        } else {
            None
        };
        let input = ImageInput {
            image_id: img.id,
            dims: dims[&img.id],
            raster: raster.as_ref(),
        };
        match run_pipeline(&input, detector.as_ref(), &pipeline, &opts) {
            Ok(r) => {
                let c = r.counts;
                summary.push([
                    img.id.to_string(),
                    r.slices.to_string(),
                    c.detector_calls.to_string(),
                    c.raw_full.to_string(),
                    c.raw_slices.to_string(),
                    c.dropped_after_remap.to_string(),
                    c.post_merge.to_string(),
                    c.post_suppression.to_string(),
                    fixed(r.processed_pixels, 0),
                    fixed(r.timings.total, 4),
                ]);
                processed_total += r.processed_pixels;
                done += 1;
                records.extend(r.detections.into_iter().map(|detection| Record {
                    image_id: img.id,
                    detection,
                }));
            }
            Err(e) => {
                if a.fail_fast {
                    return Err(runtime(e));
                }
                failures.push(e.to_string());
            }
        }
    }
    let wall = started.elapsed().as_secs_f64();

    let text = interchange::format_records(records.iter().map(|r| (r.image_id, &r.detection)));
    match &a.output {
        Some(p) => write_file(p, &text)?,
        None => emit(out, &text)?,
    }
    let mut s = summary.render(a.format);
    if a.format == Format::Text {
        s.push_str(&format!(
            "images {done}, failed {}, wall {} s, {} img/s, processed {} px\n",
            failures.len(),
            fixed(wall, 3),
            fixed(if wall > 0.0 { done as f64 / wall } else { 0.0 }, 2),
            fixed(processed_total, 0)
        ));
        for f in &failures {
            s.push_str(&format!("FAILED {f}\n"));
        }
    }
    match &a.summary {
        Some(p) => write_file(p, &s)?,
        None => emit(err, &s)?,
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("{} image(s) failed", failures.len())))
    }
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Interchange file.
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// COCO-format ground truth.
    #[arg(long, value_name = "FILE")]
    pub ground_truth: PathBuf,
    /// Keep only the top-scoring N detections per image.
    #[arg(long)]
    pub max_detections: Option<usize>,
    /// Unmatched detections in size buckets: `area` counts them only in the
    /// bucket of their own area, `every` in all buckets.
    #[arg(long, default_value = "area")]
    pub unmatched: String,
    /// Wall seconds of the run that produced the detections, for img/s.
    #[arg(long)]
    pub wall_seconds: Option<f64>,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    /// Also write the report as comma-separated values to this file.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

pub fn eval_table(r: &EvalReport) -> Table {
    let mut t = Table::new(["metric", "value"]);
    for (k, v) in [
        ("map", r.map),
        ("map50", r.map50),
        ("map75", r.map75),
        ("map50_small", r.map50_small),
        ("map50_medium", r.map50_medium),
        ("map50_large", r.map50_large),
        ("images_per_second", r.images_per_second),
    ] {
        t.push([k.to_string(), fixed(v, 6)]);
    }
    for (name, n) in ["gt_small", "gt_medium", "gt_large"].iter().zip(r.gt_per_bucket) {
        t.push([name.to_string(), n.to_string()]);
    }
    for c in &r.per_class {
        t.push([format!("ap50_class{}", c.class_id), fixed(c.ap50, 6)]);
    }
    t
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult {
    let unmatched = match a.unmatched.as_str() {
        "area" => UnmatchedPolicy::AreaFiltered,
        "every" => UnmatchedPolicy::EveryBucket,
        other => return Err(usage(format!("unknown --unmatched `{other}` (expected area or every)"))),
    };
    let text = fs::read_to_string(&a.detections).map_err(|e| usage(format!("{}: {e}", a.detections.display())))?;
    let records = interchange::parse(&text).map_err(|e| runtime(format!("{}: {e}", a.detections.display())))?;
    let ds = CocoDataset::load(&a.ground_truth).map_err(usage)?;
    let gts = ds.ground_truth().map_err(runtime)?;
    let mut dets: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for r in records {
        dets.entry(r.image_id).or_default().push(r.detection);
    }
    let throughput = a.wall_seconds.map(|wall_seconds| Throughput {
        images: gts.len(),
        wall_seconds,
        processed_pixels: 0.0,
    });
    let params = EvalParams {
        max_detections: a.max_detections,
        unmatched,
    };
    let report = evaluate(&gts, &dets, &params, throughput).map_err(runtime)?;
    let t = eval_table(&report);
    if let Some(p) = &a.csv {
        write_file(p, &t.to_csv())?;
    }
    emit(out, &t.render(a.format))
}

// ---------------------------------------------------------------- saf-build

#[derive(Debug, Args)]
pub struct SafArgs {
    /// COCO-format annotations of the source images.
    #[arg(long, value_name = "FILE", required_unless_present = "verify_only")]
    pub annotations: Option<PathBuf>,
    /// Directory the annotation file names are relative to.
    #[arg(long, value_name = "DIR", required_unless_present = "verify_only")]
    pub images: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// asahi or sahi-P.
    #[arg(long, default_value = "asahi")]
    pub slicer: String,
    /// Smallest kept fraction of a clipped box.
    #[arg(long, default_value_t = asahi_core::saf::DEFAULT_MIN_VISIBILITY)]
    pub min_visibility: f64,
    /// Skip building; only re-check an existing output directory.
    #[arg(long)]
    pub verify_only: bool,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    #[command(flatten)]
    pub run: RunFlags,
}

fn cmd_saf(a: &SafArgs, out: &mut dyn Write) -> CliResult {
    if !(a.min_visibility > 0.0 && a.min_visibility <= 1.0) {
        return Err(usage("--min-visibility must lie in (0, 1]"));
    }
    if !a.verify_only {
        let cfg = a.run.resolve()?;
        let asahi = cfg.asahi().map_err(usage)?;
        let slicer = slicer_for(&a.slicer, asahi)?;
        let ann = a.annotations.as_ref().expect("required by clap");
        let images = a.images.as_ref().expect("required by clap");
        if !images.is_dir() {
            return Err(usage(format!("image directory {} does not exist", images.display())));
        }
        let ds = CocoDataset::load(ann).map_err(usage)?;
        let opts = SafOptions {
            slicer,
            min_visibility: a.min_visibility,
            target: asahi.resize_target,
        };
        let summary = build_saf(&ds, dir_loader(images.clone()), &a.out, &opts).map_err(runtime)?;
        emit(
            out,
            &format!(
                "images {}, records {}, annotations {}\n",
                summary.images,
                summary.records.len(),
                summary.annotations
            ),
        )?;
    }
    let violations = verify_saf(&a.out, a.min_visibility).map_err(runtime)?;
    let mut t = Table::new(["kind", "record_id", "file", "annotation_id"]);
    for v in &violations {
        t.push([
            v.kind.to_string(),
            v.record_id.to_string(),
            v.file_name.clone(),
            v.annotation_id.map_or_else(|| "-".into(), |i| i.to_string()),
        ]);
    }
    let mut s = t.render(a.format);
    if a.format == Format::Text {
        s.push_str(&format!("violations {}\n", violations.len()));
    }
    emit(out, &s)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("{} violation(s)", violations.len())))
    }
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated WIDTHxHEIGHT list; empty for an empty report.
    #[arg(long, default_value_t = default_resolutions())]
    pub resolutions: String,
    /// Comma-separated strategies: asahi, grid-N, sahi-P.
    #[arg(long, default_value = "asahi,grid-4,grid-6,grid-12,grid-15,sahi-512")]
    pub strategies: String,
    /// Synthetic scenes per resolution.
    #[arg(long, default_value_t = 3)]
    pub scenes: usize,
    /// Objects per scene.
    #[arg(long, default_value_t = 100)]
    pub objects: usize,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    /// Also write the table as comma-separated values to this file.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let cfg = a.run.resolve()?;
    let strategies = a
        .strategies
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<BenchStrategy>().map_err(usage))
        .collect::<Result<Vec<_>, _>>()?;
    let d = BenchOptions::default();
    let opts = BenchOptions {
        resolutions: parse_resolutions(&a.resolutions)?,
        strategies,
        scenes: a.scenes,
        objects: a.objects,
        seed: cfg.seed(),
        asahi: cfg.asahi().map_err(usage)?,
        suppressor: cfg.suppressor().map_err(usage)?,
        parallelism: cfg.parallelism().map_err(usage)?,
        ..d
    };
    let rows = run_bench(&opts).map_err(runtime)?;
    let t = bench_table(&rows);
    if let Some(p) = &a.csv {
        write_file(p, &t.to_csv())?;
    }
    emit(out, &t.render(a.format))
}

// ---------------------------------------------------------------- entry

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match &cli.command {
        Command::Plan(a) => cmd_plan(a, out),
        Command::Slice(a) => cmd_slice(a, out),
        Command::Redundancy(a) => cmd_redundancy(a, out),
        Command::Scenegen(a) => cmd_scenegen(a, out),
        Command::Detect(a) => cmd_detect(a, out, err),
        Command::Eval(a) => cmd_eval(a, out),
        Command::SafBuild(a) => cmd_saf(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

/// Parses `args` and runs the command; returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Runtime(m)) = &e;
            let _ = writeln!(err, "error: {m}");
            e.code()
        }
    }
}
