//! The two-stream pipeline: whole image plus slices, remapped, merged and
//! suppressed.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use asahi_core::fusion::{self, PipelineConfig, StageCounts};
use asahi_core::nms::SuppressionError;
use asahi_core::redundancy::analyze_plan;
use asahi_core::slicing::{extract_patch, patch_geometry, SlicingError};
use asahi_core::{Detection, ImageDims, Raster, SlicePlan, SliceWindow};

use crate::detector::{Capability, Detector, DetectorError, PatchRequest};

/// Which detector call a failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchId {
    Full,
    Slice { index: usize, row: u32, col: u32 },
}

impl std::fmt::Display for PatchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PatchId::Full => f.write_str("full image"),
            PatchId::Slice { index, row, col } => write!(f, "slice {index} (row {row}, col {col})"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] SlicingError),
    #[error(transparent)]
    Suppression(#[from] SuppressionError),
    #[error("image {image_id}, {patch}: {source}")]
    Detector {
        image_id: u64,
        patch: PatchId,
        source: DetectorError,
    },
    #[error("image {image_id}: raster is {got}, annotations say {want}")]
    RasterSize {
        image_id: u64,
        got: ImageDims,
        want: ImageDims,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub full_inference: f64,
    pub slices: f64,
    pub merge: f64,
    pub suppression: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub image_id: u64,
    pub detections: Vec<Detection>,
    pub counts: StageCounts,
    /// Seconds; wall clock, so excluded from [`PipelineResult::same_output`].
    pub timings: StageTimings,
    /// Image area for the full-inference pass plus the slice grid's
    /// processed area (image area plus redundant area).
    pub processed_pixels: f64,
    /// Sum of the integer window areas.
    pub window_pixels: f64,
    pub slices: usize,
}

impl PipelineResult {
    /// Equality on everything except timings.
    pub fn same_output(&self, other: &PipelineResult) -> bool {
        self.image_id == other.image_id
            && self.detections == other.detections
            && self.counts == other.counts
            && self.processed_pixels.to_bits() == other.processed_pixels.to_bits()
            && self.window_pixels.to_bits() == other.window_pixels.to_bits()
            && self.slices == other.slices
    }
}

/// Input image: its size and, for adapters that read pixels, the raster.
#[derive(Debug, Clone, Copy)]
pub struct ImageInput<'a> {
    pub image_id: u64,
    pub dims: ImageDims,
    pub raster: Option<&'a Raster>,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Upper bound on concurrent detector calls.
    pub parallelism: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

struct Job {
    patch: PatchId,
    window: SliceWindow,
}

fn run_job(
    job: &Job,
    image: &ImageInput<'_>,
    detector: &dyn Detector,
    target: u32,
) -> Result<(Vec<Detection>, usize), PipelineError> {
    let wrap = |source| PipelineError::Detector {
        image_id: image.image_id,
        patch: job.patch,
        source,
    };
    let w = &job.window;
    let (patch, scale_x, scale_y, width, height) = if detector.needs_raster() {
        let raster = image.raster.ok_or_else(|| wrap(DetectorError::NoRaster))?;
        let p = extract_patch(raster, w, target)?;
        let (pw, ph) = (p.raster.width(), p.raster.height());
        (Some(p.raster), p.scale_x, p.scale_y, pw, ph)
    } else {
        let g = patch_geometry(w.pixel_width(), w.pixel_height(), target);
        (None, g.scale_x, g.scale_y, g.width, g.height)
    };
    let req = PatchRequest {
        image_id: image.image_id,
        rect: w.rect,
        scale_x,
        scale_y,
        width,
        height,
        raster: patch.as_ref(),
    };
    let local = detector.detect(&req).map_err(wrap)?;
    let remapped = match job.patch {
        PatchId::Full => fusion::remap_full(&local, image.dims, scale_x, scale_y),
        PatchId::Slice { .. } => fusion::remap(&local, w, scale_x, scale_y),
    }
    .expect("patch scales are positive");
    Ok((remapped.detections, remapped.dropped))
}

/// Plans the slices for `image` under `cfg`.
pub fn plan_for(dims: ImageDims, cfg: &PipelineConfig) -> Result<SlicePlan, SlicingError> {
    cfg.slicer().plan(dims)
}

/// Runs the full pipeline on one image. Detector calls run on up to
/// `opts.parallelism` threads (one when the adapter is serial); results are
/// put back in plan order before merging, so the output does not depend on
/// scheduling.
pub fn run_pipeline(
    image: &ImageInput<'_>,
    detector: &dyn Detector,
    cfg: &PipelineConfig,
    opts: &RunOptions,
) -> Result<PipelineResult, PipelineError> {
    cfg.validate()?;
    if let Some(r) = image.raster {
        let got = ImageDims {
            width: r.width(),
            height: r.height(),
        };
        if got != image.dims {
            return Err(PipelineError::RasterSize {
                image_id: image.image_id,
                got,
                want: image.dims,
            });
        }
    }
    let t_start = Instant::now();
    let plan = plan_for(image.dims, cfg)?;
    let target = cfg.asahi.resize_target;

    let mut jobs = Vec::with_capacity(plan.len() + 1);
    if cfg.enable_full_inference {
        let frame = image.dims.frame();
        jobs.push(Job {
            patch: PatchId::Full,
            window: SliceWindow {
                rect: frame,
                designed: frame,
                row: 0,
                col: 0,
            },
        });
    }
    for (index, w) in plan.windows.iter().enumerate() {
        jobs.push(Job {
            patch: PatchId::Slice {
                index,
                row: w.row,
                col: w.col,
            },
            window: *w,
        });
    }

    let workers = match detector.capability() {
        Capability::Serial => 1,
        Capability::Concurrent => opts.parallelism.max(1).min(jobs.len().max(1)),
    };
    type Slot = Mutex<Option<(Result<(Vec<Detection>, usize), PipelineError>, f64)>>;
    let results: Vec<Slot> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() || failed.load(Ordering::SeqCst) {
                    break;
                }
                let t = Instant::now();
                let r = run_job(&jobs[i], image, detector, target);
                if r.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *results[i].lock().expect("no poisoned slots") = Some((r, t.elapsed().as_secs_f64()));
            });
        }
    });

    let mut counts = StageCounts::default();
    let mut timings = StageTimings::default();
    let mut full = Vec::new();
    let mut slices = Vec::with_capacity(plan.len());
    for (job, slot) in jobs.iter().zip(results) {
        // after a failure some later jobs never ran; the first failure in
        // plan order is the one reported
        let Some((r, secs)) = slot.into_inner().expect("no poisoned slots") else {
            continue;
        };
        let (dets, dropped) = r?;
        counts.detector_calls += 1;
        counts.dropped_after_remap += dropped;
        match job.patch {
            PatchId::Full => {
                counts.raw_full = dets.len() + dropped;
                timings.full_inference += secs;
                full = dets;
            }
            PatchId::Slice { .. } => {
                counts.raw_slices += dets.len() + dropped;
                timings.slices += secs;
                slices.push(dets);
            }
        }
    }

    let t = Instant::now();
    let merged = fusion::merge_streams(full, slices);
    counts.post_merge = merged.len();
    timings.merge = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let detections = cfg.suppressor.apply(&merged)?;
    counts.post_suppression = detections.len();
    timings.suppression = t.elapsed().as_secs_f64();
    timings.total = t_start.elapsed().as_secs_f64();

    let slice_pixels = analyze_plan(&plan).total;
    let full_pixels = if cfg.enable_full_inference {
        image.dims.area()
    } else {
        0.0
    };
    Ok(PipelineResult {
        image_id: image.image_id,
        detections,
        counts,
        timings,
        processed_pixels: full_pixels + slice_pixels,
        window_pixels: plan.window_pixels(),
        slices: plan.len(),
    })
}
