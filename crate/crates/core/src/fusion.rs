//! Moving detections between patch and image frames and merging the
//! full-inference and sliced streams.

use alloc::vec::Vec;

use crate::geom::{BBox, ImageDims};
use crate::nms::{self, ClusterOutcome, Detection, Origin, SuppressionConfig, Suppressor};
use crate::slicing::{AsahiConfig, SliceWindow, Slicer, SlicingError};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("patch scale factors must be positive, got ({0}, {1})")]
    InvalidScale(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Remapped {
    pub detections: Vec<Detection>,
    /// Detections that had no area left after clipping.
    pub dropped: usize,
}

fn remap_into(
    dets: &[Detection],
    offset: (f64, f64),
    scale_x: f64,
    scale_y: f64,
    clip: &BBox,
    origin: Origin,
) -> Result<Remapped, FusionError> {
    if !(scale_x > 0.0 && scale_y > 0.0) {
        return Err(FusionError::InvalidScale(scale_x, scale_y));
    }
    let mut out = Remapped::default();
    for d in dets {
        let [x1, y1, x2, y2] = d.bbox.corners();
        let mapped = BBox::new(
            x1 / scale_x + offset.0,
            y1 / scale_y + offset.1,
            x2 / scale_x + offset.0,
            y2 / scale_y + offset.1,
        )
        .ok()
        .and_then(|b| b.intersect(clip));
        match mapped {
            Some(bbox) => out.detections.push(Detection { bbox, origin, ..*d }),
            None => out.dropped += 1,
        }
    }
    Ok(out)
}

/// Patch-frame detections from `window` into the image frame: divide by the
/// patch scale, add the window origin, clip to the window.
pub fn remap(
    dets: &[Detection],
    window: &SliceWindow,
    scale_x: f64,
    scale_y: f64,
) -> Result<Remapped, FusionError> {
    remap_into(
        dets,
        (window.rect.x1(), window.rect.y1()),
        scale_x,
        scale_y,
        &window.rect,
        Origin::Slice {
            row: window.row,
            col: window.col,
        },
    )
}

/// Detections on the resized whole image back to source pixels.
pub fn remap_full(
    dets: &[Detection],
    dims: ImageDims,
    scale_x: f64,
    scale_y: f64,
) -> Result<Remapped, FusionError> {
    remap_into(
        dets,
        (0.0, 0.0),
        scale_x,
        scale_y,
        &dims.frame(),
        Origin::FullInference,
    )
}

/// Descending score; ties by class, then corners, so the result does not
/// depend on the order the detector emitted them in.
fn sorted_by_score(mut dets: Vec<Detection>) -> Vec<Detection> {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.class_id.cmp(&b.class_id))
            .then_with(|| {
                let (p, q) = (a.bbox.corners(), b.bbox.corners());
                p.iter()
                    .zip(&q)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
    });
    dets
}

/// Concatenates the two streams in a fixed order: full inference first, then
/// slices in plan order, each group by descending score. No rescoring.
pub fn merge_streams(full: Vec<Detection>, slices: Vec<Vec<Detection>>) -> Vec<Detection> {
    let mut out = sorted_by_score(full);
    for s in slices {
        out.extend(sorted_by_score(s));
    }
    out
}

/// Cluster suppression restricted to pairs from different, touching sources
/// (adjacent or diagonal slices, or full inference against anything).
/// Detections from the same slice never suppress each other.
pub fn dedupe_cross_slice(dets: &[Detection], cfg: &SuppressionConfig) -> ClusterOutcome {
    nms::cluster_with(dets, cfg, |a, b| a.origin != b.origin && a.origin.is_adjacent(&b.origin))
}

/// Which slicing strategy the pipeline runs. Overlap and limit come from
/// [`PipelineConfig::asahi`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SliceStrategy {
    #[default]
    Asahi,
    Fixed {
        patch: u32,
    },
    Grid {
        major: u32,
        minor: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub asahi: AsahiConfig,
    pub strategy: SliceStrategy,
    pub suppressor: Suppressor,
    pub enable_full_inference: bool,
    /// When off, slices are planned with zero overlap.
    pub enable_patch_overlap: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            asahi: AsahiConfig::default(),
            strategy: SliceStrategy::Asahi,
            suppressor: Suppressor::Cluster(SuppressionConfig::CDN),
            enable_full_inference: true,
            enable_patch_overlap: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SlicingError> {
        self.asahi.validate()
    }

    pub fn slicer(&self) -> Slicer {
        let overlap = if self.enable_patch_overlap {
            self.asahi.overlap_ratio
        } else {
            0.0
        };
        match self.strategy {
            SliceStrategy::Asahi => Slicer::Asahi(AsahiConfig {
                overlap_ratio: overlap,
                ..self.asahi
            }),
            SliceStrategy::Fixed { patch } => Slicer::Fixed { patch, overlap },
            SliceStrategy::Grid { major, minor } => Slicer::Grid {
                major,
                minor,
                overlap,
            },
        }
    }
}

/// Per-stage detection counts of one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageCounts {
    pub detector_calls: usize,
    pub raw_full: usize,
    pub raw_slices: usize,
    pub dropped_after_remap: usize,
    pub post_merge: usize,
    pub post_suppression: usize,
}
