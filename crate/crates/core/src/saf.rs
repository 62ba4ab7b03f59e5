//! Records for a fine-tuning set built from whole images plus their slices.
//!
//! Each image yields one record for the whole image resized to the target
//! size and one per slice window. A ground-truth box enters a window record
//! when the part of it inside the window keeps at least `min_visibility` of
//! its area; the kept part is mapped to patch pixels.

use alloc::vec::Vec;
use core::fmt;

use crate::geom::{Annotation, BBox, ImageDims};
use crate::slicing::{patch_geometry, SliceWindow, Slicer, SlicingError};

pub const DEFAULT_MIN_VISIBILITY: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SafError {
    #[error("min_visibility must lie in (0, 1], got {0}")]
    MinVisibility(f64),
    #[error(transparent)]
    Slicing(#[from] SlicingError),
}

/// What a record's raster shows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafSource {
    Full,
    Window(SliceWindow),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafAnnotation {
    pub class_id: u32,
    /// Patch frame.
    pub bbox: BBox,
    /// Kept fraction of the original box area, in `(0, 1]`.
    pub visibility: f64,
    /// Index of the source annotation within its image.
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafRecord {
    pub image_id: u64,
    /// 0 for the full image, then 1.. in plan order.
    pub patch_id: u32,
    pub source: SafSource,
    pub width: u32,
    pub height: u32,
    pub scale_x: f64,
    pub scale_y: f64,
    pub annotations: Vec<SafAnnotation>,
}

impl SafRecord {
    /// Source-frame rectangle the record covers.
    pub fn source_rect(&self, dims: ImageDims) -> BBox {
        match self.source {
            SafSource::Full => dims.frame(),
            SafSource::Window(w) => w.rect,
        }
    }

    /// Inverse of the patch mapping for one annotation.
    pub fn to_source(&self, dims: ImageDims, b: &BBox) -> BBox {
        let r = self.source_rect(dims);
        BBox::new(
            r.x1() + b.x1() / self.scale_x,
            r.y1() + b.y1() / self.scale_y,
            r.x1() + b.x2() / self.scale_x,
            r.y1() + b.y2() / self.scale_y,
        )
        .expect("positive scale keeps boxes valid")
    }
}

fn project(
    gts: &[Annotation],
    rect: &BBox,
    scale_x: f64,
    scale_y: f64,
    width: u32,
    height: u32,
    min_visibility: f64,
) -> Vec<SafAnnotation> {
    let (fw, fh) = (width as f64, height as f64);
    let mut out = Vec::new();
    for (i, g) in gts.iter().enumerate() {
        let Some(c) = g.bbox.intersect(rect) else {
            continue;
        };
        let visibility = (c.area() / g.bbox.area()).min(1.0);
        if visibility < min_visibility {
            continue;
        }
        let b = BBox::new(
            ((c.x1() - rect.x1()) * scale_x).clamp(0.0, fw),
            ((c.y1() - rect.y1()) * scale_y).clamp(0.0, fh),
            ((c.x2() - rect.x1()) * scale_x).clamp(0.0, fw),
            ((c.y2() - rect.y1()) * scale_y).clamp(0.0, fh),
        );
        if let Ok(bbox) = b {
            out.push(SafAnnotation {
                class_id: g.class_id,
                bbox,
                visibility,
                source_index: i,
            });
        }
    }
    out
}

/// Records for one image, full image first.
pub fn build_records(
    image_id: u64,
    dims: ImageDims,
    gts: &[Annotation],
    slicer: &Slicer,
    min_visibility: f64,
    target: u32,
) -> Result<Vec<SafRecord>, SafError> {
    if !(min_visibility > 0.0 && min_visibility <= 1.0) {
        return Err(SafError::MinVisibility(min_visibility));
    }
    if target == 0 {
        return Err(SlicingError::ZeroTarget.into());
    }
    let plan = slicer.plan(dims)?;
    let mut records = Vec::with_capacity(plan.len() + 1);

    let g = patch_geometry(dims.width, dims.height, target);
    let frame = dims.frame();
    records.push(SafRecord {
        image_id,
        patch_id: 0,
        source: SafSource::Full,
        width: g.width,
        height: g.height,
        scale_x: g.scale_x,
        scale_y: g.scale_y,
        annotations: project(gts, &frame, g.scale_x, g.scale_y, g.width, g.height, min_visibility),
    });

    for (k, w) in plan.windows.iter().enumerate() {
        let g = patch_geometry(w.pixel_width(), w.pixel_height(), target);
        records.push(SafRecord {
            image_id,
            patch_id: k as u32 + 1,
            source: SafSource::Window(*w),
            width: g.width,
            height: g.height,
            scale_x: g.scale_x,
            scale_y: g.scale_y,
            annotations: project(gts, &w.rect, g.scale_x, g.scale_y, g.width, g.height, min_visibility),
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    BoxOutOfFrame,
    DegenerateBox,
    Visibility,
    MissingRaster,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::BoxOutOfFrame => "BOX_OUT_OF_FRAME",
            ViolationKind::DegenerateBox => "DEGENERATE_BOX",
            ViolationKind::Visibility => "VISIBILITY",
            ViolationKind::MissingRaster => "MISSING_RASTER",
        })
    }
}

/// Boxes read back as `x y w h` can overshoot a flush edge by rounding.
const EDGE_SLACK: f64 = 1e-9;

/// Annotation-level checks for one record, as raw corner values so corrupted
/// boxes read back from disk can be inspected. Returns
/// `(annotation index, kind)` pairs.
pub fn check_annotations(
    width: u32,
    height: u32,
    annotations: &[([f64; 4], f64)],
    min_visibility: f64,
) -> Vec<(usize, ViolationKind)> {
    let (fw, fh) = (width as f64, height as f64);
    let mut out = Vec::new();
    for (i, ([x1, y1, x2, y2], vis)) in annotations.iter().copied().enumerate() {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x2 <= x1 || y2 <= y1 {
            out.push((i, ViolationKind::DegenerateBox));
        } else if x1 < -EDGE_SLACK || y1 < -EDGE_SLACK || x2 > fw + EDGE_SLACK || y2 > fh + EDGE_SLACK {
            out.push((i, ViolationKind::BoxOutOfFrame));
        }
        if !(vis > 0.0 && vis <= 1.0 && vis >= min_visibility) {
            out.push((i, ViolationKind::Visibility));
        }
    }
    out
}
