//! Slice planning and patch extraction.
//!
//! The adaptive planner fixes the number of slices (6 or 12, picked by a
//! resolution threshold) and derives the window size from the image, so the
//! designed overlap between neighbours is exact. The fixed-size planner is the
//! conventional baseline with square windows of a given patch size. A third
//! planner fixes an arbitrary slice count and sizes windows the same way as the
//! adaptive planner; the benchmark uses it for 4/6/12/15-slice rows.
//!
//! Windows are laid out with stride `edge * (1 - overlap)` and truncated to
//! integer pixel coordinates. The adaptive and fixed-count planners size
//! windows so the designed grid overshoots the image by a few pixels; their
//! last window along each axis is cut at the border, which keeps every
//! neighbour overlap at the designed value. Fixed-size windows are instead
//! shifted inward so every patch keeps the requested size.

use alloc::vec::Vec;
use core::fmt;

use crate::geom::{BBox, ImageDims};
use crate::math;
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SlicingError {
    #[error("overlap ratio must lie in [0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error("limiting dimension must be at least 1")]
    ZeroLimit,
    #[error("resize target must be at least 1")]
    ZeroTarget,
    #[error("patch size must be at least 1")]
    ZeroPatch,
    #[error("slice grid must have at least one row and one column")]
    EmptyGrid,
    #[error("window edge {edge} px is smaller than one pixel")]
    WindowTooSmall { edge: f64 },
    #[error("window {window} lies outside the {width}x{height} image")]
    WindowOutOfBounds { window: BBox, width: u32, height: u32 },
}

fn check_overlap(mu: f64) -> Result<(), SlicingError> {
    if (0.0..1.0).contains(&mu) {
        Ok(())
    } else {
        Err(SlicingError::InvalidOverlap(mu))
    }
}

/// Parameters of the adaptive planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsahiConfig {
    /// Designed fraction of each window edge shared with its neighbour.
    pub overlap_ratio: f64,
    /// Bound on window size; sets the 6/12 threshold.
    pub limiting_dimension: u32,
    /// Longer side, in pixels, every patch is resized to before detection.
    pub resize_target: u32,
}

impl Default for AsahiConfig {
    fn default() -> Self {
        Self {
            overlap_ratio: 0.15,
            limiting_dimension: 512,
            resize_target: 512,
        }
    }
}

impl AsahiConfig {
    pub fn new(
        overlap_ratio: f64,
        limiting_dimension: u32,
        resize_target: u32,
    ) -> Result<Self, SlicingError> {
        let cfg = Self {
            overlap_ratio,
            limiting_dimension,
            resize_target,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SlicingError> {
        check_overlap(self.overlap_ratio)?;
        if self.limiting_dimension == 0 {
            return Err(SlicingError::ZeroLimit);
        }
        if self.resize_target == 0 {
            return Err(SlicingError::ZeroTarget);
        }
        Ok(())
    }
}

/// Real-valued resolution threshold `r * (4 - 3 * mu) + 1`.
pub fn asahi_threshold(cfg: &AsahiConfig) -> f64 {
    cfg.limiting_dimension as f64 * (4.0 - 3.0 * cfg.overlap_ratio) + 1.0
}

/// Threshold truncated to whole pixels; images whose longer edge is at most
/// this value get 6 slices, larger ones 12.
pub fn asahi_cutoff(cfg: &AsahiConfig) -> u32 {
    math::trunc(asahi_threshold(cfg)) as u32
}

/// One slice window. `rect` has integer coordinates inside the image;
/// `designed` is the real-valued placement before truncation and boundary
/// shifting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceWindow {
    pub rect: BBox,
    pub designed: BBox,
    pub row: u32,
    pub col: u32,
}

impl SliceWindow {
    /// Integer pixel bounds `(x1, y1, x2, y2)`.
    pub fn pixel_bounds(&self) -> (u32, u32, u32, u32) {
        (
            self.rect.x1() as u32,
            self.rect.y1() as u32,
            self.rect.x2() as u32,
            self.rect.y2() as u32,
        )
    }

    pub fn pixel_width(&self) -> u32 {
        let (x1, _, x2, _) = self.pixel_bounds();
        x2 - x1
    }

    pub fn pixel_height(&self) -> u32 {
        let (_, y1, _, y2) = self.pixel_bounds();
        y2 - y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Asahi,
    Fixed { patch: u32 },
    Grid,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Asahi => f.write_str("asahi"),
            Strategy::Fixed { patch } => write!(f, "fixed-{patch}"),
            Strategy::Grid => f.write_str("grid"),
        }
    }
}

/// Scalars the adaptive planner derives on the way to its windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsahiScalars {
    pub threshold: f64,
    pub slice_size: f64,
    pub long_edge: f64,
    pub short_edge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicePlan {
    pub source_dims: ImageDims,
    pub rows: u32,
    pub cols: u32,
    /// Row-major.
    pub windows: Vec<SliceWindow>,
    pub overlap_ratio: f64,
    /// Designed horizontal window edge.
    pub edge_x: f64,
    /// Designed vertical window edge.
    pub edge_y: f64,
    pub strategy: Strategy,
    pub asahi: Option<AsahiScalars>,
}

impl SlicePlan {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Sum of window areas in source pixels; overlaps count once per window.
    pub fn window_pixels(&self) -> f64 {
        self.windows.iter().map(|w| w.rect.area()).sum()
    }

    /// One window per line: `row col x1 y1 x2 y2`.
    pub fn write_windows<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        for w in &self.windows {
            let (x1, y1, x2, y2) = w.pixel_bounds();
            writeln!(out, "{} {} {} {} {} {}", w.row, w.col, x1, y1, x2, y2)?;
        }
        Ok(())
    }
}

struct AxisSpan {
    start: u32,
    end: u32,
    designed_start: f64,
    designed_end: f64,
}

/// How the window that would run past the image border is placed.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Boundary {
    /// Keep the window size, move it inward to end on the border.
    Shift,
    /// Keep its start, cut it at the border.
    Clip,
}

fn layout_axis(extent: u32, count: u32, edge: f64, overlap: f64, boundary: Boundary) -> Vec<AxisSpan> {
    let stride = edge * (1.0 - overlap);
    let width = (math::trunc(edge) as u32).clamp(1, extent);
    (0..count)
        .map(|j| {
            let designed_start = j as f64 * stride;
            let designed_end = designed_start + edge;
            let near = (math::trunc(designed_start) as u32).min(extent - 1);
            // fixed-size windows keep their width exactly; rounding the far
            // edge separately can add a pixel
            let far = match boundary {
                Boundary::Shift => near as f64 + width as f64,
                Boundary::Clip => math::trunc(designed_end),
            };
            let (start, end) = if j + 1 == count || far > extent as f64 {
                match boundary {
                    Boundary::Shift => (extent - width, extent),
                    Boundary::Clip => (near, extent),
                }
            } else {
                (near, far as u32)
            };
            AxisSpan {
                start,
                end,
                designed_start,
                designed_end,
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn build_plan(
    dims: ImageDims,
    rows: u32,
    cols: u32,
    edge_x: f64,
    edge_y: f64,
    overlap: f64,
    strategy: Strategy,
    asahi: Option<AsahiScalars>,
) -> Result<SlicePlan, SlicingError> {
    if rows == 0 || cols == 0 {
        return Err(SlicingError::EmptyGrid);
    }
    for edge in [edge_x, edge_y] {
        if !(edge >= 1.0) {
            return Err(SlicingError::WindowTooSmall { edge });
        }
    }
    let boundary = match strategy {
        Strategy::Fixed { .. } => Boundary::Shift,
        Strategy::Asahi | Strategy::Grid => Boundary::Clip,
    };
    let xs = layout_axis(dims.width, cols, edge_x, overlap, boundary);
    let ys = layout_axis(dims.height, rows, edge_y, overlap, boundary);
    let mut windows = Vec::with_capacity((rows * cols) as usize);
    for (row, y) in ys.iter().enumerate() {
        for (col, x) in xs.iter().enumerate() {
            let rect = BBox::new(x.start as f64, y.start as f64, x.end as f64, y.end as f64)
                .expect("axis spans are at least one pixel");
            let designed = BBox::new(x.designed_start, y.designed_start, x.designed_end, y.designed_end)
                .expect("designed edges are at least one pixel");
            windows.push(SliceWindow {
                rect,
                designed,
                row: row as u32,
                col: col as u32,
            });
        }
    }
    Ok(SlicePlan {
        source_dims: dims,
        rows,
        cols,
        windows,
        overlap_ratio: overlap,
        edge_x,
        edge_y,
        strategy,
        asahi,
    })
}

#[inline]
fn span_divisor(count: u32, mu: f64) -> f64 {
    count as f64 - (count as f64 - 1.0) * mu
}

/// Adaptive 6- or 12-slice plan.
///
/// The major slice count (3 or 4) runs along the longer image edge and the
/// minor count (2 or 3) along the shorter one, so portrait images get a
/// transposed grid. When the computed window would exceed the image in either
/// axis the plan degenerates to a single window over the whole image.
pub fn asahi_plan(dims: ImageDims, cfg: &AsahiConfig) -> Result<SlicePlan, SlicingError> {
    cfg.validate()?;
    let mu = cfg.overlap_ratio;
    let threshold = asahi_threshold(cfg);
    let (major, minor) = if dims.max_edge() as f64 > math::trunc(threshold) {
        (4, 3)
    } else {
        (3, 2)
    };
    let w = dims.width as f64;
    let h = dims.height as f64;
    let k_major = span_divisor(major, mu);
    let k_minor = span_divisor(minor, mu);
    let slice_size = (w / k_major + 1.0).max(h / k_minor + 1.0);
    let long_edge = w.max(h) / k_major + 1.0;
    let short_edge = w.min(h) / k_minor + 1.0;
    let scalars = AsahiScalars {
        threshold,
        slice_size,
        long_edge,
        short_edge,
    };

    let (edge_x, edge_y, cols, rows) = if dims.height > dims.width {
        (short_edge, long_edge, minor, major)
    } else {
        (long_edge, short_edge, major, minor)
    };

    if edge_x > w || edge_y > h {
        return build_plan(dims, 1, 1, w, h, mu, Strategy::Asahi, Some(scalars));
    }
    build_plan(dims, rows, cols, edge_x, edge_y, mu, Strategy::Asahi, Some(scalars))
}

/// Baseline plan of `patch x patch` windows.
pub fn fixed_plan(dims: ImageDims, patch: u32, overlap: f64) -> Result<SlicePlan, SlicingError> {
    if patch == 0 {
        return Err(SlicingError::ZeroPatch);
    }
    check_overlap(overlap)?;
    let p = patch as f64;
    let count = |extent: u32| -> u32 {
        let n = math::ceil((extent as f64 - p * overlap) / (p * (1.0 - overlap)));
        if n < 1.0 {
            1
        } else {
            n as u32
        }
    };
    let cols = count(dims.width);
    let rows = count(dims.height);
    build_plan(dims, rows, cols, p, p, overlap, Strategy::Fixed { patch }, None)
}

/// Plan with a fixed slice count: `major` windows along the longer edge and
/// `minor` along the shorter, each sized so the designed overlaps span the
/// image exactly.
pub fn grid_plan(
    dims: ImageDims,
    major: u32,
    minor: u32,
    overlap: f64,
) -> Result<SlicePlan, SlicingError> {
    check_overlap(overlap)?;
    if major == 0 || minor == 0 {
        return Err(SlicingError::EmptyGrid);
    }
    let (cols, rows) = if dims.height > dims.width {
        (minor, major)
    } else {
        (major, minor)
    };
    let edge_x = dims.width as f64 / span_divisor(cols, overlap) + 1.0;
    let edge_y = dims.height as f64 / span_divisor(rows, overlap) + 1.0;
    let edge_x = edge_x.min(dims.width as f64);
    let edge_y = edge_y.min(dims.height as f64);
    build_plan(dims, rows, cols, edge_x, edge_y, overlap, Strategy::Grid, None)
}

/// A slicing strategy that can be applied to any image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slicer {
    Asahi(AsahiConfig),
    Fixed { patch: u32, overlap: f64 },
    Grid { major: u32, minor: u32, overlap: f64 },
}

impl Slicer {
    pub fn plan(&self, dims: ImageDims) -> Result<SlicePlan, SlicingError> {
        match *self {
            Slicer::Asahi(cfg) => asahi_plan(dims, &cfg),
            Slicer::Fixed { patch, overlap } => fixed_plan(dims, patch, overlap),
            Slicer::Grid {
                major,
                minor,
                overlap,
            } => grid_plan(dims, major, minor, overlap),
        }
    }

    /// Grid with `count` slices, for the counts the benchmark compares.
    pub fn grid_of(count: u32, overlap: f64) -> Option<Slicer> {
        let (major, minor) = match count {
            1 => (1, 1),
            2 => (2, 1),
            4 => (2, 2),
            6 => (3, 2),
            9 => (3, 3),
            12 => (4, 3),
            15 => (5, 3),
            16 => (4, 4),
            20 => (5, 4),
            _ => return None,
        };
        Some(Slicer::Grid {
            major,
            minor,
            overlap,
        })
    }

    pub fn overlap(&self) -> f64 {
        match *self {
            Slicer::Asahi(cfg) => cfg.overlap_ratio,
            Slicer::Fixed { overlap, .. } | Slicer::Grid { overlap, .. } => overlap,
        }
    }

    /// Same strategy with a different overlap ratio.
    pub fn with_overlap(&self, overlap: f64) -> Slicer {
        match *self {
            Slicer::Asahi(cfg) => Slicer::Asahi(AsahiConfig {
                overlap_ratio: overlap,
                ..cfg
            }),
            Slicer::Fixed { patch, .. } => Slicer::Fixed { patch, overlap },
            Slicer::Grid { major, minor, .. } => Slicer::Grid {
                major,
                minor,
                overlap,
            },
        }
    }
}

impl fmt::Display for Slicer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slicer::Asahi(_) => f.write_str("asahi"),
            Slicer::Fixed { patch, .. } => write!(f, "sahi-{patch}"),
            Slicer::Grid { major, minor, .. } => write!(f, "grid-{}", major * minor),
        }
    }
}

/// Size of a resized patch and the per-axis factors mapping source pixels to
/// patch pixels. The longer side becomes `target`; the other side is rounded,
/// so the two factors can differ slightly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchGeometry {
    pub width: u32,
    pub height: u32,
    pub scale_x: f64,
    pub scale_y: f64,
}

pub fn patch_geometry(src_width: u32, src_height: u32, target: u32) -> PatchGeometry {
    let s = target as f64 / src_width.max(src_height) as f64;
    let width = (math::round(src_width as f64 * s) as u32).max(1);
    let height = (math::round(src_height as f64 * s) as u32).max(1);
    PatchGeometry {
        width,
        height,
        scale_x: width as f64 / src_width as f64,
        scale_y: height as f64 / src_height as f64,
    }
}

/// Uniform scale the longer side of a `w x h` region undergoes when resized
/// to `target`.
pub fn uniform_scale(src_width: u32, src_height: u32, target: u32) -> f64 {
    target as f64 / src_width.max(src_height) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub raster: Raster,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl Patch {
    /// Maps a patch-local point back to source-image coordinates.
    pub fn to_source(&self, window: &SliceWindow, u: f64, v: f64) -> (f64, f64) {
        (
            window.rect.x1() + u / self.scale_x,
            window.rect.y1() + v / self.scale_y,
        )
    }
}

/// Crops `window` from `image` and resamples it bilinearly so its longer side
/// equals `target`. Sampling uses half-pixel centres and clamps at the window
/// edges.
pub fn extract_patch(image: &Raster, window: &SliceWindow, target: u32) -> Result<Patch, SlicingError> {
    if target == 0 {
        return Err(SlicingError::ZeroTarget);
    }
    let (wx1, wy1, wx2, wy2) = window.pixel_bounds();
    let in_bounds = window.rect.x1() >= 0.0
        && window.rect.y1() >= 0.0
        && wx2 <= image.width()
        && wy2 <= image.height()
        && window.rect.x2() <= image.width() as f64
        && window.rect.y2() <= image.height() as f64;
    if !in_bounds {
        return Err(SlicingError::WindowOutOfBounds {
            window: window.rect,
            width: image.width(),
            height: image.height(),
        });
    }
    let src_w = wx2 - wx1;
    let src_h = wy2 - wy1;
    let geo = patch_geometry(src_w, src_h, target);

    // precompute per-column taps
    let taps = |out_len: u32, scale: f64, src_len: u32| -> Vec<(u32, u32, f64)> {
        (0..out_len)
            .map(|o| {
                let s = ((o as f64 + 0.5) / scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let i0 = math::floor(s) as u32;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xt = taps(geo.width, geo.scale_x, src_w);
    let yt = taps(geo.height, geo.scale_y, src_h);

    let mut data = Vec::with_capacity(geo.width as usize * geo.height as usize * 3);
    for &(y0, y1, fy) in &yt {
        for &(x0, x1, fx) in &xt {
            let p00 = image.pixel(wx1 + x0, wy1 + y0);
            let p01 = image.pixel(wx1 + x1, wy1 + y0);
            let p10 = image.pixel(wx1 + x0, wy1 + y1);
            let p11 = image.pixel(wx1 + x1, wy1 + y1);
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(math::round(v).clamp(0.0, 255.0) as u8);
            }
        }
    }
    let raster = Raster::from_rgb(geo.width, geo.height, data).expect("patch buffer sized from geometry");
    Ok(Patch {
        raster,
        scale_x: geo.scale_x,
        scale_y: geo.scale_y,
    })
}
