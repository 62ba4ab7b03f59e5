//! Axis-aligned boxes and the overlap metrics used by suppression and matching.
//!
//! Boxes are stored in corner form `(x1, y1, x2, y2)` with real-valued pixel
//! coordinates. A box with zero or negative extent cannot be constructed, so
//! every metric below can divide by areas and diagonals without guards.

use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("non-finite box coordinate ({x1}, {y1}, {x2}, {y2})")]
    NonFinite { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("degenerate box ({x1}, {y1}, {x2}, {y2}): width and height must be positive")]
    Degenerate { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("malformed dimensions {0:?}: expected WIDTHxHEIGHT")]
    MalformedDims(DimsText),
}

/// Short copy of an unparseable dimension string, kept inline so the error
/// stays `Copy` in `no_std` builds.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct DimsText {
    buf: [u8; 32],
    len: usize,
}

impl DimsText {
    fn new(s: &str) -> Self {
        let mut buf = [0u8; 32];
        let mut len = 0;
        for ch in s.chars() {
            let w = ch.len_utf8();
            if len + w > buf.len() {
                break;
            }
            ch.encode_utf8(&mut buf[len..len + w]);
            len += w;
        }
        Self { buf, len }
    }

    pub fn as_str(&self) -> &str {
        core::str::from_utf8(&self.buf[..self.len]).unwrap_or("")
    }
}

impl fmt::Debug for DimsText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self.as_str(), f)
    }
}

/// Width and height of a source image in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeomError> {
        if width == 0 || height == 0 {
            return Err(GeomError::EmptyImage { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }

    pub fn max_edge(&self) -> u32 {
        self.width.max(self.height)
    }

    /// The whole image as a box.
    pub fn frame(&self) -> BBox {
        BBox {
            x1: 0.0,
            y1: 0.0,
            x2: self.width as f64,
            y2: self.height as f64,
        }
    }
}

impl fmt::Display for ImageDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for ImageDims {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeomError::MalformedDims(DimsText::new(s));
        let (w, h) = s
            .trim()
            .split_once(|c| c == 'x' || c == 'X')
            .ok_or_else(bad)?;
        let width = w.trim().parse::<u32>().map_err(|_| bad())?;
        let height = h.trim().parse::<u32>().map_err(|_| bad())?;
        ImageDims::new(width, height)
    }
}

/// Axis-aligned box, corner form, strictly positive width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeomError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeomError::NonFinite { x1, y1, x2, y2 });
        }
        if !(x2 > x1 && y2 > y1) {
            return Err(GeomError::Degenerate { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeomError> {
        Self::new(x, y, x + w, y + h)
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }
    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }
    #[inline]
    pub fn x2(&self) -> f64 {
        self.x2
    }
    #[inline]
    pub fn y2(&self) -> f64 {
        self.y2
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Shorter of the two edges.
    #[inline]
    pub fn min_edge(&self) -> f64 {
        self.width().min(self.height())
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Overlapping region, `None` when the boxes only touch or are disjoint.
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        (x2 > x1 && y2 > y1).then_some(BBox { x1, y1, x2, y2 })
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest box enclosing both.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x1 >= self.x1 && other.y1 >= self.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<BBox, GeomError> {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    /// Multiplies x coordinates by `sx` and y coordinates by `sy`.
    pub fn scale(&self, sx: f64, sy: f64) -> Result<BBox, GeomError> {
        BBox::new(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.y1, self.x2, self.y2)
    }
}

/// A labelled ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub class_id: u32,
    pub bbox: BBox,
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// IoU minus the fraction of the enclosing box not covered by the union.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.enclosing(b).area();
    inter / union - (hull - union) / hull
}

/// Squared center distance over squared enclosing diagonal.
fn center_penalty(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let rho2 = (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
    let hull = a.enclosing(b);
    let c2 = hull.width() * hull.width() + hull.height() * hull.height();
    rho2 / c2
}

pub fn diou(a: &BBox, b: &BBox) -> f64 {
    iou(a, b) - center_penalty(a, b)
}

pub fn ciou(a: &BBox, b: &BBox) -> f64 {
    let i = iou(a, b);
    let d = i - center_penalty(a, b);
    let diff = math::atan(a.width() / a.height()) - math::atan(b.width() / b.height());
    let v = 4.0 / (PI * PI) * diff * diff;
    // alpha is 0 for disjoint boxes and for identical aspect ratios
    let alpha = if i <= 0.0 || v == 0.0 {
        0.0
    } else {
        v / ((1.0 - i) + v)
    };
    d - alpha * v
}

/// Which overlap measure a suppression or matching step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OverlapMetric {
    Iou,
    Giou,
    #[default]
    Diou,
    Ciou,
}

impl OverlapMetric {
    pub const ALL: [OverlapMetric; 4] = [
        OverlapMetric::Iou,
        OverlapMetric::Giou,
        OverlapMetric::Diou,
        OverlapMetric::Ciou,
    ];

    #[inline]
    pub fn eval(self, a: &BBox, b: &BBox) -> f64 {
        match self {
            OverlapMetric::Iou => iou(a, b),
            OverlapMetric::Giou => giou(a, b),
            OverlapMetric::Diou => diou(a, b),
            OverlapMetric::Ciou => ciou(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OverlapMetric::Iou => "iou",
            OverlapMetric::Giou => "giou",
            OverlapMetric::Diou => "diou",
            OverlapMetric::Ciou => "ciou",
        }
    }
}

impl fmt::Display for OverlapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OverlapMetric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iou" => Ok(OverlapMetric::Iou),
            "giou" => Ok(OverlapMetric::Giou),
            "diou" => Ok(OverlapMetric::Diou),
            "ciou" => Ok(OverlapMetric::Ciou),
            _ => Err(UnknownMetric),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unknown overlap metric (expected iou, giou, diou or ciou)")]
pub struct UnknownMetric;
