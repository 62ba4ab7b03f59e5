//! Seeded synthetic scenes: axis-aligned ground-truth boxes on a plain image.
//!
//! Box edges are drawn independently and log-uniformly from
//! `[min_edge, max_edge]` and rounded to whole pixels. Exactly
//! `round(small_fraction * object_count)` objects are drawn from the part of
//! that distribution with area below 32², the rest from the part at or above
//! it. Positions are rejection-sampled against the crowding cap.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::eval::SMALL_MAX_AREA;
use crate::geom::{iou, Annotation, BBox, ImageDims};
use crate::math;
use crate::raster::Raster;

/// Placement attempts per object before giving up on the crowding cap.
pub const PLACEMENT_ATTEMPTS: usize = 100;
const SIZE_ATTEMPTS: usize = 1000;

pub const BACKGROUND: [u8; 3] = [128, 128, 128];

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

pub fn class_color(class_id: u32) -> [u8; 3] {
    PALETTE[class_id as usize % PALETTE.len()]
}

/// What to do with an object that could not be placed under the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relaxation {
    /// Leave it out.
    #[default]
    Skip,
    /// Keep the least-overlapping candidate seen.
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("edge range must satisfy 1 <= min_edge <= max_edge, got [{0}, {1}]")]
    EdgeRange(f64, f64),
    #[error("max_edge {max_edge} exceeds the image ({width}x{height})")]
    EdgeTooLarge { max_edge: f64, width: u32, height: u32 },
    #[error("small_fraction must lie in [0, 1], got {0}")]
    SmallFraction(f64),
    #[error("crowding cap must lie in [0, 1], got {0}")]
    Crowding(f64),
    #[error("class_count must be at least 1")]
    NoClasses,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub dims: ImageDims,
    pub object_count: usize,
    pub class_count: u32,
    pub min_edge: f64,
    pub max_edge: f64,
    /// Largest IoU allowed between two ground-truth boxes.
    pub max_iou: f64,
    pub small_fraction: f64,
    pub relaxation: Relaxation,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            dims: ImageDims {
                width: 1920,
                height: 1080,
            },
            object_count: 100,
            class_count: 5,
            min_edge: 6.0,
            max_edge: 200.0,
            max_iou: 0.3,
            small_fraction: 0.7,
            relaxation: Relaxation::Skip,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.min_edge >= 1.0 && self.min_edge <= self.max_edge && self.max_edge.is_finite()) {
            return Err(SceneError::EdgeRange(self.min_edge, self.max_edge));
        }
        if self.max_edge > self.dims.width.min(self.dims.height) as f64 {
            return Err(SceneError::EdgeTooLarge {
                max_edge: self.max_edge,
                width: self.dims.width,
                height: self.dims.height,
            });
        }
        if !(0.0..=1.0).contains(&self.small_fraction) {
            return Err(SceneError::SmallFraction(self.small_fraction));
        }
        if !(0.0..=1.0).contains(&self.max_iou) {
            return Err(SceneError::Crowding(self.max_iou));
        }
        if self.class_count == 0 {
            return Err(SceneError::NoClasses);
        }
        Ok(())
    }

    /// Number of objects drawn from the small part of the size distribution,
    /// after clamping to what the edge range allows.
    pub fn small_target(&self) -> usize {
        let lo = math::round(self.min_edge);
        let hi = math::round(self.max_edge);
        if lo * lo >= SMALL_MAX_AREA {
            return 0;
        }
        if hi * hi < SMALL_MAX_AREA {
            return self.object_count;
        }
        math::round(self.small_fraction * self.object_count as f64) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dims: ImageDims,
    pub annotations: Vec<Annotation>,
    /// Objects placed over the crowding cap.
    pub relaxed: usize,
    /// Objects dropped because no placement satisfied the cap.
    pub skipped: usize,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    math::exp(math::ln(lo) + u * (math::ln(hi) - math::ln(lo)))
}

fn draw_size<R: Rng>(rng: &mut R, spec: &SceneSpec, small: bool) -> (f64, f64) {
    let lo = math::round(spec.min_edge);
    let hi = math::round(spec.max_edge);
    let mut last = (lo, lo);
    for _ in 0..SIZE_ATTEMPTS {
        let w = math::round(log_uniform(rng, spec.min_edge, spec.max_edge)).clamp(lo, hi);
        let h = math::round(log_uniform(rng, spec.min_edge, spec.max_edge)).clamp(lo, hi);
        last = (w, h);
        if (w * h < SMALL_MAX_AREA) == small {
            return last;
        }
    }
    // Reachable only when the wanted part of the range is a sliver.
    if small {
        (lo, lo)
    } else if last.0 * last.1 >= SMALL_MAX_AREA {
        last
    } else {
        (hi, hi)
    }
}

pub fn generate(spec: &SceneSpec) -> Result<Scene, SceneError> {
    spec.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let n_small = spec.small_target().min(spec.object_count);
    let mut kinds: Vec<bool> = (0..spec.object_count).map(|i| i < n_small).collect();
    kinds.shuffle(&mut rng);

    let (img_w, img_h) = (spec.dims.width as f64, spec.dims.height as f64);
    let mut scene = Scene {
        dims: spec.dims,
        annotations: Vec::with_capacity(spec.object_count),
        relaxed: 0,
        skipped: 0,
    };
    for small in kinds {
        let (w, h) = draw_size(&mut rng, spec, small);
        let class_id = rng.random_range(0..spec.class_count);
        let mut best: Option<(BBox, f64)> = None;
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.random_range(0..=(img_w - w) as u32) as f64;
            let y = rng.random_range(0..=(img_h - h) as u32) as f64;
            let b = BBox::new(x, y, x + w, y + h).expect("edges are at least one pixel");
            let worst = scene
                .annotations
                .iter()
                .map(|a| iou(&a.bbox, &b))
                .fold(0.0, f64::max);
            if worst <= spec.max_iou {
                scene.annotations.push(Annotation { class_id, bbox: b });
                placed = true;
                break;
            }
            if best.is_none_or(|(_, v)| worst < v) {
                best = Some((b, worst));
            }
        }
        if placed {
            continue;
        }
        match (spec.relaxation, best) {
            (Relaxation::BestEffort, Some((b, _))) => {
                scene.annotations.push(Annotation { class_id, bbox: b });
                scene.relaxed += 1;
            }
            _ => scene.skipped += 1,
        }
    }
    Ok(scene)
}

/// Filled rectangles in class colours on a grey background. Later objects are
/// drawn over earlier ones. Box edges are rounded to whole pixels.
pub fn render(scene: &Scene) -> Raster {
    let mut r = Raster::filled(scene.dims.width, scene.dims.height, BACKGROUND)
        .expect("scene dims are non-zero");
    for a in &scene.annotations {
        let [x1, y1, x2, y2] = a.bbox.corners().map(|v| math::round(v).max(0.0) as u32);
        r.fill_rect(x1, y1, x2, y2, class_color(a.class_id));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{size_bucket, SizeBucket};

    #[test]
    fn empty_scene() {
        let spec = SceneSpec {
            object_count: 0,
            ..SceneSpec::default()
        };
        let s = generate(&spec).unwrap();
        assert!(s.annotations.is_empty());
        let r = render(&s);
        assert!(r.data().chunks(3).all(|p| p == BACKGROUND));
    }

    #[test]
    fn reproducible() {
        let spec = SceneSpec {
            seed: 42,
            ..SceneSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SceneSpec { seed: 43, ..spec };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn small_fraction_and_bounds() {
        let spec = SceneSpec {
            seed: 5,
            object_count: 200,
            ..SceneSpec::default()
        };
        let s = generate(&spec).unwrap();
        let frame = spec.dims.frame();
        let n = s.annotations.len();
        assert!(s.annotations.iter().all(|a| frame.contains(&a.bbox)));
        let small = s
            .annotations
            .iter()
            .filter(|a| size_bucket(&a.bbox) == SizeBucket::Small)
            .count();
        assert!((small as f64 / n as f64 - 0.7).abs() <= 0.05, "{small}/{n}");
        for (i, a) in s.annotations.iter().enumerate() {
            for b in &s.annotations[i + 1..] {
                assert!(iou(&a.bbox, &b.bbox) <= spec.max_iou);
            }
        }
    }

    #[test]
    fn infeasible_crowding() {
        let spec = SceneSpec {
            dims: ImageDims { width: 64, height: 64 },
            object_count: 50,
            min_edge: 30.0,
            max_edge: 40.0,
            max_iou: 0.0,
            ..SceneSpec::default()
        };
        let s = generate(&spec).unwrap();
        assert!(s.skipped > 0);
        assert_eq!(s.annotations.len() + s.skipped, 50);
        let relaxed = generate(&SceneSpec {
            relaxation: Relaxation::BestEffort,
            ..spec
        })
        .unwrap();
        assert_eq!(relaxed.annotations.len(), 50);
        assert!(relaxed.relaxed > 0);
    }

    #[test]
    fn render_one_box_and_z_order() {
        let dims = ImageDims::new(10, 8).unwrap();
        let a = Annotation {
            class_id: 0,
            bbox: BBox::new(2.0, 1.0, 5.0, 4.0).unwrap(),
        };
        let s = Scene {
            dims,
            annotations: alloc::vec![a],
            relaxed: 0,
            skipped: 0,
        };
        let r = render(&s);
        for y in 0..8 {
            for x in 0..10 {
                let inside = (2..5).contains(&x) && (1..4).contains(&y);
                let want = if inside { class_color(0) } else { BACKGROUND };
                assert_eq!(r.pixel(x, y), want);
            }
        }
        let b = Annotation {
            class_id: 1,
            bbox: BBox::new(4.0, 3.0, 7.0, 6.0).unwrap(),
        };
        let s = Scene {
            annotations: alloc::vec![a, b],
            ..s
        };
        assert_eq!(render(&s).pixel(4, 3), class_color(1));
    }

    #[test]
    fn bad_specs() {
        let d = SceneSpec::default();
        for s in [
            SceneSpec { min_edge: 0.5, ..d },
            SceneSpec { max_edge: 5000.0, ..d },
            SceneSpec { small_fraction: 1.2, ..d },
            SceneSpec { max_iou: -0.1, ..d },
            SceneSpec { class_count: 0, ..d },
        ] {
            assert!(generate(&s).is_err());
        }
    }
}
