//! Ground-truth driven stand-in for a neural detector.
//!
//! The oracle sees which annotations fall inside the requested window and
//! reports those it could plausibly resolve at the detector's input
//! resolution: an object is detectable when its shorter edge, measured in
//! detector-input pixels, reaches `min_detectable_px`. Noise knobs add missed
//! detections, coordinate jitter and Poisson false positives.
//!
//! Randomness is drawn from Xoshiro256++ seeded per window by folding the
//! global seed, the image id and the window rectangle through SplitMix64, so
//! concurrent calls never share a stream.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Poisson, StandardNormal};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

use crate::geom::{Annotation, BBox};
use crate::math;
use crate::nms::{Detection, Origin};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("min_detectable_px must be finite and >= 0, got {0}")]
    MinDetectable(f64),
    #[error("jitter_sigma must be finite and >= 0, got {0}")]
    Jitter(f64),
    #[error("miss_rate must lie in [0, 1], got {0}")]
    MissRate(f64),
    #[error("fp_rate must be finite and >= 0, got {0}")]
    FpRate(f64),
    #[error("min_visible_fraction must lie in (0, 1], got {0}")]
    Visibility(f64),
    #[error("score model needs 0 <= floor <= ceiling <= 1 and half_size_px > 0")]
    ScoreModel,
    #[error("class_count must be at least 1")]
    NoClasses,
    #[error("input scale must be positive, got ({0}, {1})")]
    Scale(f64, f64),
}

/// Confidence as a saturating function of the object's size at the detector
/// input: `floor + (ceiling - floor) * s / (s + half_size_px)`, plus uniform
/// noise of half-width `jitter`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreModel {
    pub floor: f64,
    pub ceiling: f64,
    pub half_size_px: f64,
    pub jitter: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            floor: 0.3,
            ceiling: 0.98,
            half_size_px: 8.0,
            jitter: 0.0,
        }
    }
}

impl ScoreModel {
    pub fn mean_score(&self, size_px: f64) -> f64 {
        let s = size_px.max(0.0);
        self.floor + (self.ceiling - self.floor) * s / (s + self.half_size_px)
    }

    fn valid(&self) -> bool {
        (0.0..=1.0).contains(&self.floor)
            && (self.floor..=1.0).contains(&self.ceiling)
            && self.half_size_px > 0.0
            && self.jitter.is_finite()
            && self.jitter >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub min_detectable_px: f64,
    pub jitter_sigma: f64,
    pub miss_rate: f64,
    /// Expected false positives per call.
    pub fp_rate: f64,
    pub score_model: ScoreModel,
    pub seed: u64,
    /// Classes false positives are drawn from.
    pub class_count: u32,
    /// Fraction of an object's area that must lie inside the window for it to
    /// be reported. At 1.0 only fully contained objects are seen; below that,
    /// partially visible objects are reported clipped to the window.
    pub min_visible_fraction: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            min_detectable_px: 4.0,
            jitter_sigma: 0.0,
            miss_rate: 0.0,
            fp_rate: 0.0,
            score_model: ScoreModel::default(),
            seed: 0,
            class_count: 1,
            min_visible_fraction: 1.0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.min_detectable_px.is_finite() && self.min_detectable_px >= 0.0) {
            return Err(OracleError::MinDetectable(self.min_detectable_px));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(OracleError::Jitter(self.jitter_sigma));
        }
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(OracleError::MissRate(self.miss_rate));
        }
        if !(self.fp_rate.is_finite() && self.fp_rate >= 0.0) {
            return Err(OracleError::FpRate(self.fp_rate));
        }
        if !(self.min_visible_fraction > 0.0 && self.min_visible_fraction <= 1.0) {
            return Err(OracleError::Visibility(self.min_visible_fraction));
        }
        if !self.score_model.valid() {
            return Err(OracleError::ScoreModel);
        }
        if self.class_count == 0 {
            return Err(OracleError::NoClasses);
        }
        Ok(())
    }
}

/// One detector call: the window in source pixels and the factors taking
/// source pixels to detector-input pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleWindow {
    pub image_id: u64,
    pub rect: BBox,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl OracleWindow {
    pub fn uniform(image_id: u64, rect: BBox, scale: f64) -> Self {
        Self {
            image_id,
            rect,
            scale_x: scale,
            scale_y: scale,
        }
    }
}

/// Per-window generator state. Depends on the seed, image id and window
/// rectangle only, so the same window always sees the same stream.
pub fn window_rng(seed: u64, image_id: u64, rect: &BBox) -> Xoshiro256PlusPlus {
    let [x1, y1, x2, y2] = rect.corners();
    let mut h = seed;
    for v in [image_id, x1.to_bits(), y1.to_bits(), x2.to_bits(), y2.to_bits()] {
        h = SplitMix64::seed_from_u64(h ^ v).next_u64();
    }
    Xoshiro256PlusPlus::seed_from_u64(h)
}

/// Runs the oracle over `gt` (source-frame annotations; anything outside the
/// window is ignored) and returns detections in the patch frame. The origin
/// field is left as full inference; the caller tags it when remapping.
pub fn oracle_detect(
    gt: &[Annotation],
    params: &OracleParams,
    window: &OracleWindow,
) -> Result<Vec<Detection>, OracleError> {
    params.validate()?;
    let (sx, sy) = (window.scale_x, window.scale_y);
    if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
        return Err(OracleError::Scale(sx, sy));
    }
    let frame_w = window.rect.width() * sx;
    let frame_h = window.rect.height() * sy;
    let (ox, oy) = (window.rect.x1(), window.rect.y1());
    let mut rng = window_rng(params.seed, window.image_id, &window.rect);
    let mut out = Vec::new();

    for ann in gt {
        let Some(clipped) = ann.bbox.intersect(&window.rect) else {
            continue;
        };
        let visible = clipped.area() / ann.bbox.area();
        if visible < params.min_visible_fraction - 1e-12 {
            continue;
        }
        // Fixed draw count per visible object keeps later objects' draws
        // independent of earlier outcomes.
        let u_miss: f64 = rng.random();
        let noise: [f64; 4] = core::array::from_fn(|_| rng.sample(StandardNormal));
        let u_score: f64 = rng.random();

        let local = [
            (clipped.x1() - ox) * sx,
            (clipped.y1() - oy) * sy,
            (clipped.x2() - ox) * sx,
            (clipped.y2() - oy) * sy,
        ];
        let size = (local[2] - local[0]).min(local[3] - local[1]);
        if size < params.min_detectable_px || u_miss < params.miss_rate {
            continue;
        }
        let s = params.jitter_sigma;
        let bbox = BBox::new(
            (local[0] + s * noise[0]).clamp(0.0, frame_w),
            (local[1] + s * noise[1]).clamp(0.0, frame_h),
            (local[2] + s * noise[2]).clamp(0.0, frame_w),
            (local[3] + s * noise[3]).clamp(0.0, frame_h),
        );
        let Ok(bbox) = bbox else { continue };
        let sm = &params.score_model;
        let score = (sm.mean_score(size) + sm.jitter * (2.0 * u_score - 1.0)).clamp(0.0, 1.0);
        out.push(Detection::new(ann.class_id, score, bbox, Origin::FullInference));
    }

    if params.fp_rate > 0.0 {
        let k = Poisson::new(params.fp_rate)
            .map(|p| p.sample(&mut rng))
            .unwrap_or(0.0) as u64;
        let lo = params.min_detectable_px.max(1.0);
        let hi = (lo * 8.0).min(frame_w.min(frame_h)).max(lo);
        for _ in 0..k {
            let w = log_uniform(&mut rng, lo, hi).min(frame_w);
            let h = log_uniform(&mut rng, lo, hi).min(frame_h);
            let x = rng.random::<f64>() * (frame_w - w);
            let y = rng.random::<f64>() * (frame_h - h);
            let class_id = rng.random_range(0..params.class_count);
            let score = 0.01 + rng.random::<f64>() * (params.score_model.floor * 0.5);
            if let Ok(bbox) = BBox::new(x, y, x + w, y + h) {
                out.push(Detection::new(class_id, score, bbox, Origin::FullInference));
            }
        }
    }
    Ok(out)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let u: f64 = rng.random();
    math::exp(math::ln(lo) + u * (math::ln(hi) - math::ln(lo)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(x1: f64, y1: f64, x2: f64, y2: f64) -> Annotation {
        Annotation {
            class_id: 0,
            bbox: BBox::new(x1, y1, x2, y2).unwrap(),
        }
    }

    fn whole(scale: f64) -> OracleWindow {
        OracleWindow::uniform(7, BBox::new(0.0, 0.0, 1920.0, 1080.0).unwrap(), scale)
    }

    #[test]
    fn zero_noise_returns_ground_truth() {
        let gt = [ann(10.0, 10.0, 110.0, 90.0), ann(500.0, 300.0, 560.0, 380.0)];
        let out = oracle_detect(&gt, &OracleParams::default(), &whole(1.0)).unwrap();
        assert_eq!(out.len(), 2);
        for (d, g) in out.iter().zip(&gt) {
            assert_eq!(d.bbox, g.bbox);
        }
    }

    #[test]
    fn slicing_rescues_a_small_object() {
        let gt = [ann(100.0, 100.0, 110.0, 112.0)];
        let p = OracleParams::default();
        assert!(oracle_detect(&gt, &p, &whole(0.27)).unwrap().is_empty());
        let slice = OracleWindow::uniform(7, BBox::new(0.0, 0.0, 640.0, 400.0).unwrap(), 0.8);
        let out = oracle_detect(&gt, &p, &slice).unwrap();
        assert_eq!(out.len(), 1);
        let want = [80.0, 80.0, 88.0, 89.6];
        for (a, b) in out[0].bbox.corners().iter().zip(want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn miss_rate_one_leaves_only_false_positives() {
        let gt = [ann(10.0, 10.0, 110.0, 90.0); 20];
        let p = OracleParams {
            miss_rate: 1.0,
            fp_rate: 3.0,
            seed: 11,
            ..OracleParams::default()
        };
        let out = oracle_detect(&gt, &p, &whole(1.0)).unwrap();
        assert!(out.iter().all(|d| d.score < p.score_model.floor));
        let q = OracleParams { fp_rate: 0.0, ..p };
        assert!(oracle_detect(&gt, &q, &whole(1.0)).unwrap().is_empty());
    }

    #[test]
    fn partial_objects() {
        let gt = [ann(90.0, 10.0, 110.0, 30.0)];
        let win = OracleWindow::uniform(0, BBox::new(0.0, 0.0, 100.0, 100.0).unwrap(), 1.0);
        assert!(oracle_detect(&gt, &OracleParams::default(), &win).unwrap().is_empty());
        let p = OracleParams {
            min_visible_fraction: 0.5,
            ..OracleParams::default()
        };
        let out = oracle_detect(&gt, &p, &win).unwrap();
        assert_eq!(out[0].bbox.corners(), [90.0, 10.0, 100.0, 30.0]);
    }

    #[test]
    fn seeded_and_window_keyed() {
        let gt: Vec<Annotation> = (0..30)
            .map(|i| ann(i as f64 * 30.0, 5.0, i as f64 * 30.0 + 20.0, 40.0))
            .collect();
        let p = OracleParams {
            jitter_sigma: 1.5,
            miss_rate: 0.2,
            fp_rate: 2.0,
            seed: 99,
            class_count: 3,
            score_model: ScoreModel {
                jitter: 0.05,
                ..ScoreModel::default()
            },
            ..OracleParams::default()
        };
        let a = oracle_detect(&gt, &p, &whole(1.0)).unwrap();
        let b = oracle_detect(&gt, &p, &whole(1.0)).unwrap();
        assert_eq!(a, b);
        let c = oracle_detect(&gt, &OracleParams { seed: 100, ..p }, &whole(1.0)).unwrap();
        assert_ne!(a, c);
        let other = OracleWindow { image_id: 8, ..whole(1.0) };
        assert_ne!(a, oracle_detect(&gt, &p, &other).unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        let bad = [
            OracleParams { min_detectable_px: -1.0, ..OracleParams::default() },
            OracleParams { miss_rate: 1.5, ..OracleParams::default() },
            OracleParams { fp_rate: f64::NAN, ..OracleParams::default() },
            OracleParams { min_visible_fraction: 0.0, ..OracleParams::default() },
            OracleParams { class_count: 0, ..OracleParams::default() },
        ];
        for p in bad {
            assert!(oracle_detect(&[], &p, &whole(1.0)).is_err());
        }
        assert!(oracle_detect(&[], &OracleParams::default(), &whole(0.0)).is_err());
    }
}
