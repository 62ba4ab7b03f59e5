//! Duplicate suppression.
//!
//! [`greedy_suppress`] is the sequential reference: walk detections by
//! descending score, keep the top one and discard everything it overlaps by
//! more than the threshold. [`cluster_suppress`] computes the same set from the
//! upper-triangular overlap matrix by iterating the keep vector to a fixpoint:
//!
//! ```text
//! keep'[j] = not exists i < j : keep[i] and X[i][j] > eps
//! ```
//!
//! Row `j` of the result is final after `j` rounds, so the iteration stops
//! after at most `n` rounds and agrees with the greedy walk. [`cdn`] is the
//! cluster form with DIoU at 0.5.
//!
//! Ties in score are broken by input position everywhere in this module.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::geom::{iou, BBox, OverlapMetric};
use crate::math;

/// Where a detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    FullInference,
    Slice { row: u32, col: u32 },
}

impl Origin {
    /// Whether two origins are the same slice or touching slices (including
    /// diagonal neighbours). Full inference is adjacent to everything.
    pub fn is_adjacent(&self, other: &Origin) -> bool {
        match (self, other) {
            (Origin::FullInference, _) | (_, Origin::FullInference) => true,
            (Origin::Slice { row: r1, col: c1 }, Origin::Slice { row: r2, col: c2 }) => {
                r1.abs_diff(*r2) <= 1 && c1.abs_diff(*c2) <= 1
            }
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::FullInference => f.write_str("full"),
            Origin::Slice { row, col } => write!(f, "slice({row},{col})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: u32,
    /// Confidence in `[0, 1]`.
    pub score: f64,
    /// Full-image frame unless a function says otherwise.
    pub bbox: BBox,
    pub origin: Origin,
}

impl Detection {
    pub fn new(class_id: u32, score: f64, bbox: BBox, origin: Origin) -> Self {
        Self {
            class_id,
            score,
            bbox,
            origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SuppressionError {
    #[error("suppression threshold must lie in (-1, 1], got {0}")]
    Threshold(f64),
    #[error("soft-nms sigma must be positive, got {0}")]
    Sigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionConfig {
    pub metric: OverlapMetric,
    pub threshold: f64,
    pub class_aware: bool,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self::CDN
    }
}

impl SuppressionConfig {
    /// DIoU at 0.5, per class.
    pub const CDN: SuppressionConfig = SuppressionConfig {
        metric: OverlapMetric::Diou,
        threshold: 0.5,
        class_aware: true,
    };

    pub fn new(metric: OverlapMetric, threshold: f64, class_aware: bool) -> Result<Self, SuppressionError> {
        let cfg = Self {
            metric,
            threshold,
            class_aware,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SuppressionError> {
        if self.threshold > -1.0 && self.threshold <= 1.0 {
            Ok(())
        } else {
            Err(SuppressionError::Threshold(self.threshold))
        }
    }

    fn related(&self, a: &Detection, b: &Detection) -> bool {
        !self.class_aware || a.class_id == b.class_id
    }
}

fn by_score_desc(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j]
            .score
            .partial_cmp(&dets[i].score)
            .unwrap_or(Ordering::Equal)
    });
    order
}

pub(crate) fn greedy_with<F>(dets: &[Detection], cfg: &SuppressionConfig, eligible: F) -> Vec<Detection>
where
    F: Fn(&Detection, &Detection) -> bool,
{
    let order = by_score_desc(dets);
    let mut alive = vec![true; order.len()];
    let mut out = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if !alive[pos] {
            continue;
        }
        let top = &dets[i];
        out.push(*top);
        for (later, &j) in order.iter().enumerate().skip(pos + 1) {
            if !alive[later] {
                continue;
            }
            let other = &dets[j];
            if cfg.related(top, other)
                && eligible(top, other)
                && cfg.metric.eval(&top.bbox, &other.bbox) > cfg.threshold
            {
                alive[later] = false;
            }
        }
    }
    out
}

/// Sequential suppression; output is sorted by descending score.
pub fn greedy_suppress(dets: &[Detection], cfg: &SuppressionConfig) -> Vec<Detection> {
    greedy_with(dets, cfg, |_, _| true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub kept: Vec<Detection>,
    /// Rounds until the keep vector stopped changing, including the round
    /// that confirmed it.
    pub iterations: usize,
}

/// Packed strictly-upper-triangular matrix.
struct UpperTriangle {
    n: usize,
    values: Vec<f64>,
}

impl UpperTriangle {
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.offset(i, j)]
    }
}

pub(crate) fn cluster_with<F>(dets: &[Detection], cfg: &SuppressionConfig, eligible: F) -> ClusterOutcome
where
    F: Fn(&Detection, &Detection) -> bool,
{
    let order = by_score_desc(dets);
    let n = order.len();
    if n == 0 {
        return ClusterOutcome {
            kept: Vec::new(),
            iterations: 0,
        };
    }
    // unrelated pairs never suppress
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let a = &dets[order[i]];
        for &oj in &order[i + 1..] {
            let b = &dets[oj];
            let x = if cfg.related(a, b) && eligible(a, b) {
                cfg.metric.eval(&a.bbox, &b.bbox)
            } else {
                f64::NEG_INFINITY
            };
            values.push(x);
        }
    }
    let matrix = UpperTriangle { n, values };

    let mut keep = vec![true; n];
    let mut next = vec![true; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        for j in 0..n {
            next[j] = !(0..j).any(|i| keep[i] && matrix.get(i, j) > cfg.threshold);
        }
        if next == keep {
            break;
        }
        core::mem::swap(&mut keep, &mut next);
    }
    let kept = order
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&i, _)| dets[i])
        .collect();
    ClusterOutcome { kept, iterations }
}

/// Matrix-form suppression; same output as [`greedy_suppress`].
pub fn cluster_suppress(dets: &[Detection], cfg: &SuppressionConfig) -> Vec<Detection> {
    cluster_with(dets, cfg, |_, _| true).kept
}

/// [`cluster_suppress`] plus the number of fixpoint rounds.
pub fn cluster_suppress_stats(dets: &[Detection], cfg: &SuppressionConfig) -> ClusterOutcome {
    cluster_with(dets, cfg, |_, _| true)
}

/// Cluster-DIoU-NMS: cluster suppression with DIoU, threshold 0.5, per class.
pub fn cdn(dets: &[Detection]) -> Vec<Detection> {
    cluster_suppress(dets, &SuppressionConfig::CDN)
}

pub const SOFT_NMS_SCORE_FLOOR: f64 = 0.001;

/// Gaussian Soft-NMS within each class: every remaining detection of the
/// picked one's class is rescored by `exp(-iou^2 / sigma)`; rescored
/// detections under `score_floor` are dropped.
pub fn soft_suppress(
    dets: &[Detection],
    sigma: f64,
    score_floor: f64,
) -> Result<Vec<Detection>, SuppressionError> {
    if !(sigma > 0.0) {
        return Err(SuppressionError::Sigma(sigma));
    }
    let mut pool: Vec<Detection> = dets.to_vec();
    let mut out = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for (k, d) in pool.iter().enumerate().skip(1) {
            if d.score > pool[best].score {
                best = k;
            }
        }
        let top = pool.remove(best);
        out.push(top);
        for d in pool.iter_mut() {
            if d.class_id == top.class_id {
                let o = iou(&top.bbox, &d.bbox);
                if o > 0.0 {
                    d.score *= math::exp(-(o * o) / sigma);
                }
            }
        }
        pool.retain(|d| d.score >= score_floor);
    }
    Ok(out)
}

struct FusionCluster {
    class_id: u32,
    origin: Origin,
    fused: BBox,
    sum: [f64; 4],
    plain: [f64; 4],
    weight: f64,
    score_sum: f64,
    members: usize,
}

impl FusionCluster {
    fn new(d: &Detection) -> Self {
        let c = d.bbox.corners();
        Self {
            class_id: d.class_id,
            origin: d.origin,
            fused: d.bbox,
            sum: c.map(|v| v * d.score),
            plain: c,
            weight: d.score,
            score_sum: d.score,
            members: 1,
        }
    }

    fn absorb(&mut self, d: &Detection) {
        let c = d.bbox.corners();
        for k in 0..4 {
            self.sum[k] += c[k] * d.score;
            self.plain[k] += c[k];
        }
        self.weight += d.score;
        self.score_sum += d.score;
        self.members += 1;
        let m = if self.weight > 0.0 {
            self.sum.map(|v| v / self.weight)
        } else {
            self.plain.map(|v| v / self.members as f64)
        };
        // a weighted mean of valid boxes is itself valid
        if let Ok(b) = BBox::new(m[0], m[1], m[2], m[3]) {
            self.fused = b;
        }
    }
}

/// Weighted boxes fusion within each class. A detection joins the cluster
/// whose fused box it overlaps most when that IoU exceeds `threshold`;
/// clusters report the score-weighted mean box and the mean score.
pub fn wbf(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut clusters: Vec<FusionCluster> = Vec::new();
    for i in by_score_desc(dets) {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in clusters.iter().enumerate() {
            if c.class_id != d.class_id {
                continue;
            }
            let o = iou(&c.fused, &d.bbox);
            if o > threshold && best.map_or(true, |(_, b)| o > b) {
                best = Some((k, o));
            }
        }
        match best {
            Some((k, _)) => clusters[k].absorb(d),
            None => clusters.push(FusionCluster::new(d)),
        }
    }
    let fused: Vec<Detection> = clusters
        .iter()
        .map(|c| Detection {
            class_id: c.class_id,
            score: c.score_sum / c.members as f64,
            bbox: c.fused,
            origin: c.origin,
        })
        .collect();
    let order = by_score_desc(&fused);
    order.into_iter().map(|i| fused[i]).collect()
}

/// Any of the post-processing steps, selectable at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Suppressor {
    Greedy(SuppressionConfig),
    Cluster(SuppressionConfig),
    Soft { sigma: f64, score_floor: f64 },
    Wbf { threshold: f64 },
}

impl Default for Suppressor {
    fn default() -> Self {
        Suppressor::Cluster(SuppressionConfig::CDN)
    }
}

impl Suppressor {
    pub fn apply(&self, dets: &[Detection]) -> Result<Vec<Detection>, SuppressionError> {
        match self {
            Suppressor::Greedy(cfg) => Ok(greedy_suppress(dets, cfg)),
            Suppressor::Cluster(cfg) => Ok(cluster_suppress(dets, cfg)),
            Suppressor::Soft { sigma, score_floor } => soft_suppress(dets, *sigma, *score_floor),
            Suppressor::Wbf { threshold } => Ok(wbf(dets, *threshold)),
        }
    }

    /// Post-processors compared in the suppression benchmark.
    pub fn comparison_set() -> [Suppressor; 6] {
        let cluster = |metric| {
            Suppressor::Cluster(SuppressionConfig {
                metric,
                threshold: 0.5,
                class_aware: true,
            })
        };
        [
            Suppressor::Greedy(SuppressionConfig {
                metric: OverlapMetric::Iou,
                threshold: 0.5,
                class_aware: true,
            }),
            Suppressor::Soft {
                sigma: 0.5,
                score_floor: SOFT_NMS_SCORE_FLOOR,
            },
            Suppressor::Wbf { threshold: 0.55 },
            cluster(OverlapMetric::Giou),
            cluster(OverlapMetric::Ciou),
            cluster(OverlapMetric::Diou),
        ]
    }
}

impl fmt::Display for Suppressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Suppressor::Greedy(cfg) => write!(f, "nms-{}@{}", cfg.metric, cfg.threshold),
            Suppressor::Cluster(cfg) if *cfg == SuppressionConfig::CDN => f.write_str("cdn"),
            Suppressor::Cluster(cfg) => write!(f, "cluster-{}@{}", cfg.metric, cfg.threshold),
            Suppressor::Soft { sigma, .. } => write!(f, "soft-nms@{sigma}"),
            Suppressor::Wbf { threshold } => write!(f, "wbf@{threshold}"),
        }
    }
}
