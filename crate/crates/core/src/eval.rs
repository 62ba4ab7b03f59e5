//! COCO-style detection metrics.
//!
//! Per image and class, detections are walked in descending score order and
//! each claims the unclaimed ground truth with the highest IoU at or above
//! the threshold. AP is the 101-point interpolated area under the
//! precision envelope. mAP averages over classes that have ground truth, then
//! over the ten IoU thresholds 0.50, 0.55, ..., 0.95.
//!
//! Size-bucketed scores treat ground truth outside the bucket as ignored:
//! detections matched to it count neither way. An unmatched detection is a
//! false positive in a bucket when its own area falls inside that bucket
//! ([`UnmatchedPolicy::AreaFiltered`], the COCO rule) or in every bucket
//! ([`UnmatchedPolicy::EveryBucket`]).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::geom::{iou, Annotation, BBox};
use crate::nms::Detection;

pub const SMALL_MAX_AREA: f64 = 1024.0;
pub const MEDIUM_MAX_AREA: f64 = 9216.0;

/// IoU thresholds for mAP, as exact decimal literals.
pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn of_area(area: f64) -> SizeBucket {
        if area < SMALL_MAX_AREA {
            SizeBucket::Small
        } else if area <= MEDIUM_MAX_AREA {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

impl fmt::Display for SizeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::Large => "large",
        })
    }
}

pub fn size_bucket(b: &BBox) -> SizeBucket {
    SizeBucket::of_area(b.area())
}

/// Outcome of [`match_detections`], indexed like the input detections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub true_positive: Vec<bool>,
    pub matched_gt: Vec<Option<usize>>,
    pub false_negatives: usize,
}

impl Matching {
    pub fn tp(&self) -> usize {
        self.true_positive.iter().filter(|&&t| t).count()
    }

    pub fn fp(&self) -> usize {
        self.true_positive.len() - self.tp()
    }
}

fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Greedy single-claim matching on one image.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Annotation],
    iou_threshold: f64,
    class_aware: bool,
) -> Matching {
    let mut claimed = vec![false; gts.len()];
    let mut m = Matching {
        true_positive: vec![false; dets.len()],
        matched_gt: vec![None; dets.len()],
        false_negatives: 0,
    };
    for i in score_order(dets) {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] || (class_aware && gt.class_id != d.class_id) {
                continue;
            }
            let v = iou(&d.bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
            m.true_positive[i] = true;
            m.matched_gt[i] = Some(g);
        }
    }
    m.false_negatives = claimed.iter().filter(|&&c| !c).count();
    m
}

/// 101-point interpolated AP. `hits` holds `(score, is_true_positive)` for
/// every counted detection; ties keep slice order. `None` when `num_gt == 0`.
pub fn average_precision(hits: &[(f64, bool)], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..hits.len()).collect();
    order.sort_by(|&a, &b| hits[b].0.partial_cmp(&hits[a].0).unwrap_or(Ordering::Equal));
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &i in &order {
        if hits[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        if precision[k + 1] > precision[k] {
            precision[k] = precision[k + 1];
        }
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some(sum / 101.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnmatchedPolicy {
    #[default]
    AreaFiltered,
    EveryBucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalParams {
    /// Keep only the top-scoring detections per image and class.
    pub max_detections: Option<usize>,
    pub unmatched: UnmatchedPolicy,
}

/// Wall time and pixel work behind a set of detections.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Throughput {
    pub images: usize,
    pub wall_seconds: f64,
    pub processed_pixels: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAp {
    pub class_id: u32,
    pub gt_count: usize,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub map: f64,
    pub map50: f64,
    pub map75: f64,
    pub map50_small: f64,
    pub map50_medium: f64,
    pub map50_large: f64,
    pub per_class: Vec<ClassAp>,
    /// Ground truth per bucket: small, medium, large.
    pub gt_per_bucket: [usize; 3],
    pub images_per_second: f64,
    pub processed_pixels_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("detections reference image {0}, which has no ground-truth entry")]
    UnknownImage(u64),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Tp,
    Fp,
    Ignored,
}

/// Matches one image and class at one threshold, honouring an area range.
/// `dets` must already be in descending score order.
fn match_in_range(
    dets: &[&Detection],
    gts: &[&Annotation],
    threshold: f64,
    range: Option<SizeBucket>,
    policy: UnmatchedPolicy,
) -> (Vec<Status>, usize) {
    let ignored: Vec<bool> = gts
        .iter()
        .map(|g| range.is_some_and(|r| size_bucket(&g.bbox) != r))
        .collect();
    let counted = ignored.iter().filter(|&&i| !i).count();
    let mut claimed = vec![false; gts.len()];
    let mut status = Vec::with_capacity(dets.len());
    for d in dets {
        let mut pick = None;
        for want_ignored in [false, true] {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if claimed[g] || ignored[g] != want_ignored {
                    continue;
                }
                let v = iou(&d.bbox, &gt.bbox);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if best.is_some() {
                pick = best;
                break;
            }
        }
        status.push(match pick {
            Some((g, _)) => {
                claimed[g] = true;
                if ignored[g] {
                    Status::Ignored
                } else {
                    Status::Tp
                }
            }
            None => match (range, policy) {
                (Some(r), UnmatchedPolicy::AreaFiltered) if size_bucket(&d.bbox) != r => Status::Ignored,
                _ => Status::Fp,
            },
        });
    }
    (status, counted)
}

/// Scores detections against ground truth. Every image with detections must
/// appear in `gts`, even with an empty annotation list.
pub fn evaluate(
    gts: &BTreeMap<u64, Vec<Annotation>>,
    dets: &BTreeMap<u64, Vec<Detection>>,
    params: &EvalParams,
    throughput: Option<Throughput>,
) -> Result<EvalReport, EvalError> {
    if let Some(id) = dets.keys().find(|id| !gts.contains_key(id)) {
        return Err(EvalError::UnknownImage(*id));
    }
    let classes: BTreeSet<u32> = gts
        .values()
        .flat_map(|v| v.iter().map(|a| a.class_id))
        .chain(dets.values().flat_map(|v| v.iter().map(|d| d.class_id)))
        .collect();

    // Per image, class: score-sorted detections and ground truth.
    struct Cell<'a> {
        dets: Vec<&'a Detection>,
        gts: Vec<&'a Annotation>,
    }
    let empty: Vec<Detection> = Vec::new();
    let mut cells: BTreeMap<u32, Vec<Cell<'_>>> = BTreeMap::new();
    for (id, image_gt) in gts {
        let image_dets = dets.get(id).unwrap_or(&empty);
        let order = score_order(image_dets);
        for &c in &classes {
            let mut cd: Vec<&Detection> = order
                .iter()
                .map(|&i| &image_dets[i])
                .filter(|d| d.class_id == c)
                .collect();
            if let Some(cap) = params.max_detections {
                cd.truncate(cap);
            }
            let cg: Vec<&Annotation> = image_gt.iter().filter(|a| a.class_id == c).collect();
            if !cd.is_empty() || !cg.is_empty() {
                cells.entry(c).or_default().push(Cell { dets: cd, gts: cg });
            }
        }
    }

    let class_ap = |c: u32, t: f64, range: Option<SizeBucket>| -> Option<f64> {
        let mut hits = Vec::new();
        let mut num_gt = 0;
        for cell in cells.get(&c).map(Vec::as_slice).unwrap_or(&[]) {
            let (status, counted) = match_in_range(&cell.dets, &cell.gts, t, range, params.unmatched);
            num_gt += counted;
            for (d, s) in cell.dets.iter().zip(status) {
                if s != Status::Ignored {
                    hits.push((d.score, s == Status::Tp));
                }
            }
        }
        average_precision(&hits, num_gt)
    };

    let mean = |vals: &[f64]| -> f64 {
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };

    let mut per_class = Vec::new();
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); IOU_THRESHOLDS.len()];
    for &c in &classes {
        let gt_count: usize = cells
            .get(&c)
            .map(|v| v.iter().map(|cell| cell.gts.len()).sum())
            .unwrap_or(0);
        if gt_count == 0 {
            continue;
        }
        let aps: Vec<f64> = IOU_THRESHOLDS
            .iter()
            .map(|&t| class_ap(c, t, None).unwrap_or(0.0))
            .collect();
        for (k, &ap) in aps.iter().enumerate() {
            table[k].push(ap);
        }
        per_class.push(ClassAp {
            class_id: c,
            gt_count,
            ap: mean(&aps),
            ap50: aps[0],
            ap75: aps[5],
        });
    }
    let per_threshold: Vec<f64> = table.iter().filter(|v| !v.is_empty()).map(|v| mean(v)).collect();

    let bucket_map50 = |b: SizeBucket| -> f64 {
        let vals: Vec<f64> = classes
            .iter()
            .filter_map(|&c| class_ap(c, IOU_THRESHOLDS[0], Some(b)))
            .collect();
        mean(&vals)
    };

    let mut gt_per_bucket = [0usize; 3];
    for a in gts.values().flatten() {
        gt_per_bucket[size_bucket(&a.bbox) as usize] += 1;
    }

    let (ips, pixels) = match throughput {
        Some(t) if t.wall_seconds > 0.0 => (t.images as f64 / t.wall_seconds, t.processed_pixels),
        Some(t) => (0.0, t.processed_pixels),
        None => (0.0, 0.0),
    };

    Ok(EvalReport {
        map: mean(&per_threshold),
        map50: mean(&table[0]),
        map75: mean(&table[5]),
        map50_small: bucket_map50(SizeBucket::Small),
        map50_medium: bucket_map50(SizeBucket::Medium),
        map50_large: bucket_map50(SizeBucket::Large),
        per_class,
        gt_per_bucket,
        images_per_second: ips,
        processed_pixels_total: pixels,
    })
}
