//! Independent reference computations used by property and acceptance tests.
//! Written without reusing library internals beyond the geometry types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use asahi_core::geom::iou;
use asahi_core::{Annotation, Detection, SlicePlan};

/// Redundant area measured from the designed window list: per axis, the
/// span from the first window's start to the last window's end minus the
/// image extent, combined as `Rx H + Ry W - Rx Ry`.
pub fn redundancy_from_windows(plan: &SlicePlan) -> f64 {
    let w = plan.source_dims.width as f64;
    let h = plan.source_dims.height as f64;
    let min_x = plan.windows.iter().map(|s| s.designed.x1()).fold(f64::INFINITY, f64::min);
    let max_x = plan.windows.iter().map(|s| s.designed.x2()).fold(f64::NEG_INFINITY, f64::max);
    let min_y = plan.windows.iter().map(|s| s.designed.y1()).fold(f64::INFINITY, f64::min);
    let max_y = plan.windows.iter().map(|s| s.designed.y2()).fold(f64::NEG_INFINITY, f64::max);
    let rx = (max_x - min_x - w).max(0.0);
    let ry = (max_y - min_y - h).max(0.0);
    (rx * h + ry * w - rx * ry).max(0.0)
}

/// Checks that the integer windows stay inside the image and that their
/// union is the whole image. Marks every pixel column touched by the first
/// row and every pixel row touched by the first column, after confirming the
/// grid is a product of column and row spans.
pub fn covers_exactly(plan: &SlicePlan) -> bool {
    let w = plan.source_dims.width;
    let h = plan.source_dims.height;
    let mut cols = vec![false; w as usize];
    let mut rows = vec![false; h as usize];
    for s in &plan.windows {
        let (x1, y1, x2, y2) = s.pixel_bounds();
        if x2 > w || y2 > h || x1 >= x2 || y1 >= y2 {
            return false;
        }
        if s.row == 0 {
            cols[x1 as usize..x2 as usize].iter_mut().for_each(|c| *c = true);
        }
        if s.col == 0 {
            rows[y1 as usize..y2 as usize].iter_mut().for_each(|r| *r = true);
        }
    }
    // the grid is a product of column and row spans
    let same_cols = plan.windows.iter().all(|s| {
        let first = &plan.windows[s.col as usize];
        s.rect.x1() == first.rect.x1() && s.rect.x2() == first.rect.x2()
    });
    let same_rows = plan.windows.iter().all(|s| {
        let first = &plan.windows[(s.row * plan.cols) as usize];
        s.rect.y1() == first.rect.y1() && s.rect.y2() == first.rect.y2()
    });
    same_cols && same_rows && cols.iter().all(|&c| c) && rows.iter().all(|&r| r)
}

/// Greedy matching written out directly. Returns one flag per detection in
/// the order given, which must already be descending by score.
fn mark(dets: &[&Detection], gts: &[&Annotation], t: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::new();
    for d in dets {
        let mut best = -1.0;
        let mut who = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&d.bbox, &gt.bbox);
            if v >= t && v > best {
                best = v;
                who = Some(g);
            }
        }
        if let Some(g) = who {
            taken[g] = true;
        }
        out.push(who.is_some());
    }
    out
}

/// AP as the mean over r in {0, 0.01, ..., 1} of the best precision among
/// all cut-offs reaching recall r, with every prefix evaluated from scratch.
pub fn brute_ap(hits: &[(f64, bool)], num_gt: usize) -> f64 {
    let mut sorted = hits.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let points: Vec<(f64, f64)> = (1..=sorted.len())
        .map(|n| {
            let tp = sorted[..n].iter().filter(|h| h.1).count() as f64;
            (tp / num_gt as f64, tp / n as f64)
        })
        .collect();
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let best = points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteMetrics {
    pub map: f64,
    pub map50: f64,
    pub map75: f64,
}

/// All-area mAP figures for a multi-image, multi-class instance. Scores are
/// assumed distinct.
pub fn brute_eval(
    gts: &BTreeMap<u64, Vec<Annotation>>,
    dets: &BTreeMap<u64, Vec<Detection>>,
) -> BruteMetrics {
    let classes: BTreeSet<u32> = gts.values().flatten().map(|a| a.class_id).collect();
    let thresholds: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    let mut per_t = Vec::new();
    for &t in &thresholds {
        let mut aps = Vec::new();
        for &c in &classes {
            let mut hits = Vec::new();
            let mut n = 0;
            for (id, image_gts) in gts {
                let g: Vec<&Annotation> = image_gts.iter().filter(|a| a.class_id == c).collect();
                n += g.len();
                let mut d: Vec<&Detection> = dets
                    .get(id)
                    .map(|v| v.iter().filter(|d| d.class_id == c).collect())
                    .unwrap_or_default();
                d.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
                let flags = mark(&d, &g, t);
                hits.extend(d.iter().zip(flags).map(|(d, f)| (d.score, f)));
            }
            aps.push(brute_ap(&hits, n));
        }
        per_t.push(if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 });
    }
    BruteMetrics {
        map: per_t.iter().sum::<f64>() / per_t.len() as f64,
        map50: per_t[0],
        map75: per_t[5],
    }
}
