//! Redundant processed area of a slice grid and the reduction of one grid
//! relative to another.
//!
//! For a grid with `a` columns of designed width `e_x` and `b` rows of
//! designed height `e_y` at overlap `mu`:
//!
//! ```text
//! a  = ceil((W - e_x mu) / (e_x (1 - mu)))
//! Rx = a e_x - mu e_x (a - 1) - W            (clamped at 0)
//! Sr = Rx H + Ry W - Rx Ry                   (clamped at 0)
//! ```
//!
//! and the processed total is `Sr + W H`.

use alloc::vec::Vec;

use crate::geom::ImageDims;
use crate::math;
use crate::slicing::{asahi_plan, fixed_plan, AsahiConfig, SlicePlan, SlicingError};

/// Image resolutions the redundancy table and benchmark default to.
pub const BENCH_RESOLUTIONS: [(u32, u32); 6] = [
    (960, 540),
    (1360, 765),
    (1400, 1050),
    (1920, 1080),
    (2000, 1500),
    (2913, 2428),
];

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum RedundancyError {
    #[error("reports describe different images (Sa {left} vs {right})")]
    MismatchedArea { left: f64, right: f64 },
}

/// Designed grid geometry the closed form needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub edge_x: f64,
    pub edge_y: f64,
    pub overlap: f64,
}

impl GridGeometry {
    pub fn square(patch: f64, overlap: f64) -> Self {
        Self {
            edge_x: patch,
            edge_y: patch,
            overlap,
        }
    }
}

impl From<&SlicePlan> for GridGeometry {
    fn from(plan: &SlicePlan) -> Self {
        Self {
            edge_x: plan.edge_x,
            edge_y: plan.edge_y,
            overlap: plan.overlap_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedundancyReport {
    /// Slices along the horizontal axis.
    pub a: u32,
    /// Slices along the vertical axis.
    pub b: u32,
    pub rx: f64,
    pub ry: f64,
    /// Redundant area, px².
    pub sr: f64,
    /// Image area, px².
    pub sa: f64,
    /// `sr + sa`.
    pub total: f64,
}

fn axis_count(extent: f64, edge: f64, mu: f64) -> u32 {
    let n = math::ceil((extent - edge * mu) / (edge * (1.0 - mu)));
    if n < 1.0 {
        1
    } else {
        n as u32
    }
}

fn overrun(count: u32, edge: f64, mu: f64, extent: f64) -> f64 {
    let n = count as f64;
    (n * edge - mu * edge * (n - 1.0) - extent).max(0.0)
}

pub fn analyze(dims: ImageDims, grid: GridGeometry) -> RedundancyReport {
    let w = dims.width as f64;
    let h = dims.height as f64;
    let a = axis_count(w, grid.edge_x, grid.overlap);
    let b = axis_count(h, grid.edge_y, grid.overlap);
    let rx = overrun(a, grid.edge_x, grid.overlap, w);
    let ry = overrun(b, grid.edge_y, grid.overlap, h);
    let sr = (rx * h + ry * w - rx * ry).max(0.0);
    let sa = w * h;
    RedundancyReport {
        a,
        b,
        rx,
        ry,
        sr,
        sa,
        total: sr + sa,
    }
}

pub fn analyze_plan(plan: &SlicePlan) -> RedundancyReport {
    analyze(plan.source_dims, GridGeometry::from(plan))
}

/// `1 - (Sr_asahi + Sa) / (Sr_sahi + Sa)`.
pub fn reduction_rate(
    asahi: &RedundancyReport,
    sahi: &RedundancyReport,
) -> Result<f64, RedundancyError> {
    if asahi.sa != sahi.sa {
        return Err(RedundancyError::MismatchedArea {
            left: asahi.sa,
            right: sahi.sa,
        });
    }
    Ok(1.0 - (asahi.sr + asahi.sa) / (sahi.sr + sahi.sa))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionRow {
    pub dims: ImageDims,
    pub asahi: RedundancyReport,
    pub sahi: RedundancyReport,
    pub asahi_slices: usize,
    pub sahi_slices: usize,
    pub reduction: f64,
}

/// Adaptive plan vs. `patch x patch` baseline for each resolution, in input order.
pub fn reduction_table(
    resolutions: &[ImageDims],
    cfg: &AsahiConfig,
    patch: u32,
) -> Result<Vec<ReductionRow>, SlicingError> {
    resolutions
        .iter()
        .map(|&dims| {
            let ap = asahi_plan(dims, cfg)?;
            let sp = fixed_plan(dims, patch, cfg.overlap_ratio)?;
            let asahi = analyze_plan(&ap);
            let sahi = analyze_plan(&sp);
            let reduction = reduction_rate(&asahi, &sahi).expect("same image on both sides");
            Ok(ReductionRow {
                dims,
                asahi,
                sahi,
                asahi_slices: ap.len(),
                sahi_slices: sp.len(),
                reduction,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(w: u32, h: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    #[test]
    fn sahi_960x540() {
        let r = analyze(dims(960, 540), GridGeometry::square(512.0, 0.15));
        assert_eq!((r.a, r.b), (3, 2));
        assert!((r.rx - 422.4).abs() < 1e-9);
        assert!((r.ry - 407.2).abs() < 1e-9);
        assert!((r.sr - 447_006.72).abs() < 1e-6);
        assert_eq!(r.sa, 518_400.0);
        assert_eq!(r.total, r.sr + r.sa);
    }

    #[test]
    fn exact_tiling_has_no_overrun() {
        // 3 windows of 100 px at mu = 0.2 span exactly 100 * 3 - 20 * 2 = 260 px
        let r = analyze(dims(260, 180), GridGeometry::square(100.0, 0.2));
        assert_eq!((r.a, r.b), (3, 2));
        assert!(r.rx.abs() < 1e-9);
        assert!(r.ry.abs() < 1e-9);
        assert!(r.sr.abs() < 1e-6);
    }

    #[test]
    fn sahi_1400x1050_matches_substitution() {
        let r = analyze(dims(1400, 1050), GridGeometry::square(512.0, 0.15));
        // a = ceil((1400 - 76.8) / 435.2) = 4, b = ceil((1050 - 76.8) / 435.2) = 3
        assert_eq!((r.a, r.b), (4, 3));
        let rx = 4.0 * 512.0 - 0.15 * 512.0 * 3.0 - 1400.0;
        let ry = 3.0 * 512.0 - 0.15 * 512.0 * 2.0 - 1050.0;
        assert!((r.rx - rx).abs() < 1e-9 && (r.ry - ry).abs() < 1e-9);
        assert!((r.sr - (rx * 1050.0 + ry * 1400.0 - rx * ry)).abs() < 1e-6);
    }

    #[test]
    fn reduction_rate_examples() {
        let r = analyze(dims(960, 540), GridGeometry::square(512.0, 0.15));
        assert_eq!(reduction_rate(&r, &r).unwrap(), 0.0);

        let zero = RedundancyReport {
            a: 1,
            b: 1,
            rx: 0.0,
            ry: 0.0,
            sr: 0.0,
            sa: 100.0,
            total: 100.0,
        };
        let double = RedundancyReport {
            sr: 100.0,
            total: 200.0,
            ..zero
        };
        assert_eq!(reduction_rate(&zero, &double).unwrap(), 0.5);

        let other = RedundancyReport { sa: 99.0, ..zero };
        assert!(reduction_rate(&zero, &other).is_err());
    }

    #[test]
    fn reduction_positive_for_960x540() {
        let rows = reduction_table(&[dims(960, 540)], &AsahiConfig::default(), 512).unwrap();
        assert!(rows[0].reduction > 0.0);
    }

    #[test]
    fn table_edge_cases() {
        assert!(reduction_table(&[], &AsahiConfig::default(), 512).unwrap().is_empty());
        let d = dims(1360, 765);
        let rows = reduction_table(&[d, d], &AsahiConfig::default(), 512).unwrap();
        assert_eq!(rows[0], rows[1]);
    }

    #[test]
    fn degenerate_overrun_clamps() {
        // patch far larger than a tiny image: raw Sr goes negative
        let r = analyze(dims(100, 100), GridGeometry::square(512.0, 0.15));
        assert!(r.sr >= 0.0);
        assert!(r.total >= r.sa);
    }
}
