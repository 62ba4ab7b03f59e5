//! Strategy comparison over seeded synthetic scenes with the oracle detector.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use asahi_core::detector::OracleParams;
use asahi_core::eval::{evaluate, EvalParams, Throughput};
use asahi_core::fusion::{PipelineConfig, SliceStrategy};
use asahi_core::nms::Suppressor;
use asahi_core::scenegen::{generate, SceneSpec};
use asahi_core::{AsahiConfig, ImageDims, Slicer};

use crate::detector::OracleDetector;
use crate::pipeline::{run_pipeline, ImageInput, PipelineError, RunOptions};
use crate::report::{fixed, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchStrategy {
    Asahi,
    /// Fixed grid with this many slices.
    Grid(u32),
    /// Fixed square patches of this size.
    Sahi(u32),
}

impl BenchStrategy {
    /// The default comparison set.
    pub const DEFAULT: [BenchStrategy; 6] = [
        BenchStrategy::Asahi,
        BenchStrategy::Grid(4),
        BenchStrategy::Grid(6),
        BenchStrategy::Grid(12),
        BenchStrategy::Grid(15),
        BenchStrategy::Sahi(512),
    ];

    fn slice_strategy(self) -> SliceStrategy {
        match self {
            BenchStrategy::Asahi => SliceStrategy::Asahi,
            BenchStrategy::Sahi(patch) => SliceStrategy::Fixed { patch },
            BenchStrategy::Grid(n) => match Slicer::grid_of(n, 0.0) {
                Some(Slicer::Grid { major, minor, .. }) => SliceStrategy::Grid { major, minor },
                _ => unreachable!("grid counts are checked when parsed"),
            },
        }
    }
}

impl fmt::Display for BenchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchStrategy::Asahi => f.write_str("asahi"),
            BenchStrategy::Grid(n) => write!(f, "grid-{n}"),
            BenchStrategy::Sahi(p) => write!(f, "sahi-{p}"),
        }
    }
}

impl FromStr for BenchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown strategy `{s}` (expected asahi, grid-N or sahi-P)");
        if s == "asahi" {
            return Ok(BenchStrategy::Asahi);
        }
        if let Some(n) = s.strip_prefix("grid-") {
            let n: u32 = n.parse().map_err(|_| bad())?;
            return match Slicer::grid_of(n, 0.0) {
                Some(_) => Ok(BenchStrategy::Grid(n)),
                None => Err(format!("no grid layout for {n} slices")),
            };
        }
        if let Some(p) = s.strip_prefix("sahi-") {
            let p: u32 = p.parse().map_err(|_| bad())?;
            if p == 0 {
                return Err("patch size must be at least 1".into());
            }
            return Ok(BenchStrategy::Sahi(p));
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub resolutions: Vec<ImageDims>,
    pub strategies: Vec<BenchStrategy>,
    pub scenes: usize,
    pub objects: usize,
    pub seed: u64,
    pub asahi: AsahiConfig,
    pub suppressor: Suppressor,
    pub oracle: OracleParams,
    pub parallelism: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        let scene = SceneSpec::default();
        Self {
            resolutions: asahi_core::redundancy::BENCH_RESOLUTIONS
                .iter()
                .map(|&(w, h)| ImageDims { width: w, height: h })
                .collect(),
            strategies: BenchStrategy::DEFAULT.to_vec(),
            scenes: 3,
            objects: scene.object_count,
            seed: 0,
            asahi: AsahiConfig::default(),
            suppressor: Suppressor::default(),
            oracle: OracleParams {
                class_count: scene.class_count,
                ..OracleParams::default()
            },
            parallelism: RunOptions::default().parallelism,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dims: ImageDims,
    pub strategy: BenchStrategy,
    pub slices: usize,
    pub detector_calls: usize,
    /// Per image: full-inference area plus the slice grid's processed area.
    pub processed_pixels: f64,
    pub wall_seconds: f64,
    pub images_per_second: f64,
    pub map: f64,
    pub map50: f64,
    pub map50_small: f64,
}

fn scene_spec(dims: ImageDims, index: usize, opts: &BenchOptions) -> SceneSpec {
    let d = SceneSpec::default();
    let short = dims.width.min(dims.height) as f64;
    SceneSpec {
        seed: opts.seed.wrapping_add(index as u64),
        dims,
        object_count: opts.objects,
        class_count: opts.oracle.class_count,
        max_edge: d.max_edge.min(short),
        min_edge: d.min_edge.min(short),
        ..d
    }
}

/// One row per (resolution, strategy), resolutions outer.
pub fn run_bench(opts: &BenchOptions) -> Result<Vec<BenchRow>, PipelineError> {
    let mut rows = Vec::new();
    let run = RunOptions {
        parallelism: opts.parallelism,
    };
    for &dims in &opts.resolutions {
        let mut gts = BTreeMap::new();
        for i in 0..opts.scenes {
            let scene = generate(&scene_spec(dims, i, opts)).expect("bench scene specs are valid");
            gts.insert(i as u64, scene.annotations);
        }
        let oracle = OracleDetector::new(opts.oracle, gts.clone());
        for &strategy in &opts.strategies {
            let cfg = PipelineConfig {
                asahi: opts.asahi,
                strategy: strategy.slice_strategy(),
                suppressor: opts.suppressor,
                ..PipelineConfig::default()
            };
            let mut dets = BTreeMap::new();
            let mut processed = 0.0;
            let mut slices = 0;
            let mut calls = 0;
            let start = Instant::now();
            for &id in gts.keys() {
                let input = ImageInput {
                    image_id: id,
                    dims,
                    raster: None,
                };
                let r = run_pipeline(&input, &oracle, &cfg, &run)?;
                processed = r.processed_pixels;
                slices = r.slices;
                calls = r.counts.detector_calls;
                dets.insert(id, r.detections);
            }
            let wall = start.elapsed().as_secs_f64();
            let report = evaluate(
                &gts,
                &dets,
                &EvalParams::default(),
                Some(Throughput {
                    images: gts.len(),
                    wall_seconds: wall,
                    processed_pixels: processed * gts.len() as f64,
                }),
            )
            .expect("detections only cover generated images");
            rows.push(BenchRow {
                dims,
                strategy,
                slices,
                detector_calls: calls,
                processed_pixels: processed,
                wall_seconds: wall,
                images_per_second: report.images_per_second,
                map: report.map,
                map50: report.map50,
                map50_small: report.map50_small,
            });
        }
    }
    Ok(rows)
}

/// Processed-pixel saving of `row` relative to the `baseline` row at the
/// same resolution.
pub fn saving_vs(rows: &[BenchRow], row: &BenchRow, baseline: BenchStrategy) -> Option<f64> {
    rows.iter()
        .find(|r| r.dims == row.dims && r.strategy == baseline)
        .map(|b| 1.0 - row.processed_pixels / b.processed_pixels)
}

pub fn bench_table(rows: &[BenchRow]) -> Table {
    let mut t = Table::new([
        "resolution",
        "strategy",
        "slices",
        "calls",
        "processed_px",
        "saving_vs_sahi512",
        "wall_s",
        "img_per_s",
        "map",
        "map50",
        "map50_s",
    ]);
    for r in rows {
        let saving = saving_vs(rows, r, BenchStrategy::Sahi(512))
            .map(|s| fixed(100.0 * s, 2) + "%")
            .unwrap_or_else(|| "-".into());
        t.push([
            r.dims.to_string(),
            r.strategy.to_string(),
            r.slices.to_string(),
            r.detector_calls.to_string(),
            fixed(r.processed_pixels, 0),
            saving,
            fixed(r.wall_seconds, 4),
            fixed(r.images_per_second, 2),
            fixed(r.map, 4),
            fixed(r.map50, 4),
            fixed(r.map50_small, 4),
        ]);
    }
    t
}
