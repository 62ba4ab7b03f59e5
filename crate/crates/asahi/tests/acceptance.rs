//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Every criterion has a wall-clock budget; going over it is a failure even
//! when the checks themselves hold.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use asahi::bench::{run_bench, saving_vs, BenchOptions, BenchStrategy};
use asahi::coco::{CocoAnnotation, CocoDataset, CocoImage};
use asahi::detector::OracleDetector;
use asahi::pipeline::{run_pipeline, ImageInput, RunOptions};
use asahi::saf_io::{build_saf, verify_saf, SafIoError, SafOptions};
use asahi_core::detector::{oracle_detect, OracleParams, OracleWindow};
use asahi_core::eval::{evaluate, size_bucket, EvalParams, SizeBucket};
use asahi_core::fusion::{remap_full, PipelineConfig};
use asahi_core::geom::{diou, iou};
use asahi_core::nms::{cdn, cluster_suppress_stats, greedy_suppress};
use asahi_core::redundancy::{analyze_plan, reduction_table, BENCH_RESOLUTIONS};
use asahi_core::saf::{SafSource, DEFAULT_MIN_VISIBILITY};
use asahi_core::scenegen::{generate, render, SceneSpec};
use asahi_core::slicing::{asahi_cutoff, asahi_plan, fixed_plan, patch_geometry};
use asahi_core::{
    Annotation, AsahiConfig, BBox, Detection, ImageDims, Origin, OverlapMetric, Slicer, SuppressionConfig,
};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn dims(w: u32, h: u32) -> ImageDims {
    ImageDims::new(w, h).unwrap()
}

fn bench_dims() -> Vec<ImageDims> {
    BENCH_RESOLUTIONS.iter().map(|&(w, h)| dims(w, h)).collect()
}

/// Threshold at the default settings.
fn c1() -> Outcome {
    let cfg = AsahiConfig::default();
    let t = asahi_cutoff(&cfg);
    check(t == 1818, || format!("cutoff {t}, want 1818"))?;
    Ok(format!("cutoff {t} at overlap {} limit {}", cfg.overlap_ratio, cfg.limiting_dimension))
}

fn c2() -> Outcome {
    let cfg = AsahiConfig::default();
    let counts: Vec<usize> = bench_dims()
        .iter()
        .map(|&d| asahi_plan(d, &cfg).map(|p| p.len()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    check(counts == [6, 6, 6, 12, 12, 12], || format!("slice counts {counts:?}"))?;
    Ok(format!("slice counts {counts:?}"))
}

const OVERLAPS: [f64; 4] = [0.0, 0.1, 0.15, 0.3];

/// Fuzzed plans shared by the coverage and redundancy criteria.
fn fuzz_plans(n: usize) -> impl Iterator<Item = (ImageDims, f64)> {
    let mut r = rng(0xC3);
    (0..n).map(move |_| {
        let d = dims(r.random_range(64..=4096), r.random_range(64..=4096));
        (d, OVERLAPS[r.random_range(0..OVERLAPS.len())])
    })
}

fn c3() -> Outcome {
    let mut worst = 0.0f64;
    for (d, mu) in fuzz_plans(10_000) {
        let cfg = AsahiConfig::new(mu, 512, 512).map_err(|e| e.to_string())?;
        let plan = asahi_plan(d, &cfg).map_err(|e| format!("{d} mu {mu}: {e}"))?;
        check(plan.len() == 6 || plan.len() == 12, || format!("{d} mu {mu}: {} slices", plan.len()))?;
        check(oracles::covers_exactly(&plan), || format!("{d} mu {mu}: coverage"))?;
        let (rows, cols) = (plan.rows as usize, plan.cols as usize);
        let w = &plan.windows;
        for r in 0..rows {
            for c in 1..cols {
                let (a, b) = (&w[r * cols + c - 1], &w[r * cols + c]);
                let err = ((a.rect.x2() - b.rect.x1()) - mu * plan.edge_x).abs();
                worst = worst.max(err);
                check(err <= 2.0, || format!("{d} mu {mu}: x overlap off by {err:.2}"))?;
            }
        }
        for r in 1..rows {
            let (a, b) = (&w[(r - 1) * cols], &w[r * cols]);
            let err = ((a.rect.y2() - b.rect.y1()) - mu * plan.edge_y).abs();
            worst = worst.max(err);
            check(err <= 2.0, || format!("{d} mu {mu}: y overlap off by {err:.2}"))?;
        }
    }
    Ok(format!("10000 plans cover exactly, worst overlap error {worst:.3} px"))
}

/// Reduction figures quoted for the six default resolutions, percent.
const REFERENCE_REDUCTION: [f64; 6] = [38.72, 2.56, 25.61, 25.92, 24.13, 6.99];

fn c4() -> Outcome {
    let mut worst = 0.0f64;
    for (d, mu) in fuzz_plans(10_000) {
        let cfg = AsahiConfig::new(mu, 512, 512).map_err(|e| e.to_string())?;
        for plan in [asahi_plan(d, &cfg), fixed_plan(d, 512, mu)] {
            let plan = plan.map_err(|e| e.to_string())?;
            let closed = analyze_plan(&plan).sr;
            let measured = oracles::redundancy_from_windows(&plan);
            let err = (closed - measured).abs();
            worst = worst.max(err);
            check(err <= 1.0, || format!("{d} mu {mu} {}: closed {closed} vs {measured}", plan.strategy))?;
        }
    }
    let rows = reduction_table(&bench_dims(), &AsahiConfig::default(), 512).map_err(|e| e.to_string())?;
    let mut deltas = Vec::new();
    for (row, reference) in rows.iter().zip(REFERENCE_REDUCTION) {
        check(row.reduction >= 0.0, || format!("{}: reduction {}", row.dims, row.reduction))?;
        check(row.asahi.total <= row.sahi.total, || format!("{}: asahi total above baseline", row.dims))?;
        let pct = 100.0 * row.reduction;
        deltas.push(format!("{} {pct:.2}% (ref {reference:.2}, {:+.2})", row.dims, pct - reference));
    }
    Ok(format!("closed form within {worst:.2e} px^2; {}", deltas.join("; ")))
}

fn random_detections(r: &mut Xoshiro256PlusPlus) -> Vec<Detection> {
    let n = r.random_range(0..=200);
    // a small canvas keeps the overlap graph dense
    let side = r.random_range(50.0..400.0);
    (0..n)
        .map(|_| {
            let w = r.random_range(2.0..80.0);
            let h = r.random_range(2.0..80.0);
            let x = r.random_range(0.0..side);
            let y = r.random_range(0.0..side);
            Detection::new(
                r.random_range(0..4),
                r.random_range(0.0..1.0),
                BBox::from_xywh(x, y, w, h).unwrap(),
                Origin::FullInference,
            )
        })
        .collect()
}

fn key_set(v: &[Detection]) -> Vec<(u64, u32, [u64; 4])> {
    let mut k: Vec<_> = v
        .iter()
        .map(|d| (d.score.to_bits(), d.class_id, d.bbox.corners().map(f64::to_bits)))
        .collect();
    k.sort();
    k
}

fn c5() -> Outcome {
    let mut r = rng(0xC5);
    let mut max_rounds = 0;
    for i in 0..1000 {
        let dets = random_detections(&mut r);
        let cfg = SuppressionConfig::new(
            OverlapMetric::ALL[i % 4],
            [0.3, 0.5, 0.7][(i / 4) % 3],
            r.random_bool(0.5),
        )
        .map_err(|e| e.to_string())?;
        let g = greedy_suppress(&dets, &cfg);
        let c = cluster_suppress_stats(&dets, &cfg);
        check(key_set(&g) == key_set(&c.kept), || format!("instance {i}: kept sets differ"))?;
        check(c.iterations <= dets.len().max(1), || format!("instance {i}: {} rounds", c.iterations))?;
        max_rounds = max_rounds.max(c.iterations);
    }
    Ok(format!("1000 instances agree, at most {max_rounds} rounds"))
}

fn c6() -> Outcome {
    // The stated pair (IoU 0.6 with DIoU 0.45) cannot occur: above IoU 0.5
    // the centre penalty is at most ((1 - IoU) / 2)^2. Same-row boxes offset
    // by 30 px straddle the threshold the same way.
    let a = Detection::new(0, 0.9, BBox::new(0.0, 0.0, 100.0, 10.0).unwrap(), Origin::FullInference);
    let b = Detection::new(0, 0.8, BBox::new(30.0, 0.0, 130.0, 10.0).unwrap(), Origin::FullInference);
    let (i, d) = (iou(&a.bbox, &b.bbox), diou(&a.bbox, &b.bbox));
    check(i > 0.5 && d < 0.5, || format!("fixture IoU {i}, DIoU {d}"))?;
    let greedy = SuppressionConfig {
        metric: OverlapMetric::Iou,
        ..SuppressionConfig::CDN
    };
    let kept_iou = greedy_suppress(&[a, b], &greedy).len();
    let kept_cdn = cdn(&[a, b]).len();
    check(kept_iou == 1 && kept_cdn == 2, || format!("IoU NMS kept {kept_iou}, CDN kept {kept_cdn}"))?;
    Ok(format!(
        "IoU {i:.4} DIoU {d:.4}: IoU NMS keeps 1, CDN keeps 2 (stated pair is infeasible, substitute used)"
    ))
}

type Instance = (BTreeMap<u64, Vec<Annotation>>, BTreeMap<u64, Vec<Detection>>);

fn eval_instance(r: &mut Xoshiro256PlusPlus) -> Instance {
    let mut gts: BTreeMap<u64, Vec<Annotation>> = (0..3).map(|i| (i, Vec::new())).collect();
    let mut flat = Vec::new();
    for _ in 0..r.random_range(0..=20) {
        let img = r.random_range(0..3u64);
        let bbox = BBox::from_xywh(
            r.random_range(0.0..150.0),
            r.random_range(0.0..150.0),
            r.random_range(3.0..60.0),
            r.random_range(3.0..60.0),
        )
        .unwrap();
        let a = Annotation {
            class_id: r.random_range(0..3),
            bbox,
        };
        gts.get_mut(&img).unwrap().push(a);
        flat.push((img, a));
    }
    let mut dets: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for k in 0..r.random_range(0..=50) {
        let score = 0.999 - k as f64 * 0.013;
        let (img, class_id, bbox) = if flat.is_empty() || r.random_bool(0.4) {
            let b = BBox::from_xywh(
                r.random_range(0.0..150.0),
                r.random_range(0.0..150.0),
                r.random_range(3.0..60.0),
                r.random_range(3.0..60.0),
            )
            .unwrap();
            (r.random_range(0..3u64), r.random_range(0..3), b)
        } else {
            let (img, a) = flat[r.random_range(0..flat.len())];
            let s = r.random_range(0.7..1.3);
            let b = BBox::from_xywh(
                a.bbox.x1() + r.random_range(-6.0..6.0),
                a.bbox.y1() + r.random_range(-6.0..6.0),
                a.bbox.width() * s,
                a.bbox.height() * s,
            )
            .unwrap();
            (img, a.class_id, b)
        };
        dets.entry(img)
            .or_default()
            .push(Detection::new(class_id, score, bbox, Origin::FullInference));
    }
    (gts, dets)
}

fn c7() -> Outcome {
    let mut r = rng(0xC7);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let (g, d) = eval_instance(&mut r);
        let got = evaluate(&g, &d, &EvalParams::default(), None).map_err(|e| e.to_string())?;
        let want = oracles::brute_eval(&g, &d);
        for (x, y) in [(got.map, want.map), (got.map50, want.map50), (got.map75, want.map75)] {
            worst = worst.max((x - y).abs());
            check((x - y).abs() <= 1e-9, || format!("instance {i}: {x} vs {y}"))?;
        }
    }

    let b = |x: f64, y: f64, w: f64, h: f64| BBox::from_xywh(x, y, w, h).unwrap();
    let gt = |bb: BBox| Annotation { class_id: 0, bbox: bb };
    let det = |s: f64, bb: BBox| Detection::new(0, s, bb, Origin::FullInference);
    let g: BTreeMap<u64, Vec<Annotation>> = [(1, vec![gt(b(0.0, 0.0, 20.0, 20.0)), gt(b(50.0, 50.0, 20.0, 20.0))])].into();

    let perfect: BTreeMap<u64, Vec<Detection>> =
        [(1, vec![det(0.9, b(0.0, 0.0, 20.0, 20.0)), det(0.8, b(50.0, 50.0, 20.0, 20.0))])].into();
    let p = evaluate(&g, &perfect, &EvalParams::default(), None).map_err(|e| e.to_string())?;
    check(p.map == 1.0 && p.map50 == 1.0, || format!("perfect detections give {}", p.map))?;

    // one true positive then one false positive against two objects: the
    // precision envelope is 1 on 51 of the 101 recall points, 0 after
    let mixed: BTreeMap<u64, Vec<Detection>> =
        [(1, vec![det(0.9, b(0.0, 0.0, 20.0, 20.0)), det(0.8, b(200.0, 200.0, 20.0, 20.0))])].into();
    let m = evaluate(&g, &mixed, &EvalParams::default(), None).map_err(|e| e.to_string())?;
    check((m.map50 - 51.0 / 101.0).abs() < 1e-12, || format!("one TP one FP gives {}", m.map50))?;

    let buckets = [
        size_bucket(&b(0.0, 0.0, 31.0, 31.0)),
        size_bucket(&b(0.0, 0.0, 32.0, 32.0)),
        size_bucket(&b(0.0, 0.0, 100.0, 100.0)),
    ];
    check(buckets == [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large], || {
        format!("buckets {buckets:?}")
    })?;
    Ok(format!(
        "500 instances match brute force (worst {worst:.1e}); TP+FP AP {:.4} = 51/101 (stated 0.5)",
        m.map50
    ))
}

fn c8() -> Outcome {
    let oracle_params = OracleParams {
        class_count: SceneSpec::default().class_count,
        ..OracleParams::default()
    };
    let mut gts = BTreeMap::new();
    for seed in 0..50u64 {
        gts.insert(seed, generate(&SceneSpec { seed, ..SceneSpec::default() }).unwrap().annotations);
    }
    let d = SceneSpec::default().dims;
    let cfg = PipelineConfig::default();
    let detector = OracleDetector::new(oracle_params, gts.clone());
    let opts = RunOptions::default();
    let mut sliced = BTreeMap::new();
    let mut full_only = BTreeMap::new();
    let g = patch_geometry(d.width, d.height, cfg.asahi.resize_target);
    for (&id, gt) in &gts {
        let input = ImageInput {
            image_id: id,
            dims: d,
            raster: None,
        };
        let r = run_pipeline(&input, &detector, &cfg, &opts).map_err(|e| e.to_string())?;
        sliced.insert(id, r.detections);

        let window = OracleWindow {
            image_id: id,
            rect: d.frame(),
            scale_x: g.scale_x,
            scale_y: g.scale_y,
        };
        let raw = oracle_detect(gt, &oracle_params, &window).map_err(|e| e.to_string())?;
        let back = remap_full(&raw, d, g.scale_x, g.scale_y).map_err(|e| e.to_string())?;
        full_only.insert(id, cdn(&back.detections));
    }
    let a = evaluate(&gts, &sliced, &EvalParams::default(), None).map_err(|e| e.to_string())?;
    let f = evaluate(&gts, &full_only, &EvalParams::default(), None).map_err(|e| e.to_string())?;
    check(a.map50_small >= 0.95, || format!("sliced small AP50 {:.4}", a.map50_small))?;
    check(f.map50_small <= 0.30, || format!("whole-image small AP50 {:.4}", f.map50_small))?;
    Ok(format!(
        "small AP50 sliced {:.4}, whole image only {:.4} over 50 scenes ({} small objects)",
        a.map50_small, f.map50_small, a.gt_per_bucket[0]
    ))
}

fn c9() -> Outcome {
    let opts = BenchOptions {
        strategies: vec![BenchStrategy::Asahi, BenchStrategy::Sahi(512)],
        ..BenchOptions::default()
    };
    let rows = run_bench(&opts).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for row in rows.iter().filter(|r| r.strategy == BenchStrategy::Asahi) {
        let s = saving_vs(&rows, row, BenchStrategy::Sahi(512)).ok_or("missing baseline row")?;
        check((0.05..=0.40).contains(&s), || format!("{}: saving {:.2}%", row.dims, 100.0 * s))?;
        parts.push(format!("{} {:.1}%", row.dims, 100.0 * s));
    }
    check(parts.len() == 6, || format!("{} resolutions", parts.len()))?;
    Ok(format!("processed-pixel saving {}", parts.join(", ")))
}

fn c10() -> Outcome {
    let sizes = [(640, 480), (960, 540), (1920, 1080), (1200, 1600), (2000, 1500)];
    let mut dataset = CocoDataset {
        categories: CocoDataset::categories_for(5),
        ..CocoDataset::default()
    };
    let mut scenes = BTreeMap::new();
    let mut next_ann = 1;
    for i in 0..20u64 {
        let (w, h) = sizes[i as usize % sizes.len()];
        let spec = SceneSpec {
            seed: 100 + i,
            dims: dims(w, h),
            object_count: 40,
            ..SceneSpec::default()
        };
        let scene = generate(&spec).map_err(|e| e.to_string())?;
        let id = i + 1;
        dataset.images.push(CocoImage::new(id, format!("scene_{id:06}.ppm"), w, h));
        for a in &scene.annotations {
            dataset
                .annotations
                .push(CocoAnnotation::from_box(next_ann, id, a.class_id, &a.bbox));
            next_ann += 1;
        }
        scenes.insert(id, scene);
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let slicer = Slicer::Asahi(AsahiConfig::default());
    let opts = SafOptions {
        slicer,
        min_visibility: DEFAULT_MIN_VISIBILITY,
        target: 512,
    };
    let load = |img: &CocoImage| -> Result<_, SafIoError> { Ok(render(&scenes[&img.id])) };
    let summary = build_saf(&dataset, load, dir.path(), &opts).map_err(|e| e.to_string())?;

    let gts = dataset.ground_truth().map_err(|e| e.to_string())?;
    for img in &dataset.images {
        let d = img.dims().unwrap();
        let plan = slicer.plan(d).map_err(|e| e.to_string())?;
        let recs: Vec<_> = summary.records.iter().filter(|r| r.record.image_id == img.id).collect();
        check(recs.len() == 1 + plan.len() && (plan.len() == 6 || plan.len() == 12), || {
            format!("image {}: {} records", img.id, recs.len())
        })?;
        // every object visible enough in some window appears in some slice record
        for (k, g) in gts[&img.id].iter().enumerate() {
            let best = plan
                .windows
                .iter()
                .filter_map(|w| g.bbox.intersect(&w.rect).map(|c| c.area() / g.bbox.area()))
                .fold(0.0, f64::max);
            if best < DEFAULT_MIN_VISIBILITY {
                continue;
            }
            let found = recs.iter().any(|r| {
                matches!(r.record.source, SafSource::Window(_))
                    && r.record.annotations.iter().any(|a| a.source_index == k)
            });
            check(found, || format!("image {} object {k} (visibility {best:.2}) lost", img.id))?;
        }
    }
    let violations = verify_saf(dir.path(), DEFAULT_MIN_VISIBILITY).map_err(|e| e.to_string())?;
    check(violations.is_empty(), || format!("{} violations, first {}", violations.len(), violations[0]))?;
    Ok(format!(
        "20 images, {} records, {} annotations, no violations, nothing lost",
        summary.records.len(),
        summary.annotations
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_asahi"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("asahi {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn detect_run(input: &Path, output: &Path, parallelism: &str) -> Result<Vec<u8>, String> {
    let summary = output.with_extension("summary");
    cli(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
        "--jitter",
        "1.5",
        "--miss-rate",
        "0.1",
        "--fp-rate",
        "2",
        "--seed",
        "17",
        "--parallelism",
        parallelism,
    ])?;
    std::fs::read(output).map_err(|e| e.to_string())
}

fn c11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenes = dir.path().join("scenes");
    cli(&["scenegen", "--out", scenes.to_str().unwrap(), "--count", "4", "--seed", "3"])?;
    let a = detect_run(&scenes, &dir.path().join("a.txt"), "64")?;
    let b = detect_run(&scenes, &dir.path().join("b.txt"), "64")?;
    let c = detect_run(&scenes, &dir.path().join("c.txt"), "1")?;
    check(!a.is_empty(), || "no detections written".into())?;
    check(a == b, || "two identical runs differ".into())?;
    check(a == c, || "parallelism 64 and 1 differ".into())?;
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    Ok(format!("{lines} records byte-identical across 3 runs (parallelism 64, 64, 1)"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria: [Criterion; 11] = [
        ("C1", Duration::from_millis(1), c1),
        ("C2", secs(1), c2),
        ("C3", secs(30), c3),
        ("C4", secs(5), c4),
        ("C5", secs(30), c5),
        ("C6", secs(1), c6),
        ("C7", secs(10), c7),
        ("C8", secs(120), c8),
        ("C9", secs(60), c9),
        ("C10", secs(30), c10),
        ("C11", secs(60), c11),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > budget => Err(format!("took {took:.2?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(msg) => println!("{name} PASS  {msg} ({took:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("{name} FAIL  {msg} ({took:.2?})");
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
