use asahi_core::nms::{
    cdn, cluster_suppress, cluster_suppress_stats, greedy_suppress, soft_suppress, wbf,
    SOFT_NMS_SCORE_FLOOR,
};
use asahi_core::{BBox, Detection, Origin, OverlapMetric, SuppressionConfig};
use proptest::prelude::*;

fn detection() -> impl Strategy<Value = Detection> {
    (0u32..3, 0.0..1.0f64, 0.0..200.0f64, 0.0..200.0f64, 2.0..60.0f64, 2.0..60.0f64).prop_map(
        |(c, s, x, y, w, h)| Detection::new(c, s, BBox::from_xywh(x, y, w, h).unwrap(), Origin::FullInference),
    )
}

fn config() -> impl Strategy<Value = SuppressionConfig> {
    (
        prop::sample::select(OverlapMetric::ALL.to_vec()),
        prop::sample::select(vec![0.3, 0.5, 0.7]),
        any::<bool>(),
    )
        .prop_map(|(metric, threshold, class_aware)| SuppressionConfig {
            metric,
            threshold,
            class_aware,
        })
}

fn key(d: &Detection) -> (u64, u32, [u64; 4]) {
    (d.score.to_bits(), d.class_id, d.bbox.corners().map(f64::to_bits))
}

fn as_set(v: &[Detection]) -> Vec<(u64, u32, [u64; 4])> {
    let mut k: Vec<_> = v.iter().map(key).collect();
    k.sort();
    k
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cluster_equals_greedy(dets in prop::collection::vec(detection(), 0..120), cfg in config()) {
        let g = greedy_suppress(&dets, &cfg);
        let c = cluster_suppress_stats(&dets, &cfg);
        prop_assert_eq!(&c.kept, &g);
        prop_assert!(c.iterations <= dets.len().max(1));
    }

    #[test]
    fn idempotent(dets in prop::collection::vec(detection(), 0..80), cfg in config()) {
        let once = cluster_suppress(&dets, &cfg);
        prop_assert_eq!(cluster_suppress(&once, &cfg), once.clone());
        let g = greedy_suppress(&dets, &cfg);
        prop_assert_eq!(greedy_suppress(&g, &cfg), g);
        let d = cdn(&dets);
        prop_assert_eq!(cdn(&d), d);
    }

    #[test]
    fn output_is_subset(dets in prop::collection::vec(detection(), 0..80), cfg in config()) {
        let all = as_set(&dets);
        for k in as_set(&cluster_suppress(&dets, &cfg)) {
            prop_assert!(all.binary_search(&k).is_ok());
        }
    }

    #[test]
    fn class_isolation(dets in prop::collection::vec(detection(), 0..80), cfg in config()) {
        let cfg = SuppressionConfig { class_aware: true, ..cfg };
        let joint = as_set(&cluster_suppress(&dets, &cfg));
        let mut split = Vec::new();
        for c in 0..3 {
            let only: Vec<Detection> = dets.iter().copied().filter(|d| d.class_id == c).collect();
            split.extend(cluster_suppress(&only, &cfg));
        }
        prop_assert_eq!(joint, as_set(&split));
    }

    #[test]
    fn input_order_irrelevant(dets in prop::collection::vec(detection(), 0..80), cfg in config(), seed in any::<u64>()) {
        // distinct scores make the order fully determined by score
        let mut dets = dets;
        for (i, d) in dets.iter_mut().enumerate() {
            d.score = (d.score * 1e6).floor() / 1e6 + i as f64 * 1e-9;
        }
        let mut shuffled = dets.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(
            as_set(&cluster_suppress(&dets, &cfg)),
            as_set(&cluster_suppress(&shuffled, &cfg))
        );
    }

    #[test]
    fn soft_and_wbf_shapes(dets in prop::collection::vec(detection(), 0..60)) {
        let soft = soft_suppress(&dets, 0.5, SOFT_NMS_SCORE_FLOOR).unwrap();
        prop_assert!(soft.len() <= dets.len());
        prop_assert!(soft.iter().all(|d| d.score >= SOFT_NMS_SCORE_FLOOR && d.score <= 1.0));
        let fused = wbf(&dets, 0.55);
        prop_assert!(fused.len() <= dets.len());
        for c in 0..3 {
            let n_in = dets.iter().filter(|d| d.class_id == c).count();
            let n_out = fused.iter().filter(|d| d.class_id == c).count();
            prop_assert!(n_out <= n_in);
            prop_assert_eq!(n_in == 0, n_out == 0);
        }
    }
}

#[test]
fn crowded_pair_fixture() {
    // same row, offset 30 px: IoU 700/1300, DIoU 700/1300 - 900/17000
    let a = Detection::new(0, 0.9, BBox::new(0.0, 0.0, 100.0, 10.0).unwrap(), Origin::FullInference);
    let b = Detection::new(0, 0.8, BBox::new(30.0, 0.0, 130.0, 10.0).unwrap(), Origin::FullInference);
    let i = asahi_core::geom::iou(&a.bbox, &b.bbox);
    let d = asahi_core::geom::diou(&a.bbox, &b.bbox);
    assert!((i - 7.0 / 13.0).abs() < 1e-12);
    assert!((d - (7.0 / 13.0 - 900.0 / 17000.0)).abs() < 1e-12);
    let iou_cfg = SuppressionConfig {
        metric: OverlapMetric::Iou,
        ..SuppressionConfig::CDN
    };
    assert_eq!(greedy_suppress(&[a, b], &iou_cfg).len(), 1);
    assert_eq!(cdn(&[a, b]).len(), 2);
}
