mod common;

use lanekit::{evaluate, generate_scene, match_lanes, EvalConfig, EvalReport, Lane, LaneFrame, SceneSpec};
use proptest::prelude::*;

const SLOTS: [f64; 5] = [-7.0, -3.5, 0.0, 3.5, 7.0];

fn polyline(x0: f64, slope: f64, y0: f64, y1: f64, dz: f64) -> Vec<[f64; 3]> {
    let steps = ((y1 - y0) / 5.0).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|k| {
            let y = y0 + (y1 - y0) * k as f64 / steps as f64;
            [x0 + slope * y, y, 0.01 * y + dz]
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Pair {
    gt: Vec<Lane<f64>>,
    pred: Vec<Lane<f64>>,
}

/// Integer-valued extents and constant offsets keep every sample aligned under
/// integer y-shifts.
fn scene() -> impl Strategy<Value = Pair> {
    prop::collection::vec(
        (any::<bool>(), 0u8..4, 5u8..40, 60u8..96, -0.02f64..0.02, -1.8f64..1.8, -0.5f64..0.5, 0.05f64..1.0, any::<bool>()),
        5,
    )
    .prop_map(|slots| {
        let mut gt = Vec::new();
        let mut pred = Vec::new();
        for (k, (present, kind, y0, y1, slope, off, dz, conf, extra)) in slots.into_iter().enumerate() {
            let x0 = SLOTS[k];
            let (y0, y1) = (y0 as f64, y1 as f64);
            if present {
                gt.push(Lane::new(polyline(x0, slope, y0, y1, 0.0), k % 3));
                let mut lane = match kind {
                    0 => Lane::new(polyline(x0 + off, slope, y0, y1, dz), k % 3),
                    1 => Lane::new(polyline(x0 + off * 0.2, slope, y0 + 10.0, y1, dz), k % 3),
                    2 => Lane::new(polyline(x0 + off * 0.4, slope, y0, y1 - 15.0, dz * 0.1), k % 3),
                    _ => continue,
                };
                lane.confidence = conf;
                pred.push(lane);
            } else if extra {
                let mut lane = Lane::new(polyline(x0, slope, y0, y1, dz), 1);
                lane.confidence = conf;
                pred.push(lane);
            }
        }
        Pair { gt, pred }
    })
}

fn frame(lanes: Vec<Lane<f64>>) -> Vec<LaneFrame<f64>> {
    vec![LaneFrame { frame_id: "f".into(), lanes }]
}

fn report(p: &Pair) -> Vec<EvalReport<f64>> {
    evaluate(&frame(p.pred.clone()), &frame(p.gt.clone()), &EvalConfig::default(), false).unwrap()
}

fn close(a: &EvalReport<f64>, b: &EvalReport<f64>) -> bool {
    let pairs = [
        (a.f1, b.f1),
        (a.precision, b.precision),
        (a.recall, b.recall),
        (a.ap, b.ap),
        (a.x_err_near, b.x_err_near),
        (a.x_err_far, b.x_err_far),
        (a.z_err_near, b.z_err_near),
        (a.z_err_far, b.z_err_far),
    ];
    (a.tp, a.fp, a.fn_) == (b.tp, b.fp, b.fn_) && pairs.iter().all(|(x, y)| (x - y).abs() < 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn f1_monotone_in_threshold(p in scene()) {
        let r = report(&p);
        prop_assert!(r[1].f1 <= r[0].f1);
        prop_assert!(r[1].tp <= r[0].tp);
    }

    #[test]
    fn lane_order_irrelevant(p in scene(), rot_g in 0usize..5, rot_p in 0usize..5) {
        let mut q = p.clone();
        if !q.gt.is_empty() {
            let k = rot_g % q.gt.len();
            q.gt.rotate_left(k);
        }
        if !q.pred.is_empty() {
            let k = rot_p % q.pred.len();
            q.pred.rotate_left(k);
            q.pred.reverse();
        }
        for (a, b) in report(&p).iter().zip(&report(&q)) {
            prop_assert!(close(a, b), "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn duplicate_of_matched_prediction_is_one_fp(p in scene(), pick in 0usize..5) {
        let cfg = EvalConfig::default();
        let m = match_lanes(&p.pred, &p.gt, 1.5, &cfg).unwrap();
        prop_assume!(!m.pairs.is_empty());
        let (dup, _) = m.pairs[pick % m.pairs.len()];
        let mut q = p.clone();
        q.pred.push(q.pred[dup].clone());
        let (a, b) = (&report(&p)[0], &report(&q)[0]);
        prop_assert_eq!(b.tp, a.tp);
        prop_assert_eq!(b.fp, a.fp + 1);
        prop_assert_eq!(b.fn_, a.fn_);
    }

    #[test]
    fn rigid_y_shift_keeps_report(p in scene(), shift in -4i32..=4) {
        let dy = shift as f64;
        let moved = |lanes: &[Lane<f64>]| -> Vec<Lane<f64>> {
            lanes.iter().map(|l| {
                let mut l = l.clone();
                // z and x are re-expressed relative to the shifted stations
                let first = l.points[0];
                for pt in &mut l.points {
                    pt[1] += dy;
                }
                let _ = first;
                l
            }).collect()
        };
        let q = Pair { gt: moved(&p.gt), pred: moved(&p.pred) };
        let (a, b) = (report(&p), report(&q));
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fp, y.fn_));
            prop_assert!((x.f1 - y.f1).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_offset_errors_are_translation_invariant() {
    let gt = vec![Lane::new(polyline(0.0, 0.01, 10.0, 90.0, 0.0), 1), Lane::new(polyline(3.5, 0.01, 20.0, 80.0, 0.0), 2)];
    let pred: Vec<Lane<f64>> = gt
        .iter()
        .zip([0.3, -0.4])
        .map(|(l, off)| {
            let mut l = l.clone();
            l.points.iter_mut().for_each(|p| {
                p[0] += off;
                p[2] += off / 2.0;
            });
            l
        })
        .collect();
    let base = evaluate(&frame(pred.clone()), &frame(gt.clone()), &EvalConfig::default(), false).unwrap();
    for dy in [-7.0, -2.0, 3.0, 9.0] {
        let shift = |ls: &[Lane<f64>]| -> Vec<Lane<f64>> {
            ls.iter()
                .map(|l| {
                    let mut l = l.clone();
                    l.points.iter_mut().for_each(|p| p[1] += dy);
                    l
                })
                .collect()
        };
        let r = evaluate(&frame(shift(&pred)), &frame(shift(&gt)), &EvalConfig::default(), false).unwrap();
        for (a, b) in base.iter().zip(&r) {
            assert!(close(a, b), "{a:?} vs {b:?}");
        }
    }
}

/// Prediction equal to a straight gt lane over `y <= cross`, then veering off laterally.
fn veering(cross: f64) -> Lane<f64> {
    Lane::new(vec![[0.0, 0.0, 0.0], [0.0, cross, 0.0], [50.0, cross + 5.0, 0.0], [50.0, 100.0, 0.0]], 0)
}

#[test]
fn inlier_ratio_flips_between_74_and_76_percent() {
    // gt spans stations 1..=100; the prediction leaves the 1.5 m band before y = cross + 0.15
    let gt = vec![Lane::new(vec![[0.0, 0.0, 0.0], [0.0, 100.0, 0.0]], 0)];
    let cfg = EvalConfig::default();
    let rejected = match_lanes(&[veering(74.0)], &gt, 1.5, &cfg).unwrap();
    let accepted = match_lanes(&[veering(76.0)], &gt, 1.5, &cfg).unwrap();
    assert!(rejected.pairs.is_empty());
    assert_eq!(accepted.pairs, vec![(0, 0)]);
}

#[test]
fn synthetic_offset_scene_reports_offset() {
    let grid = common::base_grid();
    let scene = generate_scene(&SceneSpec::<f64> { seed: 4, ..SceneSpec::default() }, &grid).unwrap();
    let mut pred = scene.gt.clone();
    pred.lanes.iter_mut().flat_map(|l| l.points.iter_mut()).for_each(|p| p[0] += 0.2);
    let r = evaluate(&[pred], &[scene.gt], &EvalConfig::default(), false).unwrap();
    assert_eq!(r[0].f1, 1.0);
    assert!((r[0].x_err_near - 0.2).abs() <= 1e-6);
    assert!((r[0].x_err_far - 0.2).abs() <= 1e-6);
}
