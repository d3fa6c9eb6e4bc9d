use clearance_mpc::dynamics::HorizonConfig;
use clearance_mpc::reference::{discretize_reference, lateral_error, Path, ReferencePoint};
use clearance_mpc::tube::{build_tube, ObstacleCut, ShrinkZone, Side};
use proptest::prelude::*;

fn point(x: f64, y: f64, theta: f64) -> ReferencePoint {
    ReferencePoint {
        x_bar: x,
        y_bar: y,
        theta_bar: theta,
        kappa_bar: 0.0,
        v_k: 0.0,
    }
}

#[test]
fn circle_reference_has_constant_curvature() {
    for (radius, sweep) in [(25.0, 2.0), (80.0, -1.5), (200.0, 0.8)] {
        let path = Path::arc((3.0, -4.0), 0.4, radius, sweep, 2000).unwrap();
        let horizon = HorizonConfig::new(60, 0.05);
        let v = 8.0;
        let r = discretize_reference(&path, 1.0, &vec![v; 61], &horizon).unwrap();
        for (k, p) in r.points().iter().enumerate() {
            let expect = sweep.signum() / radius;
            assert!((p.kappa_bar - expect).abs() < 1e-6 * expect.abs(), "k {k}: {}", p.kappa_bar);
            assert_eq!(p.v_k, v);
        }
        // consecutive points are one chord of v ts apart
        for w in r.points().windows(2) {
            let d = (w[1].x_bar - w[0].x_bar).hypot(w[1].y_bar - w[0].y_bar);
            assert!((d - v * 0.05).abs() < 1e-4);
        }
    }
}

fn cut_strategy() -> impl Strategy<Value = ObstacleCut> {
    (0usize..40, 0usize..15, any::<bool>(), 0.0..1.5f64).prop_map(|(first, len, left, intrusion)| ObstacleCut {
        first,
        last: first + len,
        side: if left { Side::Left } else { Side::Right },
        intrusion,
    })
}

fn zone_strategy() -> impl Strategy<Value = ShrinkZone> {
    (0usize..40, 0usize..15, 0.5..1.8f64, 1usize..12).prop_map(|(first, len, target, taper)| ShrinkZone {
        first,
        last: first + len,
        target_half_width: target,
        taper_steps: taper,
    })
}

proptest! {
    #[test]
    fn lateral_error_is_rigid_motion_invariant(
        x in -50.0..50.0f64, y in -50.0..50.0f64,
        rx in -50.0..50.0f64, ry in -50.0..50.0f64, rt in -3.1..3.1f64,
        tx in -100.0..100.0f64, ty in -100.0..100.0f64, phi in -3.1..3.1f64,
    ) {
        let e = lateral_error(x, y, &point(rx, ry, rt));
        let moved = lateral_error(x + tx, y + ty, &point(rx + tx, ry + ty, rt));
        prop_assert!((e - moved).abs() < 1e-9);
        let (c, s) = (phi.cos(), phi.sin());
        let rot = |a: f64, b: f64| (c * a - s * b, s * a + c * b);
        let (px, py) = rot(x, y);
        let (qx, qy) = rot(rx, ry);
        let turned = lateral_error(px, py, &point(qx, qy, rt + phi));
        prop_assert!((e - turned).abs() < 1e-9);
        prop_assert_eq!(lateral_error(rx, ry, &point(rx, ry, rt)), 0.0);
    }

    #[test]
    fn cuts_never_widen_the_tube(
        half in 1.0..2.5f64,
        cuts in prop::collection::vec(cut_strategy(), 0..5),
        zones in prop::collection::vec(zone_strategy(), 0..3),
        extra in cut_strategy(),
    ) {
        let lanes = vec![half; 61];
        let base = build_tube(&lanes, 0.9, &cuts, &zones);
        let mut more = cuts.clone();
        more.push(extra);
        let cut = build_tube(&lanes, 0.9, &more, &zones);
        for k in 0..61 {
            prop_assert!(cut.upper[k] <= base.upper[k]);
            prop_assert!(cut.lower[k] >= base.lower[k]);
        }
    }

    #[test]
    fn contribution_order_is_irrelevant(
        half in 1.0..2.5f64,
        cuts in prop::collection::vec(cut_strategy(), 0..6),
        zones in prop::collection::vec(zone_strategy(), 0..4),
    ) {
        let lanes = vec![half; 61];
        let forward = build_tube(&lanes, 0.9, &cuts, &zones);
        let mut rc = cuts.clone();
        rc.reverse();
        let mut rz = zones.clone();
        rz.reverse();
        prop_assert_eq!(forward, build_tube(&lanes, 0.9, &rc, &rz));
    }
}
