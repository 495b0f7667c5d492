use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use trailer_lab_core::model::{VehicleParams, VehicleState};
use trailer_lab_core::tracker::{
    locate_lookahead, reverse_reference, tracker_tick, Command, Direction, Leg, PiecewiseLinearPath, Point,
    TrackerConfig, TrackerState,
};

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn distance_to_polyline(q: Point, line: &[Point]) -> f64 {
    line.windows(2)
        .map(|w| {
            let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let t = (((q[0] - w[0][0]) * d[0] + (q[1] - w[0][1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
            dist(q, [w[0][0] + t * d[0], w[0][1] + t * d[1]])
        })
        .fold(f64::INFINITY, f64::min)
}

fn extended(line: &[Point], by: f64) -> Vec<Point> {
    let (a, b) = (line[line.len() - 2], line[line.len() - 1]);
    let len = dist(a, b);
    let mut out = line.to_vec();
    out.push([b[0] + (b[0] - a[0]) / len * by, b[1] + (b[1] - a[1]) / len * by]);
    out
}

#[test]
fn forward_most_crossing_matches_brute_force_sampling() {
    let path = PiecewiseLinearPath::single(Direction::Reverse, vec![[-2.0, 0.5], [2.0, 0.5]]);
    let (res, _) = locate_lookahead(&path, &TrackerState::default(), [0.0, 0.0], 1.0);
    assert!(!res.fallback_used);
    // sample the segment and keep the last sign change of |p| - 1
    let n = 40_000;
    let mut last = None;
    let mut prev = dist([-2.0, 0.5], [0.0, 0.0]) - 1.0;
    for i in 1..=n {
        let p = [-2.0 + 4.0 * i as f64 / n as f64, 0.5];
        let f = dist(p, [0.0, 0.0]) - 1.0;
        if f.signum() != prev.signum() {
            last = Some(p);
        }
        prev = f;
    }
    let sampled = last.unwrap();
    assert!(dist(res.target, sampled) < 1e-4);
    assert!((res.target[0] - 0.75f64.sqrt()).abs() < 1e-12);
}

#[test]
fn aligned_on_a_straight_reverse_leg_commands_zero() {
    let path = PiecewiseLinearPath::single(Direction::Reverse, vec![[0.0, 0.0], [-5.0, 0.0]]);
    let out = tracker_tick(
        &VehicleState::default(),
        &path,
        &TrackerState::default(),
        &TrackerConfig::default(),
        &VehicleParams::test_platform(),
    );
    assert_eq!(out.command, Command::TrailerAngle(0.0));
    assert!(!out.goal);
}

fn waypoints() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..7).prop_filter_map("distinct consecutive waypoints", |raw| {
        let pts: Vec<Point> = raw.into_iter().map(|(x, y)| [x, y]).collect();
        pts.windows(2).all(|w| dist(w[0], w[1]) > 0.05).then_some(pts)
    })
}

proptest! {
    #[test]
    fn lookahead_contract(
        pts in waypoints(),
        lr in 0.2f64..2.0,
        walk in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..30),
    ) {
        let path = PiecewiseLinearPath::single(Direction::Reverse, pts.clone());
        let reachable = extended(&pts, lr);
        let mut state = TrackerState::default();
        let mut anchor = pts[0];
        for (dx, dy) in walk {
            anchor = [anchor[0] + dx, anchor[1] + dy];
            let (res, next) = locate_lookahead(&path, &state, anchor, lr);
            prop_assert!(next.progress >= state.progress);
            if !res.fallback_used {
                prop_assert!((dist(res.target, anchor) - lr).abs() < 1e-9);
            }
            prop_assert!(distance_to_polyline(res.target, &reachable) < 1e-9);
            state = next;
        }
    }

    #[test]
    fn tracker_tick_is_odd_under_mirroring(
        pts in waypoints(),
        x in -3.0f64..3.0,
        y in -3.0f64..3.0,
        theta in -3.0f64..3.0,
        beta3 in -1.0f64..1.0,
        beta2 in -1.0f64..1.0,
        forward in any::<bool>(),
    ) {
        let direction = if forward { Direction::Forward } else { Direction::Reverse };
        let path = PiecewiseLinearPath { legs: vec![Leg::new(direction, pts)] };
        let params = VehicleParams::test_platform();
        let config = TrackerConfig::default();
        let state = VehicleState::new(x, y, theta, beta3, beta2);
        let mirror = VehicleState::new(x, -y, -theta, -beta3, -beta2);
        let a = tracker_tick(&state, &path, &TrackerState::default(), &config, &params);
        let b = tracker_tick(&mirror, &path.mirrored(), &TrackerState::default(), &config, &params);
        prop_assert_eq!(a.command.value(), -b.command.value());
        prop_assert_eq!(a.theta_e, -b.theta_e);
        prop_assert_eq!(a.tracker.progress, b.tracker.progress);
    }

    #[test]
    fn reverse_reference_is_bounded_and_odd(theta_e in -std::f64::consts::PI..std::f64::consts::PI, lr in 0.01f64..5.0) {
        let b = reverse_reference(theta_e, lr, 0.345);
        prop_assert!(b.abs() < FRAC_PI_2);
        prop_assert_eq!(b, -reverse_reference(-theta_e, lr, 0.345));
    }
}
