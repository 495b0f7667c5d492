//! Canonical reference paths and ready-made scenarios.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{DisturbanceConfig, Rates, SimScenario};
use crate::error::{Error, Result};
use crate::lqr::{LqWeights, DEFAULT_GRID_COUNT};
use crate::model::{VehicleParams, VehicleState};
use crate::tracker::{Direction, Leg, PiecewiseLinearPath, Point, TrackerConfig};

/// Figure-eight made of two circular lobes joined by two straights that
/// cross at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EightSpec {
    pub radius: f64,
    /// Distance between the lobe centers; at `2 * radius` the lobes touch
    /// and the straights vanish.
    pub center_separation: f64,
    pub segments_per_lobe: usize,
    pub laps: usize,
}

impl Default for EightSpec {
    fn default() -> Self {
        Self { radius: 1.0, center_separation: 3.0, segments_per_lobe: 16, laps: 5 }
    }
}

impl EightSpec {
    /// Half-angle between the two crossing straights and the x-axis.
    pub fn crossing_angle(&self) -> f64 {
        (2.0 * self.radius / self.center_separation).asin()
    }
}

/// Closed figure-eight, starting and ending at the crossing point, driven as
/// a single reverse leg for `laps` laps. The first lobe is circled
/// counter-clockwise, the second clockwise.
pub fn make_eight_path(spec: &EightSpec) -> Result<PiecewiseLinearPath> {
    let r = spec.radius;
    let a = spec.center_separation / 2.0;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("radius", "must be positive"));
    }
    if !(a >= r) {
        return Err(Error::invalid("center_separation", "lobes must not overlap (separation >= 2 * radius)"));
    }
    if spec.segments_per_lobe < 3 || spec.laps == 0 {
        return Err(Error::invalid("segments_per_lobe", "need at least 3 segments per lobe and one lap"));
    }
    let n = spec.segments_per_lobe;
    // polar angle of the upper tangent point as seen from the left center
    let theta_t = (a * a - r * r).sqrt().atan2(r);
    let sweep = TAU - 2.0 * theta_t;
    let origin: Point = [0.0, 0.0];

    let mut lap: Vec<Point> = vec![origin];
    let push = |p: Point, lap: &mut Vec<Point>| {
        let last = *lap.last().unwrap();
        if (p[0] - last[0]).hypot(p[1] - last[1]) > 1e-9 {
            lap.push(p);
        }
    };
    for k in 0..=n {
        let phi = theta_t + sweep * k as f64 / n as f64;
        push([-a + r * phi.cos(), r * phi.sin()], &mut lap);
    }
    push(origin, &mut lap);
    for k in 0..=n {
        let phi = (PI - theta_t) - sweep * k as f64 / n as f64;
        push([a + r * phi.cos(), r * phi.sin()], &mut lap);
    }
    push(origin, &mut lap);
    if let Some(last) = lap.last_mut() {
        *last = origin;
    }

    let mut waypoints = lap.clone();
    for _ in 1..spec.laps {
        waypoints.extend_from_slice(&lap[1..]);
    }
    Ok(PiecewiseLinearPath::single(Direction::Reverse, waypoints))
}

/// Trailer pose aligned with the first segment of a reverse leg: reversing
/// travels opposite to the trailer heading.
pub fn aligned_reverse_start(path: &PiecewiseLinearPath) -> VehicleState {
    let leg = &path.legs[0];
    let (p0, p1) = (leg.waypoints[0], leg.waypoints[1]);
    let travel = (p1[1] - p0[1]).atan2(p1[0] - p0[0]);
    let heading = match leg.direction {
        Direction::Reverse => travel + PI,
        Direction::Forward => travel,
    };
    VehicleState::new(p0[0], p0[1], heading, 0.0, 0.0).normalized()
}

fn base(
    path: PiecewiseLinearPath,
    initial_state: VehicleState,
    tracker: TrackerConfig,
    max_sim_time: f64,
) -> SimScenario {
    SimScenario {
        params: VehicleParams::test_platform(),
        weights: LqWeights::default(),
        tracker,
        path,
        initial_state,
        speed: 0.2,
        rates: Rates::default(),
        disturbances: DisturbanceConfig::default(),
        max_sim_time,
        schedule_grid_count: DEFAULT_GRID_COUNT,
    }
}

/// Reversing along the negative x-axis from (10°, −10°) internal angles with
/// a 0.3 m lateral offset.
pub fn straight_line_scenario() -> SimScenario {
    let path = PiecewiseLinearPath::single(Direction::Reverse, vec![[0.0, 0.0], [-8.0, 0.0]]);
    let start = VehicleState::new(0.0, 0.3, 0.0, 10f64.to_radians(), -10f64.to_radians());
    base(path, start, TrackerConfig::default(), 60.0)
}

/// Straight-line reference used for region-of-attraction maps: long enough
/// that the goal is never reached inside the time budget.
pub fn roa_base_scenario() -> SimScenario {
    let path = PiecewiseLinearPath::single(Direction::Reverse, vec![[0.0, 0.0], [-20.0, 0.0]]);
    base(path, VehicleState::default(), TrackerConfig::default(), 60.0)
}

pub fn eight_scenario() -> SimScenario {
    let path = make_eight_path(&EightSpec::default()).expect("default eight is valid");
    let start = aligned_reverse_start(&path);
    let tracker = TrackerConfig { lookahead: 0.4, kp: 0.3, goal_tolerance: 0.02 };
    base(path, start, tracker, 600.0)
}

/// Reverse parking into a slot, shaped by two control points between the
/// start and the goal.
pub fn parking_scenario() -> SimScenario {
    let path = PiecewiseLinearPath {
        legs: vec![Leg::new(Direction::Reverse, vec![[0.0, 0.0], [-1.5, 0.0], [-2.5, -1.0], [-2.5, -2.5]])],
    };
    let start = aligned_reverse_start(&path);
    base(path, start, TrackerConfig::default(), 60.0)
}
