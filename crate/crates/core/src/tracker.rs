//! Piecewise-linear references and the pure-pursuit path follower.
//!
//! In reverse the look-ahead circle is anchored at the trailer axle and the
//! follower produces a trailer-angle reference for the stabilizer; driving
//! forward it is anchored at the truck rear axle and steers directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{body_poses, VehicleParams, VehicleState};

pub type Point = [f64; 2];

/// Arc length searched beyond the current progress, in look-ahead radii.
/// Bounding the window keeps self-crossing references (and repeated laps)
/// from capturing the look-ahead point on a later pass.
pub const SEARCH_WINDOW_LOOKAHEADS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub direction: Direction,
    pub waypoints: Vec<Point>,
}

impl Leg {
    pub fn new(direction: Direction, waypoints: Vec<Point>) -> Self {
        Self { direction, waypoints }
    }

    /// Cumulative arc length at each waypoint.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.waypoints.len());
        let mut total = 0.0;
        s.push(0.0);
        for w in self.waypoints.windows(2) {
            total += dist(w[0], w[1]);
            s.push(total);
        }
        s
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    pub fn end(&self) -> Point {
        *self.waypoints.last().expect("validated leg has waypoints")
    }
}

/// Ordered legs, each driven in one direction. Changing leg means stopping
/// and, if the direction differs, reversing the sign of the speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearPath {
    pub legs: Vec<Leg>,
}

impl PiecewiseLinearPath {
    pub fn single(direction: Direction, waypoints: Vec<Point>) -> Self {
        Self { legs: vec![Leg::new(direction, waypoints)] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.legs.is_empty() {
            return Err(Error::invalid("path.legs", "at least one leg is required"));
        }
        for (i, leg) in self.legs.iter().enumerate() {
            if leg.waypoints.len() < 2 {
                return Err(Error::invalid(format!("path.legs[{i}].waypoints"), "at least two waypoints are required"));
            }
            for (j, w) in leg.waypoints.iter().enumerate() {
                if !(w[0].is_finite() && w[1].is_finite()) {
                    return Err(Error::invalid(format!("path.legs[{i}].waypoints[{j}]"), "coordinates must be finite"));
                }
            }
            for (j, w) in leg.waypoints.windows(2).enumerate() {
                if dist(w[0], w[1]) <= 1e-9 {
                    return Err(Error::invalid(
                        format!("path.legs[{i}].waypoints[{}]", j + 1),
                        "repeats the previous waypoint",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Same path reflected about the x-axis.
    pub fn mirrored(&self) -> Self {
        Self {
            legs: self
                .legs
                .iter()
                .map(|leg| Leg::new(leg.direction, leg.waypoints.iter().map(|p| [p[0], -p[1]]).collect()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Look-ahead radius.
    #[serde(rename = "Lr")]
    pub lookahead: f64,
    /// Proportional boost on the trailer-angle reference.
    #[serde(rename = "Kp")]
    pub kp: f64,
    pub goal_tolerance: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { lookahead: 0.5, kp: 0.3, goal_tolerance: 0.02 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lookahead.is_finite() && self.lookahead > 0.0) {
            return Err(Error::invalid("tracker.Lr", "must be positive"));
        }
        if !(self.kp.is_finite() && self.kp >= 0.0) {
            return Err(Error::invalid("tracker.Kp", "must be non-negative"));
        }
        if !(self.goal_tolerance.is_finite() && self.goal_tolerance > 0.0) {
            return Err(Error::invalid("tracker.goal_tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackerState {
    pub leg_index: usize,
    /// Arc length along the current leg of the last look-ahead point.
    pub progress: f64,
    pub last_lookahead: Option<Point>,
    /// Last high-level command, held once the goal is reached.
    pub last_command: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookaheadResult {
    pub target: Point,
    pub fallback_used: bool,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Segments of a leg, with the last one extended by `extension` beyond the
/// final waypoint so the look-ahead circle still finds a target while the
/// anchor closes in on the end.
fn segments(leg: &Leg, extension: f64) -> Vec<(Point, Point, f64)> {
    let s = leg.arc_lengths();
    let n = leg.waypoints.len();
    let mut out: Vec<(Point, Point, f64)> =
        (0..n - 1).map(|i| (leg.waypoints[i], leg.waypoints[i + 1], s[i])).collect();
    if extension > 0.0 {
        let (a, b, _) = out[n - 2];
        let len = dist(a, b);
        let tip = [b[0] + (b[0] - a[0]) / len * extension, b[1] + (b[1] - a[1]) / len * extension];
        out.push((b, tip, s[n - 1]));
    }
    out
}

/// Intersects the look-ahead circle with the current leg between `progress`
/// and a bounded window ahead of it, picking the crossing furthest along the
/// path. Without a crossing the target falls back to the nearest path point
/// in the window, or to the window end when the whole window lies inside the
/// circle.
pub fn locate_lookahead(
    path: &PiecewiseLinearPath,
    tracker: &TrackerState,
    anchor: Point,
    lookahead: f64,
) -> (LookaheadResult, TrackerState) {
    let leg = &path.legs[tracker.leg_index];
    let window_start = tracker.progress;
    let window_end = tracker.progress + SEARCH_WINDOW_LOOKAHEADS * lookahead;
    let r2 = lookahead * lookahead;

    let mut best: Option<(f64, Point)> = None;
    let mut nearest: Option<(f64, f64, Point)> = None;
    let mut last_in_window: Option<(f64, Point)> = None;

    for (a, b, s0) in segments(leg, lookahead) {
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = d[0].hypot(d[1]);
        if s0 + len < window_start || s0 > window_end {
            continue;
        }
        let t_lo = ((window_start - s0) / len).max(0.0);
        let t_hi = ((window_end - s0) / len).min(1.0);
        if t_lo > t_hi {
            continue;
        }
        let f = [a[0] - anchor[0], a[1] - anchor[1]];
        let qa = d[0] * d[0] + d[1] * d[1];
        let qb = 2.0 * (f[0] * d[0] + f[1] * d[1]);
        let qc = f[0] * f[0] + f[1] * f[1] - r2;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let root = disc.sqrt();
            for t in [(-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)] {
                if t >= t_lo && t <= t_hi {
                    let s = s0 + t * len;
                    if best.is_none_or(|(bs, _)| s > bs) {
                        best = Some((s, [a[0] + t * d[0], a[1] + t * d[1]]));
                    }
                }
            }
        }
        // nearest point of the clipped segment to the anchor
        let t_near = (-(f[0] * d[0] + f[1] * d[1]) / qa).clamp(t_lo, t_hi);
        let p = [a[0] + t_near * d[0], a[1] + t_near * d[1]];
        let dn = dist(p, anchor);
        if nearest.is_none_or(|(bd, _, _)| dn < bd) {
            nearest = Some((dn, s0 + t_near * len, p));
        }
        last_in_window = Some((s0 + t_hi * len, [a[0] + t_hi * d[0], a[1] + t_hi * d[1]]));
    }

    let (progress, target, fallback_used) = match (best, nearest, last_in_window) {
        (Some((s, p)), _, _) => (s, p, false),
        (None, Some((dn, s, p)), Some((s_end, p_end))) => {
            if dn < lookahead {
                (s_end, p_end, true)
            } else {
                (s, p, true)
            }
        }
        // window entirely past the extended leg end
        _ => {
            let tip = segments(leg, lookahead).last().map(|(_, b, _)| *b).unwrap_or(leg.end());
            (tracker.progress, tip, true)
        }
    };

    let next = TrackerState { progress: progress.max(tracker.progress), last_lookahead: Some(target), ..*tracker };
    (LookaheadResult { target, fallback_used }, next)
}

/// Pose of the look-ahead anchor: the body heading and the direction of
/// travel along it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub direction: Direction,
}

/// Signed angle from the direction of travel to the bearing of `target`, in
/// (−π, π]. Reversing travels along `heading + π`.
pub fn heading_error(anchor: &AnchorPose, target: Point) -> Result<f64> {
    let r = [target[0] - anchor.x, target[1] - anchor.y];
    if r[0].hypot(r[1]) <= 1e-12 {
        return Err(Error::UndefinedBearing);
    }
    let (s, c) = anchor.heading.sin_cos();
    let travel = match anchor.direction {
        Direction::Forward => [c, s],
        Direction::Reverse => [-c, -s],
    };
    let cross = travel[0] * r[1] - travel[1] * r[0];
    let dot = travel[0] * r[0] + travel[1] * r[1];
    Ok(cross.atan2(dot))
}

/// Trailer-angle reference that drives the trailer axle along the circle
/// through the look-ahead point.
pub fn reverse_reference(theta_e: f64, lookahead: f64, l3: f64) -> f64 {
    -(2.0 * l3 * theta_e.sin() / lookahead).atan()
}

pub fn proportional_boost(beta3_d: f64, beta3: f64, kp: f64) -> f64 {
    beta3_d + kp * (beta3_d - beta3)
}

/// Classic pure-pursuit steering: curvature `2 sin θe / Lr` at the truck
/// rear axle.
pub fn forward_steering(theta_e: f64, lookahead: f64, l1: f64) -> f64 {
    (l1 * 2.0 * theta_e.sin() / lookahead).atan()
}

/// Anchor of the look-ahead circle for the given travel direction.
pub fn anchor_pose(state: &VehicleState, params: &VehicleParams, direction: Direction) -> AnchorPose {
    match direction {
        Direction::Reverse => AnchorPose { x: state.x3, y: state.y3, heading: state.theta3, direction },
        Direction::Forward => {
            let (truck, _) = body_poses(state, params);
            AnchorPose { x: truck.x, y: truck.y, heading: truck.heading, direction }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegStatus {
    InProgress,
    /// Anchor reached the end of the leg within the goal tolerance.
    Reached,
    /// Anchor passed the end of the leg without reaching it.
    Passed,
}

/// Completion state of the current leg. Requires the look-ahead progress to
/// be past the penultimate waypoint so earlier visits of the end point (on
/// closed references) do not count.
pub fn leg_status(
    path: &PiecewiseLinearPath,
    tracker: &TrackerState,
    anchor: Point,
    config: &TrackerConfig,
) -> LegStatus {
    let leg = &path.legs[tracker.leg_index];
    let n = leg.waypoints.len();
    let s = leg.arc_lengths();
    if tracker.progress < s[n - 2] {
        return LegStatus::InProgress;
    }
    let end = leg.end();
    if dist(anchor, end) <= config.goal_tolerance {
        return LegStatus::Reached;
    }
    let prev = leg.waypoints[n - 2];
    let d = [end[0] - prev[0], end[1] - prev[1]];
    let along = ((anchor[0] - end[0]) * d[0] + (anchor[1] - end[1]) * d[1]) / d[0].hypot(d[1]);
    if along > 0.0 {
        LegStatus::Passed
    } else {
        LegStatus::InProgress
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Command {
    /// Trailer-angle reference for the stabilizer (reverse legs).
    TrailerAngle(f64),
    /// Direct steering angle (forward legs).
    Steering(f64),
}

impl Command {
    pub fn value(self) -> f64 {
        match self {
            Command::TrailerAngle(v) | Command::Steering(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub command: Command,
    pub tracker: TrackerState,
    pub lookahead: Option<LookaheadResult>,
    pub theta_e: f64,
    pub leg_status: LegStatus,
    /// Final leg reached within the goal tolerance.
    pub goal: bool,
}

/// One high-level tick: look-ahead point, heading error and the command
/// for the current leg's travel direction.
pub fn tracker_tick(
    state: &VehicleState,
    path: &PiecewiseLinearPath,
    tracker: &TrackerState,
    config: &TrackerConfig,
    params: &VehicleParams,
) -> TickOutput {
    let direction = path.legs[tracker.leg_index].direction;
    let anchor = anchor_pose(state, params, direction);
    let position = [anchor.x, anchor.y];
    let is_last = tracker.leg_index + 1 == path.legs.len();
    let hold = |cmd: f64| match direction {
        Direction::Reverse => Command::TrailerAngle(cmd),
        Direction::Forward => Command::Steering(cmd),
    };

    let status = leg_status(path, tracker, position, config);
    if is_last && status == LegStatus::Reached {
        return TickOutput {
            command: hold(tracker.last_command),
            tracker: *tracker,
            lookahead: None,
            theta_e: 0.0,
            leg_status: status,
            goal: true,
        };
    }

    let (look, mut next) = locate_lookahead(path, tracker, position, config.lookahead);
    let theta_e = heading_error(&anchor, look.target).unwrap_or(0.0);
    let value = match direction {
        Direction::Reverse => {
            let beta3_d = reverse_reference(theta_e, config.lookahead, params.l3);
            proportional_boost(beta3_d, state.beta3, config.kp)
        }
        Direction::Forward => forward_steering(theta_e, config.lookahead, params.l1),
    };
    next.last_command = value;
    let status = leg_status(path, &next, position, config);
    TickOutput {
        command: hold(value),
        tracker: next,
        lookahead: Some(look),
        theta_e,
        leg_status: status,
        goal: is_last && status == LegStatus::Reached,
    }
}
