//! Curvature demand of a drawn path against what the controllers can hold.
//!
//! A piecewise-linear path has no curvature of its own; the follower rounds
//! each corner. The radius used here is the fillet tangent to both segments
//! at `d = min(Lr, half of each adjacent segment)` from the vertex, i.e.
//! `d / tan(deflection / 2)`. On densely sampled arcs this recovers the arc
//! radius; on sparse corners it reflects the look-ahead cutting the corner.

use serde::{Deserialize, Serialize};
use trailer_lab_core::lqr::{reference_caps, SCHEDULE_RANGE_FRACTION};
use trailer_lab_core::model::{alpha_max, VehicleParams};
use trailer_lab_core::tracker::{Direction, Leg, PiecewiseLinearPath, Point, TrackerConfig};
use trailer_lab_core::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegFeasibility {
    pub index: usize,
    pub direction: Direction,
    pub length: f64,
    /// Tightest corner radius estimate, meters; `None` for a straight leg.
    pub min_radius: Option<f64>,
    /// Peak demand in radians: trailer angle on reverse legs, steering
    /// angle on forward legs.
    pub peak_demand: f64,
    pub limit: f64,
    pub feasible: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFeasibility {
    pub feasible: bool,
    /// Largest trailer-angle reference the stabilizer accepts.
    pub beta3_clamp: f64,
    pub alpha_limit: f64,
    pub legs: Vec<LegFeasibility>,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Fillet radius at `b` for the corner `a → b → c`, infinite when straight.
pub fn corner_radius(a: Point, b: Point, c: Point, lookahead: f64) -> f64 {
    let (u, v) = (sub(b, a), sub(c, b));
    let (lu, lv) = (norm(u), norm(v));
    let deflection = (u[0] * v[1] - u[1] * v[0]).atan2(u[0] * v[0] + u[1] * v[1]).abs();
    if deflection < 1e-12 {
        return f64::INFINITY;
    }
    let d = lookahead.min(0.5 * lu).min(0.5 * lv);
    d / (0.5 * deflection).tan()
}

fn leg_feasibility(
    index: usize,
    leg: &Leg,
    params: &VehicleParams,
    lookahead: f64,
    beta3_clamp: f64,
) -> LegFeasibility {
    let min_radius =
        leg.waypoints.windows(3).map(|w| corner_radius(w[0], w[1], w[2], lookahead)).fold(f64::INFINITY, f64::min);
    let length = leg.length();
    let (demand, limit, what) = match leg.direction {
        Direction::Reverse => ((params.l3 / min_radius).atan(), beta3_clamp, "trailer angle"),
        Direction::Forward => ((params.l1 / min_radius).atan(), params.alpha_limit, "steering angle"),
    };
    let mut notes = Vec::new();
    let feasible = demand <= limit;
    if !feasible {
        notes.push(format!(
            "corner radius {min_radius:.3} m needs {what} {:.1} deg, limit {:.1} deg",
            demand.to_degrees(),
            limit.to_degrees()
        ));
    }
    if length < lookahead {
        notes.push(format!("leg length {length:.3} m is shorter than the look-ahead radius {lookahead:.3} m"));
    }
    LegFeasibility {
        index,
        direction: leg.direction,
        length,
        min_radius: min_radius.is_finite().then_some(min_radius),
        peak_demand: demand,
        limit,
        feasible,
        notes,
    }
}

pub fn validate_path(
    path: &PiecewiseLinearPath,
    params: &VehicleParams,
    tracker: &TrackerConfig,
) -> Result<PathFeasibility, Error> {
    params.validate().map_err(|e| match e {
        Error::Invalid { field, reason } => Error::Invalid { field: format!("params.{field}"), reason },
        other => other,
    })?;
    tracker.validate()?;
    path.validate()?;
    let (_, beta3_clamp) = reference_caps(params, SCHEDULE_RANGE_FRACTION * alpha_max(params));
    let legs: Vec<LegFeasibility> = path
        .legs
        .iter()
        .enumerate()
        .map(|(i, leg)| leg_feasibility(i, leg, params, tracker.lookahead, beta3_clamp))
        .collect();
    Ok(PathFeasibility {
        feasible: legs.iter().all(|l| l.feasible),
        beta3_clamp,
        alpha_limit: params.alpha_limit,
        legs,
    })
}
