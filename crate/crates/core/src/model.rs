//! No-slip kinematics of a truck towing a dolly and trailer through an
//! off-axle hitch, its circular equilibria and their linearization.
//!
//! Angle conventions: headings are counter-clockwise from +x,
//! `beta2 = theta1 - theta2` (dolly relative to truck) and
//! `beta3 = theta2 - theta3` (trailer relative to dolly). A positive steering
//! angle turns the truck counter-clockwise when driving forward.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Vector2, Vector5};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::error::{Error, Result};

/// Geometric constants of one vehicle configuration, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Truck wheelbase.
    #[serde(rename = "L1")]
    pub l1: f64,
    /// Off-axle hitch to dolly axle.
    #[serde(rename = "L2")]
    pub l2: f64,
    /// Dolly axle to trailer axle.
    #[serde(rename = "L3")]
    pub l3: f64,
    /// Hitch offset behind the truck rear axle.
    #[serde(rename = "M1")]
    pub m1: f64,
    /// Mechanical steering bound.
    pub alpha_limit: f64,
}

impl VehicleParams {
    /// The small-scale test platform: L1 = 19.0 cm, L2 = 14.0 cm,
    /// L3 = 34.5 cm, M1 = 3.6 cm, steering limited to ±44°.
    pub fn test_platform() -> Self {
        Self { l1: 0.19, l2: 0.14, l3: 0.345, m1: 0.036, alpha_limit: 44f64.to_radians() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("L1", self.l1), ("L2", self.l2), ("L3", self.l3)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be strictly positive, got {value}")));
            }
        }
        if !(self.m1.is_finite() && self.m1 >= 0.0) {
            return Err(Error::invalid("M1", format!("must be non-negative, got {}", self.m1)));
        }
        if self.l3 * self.l3 + self.l2 * self.l2 - self.m1 * self.m1 <= 0.0 {
            return Err(Error::invalid("M1", "L3² + L2² − M1² must be positive"));
        }
        if !(self.alpha_limit > 0.0 && self.alpha_limit < FRAC_PI_2) {
            return Err(Error::invalid("alpha_limit", format!("must lie in (0, pi/2), got {}", self.alpha_limit)));
        }
        Ok(())
    }
}

/// Generalized coordinates: trailer axle position and heading plus the two
/// internal angles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x3: f64,
    pub y3: f64,
    pub theta3: f64,
    pub beta3: f64,
    pub beta2: f64,
}

impl VehicleState {
    pub fn new(x3: f64, y3: f64, theta3: f64, beta3: f64, beta2: f64) -> Self {
        Self { x3, y3, theta3, beta3, beta2 }
    }

    pub fn to_vector(self) -> Vector5<f64> {
        Vector5::new(self.x3, self.y3, self.theta3, self.beta3, self.beta2)
    }

    pub fn from_vector(v: &Vector5<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    /// Same state with all angles wrapped into (−π, π].
    pub fn normalized(self) -> Self {
        Self { theta3: wrap_angle(self.theta3), beta3: wrap_angle(self.beta3), beta2: wrap_angle(self.beta2), ..self }
    }

    pub fn is_jackknife_free(&self) -> bool {
        self.beta3.abs() < FRAC_PI_2 && self.beta2.abs() < FRAC_PI_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Steering angle.
    pub alpha: f64,
    /// Longitudinal speed at the truck rear axle; negative when reversing.
    pub v: f64,
}

/// Radius of an equilibrium circle. Straight-line motion is represented
/// explicitly rather than by an overflowing float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    Finite(f64),
    Infinite,
}

impl Radius {
    pub fn finite(self) -> Option<f64> {
        match self {
            Radius::Finite(r) => Some(r),
            Radius::Infinite => None,
        }
    }
}

/// Steady circular motion under constant steering `alpha_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub alpha_e: f64,
    pub beta3_e: f64,
    pub beta2_e: f64,
    /// Truck rear axle radius.
    pub r1: Radius,
    /// Dolly axle radius.
    pub r2: Radius,
    /// Trailer axle radius.
    pub r3: Radius,
}

/// Internal-angle dynamics linearized around a circular equilibrium:
/// `d/dt (beta - beta_e) = a (beta - beta_e) + b (alpha - alpha_e)` with
/// `beta = [beta3, beta2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub equilibrium: EquilibriumPoint,
    pub v_design: f64,
}

fn check_steering(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha.abs() < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::SteeringDomain { alpha })
    }
}

#[inline]
fn rates(state: &Vector5<f64>, tan_alpha: f64, v: f64, p: &VehicleParams) -> Vector5<f64> {
    let (theta3, beta3, beta2) = (state[2], state[3], state[4]);
    let k = p.m1 / p.l1;
    let (s3, c3) = beta3.sin_cos();
    let c2 = beta2.cos();
    let t2 = beta2.tan();
    let hitch = 1.0 + k * t2 * tan_alpha;
    let speed3 = v * c3 * c2 * hitch;
    let (sth, cth) = theta3.sin_cos();
    Vector5::new(
        speed3 * cth,
        speed3 * sth,
        v * s3 * c2 / p.l3 * hitch,
        v * c2 * ((t2 - k * tan_alpha) / p.l2 - s3 / p.l3 * hitch),
        v * (tan_alpha / p.l1 - beta2.sin() / p.l2 + p.m1 / (p.l1 * p.l2) * c2 * tan_alpha),
    )
}

/// Time derivative of the generalized coordinates
/// `(x3, y3, theta3, beta3, beta2)`.
pub fn derivatives(state: &VehicleState, input: &ControlInput, params: &VehicleParams) -> Result<Vector5<f64>> {
    check_steering(input.alpha)?;
    Ok(rates(&state.to_vector(), input.alpha.tan(), input.v, params))
}

/// One classical Runge–Kutta step with the input held over `dt`.
pub fn step(state: &VehicleState, input: &ControlInput, params: &VehicleParams, dt: f64) -> Result<VehicleState> {
    check_steering(input.alpha)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    Ok(rk4(state, input.alpha.tan(), input.v, params, dt))
}

/// RK4 without domain checks; `tan_alpha` is precomputed by the caller.
pub(crate) fn rk4(state: &VehicleState, tan_alpha: f64, v: f64, params: &VehicleParams, dt: f64) -> VehicleState {
    let x = state.to_vector();
    let k1 = rates(&x, tan_alpha, v, params);
    let k2 = rates(&(x + k1 * (dt / 2.0)), tan_alpha, v, params);
    let k3 = rates(&(x + k2 * (dt / 2.0)), tan_alpha, v, params);
    let k4 = rates(&(x + k3 * dt), tan_alpha, v, params);
    let next = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    VehicleState::from_vector(&next).normalized()
}

/// Largest steering angle with a circular equilibrium: the trailer circle
/// collapses to a point at this limit.
pub fn alpha_max(params: &VehicleParams) -> f64 {
    let denom = params.l3 * params.l3 + params.l2 * params.l2 - params.m1 * params.m1;
    (params.l1 * params.l1 / denom).sqrt().atan()
}

/// Circular equilibrium for constant steering `alpha_e`.
pub fn equilibrium(alpha_e: f64, params: &VehicleParams) -> Result<EquilibriumPoint> {
    let limit = alpha_max(params);
    if !(alpha_e.abs() < limit) {
        return Err(Error::BeyondLinearizationLimit { alpha_e, alpha_max: limit });
    }
    if alpha_e == 0.0 {
        return Ok(EquilibriumPoint {
            alpha_e,
            beta3_e: 0.0,
            beta2_e: 0.0,
            r1: Radius::Infinite,
            r2: Radius::Infinite,
            r3: Radius::Infinite,
        });
    }
    let r1 = params.l1 / alpha_e.abs().tan();
    let r2 = (r1 * r1 + params.m1 * params.m1 - params.l2 * params.l2).sqrt();
    let r3 = (r2 * r2 - params.l3 * params.l3).sqrt();
    let sign = alpha_e.signum();
    Ok(EquilibriumPoint {
        alpha_e,
        beta3_e: sign * (params.l3 / r3).atan(),
        beta2_e: sign * ((params.m1 / r1).atan() + (params.l2 / r2).atan()),
        r1: Radius::Finite(r1),
        r2: Radius::Finite(r2),
        r3: Radius::Finite(r3),
    })
}

/// Analytic Jacobians of `(beta3', beta2')` with respect to
/// `(beta3, beta2)` and `alpha`, evaluated at an arbitrary point.
pub fn internal_jacobians(
    beta3: f64,
    beta2: f64,
    alpha: f64,
    v: f64,
    p: &VehicleParams,
) -> (Matrix2<f64>, Vector2<f64>) {
    let k = p.m1 / p.l1;
    let (s3, c3) = beta3.sin_cos();
    let (s2, c2) = beta2.sin_cos();
    let ta = alpha.tan();
    let sec2 = 1.0 + ta * ta;

    let d3_db3 = -v * c3 * (c2 + k * s2 * ta) / p.l3;
    let d3_db2 = v * ((c2 + k * ta * s2) / p.l2 - s3 * (k * c2 * ta - s2) / p.l3);
    let d2_db2 = -v * (c2 + k * s2 * ta) / p.l2;
    let d3_da = -v * k * sec2 * (c2 / p.l2 + s3 * s2 / p.l3);
    let d2_da = v * sec2 * (1.0 / p.l1 + k * c2 / p.l2);

    (Matrix2::new(d3_db3, d3_db2, 0.0, d2_db2), Vector2::new(d3_da, d2_da))
}

/// Linearizes the internal-angle dynamics around the equilibrium of `alpha_e`.
pub fn linearize(alpha_e: f64, v_design: f64, params: &VehicleParams) -> Result<LinearModel> {
    if v_design == 0.0 || !v_design.is_finite() {
        return Err(Error::invalid("v_design", "must be finite and non-zero"));
    }
    let eq = equilibrium(alpha_e, params)?;
    let (a, b) = internal_jacobians(eq.beta3_e, eq.beta2_e, alpha_e, v_design, params);
    Ok(LinearModel { a, b, equilibrium: eq, v_design })
}

/// Position and heading of one body of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Dolly-axle and truck-rear-axle poses implied by the generalized
/// coordinates. The trailer pose is `(x3, y3, theta3)` itself. Each drawbar
/// lies along the heading of the body it belongs to: the trailer's from its
/// axle to the dolly axle, the dolly's from its axle to the hitch, and the
/// hitch sits `M1` behind the truck rear axle.
pub fn body_poses(state: &VehicleState, params: &VehicleParams) -> (Pose, Pose) {
    let theta2 = state.theta3 + state.beta3;
    let theta1 = theta2 + state.beta2;
    let (s3, c3) = state.theta3.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    let (s1, c1) = theta1.sin_cos();
    let dolly = Pose { x: state.x3 + params.l3 * c3, y: state.y3 + params.l3 * s3, heading: wrap_angle(theta2) };
    let hitch_x = dolly.x + params.l2 * c2;
    let hitch_y = dolly.y + params.l2 * s2;
    let truck = Pose { x: hitch_x + params.m1 * c1, y: hitch_y + params.m1 * s1, heading: wrap_angle(theta1) };
    (truck, dolly)
}
