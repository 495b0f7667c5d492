//! Gain-scheduled LQ stabilization of the internal angles.
//!
//! A Riccati solution is computed at each scheduled linearization point
//! `alpha_e`; at run time the gain is interpolated and combined with the
//! static pre-compensation map from a desired trailer angle to `alpha_e`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Complex, Matrix2, Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{alpha_max, equilibrium, linearize, LinearModel, VehicleParams};

/// Fraction of the linearization limit covered by the schedule.
pub const SCHEDULE_RANGE_FRACTION: f64 = 0.95;
pub const DEFAULT_GRID_COUNT: usize = 101;
/// Canonical design speed: unit speed in reverse.
pub const DESIGN_SPEED: f64 = -1.0;

/// Weights of the quadratic cost on `beta - beta_e` and `alpha - alpha_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqWeights {
    #[serde(rename = "Q")]
    pub q: [[f64; 2]; 2],
    #[serde(rename = "R")]
    pub r: f64,
}

impl Default for LqWeights {
    fn default() -> Self {
        Self::diagonal(10.0, 10.0)
    }
}

impl LqWeights {
    pub fn diagonal(q_beta3: f64, q_beta2: f64) -> Self {
        Self { q: [[q_beta3, 0.0], [0.0, q_beta2]], r: 1.0 }
    }

    pub fn q_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.q[0][0], self.q[0][1], self.q[1][0], self.q[1][1])
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q_matrix();
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("weights.Q", "entries must be finite"));
        }
        let scale = q.abs().max().max(1.0);
        if (q[(0, 1)] - q[(1, 0)]).abs() > 1e-12 * scale {
            return Err(Error::invalid("weights.Q", "must be symmetric"));
        }
        let eig = q.symmetric_eigenvalues();
        if eig.min() < -1e-12 * scale {
            return Err(Error::invalid("weights.Q", "must be positive semidefinite"));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::invalid("weights.R", format!("must be positive, got {}", self.r)));
        }
        Ok(())
    }
}

/// Solves `Aᵀ X + X A + C = 0` for symmetric `C` (2×2, three unknowns).
pub fn solve_lyapunov(a: &Matrix2<f64>, c: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let m = Matrix3::new(
        2.0 * a11,
        2.0 * a21,
        0.0, //
        a12,
        a11 + a22,
        a21, //
        0.0,
        2.0 * a12,
        2.0 * a22,
    );
    let rhs = -Vector3::new(c[(0, 0)], 0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)]);
    let x = m.lu().solve(&rhs).ok_or_else(|| Error::NoStabilizingSolution("singular Lyapunov operator".into()))?;
    Ok(Matrix2::new(x[0], x[1], x[1], x[2]))
}

/// `AᵀP + PA − P B R⁻¹ Bᵀ P + Q`
pub fn care_residual(a: &Matrix2<f64>, b: &Vector2<f64>, weights: &LqWeights, p: &Matrix2<f64>) -> Matrix2<f64> {
    let pb = p * b;
    a.transpose() * p + p * a - pb * pb.transpose() / weights.r + weights.q_matrix()
}

fn is_hurwitz(m: &Matrix2<f64>) -> bool {
    // 2×2: trace < 0 and det > 0
    m.trace() < 0.0 && m.determinant() > 0.0
}

/// Newton iteration on the Riccati equation, starting from a stabilizing
/// feedback `initial_gain`. Each iterate solves a Lyapunov equation for the
/// cost of the current gain and updates the gain from it.
pub fn kleinman_newton(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    weights: &LqWeights,
    initial_gain: &Vector2<f64>,
    max_iterations: usize,
) -> Result<Matrix2<f64>> {
    let q = weights.q_matrix();
    let mut gain = *initial_gain;
    let mut previous: Option<Matrix2<f64>> = None;
    for _ in 0..max_iterations {
        let closed = a - b * gain.transpose();
        if !is_hurwitz(&closed) {
            return Err(Error::NoStabilizingSolution("Newton iterate lost closed-loop stability".into()));
        }
        let p = solve_lyapunov(&closed, &(q + gain * gain.transpose() * weights.r))?;
        let p = (p + p.transpose()) * 0.5;
        gain = p.transpose() * b / weights.r;
        if let Some(prev) = previous {
            if (p - prev).abs().max() <= 1e-15 * (1.0 + p.abs().max()) {
                return Ok(p);
            }
        }
        previous = Some(p);
    }
    previous.ok_or_else(|| Error::NoStabilizingSolution("no Newton iterations run".into()))
}

fn hamiltonian(a: &Matrix2<f64>, b: &Vector2<f64>, weights: &LqWeights) -> Matrix4<f64> {
    let s = b * b.transpose() / weights.r;
    let q = weights.q_matrix();
    let mut h = Matrix4::zeros();
    h.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    h.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-s));
    h.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-q));
    h.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-a.transpose()));
    h
}

/// Stabilizing solution of the Riccati equation from the stable invariant
/// subspace of the Hamiltonian, without refinement.
pub fn care_hamiltonian(a: &Matrix2<f64>, b: &Vector2<f64>, weights: &LqWeights) -> Result<Matrix2<f64>> {
    let h = hamiltonian(a, b, weights);
    let scale = h.abs().max().max(1.0);
    let eigenvalues = h.complex_eigenvalues().iter().copied().collect::<Vec<Complex<f64>>>();
    if eigenvalues.iter().any(|l| l.re.abs() <= 1e-10 * scale) {
        return Err(Error::NoStabilizingSolution("Hamiltonian has eigenvalues on the imaginary axis".into()));
    }
    let stable: Vec<Complex<f64>> = eigenvalues.into_iter().filter(|l| l.re < 0.0).collect();
    if stable.len() != 2 {
        return Err(Error::NoStabilizingSolution(format!(
            "expected two stable Hamiltonian eigenvalues, found {}",
            stable.len()
        )));
    }
    // (H − λ1)(H − λ2) is real for a conjugate pair or two real roots; its
    // kernel is the stable invariant subspace.
    let sum = (stable[0] + stable[1]).re;
    let product = (stable[0] * stable[1]).re;
    let annihilator = h * h - h * sum + Matrix4::identity() * product;
    let svd = annihilator.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::NoStabilizingSolution("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let (k0, k1) = (order[0], order[1]);
    if svd.singular_values[order[2]] <= 1e-8 * svd.singular_values[order[3]].max(f64::MIN_POSITIVE) {
        return Err(Error::NoStabilizingSolution("stable invariant subspace is degenerate".into()));
    }
    let basis0 = v_t.row(k0).transpose();
    let basis1 = v_t.row(k1).transpose();
    let u1 = Matrix2::new(basis0[0], basis1[0], basis0[1], basis1[1]);
    let u2 = Matrix2::new(basis0[2], basis1[2], basis0[3], basis1[3]);
    let u1_inv = u1
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution("stable subspace is not a graph over the state".into()))?;
    let p = u2 * u1_inv;
    Ok((p + p.transpose()) * 0.5)
}

/// Stabilizing solution `P` of `AᵀP + PA − P B R⁻¹ Bᵀ P + Q = 0`.
///
/// The Hamiltonian subspace solution is polished with Newton steps, then
/// checked for residual and positive semidefiniteness.
pub fn solve_care(a: &Matrix2<f64>, b: &Vector2<f64>, weights: &LqWeights) -> Result<Matrix2<f64>> {
    let p0 = care_hamiltonian(a, b, weights)?;
    let gain0 = p0 * b / weights.r;
    let p = kleinman_newton(a, b, weights, &gain0, 8).unwrap_or(p0);
    let residual = care_residual(a, b, weights, &p).abs().max();
    if residual >= 1e-9 * (1.0 + p.abs().max()) {
        return Err(Error::NoStabilizingSolution(format!("residual {residual:e} too large")));
    }
    // Semidefinite is admissible: a stable mode with zero state weight has
    // zero cost.
    if p.symmetric_eigenvalues().min() < -1e-12 * (1.0 + p.abs().max()) {
        return Err(Error::NoStabilizingSolution("solution is not positive semidefinite".into()));
    }
    Ok(p)
}

/// Optimal state feedback `L = R⁻¹ Bᵀ P` as `[l_beta3, l_beta2]`.
pub fn lq_gain(model: &LinearModel, weights: &LqWeights) -> Result<Vector2<f64>> {
    let p = solve_care(&model.a, &model.b, weights)?;
    Ok(p * model.b / weights.r)
}

/// LQ gains tabulated over a symmetric grid of linearization points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub grid: Vec<f64>,
    /// `[l_beta3, l_beta2]` per grid point.
    pub gains: Vec<[f64; 2]>,
    pub weights: LqWeights,
    pub params: VehicleParams,
    pub v_design: f64,
}

/// Builds the schedule over `(−0.95·αmax, 0.95·αmax)` with `grid_count`
/// points, spaced evenly in `beta3_e`. Gains at mirrored points agree to 1e-8 before being averaged so
/// the stored table is exactly even.
pub fn build_schedule(params: &VehicleParams, weights: &LqWeights, grid_count: usize) -> Result<GainSchedule> {
    params.validate()?;
    weights.validate()?;
    if grid_count < 3 || grid_count.is_multiple_of(2) {
        return Err(Error::invalid("grid_count", format!("must be odd and at least 3, got {grid_count}")));
    }
    let half = (grid_count - 1) / 2;
    let edge = SCHEDULE_RANGE_FRACTION * alpha_max(params);
    // evenly spaced in the equilibrium trailer angle, which crowds points
    // toward the edge where the gains bend fastest
    let beta3_edge = equilibrium(edge, params)?.beta3_e;
    let positive: Vec<f64> = (1..=half)
        .map(|i| match i {
            _ if i == half => Ok(edge),
            _ => precompensate(beta3_edge * i as f64 / half as f64, params),
        })
        .collect::<Result<_>>()?;
    let grid: Vec<f64> =
        positive.iter().rev().map(|a| -a).chain(std::iter::once(0.0)).chain(positive.iter().copied()).collect();

    let mut raw = Vec::with_capacity(grid_count);
    for &alpha_e in &grid {
        let model = linearize(alpha_e, DESIGN_SPEED, params)?;
        let gain = lq_gain(&model, weights)?;
        let closed = model.a - model.b * gain.transpose();
        if !is_hurwitz(&closed) {
            return Err(Error::NoStabilizingSolution(format!("closed loop unstable at alpha_e = {alpha_e}")));
        }
        raw.push(gain);
    }

    let mut gains = Vec::with_capacity(grid_count);
    for i in 0..grid_count {
        let (g, mirror) = (raw[i], raw[grid_count - 1 - i]);
        if (g - mirror).abs().max() > 1e-8 * (1.0 + g.abs().max()) {
            return Err(Error::NoStabilizingSolution(format!("gain schedule is not even at alpha_e = {}", grid[i])));
        }
        let even = (g + mirror) * 0.5;
        gains.push([even[0], even[1]]);
    }

    Ok(GainSchedule { grid, gains, weights: *weights, params: *params, v_design: DESIGN_SPEED })
}

impl GainSchedule {
    /// Largest scheduled `|alpha_e|`.
    pub fn max_alpha_e(&self) -> f64 {
        *self.grid.last().expect("schedule grid is non-empty")
    }

    fn center(&self) -> usize {
        (self.grid.len() - 1) / 2
    }
}

/// Linear interpolation of the schedule, evaluated on `|alpha_e|` so the
/// result is exactly even.
pub fn lookup_gain(schedule: &GainSchedule, alpha_e: f64) -> Result<[f64; 2]> {
    let limit = schedule.max_alpha_e();
    let magnitude = alpha_e.abs();
    if !(magnitude <= limit) {
        return Err(Error::OutOfSchedule { alpha_e, limit });
    }
    let grid = &schedule.grid[schedule.center()..];
    let gains = &schedule.gains[schedule.center()..];
    let upper = grid.partition_point(|&g| g <= magnitude);
    if upper >= grid.len() {
        return Ok(gains[grid.len() - 1]);
    }
    let lower = upper - 1;
    let t = (magnitude - grid[lower]) / (grid[upper] - grid[lower]);
    let (a, b) = (gains[lower], gains[upper]);
    Ok([(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]])
}

/// Steering linearization point whose equilibrium has trailer angle
/// `beta3_e`; inverse of the `beta3_e` component of [`equilibrium`].
pub fn precompensate(beta3_e: f64, params: &VehicleParams) -> Result<f64> {
    if !(beta3_e.abs() < FRAC_PI_2) {
        return Err(Error::TrailerAngleDomain { beta3_e });
    }
    if beta3_e == 0.0 {
        return Ok(0.0);
    }
    let t = beta3_e.abs().tan();
    let denom = (params.l3 * params.l3 * (1.0 + 1.0 / (t * t)) + params.l2 * params.l2 - params.m1 * params.m1).sqrt();
    Ok(beta3_e.signum() * (params.l1 / denom).atan())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizerOutput {
    /// Steering command after saturation.
    pub alpha: f64,
    pub alpha_e: f64,
    /// The unsaturated command exceeded the steering limit.
    pub saturated: bool,
    /// The trailer-angle reference was clamped to the schedulable range.
    pub reference_clamped: bool,
}

/// Largest equilibrium steering angle and trailer-angle reference the
/// stabilizer will command: whichever of the steering limit and the schedule
/// edge is tighter.
pub fn reference_caps(params: &VehicleParams, schedule_edge: f64) -> (f64, f64) {
    let alpha_cap = params.alpha_limit.min(schedule_edge);
    let beta3_cap = equilibrium(alpha_cap, params).map(|eq| eq.beta3_e).unwrap_or(0.0);
    (alpha_cap, beta3_cap)
}

/// `alpha = alpha_e − L(alpha_e)(beta − beta_e)` with `alpha_e` obtained
/// from the trailer-angle reference, saturated to the steering limit.
pub fn stabilizing_control(beta3: f64, beta2: f64, beta3_ref: f64, schedule: &GainSchedule) -> StabilizerOutput {
    let params = &schedule.params;
    let (alpha_cap, beta3_cap) = reference_caps(params, schedule.max_alpha_e());
    let clamped_ref = beta3_ref.clamp(-beta3_cap, beta3_cap);
    let alpha_e = precompensate(clamped_ref, params).unwrap_or(0.0).clamp(-alpha_cap, alpha_cap);
    let eq = equilibrium(alpha_e, params).expect("alpha_e clamped inside the linearization range");
    let gain = lookup_gain(schedule, alpha_e).expect("alpha_e clamped inside the schedule");
    let raw = alpha_e - (gain[0] * (beta3 - eq.beta3_e) + gain[1] * (beta2 - eq.beta2_e));
    let alpha = raw.clamp(-params.alpha_limit, params.alpha_limit);
    StabilizerOutput {
        alpha,
        alpha_e,
        saturated: raw.abs() > params.alpha_limit,
        reference_clamped: clamped_ref != beta3_ref,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_case() -> (Matrix2<f64>, Vector2<f64>, LqWeights) {
        (Matrix2::new(1.0, 0.0, 0.0, -10.0), Vector2::new(1.0, 0.0), LqWeights { q: [[1.0, 0.0], [0.0, 0.0]], r: 1.0 })
    }

    #[test]
    fn scalar_embedded_riccati() {
        let (a, b, w) = scalar_case();
        let p = solve_care(&a, &b, &w).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0 + 2f64.sqrt(), epsilon = 1e-9);
        assert!(p[(0, 1)].abs() < 1e-12 && p[(1, 0)].abs() < 1e-12);
        assert!(p[(1, 1)].abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_route_alone_solves_scalar_case() {
        let (a, b, w) = scalar_case();
        let p0 = care_hamiltonian(&a, &b, &w).unwrap();
        assert_relative_eq!(p0[(0, 0)], 1.0 + 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn zero_drift_plant() {
        let a = Matrix2::zeros();
        let b = Vector2::new(1.0, 1.0);
        let w = LqWeights::diagonal(1.0, 1.0);
        // (A, B) is not stabilizable: the mode along [1, −1] is uncontrollable
        // with a zero eigenvalue.
        assert!(solve_care(&a, &b, &w).is_err());
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = Matrix2::new(-1.0, 2.0, -0.5, -3.0);
        let c = Matrix2::new(2.0, 0.3, 0.3, 1.0);
        let x = solve_lyapunov(&a, &c).unwrap();
        let r = a.transpose() * x + x * a + c;
        assert!(r.abs().max() < 1e-12);
    }

    #[test]
    fn precompensation_examples() {
        let p = VehicleParams::test_platform();
        assert_eq!(precompensate(0.0, &p).unwrap(), 0.0);
        assert!((precompensate(0.3812, &p).unwrap() - 0.2).abs() < 1e-3);
        let near = precompensate(FRAC_PI_2 - 1e-9, &p).unwrap();
        assert_relative_eq!(near, alpha_max(&p), epsilon = 1e-8);
        assert!(precompensate(FRAC_PI_2, &p).is_err());
    }

    #[test]
    fn schedule_shape() {
        let p = VehicleParams::test_platform();
        let s = build_schedule(&p, &LqWeights::default(), 3).unwrap();
        assert_eq!(s.grid.len(), 3);
        assert_eq!(s.grid[1], 0.0);
        assert_eq!(s.grid[0], -s.grid[2]);
        assert_eq!(s.gains[0], s.gains[2]);
        assert!(build_schedule(&p, &LqWeights::default(), 4).is_err());
        assert!(build_schedule(&p, &LqWeights::default(), 1).is_err());
    }

    #[test]
    fn lookup_interpolates() {
        let p = VehicleParams::test_platform();
        let s = build_schedule(&p, &LqWeights::default(), 11).unwrap();
        for (g, gain) in s.grid.iter().zip(&s.gains) {
            assert_eq!(lookup_gain(&s, *g).unwrap(), *gain);
        }
        let mid = 0.5 * (s.grid[7] + s.grid[8]);
        let got = lookup_gain(&s, mid).unwrap();
        for (k, g) in got.iter().enumerate() {
            assert_relative_eq!(*g, 0.5 * (s.gains[7][k] + s.gains[8][k]), epsilon = 1e-14);
        }
        assert!(matches!(lookup_gain(&s, s.max_alpha_e() * 1.001), Err(Error::OutOfSchedule { .. })));
    }

    #[test]
    fn stabilizer_holds_equilibrium() {
        let p = VehicleParams::test_platform();
        let s = build_schedule(&p, &LqWeights::default(), 101).unwrap();
        assert_eq!(stabilizing_control(0.0, 0.0, 0.0, &s).alpha, 0.0);
        let eq = equilibrium(0.2, &p).unwrap();
        let out = stabilizing_control(eq.beta3_e, eq.beta2_e, eq.beta3_e, &s);
        assert_relative_eq!(out.alpha, 0.2, epsilon = 1e-12);
        assert!(!out.saturated);
    }

    #[test]
    fn weights_validation() {
        let bad = LqWeights { q: [[1.0, 0.5], [0.0, 1.0]], r: 1.0 };
        assert!(matches!(bad.validate(), Err(Error::Invalid { field, .. }) if field == "weights.Q"));
        let indefinite = LqWeights { q: [[1.0, 0.0], [0.0, -1.0]], r: 1.0 };
        assert!(indefinite.validate().is_err());
        assert!(LqWeights { r: 0.0, ..LqWeights::default() }.validate().is_err());
    }
}
