//! Cascaded closed-loop simulation.
//!
//! Three nested rates run in lockstep: the path follower updates the
//! trailer-angle reference (or forward steering) at `tracker_hz`, the LQ
//! stabilizer updates the steering command at `stabilizer_hz`, and the
//! kinematics are integrated with RK4 at `integrator_dt`. Commands are held
//! between updates. One trace row is emitted per stabilizer tick.

pub mod io;
pub mod metrics;
pub mod paths;
pub mod roa;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::{build_schedule, stabilizing_control, GainSchedule, LqWeights, DEFAULT_GRID_COUNT};
use crate::model::{body_poses, rk4, Pose, VehicleParams, VehicleState};
use crate::tracker::{
    anchor_pose, leg_status, tracker_tick, Command, Direction, LegStatus, PiecewiseLinearPath, TrackerConfig,
    TrackerState,
};

pub use crate::model::body_poses as derive_body_poses;
pub use metrics::{tracking_errors, tracking_report, Body, BodyErrors, TrackingReport};

/// A run is stopped as jackknifed once either internal angle reaches this.
pub const JACKKNIFE_ANGLE: f64 = 85.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub stabilizer_hz: f64,
    pub tracker_hz: f64,
    pub integrator_dt: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { stabilizer_hz: 100.0, tracker_hz: 10.0, integrator_dt: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceConfig {
    /// Half-width of the steering backlash dead-zone, radians.
    pub steering_backlash_halfwidth: f64,
    /// Standard deviation of noise on measured `beta2`, `beta3`.
    pub angle_noise_sigma: f64,
    /// Standard deviation of noise on measured `x3`, `y3`.
    pub position_noise_sigma: f64,
    pub rng_seed: u64,
}

/// Speed magnitude used when a scenario omits `speed`, m/s.
pub const DEFAULT_SPEED: f64 = 0.2;
/// Simulated-time budget used when a scenario omits `max_sim_time`, s.
pub const DEFAULT_MAX_SIM_TIME: f64 = 120.0;

fn default_speed() -> f64 {
    DEFAULT_SPEED
}

fn default_max_sim_time() -> f64 {
    DEFAULT_MAX_SIM_TIME
}

fn default_grid_count() -> usize {
    DEFAULT_GRID_COUNT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub params: VehicleParams,
    #[serde(default)]
    pub weights: LqWeights,
    #[serde(default)]
    pub tracker: TrackerConfig,
    pub path: PiecewiseLinearPath,
    pub initial_state: VehicleState,
    /// Magnitude of the longitudinal speed; the sign follows each leg.
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub disturbances: DisturbanceConfig,
    #[serde(default = "default_max_sim_time")]
    pub max_sim_time: f64,
    #[serde(default = "default_grid_count")]
    pub schedule_grid_count: usize,
}

fn prefixed(prefix: &str, err: Error) -> Error {
    match err {
        Error::Invalid { field, reason } => Error::Invalid { field: format!("{prefix}.{field}"), reason },
        other => other,
    }
}

fn near_integer(x: f64) -> Option<u64> {
    let r = x.round();
    ((x - r).abs() <= 1e-9 * x.abs().max(1.0) && r >= 1.0).then_some(r as u64)
}

/// Integer tick ratios derived from [`Rates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub stabilizer_ticks_per_tracker_tick: u64,
    pub substeps: u64,
    pub dt: f64,
    pub total_ticks: u64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| prefixed("params", e))?;
        self.weights.validate()?;
        self.tracker.validate()?;
        self.path.validate()?;
        let s = &self.initial_state;
        if ![s.x3, s.y3, s.theta3, s.beta3, s.beta2].iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("initial_state", "all coordinates must be finite"));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(Error::invalid("speed", "must be positive"));
        }
        if !(self.max_sim_time.is_finite() && self.max_sim_time > 0.0) {
            return Err(Error::invalid("max_sim_time", "must be positive"));
        }
        if self.schedule_grid_count < 3 || self.schedule_grid_count.is_multiple_of(2) {
            return Err(Error::invalid("schedule_grid_count", "must be odd and at least 3"));
        }
        let d = &self.disturbances;
        for (name, value) in [
            ("disturbances.steering_backlash_halfwidth", d.steering_backlash_halfwidth),
            ("disturbances.angle_noise_sigma", d.angle_noise_sigma),
            ("disturbances.position_noise_sigma", d.position_noise_sigma),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        self.timing().map(|_| ())
    }

    pub fn timing(&self) -> Result<Timing> {
        let r = &self.rates;
        if !(r.tracker_hz.is_finite() && r.tracker_hz > 0.0) {
            return Err(Error::invalid("rates.tracker_hz", "must be positive"));
        }
        if !(r.stabilizer_hz.is_finite() && r.stabilizer_hz >= r.tracker_hz) {
            return Err(Error::invalid("rates.stabilizer_hz", "must be at least tracker_hz"));
        }
        if !(r.integrator_dt > 0.0 && r.integrator_dt <= 1.0 / r.stabilizer_hz * (1.0 + 1e-12)) {
            return Err(Error::invalid("rates.integrator_dt", "must lie in (0, 1/stabilizer_hz]"));
        }
        let ratio = near_integer(r.stabilizer_hz / r.tracker_hz)
            .ok_or_else(|| Error::invalid("rates.tracker_hz", "must divide stabilizer_hz"))?;
        let substeps = near_integer(1.0 / (r.stabilizer_hz * r.integrator_dt))
            .ok_or_else(|| Error::invalid("rates.integrator_dt", "must divide the stabilizer period"))?;
        Ok(Timing {
            stabilizer_ticks_per_tracker_tick: ratio,
            substeps,
            dt: 1.0 / (r.stabilizer_hz * substeps as f64),
            total_ticks: (self.max_sim_time * r.stabilizer_hz).round() as u64,
        })
    }

    pub fn build_schedule(&self) -> Result<GainSchedule> {
        build_schedule(&self.params, &self.weights, self.schedule_grid_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStatus {
    GoalReached,
    Jackknifed,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    #[serde(flatten)]
    pub state: VehicleState,
    pub alpha_cmd: f64,
    pub beta3_ref: f64,
    pub v: f64,
    pub leg_index: usize,
    pub saturated: bool,
    pub jackknifed: bool,
    pub truck_pose: Pose,
    pub dolly_pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub stabilizer_hz: f64,
    pub rows: Vec<TraceRow>,
}

impl SimulationTrace {
    pub fn duration(&self) -> f64 {
        self.rows.len() as f64 / self.stabilizer_hz
    }
}

/// Steering play: the output only follows once the command leaves a band of
/// `±half_width` around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backlash {
    pub half_width: f64,
    pub output: f64,
}

impl Backlash {
    pub fn new(half_width: f64) -> Self {
        Self { half_width, output: 0.0 }
    }

    pub fn apply(&mut self, command: f64) -> f64 {
        if command > self.output + self.half_width {
            self.output = command - self.half_width;
        } else if command < self.output - self.half_width {
            self.output = command + self.half_width;
        }
        self.output
    }
}

struct Sensor {
    rng: ChaCha8Rng,
    angle: Option<Normal<f64>>,
    position: Option<Normal<f64>>,
}

impl Sensor {
    fn new(d: &DisturbanceConfig) -> Self {
        let normal = |sigma: f64| (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("validated sigma"));
        Self {
            rng: ChaCha8Rng::seed_from_u64(d.rng_seed),
            angle: normal(d.angle_noise_sigma),
            position: normal(d.position_noise_sigma),
        }
    }

    fn measure(&mut self, truth: &VehicleState) -> VehicleState {
        let mut m = *truth;
        if let Some(n) = self.angle {
            m.beta3 += n.sample(&mut self.rng);
            m.beta2 += n.sample(&mut self.rng);
        }
        if let Some(n) = self.position {
            m.x3 += n.sample(&mut self.rng);
            m.y3 += n.sample(&mut self.rng);
        }
        m
    }
}

/// Step-wise closed-loop run. Iterating yields one [`TraceRow`] per
/// stabilizer tick; [`Simulation::status`] is set once the run ends.
pub struct Simulation<'a> {
    scenario: &'a SimScenario,
    schedule: &'a GainSchedule,
    timing: Timing,
    state: VehicleState,
    tracker: TrackerState,
    tick: u64,
    beta3_ref: f64,
    forward_alpha: f64,
    v: f64,
    stopping: bool,
    backlash: Backlash,
    sensor: Sensor,
    status: Option<CompletionStatus>,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a SimScenario, schedule: &'a GainSchedule) -> Result<Self> {
        scenario.validate()?;
        if schedule.params != scenario.params {
            return Err(Error::invalid("schedule", "built for different vehicle parameters"));
        }
        Ok(Self {
            scenario,
            schedule,
            timing: scenario.timing()?,
            state: scenario.initial_state.normalized(),
            tracker: TrackerState::default(),
            tick: 0,
            beta3_ref: 0.0,
            forward_alpha: 0.0,
            v: 0.0,
            stopping: false,
            backlash: Backlash::new(scenario.disturbances.steering_backlash_halfwidth),
            sensor: Sensor::new(&scenario.disturbances),
            status: None,
        })
    }

    pub fn status(&self) -> Option<CompletionStatus> {
        self.status
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    fn direction(&self) -> Direction {
        self.scenario.path.legs[self.tracker.leg_index].direction
    }

    fn is_last_leg(&self) -> bool {
        self.tracker.leg_index + 1 == self.scenario.path.legs.len()
    }

    fn advance_leg(&mut self) {
        self.tracker = TrackerState { leg_index: self.tracker.leg_index + 1, ..TrackerState::default() };
    }

    fn apply_command(&mut self, command: Command) {
        match command {
            Command::TrailerAngle(b) => self.beta3_ref = b,
            Command::Steering(a) => self.forward_alpha = a,
        }
    }

    fn tracker_update(&mut self, measured: &VehicleState) {
        let sc = self.scenario;
        if self.stopping {
            self.stopping = false;
            self.advance_leg();
        }
        let mut out = tracker_tick(measured, &sc.path, &self.tracker, &sc.tracker, &sc.params);
        while !self.is_last_leg() && out.leg_status != LegStatus::InProgress {
            let current = self.direction();
            let next = sc.path.legs[self.tracker.leg_index + 1].direction;
            if next != current {
                self.tracker = out.tracker;
                self.stopping = true;
                self.v = 0.0;
                return;
            }
            self.advance_leg();
            out = tracker_tick(measured, &sc.path, &self.tracker, &sc.tracker, &sc.params);
        }
        self.tracker = out.tracker;
        self.apply_command(out.command);
        self.v = self.direction().sign() * sc.speed;
    }
}

impl Iterator for Simulation<'_> {
    type Item = TraceRow;

    fn next(&mut self) -> Option<TraceRow> {
        if self.status.is_some() {
            return None;
        }
        if self.tick >= self.timing.total_ticks {
            self.status = Some(CompletionStatus::TimedOut);
            return None;
        }
        let sc = self.scenario;
        let params = &sc.params;
        let t = self.tick as f64 / sc.rates.stabilizer_hz;
        let measured = self.sensor.measure(&self.state);

        if self.tick.is_multiple_of(self.timing.stabilizer_ticks_per_tracker_tick) {
            self.tracker_update(&measured);
        }

        let direction = self.direction();
        let (alpha_cmd, saturated, beta3_ref) = match direction {
            Direction::Reverse => {
                let out = stabilizing_control(measured.beta3, measured.beta2, self.beta3_ref, self.schedule);
                (out.alpha, out.saturated, self.beta3_ref)
            }
            Direction::Forward => {
                let limit = params.alpha_limit;
                (self.forward_alpha.clamp(-limit, limit), self.forward_alpha.abs() > limit, 0.0)
            }
        };
        let applied = self.backlash.apply(alpha_cmd);

        let jackknifed = self.state.beta3.abs() >= JACKKNIFE_ANGLE || self.state.beta2.abs() >= JACKKNIFE_ANGLE;
        let (truck_pose, dolly_pose) = body_poses(&self.state, params);
        let row = TraceRow {
            t,
            state: self.state,
            alpha_cmd,
            beta3_ref,
            v: self.v,
            leg_index: self.tracker.leg_index,
            saturated,
            jackknifed,
            truck_pose,
            dolly_pose,
        };

        if jackknifed {
            self.status = Some(CompletionStatus::Jackknifed);
            return Some(row);
        }
        if !self.stopping && self.is_last_leg() {
            let anchor = anchor_pose(&measured, params, direction);
            match leg_status(&sc.path, &self.tracker, [anchor.x, anchor.y], &sc.tracker) {
                LegStatus::Reached => {
                    self.status = Some(CompletionStatus::GoalReached);
                    return Some(row);
                }
                // moving away from the goal; it cannot be reached any more
                LegStatus::Passed => {
                    self.status = Some(CompletionStatus::TimedOut);
                    return Some(row);
                }
                LegStatus::InProgress => {}
            }
        }

        let tan_alpha = applied.tan();
        for _ in 0..self.timing.substeps {
            self.state = rk4(&self.state, tan_alpha, self.v, params, self.timing.dt);
        }
        self.tick += 1;
        Some(row)
    }
}

/// Full closed-loop run plus tracking metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub trace: SimulationTrace,
    pub report: TrackingReport,
}

/// Runs a scenario against an already built schedule.
pub fn run(scenario: &SimScenario, schedule: &GainSchedule) -> Result<(SimulationTrace, CompletionStatus)> {
    let mut sim = Simulation::new(scenario, schedule)?;
    let rows: Vec<TraceRow> = sim.by_ref().collect();
    let status = sim.status().unwrap_or(CompletionStatus::TimedOut);
    Ok((SimulationTrace { stabilizer_hz: scenario.rates.stabilizer_hz, rows }, status))
}

pub fn simulate_with_schedule(scenario: &SimScenario, schedule: &GainSchedule) -> Result<SimOutcome> {
    let (trace, status) = run(scenario, schedule)?;
    let report = tracking_report(&trace, &scenario.path, None, status)?;
    Ok(SimOutcome { trace, report })
}

/// Builds the gain schedule and runs the scenario to completion.
pub fn simulate(scenario: &SimScenario) -> Result<SimOutcome> {
    scenario.validate()?;
    let schedule = scenario.build_schedule()?;
    simulate_with_schedule(scenario, &schedule)
}
