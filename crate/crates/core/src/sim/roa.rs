//! Region-of-attraction maps over initial internal angles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::PolylineIndex;
use super::{SimScenario, Simulation};
use crate::error::{Error, Result};
use crate::lqr::GainSchedule;
use crate::model::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoaGridSpec {
    /// Cells per axis; odd so that (0, 0) is a cell center.
    pub count: usize,
    /// Grid covers `[-half_width, half_width]` on both axes, radians.
    pub half_width: f64,
}

impl Default for RoaGridSpec {
    fn default() -> Self {
        Self { count: 61, half_width: 1.5 }
    }
}

impl RoaGridSpec {
    /// Axis values, exactly antisymmetric about the center cell.
    pub fn axis(&self) -> Vec<f64> {
        let center = (self.count - 1) / 2;
        let step = self.half_width / center as f64;
        (0..self.count)
            .map(|i| {
                let k = i as f64 - center as f64;
                k * step
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 3 || self.count.is_multiple_of(2) {
            return Err(Error::invalid("grid", "cell count must be odd and at least 3"));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::invalid("grid.half_width", "must be positive"));
        }
        Ok(())
    }
}

/// A run counts as converged once the trailer stays within
/// `lateral_tolerance` of the line with both internal angles below
/// `angle_tolerance` for `hold_time` seconds, inside `budget` seconds and
/// without jackknifing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoaCriterion {
    pub lateral_tolerance: f64,
    pub angle_tolerance: f64,
    pub hold_time: f64,
    pub budget: f64,
}

impl Default for RoaCriterion {
    fn default() -> Self {
        Self { lateral_tolerance: 0.02, angle_tolerance: 3f64.to_radians(), hold_time: 2.0, budget: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaMap {
    pub grid: RoaGridSpec,
    pub beta3: Vec<f64>,
    pub beta2: Vec<f64>,
    /// `converged[i][j]` for initial `(beta3[i], beta2[j])`.
    pub converged: Vec<Vec<bool>>,
    pub criterion: RoaCriterion,
    pub converged_fraction: f64,
}

impl RoaMap {
    pub fn cell(&self, beta3: f64, beta2: f64) -> Option<bool> {
        let nearest = |axis: &[f64], v: f64| {
            axis.iter().enumerate().min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs())).map(|(i, _)| i)
        };
        let i = nearest(&self.beta3, beta3)?;
        let j = nearest(&self.beta2, beta2)?;
        Some(self.converged[i][j])
    }

    /// A cell lies on the boundary when a 4-neighbour has the other class.
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        let n = self.grid.count as isize;
        let here = self.converged[i][j];
        [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            a >= 0 && b >= 0 && a < n && b < n && self.converged[a as usize][b as usize] != here
        })
    }

    /// Cell-exact symmetry under `(beta3, beta2) -> (-beta3, -beta2)`.
    pub fn is_point_symmetric(&self) -> bool {
        let n = self.grid.count;
        (0..n).all(|i| (0..n).all(|j| self.converged[i][j] == self.converged[n - 1 - i][n - 1 - j]))
    }
}

/// Runs one cell of the map from the given initial internal angles.
pub fn classify_cell(
    base: &SimScenario,
    schedule: &GainSchedule,
    line: &PolylineIndex,
    criterion: &RoaCriterion,
    beta3: f64,
    beta2: f64,
) -> Result<bool> {
    let mut scenario = base.clone();
    scenario.initial_state = VehicleState { beta3, beta2, ..base.initial_state };
    scenario.max_sim_time = criterion.budget;
    let hold_rows = (criterion.hold_time * scenario.rates.stabilizer_hz).round() as usize;
    let mut streak = 0usize;
    for row in Simulation::new(&scenario, schedule)? {
        if row.jackknifed {
            return Ok(false);
        }
        let settled = line.distance([row.state.x3, row.state.y3]) < criterion.lateral_tolerance
            && row.state.beta3.abs() < criterion.angle_tolerance
            && row.state.beta2.abs() < criterion.angle_tolerance;
        streak = if settled { streak + 1 } else { 0 };
        if streak >= hold_rows {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Classifies every grid cell. With `threads > 1` cells run on a dedicated
/// thread pool; the result is identical to the sequential map.
pub fn region_of_attraction(
    base: &SimScenario,
    grid: &RoaGridSpec,
    criterion: &RoaCriterion,
    threads: usize,
) -> Result<RoaMap> {
    base.validate()?;
    grid.validate()?;
    let schedule = base.build_schedule()?;
    let line = PolylineIndex::new(&base.path.legs.iter().map(|l| l.waypoints.clone()).collect::<Vec<_>>());
    let axis = grid.axis();
    let cells: Vec<(f64, f64)> = axis.iter().flat_map(|&b3| axis.iter().map(move |&b2| (b3, b2))).collect();
    let classify = |&(b3, b2): &(f64, f64)| classify_cell(base, &schedule, &line, criterion, b3, b2);

    let flags: Vec<bool> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid("parallel", e.to_string()))?;
        pool.install(|| cells.par_iter().map(classify).collect::<Result<Vec<_>>>())?
    } else {
        cells.iter().map(classify).collect::<Result<Vec<_>>>()?
    };

    let n = grid.count;
    let converged: Vec<Vec<bool>> = flags.chunks(n).map(|c| c.to_vec()).collect();
    let converged_fraction = flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64;
    Ok(RoaMap { grid: *grid, beta3: axis.clone(), beta2: axis, converged, criterion: *criterion, converged_fraction })
}
