//! Tracking-error metrics against a reference polyline.

use serde::{Deserialize, Serialize};

use super::{CompletionStatus, SimulationTrace};
use crate::error::{Error, Result};
use crate::tracker::{PiecewiseLinearPath, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Body {
    Trailer,
    Dolly,
    Truck,
}

impl Body {
    pub const ALL: [Body; 3] = [Body::Trailer, Body::Dolly, Body::Truck];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyErrors {
    pub mean_error: f64,
    pub max_error: f64,
    /// Per-row distance to the reference, meters.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub status: CompletionStatus,
    pub trailer: BodyErrors,
    pub dolly: BodyErrors,
    pub truck: BodyErrors,
}

impl SimulationTrace {
    /// Axle positions of one body, one point per row.
    pub fn body_polyline(&self, body: Body) -> Vec<Point> {
        self.rows
            .iter()
            .map(|r| match body {
                Body::Trailer => [r.state.x3, r.state.y3],
                Body::Dolly => [r.dolly_pose.x, r.dolly_pose.y],
                Body::Truck => [r.truck_pose.x, r.truck_pose.y],
            })
            .collect()
    }
}

fn point_segment_distance(q: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let f = [q[0] - a[0], q[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (f[0] * d[0] + f[1] * d[1]) / len2 } else { 0.0 };
    let nearest = if t <= 0.0 {
        a
    } else if t >= 1.0 {
        b
    } else {
        [a[0] + t * d[0], a[1] + t * d[1]]
    };
    (q[0] - nearest[0]).hypot(q[1] - nearest[1])
}

/// Nearest-point distance queries against a set of polylines, bucketed on a
/// uniform grid so long simulated references stay cheap to query.
#[derive(Debug, Clone)]
pub struct PolylineIndex {
    segments: Vec<(Point, Point)>,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

const MAX_CELLS_PER_AXIS: usize = 1024;

impl PolylineIndex {
    pub fn new(polylines: &[Vec<Point>]) -> Self {
        let mut segments = Vec::new();
        for line in polylines {
            match line.len() {
                0 => {}
                1 => segments.push((line[0], line[0])),
                _ => segments.extend(line.windows(2).map(|w| (w[0], w[1]))),
            }
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        let mut total = 0.0;
        for (a, b) in &segments {
            for p in [a, b] {
                lo = [lo[0].min(p[0]), lo[1].min(p[1])];
                hi = [hi[0].max(p[0]), hi[1].max(p[1])];
            }
            total += (b[0] - a[0]).hypot(b[1] - a[1]);
        }
        if segments.is_empty() {
            return Self { segments, origin: [0.0; 2], cell: 1.0, nx: 0, ny: 0, buckets: Vec::new() };
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let mean = total / segments.len() as f64;
        let cell = (2.0 * mean).max(extent / MAX_CELLS_PER_AXIS as f64).max(1e-6);
        let nx = ((hi[0] - lo[0]) / cell) as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell) as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, (a, b)) in segments.iter().enumerate() {
            let cx = |x: f64| (((x - lo[0]) / cell) as usize).min(nx - 1);
            let cy = |y: f64| (((y - lo[1]) / cell) as usize).min(ny - 1);
            for ix in cx(a[0].min(b[0]))..=cx(a[0].max(b[0])) {
                for iy in cy(a[1].min(b[1]))..=cy(a[1].max(b[1])) {
                    buckets[iy * nx + ix].push(k as u32);
                }
            }
        }
        Self { segments, origin: lo, cell, nx, ny, buckets }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Distance from `q` to the nearest point of any indexed polyline.
    pub fn distance(&self, q: Point) -> f64 {
        if self.segments.is_empty() {
            return f64::INFINITY;
        }
        let clamp = |v: f64, n: usize| ((v / self.cell).floor().max(0.0) as usize).min(n - 1);
        let cx = clamp(q[0] - self.origin[0], self.nx) as isize;
        let cy = clamp(q[1] - self.origin[1], self.ny) as isize;
        let max_ring = self.nx.max(self.ny) as isize;
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            for ix in (cx - ring)..=(cx + ring) {
                for iy in (cy - ring)..=(cy + ring) {
                    let on_ring = (ix - cx).abs() == ring || (iy - cy).abs() == ring;
                    if !on_ring || ix < 0 || iy < 0 || ix >= self.nx as isize || iy >= self.ny as isize {
                        continue;
                    }
                    for &k in &self.buckets[iy as usize * self.nx + ix as usize] {
                        let (a, b) = self.segments[k as usize];
                        best = best.min(point_segment_distance(q, a, b));
                    }
                }
            }
            // every segment not yet visited lies at least `ring * cell` away
            if best <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

/// Mean and max of the distances from `samples` to the indexed reference.
pub fn polyline_errors(samples: &[Point], reference: &PolylineIndex) -> Result<BodyErrors> {
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let errors: Vec<f64> = samples.iter().map(|&p| reference.distance(p)).collect();
    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(BodyErrors { mean_error, max_error, errors })
}

fn path_polylines(path: &PiecewiseLinearPath) -> Vec<Vec<Point>> {
    path.legs.iter().map(|l| l.waypoints.clone()).collect()
}

/// Tracking error of one body: against the reference path, or, when a
/// reference trace is given, against the same body's simulated polyline in
/// that trace.
pub fn tracking_errors(
    trace: &SimulationTrace,
    path: &PiecewiseLinearPath,
    body: Body,
    reference_trace: Option<&SimulationTrace>,
) -> Result<BodyErrors> {
    if trace.rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let index = match reference_trace {
        Some(r) => PolylineIndex::new(&[r.body_polyline(body)]),
        None => PolylineIndex::new(&path_polylines(path)),
    };
    polyline_errors(&trace.body_polyline(body), &index)
}

pub fn tracking_report(
    trace: &SimulationTrace,
    path: &PiecewiseLinearPath,
    reference_trace: Option<&SimulationTrace>,
    status: CompletionStatus,
) -> Result<TrackingReport> {
    Ok(TrackingReport {
        status,
        trailer: tracking_errors(trace, path, Body::Trailer, reference_trace)?,
        dolly: tracking_errors(trace, path, Body::Dolly, reference_trace)?,
        truck: tracking_errors(trace, path, Body::Truck, reference_trace)?,
    })
}

/// Shifts each sample sideways by `offset` (positive to the left of the
/// direction of travel). Stationary samples reuse the neighbouring normal.
pub fn offset_polyline(points: &[Point], offset: f64) -> Vec<Point> {
    let n = points.len();
    let tangent_at = |i: usize| -> Option<[f64; 2]> {
        let back = (0..=i).rev().find(|&j| points[j] != points[i]);
        let ahead = (i..n).find(|&j| points[j] != points[i]);
        let (a, b) = match (back, ahead) {
            (Some(j), Some(k)) => (points[j], points[k]),
            (None, Some(k)) => (points[i], points[k]),
            (Some(j), None) => (points[j], points[i]),
            (None, None) => return None,
        };
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = d[0].hypot(d[1]);
        Some([d[0] / len, d[1] / len])
    };
    points
        .iter()
        .enumerate()
        .map(|(i, p)| match tangent_at(i) {
            Some(t) => [p[0] - offset * t[1], p[1] + offset * t[0]],
            None => *p,
        })
        .collect()
}
