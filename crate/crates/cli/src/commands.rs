//! Batch commands. Each validates its inputs and finishes all computation
//! before touching the output directory, so a rejected run writes nothing.

use std::path::{Path, PathBuf};

use serde::Serialize;
use trailer_lab_core::lqr::{build_schedule, GainSchedule, LqWeights};
use trailer_lab_core::model::VehicleParams;
use trailer_lab_core::sim::io::{roa_to_csv, schedule_to_csv, trace_to_csv, RoaMetadata};
use trailer_lab_core::sim::roa::{region_of_attraction, RoaCriterion, RoaGridSpec, RoaMap};
use trailer_lab_core::sim::{simulate_with_schedule, CompletionStatus, SimOutcome, SimScenario};

use crate::error::AppError;
use crate::manifest::{Artifact, RunManifest};

pub const TRACE_CSV: &str = "trace.csv";
pub const TRACE_JSON: &str = "trace.json";
pub const REPORT_JSON: &str = "report.json";
pub const SCHEDULE_JSON: &str = "schedule.json";
pub const GAINS_CSV: &str = "gains.csv";
pub const ROA_CSV: &str = "roa.csv";
pub const ROA_JSON: &str = "roa.json";

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn open(dir: &'a Path) -> Result<Self, AppError> {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(format!("creating {}", dir.display()), e))?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<(), AppError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| AppError::io(format!("writing {}", path.display()), e))?;
        tracing::info!(path = %path.display(), bytes = contents.len(), "wrote");
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T, pretty: bool) -> Result<(), AppError> {
        let mut body = if pretty { serde_json::to_string_pretty(value)? } else { serde_json::to_string(value)? };
        body.push('\n');
        self.text(name, &body)
    }
}

#[derive(Debug)]
pub struct SimulateRun {
    pub outcome: SimOutcome,
    pub written: Vec<PathBuf>,
}

impl SimulateRun {
    pub fn status(&self) -> CompletionStatus {
        self.outcome.report.status
    }
}

pub fn simulate(manifest: &RunManifest, out_dir: &Path) -> Result<SimulateRun, AppError> {
    let scenario = &manifest.scenario;
    scenario.validate()?;
    let schedule = scenario.build_schedule()?;
    let wants = |a: Artifact| manifest.outputs.contains(&a);
    tracing::info!(rows_max = scenario.timing()?.total_ticks, "simulating");
    let outcome = simulate_with_schedule(scenario, &schedule)?;
    let roa = if wants(Artifact::RoaCsv) { Some(compute_roa(scenario, &RoaGridSpec::default(), 1)?) } else { None };

    let mut out = Writer::open(out_dir)?;
    if wants(Artifact::TraceCsv) {
        out.text(TRACE_CSV, &trace_to_csv(&outcome.trace))?;
    }
    if wants(Artifact::TraceJson) {
        out.json(TRACE_JSON, &outcome.trace, false)?;
    }
    if wants(Artifact::ReportJson) {
        out.json(REPORT_JSON, &outcome.report, false)?;
    }
    if wants(Artifact::ScheduleJson) {
        write_schedule(&mut out, &schedule)?;
    }
    if let Some(map) = &roa {
        write_roa(&mut out, map, scenario)?;
    }
    tracing::info!(status = ?outcome.report.status, rows = outcome.trace.rows.len(), "simulation finished");
    Ok(SimulateRun { outcome, written: out.written })
}

fn write_schedule(out: &mut Writer, schedule: &GainSchedule) -> Result<(), AppError> {
    out.json(SCHEDULE_JSON, schedule, true)?;
    out.text(GAINS_CSV, &schedule_to_csv(schedule))
}

pub fn schedule(
    params: &VehicleParams,
    weights: &LqWeights,
    grid_count: usize,
    out_dir: &Path,
) -> Result<GainSchedule, AppError> {
    let schedule = build_schedule(params, weights, grid_count)?;
    let mut out = Writer::open(out_dir)?;
    write_schedule(&mut out, &schedule)?;
    Ok(schedule)
}

fn compute_roa(base: &SimScenario, grid: &RoaGridSpec, threads: usize) -> Result<RoaMap, AppError> {
    if threads == 0 {
        return Err(AppError::Config { field: Some("parallel".into()), message: "must be at least 1".into() });
    }
    tracing::info!(cells = grid.count * grid.count, threads, "mapping region of attraction");
    Ok(region_of_attraction(base, grid, &RoaCriterion::default(), threads)?)
}

fn write_roa(out: &mut Writer, map: &RoaMap, base: &SimScenario) -> Result<(), AppError> {
    out.text(ROA_CSV, &roa_to_csv(map))?;
    out.json(ROA_JSON, &RoaMetadata::new(map, serde_json::to_value(base)?), true)
}

pub fn roa(base: &SimScenario, grid: &RoaGridSpec, threads: usize, out_dir: &Path) -> Result<RoaMap, AppError> {
    let map = compute_roa(base, grid, threads)?;
    let mut out = Writer::open(out_dir)?;
    write_roa(&mut out, &map, base)?;
    tracing::info!(converged_fraction = map.converged_fraction, "region of attraction done");
    Ok(map)
}
