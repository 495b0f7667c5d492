//! CSV and JSON renderings of traces, schedules and RoA maps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::roa::RoaMap;
use super::SimulationTrace;
use crate::lqr::GainSchedule;

pub const TRACE_CSV_HEADER: &str = "t,x3,y3,theta3,beta3,beta2,alpha_cmd,beta3_ref,v,leg_index,saturated,jackknifed";

/// Shortest rendering with 9 significant digits, like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn trace_to_csv(trace: &SimulationTrace) -> String {
    let mut out = String::with_capacity(trace.rows.len() * 120);
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let s = &r.state;
        let reals = [r.t, s.x3, s.y3, s.theta3, s.beta3, s.beta2, r.alpha_cmd, r.beta3_ref, r.v];
        for x in reals {
            out.push_str(&format_sig9(x));
            out.push(',');
        }
        let _ = writeln!(out, "{},{},{}", r.leg_index, u8::from(r.saturated), u8::from(r.jackknifed));
    }
    out
}

pub fn schedule_to_csv(schedule: &GainSchedule) -> String {
    let mut out = String::from("alpha_e,l_beta3,l_beta2\n");
    for (a, g) in schedule.grid.iter().zip(&schedule.gains) {
        let _ = writeln!(out, "{},{},{}", format_sig9(*a), format_sig9(g[0]), format_sig9(g[1]));
    }
    out
}

pub fn roa_to_csv(map: &RoaMap) -> String {
    let mut out = String::from("beta3,beta2,converged\n");
    for (i, b3) in map.beta3.iter().enumerate() {
        for (j, b2) in map.beta2.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", format_sig9(*b3), format_sig9(*b2), u8::from(map.converged[i][j]));
        }
    }
    out
}

/// Metadata block written next to the RoA CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaMetadata {
    pub grid: super::roa::RoaGridSpec,
    pub criterion: super::roa::RoaCriterion,
    pub converged_fraction: f64,
    pub converged_cells: usize,
    pub total_cells: usize,
    pub settings: serde_json::Value,
}

impl RoaMetadata {
    pub fn new(map: &RoaMap, settings: serde_json::Value) -> Self {
        let total_cells = map.grid.count * map.grid.count;
        Self {
            grid: map.grid,
            criterion: map.criterion,
            converged_fraction: map.converged_fraction,
            converged_cells: map.converged.iter().flatten().filter(|&&c| c).count(),
            total_cells,
            settings,
        }
    }
}
