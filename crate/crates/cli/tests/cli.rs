//! The `trailer-lab` binary: artifacts, exit codes, and agreement with the
//! service.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;
use trailer_lab::error::exit;
use trailer_lab::service::{router, AppState, SimResponse};
use trailer_lab_core::sim::io::RoaMetadata;
use trailer_lab_core::sim::{paths, SimScenario, SimulationTrace, TrackingReport};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trailer-lab"));
    cmd.env_remove("TRAILER_LAB_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> u8 {
    out.status.code().expect("exited normally") as u8
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn simulate_file(scenario: &Path, out: &Path) -> Output {
    run(&["simulate", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn eight_preset_reaches_the_goal_with_one_row_per_stabilizer_tick() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eight");
    let res = run(&["simulate", "--preset", "eight", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), exit::GOAL_REACHED, "{}", stderr(&res));
    let trace: SimulationTrace = serde_json::from_str(&read(out.join("trace.json"))).unwrap();
    let report: TrackingReport = serde_json::from_str(&read(out.join("report.json"))).unwrap();
    let rows = trace.rows.len();
    assert_eq!(trace.stabilizer_hz, 100.0);
    // row k is stamped k stabilizer periods into the run
    for (k, row) in trace.rows.iter().enumerate().step_by(997) {
        assert!((row.t - k as f64 / 100.0).abs() < 1e-9, "row {k} at t = {}", row.t);
    }
    assert!((trace.duration() * trace.stabilizer_hz - rows as f64).abs() < 1e-9);
    assert_eq!(read(out.join("trace.csv")).lines().count(), rows + 1);
    assert_eq!(report.trailer.errors.len(), rows);
    assert!(String::from_utf8_lossy(&res.stdout).contains("GoalReached"));
}

#[test]
fn invalid_l2_names_the_field_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = paths::straight_line_scenario();
    scenario.params.l2 = 0.0;
    let file = write_json(dir.path(), "bad.json", &scenario);
    let out = dir.path().join("out");
    let res = simulate_file(&file, &out);
    assert_eq!(code(&res), exit::CONFIG);
    assert!(stderr(&res).contains("L2"), "{}", stderr(&res));
    assert!(!out.exists(), "outputs were created for an invalid manifest");
}

#[test]
fn same_manifest_twice_gives_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = paths::parking_scenario();
    scenario.disturbances.angle_noise_sigma = 0.002;
    scenario.disturbances.steering_backlash_halfwidth = 0.01;
    scenario.disturbances.rng_seed = 7;
    let file = write_json(dir.path(), "noisy.json", &scenario);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&simulate_file(&file, &a)), code(&simulate_file(&file, &b)));
    for name in ["trace.csv", "trace.json", "report.json"] {
        assert!(std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[tokio::test]
async fn cli_and_service_produce_the_same_trace() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = paths::parking_scenario();
    let file = write_json(dir.path(), "parking.json", &scenario);
    let out = dir.path().join("out");
    let res = simulate_file(&file, &out);
    assert_eq!(code(&res), exit::GOAL_REACHED, "{}", stderr(&res));

    let app = router(Arc::new(AppState::default()), None);
    let req = Request::post("/api/v1/simulate")
        .header("content-type", "application/json")
        .body(Body::from(read(&file)))
        .unwrap();
    let body = app.oneshot(req).await.unwrap().into_body().collect().await.unwrap().to_bytes();
    let resp: SimResponse = serde_json::from_slice(&body).unwrap();

    let cli_trace = read(out.join("trace.json"));
    assert_eq!(cli_trace.trim_end(), serde_json::to_string(&resp.trace).unwrap());
    let cli_report = read(out.join("report.json"));
    assert_eq!(cli_report.trim_end(), serde_json::to_string(&resp.report).unwrap());
}

#[test]
fn status_maps_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut doomed = paths::straight_line_scenario();
    doomed.initial_state.beta2 = 1.4;
    let res = simulate_file(&write_json(dir.path(), "doomed.json", &doomed), &dir.path().join("doomed"));
    assert_eq!(code(&res), exit::JACKKNIFED, "{}", String::from_utf8_lossy(&res.stdout));

    let mut short = paths::straight_line_scenario();
    short.max_sim_time = 5.0;
    let res = simulate_file(&write_json(dir.path(), "short.json", &short), &dir.path().join("short"));
    assert_eq!(code(&res), exit::TIMED_OUT);
    assert!(dir.path().join("short/trace.csv").exists(), "a timed-out run still writes its artifacts");
}

#[test]
fn input_problems_are_config_or_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    let res = simulate_file(&garbage, &dir.path().join("o"));
    assert_eq!(code(&res), exit::CONFIG);
    assert!(stderr(&res).contains("malformed JSON"));

    let res = simulate_file(&dir.path().join("missing.json"), &dir.path().join("o"));
    assert_eq!(code(&res), exit::IO);
    assert!(stderr(&res).contains("missing.json"));

    let res = run(&["simulate", "--preset", "eight", "--scenario", garbage.to_str().unwrap()]);
    assert_eq!(code(&res), exit::CONFIG, "conflicting sources are a usage error");
    let res = run(&["roa", "--parallel", "0", "--grid", "3", "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(code(&res), exit::CONFIG);
    assert!(stderr(&res).contains("parallel"));
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn manifest_selects_artifacts_and_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = paths::straight_line_scenario();
    scenario.max_sim_time = 2.0;
    let target = dir.path().join("from-manifest");
    let manifest = serde_json::json!({
        "scenario": scenario,
        "outputs": ["trace_csv", "schedule_json"],
        "out_dir": target,
    });
    let file = write_json(dir.path(), "manifest.json", &manifest);
    let res = run(&["simulate", "--scenario", file.to_str().unwrap()]);
    assert_eq!(code(&res), exit::TIMED_OUT, "{}", stderr(&res));
    let mut names: Vec<String> =
        std::fs::read_dir(&target).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["gains.csv", "schedule.json", "trace.csv"]);
}

#[test]
fn schedule_with_three_points_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let res = run(&["schedule", "--grid", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = read(out.join("gains.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "alpha_e,l_beta3,l_beta2");
    let row = |i: usize| lines[i].split(',').map(str::to_owned).collect::<Vec<_>>();
    let (first, mid, last) = (row(1), row(2), row(3));
    assert_eq!(first[1..], last[1..]);
    assert_eq!(first[0], format!("-{}", last[0]));
    assert_eq!(mid[0], "0");
}

#[test]
fn default_schedule_is_even_row_for_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    assert_eq!(code(&run(&["schedule", "--out", out.to_str().unwrap()])), 0);
    let csv = read(out.join("gains.csv"));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 101);
    for (a, b) in rows.iter().zip(rows.iter().rev()) {
        assert_eq!(a[1..], b[1..]);
    }
}

#[test]
fn non_symmetric_q_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = paths::straight_line_scenario();
    scenario.weights.q = [[10.0, 1.0], [0.0, 10.0]];
    let file = write_json(dir.path(), "q.json", &scenario);
    let out = dir.path().join("s");
    let res = run(&["schedule", "--scenario", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), exit::CONFIG);
    assert!(stderr(&res).contains("weights.Q"));
    assert!(!out.exists());
}

#[test]
fn roa_center_converges_and_parallelism_does_not_change_the_map() {
    let dir = tempfile::tempdir().unwrap();
    let roa = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let res =
            run(&["roa", "--grid", "3", "--half-width", "1.2", "--parallel", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        out
    };
    let (seq, par) = (roa("1", "seq"), roa("3", "par"));
    let csv = read(seq.join("roa.csv"));
    assert_eq!(csv, read(par.join("roa.csv")));
    assert_eq!(read(seq.join("roa.json")), read(par.join("roa.json")));

    let cells: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(cells.len(), 9);
    assert_eq!(cells[4], "0,0,1", "center cell");
    // opposite-sign corners push the trailer into a jackknife
    assert!(cells[2].ends_with(",0") && cells[6].ends_with(",0"), "{csv}");

    let meta: RoaMetadata = serde_json::from_str(&read(seq.join("roa.json"))).unwrap();
    assert_eq!(meta.total_cells, 9);
    let converged = cells.iter().filter(|c| c.ends_with(",1")).count();
    assert_eq!(meta.converged_cells, converged);
    assert_eq!(meta.converged_fraction, converged as f64 / 9.0);
    let base: SimScenario = serde_json::from_value(meta.settings).unwrap();
    assert_eq!(base, paths::roa_base_scenario());
}
