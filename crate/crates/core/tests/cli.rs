use std::path::Path;
use std::process::{Command, Output};

use linetherm::batch::{parse_states, read_traces_csv};
use linetherm::geo::Network;
use linetherm::risk::RegionGrid;
use linetherm::weather::load_weather_series;

fn linetherm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linetherm"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) {
    let o = linetherm(
        dir,
        &[
            "synth",
            "--lines",
            "4",
            "--line-km",
            "20",
            "--snapshots",
            "9",
            "--states",
            "3",
            "--seed",
            "11",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn steady_reference_scenario_matches_bisection() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(d.path(), &["steady", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let te = v["steady_temp_c"].as_f64().unwrap();
    // Bisection on the heat balance of the same scenario.
    let drake = linetherm::conductor::Conductor::drake();
    let env = linetherm::synthetic::reference_environment();
    let hb = linetherm::physics::HeatBalance::new(&drake, &env, 90.0);
    let (mut lo, mut hi) = (40.0, 300.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if hb.rhs(800.0, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((te - lo).abs() < 1e-4, "{te} vs {lo}");
}

#[test]
fn steady_at_night_without_current_is_ambient() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(
        d.path(),
        &[
            "steady",
            "--current",
            "0",
            "--irradiance",
            "0",
            "--ambient",
            "25",
            "--format",
            "json",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["steady_temp_c"].as_f64().unwrap() - 25.0).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(d.path(), &["steady", "--conductor", "Nonesuch"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Nonesuch"));
    assert_eq!(
        linetherm(d.path(), &["steady", "--max-iterations", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        linetherm(d.path(), &["steady", "--wind-speed", "-1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        linetherm(d.path(), &["steady", "--threads", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        linetherm(d.path(), &["segment", "--network", "missing.json"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(linetherm(d.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(linetherm(d.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn help_documents_schema_versions() {
    let d = tempfile::tempdir().unwrap();
    let text = stdout(&linetherm(d.path(), &["--help"]));
    assert!(text.contains("schema_version"));
    for cmd in [
        "steady",
        "evolve",
        "update-current",
        "region",
        "prob",
        "segment",
        "cluster",
        "batch",
        "snapshot",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn output_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_linetherm"))
        .env("LINETHERM_OUTPUT_DIR", d.path())
        .args(["evolve", "--horizon", "60"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(d.path().join("evolve.csv").exists());
}

#[test]
fn evolve_writes_aligned_columns_and_summary() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(d.path(), &["evolve", "--threshold", "95"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(d.path().join("evolve.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["t_s", "rk4_c", "riccati_c", "first_order_c"]
    );
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1441);
    for r in &rows {
        // Six significant digits can reorder values closer than 1e-3 °C.
        assert!(r[3] + 1e-3 >= r[2]);
    }
    let s: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d.path().join("evolve_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(s["threshold_c"].as_f64(), Some(95.0));
    let fo_over = s["first_order"]["max_over_c"].as_f64().unwrap();
    let ric_under = s["riccati"]["max_under_c"].as_f64().unwrap();
    assert!((1.5..2.5).contains(&fo_over), "{fo_over}");
    assert!((0.3..0.8).contains(&ric_under), "{ric_under}");
    // The first-order crossing is never later than the Riccati crossing.
    let fo_t = s["first_order"]["threshold_time_s"].as_f64().unwrap();
    let ric_t = s["riccati"]["threshold_time_s"].as_f64().unwrap();
    assert!(fo_t <= ric_t);
}

#[test]
fn evolve_from_steady_state_is_flat() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(d.path(), &["steady", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let te = v["steady_temp_c"].as_f64().unwrap().to_string();
    let o = linetherm(
        d.path(),
        &["evolve", "--initial-temp", &te, "--horizon", "600"],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(d.path().join("evolve.csv")).unwrap();
    let first = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(1)
        .map(str::to_owned)
        .collect::<Vec<_>>();
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|x| x.parse().unwrap())
            .collect();
        for (c, f) in cols.iter().zip(&first) {
            assert!((c - f.parse::<f64>().unwrap()).abs() < 1e-3);
        }
    }
}

#[test]
fn prob_binnings_agree_within_five_percent() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(d.path(), &["prob", "--bins", "25,500"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("prob.json")).unwrap())
            .unwrap();
    let r = v["results"].as_array().unwrap();
    let (a, b) = (
        r[0]["probability"].as_f64().unwrap(),
        r[1]["probability"].as_f64().unwrap(),
    );
    assert!(b > 0.0 && (a - b).abs() / b < 0.05, "{a} {b}");
}

#[test]
fn region_csv_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(d.path(), &["region", "--directions", "12", "--speeds", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let grid =
        RegionGrid::read_csv(std::fs::File::open(d.path().join("region.csv")).unwrap()).unwrap();
    assert_eq!(grid.cells.len(), 72);
    let mut again = Vec::new();
    grid.write_csv(&mut again).unwrap();
    assert_eq!(again, std::fs::read(d.path().join("region.csv")).unwrap());
    assert!(d.path().join("region_meta.json").exists());
}

#[test]
fn synthetic_inputs_reload() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    let net = Network::load(d.path().join("network.json")).unwrap();
    assert_eq!(net.lines.len(), 4);
    let wx = load_weather_series(d.path().join("weather.csv")).unwrap();
    assert_eq!(wx.len(), 9);
    assert_eq!(wx.span_seconds(), 2.0 * 3600.0);
    let states =
        parse_states(&std::fs::read_to_string(d.path().join("states.json")).unwrap()).unwrap();
    assert_eq!(states.len(), 3);
}

#[test]
fn segment_formats() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    let net = p(d.path(), "network.json");
    assert_eq!(
        linetherm(d.path(), &["segment", "--network", &net])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        linetherm(
            d.path(),
            &["segment", "--network", &net, "--format", "json"]
        )
        .status
        .code(),
        Some(0)
    );
    let csv_rows = std::fs::read_to_string(d.path().join("segments.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("segments.json")).unwrap())
            .unwrap();
    assert_eq!(json.as_array().unwrap().len(), csv_rows);
}

#[test]
fn batch_snapshot_pipeline() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    let args = [
        "batch",
        "--network",
        &p(d.path(), "network.json"),
        "--weather",
        &p(d.path(), "weather.csv"),
        "--states",
        &p(d.path(), "states.json"),
        "--mode",
        "trace",
    ];
    let o = linetherm(d.path(), &args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rows = read_traces_csv(std::fs::File::open(d.path().join("traces.csv")).unwrap()).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.t_s <= 7200.0 + 1e-9));
    let traces = p(d.path(), "traces.csv");
    let o = linetherm(
        d.path(),
        &[
            "snapshot", "--traces", &traces, "--t", "1800", "--format", "json",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let snap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("snapshot.json")).unwrap())
            .unwrap();
    // One entry per (segment, state) pair.
    let pairs: std::collections::BTreeSet<_> = rows
        .iter()
        .map(|r| (r.segment_id.clone(), r.state_id.clone()))
        .collect();
    assert_eq!(snap.as_array().unwrap().len(), pairs.len());
    let o = linetherm(d.path(), &["snapshot", "--traces", &traces, "--t", "9000"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn batch_with_no_states_writes_report() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    std::fs::write(d.path().join("empty.json"), "[]").unwrap();
    let o = linetherm(
        d.path(),
        &[
            "batch",
            "--network",
            &p(d.path(), "network.json"),
            "--weather",
            &p(d.path(), "weather.csv"),
            "--states",
            &p(d.path(), "empty.json"),
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(r["n_states"], 0);
    assert!(r["n_models"].as_u64().unwrap() > 0);
}

#[test]
fn clustering_outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        synth(d);
        let o = linetherm(
            d,
            &[
                "cluster",
                "--network",
                &p(d, "network.json"),
                "--weather",
                &p(d, "weather.csv"),
                "--k",
                "7",
                "--seed",
                "3",
            ],
        );
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["clusters.csv", "centroids.csv", "cluster_quality.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn update_current_identity_at_reference() {
    let d = tempfile::tempdir().unwrap();
    let o = linetherm(d.path(), &["update-current", "--new-current", "800"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["steady_temp_error_c"].as_f64(), Some(0.0));
}
