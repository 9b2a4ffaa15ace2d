use linetherm::batch::{
    generate_parameters, oracle_trace, prepare_system, run_batch, snapshot_at, BatchConfig,
    OperationState, OutputMode,
};
use linetherm::conductor::Catalog;
use linetherm::geo::{LineRoute, Network};
use linetherm::synthetic::{synthetic_network, synthetic_states, synthetic_weather};
use linetherm::weather::{parse_weather_csv, write_weather_csv};

#[test]
fn weather_fixture_spans_eighteen_hours() {
    let series = synthetic_weather(73, 5);
    let mut buf = Vec::new();
    write_weather_csv(&series, &mut buf).unwrap();
    let back = parse_weather_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 73);
    assert_eq!(back.span_seconds(), 18.0 * 3600.0);
    let mut again = Vec::new();
    write_weather_csv(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn ten_km_leg_splits_into_four() {
    let dlat = (10.0 / linetherm::geo::EARTH_RADIUS_KM).to_degrees();
    let net = Network::new(vec![LineRoute {
        line_id: "A".into(),
        waypoints: vec![(40.0, -76.0), (40.0 + dlat, -76.0)],
        conductor_name: "Ibis".into(),
        base_current: 300.0,
    }]);
    let segs = net.segments(3.0).unwrap();
    assert_eq!(segs.len(), 4);
    for s in &segs {
        assert!((s.length_km - 2.5).abs() < 1e-6);
    }
}

#[test]
fn batch_traces_track_rk4() {
    let net = synthetic_network(3, 15.0, 2);
    let wx = synthetic_weather(25, 3);
    let states = synthetic_states(&net, 3, 4);
    let config = BatchConfig {
        mode: OutputMode::Trace5s,
        ..Default::default()
    };
    let catalog = Catalog::builtin();
    let out = run_batch(&net, &wx, &catalog, &states, &config).unwrap();
    let system = prepare_system(&net, &wx, &catalog, &config).unwrap();
    let store = generate_parameters(&system, &OperationState::base(), &config).unwrap();
    let mut worst = 0.0f64;
    for tr in out.traces.iter().step_by(7) {
        let current = system.state_current(&states[tr.state], tr.segment);
        let reference = oracle_trace(
            &system,
            tr.segment,
            current,
            store.initial_temps[tr.segment],
            5.0,
        );
        for (a, b) in tr.temps.iter().zip(&reference.temps) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1.0, "{worst}");
}

#[test]
fn screening_and_dense_modes_agree_at_snapshots() {
    let net = synthetic_network(2, 10.0, 6);
    let wx = synthetic_weather(9, 7);
    let states = synthetic_states(&net, 2, 8);
    let catalog = Catalog::builtin();
    let screen = run_batch(&net, &wx, &catalog, &states, &BatchConfig::default()).unwrap();
    let dense = run_batch(
        &net,
        &wx,
        &catalog,
        &states,
        &BatchConfig {
            mode: OutputMode::Trace5s,
            ..Default::default()
        },
    )
    .unwrap();
    for t in [0.0, 900.0, 3600.0, 7200.0] {
        let a = snapshot_at(&screen.traces, t).unwrap();
        let b = snapshot_at(&dense.traces, t).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.temp_c - y.temp_c).abs() < 1e-9, "t = {t}");
        }
    }
}
