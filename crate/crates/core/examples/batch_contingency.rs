//! Screening operation states over a day of weather, with a snapshot query.

use linetherm::batch::{run_batch, snapshot_at, BatchConfig};
use linetherm::conductor::Catalog;
use linetherm::synthetic::{synthetic_network, synthetic_states, synthetic_weather};

fn main() {
    let net = synthetic_network(10, 30.0, 1);
    let weather = synthetic_weather(73, 2);
    let states = synthetic_states(&net, 5, 3);
    let config = BatchConfig::default();
    let out = run_batch(&net, &weather, &Catalog::builtin(), &states, &config).expect("batch");
    let r = &out.report;
    println!(
        "{} segments, {} snapshots, {} states, {} models in {:.3} s",
        r.n_segments, r.n_snapshots, r.n_states, r.n_models, r.timings.total_s
    );
    for s in &r.states {
        println!(
            "{:>5}: max {:.1} °C, {} flagged segments",
            s.state_id, s.max_temp_c, s.flagged_segments
        );
    }
    let noon = 6.0 * 3600.0;
    let snap = snapshot_at(&out.traces, noon).expect("snapshot");
    let hottest = snap
        .iter()
        .max_by(|a, b| a.temp_c.total_cmp(&b.temp_c))
        .unwrap();
    println!(
        "hottest at t = {noon} s: {} under {} at {:.1} °C",
        out.system.segments[hottest.segment].segment_id,
        states[hottest.state].state_id,
        hottest.temp_c
    );
}
