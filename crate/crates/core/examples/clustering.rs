//! Clustering segments by location, weather and orientation.

use linetherm::cluster::{cluster_quality, cluster_segments, ClusterSpec};
use linetherm::synthetic::{synthetic_network, synthetic_weather};
use linetherm::weather::SampleMode;

fn main() {
    let net = synthetic_network(20, 40.0, 3);
    let segs = net.segments(1.0).expect("segments");
    let snap = &synthetic_weather(1, 4).snapshots[0];
    let envs: Vec<_> = segs
        .iter()
        .map(|s| {
            snap.sample(s.midpoint.0, s.midpoint.1, SampleMode::Nearest)
                .unwrap()
        })
        .collect();
    let spec = ClusterSpec::with_k(40);
    let c = cluster_segments(&segs, &envs, &spec).expect("clustering");
    let q = cluster_quality(&c, &envs);
    println!(
        "{} segments -> {} clusters after {} iterations",
        segs.len(),
        c.k(),
        c.iterations
    );
    println!(
        "WCSS by iteration: {:?}",
        c.wcss_history
            .iter()
            .map(|w| format!("{w:.1}"))
            .collect::<Vec<_>>()
    );
    println!(
        "largest spreads: ambient {:.2} °C, wind {:.2} m/s, direction {:.1}°; {} clusters over target",
        q.max_ambient_c,
        q.max_wind_speed_ms,
        q.max_wind_direction_deg,
        q.violating.len()
    );
}
