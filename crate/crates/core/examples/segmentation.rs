//! Splitting routes into segments no longer than a limit.

use linetherm::geo::{LineRoute, Network};

fn main() {
    let line = LineRoute {
        line_id: "L1".into(),
        waypoints: vec![(41.0, -75.5), (41.09, -75.5), (41.09, -75.38)],
        conductor_name: "Drake".into(),
        base_current: 600.0,
    };
    let net = Network::new(vec![line]);
    for s in net.segments(3.0).expect("segments") {
        println!(
            "{} ({:.4}, {:.4}) azimuth {:6.1}° length {:.3} km",
            s.segment_id, s.midpoint.0, s.midpoint.1, s.azimuth, s.length_km
        );
    }
}
