//! Wind speed below which the steady state exceeds the limit.

use linetherm::conductor::Conductor;
use linetherm::risk::threshold_wind_speed;
use linetherm::synthetic::reference_environment;

fn main() {
    let drake = Conductor::drake();
    let env = reference_environment();
    for current in [600.0, 800.0, 1000.0, 1200.0] {
        let row: Vec<String> = [0.0, 45.0, 90.0]
            .iter()
            .map(|&dir| {
                let v =
                    threshold_wind_speed(&drake, &env.with_wind(0.0, dir), 90.0, current, 100.0);
                match v.speed() {
                    Some(s) => format!("{s:6.3} m/s"),
                    None => "unreachable".to_string(),
                }
            })
            .collect();
        println!(
            "I = {current:>5.0} A  perpendicular {}  oblique {}  parallel {}",
            row[0], row[1], row[2]
        );
    }
}
