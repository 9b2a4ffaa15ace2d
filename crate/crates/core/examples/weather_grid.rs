//! Weather grid round trip and point sampling.

use linetherm::synthetic::synthetic_weather;
use linetherm::weather::{parse_weather_csv, write_weather_csv, SampleMode};

fn main() {
    let series = synthetic_weather(73, 7);
    let mut csv = Vec::new();
    write_weather_csv(&series, &mut csv).expect("write");
    let loaded = parse_weather_csv(csv.as_slice()).expect("parse");
    println!(
        "{} snapshots spanning {:.1} h, {} bytes of CSV",
        loaded.len(),
        loaded.span_seconds() / 3600.0,
        csv.len()
    );
    let snap = &loaded.snapshots[24];
    for mode in [SampleMode::Nearest, SampleMode::Bilinear] {
        let env = snap.sample(41.13, -75.61, mode).expect("sample");
        println!(
            "{mode:?} at {}: {:.2} °C, wind {:.2} m/s from {:.0}°, sun {:.0} W/m² at {:.1}°",
            snap.timestamp,
            env.ambient_temp,
            env.wind_speed,
            env.wind_direction,
            env.solar_irradiance,
            env.sun_altitude
        );
    }
}
