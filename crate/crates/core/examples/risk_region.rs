//! Time-to-limit map over wind direction and speed, with a wind-rose overlay.

use linetherm::conductor::Conductor;
use linetherm::risk::{
    overlay_mass, overlay_probability, time_to_overtemp_region, RegionAxes, RegionOptions,
    RegionProblem,
};
use linetherm::synthetic::{reference_environment, wind_rose_fixture};

fn main() {
    let drake = Conductor::drake();
    let problem = RegionProblem {
        conductor: &drake,
        site: reference_environment(),
        line_azimuth: 90.0,
        current: 1000.0,
        threshold: 100.0,
        initial_temp: 50.0,
    };
    let axes = RegionAxes::uniform(8, 0.25, 3.0, 12);
    let region =
        time_to_overtemp_region(&problem, &axes, &RegionOptions::default()).expect("region");
    print!("{:>6}", "V\\dir");
    for d in &axes.directions {
        print!("{d:>7.0}");
    }
    println!();
    for (j, v) in axes.speeds.iter().enumerate() {
        print!("{v:>6.2}");
        for i in 0..axes.directions.len() {
            match region.cell(i, j).seconds() {
                Some(t) => print!("{:>7.0}", t),
                None => print!("{:>7}", "-"),
            }
        }
        println!();
    }
    let weighted = overlay_probability(&region, &wind_rose_fixture()).expect("overlay");
    println!(
        "probability mass on reaching cells: {:?}",
        overlay_mass(&weighted)
    );
}
