//! Steady-state over-temperature probability under a wind rose, by binning.

use linetherm::conductor::Conductor;
use linetherm::risk::{overtemp_probability, BinningSpec};
use linetherm::synthetic::{reference_environment, wind_rose_fixture};

fn main() {
    let drake = Conductor::drake();
    let site = reference_environment();
    let model = wind_rose_fixture();
    let mut previous: Option<f64> = None;
    for n in [25, 50, 100, 200, 500] {
        let p = overtemp_probability(
            &drake,
            &site,
            90.0,
            1000.0,
            100.0,
            &model,
            BinningSpec::square(n),
        )
        .expect("probability");
        let change = previous
            .map(|q| format!("{:+.2e}", p - q))
            .unwrap_or_default();
        println!("{n:>3}x{n:<3} P = {p:.6} {change}");
        previous = Some(p);
    }
}
