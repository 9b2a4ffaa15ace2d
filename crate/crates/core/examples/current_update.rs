//! Re-targeting stored models to new currents without a fresh solve.

use linetherm::analytic::{build_model, ReferenceSet, SolverConfig};
use linetherm::conductor::Conductor;
use linetherm::physics::HeatBalance;
use linetherm::synthetic::reference_environment;

fn main() {
    let drake = Conductor::drake();
    let env = reference_environment();
    let hb = HeatBalance::new(&drake, &env, 90.0);
    let cfg = SolverConfig::default();
    let refs = ReferenceSet::build(&hb, &[1800.0, 2000.0], 50.0, &cfg).expect("references");
    println!(
        "{:>6} {:>10} {:>10} {:>8}",
        "I'", "updated", "rebuilt", "error"
    );
    for current in (0..=2000).step_by(200) {
        let current = current as f64;
        let updated = refs.model_for(&drake, current).unwrap().expect("update");
        let rebuilt = build_model(&drake, &env, 90.0, current, 50.0, &cfg).expect("rebuild");
        println!(
            "{current:>6.0} {:>10.3} {:>10.3} {:>8.3}",
            updated.steady_temp,
            rebuilt.steady_temp,
            updated.steady_temp - rebuilt.steady_temp
        );
    }
}
