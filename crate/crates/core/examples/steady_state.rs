//! Steady-state temperature by Newton iteration, checked against bisection.

use linetherm::analytic::{solve_steady_state, SolverConfig};
use linetherm::conductor::Conductor;
use linetherm::physics::HeatBalance;
use linetherm::synthetic::reference_environment;

fn main() {
    let drake = Conductor::drake();
    let env = reference_environment();
    let hb = HeatBalance::new(&drake, &env, 90.0);
    for current in [0.0, 400.0, 800.0, 1000.0, 1200.0] {
        let ss = solve_steady_state(&drake, &env, 90.0, current, 50.0, &SolverConfig::default())
            .expect("steady state");
        // Bisection on the net heat flow for comparison.
        let (mut lo, mut hi) = (env.ambient_temp - 5.0, 400.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if hb.rhs(current, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        println!(
            "I = {current:>6.0} A: T_e = {:8.3} °C in {} iterations (bisection {:8.3})",
            ss.temp,
            ss.iterations,
            0.5 * (lo + hi)
        );
    }
}
