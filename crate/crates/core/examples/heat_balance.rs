//! Heat-balance terms of a Drake conductor across a temperature sweep.

use linetherm::conductor::Conductor;
use linetherm::physics::HeatBalance;
use linetherm::synthetic::reference_environment;

fn main() {
    let drake = Conductor::drake();
    let env = reference_environment();
    let hb = HeatBalance::new(&drake, &env, 90.0);
    println!(
        "q_s = {:.2} W/m, K_angle = {:.3}",
        hb.solar_heat(),
        hb.angle_factor()
    );
    println!(
        "{:>6} {:>9} {:>9} {:>9} {:>10} {:>10}",
        "T_c", "q_joule", "q_conv", "q_rad", "dT/dt", "beta"
    );
    for t in (50..=120).step_by(10) {
        let t = t as f64;
        let terms = hb.terms(800.0, t);
        println!(
            "{t:>6.0} {:>9.2} {:>9.2} {:>9.2} {:>10.5} {:>10.6}",
            terms.joule,
            terms.convection,
            terms.radiation,
            hb.rhs(800.0, t),
            hb.beta(800.0, t)
        );
    }
}
