//! Closed-form temperature evolution against an RK4 reference.

use linetherm::analytic::{build_model, SolutionForm, SolverConfig};
use linetherm::conductor::Conductor;
use linetherm::oracle::{integrate, IntegrationConfig};
use linetherm::synthetic::reference_environment;

fn main() {
    let drake = Conductor::drake();
    let env = reference_environment();
    let model =
        build_model(&drake, &env, 90.0, 800.0, 50.0, &SolverConfig::default()).expect("model");
    let rk4 = integrate(
        &drake,
        &env,
        90.0,
        800.0,
        50.0,
        &IntegrationConfig::rk4(5.0, 7200.0),
    )
    .expect("rk4");

    println!(
        "T_e = {:.3} °C, error bound {:.3} °C",
        model.steady_temp,
        model.error_bound().unwrap()
    );
    println!(
        "{:>6} {:>8} {:>9} {:>12}",
        "t_s", "rk4", "riccati", "first_order"
    );
    for (k, &t) in rk4.times.iter().enumerate().step_by(120) {
        println!(
            "{t:>6.0} {:>8.3} {:>9.3} {:>12.3}",
            rk4.temps[k],
            model.eval_riccati(t),
            model.eval_first_order(t)
        );
    }
    for form in [SolutionForm::Riccati, SolutionForm::FirstOrder] {
        println!(
            "{form:?}: 100 °C at {:?}",
            model.time_to_threshold(100.0, form).seconds()
        );
    }
    println!("RK4: 100 °C at {:?}", rk4.crossing_time(100.0).seconds());
}
