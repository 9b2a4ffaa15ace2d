//! Fixed-step reference integrator of the full nonlinear heat balance.
//!
//! Weather is held constant within each weather step, the same assumption the
//! closed forms make, so comparisons isolate the linearization error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::ThresholdTime;
use crate::conductor::Conductor;
use crate::environment::EnvironmentSample;
use crate::physics::HeatBalance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid integration config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    /// Seconds.
    pub step: f64,
    pub method: Method,
    /// Seconds.
    pub max_time: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            step: 5.0,
            method: Method::Rk4,
            max_time: 7200.0,
        }
    }
}

impl IntegrationConfig {
    pub fn rk4(step: f64, max_time: f64) -> Self {
        IntegrationConfig {
            step,
            method: Method::Rk4,
            max_time,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(OracleError::InvalidConfig("step must be positive"));
        }
        if !(self.max_time >= self.step) || !self.max_time.is_finite() {
            return Err(OracleError::InvalidConfig(
                "max_time must be at least one step",
            ));
        }
        Ok(())
    }
}

/// Sampled temperature trajectory: `times[i]` seconds, `temps[i]` °C.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub temps: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_temp(&self) -> Option<f64> {
        self.temps.last().copied()
    }

    pub fn max_temp(&self) -> f64 {
        self.temps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation at `t`; `None` outside the sampled span.
    pub fn temp_at(&self, t: f64) -> Option<f64> {
        interpolate(&self.times, &self.temps, t)
    }

    pub fn crossing_time(&self, threshold: f64) -> ThresholdTime {
        crossing_time(&self.times, &self.temps, threshold)
    }

    fn push(&mut self, t: f64, temp: f64) {
        self.times.push(t);
        self.temps.push(temp);
    }
}

pub(crate) fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let (first, last) = (*times.first()?, *times.last()?);
    if !(t >= first && t <= last) {
        return None;
    }
    let i = times.partition_point(|&x| x <= t);
    if i == 0 {
        return Some(values[0]);
    }
    if i >= times.len() {
        return Some(values[times.len() - 1]);
    }
    let (t0, t1) = (times[i - 1], times[i]);
    if t == t0 {
        return Some(values[i - 1]);
    }
    let w = (t - t0) / (t1 - t0);
    Some(values[i - 1] + w * (values[i] - values[i - 1]))
}

/// First time the samples reach `threshold`, interpolated linearly within the step.
pub fn crossing_time(times: &[f64], temps: &[f64], threshold: f64) -> ThresholdTime {
    let Some(&first) = temps.first() else {
        return ThresholdTime::Never;
    };
    if first >= threshold {
        return ThresholdTime::Reached(times[0]);
    }
    for i in 1..temps.len() {
        if temps[i] >= threshold {
            let (a, b) = (temps[i - 1], temps[i]);
            let w = (threshold - a) / (b - a);
            return ThresholdTime::Reached(times[i - 1] + w * (times[i] - times[i - 1]));
        }
    }
    ThresholdTime::Never
}

/// One step of the chosen scheme for the autonomous ODE `y' = f(y)`.
#[inline]
pub fn step_ode<F: Fn(f64) -> f64>(f: &F, y: f64, h: f64, method: Method) -> f64 {
    match method {
        Method::Euler => y + h * f(y),
        Method::Rk4 => {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
        }
    }
}

/// Integrates `y' = f(y)` over `duration`, appending samples to `trace`.
/// The final step is shortened to land exactly on the end time.
fn advance<F: Fn(f64) -> f64>(f: &F, trace: &mut Trace, duration: f64, step: f64, method: Method) {
    let (mut t, mut y) = (*trace.times.last().unwrap(), *trace.temps.last().unwrap());
    let end = t + duration;
    let n = (duration / step - 1e-9).ceil().max(1.0) as usize;
    for k in 1..=n {
        let next_t = if k == n { end } else { t + step };
        y = step_ode(f, y, next_t - t, method);
        t = next_t;
        trace.push(t, y);
    }
}

/// Generic fixed-step integration from `y0` over `[0, config.max_time]`.
pub fn integrate_ode<F: Fn(f64) -> f64>(
    f: F,
    y0: f64,
    config: &IntegrationConfig,
) -> Result<Trace, OracleError> {
    config.validate()?;
    let mut trace = Trace::default();
    trace.push(0.0, y0);
    advance(&f, &mut trace, config.max_time, config.step, config.method);
    Ok(trace)
}

/// Conductor temperature under constant weather and current.
pub fn integrate(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    initial_temp: f64,
    config: &IntegrationConfig,
) -> Result<Trace, OracleError> {
    let hb = HeatBalance::new(conductor, env, line_azimuth);
    integrate_with(&hb, current, initial_temp, config)
}

pub fn integrate_with(
    hb: &HeatBalance<'_>,
    current: f64,
    initial_temp: f64,
    config: &IntegrationConfig,
) -> Result<Trace, OracleError> {
    integrate_ode(|tc| hb.rhs(current, tc), initial_temp, config)
}

/// One piece of a piecewise-constant weather schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherStep {
    pub env: EnvironmentSample,
    /// Seconds.
    pub duration: f64,
    /// Current during this step, A.
    pub current: f64,
}

/// Integrates across consecutive weather steps. `config.max_time` is ignored;
/// the horizon is the sum of step durations.
pub fn integrate_schedule(
    conductor: &Conductor,
    line_azimuth: f64,
    schedule: &[WeatherStep],
    initial_temp: f64,
    config: &IntegrationConfig,
) -> Result<Trace, OracleError> {
    if !(config.step > 0.0) {
        return Err(OracleError::InvalidConfig("step must be positive"));
    }
    let mut trace = Trace::default();
    trace.push(0.0, initial_temp);
    for ws in schedule {
        if !(ws.duration > 0.0) {
            continue;
        }
        let hb = HeatBalance::new(conductor, &ws.env, line_azimuth);
        let current = ws.current;
        advance(
            &|tc| hb.rhs(current, tc),
            &mut trace,
            ws.duration,
            config.step,
            config.method,
        );
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::*;

    fn reference(config: &IntegrationConfig) -> Trace {
        integrate(
            &Conductor::drake(),
            &reference_environment(),
            REFERENCE_LINE_AZIMUTH,
            REFERENCE_CURRENT,
            REFERENCE_INITIAL_TEMP,
            config,
        )
        .unwrap()
    }

    #[test]
    fn ambient_equilibrium_is_constant() {
        let env = EnvironmentSample::still(25.0).with_wind(2.0, 30.0);
        let tr = integrate(
            &Conductor::drake(),
            &env,
            0.0,
            0.0,
            25.0,
            &IntegrationConfig::rk4(5.0, 600.0),
        )
        .unwrap();
        assert_eq!(tr.len(), 121);
        assert!(tr.temps.iter().all(|&t| t == 25.0));
    }

    #[test]
    fn uneven_horizon_ends_exactly() {
        let tr = integrate_ode(|y| -y, 1.0, &IntegrationConfig::rk4(0.3, 1.0)).unwrap();
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert_eq!(tr.len(), 5);
        assert!((tr.last_temp().unwrap() - (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(IntegrationConfig::rk4(0.0, 10.0).validate().is_err());
        assert!(IntegrationConfig::rk4(5.0, 1.0).validate().is_err());
        assert!(IntegrationConfig::rk4(f64::NAN, 10.0).validate().is_err());
    }

    #[test]
    fn step_halving_converges() {
        let a = reference(&IntegrationConfig::rk4(5.0, 7200.0))
            .last_temp()
            .unwrap();
        let b = reference(&IntegrationConfig::rk4(2.5, 7200.0))
            .last_temp()
            .unwrap();
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn euler_agrees_with_rk4_at_one_second() {
        let rk = reference(&IntegrationConfig::rk4(1.0, 7200.0));
        let eu = reference(&IntegrationConfig {
            method: Method::Euler,
            ..IntegrationConfig::rk4(1.0, 7200.0)
        });
        let worst = rk
            .temps
            .iter()
            .zip(&eu.temps)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.05, "max |euler − rk4| = {worst}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Linear cooling toward 20 °C with a known exact solution.
        let (k, ta, y0, horizon) = (0.01f64, 20.0, 80.0, 600.0);
        let exact = ta + (y0 - ta) * (-k * horizon).exp();
        let err = |h: f64| {
            let tr =
                integrate_ode(|y| -k * (y - ta), y0, &IntegrationConfig::rk4(h, horizon)).unwrap();
            (tr.last_temp().unwrap() - exact).abs()
        };
        let (e1, e2) = (err(20.0), err(10.0));
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn crossing_of_an_exponential() {
        let (tau, step) = (300.0, 5.0);
        let tr = integrate_ode(
            |y| (100.0 - y) / tau,
            40.0,
            &IntegrationConfig::rk4(step, 3000.0),
        )
        .unwrap();
        let exact = tau * (60.0f64 / 10.0).ln();
        let t = tr.crossing_time(90.0).seconds().unwrap();
        assert!((t - exact).abs() < step / 2.0, "{t} vs {exact}");
        assert_eq!(tr.crossing_time(30.0), ThresholdTime::Reached(0.0));
        assert_eq!(tr.crossing_time(101.0), ThresholdTime::Never);
    }

    #[test]
    fn schedule_continues_across_steps() {
        let c = Conductor::drake();
        let env = reference_environment();
        let one = integrate(
            &c,
            &env,
            90.0,
            800.0,
            50.0,
            &IntegrationConfig::rk4(5.0, 1800.0),
        )
        .unwrap();
        let step = WeatherStep {
            env,
            duration: 900.0,
            current: 800.0,
        };
        let two = integrate_schedule(
            &c,
            90.0,
            &[step, step],
            50.0,
            &IntegrationConfig::rk4(5.0, 1.0),
        )
        .unwrap();
        assert_eq!(one.times, two.times);
        assert_eq!(one.temps, two.temps);
    }

    #[test]
    fn interpolation() {
        let tr = Trace {
            times: vec![0.0, 10.0, 20.0],
            temps: vec![1.0, 3.0, 2.0],
        };
        assert_eq!(tr.temp_at(10.0), Some(3.0));
        assert_eq!(tr.temp_at(15.0), Some(2.5));
        assert_eq!(tr.temp_at(20.0), Some(2.0));
        assert_eq!(tr.temp_at(20.5), None);
    }
}
