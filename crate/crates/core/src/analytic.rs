//! Closed-form conductor temperature evolution.
//!
//! Writing ΔT = T_c − T_a, the heat balance becomes
//! `dΔT/dt = Q_si − β_Δ(ΔT)·ΔT`. With β_Δ replaced by its secant line
//! `β_Δ0 + β_ΔT·ΔT` between the initial and steady-state temperatures the
//! equation is a constant-coefficient Riccati equation with the solution
//!
//! ```text
//! T_ric(t)  = (Δ_B − Δ_A C' e^(−β't)) / (1 + C' e^(−β't)) + T_a
//! T_simp(t) = T_e + (T_c0 − T_e) e^(−β't)
//! β'        = β_ΔT (Δ_A + Δ_B) = sqrt(β_Δ0² + 4 Q_si β_ΔT)
//! ```
//!
//! The first-order form never falls below the Riccati form. Internally the
//! formulas are evaluated in a rearranged form that stays finite as
//! `β_ΔT → 0`, where both reduce to the linear first-order solution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conductor::Conductor;
use crate::environment::EnvironmentSample;
use crate::physics::HeatBalance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("steady-state iteration did not converge after {iterations} iterations (last T_e = {last_temp:.3} °C, mismatch {residual:.3e} W/m)")]
    NonConvergence {
        iterations: usize,
        last_temp: f64,
        residual: f64,
    },
    #[error(
        "negative discriminant {discriminant:.3e} when updating to {current} A; rebuild the model"
    )]
    NegativeDiscriminant { current: f64, discriminant: f64 },
    #[error("no stable steady state at {current} A")]
    NoSteadyState { current: f64 },
    #[error("invalid model: C' = {c_prime} must exceed -1")]
    InvalidModel { c_prime: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Heat-power mismatch tolerance ε_Q, W/m.
    pub heat_mismatch_tolerance: f64,
    pub max_iterations: usize,
    /// |β_ΔT| below this (1/(s·°C)) is treated as the linear-ODE limit.
    pub degenerate_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            heat_mismatch_tolerance: 1e-6,
            max_iterations: 50,
            degenerate_threshold: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), AnalyticError> {
        if !(self.heat_mismatch_tolerance > 0.0) {
            return Err(AnalyticError::InvalidConfig(
                "heat mismatch tolerance must be positive",
            ));
        }
        if self.max_iterations < 1 {
            return Err(AnalyticError::InvalidConfig(
                "max_iterations must be at least 1",
            ));
        }
        if !(self.degenerate_threshold >= 0.0) {
            return Err(AnalyticError::InvalidConfig(
                "degenerate threshold must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// T_e, °C.
    pub temp: f64,
    pub iterations: usize,
    /// Final heat mismatch, W/m.
    pub residual: f64,
}

/// Steady-state temperature by the secant-derivative Newton iteration.
pub fn solve_steady_state(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    initial_temp: f64,
    config: &SolverConfig,
) -> Result<SteadyState, AnalyticError> {
    let hb = HeatBalance::new(conductor, env, line_azimuth);
    solve_steady_state_with(&hb, current, initial_temp, config)
}

/// [`solve_steady_state`] on a prepared heat balance.
///
/// Starting from `T̂ = Q_si / β_Δ(ΔT_c0)` each step evaluates the mismatch
/// `ΔQ = Q_si − β_Δ(T̂)·T̂`, approximates `dβ_Δ/dT̂` by the secant through the
/// initial point and corrects `T̂ ← T̂ − ΔQ / (dΔQ/dT̂)`. The iteration count is
/// the number of mismatch evaluations.
pub fn solve_steady_state_with(
    hb: &HeatBalance<'_>,
    current: f64,
    initial_temp: f64,
    config: &SolverConfig,
) -> Result<SteadyState, AnalyticError> {
    config.validate()?;
    let mcp = hb.heat_capacity();
    let tol = config.heat_mismatch_tolerance / mcp;
    let ta = hb.ambient_temp;
    let q = hb.q_si(current);

    let d0 = initial_temp - ta;
    let b0 = hb.beta_delta(current, d0);
    let mut x = initial_guess(hb, current, q, b0);
    let mut last = (x, f64::NAN);

    for it in 1..=config.max_iterations {
        let bx = hb.beta_delta(current, x);
        let mismatch = q - bx * x;
        last = (x, mismatch * mcp);
        if mismatch.abs() < tol {
            return Ok(SteadyState {
                temp: x + ta,
                iterations: it,
                residual: mismatch * mcp,
            });
        }
        let span = x - d0;
        let slope = if span.abs() > 1e-6 {
            (bx - b0) / span
        } else {
            0.0
        };
        let mut deriv = -bx - slope * x;
        if !(deriv < 0.0) {
            // The secant slope points uphill (β_Δ strongly decreasing); fall back to the chord.
            deriv = -bx.abs().max(1e-12);
        }
        let mut next = x - mismatch / deriv;
        // With Q_si ≥ 0 the root lies at ΔT ≥ 0; a step across ambient is halved back.
        if q >= 0.0 && next < 0.0 {
            next = 0.5 * x.max(0.0);
        }
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    Err(AnalyticError::NonConvergence {
        iterations: config.max_iterations,
        last_temp: last.0 + ta,
        residual: last.1,
    })
}

fn initial_guess(hb: &HeatBalance<'_>, current: f64, q: f64, b0: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if b0 > 0.0 {
        let guess = q / b0;
        if guess.is_finite() && guess >= 0.0 {
            return guess;
        }
    }
    // β_Δ at the initial point gives no usable estimate; use the first positive
    // value along a coarse ladder of temperature rises.
    for d in [25.0, 50.0, 100.0, 200.0, 400.0] {
        let b = hb.beta_delta(current, d);
        if b > 0.0 {
            return q / b;
        }
    }
    100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolutionForm {
    #[default]
    FirstOrder,
    Riccati,
}

/// Parameters of the closed-form solution for one current and one weather sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedModel {
    pub ambient_temp: f64,
    pub initial_temp: f64,
    pub steady_temp: f64,
    /// Q_si, °C/s.
    pub q_si: f64,
    /// β_Δ0, 1/s.
    pub beta_0: f64,
    /// β_ΔT, 1/(s·°C).
    pub beta_t: f64,
    /// Δ_A, °C. Infinite in the linear limit.
    pub delta_a: f64,
    /// Δ_B = T_e − T_a, °C.
    pub delta_b: f64,
    pub c_prime: f64,
    /// β', 1/s.
    pub rate: f64,
    pub reference_current: f64,
    pub degenerate: bool,
    degenerate_threshold: f64,
}

impl LinearizedModel {
    /// Builds a model from its linearization coefficients. T_e is the stable
    /// root of `β_ΔT ΔT² + β_Δ0 ΔT − Q_si = 0`.
    pub fn from_coefficients(
        ambient_temp: f64,
        initial_temp: f64,
        q_si: f64,
        beta_0: f64,
        beta_t: f64,
        reference_current: f64,
        degenerate_threshold: f64,
    ) -> Result<Self, AnalyticError> {
        let discriminant = beta_0 * beta_0 + 4.0 * q_si * beta_t;
        if discriminant < 0.0 {
            return Err(AnalyticError::NegativeDiscriminant {
                current: reference_current,
                discriminant,
            });
        }
        let root = discriminant.sqrt();
        let denom = beta_0 + root;
        let delta_b = if q_si == 0.0 {
            0.0
        } else if denom > 0.0 {
            2.0 * q_si / denom
        } else {
            return Err(AnalyticError::NoSteadyState {
                current: reference_current,
            });
        };
        let degenerate = beta_t.abs() < degenerate_threshold;
        let mut m = LinearizedModel {
            ambient_temp,
            initial_temp,
            steady_temp: ambient_temp + delta_b,
            q_si,
            beta_0,
            beta_t,
            delta_a: if degenerate {
                f64::INFINITY.copysign(beta_0)
            } else {
                delta_b + beta_0 / beta_t
            },
            delta_b,
            c_prime: 0.0,
            rate: root,
            reference_current,
            degenerate,
            degenerate_threshold,
        };
        m.c_prime = m.c_prime_for(initial_temp);
        if !(m.rate > 0.0) {
            return Err(AnalyticError::NoSteadyState {
                current: reference_current,
            });
        }
        Ok(m)
    }

    /// `β_Δ0 + β_ΔT (ΔT_e + ΔT_c0)`, the scaled denominator of C'.
    fn scaled_denominator(&self, initial_temp: f64) -> f64 {
        self.beta_0 + self.beta_t * (self.delta_b + initial_temp - self.ambient_temp)
    }

    fn c_prime_for(&self, initial_temp: f64) -> f64 {
        (self.steady_temp - initial_temp) * self.beta_t / self.scaled_denominator(initial_temp)
    }

    /// `(Δ_A + Δ_B)·C'`, the Riccati transient amplitude.
    fn amplitude(&self) -> f64 {
        (self.steady_temp - self.initial_temp) * self.rate
            / self.scaled_denominator(self.initial_temp)
    }

    /// Same coefficients, new initial temperature (C' re-derived).
    pub fn with_initial_temp(&self, initial_temp: f64) -> Self {
        let mut m = *self;
        m.initial_temp = initial_temp;
        m.c_prime = m.c_prime_for(initial_temp);
        m
    }

    /// Riccati-form temperature at `t` seconds.
    pub fn eval_riccati(&self, t: f64) -> f64 {
        let e = (-self.rate * t).exp();
        self.steady_temp - self.amplitude() * e / (1.0 + self.c_prime * e)
    }

    /// First-order temperature at `t` seconds.
    pub fn eval_first_order(&self, t: f64) -> f64 {
        self.steady_temp + (self.initial_temp - self.steady_temp) * (-self.rate * t).exp()
    }

    pub fn eval(&self, form: SolutionForm, t: f64) -> f64 {
        match form {
            SolutionForm::FirstOrder => self.eval_first_order(t),
            SolutionForm::Riccati => self.eval_riccati(t),
        }
    }

    /// Upper bound on `sup_t (T_simp(t) − T_ric(t))`:
    /// `(sqrt(1+C') − 1)² / (1+C') · (T_e − T_a + Δ_A)`.
    ///
    /// The same expression bounds both heating (C' > 0) and cooling (−1 < C' < 0)
    /// transients: in both cases the difference peaks where `e^(−β't) = 1/(1 + sqrt(1+C'))`.
    pub fn error_bound(&self) -> Result<f64, AnalyticError> {
        let c = self.c_prime;
        if !(c > -1.0) {
            return Err(AnalyticError::InvalidModel { c_prime: c });
        }
        let s = (1.0 + c).sqrt();
        Ok(self.amplitude() * c / ((s + 1.0) * (s + 1.0) * (1.0 + c)))
    }

    /// Time for the conductor to reach `threshold`.
    pub fn time_to_threshold(&self, threshold: f64, form: SolutionForm) -> ThresholdTime {
        let (tc0, te) = (self.initial_temp, self.steady_temp);
        if tc0 >= threshold {
            return ThresholdTime::Reached(0.0);
        }
        if te <= threshold {
            return ThresholdTime::Never;
        }
        let mut ratio = (te - tc0) / (te - threshold);
        if form == SolutionForm::Riccati {
            let two_ta = 2.0 * self.ambient_temp;
            ratio *= (self.beta_t * (threshold + te - two_ta) + self.beta_0)
                / (self.beta_t * (tc0 + te - two_ta) + self.beta_0);
        }
        ThresholdTime::Reached((ratio.ln() / self.rate).max(0.0))
    }

    /// Re-targets the model to `new_current` without iterating.
    ///
    /// β_ΔT is kept; Q_si and β_Δ0 shift by the joule-heat change and T_e
    /// follows from the quadratic steady-state condition.
    pub fn update_for_current(
        &self,
        conductor: &Conductor,
        new_current: f64,
    ) -> Result<Self, AnalyticError> {
        let i = conductor.sub_conductor_current(self.reference_current);
        let j = conductor.sub_conductor_current(new_current);
        let d2 = j * j - i * i;
        let mcp = conductor.heat_capacity_per_length;
        let q_si = self.q_si + d2 * conductor.resistance(self.ambient_temp) / mcp;
        let beta_0 = self.beta_0 - d2 * conductor.resistance_slope / mcp;
        let discriminant = beta_0 * beta_0 + 4.0 * self.beta_t * q_si;
        if discriminant < 0.0 {
            return Err(AnalyticError::NegativeDiscriminant {
                current: new_current,
                discriminant,
            });
        }
        Self::from_coefficients(
            self.ambient_temp,
            self.initial_temp,
            q_si,
            beta_0,
            self.beta_t,
            new_current,
            self.degenerate_threshold,
        )
    }
}

/// Outcome of a time-to-threshold query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdTime {
    /// Seconds from the start; 0 when already at or above the threshold.
    Reached(f64),
    Never,
}

impl ThresholdTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            ThresholdTime::Reached(t) => Some(t),
            ThresholdTime::Never => None,
        }
    }
}

/// Secant linearization of β_Δ between the initial and steady-state temperatures.
pub fn linearize(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    initial_temp: f64,
    steady_temp: f64,
    config: &SolverConfig,
) -> Result<LinearizedModel, AnalyticError> {
    let hb = HeatBalance::new(conductor, env, line_azimuth);
    linearize_with(&hb, current, initial_temp, steady_temp, config)
}

pub fn linearize_with(
    hb: &HeatBalance<'_>,
    current: f64,
    initial_temp: f64,
    steady_temp: f64,
    config: &SolverConfig,
) -> Result<LinearizedModel, AnalyticError> {
    let ta = hb.ambient_temp;
    let d0 = initial_temp - ta;
    let de = steady_temp - ta;
    let b_c0 = hb.beta_delta(current, d0);
    let (beta_0, beta_t) = if (de - d0).abs() < 1e-9 {
        (b_c0, 0.0)
    } else {
        let beta_t = (hb.beta_delta(current, de) - b_c0) / (de - d0);
        (b_c0 - beta_t * d0, beta_t)
    };
    LinearizedModel::from_coefficients(
        ta,
        initial_temp,
        hb.q_si(current),
        beta_0,
        beta_t,
        current,
        config.degenerate_threshold,
    )
}

/// Steady-state solve followed by linearization.
pub fn build_model(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    initial_temp: f64,
    config: &SolverConfig,
) -> Result<LinearizedModel, AnalyticError> {
    let hb = HeatBalance::new(conductor, env, line_azimuth);
    build_model_with(&hb, current, initial_temp, config)
}

pub fn build_model_with(
    hb: &HeatBalance<'_>,
    current: f64,
    initial_temp: f64,
    config: &SolverConfig,
) -> Result<LinearizedModel, AnalyticError> {
    let ss = solve_steady_state_with(hb, current, initial_temp, config)?;
    linearize_with(hb, current, initial_temp, ss.temp, config)
}

/// Models kept at a few reference currents for one site and weather sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub models: Vec<LinearizedModel>,
}

impl ReferenceSet {
    pub fn build(
        hb: &HeatBalance<'_>,
        references: &[f64],
        initial_temp: f64,
        config: &SolverConfig,
    ) -> Result<Self, AnalyticError> {
        let models = references
            .iter()
            .map(|&i| build_model_with(hb, i, initial_temp, config))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReferenceSet { models })
    }

    /// The reference whose current is closest to `current` (lower index on ties).
    pub fn nearest(&self, current: f64) -> Option<&LinearizedModel> {
        self.models.iter().min_by(|a, b| {
            (a.reference_current - current)
                .abs()
                .total_cmp(&(b.reference_current - current).abs())
        })
    }

    /// Model at `current`, updated from the nearest reference.
    pub fn model_for(
        &self,
        conductor: &Conductor,
        current: f64,
    ) -> Option<Result<LinearizedModel, AnalyticError>> {
        self.nearest(current)
            .map(|m| m.update_for_current(conductor, current))
    }
}
