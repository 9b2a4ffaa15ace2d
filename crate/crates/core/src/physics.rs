//! Conductor heat balance: joule, solar, convection and radiation terms.
//!
//! Air properties follow the SI polynomial laws of the standard overhead
//! conductor rating method, evaluated at the film temperature
//! `(T_c + T_a) / 2`:
//!
//! ```text
//! μ_f = 1.458e-6 (T_film + 273)^1.5 / (T_film + 383.4)
//! k_f = 2.424e-2 + 7.477e-5 T_film − 4.407e-9 T_film²
//! ρ_f = (1.293 − 1.525e-4 H_e + 6.379e-9 H_e²) / (1 + 0.00367 T_film)
//! ```
//!
//! Convection is `q_c = C_c · ΔT` where `C_c` is the largest of the three
//! branch coefficients (forced high-wind, forced low-wind, natural). For
//! `ΔT ≥ 0` this is exactly the maximum of the three branch heat flows. Below
//! ambient the natural branch uses `|ΔT|^0.25`, so the cooling law stays
//! continuous through `ΔT = 0` and always drives the conductor toward ambient.

use serde::{Deserialize, Serialize};

use crate::conductor::Conductor;
use crate::environment::EnvironmentSample;

const KELVIN: f64 = 273.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirProperties {
    pub film_temp: f64,
    /// W/(m·°C)
    pub thermal_conductivity: f64,
    /// kg/m³
    pub density: f64,
    /// kg/(m·s)
    pub dynamic_viscosity: f64,
}

/// Sea-level-relative density numerator of the elevation law.
fn density_at_zero_celsius(elevation: f64) -> f64 {
    1.293 - 1.525e-4 * elevation + 6.379e-9 * elevation * elevation
}

fn air_at_film(film: f64, rho0: f64) -> AirProperties {
    let abs = film + KELVIN;
    AirProperties {
        film_temp: film,
        thermal_conductivity: 2.424e-2 + 7.477e-5 * film - 4.407e-9 * film * film,
        density: rho0 / (1.0 + 0.00367 * film),
        dynamic_viscosity: 1.458e-6 * abs * abs.sqrt() / (film + 383.4),
    }
}

pub fn air_properties(conductor_temp: f64, ambient_temp: f64, elevation: f64) -> AirProperties {
    air_at_film(
        0.5 * (conductor_temp + ambient_temp),
        density_at_zero_celsius(elevation),
    )
}

/// Acute angle φ ∈ [0°, 90°] between the wind and the line axis.
pub fn attack_angle(wind_direction: f64, line_azimuth: f64) -> f64 {
    let d = (wind_direction - line_azimuth).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Wind direction factor `K_a = 1.194 − cos φ + 0.194 cos 2φ + 0.368 sin 2φ`.
pub fn angle_factor(phi_deg: f64) -> f64 {
    let phi = phi_deg.to_radians();
    1.194 - phi.cos() + 0.194 * (2.0 * phi).cos() + 0.368 * (2.0 * phi).sin()
}

pub fn wind_angle_factor(wind_direction: f64, line_azimuth: f64) -> f64 {
    angle_factor(attack_angle(wind_direction, line_azimuth))
}

/// Solar heat gain q_s, W/m. Zero at night.
pub fn solar_heat(conductor: &Conductor, env: &EnvironmentSample, line_azimuth: f64) -> f64 {
    if env.solar_irradiance <= 0.0 || env.sun_altitude <= 0.0 {
        return 0.0;
    }
    let cos_theta =
        env.sun_altitude.to_radians().cos() * (env.sun_azimuth - line_azimuth).to_radians().cos();
    let theta = cos_theta.clamp(-1.0, 1.0).acos();
    conductor.absorptivity
        * env.solar_irradiance
        * theta.sin()
        * conductor.projected_area_per_length
}

/// Radiated heat q_r, W/m, with the diameter in meters.
pub fn radiation_heat(conductor: &Conductor, conductor_temp: f64, ambient_temp: f64) -> f64 {
    let a = (conductor_temp + KELVIN) / 100.0;
    let b = (ambient_temp + KELVIN) / 100.0;
    17.8 * conductor.emissivity * conductor.diameter * (a.powi(4) - b.powi(4))
}

/// `q_r / (T_c − T_a)` from the exact factorization of the fourth-power law.
pub fn radiation_coefficient(conductor: &Conductor, conductor_temp: f64, ambient_temp: f64) -> f64 {
    let a = (conductor_temp + KELVIN) / 100.0;
    let b = (ambient_temp + KELVIN) / 100.0;
    17.8 * conductor.emissivity
        * conductor.diameter
        * (conductor_temp + ambient_temp + 2.0 * KELVIN)
        / 1e4
        * (a * a + b * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionBranch {
    ForcedHigh,
    ForcedLow,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convection {
    /// q_c, W/m.
    pub heat: f64,
    /// C_c = q_c / ΔT, W/(m·°C).
    pub coefficient: f64,
    pub branch: ConvectionBranch,
    pub angle_factor: f64,
    pub reynolds: f64,
}

/// All four heat flows at one conductor temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatTerms {
    pub joule: f64,
    pub solar: f64,
    pub convection: f64,
    pub radiation: f64,
    pub branch: ConvectionBranch,
    pub angle_factor: f64,
    pub reynolds: f64,
}

impl HeatTerms {
    pub fn net(&self) -> f64 {
        self.joule + self.solar - self.convection - self.radiation
    }
}

/// Heat balance of one conductor under one fixed weather sample and line direction.
///
/// Everything independent of conductor temperature and current is computed once.
#[derive(Debug, Clone)]
pub struct HeatBalance<'a> {
    pub conductor: &'a Conductor,
    pub ambient_temp: f64,
    pub wind_speed: f64,
    angle_factor: f64,
    solar: f64,
    rho0: f64,
    natural_const: f64,
    inv_heat_capacity: f64,
}

impl<'a> HeatBalance<'a> {
    pub fn new(conductor: &'a Conductor, env: &EnvironmentSample, line_azimuth: f64) -> Self {
        HeatBalance {
            conductor,
            ambient_temp: env.ambient_temp,
            wind_speed: env.wind_speed.max(0.0),
            angle_factor: wind_angle_factor(env.wind_direction, line_azimuth),
            solar: solar_heat(conductor, env, line_azimuth),
            rho0: density_at_zero_celsius(env.elevation),
            natural_const: 3.645 * conductor.diameter.powf(0.75),
            inv_heat_capacity: 1.0 / conductor.heat_capacity_per_length,
        }
    }

    /// Same site with a different wind speed.
    pub fn with_wind_speed(&self, wind_speed: f64) -> Self {
        let mut out = self.clone();
        out.wind_speed = wind_speed.max(0.0);
        out
    }

    pub fn solar_heat(&self) -> f64 {
        self.solar
    }

    pub fn angle_factor(&self) -> f64 {
        self.angle_factor
    }

    pub fn air(&self, conductor_temp: f64) -> AirProperties {
        air_at_film(0.5 * (conductor_temp + self.ambient_temp), self.rho0)
    }

    pub fn reynolds(&self, air: &AirProperties) -> f64 {
        self.conductor.diameter * air.density * self.wind_speed / air.dynamic_viscosity
    }

    /// Branch coefficients (forced high, forced low, natural) so that each branch
    /// heat flow equals coefficient × ΔT.
    pub fn branch_coefficients(&self, conductor_temp: f64) -> ([f64; 3], f64) {
        let air = self.air(conductor_temp);
        let nr = self.reynolds(&air);
        let dt = conductor_temp - self.ambient_temp;
        let ka_kf = self.angle_factor * air.thermal_conductivity;
        let (p60, p52) = if nr > 0.0 {
            let l = nr.ln();
            ((0.6 * l).exp(), (0.52 * l).exp())
        } else {
            (0.0, 0.0)
        };
        let high = 0.754 * ka_kf * p60;
        let low = ka_kf * (1.01 + 1.35 * p52);
        let natural = self.natural_const * air.density.sqrt() * dt.abs().sqrt().sqrt();
        ([high, low, natural], nr)
    }

    pub fn convection(&self, conductor_temp: f64) -> Convection {
        let ([high, low, natural], nr) = self.branch_coefficients(conductor_temp);
        // Ties resolve to the earlier branch in (high, low, natural) order.
        let (coefficient, branch) = if high >= low && high >= natural {
            (high, ConvectionBranch::ForcedHigh)
        } else if low >= natural {
            (low, ConvectionBranch::ForcedLow)
        } else {
            (natural, ConvectionBranch::Natural)
        };
        Convection {
            heat: coefficient * (conductor_temp - self.ambient_temp),
            coefficient,
            branch,
            angle_factor: self.angle_factor,
            reynolds: nr,
        }
    }

    pub fn radiation(&self, conductor_temp: f64) -> f64 {
        radiation_heat(self.conductor, conductor_temp, self.ambient_temp)
    }

    pub fn joule(&self, current: f64, conductor_temp: f64) -> f64 {
        let i = self.conductor.sub_conductor_current(current);
        i * i * self.conductor.resistance(conductor_temp)
    }

    pub fn terms(&self, current: f64, conductor_temp: f64) -> HeatTerms {
        let conv = self.convection(conductor_temp);
        HeatTerms {
            joule: self.joule(current, conductor_temp),
            solar: self.solar,
            convection: conv.heat,
            radiation: self.radiation(conductor_temp),
            branch: conv.branch,
            angle_factor: conv.angle_factor,
            reynolds: conv.reynolds,
        }
    }

    /// dT_c/dt in the direct form `(q_i + q_s − q_c − q_r) / mC_p`, °C/s.
    pub fn rhs(&self, current: f64, conductor_temp: f64) -> f64 {
        self.terms(current, conductor_temp).net() * self.inv_heat_capacity
    }

    /// Temperature-independent forcing Q_si, °C/s.
    pub fn q_si(&self, current: f64) -> f64 {
        (self.joule(current, self.ambient_temp) + self.solar) * self.inv_heat_capacity
    }

    /// Net cooling rate β(T_c), 1/s, such that dT_c/dt = Q_si − β(T_c)·(T_c − T_a).
    pub fn beta(&self, current: f64, conductor_temp: f64) -> f64 {
        let i = self.conductor.sub_conductor_current(current);
        let conv = self.convection(conductor_temp);
        let rad = radiation_coefficient(self.conductor, conductor_temp, self.ambient_temp);
        (conv.coefficient - i * i * self.conductor.resistance_slope + rad) * self.inv_heat_capacity
    }

    /// β as a function of ΔT = T_c − T_a.
    pub fn beta_delta(&self, current: f64, delta: f64) -> f64 {
        self.beta(current, self.ambient_temp + delta)
    }

    pub fn heat_capacity(&self) -> f64 {
        self.conductor.heat_capacity_per_length
    }
}

pub fn convection_heat(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    conductor_temp: f64,
) -> Convection {
    HeatBalance::new(conductor, env, line_azimuth).convection(conductor_temp)
}

pub fn heat_terms(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    conductor_temp: f64,
) -> HeatTerms {
    HeatBalance::new(conductor, env, line_azimuth).terms(current, conductor_temp)
}

pub fn heat_balance_rhs(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    conductor_temp: f64,
) -> f64 {
    HeatBalance::new(conductor, env, line_azimuth).rhs(current, conductor_temp)
}

pub fn beta_of_temp(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    conductor_temp: f64,
) -> f64 {
    HeatBalance::new(conductor, env, line_azimuth).beta(current, conductor_temp)
}

pub fn q_si(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
) -> f64 {
    HeatBalance::new(conductor, env, line_azimuth).q_si(current)
}
