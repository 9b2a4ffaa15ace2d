//! Weather conditions at one place and time, plus the sun-position model.
//!
//! Azimuths are degrees clockwise from north. Wind direction is the
//! meteorological "blowing from" direction.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSample {
    /// Ambient temperature, °C.
    pub ambient_temp: f64,
    /// Wind speed, m/s.
    pub wind_speed: f64,
    /// Wind direction (from), degrees in [0, 360).
    pub wind_direction: f64,
    /// Global solar irradiance on a surface normal to the beam, W/m².
    pub solar_irradiance: f64,
    /// Sun altitude H_c, degrees.
    pub sun_altitude: f64,
    /// Sun azimuth Z_c, degrees.
    pub sun_azimuth: f64,
    /// Elevation above sea level, m.
    pub elevation: f64,
}

impl EnvironmentSample {
    /// Calm night at sea level.
    pub fn still(ambient_temp: f64) -> Self {
        EnvironmentSample {
            ambient_temp,
            wind_speed: 0.0,
            wind_direction: 0.0,
            solar_irradiance: 0.0,
            sun_altitude: -30.0,
            sun_azimuth: 0.0,
            elevation: 0.0,
        }
    }

    pub fn with_wind(mut self, speed: f64, direction: f64) -> Self {
        self.wind_speed = speed;
        self.wind_direction = normalize_azimuth(direction);
        self
    }

    pub fn with_sun(mut self, irradiance: f64, altitude: f64, azimuth: f64) -> Self {
        self.solar_irradiance = irradiance;
        self.sun_altitude = altitude;
        self.sun_azimuth = normalize_azimuth(azimuth);
        self
    }

    pub fn with_ambient(mut self, ambient_temp: f64) -> Self {
        self.ambient_temp = ambient_temp;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.wind_speed >= 0.0
            && self.solar_irradiance >= 0.0
            && (-90.0..=90.0).contains(&self.sun_altitude)
            && self.ambient_temp.is_finite()
            && self.wind_direction.is_finite()
    }
}

/// Maps any angle onto [0, 360).
pub fn normalize_azimuth(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Folds a direction onto an undirected axis in [0, 180).
pub fn fold_axis(deg: f64) -> f64 {
    let a = deg.rem_euclid(180.0);
    if a >= 180.0 - 1e-9 {
        0.0
    } else {
        a
    }
}

/// Speed and "from" direction of a wind vector with eastward `u` and northward `v`.
pub fn wind_from_components(u: f64, v: f64) -> (f64, f64) {
    let speed = u.hypot(v);
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    (speed, normalize_azimuth((-u).atan2(-v).to_degrees()))
}

/// Inverse of [`wind_from_components`].
pub fn wind_components(speed: f64, direction_from: f64) -> (f64, f64) {
    let r = direction_from.to_radians();
    (-speed * r.sin(), -speed * r.cos())
}

/// Sun altitude and azimuth (degrees) from the standard annex solar model.
///
/// Declination δ = 23.46·sin((284 + N)/365 · 360°), hour angle ω = 15·(hour − 12).
pub fn solar_geometry(latitude: f64, day_of_year: u32, local_solar_hour: f64) -> (f64, f64) {
    let lat = latitude.to_radians();
    let decl = (23.46
        * ((284.0 + f64::from(day_of_year)) / 365.0 * 360.0)
            .to_radians()
            .sin())
    .to_radians();
    let omega_deg = 15.0 * (local_solar_hour - 12.0);
    let omega = omega_deg.to_radians();

    let sin_alt = lat.cos() * decl.cos() * omega.cos() + lat.sin() * decl.sin();
    let altitude = sin_alt.clamp(-1.0, 1.0).asin().to_degrees();

    let denom = lat.sin() * omega.cos() - lat.cos() * decl.tan();
    let chi = omega.sin() / denom;
    // Quadrant constant from the sign of ω and of the azimuth variable χ.
    let azimuth = if denom == 0.0 {
        if omega_deg < 0.0 {
            90.0
        } else {
            270.0
        }
    } else {
        let c = match (omega_deg < 0.0, chi >= 0.0) {
            (true, true) => 0.0,
            (true, false) => 180.0,
            (false, true) => 180.0,
            (false, false) => 360.0,
        };
        c + chi.atan().to_degrees()
    };
    (altitude, normalize_azimuth(azimuth))
}
