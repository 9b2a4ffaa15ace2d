//! Over-temperature risk: threshold wind speed, exceedance probability under
//! a sector wind rose, and time-to-limit maps over wind direction and speed.
//!
//! The threshold wind speed is the wind at which the steady-state temperature
//! equals the limit. The heat balance at `T_th` fixes the convection the wind
//! must supply,
//!
//! ```text
//! q_c,req = I²R(T_th) + q_s − q_r(T_th, T_a)
//! ```
//!
//! and the two forced branches are inverted exactly for the Reynolds number:
//!
//! ```text
//! N_R^h = (q_c,req / (0.754 K_a k_f ΔT))^(1/0.6)
//! N_R^l = ((q_c,req / (K_a k_f ΔT) − 1.01) / 1.35)^(1/0.52)
//! V     = min(N_R^h, N_R^l) · μ_f / (D ρ_f)
//! ```
//!
//! Air properties are taken at the film temperature `(T_th + T_a) / 2`. When
//! still air (natural convection, or the forced low-wind branch at zero
//! Reynolds number) already removes more than `q_c,req`, the limit cannot be
//! reached at any wind speed.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Weibull};
use thiserror::Error;

use crate::analytic::{
    solve_steady_state_with, AnalyticError, LinearizedModel, SolutionForm, SolverConfig,
    ThresholdTime,
};
use crate::conductor::Conductor;
use crate::environment::{normalize_azimuth, EnvironmentSample};
use crate::format::sig6;
use crate::physics::{attack_angle, HeatBalance};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid wind model: {0}")]
    InvalidWindModel(String),
    #[error("invalid binning: {0}")]
    InvalidBinning(&'static str),
    #[error("threshold {threshold} °C must exceed ambient {ambient} °C")]
    ThresholdBelowAmbient { threshold: f64, ambient: f64 },
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error(transparent)]
    Solver(#[from] AnalyticError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Outcome of the threshold wind-speed calculation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindThreshold {
    /// Any wind below this speed (m/s) drives the steady state above the limit.
    Speed(f64),
    /// The limit is not reached even in still air.
    Unreachable,
}

impl WindThreshold {
    pub fn speed(self) -> Option<f64> {
        match self {
            WindThreshold::Speed(v) => Some(v),
            WindThreshold::Unreachable => None,
        }
    }
}

/// Wind speed at which the steady state of `hb` sits exactly at `target` °C.
/// The wind speed stored in `hb` is ignored.
pub fn required_wind_speed(hb: &HeatBalance<'_>, current: f64, target: f64) -> WindThreshold {
    let dt = target - hb.ambient_temp;
    if !(dt > 0.0) {
        return WindThreshold::Unreachable;
    }
    let q_req = required_convection(hb, current, target);
    let natural = hb.branch_coefficients(target).0[2] * dt;
    let still_forced = 1.01 * hb.angle_factor() * hb.air(target).thermal_conductivity * dt;
    if q_req <= natural.max(still_forced) {
        return WindThreshold::Unreachable;
    }
    WindThreshold::Speed(forced_wind_speed(hb, q_req, target))
}

/// `I²R(T) + q_s − q_r(T)`: the convection that holds the conductor at `T`.
fn required_convection(hb: &HeatBalance<'_>, current: f64, target: f64) -> f64 {
    hb.joule(current, target) + hb.solar_heat() - hb.radiation(target)
}

/// Smallest wind speed at which a forced branch removes `q` at `target`;
/// zero when still air already does.
fn forced_wind_speed(hb: &HeatBalance<'_>, q: f64, target: f64) -> f64 {
    let air = hb.air(target);
    let unit = hb.angle_factor() * air.thermal_conductivity * (target - hb.ambient_temp);
    let n_high = (q / (0.754 * unit)).max(0.0).powf(1.0 / 0.6);
    let n_low = ((q / unit - 1.01) / 1.35).max(0.0).powf(1.0 / 0.52);
    n_high.min(n_low) * air.dynamic_viscosity / (hb.conductor.diameter * air.density)
}

/// Threshold wind speed for `env` with its wind speed treated as unknown.
pub fn threshold_wind_speed(
    conductor: &Conductor,
    env: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    threshold: f64,
) -> WindThreshold {
    required_wind_speed(
        &HeatBalance::new(conductor, env, line_azimuth),
        current,
        threshold,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedDistribution {
    Weibull { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
}

impl SpeedDistribution {
    pub fn validate(&self) -> Result<(), RiskError> {
        match *self {
            SpeedDistribution::Weibull { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0) {
                    return Err(RiskError::InvalidWindModel(
                        "Weibull shape and scale must be positive".into(),
                    ));
                }
            }
            SpeedDistribution::Uniform { low, high } => {
                if !(low >= 0.0 && high >= low) {
                    return Err(RiskError::InvalidWindModel(
                        "uniform speed needs 0 ≤ low ≤ high".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            SpeedDistribution::Weibull { shape, scale } => {
                Weibull::new(shape, scale).map(|w| w.cdf(v)).unwrap_or(0.0)
            }
            SpeedDistribution::Uniform { low, high } => {
                if v < low {
                    0.0
                } else if v >= high {
                    1.0
                } else {
                    (v - low) / (high - low)
                }
            }
        }
    }

    /// Density per m/s. A point mass (`low == high`) has no density.
    pub fn pdf(&self, v: f64) -> f64 {
        match *self {
            SpeedDistribution::Weibull { shape, scale } => {
                if v < 0.0 {
                    0.0
                } else {
                    Weibull::new(shape, scale).map(|w| w.pdf(v)).unwrap_or(0.0)
                }
            }
            SpeedDistribution::Uniform { low, high } => {
                if high > low && v >= low && v <= high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A direction sector of the wind rose. Directions within the sector are
/// uniformly distributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindSector {
    /// Sector start, degrees clockwise from north.
    pub start_deg: f64,
    pub width_deg: f64,
    pub probability: f64,
    pub speed: SpeedDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmbientDistribution {
    Uniform {
        low: f64,
        high: f64,
    },
    /// Histogram with `edges.len() == weights.len() + 1`; weights need not be normalized.
    Histogram {
        edges: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl AmbientDistribution {
    fn support(&self) -> (f64, f64) {
        match self {
            AmbientDistribution::Uniform { low, high } => (*low, *high),
            AmbientDistribution::Histogram { edges, .. } => (edges[0], edges[edges.len() - 1]),
        }
    }

    /// Probability mass of `[a, b)`.
    fn mass(&self, a: f64, b: f64) -> f64 {
        match self {
            AmbientDistribution::Uniform { low, high } => {
                if high <= low {
                    return if *low >= a && *low < b { 1.0 } else { 0.0 };
                }
                overlap(a, b, *low, *high) / (high - low)
            }
            AmbientDistribution::Histogram { edges, weights } => {
                let total: f64 = weights.iter().sum();
                let mut m = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    let (lo, hi) = (edges[i], edges[i + 1]);
                    m += w * overlap(a, b, lo, hi) / (hi - lo);
                }
                m / total
            }
        }
    }

    /// Bin centers and masses for `n` equal-width bins over the support.
    fn bins(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.support();
        if hi <= lo {
            return vec![(lo, 1.0)];
        }
        let w = (hi - lo) / n as f64;
        (0..n)
            .map(|i| {
                let a = lo + i as f64 * w;
                let b = if i + 1 == n { hi + w * 1e-9 } else { a + w };
                (a + 0.5 * w, self.mass(a, b))
            })
            .collect()
    }
}

fn overlap(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (b.min(d) - a.max(c)).max(0.0)
}

/// Overlap of `[a, b)` ⊂ [0, 360) with a sector that may wrap past north.
fn circular_overlap(a: f64, b: f64, start: f64, width: f64) -> f64 {
    let s = normalize_azimuth(start);
    [-360.0, 0.0, 360.0]
        .iter()
        .map(|off| overlap(a, b, s + off, s + off + width))
        .sum()
}

/// Sector wind rose with an independent ambient-temperature distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindModel {
    pub sectors: Vec<WindSector>,
    pub ambient: AmbientDistribution,
}

impl WindModel {
    /// Single sector covering all directions.
    pub fn isotropic(speed: SpeedDistribution, ambient: AmbientDistribution) -> Self {
        WindModel {
            sectors: vec![WindSector {
                start_deg: 0.0,
                width_deg: 360.0,
                probability: 1.0,
                speed,
            }],
            ambient,
        }
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if self.sectors.is_empty() {
            return Err(RiskError::InvalidWindModel("no sectors".into()));
        }
        let mut total_p = 0.0;
        let mut total_w = 0.0;
        for s in &self.sectors {
            if !(s.width_deg > 0.0 && s.width_deg <= 360.0) {
                return Err(RiskError::InvalidWindModel(
                    "sector width must lie in (0, 360]".into(),
                ));
            }
            if !(s.probability >= 0.0) {
                return Err(RiskError::InvalidWindModel(
                    "sector probability must be non-negative".into(),
                ));
            }
            s.speed.validate()?;
            total_p += s.probability;
            total_w += s.width_deg;
        }
        if (total_p - 1.0).abs() > 1e-9 {
            return Err(RiskError::InvalidWindModel(format!(
                "sector probabilities sum to {total_p}, not 1"
            )));
        }
        if total_w > 360.0 + 1e-9 {
            return Err(RiskError::InvalidWindModel(
                "sectors overlap (total width exceeds 360°)".into(),
            ));
        }
        match &self.ambient {
            AmbientDistribution::Uniform { low, high } => {
                if !(high >= low) {
                    return Err(RiskError::InvalidWindModel(
                        "ambient range needs low ≤ high".into(),
                    ));
                }
            }
            AmbientDistribution::Histogram { edges, weights } => {
                if edges.len() != weights.len() + 1 || weights.is_empty() {
                    return Err(RiskError::InvalidWindModel(
                        "histogram needs one more edge than weights".into(),
                    ));
                }
                if edges.windows(2).any(|e| !(e[1] > e[0])) {
                    return Err(RiskError::InvalidWindModel(
                        "histogram edges must increase".into(),
                    ));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(RiskError::InvalidWindModel(
                        "histogram weights must be non-negative with positive sum".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Joint density of (direction, speed) per degree per m/s.
    pub fn density(&self, direction: f64, speed: f64) -> f64 {
        let d = normalize_azimuth(direction);
        self.sectors
            .iter()
            .filter(|s| circular_overlap(d, d + 1e-12, s.start_deg, s.width_deg) > 0.0)
            .map(|s| s.probability / s.width_deg * s.speed.pdf(speed))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub n_temp_bins: usize,
    pub n_direction_bins: usize,
}

impl BinningSpec {
    pub fn square(n: usize) -> Self {
        BinningSpec {
            n_temp_bins: n,
            n_direction_bins: n,
        }
    }
}

/// Probability that the steady-state temperature reaches `threshold`.
///
/// Midpoint rule over ambient temperature and wind direction: each
/// (temperature bin, direction bin, sector) triple contributes
/// `F_V(V_th) · p(T_a bin) · p(direction bin ∩ sector)`, with `V_th` evaluated at
/// the bin centers. Unreachable bins contribute nothing.
pub fn overtemp_probability(
    conductor: &Conductor,
    site: &EnvironmentSample,
    line_azimuth: f64,
    current: f64,
    threshold: f64,
    model: &WindModel,
    binning: BinningSpec,
) -> Result<f64, RiskError> {
    model.validate()?;
    if binning.n_temp_bins == 0 || binning.n_direction_bins == 0 {
        return Err(RiskError::InvalidBinning("bin counts must be at least 1"));
    }
    let temp_bins = model.ambient.bins(binning.n_temp_bins);
    let nd = binning.n_direction_bins;
    let width = 360.0 / nd as f64;
    // (center, [(sector index, mass)])
    let dir_bins: Vec<(f64, Vec<(usize, f64)>)> = (0..nd)
        .map(|j| {
            let a = j as f64 * width;
            let masses = model
                .sectors
                .iter()
                .enumerate()
                .filter_map(|(k, s)| {
                    let m = s.probability
                        * circular_overlap(a, a + width, s.start_deg, s.width_deg)
                        / s.width_deg;
                    (m > 0.0).then_some((k, m))
                })
                .collect();
            (a + 0.5 * width, masses)
        })
        .collect();

    let per_temp: Vec<f64> = temp_bins
        .par_iter()
        .map(|&(ta, p_ta)| {
            if p_ta == 0.0 || threshold <= ta {
                // At or above the limit in still air counts as exceeded.
                return if threshold <= ta { p_ta } else { 0.0 };
            }
            let mut sum = 0.0;
            for (center, masses) in &dir_bins {
                if masses.is_empty() {
                    continue;
                }
                let env = site.with_ambient(ta).with_wind(0.0, *center);
                let hb = HeatBalance::new(conductor, &env, line_azimuth);
                if let WindThreshold::Speed(v) = required_wind_speed(&hb, current, threshold) {
                    for &(k, m) in masses {
                        sum += model.sectors[k].speed.cdf(v) * m;
                    }
                }
            }
            sum * p_ta
        })
        .collect();
    Ok(per_temp.iter().sum::<f64>().clamp(0.0, 1.0))
}

/// Value of one region cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionCell {
    /// Seconds until the limit is reached.
    Time(f64),
    /// The steady state stays at or below the limit.
    Never,
    /// The conductor starts at or above the limit.
    AlreadyExceeded,
}

impl RegionCell {
    /// CSV encoding: seconds, −1 for never, −2 for already exceeded.
    pub fn encoded(self) -> f64 {
        match self {
            RegionCell::Time(t) => t,
            RegionCell::Never => -1.0,
            RegionCell::AlreadyExceeded => -2.0,
        }
    }

    pub fn seconds(self) -> Option<f64> {
        match self {
            RegionCell::Time(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAxes {
    /// Wind directions, degrees in [0, 360), increasing.
    pub directions: Vec<f64>,
    /// Wind speeds, m/s, non-negative and increasing.
    pub speeds: Vec<f64>,
}

impl RegionAxes {
    /// `nd` directions from 0° at equal spacing and `ns` speeds from `v_lo` to `v_hi` inclusive.
    pub fn uniform(nd: usize, v_lo: f64, v_hi: f64, ns: usize) -> Self {
        let dstep = 360.0 / nd as f64;
        let vstep = if ns > 1 {
            (v_hi - v_lo) / (ns - 1) as f64
        } else {
            0.0
        };
        RegionAxes {
            directions: (0..nd).map(|i| i as f64 * dstep).collect(),
            speeds: (0..ns).map(|i| v_lo + i as f64 * vstep).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if self.directions.is_empty() || self.speeds.is_empty() {
            return Err(RiskError::AxisMismatch("axes must be non-empty".into()));
        }
        if self.directions.iter().any(|d| !(0.0..360.0).contains(d)) {
            return Err(RiskError::AxisMismatch(
                "directions must lie in [0, 360)".into(),
            ));
        }
        if self.speeds.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(RiskError::AxisMismatch(
                "speeds must be finite and non-negative".into(),
            ));
        }
        if self.directions.windows(2).any(|w| !(w[1] > w[0]))
            || self.speeds.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(RiskError::AxisMismatch(
                "axes must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Cell widths: half the distance to each neighbour, periodic in direction.
    fn widths(&self) -> (Vec<f64>, Vec<f64>) {
        let nd = self.directions.len();
        let dw = (0..nd)
            .map(|i| {
                if nd == 1 {
                    return 360.0;
                }
                let prev = if i == 0 {
                    self.directions[nd - 1] - 360.0
                } else {
                    self.directions[i - 1]
                };
                let next = if i + 1 == nd {
                    self.directions[0] + 360.0
                } else {
                    self.directions[i + 1]
                };
                0.5 * (next - prev)
            })
            .collect();
        let s = &self.speeds;
        let ns = s.len();
        let sw = (0..ns)
            .map(|i| {
                if ns == 1 {
                    return 1.0;
                }
                let lo = if i == 0 {
                    s[0]
                } else {
                    0.5 * (s[i - 1] + s[i])
                };
                let hi = if i + 1 == ns {
                    s[ns - 1]
                } else {
                    0.5 * (s[i] + s[i + 1])
                };
                hi - lo
            })
            .collect();
        (dw, sw)
    }
}

/// Time-to-limit map over wind direction and speed. `cells[i * speeds + j]`
/// belongs to direction `i` and speed `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub axes: RegionAxes,
    pub cells: Vec<RegionCell>,
    /// Joint (direction, speed) density per degree per m/s, when overlaid.
    pub density: Option<Vec<f64>>,
}

impl RegionGrid {
    pub fn cell(&self, direction_index: usize, speed_index: usize) -> RegionCell {
        self.cells[direction_index * self.axes.speeds.len() + speed_index]
    }

    /// Writes `direction_deg,wind_speed_ms,time_to_limit_s,density`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RiskError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "direction_deg",
            "wind_speed_ms",
            "time_to_limit_s",
            "density",
        ])
        .map_err(csv_io)?;
        let ns = self.axes.speeds.len();
        for (k, cell) in self.cells.iter().enumerate() {
            let (i, j) = (k / ns, k % ns);
            let density = self
                .density
                .as_ref()
                .map(|d| sig6(d[k]))
                .unwrap_or_default();
            w.write_record([
                sig6(self.axes.directions[i]),
                sig6(self.axes.speeds[j]),
                sig6(cell.encoded()),
                density,
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a grid written by [`RegionGrid::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, RiskError> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_io)?;
            let num = |i: usize| -> Result<f64, RiskError> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| RiskError::AxisMismatch(format!("bad number in column {i}")))
            };
            let density = match rec.get(3) {
                Some(s) if !s.is_empty() => Some(num(3)?),
                _ => None,
            };
            rows.push((num(0)?, num(1)?, num(2)?, density));
        }
        let mut directions: Vec<f64> = Vec::new();
        let mut speeds: Vec<f64> = Vec::new();
        for (d, v, _, _) in &rows {
            if directions.last() != Some(d) {
                directions.push(*d);
            }
            if directions.len() == 1 {
                speeds.push(*v);
            }
        }
        if directions.len() * speeds.len() != rows.len() {
            return Err(RiskError::AxisMismatch(
                "region CSV is not a full grid".into(),
            ));
        }
        let cells = rows
            .iter()
            .map(|r| match r.2 {
                -1.0 => RegionCell::Never,
                -2.0 => RegionCell::AlreadyExceeded,
                t => RegionCell::Time(t),
            })
            .collect();
        let density = rows.iter().map(|r| r.3).collect::<Option<Vec<_>>>();
        Ok(RegionGrid {
            axes: RegionAxes { directions, speeds },
            cells,
            density,
        })
    }
}

fn csv_io(e: csv::Error) -> RiskError {
    RiskError::Io(std::io::Error::other(e))
}

/// Metadata written next to a region CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMetadata {
    pub schema_version: u32,
    pub conductor: String,
    pub line_azimuth_deg: f64,
    pub current_a: f64,
    pub threshold_c: f64,
    pub ambient_c: f64,
    pub initial_temp_c: f64,
    pub directions_deg: Vec<f64>,
    pub speeds_ms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOptions {
    /// Lowest wind speed used for the hottest steady state, m/s.
    pub v_min: f64,
    /// Number of candidate steady-state temperatures in the sweep.
    pub sweep_points: usize,
    pub solver: SolverConfig,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            v_min: 0.05,
            sweep_points: 32,
            solver: SolverConfig::default(),
        }
    }
}

/// Inputs of a time-to-limit map.
#[derive(Debug, Clone, Copy)]
pub struct RegionProblem<'a> {
    pub conductor: &'a Conductor,
    /// Ambient temperature, solar geometry and elevation; wind is ignored.
    pub site: EnvironmentSample,
    pub line_azimuth: f64,
    pub current: f64,
    pub threshold: f64,
    pub initial_temp: f64,
}

/// Time to reach the limit for every (direction, speed) cell.
///
/// For each distinct wind angle of attack, candidate steady-state temperatures
/// are swept from the hottest one (at the lowest wind speed) down to the
/// limit. For each candidate `T_e` the balance gives `β_Δe = Q_si / (T_e − T_a)`,
/// the required convection and, through the forced-branch inversion, the
/// wind speed producing it. Each cell's `T_e` is located on the sweep and refined
/// by regula falsi. The first-order time follows from the secant linearization
/// between `T_c0` and `T_e`. Directions sharing an angle of attack with the line
/// (mirror images about the line axis and its normal) share one computation.
pub fn time_to_overtemp_region(
    problem: &RegionProblem<'_>,
    axes: &RegionAxes,
    options: &RegionOptions,
) -> Result<RegionGrid, RiskError> {
    axes.validate()?;
    options.solver.validate()?;
    let ta = problem.site.ambient_temp;
    if !(problem.threshold > ta) {
        return Err(RiskError::ThresholdBelowAmbient {
            threshold: problem.threshold,
            ambient: ta,
        });
    }
    let ns = axes.speeds.len();
    if problem.initial_temp >= problem.threshold {
        return Ok(RegionGrid {
            axes: axes.clone(),
            cells: vec![RegionCell::AlreadyExceeded; axes.directions.len() * ns],
            density: None,
        });
    }

    let key = |d: f64| (attack_angle(d, problem.line_azimuth) * 1e9).round() as i64;
    let mut unique: Vec<(i64, f64)> = Vec::new();
    for &d in &axes.directions {
        let k = key(d);
        if !unique.iter().any(|u| u.0 == k) {
            unique.push((k, d));
        }
    }
    let columns: Vec<Result<Vec<RegionCell>, RiskError>> = unique
        .par_iter()
        .map(|&(_, d)| region_column(problem, d, &axes.speeds, options))
        .collect();
    let mut by_key = HashMap::new();
    for ((k, _), col) in unique.iter().zip(columns) {
        by_key.insert(*k, col?);
    }
    let mut cells = Vec::with_capacity(axes.directions.len() * ns);
    for &d in &axes.directions {
        cells.extend_from_slice(&by_key[&key(d)]);
    }
    Ok(RegionGrid {
        axes: axes.clone(),
        cells,
        density: None,
    })
}

fn region_column(
    p: &RegionProblem<'_>,
    direction: f64,
    speeds: &[f64],
    options: &RegionOptions,
) -> Result<Vec<RegionCell>, RiskError> {
    let ta = p.site.ambient_temp;
    let v_lo = options.v_min.min(speeds[0]);
    let env = p.site.with_wind(v_lo, direction);
    let hb_lo = HeatBalance::new(p.conductor, &env, p.line_azimuth);
    let te_max = solve_steady_state_with(&hb_lo, p.current, p.initial_temp, &options.solver)?.temp;
    if te_max <= p.threshold {
        return Ok(vec![RegionCell::Never; speeds.len()]);
    }
    let q_si = hb_lo.q_si(p.current);

    // V(T_e), decreasing in T_e. At the hottest state natural convection may
    // dominate; every wind up to where a forced branch takes over gives the same T_e.
    let v_top = forced_wind_speed(
        &hb_lo,
        required_convection(&hb_lo, p.current, te_max),
        te_max,
    )
    .max(v_lo);
    let wind_for = |te: f64| -> f64 {
        if te >= te_max {
            return v_top;
        }
        required_wind_speed(&hb_lo, p.current, te)
            .speed()
            .unwrap_or(v_top)
            .max(v_top)
    };
    let v_th = wind_for(p.threshold);
    let n = options.sweep_points.max(2);
    let sweep: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let te = te_max - (te_max - p.threshold) * i as f64 / (n - 1) as f64;
            (te, wind_for(te))
        })
        .collect();

    let mut out = Vec::with_capacity(speeds.len());
    for &v in speeds {
        if v >= v_th {
            out.push(RegionCell::Never);
            continue;
        }
        let te = if v <= sweep[0].1 {
            te_max
        } else {
            let j = sweep.iter().position(|s| s.1 > v).unwrap_or(n - 1).max(1);
            refine_steady_temp(&wind_for, sweep[j - 1], sweep[j], v)
        };
        let hb = hb_lo.with_wind_speed(v);
        let d0 = p.initial_temp - ta;
        let de = te - ta;
        let beta_e = q_si / de;
        let beta_c0 = hb.beta_delta(p.current, d0);
        let beta_t = (beta_e - beta_c0) / (de - d0);
        let model = LinearizedModel::from_coefficients(
            ta,
            p.initial_temp,
            q_si,
            beta_c0 - beta_t * d0,
            beta_t,
            p.current,
            options.solver.degenerate_threshold,
        )?;
        out.push(
            match model.time_to_threshold(p.threshold, SolutionForm::FirstOrder) {
                ThresholdTime::Reached(t) => RegionCell::Time(t),
                ThresholdTime::Never => RegionCell::Never,
            },
        );
    }
    Ok(out)
}

/// Regula falsi (Illinois variant) for `V(T_e) = v` between a hotter point `a`
/// (V below `v`) and a cooler point `b` (V above `v`).
fn refine_steady_temp(wind_for: &impl Fn(f64) -> f64, a: (f64, f64), b: (f64, f64), v: f64) -> f64 {
    let (mut ta, mut fa) = (a.0, a.1 - v);
    let (mut tb, mut fb) = (b.0, b.1 - v);
    let mut side = 0i8;
    for _ in 0..60 {
        let tc = (ta * fb - tb * fa) / (fb - fa);
        let fc = wind_for(tc) - v;
        if fc.abs() < 1e-10 || (ta - tb).abs() < 1e-9 {
            return tc;
        }
        if (fc < 0.0) == (fa < 0.0) {
            ta = tc;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            tb = tc;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (ta + tb)
}

/// Attaches the joint (direction, speed) density of `model` to each cell.
pub fn overlay_probability(
    region: &RegionGrid,
    model: &WindModel,
) -> Result<RegionGrid, RiskError> {
    region.axes.validate()?;
    model.validate()?;
    let ns = region.axes.speeds.len();
    if region.cells.len() != region.axes.directions.len() * ns {
        return Err(RiskError::AxisMismatch(format!(
            "{} cells for a {}×{} grid",
            region.cells.len(),
            region.axes.directions.len(),
            ns
        )));
    }
    let mut density = Vec::with_capacity(region.cells.len());
    for &d in &region.axes.directions {
        for &v in &region.axes.speeds {
            density.push(model.density(d, v));
        }
    }
    Ok(RegionGrid {
        density: Some(density),
        ..region.clone()
    })
}

/// Probability mass of the overlay: Σ density × cell area.
pub fn overlay_mass(region: &RegionGrid) -> Option<f64> {
    let density = region.density.as_ref()?;
    let (dw, sw) = region.axes.widths();
    let ns = sw.len();
    Some(
        density
            .iter()
            .enumerate()
            .map(|(k, p)| p * dw[k / ns] * sw[k % ns])
            .sum(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::solve_steady_state;
    use crate::oracle::{integrate, IntegrationConfig};
    use crate::synthetic::*;

    fn bisect_steady(c: &Conductor, env: &EnvironmentSample, az: f64, current: f64) -> f64 {
        let hb = HeatBalance::new(c, env, az);
        let (mut lo, mut hi) = (env.ambient_temp, 500.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if hb.rhs(current, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Wind speed where the bisection steady state crosses the limit.
    fn oracle_wind(
        c: &Conductor,
        env: &EnvironmentSample,
        az: f64,
        current: f64,
        th: f64,
    ) -> Option<f64> {
        let te = |v: f64| bisect_steady(c, &env.with_wind(v, env.wind_direction), az, current);
        if te(0.0) <= th {
            return None;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while te(hi) > th {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if te(mid) > th {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    #[test]
    fn no_heat_source_is_unreachable() {
        let env = EnvironmentSample::still(30.0);
        assert_eq!(
            threshold_wind_speed(&Conductor::drake(), &env, 0.0, 0.0, 80.0),
            WindThreshold::Unreachable
        );
    }

    #[test]
    fn reference_threshold_matches_bisection() {
        let c = Conductor::drake();
        let env = reference_environment();
        let v = threshold_wind_speed(&c, &env, REFERENCE_LINE_AZIMUTH, 800.0, 100.0)
            .speed()
            .unwrap();
        let oracle = oracle_wind(&c, &env, REFERENCE_LINE_AZIMUTH, 800.0, 100.0).unwrap();
        assert!((v - oracle).abs() < 0.05, "{v} vs {oracle}");
        let cfg = SolverConfig::default();
        let at = |w: f64| {
            solve_steady_state(&c, &env.with_wind(w, 90.0), 90.0, 800.0, 50.0, &cfg)
                .unwrap()
                .temp
        };
        assert!((at(v) - 100.0).abs() < 0.5);
        assert!(at(0.9 * v) > 100.0);
    }

    #[test]
    fn perpendicular_wind_needs_less_speed() {
        let c = Conductor::drake();
        let env = reference_environment();
        let par = threshold_wind_speed(&c, &env, 90.0, 1000.0, 100.0)
            .speed()
            .unwrap();
        let perp = threshold_wind_speed(&c, &env.with_wind(0.0, 0.0), 90.0, 1000.0, 100.0)
            .speed()
            .unwrap();
        assert!(perp < par);
    }

    fn fixture_site() -> EnvironmentSample {
        reference_environment()
    }

    #[test]
    fn probability_endpoints() {
        let c = Conductor::drake();
        let amb = AmbientDistribution::Uniform {
            low: 30.0,
            high: 40.0,
        };
        let calm = WindModel::isotropic(
            SpeedDistribution::Uniform {
                low: 0.0,
                high: 0.0,
            },
            amb.clone(),
        );
        let gale = WindModel::isotropic(
            SpeedDistribution::Uniform {
                low: 50.0,
                high: 51.0,
            },
            amb.clone(),
        );
        let b = BinningSpec::square(10);
        let p1 = overtemp_probability(&c, &fixture_site(), 90.0, 900.0, 100.0, &calm, b).unwrap();
        let p0 = overtemp_probability(&c, &fixture_site(), 90.0, 900.0, 100.0, &gale, b).unwrap();
        assert!((p1 - 1.0).abs() < 1e-12, "{p1}");
        assert_eq!(p0, 0.0);
        let none = overtemp_probability(
            &c,
            &EnvironmentSample::still(30.0),
            90.0,
            0.0,
            100.0,
            &calm,
            b,
        )
        .unwrap();
        assert_eq!(none, 0.0);
    }

    #[test]
    fn probability_grows_with_current() {
        let c = Conductor::drake();
        let model = wind_rose_fixture();
        let b = BinningSpec::square(20);
        let p: Vec<f64> = [600.0, 800.0, 1000.0]
            .iter()
            .map(|&i| overtemp_probability(&c, &fixture_site(), 90.0, i, 100.0, &model, b).unwrap())
            .collect();
        assert!(p[0] <= p[1] && p[1] <= p[2], "{p:?}");
        assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn invalid_wind_model_is_rejected() {
        let mut m = wind_rose_fixture();
        m.sectors[0].probability += 0.1;
        assert!(matches!(m.validate(), Err(RiskError::InvalidWindModel(_))));
    }

    fn region_problem(c: &Conductor) -> RegionProblem<'_> {
        RegionProblem {
            conductor: c,
            site: reference_environment(),
            line_azimuth: 90.0,
            current: 1000.0,
            threshold: 100.0,
            initial_temp: 50.0,
        }
    }

    #[test]
    fn region_symmetry_and_monotonicity() {
        let c = Conductor::drake();
        let axes = RegionAxes::uniform(36, 0.05, 4.0, 40);
        let grid =
            time_to_overtemp_region(&region_problem(&c), &axes, &RegionOptions::default()).unwrap();
        for i in 0..36 {
            // Direction d and 180° − d are mirror images about the east-west line.
            let mirror = (36 - i + 18) % 36;
            for j in 0..40 {
                assert_eq!(grid.cell(i, j), grid.cell(mirror, j));
            }
            let times: Vec<f64> = (0..40).filter_map(|j| grid.cell(i, j).seconds()).collect();
            assert!(!times.is_empty());
            assert!(
                times.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)),
                "column {i} not monotone"
            );
        }
    }

    #[test]
    fn region_cells_agree_with_steady_state_and_rk4() {
        let c = Conductor::drake();
        let p = region_problem(&c);
        let axes = RegionAxes::uniform(12, 0.05, 4.0, 16);
        let grid = time_to_overtemp_region(&p, &axes, &RegionOptions::default()).unwrap();
        let cfg = SolverConfig::default();
        for (i, &d) in axes.directions.iter().enumerate() {
            for (j, &v) in axes.speeds.iter().enumerate() {
                let env = p.site.with_wind(v, d);
                let model =
                    crate::analytic::build_model(&c, &env, 90.0, p.current, 50.0, &cfg).unwrap();
                match grid.cell(i, j) {
                    RegionCell::Time(t) => {
                        assert!(model.steady_temp > p.threshold);
                        // The sweep reproduces the directly built closed form.
                        let direct = model
                            .time_to_threshold(p.threshold, SolutionForm::FirstOrder)
                            .seconds()
                            .unwrap();
                        assert!(
                            (t - direct).abs() < 1e-6 * direct,
                            "cell ({d}, {v}): {t} vs {direct}"
                        );
                        let rk = integrate(
                            &c,
                            &env,
                            90.0,
                            p.current,
                            50.0,
                            &IntegrationConfig::rk4(5.0, 4.0 * 3600.0),
                        )
                        .unwrap()
                        .crossing_time(p.threshold)
                        .seconds()
                        .unwrap();
                        assert!(
                            t <= rk + 30.0,
                            "cell ({d}, {v}) later than the oracle: {t} vs {rk}"
                        );
                        assert!((t - rk).abs() <= 0.25 * rk, "cell ({d}, {v}): {t} vs {rk}");
                        // Once forced convection governs the whole transient the error matches the reference-scenario size.
                        if v >= 1.5 {
                            assert!((t - rk).abs() < 75.0, "cell ({d}, {v}): {t} vs {rk}");
                        }
                    }
                    RegionCell::Never => {
                        assert!(model.steady_temp <= p.threshold + 1e-6, "cell ({d}, {v})")
                    }
                    RegionCell::AlreadyExceeded => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn already_exceeded_start() {
        let c = Conductor::drake();
        let mut p = region_problem(&c);
        p.initial_temp = 120.0;
        let grid = time_to_overtemp_region(
            &p,
            &RegionAxes::uniform(4, 0.1, 2.0, 3),
            &RegionOptions::default(),
        )
        .unwrap();
        assert!(grid.cells.iter().all(|c| *c == RegionCell::AlreadyExceeded));
    }

    #[test]
    fn overlay_properties() {
        let amb = AmbientDistribution::Uniform {
            low: 30.0,
            high: 40.0,
        };
        let uniform = WindModel::isotropic(
            SpeedDistribution::Uniform {
                low: 0.0,
                high: 10.0,
            },
            amb,
        );
        let grid = RegionGrid {
            axes: RegionAxes::uniform(72, 0.0, 10.0, 201),
            cells: vec![RegionCell::Never; 72 * 201],
            density: None,
        };
        let flat = overlay_probability(&grid, &uniform).unwrap();
        let d = flat.density.as_ref().unwrap();
        assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-15));
        assert!((overlay_mass(&flat).unwrap() - 1.0).abs() < 0.02);

        let rose = overlay_probability(
            &RegionGrid {
                axes: RegionAxes::uniform(72, 0.0, 30.0, 301),
                cells: vec![RegionCell::Never; 72 * 301],
                density: None,
            },
            &wind_rose_fixture(),
        )
        .unwrap();
        assert!(
            (overlay_mass(&rose).unwrap() - 1.0).abs() < 0.02,
            "{}",
            overlay_mass(&rose).unwrap()
        );

        let mut bad = grid.clone();
        bad.cells.pop();
        assert!(matches!(
            overlay_probability(&bad, &uniform),
            Err(RiskError::AxisMismatch(_))
        ));
    }

    #[test]
    fn zero_probability_sector_has_zero_overlay() {
        let mut m = wind_rose_fixture();
        let moved = m.sectors[0].probability;
        m.sectors[0].probability = 0.0;
        m.sectors[1].probability += moved;
        let grid = RegionGrid {
            axes: RegionAxes::uniform(8, 0.5, 5.0, 4),
            cells: vec![RegionCell::Never; 32],
            density: None,
        };
        let o = overlay_probability(&grid, &m).unwrap();
        let start = m.sectors[0].start_deg;
        for (i, &d) in grid.axes.directions.iter().enumerate() {
            if circular_overlap(d, d + 1e-12, start, m.sectors[0].width_deg) > 0.0 {
                assert!((0..4).all(|j| o.density.as_ref().unwrap()[i * 4 + j] == 0.0));
            }
        }
    }

    #[test]
    fn region_csv_round_trip() {
        let c = Conductor::drake();
        let grid = time_to_overtemp_region(
            &region_problem(&c),
            &RegionAxes::uniform(8, 0.1, 3.0, 5),
            &RegionOptions::default(),
        )
        .unwrap();
        let grid = overlay_probability(&grid, &wind_rose_fixture()).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let back = RegionGrid::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.axes.directions.len(), 8);
        assert_eq!(back.axes.speeds.len(), 5);
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }
}
