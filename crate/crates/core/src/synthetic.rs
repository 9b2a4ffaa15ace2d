//! Reference scenarios and seeded synthetic fixtures used by tests, examples and the CLI.

use chrono::{Datelike, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::OperationState;
use crate::conductor::{Catalog, Conductor};
use crate::environment::{normalize_azimuth, solar_geometry, wind_components, EnvironmentSample};
use crate::geo::{LineRoute, Network, EARTH_RADIUS_KM};
use crate::risk::{AmbientDistribution, SpeedDistribution, WindModel, WindSector};
use crate::weather::{GridSpec, WeatherSeries, WeatherSnapshot};

/// Line azimuth of the single-conductor reference scenario (an east-west line).
pub const REFERENCE_LINE_AZIMUTH: f64 = 90.0;
/// Initial conductor temperature of the reference scenario, °C.
pub const REFERENCE_INITIAL_TEMP: f64 = 50.0;
/// Load current of the reference scenario, A.
pub const REFERENCE_CURRENT: f64 = 800.0;
/// Clear-sky irradiance assumed for the reference scenario, W/m².
pub const REFERENCE_IRRADIANCE: f64 = 1000.0;

/// Drake reference scenario: 0.8 m/s wind from the east along an east-west
/// line, 40 °C ambient, latitude 30°N on July 1 at solar noon.
pub fn reference_environment() -> EnvironmentSample {
    let (alt, az) = solar_geometry(30.0, 182, 12.0);
    EnvironmentSample::still(40.0)
        .with_wind(0.8, 90.0)
        .with_sun(REFERENCE_IRRADIANCE, alt, az)
}

/// Same site and time with 1.3 m/s east-west wind (the linearity showcase).
pub fn linearity_environment() -> EnvironmentSample {
    reference_environment().with_wind(1.3, 90.0)
}

/// An ACSR-like conductor scaled from Drake to an arbitrary diameter.
///
/// Resistance and its slope scale with inverse area, heat capacity with area,
/// and the rating with diameter^1.35.
pub fn scaled_acsr(diameter: f64) -> Conductor {
    let drake = Conductor::drake();
    let s = (diameter / drake.diameter).powi(2);
    Conductor {
        name: format!("ACSR-{:.1}mm", diameter * 1e3),
        diameter,
        projected_area_per_length: diameter,
        heat_capacity_per_length: drake.heat_capacity_per_length * s,
        resistance_ref: drake.resistance_ref / s,
        reference_temp: drake.reference_temp,
        resistance_slope: drake.resistance_slope / s,
        emissivity: drake.emissivity,
        absorptivity: drake.absorptivity,
        bundle_count: 1,
        rated_current: drake.rated_current * (diameter / drake.diameter).powf(1.35),
    }
}

/// Eight-sector Weibull wind rose with ambient temperature uniform on 30–40 °C.
///
/// Sectors are 45° wide and centered on the compass points; prevailing winds
/// come from the south-west.
pub fn wind_rose_fixture() -> WindModel {
    // (probability, shape k, scale λ m/s) for N, NE, E, SE, S, SW, W, NW.
    let table = [
        (0.10, 2.0, 3.5),
        (0.06, 1.8, 2.8),
        (0.08, 2.1, 3.0),
        (0.11, 2.2, 3.8),
        (0.15, 2.3, 4.2),
        (0.22, 2.4, 5.0),
        (0.16, 2.1, 4.4),
        (0.12, 1.9, 3.9),
    ];
    WindModel {
        sectors: table
            .iter()
            .enumerate()
            .map(|(i, &(probability, shape, scale))| WindSector {
                start_deg: normalize_azimuth(i as f64 * 45.0 - 22.5),
                width_deg: 45.0,
                probability,
                speed: SpeedDistribution::Weibull { shape, scale },
            })
            .collect(),
        ambient: AmbientDistribution::Uniform {
            low: 30.0,
            high: 40.0,
        },
    }
}

/// Bounding box of the synthetic system: (lat_min, lat_max, lon_min, lon_max).
pub const SYNTHETIC_REGION: (f64, f64, f64, f64) = (40.0, 44.0, -80.0, -74.0);
/// Grid spacing of the synthetic weather, degrees.
pub const SYNTHETIC_GRID_STEP: f64 = 0.25;
/// Snapshot spacing of the synthetic weather, minutes.
pub const SYNTHETIC_STEP_MINUTES: i64 = 15;

/// Sum of Gaussian bumps: a smooth random field over the region.
struct Bumps(Vec<(f64, f64, f64, f64)>);

impl Bumps {
    fn new(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> Self {
        let (la0, la1, lo0, lo1) = SYNTHETIC_REGION;
        Bumps(
            (0..n)
                .map(|_| {
                    (
                        rng.gen_range(la0..la1),
                        rng.gen_range(lo0..lo1),
                        rng.gen_range(-amplitude..amplitude),
                        rng.gen_range(0.6..1.5),
                    )
                })
                .collect(),
        )
    }

    fn at(&self, lat: f64, lon: f64) -> f64 {
        self.0
            .iter()
            .map(|&(la, lo, a, w)| {
                a * (-((lat - la).powi(2) + (lon - lo).powi(2)) / (2.0 * w * w)).exp()
            })
            .sum()
    }
}

/// Seeded weather over [`SYNTHETIC_REGION`] starting at 06:00 local solar
/// time on July 1: a diurnal temperature cycle with smooth spatial
/// anomalies, a slowly veering south-westerly wind, and clear-sky sun
/// dimmed by drifting cloud.
pub fn synthetic_weather(n_snapshots: usize, seed: u64) -> WeatherSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (la0, la1, lo0, lo1) = SYNTHETIC_REGION;
    let grid = GridSpec {
        lat0: la0,
        lon0: lo0,
        dlat: SYNTHETIC_GRID_STEP,
        dlon: SYNTHETIC_GRID_STEP,
        nlat: ((la1 - la0) / SYNTHETIC_GRID_STEP).round() as usize + 1,
        nlon: ((lo1 - lo0) / SYNTHETIC_GRID_STEP).round() as usize + 1,
    };
    let temp_field = Bumps::new(&mut rng, 6, 2.5);
    let speed_field = Bumps::new(&mut rng, 8, 1.6);
    let dir_field = Bumps::new(&mut rng, 6, 35.0);
    let cloud_field = Bumps::new(&mut rng, 5, 0.35);
    let drift = (rng.gen_range(-0.02..0.02), rng.gen_range(-0.03..0.03));
    let start = Utc.with_ymd_and_hms(2024, 7, 1, 11, 0, 0).unwrap();
    let day = start.ordinal();

    let snapshots = (0..n_snapshots)
        .map(|k| {
            let timestamp = start + chrono::Duration::minutes(SYNTHETIC_STEP_MINUTES * k as i64);
            let hours = (SYNTHETIC_STEP_MINUTES * k as i64) as f64 / 60.0;
            let n = grid.len();
            let mut snap = WeatherSnapshot {
                timestamp,
                grid,
                temp: Vec::with_capacity(n),
                wind_u: Vec::with_capacity(n),
                wind_v: Vec::with_capacity(n),
                solar: Vec::with_capacity(n),
                sun_alt: Vec::with_capacity(n),
                sun_az: Vec::with_capacity(n),
                elevation: None,
            };
            for i in 0..grid.nlat {
                for j in 0..grid.nlon {
                    let (lat, lon) = (grid.lat(i), grid.lon(j));
                    // Fields drift east-north-east as the day goes on.
                    let (plat, plon) = (lat - drift.0 * hours, lon - drift.1 * hours);
                    let local = (11.0 + hours + lon / 15.0).rem_euclid(24.0);
                    let diurnal = (2.0 * std::f64::consts::PI * (local - 15.0) / 24.0).cos();
                    let temp =
                        26.0 + 6.5 * diurnal - 1.2 * (lat - 42.0) + temp_field.at(plat, plon);
                    let speed = (2.2 + 0.8 * diurnal + speed_field.at(plat, plon)).max(0.3);
                    let dir = 230.0 + 4.0 * hours + dir_field.at(plat, plon);
                    let (u, v) = wind_components(speed, normalize_azimuth(dir));
                    let (alt, az) = solar_geometry(lat, day, local);
                    let cloud = (1.0 - cloud_field.at(plat, plon).abs()).clamp(0.4, 1.0);
                    let solar = if alt > 0.0 {
                        1000.0 * alt.to_radians().sin().powf(0.6) * cloud
                    } else {
                        0.0
                    };
                    snap.temp.push(temp);
                    snap.wind_u.push(u);
                    snap.wind_v.push(v);
                    snap.solar.push(solar);
                    snap.sun_alt.push(alt);
                    snap.sun_az.push(az);
                }
            }
            snap
        })
        .collect();
    WeatherSeries {
        snapshots,
        warnings: Vec::new(),
    }
}

/// Seeded network of `n_lines` meandering lines of roughly `line_km` each
/// inside [`SYNTHETIC_REGION`], using the built-in catalog conductors.
/// Base currents load each sub-conductor to 35–60 % of its rating.
pub fn synthetic_network(n_lines: usize, line_km: f64, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = Catalog::builtin();
    let conductors: Vec<&Conductor> = catalog.iter().collect();
    let (la0, la1, lo0, lo1) = SYNTHETIC_REGION;
    let margin = 0.3;
    let center = (0.5 * (la0 + la1), 0.5 * (lo0 + lo1));
    let lines = (0..n_lines)
        .map(|n| {
            let mut p = (
                rng.gen_range(la0 + margin..la1 - margin),
                rng.gen_range(lo0 + margin..lo1 - margin),
            );
            let mut heading: f64 = rng.gen_range(0.0..360.0);
            let legs = rng.gen_range(3..=5);
            let mut waypoints = vec![p];
            for _ in 0..legs {
                let km = line_km / legs as f64 * rng.gen_range(0.85..1.15);
                heading += rng.gen_range(-25.0..25.0);
                let mut next = destination(p, heading, km);
                if !(la0 + margin..la1 - margin).contains(&next.0)
                    || !(lo0 + margin..lo1 - margin).contains(&next.1)
                {
                    heading = crate::geo::bearing_deg(p, center);
                    next = destination(p, heading, km);
                }
                waypoints.push(next);
                p = next;
            }
            let c = conductors[rng.gen_range(0..conductors.len())];
            let base_current =
                f64::from(c.bundle_count) * c.rated_current * rng.gen_range(0.35..0.6);
            LineRoute {
                line_id: format!("L{:03}", n + 1),
                waypoints,
                conductor_name: c.name.clone(),
                base_current: (base_current / 10.0).round() * 10.0,
            }
        })
        .collect();
    Network::new(lines)
}

fn destination(from: (f64, f64), bearing: f64, km: f64) -> (f64, f64) {
    let d = km / EARTH_RADIUS_KM;
    let (p1, l1, b) = (
        from.0.to_radians(),
        from.1.to_radians(),
        bearing.to_radians(),
    );
    let p2 = (p1.sin() * d.cos() + p1.cos() * d.sin() * b.cos()).asin();
    let l2 = l1 + (b.sin() * d.sin() * p1.cos()).atan2(d.cos() - p1.sin() * p2.sin());
    (p2.to_degrees(), l2.to_degrees())
}

/// Seeded contingency-like states. The first is the base case; each other
/// state takes one or two lines out, loads the rest 0–25 % above base, and
/// pushes a few lines to 1.3–2.2 times base.
pub fn synthetic_states(network: &Network, n_states: usize, seed: u64) -> Vec<OperationState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<&str> = network.lines.iter().map(|l| l.line_id.as_str()).collect();
    let mut states = Vec::with_capacity(n_states);
    if n_states > 0 {
        states.push(OperationState::base());
    }
    for k in 1..n_states {
        let mut s = OperationState {
            state_id: format!("S{k:03}"),
            description: String::new(),
            line_currents: Default::default(),
            line_multipliers: Default::default(),
            default_multiplier: rng.gen_range(1.0..1.25),
        };
        let out: Vec<&str> = (0..rng.gen_range(1..=2))
            .map(|_| ids[rng.gen_range(0..ids.len())])
            .collect();
        for _ in 0..rng.gen_range(3..=6) {
            s.line_multipliers.insert(
                ids[rng.gen_range(0..ids.len())].to_string(),
                rng.gen_range(1.3..2.2),
            );
        }
        for id in &out {
            s.line_multipliers.insert(id.to_string(), 0.0);
        }
        s.description = format!("lines {} out", out.join(","));
        states.push(s);
    }
    states
}
