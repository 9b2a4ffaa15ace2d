//! Gridded weather snapshots: CSV ingestion and sampling at a point.
//!
//! The weather file has one row per (timestamp, grid cell):
//!
//! ```text
//! # schema_version=1
//! timestamp_iso8601,lat,lon,temp_c,wind_u_ms,wind_v_ms,solar_wm2,sun_alt_deg,sun_az_deg[,elevation_m]
//! ```
//!
//! `sun_alt_deg` and `sun_az_deg` may be omitted together; the sun position
//! is then computed from the cell latitude and the local solar time
//! approximated as UTC plus longitude / 15°. Each timestamp must cover a
//! complete regular lat/lon grid.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{
    normalize_azimuth, solar_geometry, wind_from_components, EnvironmentSample,
};
use crate::format::sig6;

pub const WEATHER_SCHEMA_VERSION: u32 = 1;

const REQUIRED: [&str; 7] = [
    "timestamp_iso8601",
    "lat",
    "lon",
    "temp_c",
    "wind_u_ms",
    "wind_v_ms",
    "solar_wm2",
];

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing field `{0}`")]
    Schema(String),
    #[error("unsupported weather schema version {0}")]
    SchemaVersion(u32),
    #[error("grid error at {timestamp}: {message}")]
    Grid { timestamp: String, message: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(String),
    #[error("point ({lat}, {lon}) lies outside the weather grid")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Regular lat/lon grid; cell `(i, j)` sits at `(lat0 + i·dlat, lon0 + j·dlon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nlat: usize,
    pub nlon: usize,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nlon + j
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat0 + i as f64 * self.dlat
    }

    pub fn lon(&self, j: usize) -> f64 {
        self.lon0 + j as f64 * self.dlon
    }

    pub fn lat_max(&self) -> f64 {
        self.lat(self.nlat - 1)
    }

    pub fn lon_max(&self) -> f64 {
        self.lon(self.nlon - 1)
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        let eps = 1e-9;
        lat >= self.lat0 - eps
            && lat <= self.lat_max() + eps
            && lon >= self.lon0 - eps
            && lon <= self.lon_max() + eps
    }
}

/// All weather fields on one grid at one time. Field vectors are row-major
/// with latitude as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSnapshot {
    pub timestamp: DateTime<Utc>,
    pub grid: GridSpec,
    pub temp: Vec<f64>,
    pub wind_u: Vec<f64>,
    pub wind_v: Vec<f64>,
    pub solar: Vec<f64>,
    pub sun_alt: Vec<f64>,
    pub sun_az: Vec<f64>,
    pub elevation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    Nearest,
    Bilinear,
}

impl WeatherSnapshot {
    fn cell(&self, k: usize) -> EnvironmentSample {
        let (speed, dir) = wind_from_components(self.wind_u[k], self.wind_v[k]);
        EnvironmentSample {
            ambient_temp: self.temp[k],
            wind_speed: speed,
            wind_direction: dir,
            solar_irradiance: self.solar[k],
            sun_altitude: self.sun_alt[k],
            sun_azimuth: self.sun_az[k],
            elevation: self.elevation.as_ref().map_or(0.0, |e| e[k]),
        }
    }

    /// Weather at `(lat, lon)`. Nearest mode clamps to the grid edge;
    /// bilinear mode rejects points outside the grid.
    pub fn sample(
        &self,
        lat: f64,
        lon: f64,
        mode: SampleMode,
    ) -> Result<EnvironmentSample, WeatherError> {
        let g = &self.grid;
        let fi = if g.nlat > 1 {
            (lat - g.lat0) / g.dlat
        } else {
            0.0
        };
        let fj = if g.nlon > 1 {
            (lon - g.lon0) / g.dlon
        } else {
            0.0
        };
        match mode {
            SampleMode::Nearest => {
                let i = nearest_index(fi, g.nlat);
                let j = nearest_index(fj, g.nlon);
                Ok(self.cell(g.index(i, j)))
            }
            SampleMode::Bilinear => {
                if !g.contains(lat, lon) {
                    return Err(WeatherError::OutOfBounds { lat, lon });
                }
                let (i0, wi) = split_index(fi, g.nlat);
                let (j0, wj) = split_index(fj, g.nlon);
                let i1 = (i0 + 1).min(g.nlat - 1);
                let j1 = (j0 + 1).min(g.nlon - 1);
                let ks = [
                    g.index(i0, j0),
                    g.index(i0, j1),
                    g.index(i1, j0),
                    g.index(i1, j1),
                ];
                let ws = [
                    (1.0 - wi) * (1.0 - wj),
                    (1.0 - wi) * wj,
                    wi * (1.0 - wj),
                    wi * wj,
                ];
                let lerp = |f: &[f64]| ks.iter().zip(&ws).map(|(&k, &w)| w * f[k]).sum::<f64>();
                let u = lerp(&self.wind_u);
                let v = lerp(&self.wind_v);
                let (speed, dir) = wind_from_components(u, v);
                // Sun azimuth is interpolated on the circle.
                let (s, c) = ks.iter().zip(&ws).fold((0.0, 0.0), |(s, c), (&k, &w)| {
                    let a = self.sun_az[k].to_radians();
                    (s + w * a.sin(), c + w * a.cos())
                });
                Ok(EnvironmentSample {
                    ambient_temp: lerp(&self.temp),
                    wind_speed: speed,
                    wind_direction: dir,
                    solar_irradiance: lerp(&self.solar),
                    sun_altitude: lerp(&self.sun_alt),
                    sun_azimuth: normalize_azimuth(s.atan2(c).to_degrees()),
                    elevation: self.elevation.as_ref().map_or(0.0, |e| lerp(e)),
                })
            }
        }
    }
}

fn nearest_index(f: f64, n: usize) -> usize {
    // Ties go to the lower index.
    let r = (f - 0.5).ceil();
    r.clamp(0.0, (n - 1) as f64) as usize
}

fn split_index(f: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let f = f.clamp(0.0, (n - 1) as f64);
    let i = (f.floor() as usize).min(n - 2);
    (i, f - i as f64)
}

/// Time-sorted snapshots plus any normalization notes from loading.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeatherSeries {
    pub snapshots: Vec<WeatherSnapshot>,
    pub warnings: Vec<String>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Seconds from the first to the last snapshot.
    pub fn span_seconds(&self) -> f64 {
        match (self.snapshots.first(), self.snapshots.last()) {
            (Some(a), Some(b)) => (b.timestamp - a.timestamp).num_milliseconds() as f64 / 1000.0,
            _ => 0.0,
        }
    }

    /// Offsets of each snapshot from the first, seconds.
    pub fn offsets(&self) -> Vec<f64> {
        let t0 = self.snapshots.first().map(|s| s.timestamp);
        self.snapshots
            .iter()
            .map(|s| (s.timestamp - t0.unwrap()).num_milliseconds() as f64 / 1000.0)
            .collect()
    }
}

pub fn load_weather_series(path: impl AsRef<Path>) -> Result<WeatherSeries, WeatherError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| WeatherError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_weather_csv(std::io::BufReader::new(file))
}

struct Row {
    lat: f64,
    lon: f64,
    values: [f64; 7],
    elevation: Option<f64>,
    line: u64,
}

pub fn parse_weather_csv<R: Read>(mut input: R) -> Result<WeatherSeries, WeatherError> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| WeatherError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(v) = line
            .trim_start_matches('#')
            .trim()
            .strip_prefix("schema_version")
        {
            let v = v.trim_start_matches([' ', '=', ':']).trim();
            let version: u32 = v.parse().map_err(|_| WeatherError::Parse {
                line: 1,
                message: format!("bad schema version `{v}`"),
            })?;
            if version != WEATHER_SCHEMA_VERSION {
                return Err(WeatherError::SchemaVersion(version));
            }
        }
    }
    if text
        .lines()
        .all(|l| l.trim().is_empty() || l.starts_with('#'))
    {
        return Err(WeatherError::Parse {
            line: 1,
            message: "empty weather file".into(),
        });
    }

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| WeatherError::Parse {
            line: e.position().map_or(1, |p| p.line()),
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 7];
    for (k, name) in REQUIRED.iter().enumerate() {
        idx[k] = col(name).ok_or_else(|| WeatherError::Schema(name.to_string()))?;
    }
    let sun = match (col("sun_alt_deg"), col("sun_az_deg")) {
        (Some(a), Some(z)) => Some((a, z)),
        (None, None) => None,
        (Some(_), None) => return Err(WeatherError::Schema("sun_az_deg".into())),
        (None, Some(_)) => return Err(WeatherError::Schema("sun_alt_deg".into())),
    };
    let elev_col = col("elevation_m");

    // Rows grouped by timestamp in first-seen order.
    let mut order: Vec<(String, DateTime<Utc>)> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    let mut last_key: Option<String> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| WeatherError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| -> Result<&str, WeatherError> {
            rec.get(k).ok_or_else(|| WeatherError::Parse {
                line,
                message: format!("missing column {}", k + 1),
            })
        };
        let num = |k: usize, name: &str| -> Result<f64, WeatherError> {
            let s = field(k)?;
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| WeatherError::Parse {
                    line,
                    message: format!("`{s}` is not a number in column {name}"),
                })
        };
        let ts = field(idx[0])?.to_string();
        let when = DateTime::parse_from_rfc3339(&ts)
            .map(|d| d.with_timezone(&Utc))
            .map_err(|e| WeatherError::Parse {
                line,
                message: format!("bad timestamp `{ts}`: {e}"),
            })?;
        let lat = num(idx[1], "lat")?;
        let lon = num(idx[2], "lon")?;
        let (alt, az) = match sun {
            Some((a, z)) => (num(a, "sun_alt_deg")?, num(z, "sun_az_deg")?),
            None => {
                let hour = f64::from(when.hour())
                    + f64::from(when.minute()) / 60.0
                    + f64::from(when.second()) / 3600.0;
                solar_geometry(lat, when.ordinal(), (hour + lon / 15.0).rem_euclid(24.0))
            }
        };
        let values = [
            num(idx[3], "temp_c")?,
            num(idx[4], "wind_u_ms")?,
            num(idx[5], "wind_v_ms")?,
            num(idx[6], "solar_wm2")?,
            alt,
            az,
            0.0,
        ];
        if values[3] < 0.0 {
            return Err(WeatherError::Parse {
                line,
                message: "negative solar irradiance".into(),
            });
        }
        let elevation = elev_col.map(|k| num(k, "elevation_m")).transpose()?;
        if last_key.as_deref() != Some(ts.as_str()) {
            if groups.contains_key(&ts) {
                return Err(WeatherError::DuplicateTimestamp(ts));
            }
            order.push((ts.clone(), when));
            groups.insert(ts.clone(), Vec::new());
            last_key = Some(ts.clone());
        }
        groups.get_mut(&ts).unwrap().push(Row {
            lat,
            lon,
            values,
            elevation,
            line,
        });
    }
    if order.is_empty() {
        return Err(WeatherError::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }

    let mut series = WeatherSeries::default();
    if order.windows(2).any(|w| w[1].1 <= w[0].1) {
        series
            .warnings
            .push("timestamps were out of order and have been sorted".into());
    }
    order.sort_by_key(|o| o.1);
    if let Some(w) = order.windows(2).find(|w| w[1].1 == w[0].1) {
        return Err(WeatherError::DuplicateTimestamp(w[1].0.clone()));
    }
    for (key, when) in order {
        let rows = groups.remove(&key).unwrap();
        series
            .snapshots
            .push(build_snapshot(&key, when, rows, elev_col.is_some())?);
    }
    Ok(series)
}

fn axis(
    values: impl Iterator<Item = f64>,
    ts: &str,
    name: &str,
) -> Result<(f64, f64, usize), WeatherError> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let step = if v.len() > 1 { v[1] - v[0] } else { 1.0 };
    for w in v.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs().max(1e-9) + 1e-9 {
            return Err(WeatherError::Grid {
                timestamp: ts.to_string(),
                message: format!("irregular {name} spacing"),
            });
        }
    }
    Ok((v[0], step, v.len()))
}

fn build_snapshot(
    ts: &str,
    when: DateTime<Utc>,
    rows: Vec<Row>,
    has_elevation: bool,
) -> Result<WeatherSnapshot, WeatherError> {
    let (lat0, dlat, nlat) = axis(rows.iter().map(|r| r.lat), ts, "latitude")?;
    let (lon0, dlon, nlon) = axis(rows.iter().map(|r| r.lon), ts, "longitude")?;
    let grid = GridSpec {
        lat0,
        lon0,
        dlat,
        dlon,
        nlat,
        nlon,
    };
    if rows.len() != grid.len() {
        return Err(WeatherError::Grid {
            timestamp: ts.to_string(),
            message: format!("{} rows for a {}×{} grid", rows.len(), nlat, nlon),
        });
    }
    let n = grid.len();
    let mut fields = vec![vec![f64::NAN; n]; 6];
    let mut elevation = has_elevation.then(|| vec![0.0; n]);
    let mut seen = vec![false; n];
    for r in rows {
        let i = ((r.lat - lat0) / dlat).round() as usize;
        let j = ((r.lon - lon0) / dlon).round() as usize;
        let k = grid.index(i.min(nlat - 1), j.min(nlon - 1));
        if seen[k] {
            return Err(WeatherError::Parse {
                line: r.line,
                message: format!("duplicate cell ({}, {}) at {ts}", r.lat, r.lon),
            });
        }
        seen[k] = true;
        for (f, v) in fields.iter_mut().zip(r.values) {
            f[k] = v;
        }
        if let (Some(e), Some(v)) = (elevation.as_mut(), r.elevation) {
            e[k] = v;
        }
    }
    let mut it = fields.into_iter();
    let mut next = || it.next().unwrap();
    Ok(WeatherSnapshot {
        timestamp: when,
        grid,
        temp: next(),
        wind_u: next(),
        wind_v: next(),
        solar: next(),
        sun_alt: next(),
        sun_az: next(),
        elevation,
    })
}

/// Writes `series` in the weather CSV format with 6 significant digits.
pub fn write_weather_csv<W: Write>(series: &WeatherSeries, out: W) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "# schema_version={WEATHER_SCHEMA_VERSION}")?;
    let has_elev = series.snapshots.iter().any(|s| s.elevation.is_some());
    write!(
        out,
        "timestamp_iso8601,lat,lon,temp_c,wind_u_ms,wind_v_ms,solar_wm2,sun_alt_deg,sun_az_deg"
    )?;
    writeln!(out, "{}", if has_elev { ",elevation_m" } else { "" })?;
    for s in &series.snapshots {
        let ts = s.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string();
        let g = &s.grid;
        for i in 0..g.nlat {
            for j in 0..g.nlon {
                let k = g.index(i, j);
                write!(
                    out,
                    "{ts},{},{},{},{},{},{},{},{}",
                    sig6(g.lat(i)),
                    sig6(g.lon(j)),
                    sig6(s.temp[k]),
                    sig6(s.wind_u[k]),
                    sig6(s.wind_v[k]),
                    sig6(s.solar[k]),
                    sig6(s.sun_alt[k]),
                    sig6(s.sun_az[k])
                )?;
                if has_elev {
                    write!(out, ",{}", sig6(s.elevation.as_ref().map_or(0.0, |e| e[k])))?;
                }
                writeln!(out)?;
            }
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str =
        "timestamp_iso8601,lat,lon,temp_c,wind_u_ms,wind_v_ms,solar_wm2,sun_alt_deg,sun_az_deg\n";

    fn two_by_two(ts: &str, temps: [f64; 4]) -> String {
        let mut s = String::new();
        let cells = [(45.0, -75.0), (45.0, -74.9), (45.1, -75.0), (45.1, -74.9)];
        for ((lat, lon), t) in cells.iter().zip(temps) {
            s += &format!("{ts},{lat},{lon},{t},0,-3,500,40,180\n");
        }
        s
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(
            parse_weather_csv("".as_bytes()),
            Err(WeatherError::Parse { .. })
        ));
        assert!(matches!(
            parse_weather_csv("# schema_version=1\n".as_bytes()),
            Err(WeatherError::Parse { .. })
        ));
        assert!(matches!(
            parse_weather_csv(HEADER.as_bytes()),
            Err(WeatherError::Parse { .. })
        ));
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let text = "timestamp_iso8601,lat,lon,temp_c,wind_u_ms,solar_wm2\n";
        match parse_weather_csv(text.as_bytes()) {
            Err(WeatherError::Schema(f)) => assert_eq!(f, "wind_v_ms"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_its_line() {
        let text = format!("{HEADER}2024-07-01T12:00:00Z,45,-75,hot,0,0,0,0,0\n");
        match parse_weather_csv(text.as_bytes()) {
            Err(WeatherError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_order_snapshots_are_sorted() {
        let text = format!(
            "{HEADER}{}{}",
            two_by_two("2024-07-01T12:15:00Z", [1.0; 4]),
            two_by_two("2024-07-01T12:00:00Z", [2.0; 4])
        );
        let s = parse_weather_csv(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.snapshots[0].temp[0], 2.0);
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(s.span_seconds(), 900.0);
    }

    #[test]
    fn repeated_timestamp_block_is_rejected() {
        let a = two_by_two("2024-07-01T12:00:00Z", [1.0; 4]);
        let b = two_by_two("2024-07-01T12:15:00Z", [1.0; 4]);
        let text = format!("{HEADER}{a}{b}{a}");
        assert!(matches!(
            parse_weather_csv(text.as_bytes()),
            Err(WeatherError::DuplicateTimestamp(_))
        ));
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let mut text = format!("{HEADER}{}", two_by_two("2024-07-01T12:00:00Z", [1.0; 4]));
        text = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            parse_weather_csv(text.as_bytes()),
            Err(WeatherError::Grid { .. })
        ));
    }

    #[test]
    fn sampling_modes() {
        let text = format!(
            "{HEADER}{}",
            two_by_two("2024-07-01T12:00:00Z", [10.0, 20.0, 30.0, 40.0])
        );
        let snap = &parse_weather_csv(text.as_bytes()).unwrap().snapshots[0];
        let mid = snap.sample(45.05, -74.95, SampleMode::Bilinear).unwrap();
        assert!((mid.ambient_temp - 25.0).abs() < 1e-9);
        for mode in [SampleMode::Nearest, SampleMode::Bilinear] {
            let c = snap.sample(45.1, -75.0, mode).unwrap();
            assert_eq!(c.ambient_temp, 30.0);
            assert!((c.wind_speed - 3.0).abs() < 1e-12);
            assert!(c.wind_direction.abs() < 1e-9);
        }
        assert!(matches!(
            snap.sample(46.0, -75.0, SampleMode::Bilinear),
            Err(WeatherError::OutOfBounds { .. })
        ));
        assert_eq!(
            snap.sample(46.0, -80.0, SampleMode::Nearest)
                .unwrap()
                .ambient_temp,
            30.0
        );
    }

    #[test]
    fn sun_position_is_computed_when_absent() {
        let text = "timestamp_iso8601,lat,lon,temp_c,wind_u_ms,wind_v_ms,solar_wm2\n\
                    2024-07-01T12:00:00Z,30,0,35,1,0,900\n";
        let s = parse_weather_csv(text.as_bytes()).unwrap();
        let (alt, az) = solar_geometry(30.0, 183, 12.0);
        assert!((s.snapshots[0].sun_alt[0] - alt).abs() < 1e-12);
        assert!((s.snapshots[0].sun_az[0] - az).abs() < 1e-12);
    }

    #[test]
    fn write_then_read_is_stable() {
        let text = format!(
            "# schema_version=1\n{HEADER}{}{}",
            two_by_two("2024-07-01T12:00:00Z", [10.5, 20.25, 30.0, 40.0]),
            two_by_two("2024-07-01T12:15:00Z", [11.0, 21.0, 31.0, 41.0])
        );
        let s = parse_weather_csv(text.as_bytes()).unwrap();
        let mut a = Vec::new();
        write_weather_csv(&s, &mut a).unwrap();
        let again = parse_weather_csv(a.as_slice()).unwrap();
        let mut b = Vec::new();
        write_weather_csv(&again, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(again.snapshots[1].temp, s.snapshots[1].temp);
    }

    #[test]
    fn newer_schema_is_rejected() {
        let text = format!("# schema_version=2\n{HEADER}");
        assert!(matches!(
            parse_weather_csv(text.as_bytes()),
            Err(WeatherError::SchemaVersion(2))
        ));
    }

    proptest! {
        #[test]
        fn bilinear_stays_within_cell_bounds(
            vals in proptest::array::uniform4(-20.0f64..45.0),
            winds in proptest::array::uniform4(-10.0f64..10.0),
            fi in 0.0f64..=1.0, fj in 0.0f64..=1.0,
        ) {
            let mut text = HEADER.to_string();
            let cells = [(45.0, -75.0), (45.0, -74.9), (45.1, -75.0), (45.1, -74.9)];
            for (k, (lat, lon)) in cells.iter().enumerate() {
                text += &format!("2024-07-01T12:00:00Z,{lat},{lon},{},{},{},{},{},{}\n",
                    vals[k], winds[k], -winds[k], vals[k].abs() * 10.0, vals[k] + 45.0, 100.0 + vals[k]);
            }
            let snap = &parse_weather_csv(text.as_bytes()).unwrap().snapshots[0];
            let e = snap.sample(45.0 + 0.1 * fi, -75.0 + 0.1 * fj, SampleMode::Bilinear).unwrap();
            let within = |x: f64, f: &[f64]| {
                let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                x >= lo - 1e-9 && x <= hi + 1e-9
            };
            prop_assert!(within(e.ambient_temp, &snap.temp));
            prop_assert!(within(e.solar_irradiance, &snap.solar));
            prop_assert!(within(e.sun_altitude, &snap.sun_alt));
            prop_assert!(within(e.sun_azimuth, &snap.sun_az));
            let (u, v) = crate::environment::wind_components(e.wind_speed, e.wind_direction);
            prop_assert!(within(u, &snap.wind_u));
            prop_assert!(within(v, &snap.wind_v));
        }
    }
}
