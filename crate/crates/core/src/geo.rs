//! Line routes, the network file, and splitting routes into segments.
//!
//! Distances are great-circle distances on a sphere of mean Earth radius.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::fold_axis;

pub const EARTH_RADIUS_KM: f64 = 6371.0088;
pub const NETWORK_SCHEMA_VERSION: u32 = 1;
/// Default upper bound on segment length, km.
pub const DEFAULT_MAX_SEGMENT_KM: f64 = 3.0;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("line `{0}` has zero length")]
    DegenerateRoute(String),
    #[error("invalid route `{line}`: {reason}")]
    InvalidRoute { line: String, reason: String },
    #[error("max segment length must be positive")]
    InvalidMaxLength,
    #[error("unsupported network schema version {0}")]
    SchemaVersion(u32),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed network file: {0}")]
    Json(#[from] serde_json::Error),
}

/// A transmission line as a polyline of (lat, lon) waypoints in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRoute {
    #[serde(rename = "id")]
    pub line_id: String,
    pub waypoints: Vec<(f64, f64)>,
    pub conductor_name: String,
    #[serde(rename = "base_current_amps")]
    pub base_current: f64,
}

impl LineRoute {
    pub fn validate(&self) -> Result<(), GeoError> {
        let fail = |reason: &str| GeoError::InvalidRoute {
            line: self.line_id.clone(),
            reason: reason.to_string(),
        };
        if self.waypoints.len() < 2 {
            return Err(fail("at least two waypoints are required"));
        }
        for &(lat, lon) in &self.waypoints {
            if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() {
                return Err(fail("waypoint outside the valid latitude range"));
            }
        }
        if self.waypoints.windows(2).any(|w| w[0] == w[1]) {
            return Err(fail("consecutive waypoints must differ"));
        }
        if !(self.base_current >= 0.0) {
            return Err(fail("base current must be non-negative"));
        }
        Ok(())
    }

    /// Route length, km.
    pub fn length_km(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| haversine_km(w[0], w[1]))
            .sum()
    }
}

/// A piece of a line short enough to share one weather sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub line_id: String,
    pub midpoint: (f64, f64),
    /// Undirected line axis in [0, 180), degrees clockwise from north.
    pub azimuth: f64,
    pub length_km: f64,
    pub conductor_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<usize>,
}

pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (0.5 * dp).sin().powi(2) + p1.cos() * p2.cos() * (0.5 * dl).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from `a` to `b`, degrees in [0, 360).
pub fn bearing_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dl = (b.1 - a.1).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Point a fraction `f` of the way along the great circle from `a` to `b`.
pub fn intermediate_point(a: (f64, f64), b: (f64, f64), f: f64) -> (f64, f64) {
    let d = haversine_km(a, b) / EARTH_RADIUS_KM;
    if d < 1e-15 {
        return a;
    }
    let (p1, l1) = (a.0.to_radians(), a.1.to_radians());
    let (p2, l2) = (b.0.to_radians(), b.1.to_radians());
    let ka = ((1.0 - f) * d).sin() / d.sin();
    let kb = (f * d).sin() / d.sin();
    let x = ka * p1.cos() * l1.cos() + kb * p2.cos() * l2.cos();
    let y = ka * p1.cos() * l1.sin() + kb * p2.cos() * l2.sin();
    let z = ka * p1.sin() + kb * p2.sin();
    (z.atan2(x.hypot(y)).to_degrees(), y.atan2(x).to_degrees())
}

/// Splits each leg into `ceil(leg / max)` equal great-circle pieces.
pub fn segment_line(route: &LineRoute, max_segment_km: f64) -> Result<Vec<Segment>, GeoError> {
    if !(max_segment_km > 0.0) {
        return Err(GeoError::InvalidMaxLength);
    }
    if route.waypoints.len() >= 2 && route.length_km() == 0.0 {
        return Err(GeoError::DegenerateRoute(route.line_id.clone()));
    }
    route.validate()?;
    let mut out = Vec::new();
    for w in route.waypoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let leg = haversine_km(a, b);
        let n = (leg / max_segment_km - 1e-9).ceil().max(1.0) as usize;
        for k in 0..n {
            let start = intermediate_point(a, b, k as f64 / n as f64);
            let end = intermediate_point(a, b, (k + 1) as f64 / n as f64);
            out.push(Segment {
                segment_id: format!("{}/{}", route.line_id, out.len()),
                line_id: route.line_id.clone(),
                midpoint: intermediate_point(a, b, (k as f64 + 0.5) / n as f64),
                azimuth: fold_axis(bearing_deg(start, end)),
                length_km: leg / n as f64,
                conductor_name: route.conductor_name.clone(),
                cluster_id: None,
            });
        }
    }
    Ok(out)
}

/// The network file: a versioned list of line routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub schema_version: u32,
    pub lines: Vec<LineRoute>,
}

impl Network {
    pub fn new(lines: Vec<LineRoute>) -> Self {
        Network {
            schema_version: NETWORK_SCHEMA_VERSION,
            lines,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GeoError> {
        let net: Network = serde_json::from_str(text)?;
        if net.schema_version != NETWORK_SCHEMA_VERSION {
            return Err(GeoError::SchemaVersion(net.schema_version));
        }
        for l in &net.lines {
            l.validate()?;
        }
        Ok(net)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GeoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn line(&self, id: &str) -> Option<&LineRoute> {
        self.lines.iter().find(|l| l.line_id == id)
    }

    /// All segments of all lines, in line order.
    pub fn segments(&self, max_segment_km: f64) -> Result<Vec<Segment>, GeoError> {
        let mut all = Vec::new();
        for l in &self.lines {
            all.extend(segment_line(l, max_segment_km)?);
        }
        Ok(all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn route(points: Vec<(f64, f64)>) -> LineRoute {
        LineRoute {
            line_id: "L1".into(),
            waypoints: points,
            conductor_name: "Drake".into(),
            base_current: 500.0,
        }
    }

    /// Latitude span of `km` along a meridian.
    fn km_to_deg(km: f64) -> f64 {
        (km / EARTH_RADIUS_KM).to_degrees()
    }

    #[test]
    fn ten_km_leg_splits_into_four() {
        let r = route(vec![(45.0, -75.0), (45.0 + km_to_deg(10.0), -75.0)]);
        let segs = segment_line(&r, 3.0).unwrap();
        assert_eq!(segs.len(), 4);
        for s in &segs {
            assert!((s.length_km - 2.5).abs() < 1e-9, "{}", s.length_km);
            assert_eq!(s.azimuth, 0.0);
        }
    }

    #[test]
    fn short_leg_is_one_segment() {
        let r = route(vec![(45.0, -75.0), (45.0, -74.99)]);
        let segs = segment_line(&r, 3.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert!((segs[0].length_km - r.length_km()).abs() < 1e-12);
        assert!((segs[0].azimuth - 90.0).abs() < 0.01);
    }

    #[test]
    fn southbound_leg_folds_to_zero() {
        let r = route(vec![(46.0, -75.0), (45.0, -75.0)]);
        assert!(segment_line(&r, 3.0)
            .unwrap()
            .iter()
            .all(|s| s.azimuth == 0.0));
    }

    #[test]
    fn degenerate_routes_are_rejected() {
        assert!(matches!(
            segment_line(&route(vec![(45.0, -75.0), (45.0, -75.0)]), 3.0),
            Err(GeoError::DegenerateRoute(_))
        ));
        assert!(matches!(
            segment_line(&route(vec![(45.0, -75.0)]), 3.0),
            Err(GeoError::InvalidRoute { .. })
        ));
        assert!(matches!(
            segment_line(&route(vec![(45.0, -75.0), (46.0, -75.0)]), 0.0),
            Err(GeoError::InvalidMaxLength)
        ));
    }

    #[test]
    fn network_round_trip_and_version_check() {
        let net = Network::new(vec![route(vec![
            (45.0, -75.0),
            (45.2, -75.3),
            (45.5, -75.1),
        ])]);
        let again = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(net, again);
        let bumped = net
            .to_json()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            Network::from_json(&bumped),
            Err(GeoError::SchemaVersion(9))
        ));
    }

    proptest! {
        #[test]
        fn segments_partition_the_route(
            lat in -60.0f64..60.0, lon in -170.0f64..170.0,
            legs in proptest::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 1..6),
            max_km in 0.5f64..5.0,
        ) {
            let mut pts = vec![(lat, lon)];
            for (dlat, dlon) in legs {
                let last = *pts.last().unwrap();
                pts.push((last.0 + dlat + 1e-3, last.1 + dlon));
            }
            let r = route(pts);
            let segs = segment_line(&r, max_km).unwrap();
            let total: f64 = segs.iter().map(|s| s.length_km).sum();
            prop_assert!((total - r.length_km()).abs() <= 1e-3 * r.length_km());
            prop_assert!(segs.iter().all(|s| s.length_km <= max_km + 1e-9));
            prop_assert!(segs.iter().all(|s| (0.0..180.0).contains(&s.azimuth)));
        }
    }
}
