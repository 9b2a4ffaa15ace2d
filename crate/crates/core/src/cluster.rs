//! K-means clustering of line segments by location, weather and geometry.
//!
//! Each segment becomes a feature vector of z-scored ambient temperature and
//! wind speed, (sin, cos) embeddings of wind direction and of the doubled
//! line azimuth, geographic coordinates, and a one-hot conductor type. Seeding
//! is k-means++ from a ChaCha stream, so results depend only on the seed.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::EnvironmentSample;
use crate::geo::Segment;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid cluster spec: {0}")]
    InvalidSpec(&'static str),
    #[error("segment and environment counts differ ({segments} vs {environments})")]
    LengthMismatch {
        segments: usize,
        environments: usize,
    },
    #[error("non-finite feature for segment {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureWeights {
    /// Multiplier on geographic distance after the degree scaling below.
    pub geographic: f64,
    /// Degrees of latitude or longitude that weigh as much as 1 °C of
    /// ambient difference (0.5 makes 1° count like 2 °C).
    pub degrees_per_ambient_c: f64,
    pub ambient: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
    pub azimuth: f64,
    pub conductor: f64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights {
            geographic: 1.0,
            degrees_per_ambient_c: 0.5,
            ambient: 1.0,
            wind_speed: 1.0,
            wind_direction: 1.0,
            azimuth: 1.0,
            conductor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSpec {
    pub k: usize,
    pub weights: FeatureWeights,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            k: 500,
            weights: FeatureWeights::default(),
            max_iterations: 100,
            seed: 0,
        }
    }
}

impl ClusterSpec {
    pub fn with_k(k: usize) -> Self {
        ClusterSpec {
            k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k == 0 {
            return Err(ClusterError::InvalidSpec("k must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(ClusterError::InvalidSpec(
                "max_iterations must be at least 1",
            ));
        }
        let w = &self.weights;
        let all = [
            w.geographic,
            w.ambient,
            w.wind_speed,
            w.wind_direction,
            w.azimuth,
            w.conductor,
        ];
        if all.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(ClusterError::InvalidSpec(
                "weights must be finite and non-negative",
            ));
        }
        if !(w.degrees_per_ambient_c > 0.0) {
            return Err(ClusterError::InvalidSpec(
                "degrees_per_ambient_c must be positive",
            ));
        }
        Ok(())
    }
}

/// Result of [`cluster_segments`]. Clusters are numbered densely; empty
/// clusters are dropped, so `k()` can be below the requested k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    /// Feature-space centroids, one row per cluster.
    pub centroids: Vec<Vec<f64>>,
    /// Member closest to each centroid (lowest index on ties).
    pub representatives: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            m[c].push(i);
        }
        m
    }

    /// Writes `segment_id,cluster_id` rows.
    pub fn write_assignments_csv<W: Write>(
        &self,
        segments: &[Segment],
        out: W,
    ) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "segment_id,cluster_id")?;
        for (s, c) in segments.iter().zip(&self.assignments) {
            writeln!(out, "{},{}", s.segment_id, c)?;
        }
        out.flush()
    }

    /// Writes `cluster_id,size,representative,f0,f1,...` rows.
    pub fn write_centroids_csv<W: Write>(
        &self,
        segments: &[Segment],
        out: W,
    ) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        let dim = self.centroids.first().map_or(0, Vec::len);
        write!(out, "cluster_id,size,representative")?;
        for d in 0..dim {
            write!(out, ",f{d}")?;
        }
        writeln!(out)?;
        let members = self.members();
        for (c, row) in self.centroids.iter().enumerate() {
            write!(
                out,
                "{c},{},{}",
                members[c].len(),
                segments[self.representatives[c]].segment_id
            )?;
            for x in row {
                write!(out, ",{}", crate::format::sig6(*x))?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn zscore(x: f64, (mean, sd): (f64, f64)) -> f64 {
    if sd > 0.0 {
        (x - mean) / sd
    } else {
        0.0
    }
}

/// Weighted feature matrix, one row per segment.
pub fn segment_features(
    segments: &[Segment],
    envs: &[EnvironmentSample],
    weights: &FeatureWeights,
) -> Result<Vec<Vec<f64>>, ClusterError> {
    if segments.len() != envs.len() {
        return Err(ClusterError::LengthMismatch {
            segments: segments.len(),
            environments: envs.len(),
        });
    }
    let mut conductors: Vec<&str> = segments.iter().map(|s| s.conductor_name.as_str()).collect();
    conductors.sort_unstable();
    conductors.dedup();
    let ta = mean_sd(envs.iter().map(|e| e.ambient_temp));
    let vw = mean_sd(envs.iter().map(|e| e.wind_speed));
    let geo_scale = if ta.1 > 0.0 {
        weights.geographic / (weights.degrees_per_ambient_c * ta.1)
    } else {
        weights.geographic
    };
    let (lat0, lon0) = segments.first().map_or((0.0, 0.0), |s| s.midpoint);

    let rows: Vec<Vec<f64>> = segments
        .iter()
        .zip(envs)
        .map(|(s, e)| {
            let wd = e.wind_direction.to_radians();
            let az = (2.0 * s.azimuth).to_radians();
            let mut row = vec![
                geo_scale * (s.midpoint.0 - lat0),
                geo_scale * (s.midpoint.1 - lon0) * lat0.to_radians().cos(),
                weights.ambient * zscore(e.ambient_temp, ta),
                weights.wind_speed * zscore(e.wind_speed, vw),
                weights.wind_direction * wd.sin(),
                weights.wind_direction * wd.cos(),
                weights.azimuth * az.sin(),
                weights.azimuth * az.cos(),
            ];
            row.extend(conductors.iter().map(|c| {
                if *c == s.conductor_name {
                    weights.conductor
                } else {
                    0.0
                }
            }));
            row
        })
        .collect();
    if let Some(i) = rows.iter().position(|r| r.iter().any(|x| !x.is_finite())) {
        return Err(ClusterError::NonFinite(i));
    }
    Ok(rows)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; lowest index on ties.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centroids.iter().enumerate() {
        let d = dist2(point, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            pick.or_else(|| d2.iter().rposition(|&d| d > 0.0)).unwrap()
        } else {
            // Every remaining point coincides with a centroid.
            chosen.iter().position(|c| !c).unwrap()
        };
        chosen[pick] = true;
        let c = points[pick].clone();
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(dist2(p, &c)));
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm on prepared feature rows.
pub fn kmeans(points: &[Vec<f64>], spec: &ClusterSpec) -> Result<Clustering, ClusterError> {
    spec.validate()?;
    let n = points.len();
    if n == 0 {
        return Ok(Clustering {
            assignments: Vec::new(),
            centroids: Vec::new(),
            representatives: Vec::new(),
            wcss_history: Vec::new(),
            iterations: 0,
        });
    }
    let k = spec.k.min(n);
    if k == n {
        return Ok(Clustering {
            assignments: (0..n).collect(),
            centroids: points.to_vec(),
            representatives: (0..n).collect(),
            wcss_history: vec![0.0],
            iterations: 0,
        });
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..spec.max_iterations {
        iterations += 1;
        let next: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centroids)).collect();
        history.push(next.iter().map(|x| x.1).sum());
        let changed = next.iter().zip(&assignments).any(|(a, &b)| a.0 != b);
        assignments = next.into_iter().map(|x| x.0).collect();
        if !changed {
            break;
        }
        let mut members = vec![Vec::new(); k];
        for (i, &c) in assignments.iter().enumerate() {
            members[c].push(i);
        }
        let updated: Vec<Vec<f64>> = members
            .par_iter()
            .zip(centroids.par_iter())
            .map(|(m, old)| {
                if m.is_empty() {
                    return old.clone();
                }
                let mut sum = vec![0.0; dim];
                for &i in m {
                    for (s, x) in sum.iter_mut().zip(&points[i]) {
                        *s += x;
                    }
                }
                sum.iter().map(|s| s / m.len() as f64).collect()
            })
            .collect();
        centroids = updated;
    }

    // Drop empty clusters and renumber densely.
    let mut used = vec![false; k];
    for &c in &assignments {
        used[c] = true;
    }
    let mut remap = vec![usize::MAX; k];
    let mut kept = Vec::new();
    for c in 0..k {
        if used[c] {
            remap[c] = kept.len();
            kept.push(centroids[c].clone());
        }
    }
    for a in assignments.iter_mut() {
        *a = remap[*a];
    }
    let mut representatives = vec![usize::MAX; kept.len()];
    let mut best = vec![f64::INFINITY; kept.len()];
    for (i, &c) in assignments.iter().enumerate() {
        let d = dist2(&points[i], &kept[c]);
        if d < best[c] {
            best[c] = d;
            representatives[c] = i;
        }
    }
    Ok(Clustering {
        assignments,
        centroids: kept,
        representatives,
        wcss_history: history,
        iterations,
    })
}

/// Clusters segments by their features under the sampled environments.
/// When fewer segments than `spec.k` are given, k degrades to the segment count.
pub fn cluster_segments(
    segments: &[Segment],
    envs: &[EnvironmentSample],
    spec: &ClusterSpec,
) -> Result<Clustering, ClusterError> {
    spec.validate()?;
    let features = segment_features(segments, envs, &spec.weights)?;
    if segments.len() < spec.k {
        log::warn!(
            "{} segments for k = {}; using k = {}",
            segments.len(),
            spec.k,
            segments.len()
        );
    }
    kmeans(&features, spec)
}

/// Largest within-cluster differences of the environment features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpread {
    pub cluster_id: usize,
    pub size: usize,
    pub ambient_c: f64,
    pub wind_speed_ms: f64,
    pub wind_direction_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub clusters: Vec<ClusterSpread>,
    /// Soft targets: ambient, wind speed, wind direction.
    pub targets: (f64, f64, f64),
    /// Clusters exceeding any target.
    pub violating: Vec<usize>,
    pub max_ambient_c: f64,
    pub max_wind_speed_ms: f64,
    pub max_wind_direction_deg: f64,
}

fn range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Largest pairwise circular distance among angles in degrees.
fn circular_spread(angles: &[f64]) -> f64 {
    let mut a: Vec<f64> = angles.iter().map(|x| x.rem_euclid(360.0)).collect();
    a.sort_by(f64::total_cmp);
    let n = a.len();
    let mut best: f64 = 0.0;
    for &x in &a {
        // Farthest partner sits next to the antipode.
        let anti = (x + 180.0).rem_euclid(360.0);
        let p = a.partition_point(|&y| y < anti);
        for q in [p % n, (p + n - 1) % n] {
            let d = (a[q] - x).abs();
            best = best.max(d.min(360.0 - d));
        }
    }
    best
}

pub fn cluster_quality(clustering: &Clustering, envs: &[EnvironmentSample]) -> QualityReport {
    let targets = (2.0, 2.0, 10.0);
    let clusters: Vec<ClusterSpread> = clustering
        .members()
        .iter()
        .enumerate()
        .map(|(c, m)| {
            let dirs: Vec<f64> = m.iter().map(|&i| envs[i].wind_direction).collect();
            ClusterSpread {
                cluster_id: c,
                size: m.len(),
                ambient_c: range(m.iter().map(|&i| envs[i].ambient_temp)),
                wind_speed_ms: range(m.iter().map(|&i| envs[i].wind_speed)),
                wind_direction_deg: circular_spread(&dirs),
            }
        })
        .collect();
    let violating = clusters
        .iter()
        .filter(|s| {
            s.ambient_c > targets.0
                || s.wind_speed_ms > targets.1
                || s.wind_direction_deg > targets.2
        })
        .map(|s| s.cluster_id)
        .collect();
    let max = |f: fn(&ClusterSpread) -> f64| clusters.iter().map(f).fold(0.0, f64::max);
    QualityReport {
        max_ambient_c: max(|s| s.ambient_c),
        max_wind_speed_ms: max(|s| s.wind_speed_ms),
        max_wind_direction_deg: max(|s| s.wind_direction_deg),
        clusters,
        targets,
        violating,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn seg(i: usize, lat: f64, lon: f64, azimuth: f64) -> Segment {
        Segment {
            segment_id: format!("L/{i}"),
            line_id: "L".into(),
            midpoint: (lat, lon),
            azimuth,
            length_km: 1.0,
            conductor_name: "Drake".into(),
            cluster_id: None,
        }
    }

    fn blobs() -> (Vec<Segment>, Vec<EnvironmentSample>, Vec<usize>) {
        let centers = [
            (40.0, -75.0, 20.0),
            (41.0, -74.0, 30.0),
            (42.0, -76.0, 25.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut segs, mut envs, mut truth) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..90 {
            let b = (i * 7) % 3;
            let (lat, lon, t) = centers[b];
            segs.push(seg(
                i,
                lat + rng.gen_range(-0.01..0.01),
                lon + rng.gen_range(-0.01..0.01),
                45.0,
            ));
            envs.push(EnvironmentSample::still(t + rng.gen_range(-0.1..0.1)).with_wind(3.0, 200.0));
            truth.push(b);
        }
        (segs, envs, truth)
    }

    #[test]
    fn one_cluster_holds_everything() {
        let (s, e, _) = blobs();
        let c = cluster_segments(&s, &e, &ClusterSpec::with_k(1)).unwrap();
        assert_eq!(c.k(), 1);
        assert!(c.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn k_equal_n_has_zero_spread() {
        let (s, e, _) = blobs();
        let c = cluster_segments(&s[..10], &e[..10], &ClusterSpec::with_k(10)).unwrap();
        assert_eq!(c.k(), 10);
        let q = cluster_quality(&c, &e[..10]);
        assert_eq!(
            (
                q.max_ambient_c,
                q.max_wind_speed_ms,
                q.max_wind_direction_deg
            ),
            (0.0, 0.0, 0.0)
        );
        // Too few segments degrades to k = n.
        assert_eq!(
            cluster_segments(&s[..5], &e[..5], &ClusterSpec::with_k(50))
                .unwrap()
                .k(),
            5
        );
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (s, e, truth) = blobs();
        let c = cluster_segments(&s, &e, &ClusterSpec::with_k(3)).unwrap();
        for i in 0..truth.len() {
            for j in 0..truth.len() {
                assert_eq!(truth[i] == truth[j], c.assignments[i] == c.assignments[j]);
            }
        }
        for (k, &r) in c.representatives.iter().enumerate() {
            assert_eq!(c.assignments[r], k);
        }
    }

    #[test]
    fn identical_environments_have_no_spread() {
        let s: Vec<Segment> = (0..6)
            .map(|i| seg(i, 40.0 + 0.01 * i as f64, -75.0, 10.0))
            .collect();
        let e = vec![EnvironmentSample::still(22.0).with_wind(4.0, 355.0); 6];
        let c = cluster_segments(&s, &e, &ClusterSpec::with_k(2)).unwrap();
        let q = cluster_quality(&c, &e);
        assert!(q.violating.is_empty());
        assert_eq!(q.max_ambient_c, 0.0);
    }

    #[test]
    fn circular_spread_wraps() {
        assert!((circular_spread(&[355.0, 5.0]) - 10.0).abs() < 1e-12);
        assert!((circular_spread(&[0.0, 90.0, 180.0]) - 180.0).abs() < 1e-12);
        assert_eq!(circular_spread(&[42.0]), 0.0);
    }

    #[test]
    fn zero_k_is_rejected() {
        assert!(ClusterSpec::with_k(0).validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lloyd_is_deterministic_and_monotone(
            pts in proptest::collection::vec(proptest::array::uniform3(-5.0f64..5.0), 20..120),
            k in 1usize..12,
            seed in 0u64..1000,
        ) {
            let points: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
            let spec = ClusterSpec { k, seed, ..Default::default() };
            let a = kmeans(&points, &spec).unwrap();
            let b = kmeans(&points, &spec).unwrap();
            prop_assert_eq!(&a.assignments, &b.assignments);
            for w in a.wcss_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
