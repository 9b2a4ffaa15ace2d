//! System-wide temperature evolution over a weather series for many
//! operation states.
//!
//! The cycle is: split lines into segments, sample the weather at each
//! segment midpoint, optionally cluster segments per snapshot, build
//! closed-form models at a few reference currents once per
//! (snapshot, segment or cluster group), then evaluate every operation state
//! by adjusting those models to the state's currents and stitching the
//! per-snapshot solutions end to end.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{
    build_model_with, linearize_with, solve_steady_state_with, AnalyticError, LinearizedModel,
    SolutionForm, SolverConfig, ThresholdTime,
};
use crate::cluster::{kmeans, segment_features, ClusterError, ClusterSpec};
use crate::conductor::{Catalog, CatalogError, Conductor};
use crate::environment::EnvironmentSample;
use crate::format::sig6;
use crate::geo::{GeoError, LineRoute, Network, Segment};
use crate::oracle::{integrate_schedule, IntegrationConfig, Method, WeatherStep};
use crate::physics::HeatBalance;
use crate::weather::{SampleMode, WeatherError, WeatherSeries};

pub const STATES_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("weather series is empty")]
    EmptySeries,
    #[error("invalid batch config: {0}")]
    InvalidConfig(&'static str),
    #[error("state `{state}` references unknown line `{line}`")]
    UnknownLine { state: String, line: String },
    #[error("invalid state `{state}`: {reason}")]
    InvalidState { state: String, reason: String },
    #[error("no parameters for segment {segment} at snapshot {snapshot}")]
    MissingParameters { segment: usize, snapshot: usize },
    #[error("time {t} s is outside the trace span [0, {end}] s")]
    OutOfRange { t: f64, end: f64 },
    #[error("unsupported states schema version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Weather(#[from] WeatherError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed trace CSV at line {line}: {message}")]
    TraceParse { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn one() -> f64 {
    1.0
}

/// A named assignment of current to every line. Lines listed in
/// `line_currents` get that absolute current; otherwise the line's base
/// current is scaled by its entry in `line_multipliers` or by
/// `default_multiplier`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationState {
    pub state_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub line_currents: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub line_multipliers: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub default_multiplier: f64,
}

impl OperationState {
    /// Every line at its base current.
    pub fn base() -> Self {
        OperationState {
            state_id: "base".into(),
            description: "base case".into(),
            line_currents: BTreeMap::new(),
            line_multipliers: BTreeMap::new(),
            default_multiplier: 1.0,
        }
    }

    pub fn current_for(&self, line: &LineRoute) -> f64 {
        if let Some(&i) = self.line_currents.get(&line.line_id) {
            return i;
        }
        line.base_current
            * self
                .line_multipliers
                .get(&line.line_id)
                .copied()
                .unwrap_or(self.default_multiplier)
    }

    pub fn validate(&self, network: &Network) -> Result<(), BatchError> {
        let bad = |reason: &str| BatchError::InvalidState {
            state: self.state_id.clone(),
            reason: reason.to_string(),
        };
        if !(self.default_multiplier >= 0.0) {
            return Err(bad("default multiplier must be non-negative"));
        }
        for (line, v) in self.line_currents.iter().chain(&self.line_multipliers) {
            if network.line(line).is_none() {
                return Err(BatchError::UnknownLine {
                    state: self.state_id.clone(),
                    line: line.clone(),
                });
            }
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(bad(
                    "currents and multipliers must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StatesFile {
    Versioned {
        schema_version: u32,
        states: Vec<OperationState>,
    },
    Bare(Vec<OperationState>),
}

/// Parses a states file: either a bare JSON list of states or
/// `{"schema_version": 1, "states": [...]}`.
pub fn parse_states(text: &str) -> Result<Vec<OperationState>, BatchError> {
    match serde_json::from_str(text)? {
        StatesFile::Versioned {
            schema_version,
            states,
        } => {
            if schema_version != STATES_SCHEMA_VERSION {
                return Err(BatchError::SchemaVersion(schema_version));
            }
            Ok(states)
        }
        StatesFile::Bare(states) => Ok(states),
    }
}

pub fn load_states(path: impl AsRef<Path>) -> Result<Vec<OperationState>, BatchError> {
    let path = path.as_ref();
    parse_states(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn states_to_json(states: &[OperationState]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "schema_version": STATES_SCHEMA_VERSION,
        "states": states,
    }))
    .expect("states serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OutputMode {
    /// Dense samples every `trace_step` seconds.
    #[serde(rename = "trace_5s")]
    Trace5s,
    /// Samples at snapshot boundaries only.
    #[default]
    #[serde(rename = "screen_15min")]
    Screen15min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub max_segment_km: f64,
    pub sample_mode: SampleMode,
    /// Reference currents as multiples of each line's base current.
    pub reference_multipliers: Vec<f64>,
    /// States above this multiple of base get a fresh steady-state solve.
    pub fresh_solve_ratio: f64,
    /// Conductor temperature limit, °C.
    pub limit_temp: f64,
    pub form: SolutionForm,
    pub mode: OutputMode,
    /// Sample spacing of dense traces and of the fallback integrator, s.
    pub trace_step: f64,
    /// After screening, recompute flagged pairs as dense traces.
    pub refine_flagged: bool,
    /// Keep per-segment traces in the output; summaries are always kept.
    pub keep_traces: bool,
    pub clustering: Option<ClusterSpec>,
    /// Width of the base-current bands that split clusters, A.
    pub current_band: f64,
    pub solver: SolverConfig,
    /// Per-segment initial temperature overrides, °C.
    pub initial_temps: BTreeMap<String, f64>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            max_segment_km: crate::geo::DEFAULT_MAX_SEGMENT_KM,
            sample_mode: SampleMode::Nearest,
            reference_multipliers: vec![1.0, 1.8],
            fresh_solve_ratio: 2.0,
            limit_temp: 100.0,
            form: SolutionForm::FirstOrder,
            mode: OutputMode::Screen15min,
            trace_step: 5.0,
            refine_flagged: true,
            keep_traces: true,
            clustering: None,
            current_band: 50.0,
            solver: SolverConfig::default(),
            initial_temps: BTreeMap::new(),
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<(), BatchError> {
        if !(self.max_segment_km > 0.0) {
            return Err(BatchError::InvalidConfig("max_segment_km must be positive"));
        }
        if self.reference_multipliers.is_empty()
            || self.reference_multipliers.iter().any(|m| !(*m >= 0.0))
        {
            return Err(BatchError::InvalidConfig(
                "reference multipliers must be non-empty and non-negative",
            ));
        }
        if !(self.trace_step > 0.0) {
            return Err(BatchError::InvalidConfig("trace_step must be positive"));
        }
        if !(self.current_band > 0.0) {
            return Err(BatchError::InvalidConfig("current_band must be positive"));
        }
        if let Some(spec) = &self.clustering {
            spec.validate()?;
        }
        self.solver
            .validate()
            .map_err(|_| BatchError::InvalidConfig("invalid solver settings"))
    }
}

/// Segments with their conductors and the weather sampled at each snapshot.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    pub network: Network,
    pub segments: Vec<Segment>,
    /// Index into `network.lines` per segment.
    pub segment_line: Vec<usize>,
    pub conductors: Vec<Conductor>,
    /// Index into `conductors` per segment.
    pub segment_conductor: Vec<usize>,
    /// Seconds from the first snapshot.
    pub times: Arc<Vec<f64>>,
    /// `envs[snapshot][segment]`.
    pub envs: Vec<Vec<EnvironmentSample>>,
}

impl PreparedSystem {
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn conductor_of(&self, segment: usize) -> &Conductor {
        &self.conductors[self.segment_conductor[segment]]
    }

    pub fn line_of(&self, segment: usize) -> &LineRoute {
        &self.network.lines[self.segment_line[segment]]
    }

    pub fn state_current(&self, state: &OperationState, segment: usize) -> f64 {
        state.current_for(self.line_of(segment))
    }

    /// The segment's piecewise-constant weather and a constant current.
    pub fn schedule(&self, segment: usize, current: f64) -> Vec<WeatherStep> {
        self.times
            .windows(2)
            .enumerate()
            .map(|(n, w)| WeatherStep {
                env: self.envs[n][segment],
                duration: w[1] - w[0],
                current,
            })
            .collect()
    }
}

/// Segments the network and samples every snapshot at every midpoint.
pub fn prepare_system(
    network: &Network,
    series: &WeatherSeries,
    catalog: &Catalog,
    config: &BatchConfig,
) -> Result<PreparedSystem, BatchError> {
    config.validate()?;
    if series.is_empty() {
        return Err(BatchError::EmptySeries);
    }
    let mut conductors: Vec<Conductor> = Vec::new();
    let mut segments = Vec::new();
    let mut segment_line = Vec::new();
    let mut segment_conductor = Vec::new();
    for (li, line) in network.lines.iter().enumerate() {
        let c = catalog.get(&line.conductor_name)?;
        let ci = match conductors.iter().position(|x| x.name == c.name) {
            Some(i) => i,
            None => {
                conductors.push(c.clone());
                conductors.len() - 1
            }
        };
        for s in crate::geo::segment_line(line, config.max_segment_km)? {
            segments.push(s);
            segment_line.push(li);
            segment_conductor.push(ci);
        }
    }
    let envs = series
        .snapshots
        .par_iter()
        .map(|snap| {
            segments
                .iter()
                .map(|s| snap.sample(s.midpoint.0, s.midpoint.1, config.sample_mode))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreparedSystem {
        network: network.clone(),
        segments,
        segment_line,
        conductors,
        segment_conductor,
        times: Arc::new(series.offsets()),
        envs,
    })
}

/// One set of reference models: a segment, or a group of clustered segments
/// sharing a conductor and a base-current band.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterUnit {
    pub env: EnvironmentSample,
    pub azimuth: f64,
    pub conductor: usize,
    pub base_current: f64,
    /// Base-current steady state, °C.
    pub base_steady_temp: Option<f64>,
    /// One model per reference multiplier; `None` when generation failed.
    pub models: Option<Vec<LinearizedModel>>,
}

impl ParameterUnit {
    fn nearest(&self, current: f64) -> Option<&LinearizedModel> {
        self.models.as_ref()?.iter().min_by(|a, b| {
            (a.reference_current - current)
                .abs()
                .total_cmp(&(b.reference_current - current).abs())
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct SnapshotParameters {
    /// Unit index per segment.
    pub unit_of: Vec<usize>,
    pub units: Vec<ParameterUnit>,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    pub snapshots: Vec<SnapshotParameters>,
    /// Initial temperature per segment, °C.
    pub initial_temps: Vec<f64>,
    pub failures: Vec<String>,
    pub clustering_seconds: f64,
    pub generation_seconds: f64,
}

impl ParameterStore {
    pub fn n_units(&self) -> usize {
        self.snapshots.iter().map(|s| s.units.len()).sum()
    }

    pub fn n_models(&self) -> usize {
        self.snapshots
            .iter()
            .flat_map(|s| &s.units)
            .map(|u| u.models.as_ref().map_or(0, Vec::len))
            .sum()
    }

    pub fn unit(&self, snapshot: usize, segment: usize) -> Result<&ParameterUnit, BatchError> {
        self.snapshots
            .get(snapshot)
            .and_then(|s| s.units.get(*s.unit_of.get(segment)?))
            .ok_or(BatchError::MissingParameters { segment, snapshot })
    }
}

struct UnitKey {
    env: EnvironmentSample,
    azimuth: f64,
    conductor: usize,
    base_current: f64,
}

fn unit_keys(
    system: &PreparedSystem,
    snapshot: usize,
    base: &OperationState,
    config: &BatchConfig,
) -> Result<(Vec<usize>, Vec<UnitKey>), BatchError> {
    let envs = &system.envs[snapshot];
    let n = system.n_segments();
    let Some(spec) = &config.clustering else {
        let keys = (0..n)
            .map(|s| UnitKey {
                env: envs[s],
                azimuth: system.segments[s].azimuth,
                conductor: system.segment_conductor[s],
                base_current: system.state_current(base, s),
            })
            .collect();
        return Ok(((0..n).collect(), keys));
    };
    let features = segment_features(&system.segments, envs, &spec.weights)?;
    let clustering = kmeans(&features, spec)?;
    // Groups are (cluster, conductor, current band); BTreeMap keeps the numbering deterministic.
    let mut groups: BTreeMap<(usize, usize, i64), Vec<usize>> = BTreeMap::new();
    for s in 0..n {
        let band = (system.state_current(base, s) / config.current_band).round() as i64;
        groups
            .entry((clustering.assignments[s], system.segment_conductor[s], band))
            .or_default()
            .push(s);
    }
    let mut unit_of = vec![0; n];
    let mut keys = Vec::with_capacity(groups.len());
    for ((cluster, conductor, band), members) in groups {
        let centroid = &clustering.centroids[cluster];
        let dist = |s: usize| -> f64 {
            features[s]
                .iter()
                .zip(centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        let mut rep = members[0];
        for &s in &members[1..] {
            if dist(s) < dist(rep) {
                rep = s;
            }
        }
        for &s in &members {
            unit_of[s] = keys.len();
        }
        keys.push(UnitKey {
            env: envs[rep],
            azimuth: system.segments[rep].azimuth,
            conductor,
            base_current: band as f64 * config.current_band,
        });
    }
    Ok((unit_of, keys))
}

fn generate_unit(
    system: &PreparedSystem,
    key: &UnitKey,
    config: &BatchConfig,
) -> (ParameterUnit, Option<AnalyticError>) {
    let conductor = &system.conductors[key.conductor];
    let hb = HeatBalance::new(conductor, &key.env, key.azimuth);
    let mut unit = ParameterUnit {
        env: key.env,
        azimuth: key.azimuth,
        conductor: key.conductor,
        base_current: key.base_current,
        base_steady_temp: None,
        models: None,
    };
    let built = (|| {
        let base =
            solve_steady_state_with(&hb, key.base_current, key.env.ambient_temp, &config.solver)?
                .temp;
        unit.base_steady_temp = Some(base);
        config
            .reference_multipliers
            .iter()
            .map(|&m| {
                let current = m * key.base_current;
                // Linearized from the base steady state to this reference's steady state.
                let te = solve_steady_state_with(&hb, current, base, &config.solver)?.temp;
                linearize_with(&hb, current, base, te, &config.solver)
            })
            .collect::<Result<Vec<_>, _>>()
    })();
    match built {
        Ok(models) => {
            unit.models = Some(models);
            (unit, None)
        }
        Err(e) => (unit, Some(e)),
    }
}

/// Builds the reference models for every snapshot. Units are segments, or
/// (cluster, conductor, base-current band) groups when clustering is on.
/// Failed units are recorded and later fall back to the numerical integrator.
pub fn generate_parameters(
    system: &PreparedSystem,
    base: &OperationState,
    config: &BatchConfig,
) -> Result<ParameterStore, BatchError> {
    config.validate()?;
    base.validate(&system.network)?;
    let mut store = ParameterStore::default();
    let mut keyed = Vec::with_capacity(system.n_snapshots());
    let t0 = Instant::now();
    for n in 0..system.n_snapshots() {
        keyed.push(unit_keys(system, n, base, config)?);
    }
    store.clustering_seconds = if config.clustering.is_some() {
        t0.elapsed().as_secs_f64()
    } else {
        0.0
    };

    let t1 = Instant::now();
    for (n, (unit_of, keys)) in keyed.into_iter().enumerate() {
        let built: Vec<(ParameterUnit, Option<AnalyticError>)> = keys
            .par_iter()
            .map(|k| generate_unit(system, k, config))
            .collect();
        let mut units = Vec::with_capacity(built.len());
        for (u, (unit, err)) in built.into_iter().enumerate() {
            if let Some(e) = err {
                store.failures.push(format!("snapshot {n}, unit {u}: {e}"));
            }
            units.push(unit);
        }
        store.snapshots.push(SnapshotParameters { unit_of, units });
    }
    store.initial_temps = (0..system.n_segments())
        .map(|s| {
            if let Some(&t) = config.initial_temps.get(&system.segments[s].segment_id) {
                return t;
            }
            let unit = store.unit(0, s).expect("snapshot 0 covers every segment");
            let current = system.state_current(base, s);
            unit.nearest(current)
                .and_then(|m| {
                    m.update_for_current(&system.conductors[unit.conductor], current)
                        .ok()
                })
                .map(|m| m.steady_temp)
                .or(unit.base_steady_temp)
                .unwrap_or(unit.env.ambient_temp)
        })
        .collect();
    store.generation_seconds = t1.elapsed().as_secs_f64();
    Ok(store)
}

/// Temperature of one segment under one state.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureTrace {
    pub segment: usize,
    pub state: usize,
    pub times: Arc<Vec<f64>>,
    pub temps: Vec<f64>,
    /// First time the conductor limit is reached, s.
    pub over_temperature_at: Option<f64>,
    /// Snapshot steps that used the numerical fallback.
    pub fallback_steps: usize,
}

impl TemperatureTrace {
    pub fn max_temp(&self) -> f64 {
        self.temps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn temp_at(&self, t: f64) -> Option<f64> {
        crate::oracle::interpolate(&self.times, &self.temps, t)
    }
}

fn dense_times(times: &[f64], step: f64) -> Vec<f64> {
    let mut out = vec![times[0]];
    for w in times.windows(2) {
        let n = ((w[1] - w[0]) / step - 1e-9).ceil().max(1.0) as usize;
        for k in 1..n {
            out.push(w[0] + k as f64 * step);
        }
        out.push(w[1]);
    }
    out
}

/// Sample times of a trace in the given mode.
pub fn sample_times(system: &PreparedSystem, mode: OutputMode, step: f64) -> Arc<Vec<f64>> {
    match mode {
        OutputMode::Screen15min => system.times.clone(),
        OutputMode::Trace5s => Arc::new(dense_times(&system.times, step)),
    }
}

/// Per-segment progress while stepping through the snapshots.
struct Walker {
    segment: usize,
    current: f64,
    temp: f64,
    temps: Vec<f64>,
    flag: Option<f64>,
    fallback_steps: usize,
}

impl Walker {
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        system: &PreparedSystem,
        unit: &ParameterUnit,
        t0: f64,
        dt: f64,
        dense: bool,
        config: &BatchConfig,
    ) -> Result<(), BatchError> {
        let conductor = system.conductor_of(self.segment);
        let base = system.line_of(self.segment).base_current;
        let (current, temp, limit) = (self.current, self.temp, config.limit_temp);
        let fresh = base > 0.0 && current > config.fresh_solve_ratio * base;
        let model = if fresh {
            let hb = HeatBalance::new(conductor, &unit.env, unit.azimuth);
            build_model_with(&hb, current, temp, &config.solver).ok()
        } else {
            unit.nearest(current)
                .and_then(|m| m.update_for_current(conductor, current).ok())
                .map(|m| m.with_initial_temp(temp))
        };
        match model {
            Some(m) => {
                if self.flag.is_none() {
                    if let ThresholdTime::Reached(tau) = m.time_to_threshold(limit, config.form) {
                        if tau <= dt {
                            self.flag = Some(t0 + tau);
                        }
                    }
                }
                if dense {
                    let steps = ((dt / config.trace_step) - 1e-9).ceil().max(1.0) as usize;
                    for k in 1..steps {
                        self.temps
                            .push(m.eval(config.form, k as f64 * config.trace_step));
                    }
                }
                self.temp = m.eval(config.form, dt);
            }
            None => {
                self.fallback_steps += 1;
                let hb = HeatBalance::new(conductor, &unit.env, unit.azimuth);
                let cfg = IntegrationConfig {
                    step: config.trace_step,
                    method: Method::Rk4,
                    max_time: dt,
                };
                let tr = crate::oracle::integrate_with(&hb, current, temp, &cfg)
                    .map_err(|_| BatchError::InvalidConfig("trace_step must be positive"))?;
                if self.flag.is_none() {
                    if let ThresholdTime::Reached(tau) = tr.crossing_time(limit) {
                        self.flag = Some(t0 + tau);
                    }
                }
                if dense {
                    self.temps
                        .extend_from_slice(&tr.temps[1..tr.temps.len() - 1]);
                }
                self.temp = *tr.temps.last().unwrap();
            }
        }
        self.temps.push(self.temp);
        Ok(())
    }
}

/// Evaluates several segments, each under its own constant current, walking
/// the snapshots in the outer loop so the store is read in layout order.
/// `times` must come from [`sample_times`] for the same mode.
pub fn evaluate_segments(
    system: &PreparedSystem,
    store: &ParameterStore,
    jobs: &[(usize, f64)],
    state: usize,
    mode: OutputMode,
    times: &Arc<Vec<f64>>,
    config: &BatchConfig,
) -> Result<Vec<TemperatureTrace>, BatchError> {
    let mut walkers = jobs
        .iter()
        .map(|&(segment, current)| {
            let temp = *store
                .initial_temps
                .get(segment)
                .ok_or(BatchError::MissingParameters {
                    segment,
                    snapshot: 0,
                })?;
            let mut temps = Vec::with_capacity(times.len());
            temps.push(temp);
            Ok(Walker {
                segment,
                current,
                temp,
                temps,
                flag: (temp >= config.limit_temp).then_some(0.0),
                fallback_steps: 0,
            })
        })
        .collect::<Result<Vec<_>, BatchError>>()?;
    let dense = mode == OutputMode::Trace5s;
    for (n, w) in system.times.windows(2).enumerate() {
        for walker in walkers.iter_mut() {
            let unit = store.unit(n, walker.segment)?;
            walker.step(system, unit, w[0], w[1] - w[0], dense, config)?;
        }
    }
    Ok(walkers
        .into_iter()
        .map(|w| {
            debug_assert_eq!(w.temps.len(), times.len());
            TemperatureTrace {
                segment: w.segment,
                state,
                times: times.clone(),
                temps: w.temps,
                over_temperature_at: w.flag,
                fallback_steps: w.fallback_steps,
            }
        })
        .collect())
}

/// Evaluates one segment under a constant current.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_segment(
    system: &PreparedSystem,
    store: &ParameterStore,
    segment: usize,
    state: usize,
    current: f64,
    mode: OutputMode,
    times: &Arc<Vec<f64>>,
    config: &BatchConfig,
) -> Result<TemperatureTrace, BatchError> {
    let mut out = evaluate_segments(
        system,
        store,
        &[(segment, current)],
        state,
        mode,
        times,
        config,
    )?;
    Ok(out.pop().expect("one job"))
}

/// Segments per parallel work item in [`evaluate_state`].
const CHUNK: usize = 256;

/// Evaluates every segment under `state`.
pub fn evaluate_state(
    system: &PreparedSystem,
    store: &ParameterStore,
    state: &OperationState,
    state_index: usize,
    mode: OutputMode,
    config: &BatchConfig,
) -> Result<Vec<TemperatureTrace>, BatchError> {
    state.validate(&system.network)?;
    let times = sample_times(system, mode, config.trace_step);
    let jobs: Vec<(usize, f64)> = (0..system.n_segments())
        .map(|s| (s, system.state_current(state, s)))
        .collect();
    let chunks = jobs
        .par_chunks(CHUNK)
        .map(|c| evaluate_segments(system, store, c, state_index, mode, &times, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// The numerical reference for one segment: RK4 on the segment's own
/// piecewise-constant weather at `step` seconds.
pub fn oracle_trace(
    system: &PreparedSystem,
    segment: usize,
    current: f64,
    initial_temp: f64,
    step: f64,
) -> crate::oracle::Trace {
    let cfg = IntegrationConfig::rk4(step, system.horizon());
    integrate_schedule(
        system.conductor_of(segment),
        system.segments[segment].azimuth,
        &system.schedule(segment, current),
        initial_temp,
        &cfg,
    )
    .expect("positive step")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPair {
    pub state_id: String,
    pub segment_id: String,
    pub time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub preparation_s: f64,
    pub clustering_s: f64,
    pub parameter_generation_s: f64,
    /// Evaluation time per state, s.
    pub state_evaluation_s: Vec<f64>,
    pub mean_state_s: f64,
    pub refinement_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub state_id: String,
    pub max_temp_c: f64,
    pub flagged_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub n_lines: usize,
    pub n_segments: usize,
    pub n_snapshots: usize,
    pub n_states: usize,
    pub n_parameter_units: usize,
    pub n_models: usize,
    pub horizon_s: f64,
    pub states: Vec<StateSummary>,
    pub flagged: Vec<FlaggedPair>,
    pub failures: Vec<String>,
    pub fallback_steps: usize,
    pub timings: Timings,
    pub config: BatchConfig,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub report: BatchReport,
    pub system: PreparedSystem,
    /// Screening or dense traces per state and segment (empty unless `keep_traces`).
    pub traces: Vec<TemperatureTrace>,
    /// Dense traces of flagged pairs when `refine_flagged` is set.
    pub refined: Vec<TemperatureTrace>,
}

/// Full cycle: segmentation, sampling, optional clustering, parameter
/// generation, then evaluation of each state in order.
pub fn run_batch(
    network: &Network,
    series: &WeatherSeries,
    catalog: &Catalog,
    states: &[OperationState],
    config: &BatchConfig,
) -> Result<BatchOutput, BatchError> {
    let start = Instant::now();
    for s in states {
        s.validate(network)?;
    }
    let system = prepare_system(network, series, catalog, config)?;
    let preparation_s = start.elapsed().as_secs_f64();
    let store = generate_parameters(&system, &OperationState::base(), config)?;

    let mut timings = Timings {
        preparation_s,
        clustering_s: store.clustering_seconds,
        parameter_generation_s: store.generation_seconds,
        ..Default::default()
    };
    let mut traces = Vec::new();
    let mut summaries = Vec::with_capacity(states.len());
    let mut flagged_idx = Vec::new();
    let mut fallback_steps = 0;
    for (k, state) in states.iter().enumerate() {
        let t = Instant::now();
        let out = evaluate_state(&system, &store, state, k, config.mode, config)?;
        timings.state_evaluation_s.push(t.elapsed().as_secs_f64());
        let mut max_temp = f64::NEG_INFINITY;
        let mut flagged = 0;
        for tr in &out {
            max_temp = max_temp.max(tr.max_temp());
            fallback_steps += tr.fallback_steps;
            if let Some(at) = tr.over_temperature_at {
                flagged += 1;
                flagged_idx.push((k, tr.segment, at));
            }
        }
        summaries.push(StateSummary {
            state_id: state.state_id.clone(),
            max_temp_c: max_temp,
            flagged_segments: flagged,
        });
        if config.keep_traces {
            traces.extend(out);
        }
    }
    if !timings.state_evaluation_s.is_empty() {
        timings.mean_state_s = timings.state_evaluation_s.iter().sum::<f64>() / states.len() as f64;
    }

    let t = Instant::now();
    let refined = if config.refine_flagged
        && config.mode == OutputMode::Screen15min
        && !flagged_idx.is_empty()
    {
        let times = sample_times(&system, OutputMode::Trace5s, config.trace_step);
        flagged_idx
            .par_iter()
            .map(|&(k, s, _)| {
                let current = system.state_current(&states[k], s);
                evaluate_segment(
                    &system,
                    &store,
                    s,
                    k,
                    current,
                    OutputMode::Trace5s,
                    &times,
                    config,
                )
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    timings.refinement_s = t.elapsed().as_secs_f64();
    timings.total_s = start.elapsed().as_secs_f64();

    let report = BatchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_lines: network.lines.len(),
        n_segments: system.n_segments(),
        n_snapshots: system.n_snapshots(),
        n_states: states.len(),
        n_parameter_units: store.n_units(),
        n_models: store.n_models(),
        horizon_s: system.horizon(),
        states: summaries,
        flagged: flagged_idx
            .iter()
            .map(|&(k, s, at)| FlaggedPair {
                state_id: states[k].state_id.clone(),
                segment_id: system.segments[s].segment_id.clone(),
                time_s: at,
            })
            .collect(),
        failures: store.failures.clone(),
        fallback_steps,
        timings,
        config: config.clone(),
    };
    Ok(BatchOutput {
        report,
        system,
        traces,
        refined,
    })
}

/// Temperature of one segment under one state at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub segment: usize,
    pub state: usize,
    pub temp_c: f64,
    pub over_limit: bool,
}

/// Interpolated temperatures at `t`; a segment is over the limit when its
/// trace crossed the limit at or before `t`.
pub fn snapshot_at(traces: &[TemperatureTrace], t: f64) -> Result<Vec<SnapshotEntry>, BatchError> {
    traces
        .iter()
        .map(|tr| {
            let end = *tr.times.last().unwrap_or(&0.0);
            let temp_c = tr.temp_at(t).ok_or(BatchError::OutOfRange { t, end })?;
            Ok(SnapshotEntry {
                segment: tr.segment,
                state: tr.state,
                temp_c,
                over_limit: tr.over_temperature_at.is_some_and(|at| at <= t),
            })
        })
        .collect()
}

/// Writes `segment_id,state_id,t_s,temp_c` rows with 6 significant digits.
pub fn write_traces_csv<W: Write>(
    traces: &[TemperatureTrace],
    segments: &[Segment],
    states: &[OperationState],
    out: W,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "segment_id,state_id,t_s,temp_c")?;
    for tr in traces {
        let (seg, st) = (&segments[tr.segment].segment_id, &states[tr.state].state_id);
        for (t, v) in tr.times.iter().zip(&tr.temps) {
            writeln!(out, "{seg},{st},{},{}", sig6(*t), sig6(*v))?;
        }
    }
    out.flush()
}

/// One row of a trace file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TraceRow {
    pub segment_id: String,
    pub state_id: String,
    pub t_s: f64,
    pub temp_c: f64,
}

pub fn read_traces_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>, BatchError> {
    let reader = std::io::BufReader::new(input);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| BatchError::TraceParse {
            line: 1,
            message: e.to_string(),
        })?;
    if header.as_deref() != Some("segment_id,state_id,t_s,temp_c") {
        return Err(BatchError::TraceParse {
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fail = |m: &str| BatchError::TraceParse {
            line: i + 2,
            message: m.to_string(),
        };
        let line = line.map_err(|e| fail(&e.to_string()))?;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(fail("expected 4 fields"));
        }
        rows.push(TraceRow {
            segment_id: parts[0].to_string(),
            state_id: parts[1].to_string(),
            t_s: parts[2].parse().map_err(|_| fail("bad t_s"))?,
            temp_c: parts[3].parse().map_err(|_| fail("bad temp_c"))?,
        });
    }
    Ok(rows)
}

pub fn write_report(report: &BatchReport, path: impl AsRef<Path>) -> Result<(), BatchError> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string_pretty(report)?).map_err(io_err(path))
}
