//! Command-line front end. Every subcommand validates its inputs, runs one
//! library capability, writes data files into the output directory and
//! prints a one-line summary.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analytic::{
    build_model, solve_steady_state, AnalyticError, SolverConfig, ThresholdTime,
};
use crate::batch::{
    load_states, read_traces_csv, run_batch, snapshot_at, states_to_json, write_report,
    write_traces_csv, BatchConfig, BatchError, OutputMode, TemperatureTrace,
};
use crate::cluster::{cluster_quality, cluster_segments, ClusterError, ClusterSpec};
use crate::conductor::{Catalog, CatalogError, Conductor};
use crate::environment::{solar_geometry, EnvironmentSample};
use crate::format::sig6;
use crate::geo::{GeoError, Network, DEFAULT_MAX_SEGMENT_KM};
use crate::oracle::{crossing_time, integrate, IntegrationConfig, OracleError};
use crate::risk::{
    overlay_probability, overtemp_probability, time_to_overtemp_region, BinningSpec, RegionAxes,
    RegionMetadata, RegionOptions, RegionProblem, RiskError, WindModel,
};
use crate::weather::{load_weather_series, write_weather_csv, SampleMode, WeatherError};

const FORMATS: &str = "\
File formats (schema_version 1 for all):
  conductor catalog  JSON {\"schema_version\": 1, \"conductors\": [...]}
  network            JSON {\"schema_version\": 1, \"lines\": [{id, waypoints, conductor_name, base_current_amps}]}
  weather            CSV with a `# schema_version=1` line; columns timestamp_iso8601, lat, lon, temp_c,
                     wind_u_ms, wind_v_ms, solar_wm2[, sun_alt_deg, sun_az_deg][, elevation_m]
  states             JSON list of {state_id, description, line_currents | line_multipliers,
                     default_multiplier}, optionally wrapped as {\"schema_version\": 1, \"states\": [...]}
  wind model         JSON {sectors: [{start_deg, width_deg, probability, speed}], ambient}
  traces             CSV segment_id, state_id, t_s, temp_c
Numbers in CSV output carry 6 significant digits.
Exit codes: 0 success, 1 input error, 2 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "linetherm", version, about = "Overhead-line conductor temperature simulation", after_help = FORMATS)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, env = "LINETHERM_OUTPUT_DIR", default_value = ".")]
    pub output_dir: PathBuf,
    /// Conductor catalog JSON (default: built-in catalog).
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state conductor temperature.
    Steady(SteadyArgs),
    /// Temperature evolution: RK4 reference against both closed forms.
    Evolve(EvolveArgs),
    /// Adjust a model to a new current and compare with a full rebuild.
    UpdateCurrent(UpdateArgs),
    /// Time-to-limit map over wind direction and speed.
    Region(RegionArgs),
    /// Probability that the steady state exceeds the limit.
    Prob(ProbArgs),
    /// Split network lines into segments.
    Segment(SegmentArgs),
    /// Cluster segments under one weather snapshot.
    Cluster(ClusterArgs),
    /// Evaluate operation states over a weather series.
    Batch(BatchArgs),
    /// Temperatures of all traces at one time.
    Snapshot(SnapshotArgs),
    /// Write a seeded synthetic network, weather series and states.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum TextFormat {
    Text,
    Json,
}

/// Conductor, weather and line geometry of a single-span scenario. Defaults
/// describe the Drake reference scenario.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value = "Drake")]
    pub conductor: String,
    /// Sub-conductors per phase (default 1: a single conductor).
    #[arg(long, default_value_t = 1)]
    pub bundle_count: u32,
    /// Ambient temperature, °C.
    #[arg(long, default_value_t = 40.0)]
    pub ambient: f64,
    /// Wind speed, m/s.
    #[arg(long, default_value_t = 0.8)]
    pub wind_speed: f64,
    /// Direction the wind blows from, degrees clockwise from north.
    #[arg(long, default_value_t = 90.0)]
    pub wind_direction: f64,
    /// Line azimuth, degrees clockwise from north.
    #[arg(long, default_value_t = 90.0)]
    pub line_azimuth: f64,
    /// Global irradiance, W/m².
    #[arg(long, default_value_t = 1000.0)]
    pub irradiance: f64,
    /// Sun altitude, degrees (default: computed from latitude, day and hour).
    #[arg(long, allow_hyphen_values = true)]
    pub sun_altitude: Option<f64>,
    /// Sun azimuth, degrees (default: computed).
    #[arg(long)]
    pub sun_azimuth: Option<f64>,
    #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
    pub latitude: f64,
    #[arg(long, default_value_t = 182)]
    pub day: u32,
    /// Local solar hour.
    #[arg(long, default_value_t = 12.0)]
    pub hour: f64,
    /// Elevation above sea level, m.
    #[arg(long, default_value_t = 0.0)]
    pub elevation: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Phase current, A.
    #[arg(long, default_value_t = 800.0)]
    pub current: f64,
    /// Starting temperature of the iteration, °C (default: ambient + 10).
    #[arg(long)]
    pub initial_temp: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iterations: usize,
    #[arg(long, value_enum, default_value_t = TextFormat::Text)]
    pub format: TextFormat,
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 800.0)]
    pub current: f64,
    #[arg(long, default_value_t = 50.0)]
    pub initial_temp: f64,
    /// Horizon, s.
    #[arg(long, default_value_t = 7200.0)]
    pub horizon: f64,
    /// Sample and integration step, s.
    #[arg(long, default_value_t = 5.0)]
    pub step: f64,
    /// Threshold for the time-error statistics, °C.
    #[arg(long, default_value_t = 100.0)]
    pub threshold: f64,
    /// Trace file name inside the output directory.
    #[arg(long, default_value = "evolve.csv")]
    pub out: String,
}

#[derive(Debug, Clone, Args)]
pub struct UpdateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Reference current of the stored model, A.
    #[arg(long, default_value_t = 800.0)]
    pub current: f64,
    /// Current to update to, A.
    #[arg(long)]
    pub new_current: f64,
    #[arg(long, default_value_t = 50.0)]
    pub initial_temp: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RegionArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1000.0)]
    pub current: f64,
    #[arg(long, default_value_t = 100.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 50.0)]
    pub initial_temp: f64,
    /// Number of wind directions over 360°.
    #[arg(long, default_value_t = 72)]
    pub directions: usize,
    #[arg(long, default_value_t = 40)]
    pub speeds: usize,
    #[arg(long, default_value_t = 0.1)]
    pub v_lo: f64,
    #[arg(long, default_value_t = 6.0)]
    pub v_hi: f64,
    /// Wind model JSON for a probability-density overlay.
    #[arg(long)]
    pub wind_model: Option<PathBuf>,
    #[arg(long, default_value = "region.csv")]
    pub out: String,
}

#[derive(Debug, Clone, Args)]
pub struct ProbArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1000.0)]
    pub current: f64,
    #[arg(long, default_value_t = 100.0)]
    pub threshold: f64,
    /// Wind model JSON (default: the built-in eight-sector rose).
    #[arg(long)]
    pub wind_model: Option<PathBuf>,
    /// Square binnings to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "25,500")]
    pub bins: Vec<usize>,
    #[arg(long, default_value = "prob.json")]
    pub out: String,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_SEGMENT_KM)]
    pub max_km: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// File name without extension.
    #[arg(long, default_value = "segments")]
    pub out: String,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub weather: PathBuf,
    /// Snapshot index in the series.
    #[arg(long, default_value_t = 0)]
    pub snapshot: usize,
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_SEGMENT_KM)]
    pub max_km: f64,
    #[arg(long, default_value_t = false)]
    pub bilinear: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum ModeArg {
    Screen,
    Trace,
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub weather: PathBuf,
    #[arg(long)]
    pub states: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_SEGMENT_KM)]
    pub max_km: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Screen)]
    pub mode: ModeArg,
    /// Cluster segments with this k (default: no clustering).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Conductor temperature limit, °C.
    #[arg(long, default_value_t = 100.0)]
    pub limit: f64,
    #[arg(long, default_value_t = false)]
    pub bilinear: bool,
    /// Skip dense re-evaluation of flagged pairs.
    #[arg(long, default_value_t = false)]
    pub no_refine: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SnapshotArgs {
    /// Trace CSV written by `batch`.
    #[arg(long)]
    pub traces: PathBuf,
    /// Time from the series start, s.
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 100.0)]
    pub limit: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, default_value = "snapshot")]
    pub out: String,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub lines: usize,
    /// Approximate line length, km.
    #[arg(long, default_value_t = 45.0)]
    pub line_km: f64,
    #[arg(long, default_value_t = 73)]
    pub snapshots: usize,
    #[arg(long, default_value_t = 10)]
    pub states: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Errors split by exit code.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

macro_rules! input_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_errors!(
    CatalogError,
    GeoError,
    WeatherError,
    ClusterError,
    OracleError,
    std::io::Error,
    serde_json::Error
);

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        match e {
            AnalyticError::InvalidConfig(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::Solver(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

struct Context {
    output_dir: PathBuf,
    catalog: Catalog,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<File, CliError> {
        let p = self.path(name);
        File::create(&p).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(self.path(name), text + "\n")?;
        Ok(())
    }

    fn scenario(&self, a: &ScenarioArgs) -> Result<(Conductor, EnvironmentSample), CliError> {
        let conductor = self
            .catalog
            .get(&a.conductor)?
            .clone()
            .with_bundle_count(a.bundle_count);
        conductor.validate()?;
        let (alt, az) = match (a.sun_altitude, a.sun_azimuth) {
            (Some(alt), Some(az)) => (alt, az),
            (None, None) => solar_geometry(a.latitude, a.day, a.hour),
            _ => {
                return Err(CliError::Input(
                    "give both --sun-altitude and --sun-azimuth, or neither".into(),
                ))
            }
        };
        let mut env = EnvironmentSample::still(a.ambient)
            .with_wind(a.wind_speed, a.wind_direction)
            .with_sun(a.irradiance, alt, az);
        env.elevation = a.elevation;
        if !env.is_valid() {
            return Err(CliError::Input(
                "invalid environment (negative wind or irradiance, or bad sun altitude)".into(),
            ));
        }
        Ok((conductor, env))
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        // Fails only when a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    std::fs::create_dir_all(&cli.output_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", cli.output_dir.display())))?;
    let catalog = match &cli.catalog {
        Some(p) => Catalog::load(p)?,
        None => Catalog::builtin(),
    };
    let ctx = Context {
        output_dir: cli.output_dir,
        catalog,
    };
    match cli.command {
        Command::Steady(a) => cmd_steady(&ctx, &a),
        Command::Evolve(a) => cmd_evolve(&ctx, &a),
        Command::UpdateCurrent(a) => cmd_update(&ctx, &a),
        Command::Region(a) => cmd_region(&ctx, &a),
        Command::Prob(a) => cmd_prob(&ctx, &a),
        Command::Segment(a) => cmd_segment(&ctx, &a),
        Command::Cluster(a) => cmd_cluster(&ctx, &a),
        Command::Batch(a) => cmd_batch(&ctx, &a),
        Command::Snapshot(a) => cmd_snapshot(&ctx, &a),
        Command::Synth(a) => cmd_synth(&ctx, &a),
    }
}

fn non_negative(name: &str, v: f64) -> CliResult {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "{name} must be a non-negative number"
        )))
    }
}

fn cmd_steady(ctx: &Context, a: &SteadyArgs) -> CliResult {
    non_negative("--current", a.current)?;
    let (conductor, env) = ctx.scenario(&a.scenario)?;
    let config = SolverConfig {
        heat_mismatch_tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        ..Default::default()
    };
    let start = a.initial_temp.unwrap_or(env.ambient_temp + 10.0);
    let ss = solve_steady_state(
        &conductor,
        &env,
        a.scenario.line_azimuth,
        a.current,
        start,
        &config,
    )?;
    match a.format {
        TextFormat::Text => println!(
            "T_e = {} °C after {} iterations (residual {:.3e} W/m)",
            sig6(ss.temp),
            ss.iterations,
            ss.residual
        ),
        TextFormat::Json => println!(
            "{}",
            json!({"steady_temp_c": ss.temp, "iterations": ss.iterations, "residual_w_per_m": ss.residual})
        ),
    }
    Ok(())
}

/// Largest excursions of an analytical trace around the reference and its
/// time error at the threshold.
#[derive(Debug, Clone, Serialize)]
pub struct FormErrors {
    /// Largest amount above the reference, °C.
    pub max_over_c: f64,
    /// Largest amount below the reference, °C.
    pub max_under_c: f64,
    /// Analytical minus reference time to the threshold, s (positive = late).
    pub threshold_time_error_s: Option<f64>,
    pub threshold_time_s: Option<f64>,
}

fn form_errors(
    times: &[f64],
    reference: &[f64],
    trace: &[f64],
    threshold: f64,
    rk4_time: Option<f64>,
) -> FormErrors {
    let (mut over, mut under) = (0.0f64, 0.0f64);
    for (r, x) in reference.iter().zip(trace) {
        over = over.max(x - r);
        under = under.max(r - x);
    }
    let t = crossing_time(times, trace, threshold).seconds();
    FormErrors {
        max_over_c: over,
        max_under_c: under,
        threshold_time_error_s: t.zip(rk4_time).map(|(a, b)| a - b),
        threshold_time_s: t,
    }
}

fn cmd_evolve(ctx: &Context, a: &EvolveArgs) -> CliResult {
    non_negative("--current", a.current)?;
    let (conductor, env) = ctx.scenario(&a.scenario)?;
    let az = a.scenario.line_azimuth;
    let cfg = IntegrationConfig::rk4(a.step, a.horizon);
    cfg.validate()?;
    let rk4 = integrate(&conductor, &env, az, a.current, a.initial_temp, &cfg)?;
    let model = build_model(
        &conductor,
        &env,
        az,
        a.current,
        a.initial_temp,
        &SolverConfig::default(),
    )?;
    let ric: Vec<f64> = rk4.times.iter().map(|&t| model.eval_riccati(t)).collect();
    let fo: Vec<f64> = rk4
        .times
        .iter()
        .map(|&t| model.eval_first_order(t))
        .collect();

    let mut out = std::io::BufWriter::new(ctx.create(&a.out)?);
    use std::io::Write;
    writeln!(out, "t_s,rk4_c,riccati_c,first_order_c")?;
    for k in 0..rk4.len() {
        writeln!(
            out,
            "{},{},{},{}",
            sig6(rk4.times[k]),
            sig6(rk4.temps[k]),
            sig6(ric[k]),
            sig6(fo[k])
        )?;
    }
    out.flush()?;

    let rk4_time = rk4.crossing_time(a.threshold).seconds();
    let riccati = form_errors(&rk4.times, &rk4.temps, &ric, a.threshold, rk4_time);
    let first_order = form_errors(&rk4.times, &rk4.temps, &fo, a.threshold, rk4_time);
    let summary = json!({
        "steady_temp_c": model.steady_temp,
        "threshold_c": a.threshold,
        "rk4_threshold_time_s": rk4_time,
        "riccati": riccati,
        "first_order": first_order,
        "error_bound_c": model.error_bound().ok(),
    });
    let name = format!("{}_summary.json", a.out.trim_end_matches(".csv"));
    ctx.write_json(&name, &summary)?;
    println!(
        "{} samples; Riccati max over {} °C, under {} °C; first-order max over {} °C",
        rk4.len(),
        sig6(riccati.max_over_c),
        sig6(riccati.max_under_c),
        sig6(first_order.max_over_c)
    );
    Ok(())
}

fn cmd_update(ctx: &Context, a: &UpdateArgs) -> CliResult {
    non_negative("--current", a.current)?;
    non_negative("--new-current", a.new_current)?;
    let (conductor, env) = ctx.scenario(&a.scenario)?;
    let az = a.scenario.line_azimuth;
    let solver = SolverConfig::default();
    let stored = build_model(&conductor, &env, az, a.current, a.initial_temp, &solver)?;
    let updated = stored.update_for_current(&conductor, a.new_current)?;
    let rebuilt = build_model(&conductor, &env, az, a.new_current, a.initial_temp, &solver)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "reference_current_a": a.current,
            "new_current_a": a.new_current,
            "updated": updated,
            "rebuilt": rebuilt,
            "steady_temp_error_c": updated.steady_temp - rebuilt.steady_temp,
        }))?
    );
    Ok(())
}

fn load_wind_model(path: &Path) -> Result<WindModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let model: WindModel = serde_json::from_str(&text)?;
    model.validate()?;
    Ok(model)
}

fn cmd_region(ctx: &Context, a: &RegionArgs) -> CliResult {
    non_negative("--current", a.current)?;
    let (conductor, site) = ctx.scenario(&a.scenario)?;
    let axes = RegionAxes::uniform(a.directions, a.v_lo, a.v_hi, a.speeds);
    let problem = RegionProblem {
        conductor: &conductor,
        site,
        line_azimuth: a.scenario.line_azimuth,
        current: a.current,
        threshold: a.threshold,
        initial_temp: a.initial_temp,
    };
    let mut region = time_to_overtemp_region(&problem, &axes, &RegionOptions::default())?;
    if let Some(p) = &a.wind_model {
        region = overlay_probability(&region, &load_wind_model(p)?)?;
    }
    region.write_csv(ctx.create(&a.out)?)?;
    let meta = RegionMetadata {
        schema_version: 1,
        conductor: conductor.name.clone(),
        line_azimuth_deg: a.scenario.line_azimuth,
        current_a: a.current,
        threshold_c: a.threshold,
        ambient_c: site.ambient_temp,
        initial_temp_c: a.initial_temp,
        directions_deg: axes.directions.clone(),
        speeds_ms: axes.speeds.clone(),
    };
    ctx.write_json(
        &format!("{}_meta.json", a.out.trim_end_matches(".csv")),
        &meta,
    )?;
    let reached = region
        .cells
        .iter()
        .filter(|c| c.seconds().is_some())
        .count();
    println!(
        "{} cells, {} reach {} °C",
        region.cells.len(),
        reached,
        sig6(a.threshold)
    );
    Ok(())
}

fn cmd_prob(ctx: &Context, a: &ProbArgs) -> CliResult {
    non_negative("--current", a.current)?;
    if a.bins.is_empty() || a.bins.contains(&0) {
        return Err(CliError::Input(
            "--bins must list positive bin counts".into(),
        ));
    }
    let (conductor, site) = ctx.scenario(&a.scenario)?;
    let model = match &a.wind_model {
        Some(p) => load_wind_model(p)?,
        None => crate::synthetic::wind_rose_fixture(),
    };
    let mut results = Vec::new();
    for &n in &a.bins {
        let p = overtemp_probability(
            &conductor,
            &site,
            a.scenario.line_azimuth,
            a.current,
            a.threshold,
            &model,
            BinningSpec::square(n),
        )?;
        results.push(json!({"bins": n, "probability": p}));
        println!("{n}x{n}: P(T_e >= {}) = {}", sig6(a.threshold), sig6(p));
    }
    ctx.write_json(
        &a.out,
        &json!({"current_a": a.current, "threshold_c": a.threshold, "results": results}),
    )
}

fn cmd_segment(ctx: &Context, a: &SegmentArgs) -> CliResult {
    let net = Network::load(&a.network)?;
    let segs = net.segments(a.max_km)?;
    match a.format {
        Format::Json => ctx.write_json(&format!("{}.json", a.out), &segs)?,
        Format::Csv => {
            let mut out = std::io::BufWriter::new(ctx.create(&format!("{}.csv", a.out))?);
            use std::io::Write;
            writeln!(
                out,
                "segment_id,line_id,lat,lon,azimuth_deg,length_km,conductor"
            )?;
            for s in &segs {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    s.segment_id,
                    s.line_id,
                    sig6(s.midpoint.0),
                    sig6(s.midpoint.1),
                    sig6(s.azimuth),
                    sig6(s.length_km),
                    s.conductor_name
                )?;
            }
            out.flush()?;
        }
    }
    println!("{} lines -> {} segments", net.lines.len(), segs.len());
    Ok(())
}

fn sample_mode(bilinear: bool) -> SampleMode {
    if bilinear {
        SampleMode::Bilinear
    } else {
        SampleMode::Nearest
    }
}

fn cmd_cluster(ctx: &Context, a: &ClusterArgs) -> CliResult {
    let net = Network::load(&a.network)?;
    let series = load_weather_series(&a.weather)?;
    for w in &series.warnings {
        eprintln!("warning: {w}");
    }
    let snap = series.snapshots.get(a.snapshot).ok_or_else(|| {
        CliError::Input(format!(
            "snapshot {} out of range (series has {})",
            a.snapshot,
            series.len()
        ))
    })?;
    let segs = net.segments(a.max_km)?;
    let mode = sample_mode(a.bilinear);
    let envs = segs
        .iter()
        .map(|s| snap.sample(s.midpoint.0, s.midpoint.1, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = ClusterSpec {
        k: a.k,
        seed: a.seed,
        ..Default::default()
    };
    if segs.len() < a.k {
        eprintln!(
            "warning: {} segments for k = {}; using k = {}",
            segs.len(),
            a.k,
            segs.len()
        );
    }
    let clustering = cluster_segments(&segs, &envs, &spec)?;
    clustering.write_assignments_csv(&segs, ctx.create("clusters.csv")?)?;
    clustering.write_centroids_csv(&segs, ctx.create("centroids.csv")?)?;
    let quality = cluster_quality(&clustering, &envs);
    ctx.write_json("cluster_quality.json", &quality)?;
    println!(
        "{} segments -> {} clusters in {} iterations; {} exceed the spread targets",
        segs.len(),
        clustering.k(),
        clustering.iterations,
        quality.violating.len()
    );
    Ok(())
}

fn cmd_batch(ctx: &Context, a: &BatchArgs) -> CliResult {
    let net = Network::load(&a.network)?;
    let series = load_weather_series(&a.weather)?;
    for w in &series.warnings {
        eprintln!("warning: {w}");
    }
    let states = load_states(&a.states)?;
    let config = BatchConfig {
        max_segment_km: a.max_km,
        sample_mode: sample_mode(a.bilinear),
        limit_temp: a.limit,
        mode: match a.mode {
            ModeArg::Screen => OutputMode::Screen15min,
            ModeArg::Trace => OutputMode::Trace5s,
        },
        refine_flagged: !a.no_refine,
        clustering: a.k.map(|k| ClusterSpec {
            k,
            seed: a.seed,
            ..Default::default()
        }),
        ..Default::default()
    };
    let out = run_batch(&net, &series, &ctx.catalog, &states, &config)?;
    write_traces_csv(
        &out.traces,
        &out.system.segments,
        &states,
        ctx.create("traces.csv")?,
    )?;
    if !out.refined.is_empty() {
        write_traces_csv(
            &out.refined,
            &out.system.segments,
            &states,
            ctx.create("refined_traces.csv")?,
        )?;
    }
    let mut report = out.report;
    // Wall-clock timings vary run to run; keep them out of the byte-stable report.
    let timings = std::mem::take(&mut report.timings);
    write_report(&report, ctx.path("report.json"))?;
    ctx.write_json("timings.json", &timings)?;
    for f in &report.failures {
        eprintln!("warning: {f}");
    }
    println!(
        "{} segments x {} snapshots, {} states, {} models; {} flagged pairs",
        report.n_segments,
        report.n_snapshots,
        report.n_states,
        report.n_models,
        report.flagged.len()
    );
    Ok(())
}

fn cmd_snapshot(ctx: &Context, a: &SnapshotArgs) -> CliResult {
    let file = File::open(&a.traces)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.traces.display())))?;
    let rows = read_traces_csv(file)?;
    // Group consecutive rows of each (segment, state) pair.
    let mut keys: Vec<(String, String)> = Vec::new();
    let mut traces: Vec<TemperatureTrace> = Vec::new();
    for r in rows {
        let same = keys
            .last()
            .is_some_and(|k| k.0 == r.segment_id && k.1 == r.state_id);
        if !same {
            keys.push((r.segment_id.clone(), r.state_id.clone()));
            traces.push(TemperatureTrace {
                segment: keys.len() - 1,
                state: keys.len() - 1,
                times: Default::default(),
                temps: Vec::new(),
                over_temperature_at: None,
                fallback_steps: 0,
            });
        }
        let tr = traces.last_mut().unwrap();
        std::sync::Arc::make_mut(&mut tr.times).push(r.t_s);
        tr.temps.push(r.temp_c);
    }
    for tr in &mut traces {
        if let ThresholdTime::Reached(t) = crossing_time(&tr.times, &tr.temps, a.limit) {
            tr.over_temperature_at = Some(t);
        }
    }
    let entries = snapshot_at(&traces, a.t)?;
    let over = entries.iter().filter(|e| e.over_limit).count();
    match a.format {
        Format::Json => {
            let rows: Vec<_> = entries
                .iter()
                .map(|e| {
                    let k = &keys[e.segment];
                    json!({"segment_id": k.0, "state_id": k.1, "temp_c": e.temp_c, "over_limit": e.over_limit})
                })
                .collect();
            ctx.write_json(&format!("{}.json", a.out), &rows)?;
        }
        Format::Csv => {
            let mut out = std::io::BufWriter::new(ctx.create(&format!("{}.csv", a.out))?);
            use std::io::Write;
            writeln!(out, "segment_id,state_id,temp_c,over_limit")?;
            for e in &entries {
                let k = &keys[e.segment];
                writeln!(
                    out,
                    "{},{},{},{}",
                    k.0,
                    k.1,
                    sig6(e.temp_c),
                    u8::from(e.over_limit)
                )?;
            }
            out.flush()?;
        }
    }
    println!(
        "{} traces at t = {} s; {} over {} °C",
        entries.len(),
        sig6(a.t),
        over,
        sig6(a.limit)
    );
    Ok(())
}

fn cmd_synth(ctx: &Context, a: &SynthArgs) -> CliResult {
    if a.lines == 0 || a.snapshots == 0 {
        return Err(CliError::Input(
            "--lines and --snapshots must be positive".into(),
        ));
    }
    let net = crate::synthetic::synthetic_network(a.lines, a.line_km, a.seed);
    let series = crate::synthetic::synthetic_weather(a.snapshots, a.seed.wrapping_add(1));
    let states = crate::synthetic::synthetic_states(&net, a.states, a.seed.wrapping_add(2));
    std::fs::write(ctx.path("network.json"), net.to_json() + "\n")?;
    write_weather_csv(&series, ctx.create("weather.csv")?)?;
    std::fs::write(ctx.path("states.json"), states_to_json(&states) + "\n")?;
    println!(
        "{} lines, {} snapshots, {} states written to {}",
        net.lines.len(),
        series.len(),
        states.len(),
        ctx.output_dir.display()
    );
    Ok(())
}
