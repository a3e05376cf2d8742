//! Command-line harness. Every stage reads and writes files so the pipeline
//! can be run end to end or one stage at a time with identical output.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::edge::{self, ActiveClasses, Advertisement, DistanceReport, EdgeConfig};
use crate::ekf::{DtMode, EkfParams};
use crate::error::Error;
use crate::io::{read_json_file, read_jsonl_file, write_json_file, write_jsonl_file};
use crate::matcher::{self, MatchConfig, MatchProblem, MatchResult, TruthRecord};
use crate::pathloss;
use crate::simulator::{self, ScenarioConfig, TrueDistance};

pub const ADS_FILE: &str = "ads.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const DISTANCES_FILE: &str = "true_distances.jsonl";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MATCHES_FILE: &str = "matches.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const ERRORS_FILE: &str = "errors.csv";
pub const MODEL_FILE: &str = "model.json";
pub const FIT_STATS_FILE: &str = "fit_stats.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Exit status: 0 success, 1 runtime failure, 2 input or validation error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Runtime = 1,
    Input = 2,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub stage: &'static str,
    pub source: Error,
}

impl CliError {
    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

impl std::error::Error for CliError {}

type CliResult<T> = std::result::Result<T, CliError>;

fn input(stage: &'static str) -> impl Fn(Error) -> CliError {
    move |source| CliError {
        kind: ExitKind::Input,
        stage,
        source,
    }
}

fn runtime(stage: &'static str) -> impl Fn(Error) -> CliError {
    move |source| CliError {
        kind: if source.is_input_error() { ExitKind::Input } else { ExitKind::Runtime },
        stage,
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "assetmatch", version, about = "BLE RSSI distance estimation and asset-operator matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the path-loss model to `distance_m,rssi_db` samples.
    Fit(FitArgs),
    /// Write a ready-made scenario configuration.
    Scenario(ScenarioArgs),
    /// Generate advertisements and ground truth from a scenario.
    Simulate(SimulateArgs),
    /// Thin a high-rate advertisement log to the advertising interval.
    Downsample(DownsampleArgs),
    /// Run the wearable pipeline: advertisements to distance reports.
    Estimate(EstimateArgs),
    /// Match tag sessions to wearables.
    Match(MatchArgs),
    /// Score matches against ground truth.
    Evaluate(EvaluateArgs),
    /// Simulate, estimate, match and evaluate in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Reference distance in meters.
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[command(subcommand)]
    pub kind: ScenarioKind,
    /// Output JSON file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioKind {
    /// Workers in a row, each on their own tool.
    Static {
        #[arg(long, default_value_t = 3)]
        workers: usize,
        #[arg(long, default_value_t = 2.0)]
        spacing: f64,
        #[arg(long, default_value_t = 360.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        bystanders: usize,
    },
    /// Workers passing tools on at the given times.
    Swap {
        #[arg(long, default_value_t = 3)]
        workers: usize,
        #[arg(long, default_value_t = 2.0)]
        spacing: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [120.0, 240.0])]
        swap_times: Vec<f64>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DownsampleArgs {
    #[arg(long)]
    pub ads: PathBuf,
    #[arg(long)]
    pub source_interval_s: f64,
    #[arg(long, default_value_t = edge::DEFAULT_ADV_INTERVAL)]
    pub adv_interval_s: f64,
    /// Single phase to keep; all phases are written when omitted.
    #[arg(long)]
    pub phase: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EdgeOpts {
    #[arg(long)]
    pub dt_mode: Option<DtMode>,
    /// Measurement noise variance (dB²), e.g. 43.53 or 48.92.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = edge::DEFAULT_SESSION_GAP)]
    pub gap_s: f64,
    /// Comma-separated activity classes that open sessions.
    #[arg(long, default_value = "usage")]
    pub active_classes: String,
    /// Also write every filter output to trajectory.csv.
    #[arg(long)]
    pub trajectory: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MatchOpts {
    #[arg(long, default_value_t = matcher::DEFAULT_MARGIN)]
    pub margin_m: f64,
    /// Activations closer than this are searched jointly.
    #[arg(long, default_value_t = edge::DEFAULT_ADV_INTERVAL)]
    pub adv_interval_s: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub ads: PathBuf,
    /// Filter parameters JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub edge: EdgeOpts,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub reports: PathBuf,
    #[command(flatten)]
    pub matching: MatchOpts,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// With `--distances`, also writes per-estimate errors.
    #[arg(long, requires = "distances")]
    pub reports: Option<PathBuf>,
    #[arg(long, requires = "reports")]
    pub distances: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Filter parameters JSON.
    #[arg(long)]
    pub ekf_config: Option<PathBuf>,
    #[command(flatten)]
    pub edge: EdgeOpts,
    #[command(flatten)]
    pub matching: MatchOpts,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub version: &'static str,
}

impl RunManifest {
    fn new(subcommand: &'static str) -> Self {
        RunManifest {
            subcommand,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: None,
            seed: None,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn write(&self, out_dir: &Path) -> CliResult<()> {
        write_json_file(&out_dir.join(MANIFEST_FILE), self).map_err(runtime("manifest"))
    }
}

#[derive(Debug, Serialize)]
struct FitStats {
    n_samples: usize,
    residual_variance_db2: f64,
    residual_std_db: f64,
}

/// One row of errors.csv.
#[derive(Debug, Serialize)]
struct EstimateError {
    wearable: String,
    tag: String,
    start_s: f64,
    stop_s: f64,
    estimate_m: f64,
    true_m: f64,
    error_m: f64,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Scenario(a) => cmd_scenario(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Downsample(a) => cmd_downsample(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Match(a) => cmd_match(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError {
        kind: ExitKind::Runtime,
        stage: "output",
        source: e.into(),
    })
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let file = File::open(&args.samples).map_err(|e| input("fit")(e.into()))?;
    let samples = pathloss::read_samples_csv(BufReader::new(file), &display(&args.samples)).map_err(input("fit"))?;
    let model = pathloss::fit(&samples, args.x0).map_err(input("fit"))?;
    let var = pathloss::residual_variance(&model, &samples).map_err(input("fit"))?;
    ensure_dir(&args.out_dir)?;
    write_json_file(&args.out_dir.join(MODEL_FILE), &model).map_err(runtime("fit"))?;
    let stats = FitStats {
        n_samples: samples.len(),
        residual_variance_db2: var,
        residual_std_db: var.sqrt(),
    };
    write_json_file(&args.out_dir.join(FIT_STATS_FILE), &stats).map_err(runtime("fit"))?;
    log::info!(
        "fitted n={:.4} rssi0={:.2} dB over {} samples, residual std {:.2} dB",
        model.n,
        model.rssi0,
        samples.len(),
        var.sqrt()
    );
    let mut m = RunManifest::new("fit");
    m.inputs.push(display(&args.samples));
    m.outputs = vec![MODEL_FILE.into(), FIT_STATS_FILE.into()];
    m.write(&args.out_dir)
}

pub fn cmd_scenario(args: &ScenarioArgs) -> CliResult<()> {
    let cfg = match &args.kind {
        ScenarioKind::Static {
            workers,
            spacing,
            duration,
            bystanders,
        } => simulator::scenario_static(*workers, *spacing, *duration, *bystanders),
        ScenarioKind::Swap {
            workers,
            spacing,
            swap_times,
        } => simulator::scenario_swap(*workers, *spacing, swap_times).map_err(input("scenario"))?,
    }
    .with_seed(args.seed);
    cfg.validate().map_err(input("scenario"))?;
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            write_json_file(path, &cfg).map_err(runtime("scenario"))
        }
        None => {
            let text = serde_json::to_string_pretty(&cfg).map_err(|e| runtime("scenario")(e.into()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> CliResult<ScenarioConfig> {
    let mut cfg: ScenarioConfig = read_json_file(path).map_err(input("simulate"))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(input("simulate"))?;
    Ok(cfg)
}

fn simulate_into(cfg: &ScenarioConfig, out_dir: &Path) -> CliResult<()> {
    let sim = simulator::generate(cfg).map_err(runtime("simulate"))?;
    write_jsonl_file(&out_dir.join(ADS_FILE), &sim.ads).map_err(runtime("simulate"))?;
    write_jsonl_file(&out_dir.join(TRUTH_FILE), &sim.truth.sessions).map_err(runtime("simulate"))?;
    write_jsonl_file(&out_dir.join(DISTANCES_FILE), &sim.truth.distances).map_err(runtime("simulate"))?;
    log::info!(
        "simulated {} advertisements over {} tool sessions",
        sim.ads.len(),
        sim.truth.sessions.len()
    );
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = load_scenario(&args.config, args.seed)?;
    ensure_dir(&args.out_dir)?;
    simulate_into(&cfg, &args.out_dir)?;
    let mut m = RunManifest::new("simulate");
    m.config = Some(display(&args.config));
    m.seed = Some(cfg.seed);
    m.outputs = vec![ADS_FILE.into(), TRUTH_FILE.into(), DISTANCES_FILE.into()];
    m.write(&args.out_dir)
}

/// Reads advertisements from JSON Lines, or CSV when the extension is `.csv`.
pub fn read_ads(path: &Path) -> crate::Result<Vec<Advertisement>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        edge::read_advertisements_csv(File::open(path)?, &display(path))
    } else {
        read_jsonl_file(path)
    }
}

pub fn cmd_downsample(args: &DownsampleArgs) -> CliResult<()> {
    let ads = read_ads(&args.ads).map_err(input("downsample"))?;
    let k = edge::downsample_ratio(args.source_interval_s, args.adv_interval_s).map_err(input("downsample"))?;
    let phases: Vec<usize> = match args.phase {
        Some(p) => vec![p],
        None => (0..k).collect(),
    };
    ensure_dir(&args.out_dir)?;
    let mut m = RunManifest::new("downsample");
    m.inputs.push(display(&args.ads));
    for phase in phases {
        let out = edge::downsample(&ads, args.source_interval_s, args.adv_interval_s, phase)
            .map_err(input("downsample"))?;
        let name = format!("ads_phase{phase:02}.jsonl");
        write_jsonl_file(&args.out_dir.join(&name), &out).map_err(runtime("downsample"))?;
        m.outputs.push(name);
    }
    m.write(&args.out_dir)
}

fn edge_config(config: Option<&Path>, opts: &EdgeOpts) -> CliResult<EdgeConfig> {
    let mut ekf = match config {
        Some(p) => read_json_file::<EkfParams>(p).map_err(input("estimate"))?,
        None => EkfParams::default(),
    };
    if let Some(mode) = opts.dt_mode {
        ekf.dt_mode = mode;
    }
    if let Some(r) = opts.r {
        ekf.r = r;
    }
    ekf.validate().map_err(input("estimate"))?;
    if !(opts.gap_s.is_finite() && opts.gap_s >= 0.0) {
        return Err(input("estimate")(Error::Config(format!("gap must be >= 0, got {}", opts.gap_s))));
    }
    Ok(EdgeConfig {
        ekf,
        gap_s: opts.gap_s,
        active: ActiveClasses::parse(&opts.active_classes).map_err(input("estimate"))?,
        record_trajectory: opts.trajectory,
    })
}

fn estimate_into(ads: &[Advertisement], config: &EdgeConfig, out_dir: &Path) -> CliResult<Vec<DistanceReport>> {
    let out = edge::run_edge(ads, config).map_err(runtime("estimate"))?;
    if out.skipped > 0 {
        log::warn!("skipped {} malformed advertisements", out.skipped);
    }
    log::info!("{} sessions, {} distance reports", out.sessions.len(), out.reports.len());
    write_jsonl_file(&out_dir.join(REPORTS_FILE), &out.reports).map_err(runtime("estimate"))?;
    if config.record_trajectory {
        write_csv(&out_dir.join(TRAJECTORY_FILE), &out.trajectory).map_err(runtime("estimate"))?;
    }
    Ok(out.reports)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let config = edge_config(args.config.as_deref(), &args.edge)?;
    let ads = read_ads(&args.ads).map_err(input("estimate"))?;
    ensure_dir(&args.out_dir)?;
    estimate_into(&ads, &config, &args.out_dir)?;
    let mut m = RunManifest::new("estimate");
    m.inputs.push(display(&args.ads));
    m.config = args.config.as_deref().map(display);
    m.outputs.push(REPORTS_FILE.into());
    if config.record_trajectory {
        m.outputs.push(TRAJECTORY_FILE.into());
    }
    m.write(&args.out_dir)
}

fn match_config(opts: &MatchOpts) -> CliResult<MatchConfig> {
    if !(opts.margin_m.is_finite() && opts.margin_m >= 0.0) || !(opts.adv_interval_s.is_finite() && opts.adv_interval_s >= 0.0)
    {
        return Err(input("match")(Error::Config("margin and interval must be finite and >= 0".into())));
    }
    Ok(MatchConfig {
        margin_m: opts.margin_m,
        window_s: opts.adv_interval_s,
    })
}

fn match_into(reports: Vec<DistanceReport>, config: &MatchConfig, out_dir: &Path) -> CliResult<Vec<MatchResult>> {
    let problem = MatchProblem::from_reports(reports).map_err(input("match"))?;
    let results = matcher::solve(&problem, config).map_err(runtime("match"))?;
    write_jsonl_file(&out_dir.join(MATCHES_FILE), &results).map_err(runtime("match"))?;
    Ok(results)
}

pub fn cmd_match(args: &MatchArgs) -> CliResult<()> {
    let config = match_config(&args.matching)?;
    let reports: Vec<DistanceReport> = read_jsonl_file(&args.reports).map_err(input("match"))?;
    ensure_dir(&args.out_dir)?;
    match_into(reports, &config, &args.out_dir)?;
    let mut m = RunManifest::new("match");
    m.inputs.push(display(&args.reports));
    m.outputs.push(MATCHES_FILE.into());
    m.write(&args.out_dir)
}

fn evaluate_into(
    results: &[MatchResult],
    truth: &[TruthRecord],
    errors: Option<(&[DistanceReport], &[TrueDistance])>,
    out_dir: &Path,
) -> CliResult<()> {
    let report = matcher::evaluate(results, truth).map_err(input("evaluate"))?;
    write_json_file(&out_dir.join(METRICS_FILE), &report).map_err(runtime("evaluate"))?;
    let pct = |r: matcher::Ratio| r.percent.map_or("n/a".to_string(), |p| format!("{p:.1}%"));
    log::info!(
        "accuracy {}, recall {}, precision {} over {} matches",
        pct(report.accuracy),
        pct(report.recall),
        pct(report.precision),
        report.total
    );
    if let Some((reports, distances)) = errors {
        let rows = estimate_errors(reports, distances).map_err(input("evaluate"))?;
        write_csv(&out_dir.join(ERRORS_FILE), &rows).map_err(runtime("evaluate"))?;
    }
    Ok(())
}

/// Pairs each report with the true distance at its last advertisement.
fn estimate_errors(reports: &[DistanceReport], distances: &[TrueDistance]) -> crate::Result<Vec<EstimateError>> {
    let lookup: HashMap<(&str, &str, u64), f64> = distances
        .iter()
        .map(|d| ((d.wearable.as_str(), d.tag.as_str(), d.ts.to_bits()), d.distance_m))
        .collect();
    reports
        .iter()
        .map(|r| {
            let truth = lookup
                .get(&(r.wearable_id.as_str(), r.tag_id.as_str(), r.stop.to_bits()))
                .copied()
                .ok_or_else(|| {
                    Error::domain(format!(
                        "no true distance for {}/{} at t={}",
                        r.wearable_id, r.tag_id, r.stop
                    ))
                })?;
            Ok(EstimateError {
                wearable: r.wearable_id.clone(),
                tag: r.tag_id.clone(),
                start_s: r.start,
                stop_s: r.stop,
                estimate_m: r.distance,
                true_m: truth,
                error_m: r.distance - truth,
            })
        })
        .collect()
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let results: Vec<MatchResult> = read_jsonl_file(&args.matches).map_err(input("evaluate"))?;
    let truth: Vec<TruthRecord> = read_jsonl_file(&args.truth).map_err(input("evaluate"))?;
    let extra = match (&args.reports, &args.distances) {
        (Some(r), Some(d)) => Some((
            read_jsonl_file::<DistanceReport>(r).map_err(input("evaluate"))?,
            read_jsonl_file::<TrueDistance>(d).map_err(input("evaluate"))?,
        )),
        _ => None,
    };
    ensure_dir(&args.out_dir)?;
    evaluate_into(
        &results,
        &truth,
        extra.as_ref().map(|(r, d)| (r.as_slice(), d.as_slice())),
        &args.out_dir,
    )?;
    let mut m = RunManifest::new("evaluate");
    m.inputs = vec![display(&args.matches), display(&args.truth)];
    m.outputs.push(METRICS_FILE.into());
    if extra.is_some() {
        m.outputs.push(ERRORS_FILE.into());
    }
    m.write(&args.out_dir)
}

/// Runs every stage in memory and writes the same files the staged commands
/// would.
pub fn cmd_pipeline(args: &PipelineArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.config, args.seed)?;
    let edge_cfg = edge_config(args.ekf_config.as_deref(), &args.edge)?;
    let match_cfg = match_config(&args.matching)?;
    ensure_dir(&args.out_dir)?;

    let sim = simulator::generate(&scenario).map_err(runtime("simulate"))?;
    write_jsonl_file(&args.out_dir.join(ADS_FILE), &sim.ads).map_err(runtime("simulate"))?;
    write_jsonl_file(&args.out_dir.join(TRUTH_FILE), &sim.truth.sessions).map_err(runtime("simulate"))?;
    write_jsonl_file(&args.out_dir.join(DISTANCES_FILE), &sim.truth.distances).map_err(runtime("simulate"))?;

    let reports = estimate_into(&sim.ads, &edge_cfg, &args.out_dir)?;
    let results = match_into(reports.clone(), &match_cfg, &args.out_dir)?;
    evaluate_into(
        &results,
        &sim.truth.sessions,
        Some((&reports, &sim.truth.distances)),
        &args.out_dir,
    )?;

    let mut m = RunManifest::new("pipeline");
    m.config = Some(display(&args.config));
    m.seed = Some(scenario.seed);
    m.outputs = [ADS_FILE, TRUTH_FILE, DISTANCES_FILE, REPORTS_FILE, MATCHES_FILE, METRICS_FILE, ERRORS_FILE]
        .map(String::from)
        .to_vec();
    if edge_cfg.record_trajectory {
        m.outputs.push(TRAJECTORY_FILE.into());
    }
    m.write(&args.out_dir)
}
