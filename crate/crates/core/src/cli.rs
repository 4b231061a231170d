//! Command-line front end. Every command is a pure function of its config
//! file and the global seed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::beam_align::{self, AlignConfig, AlignmentResult};
use crate::channel::{make_scenario, ArrayGeometry, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimator::{evaluate, predict, Dataset, ErrorReport, ForestModel, Hyperparams, Row, RowMeta};
use crate::io::{self, fmt, write_atomic};
use crate::pipeline::{self, DatasetPlan, DesignSpec, E2eConfig, SimulateConfig, SweepConfig, TagSpec};
use crate::resonator::{linear_grid, tag_response};
use crate::seed;

pub const SEED_ENV: &str = "SOILTAG_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "soiltag", version, about = "Chipless Wi-Fi tag soil-moisture simulator")]
pub struct Cli {
    /// Global seed; the SOILTAG_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Format of summary reports. Tables are always CSV.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tune a slot geometry for a moisture range.
    Design(ConfigArg),
    /// Synthesize raw live and reference CSI for one scene.
    Simulate(ConfigArg),
    /// Build a labelled feature dataset.
    Dataset(ConfigArg),
    /// Beam scan and MUSIC on one scene.
    Align(ConfigArg),
    /// Stitch features from raw CSI files.
    Features(FeaturesArgs),
    /// Train a random forest.
    Train(TrainArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
    /// Predict moisture for a feature file.
    Predict(PredictArgs),
    /// Dataset, split, train and evaluate in one go.
    E2e(ConfigArg),
    /// End-to-end runs over a list of SNRs.
    Sweep(ConfigArg),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub live: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Alignment JSON written by `simulate` or `align`.
    #[arg(long)]
    pub alignment: PathBuf,
    /// Scene JSON, for the receive array layout.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = crate::features::DEFAULT_SUBCARRIERS_PER_CHANNEL)]
    pub subcarriers: usize,
    /// Moisture label in percent; also writes one dataset row per live packet.
    #[arg(long)]
    pub label: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub hyperparams: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV (freq_hz, gain_db).
    #[arg(long)]
    pub features: PathBuf,
}

/// Job file of the `align` command.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize, Default)]
#[serde(default)]
pub struct AlignJob {
    pub scenario: ScenarioConfig,
    pub tag: TagSpec,
    pub moisture_pct: f64,
    pub align: AlignConfig,
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    format: Format,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)
    }

    /// Summary report as `<stem>.json`, or as a flattened `<stem>.csv`.
    fn report<T: Serialize>(&self, stem: &str, value: &T) -> Result<()> {
        match self.format {
            Format::Json => self.write(&format!("{stem}.json"), &io::to_json_bytes(value)?),
            Format::Csv => {
                let mut rows = Vec::new();
                flatten("", &serde_json::to_value(value)?, &mut rows);
                self.write(
                    &format!("{stem}.csv"),
                    &io::csv_bytes(&["field", "value"], rows.into_iter().map(|(k, v)| vec![k, v]))?,
                )
            }
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => io::read_json(p).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", p.display())),
            other => other,
        }),
        None => Ok(T::default()),
    }
}

fn cmd_design(ctx: &Ctx, arg: &ConfigArg) -> Result<()> {
    let spec: DesignSpec = load_or_default(arg.config.as_deref())?;
    let report = pipeline::design(&spec)?;
    ctx.report("design", &report)?;

    let freqs = linear_grid(2.3e9, 2.8e9, 1e6);
    let curves = spec
        .moisture_levels
        .iter()
        .map(|&t| tag_response(&report.geometry, Some(t), &spec.model, &freqs))
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec!["freq_hz".to_string()];
    header.extend(spec.moisture_levels.iter().map(|t| format!("gain_db_theta_{t}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = freqs.iter().enumerate().map(|(i, f)| {
        let mut r = vec![fmt(*f)];
        r.extend(curves.iter().map(|c| fmt(c.gain_db()[i])));
        r
    });
    ctx.write("gain_curves.csv", &io::csv_bytes(&header, rows)?)
}

fn cmd_simulate(ctx: &Ctx, arg: &ConfigArg) -> Result<()> {
    let cfg: SimulateConfig = load_or_default(arg.config.as_deref())?;
    let sim = pipeline::simulate(&cfg, ctx.seed)?;
    ctx.write("live_csi.csv", &io::csi_csv(&sim.live)?)?;
    ctx.write("reference_csi.csv", &io::csi_csv(&sim.reference)?)?;
    ctx.write("alignment.json", &io::to_json_bytes(&sim.alignment.result)?)
}

fn cmd_dataset(ctx: &Ctx, arg: &ConfigArg) -> Result<()> {
    let plan: DatasetPlan = load_or_default(arg.config.as_deref())?;
    let build = pipeline::build_dataset(&plan, ctx.seed)?;
    for s in &build.skipped {
        eprintln!("warning: skipped environment {} level {}: {}", s.environment, s.level, s.reason);
    }
    ctx.write("dataset.csv", &io::dataset_csv(&build.dataset)?)?;
    ctx.report(
        "dataset_summary",
        &serde_json::json!({
            "rows": build.dataset.len(),
            "geometry": build.geometry,
            "skipped_cells": build.skipped,
        }),
    )
}

fn cmd_align(ctx: &Ctx, arg: &ConfigArg) -> Result<()> {
    let job: AlignJob = load_or_default(arg.config.as_deref())?;
    let scenario = make_scenario(&job.scenario, pipeline::scenario_seed(&job.scenario, ctx.seed, 0))?;
    let geom = job.tag.resolve()?;
    let fr = job.tag.response(&geom, Some(job.moisture_pct))?;
    let run = beam_align::align(&scenario, &fr, &job.align, seed::derive(ctx.seed, "align"))?;
    ctx.report("alignment", &run.result)?;

    let mut header = vec!["angle_deg", "power_db"];
    if run.profile_without_tag.is_some() {
        header.push("power_db_without_tag");
    }
    let rows = run.profile.angles_deg.iter().enumerate().map(|(i, a)| {
        let mut r = vec![fmt(*a), fmt(run.profile.power_db[i])];
        if let Some(p) = &run.profile_without_tag {
            r.push(fmt(p.power_db[i]));
        }
        r
    });
    ctx.write("spatial_profile.csv", &io::csv_bytes(&header, rows)?)?;
    let a = &run.aoa;
    let rows =
        a.angles_deg.iter().enumerate().map(|(i, x)| vec![fmt(*x), fmt(a.with_tag_db[i]), fmt(a.without_tag_db[i])]);
    ctx.write("music_spectrum.csv", &io::csv_bytes(&["angle_deg", "with_tag_db", "without_tag_db"], rows)?)
}

fn cmd_features(ctx: &Ctx, args: &FeaturesArgs) -> Result<()> {
    let live = io::read_csi_csv(&args.live)?;
    let reference = io::read_csi_csv(&args.reference)?;
    let alignment: AlignmentResult = io::read_json(&args.alignment)?;
    let scene: ScenarioConfig = load_or_default(args.scenario.as_deref())?;
    let rx = ArrayGeometry::new(scene.rx_elements, scene.element_spacing)?;
    let w = beam_align::beamforming_weights(&rx, alignment.aoa_deg);
    let fv = pipeline::features_from_captures(&live, &reference, &w, args.subcarriers)?;
    ctx.write("features.csv", &io::feature_csv(&fv)?)?;

    if let Some(label) = args.label {
        let ref_amps = pipeline::channel_amplitudes(&reference, &w)?;
        let rows = live
            .iter()
            .enumerate()
            .map(|(p, packet)| {
                let amps = pipeline::channel_amplitudes(std::slice::from_ref(packet), &w)?;
                let f = crate::features::stitch_amplitudes(&amps, &ref_amps, args.subcarriers)?;
                Ok(Row {
                    features: f.gain_db,
                    label,
                    meta: RowMeta { environment: 0, level: 0, packet: p as u32, seed: ctx.seed },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let data = Dataset::new(fv.freqs.clone(), rows)?;
        ctx.write("dataset.csv", &io::dataset_csv(&data)?)?;
    }
    Ok(())
}

fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    let data = io::read_dataset_csv(&args.dataset)?;
    let hp: Hyperparams = load_or_default(args.hyperparams.as_deref())?;
    let model = pipeline::train(&data, &hp, ctx.seed)?;
    ctx.write("model.json", &io::to_json_bytes(&model)?)
}

fn write_cdf(ctx: &Ctx, report: &ErrorReport) -> Result<()> {
    let rows = report.cdf.iter().map(|(e, p)| vec![fmt(*e), fmt(*p)]);
    ctx.write("error_cdf.csv", &io::csv_bytes(&["abs_error", "cdf"], rows)?)
}

/// Report without the CDF table, which goes to its own CSV.
fn summary_of(report: &ErrorReport) -> Value {
    serde_json::json!({
        "count": report.count,
        "mean_abs_error": report.mean,
        "median_abs_error": report.median,
        "p90_abs_error": report.p90,
        "max_abs_error": report.max,
    })
}

fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let model: ForestModel = io::read_json(&args.model)?;
    let data = io::read_dataset_csv(&args.dataset)?;
    let report = evaluate(&model, &data)?;
    ctx.report("eval", &summary_of(&report))?;
    write_cdf(ctx, &report)
}

fn cmd_predict(ctx: &Ctx, args: &PredictArgs) -> Result<()> {
    let model: ForestModel = io::read_json(&args.model)?;
    let fv = io::read_feature_csv(&args.features)?;
    let moisture = predict(&model, &fv.gain_db)?;
    ctx.report("prediction", &serde_json::json!({ "moisture_pct": moisture }))
}

fn cmd_e2e(ctx: &Ctx, arg: &ConfigArg) -> Result<()> {
    let cfg: E2eConfig = load_or_default(arg.config.as_deref())?;
    let out = pipeline::run_e2e(&cfg, ctx.seed)?;
    ctx.report("e2e_report", &out.summary)?;
    write_cdf(ctx, &out.report)?;
    ctx.write("model.json", &io::to_json_bytes(&out.model)?)
}

fn cmd_sweep(ctx: &Ctx, arg: &ConfigArg) -> Result<()> {
    let cfg: SweepConfig = load_or_default(arg.config.as_deref())?;
    let points = pipeline::run_sweep(&cfg, ctx.seed)?;
    let rows = points.iter().map(|p| {
        vec![
            fmt(p.snr_db),
            fmt(p.mean_abs_error),
            fmt(p.median_abs_error),
            fmt(p.p90_abs_error),
            p.skipped_cells.to_string(),
        ]
    });
    ctx.write(
        "sweep.csv",
        &io::csv_bytes(&["snr_db", "mean_abs_error", "median_abs_error", "p90_abs_error", "skipped_cells"], rows)?,
    )?;
    ctx.report("sweep", &points)
}

/// Seed from the environment if set, else from the flag.
pub fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not a u64"))),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx { seed: effective_seed(cli.seed)?, out_dir: cli.out_dir.clone(), format: cli.format };
    match &cli.command {
        Command::Design(a) => cmd_design(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Dataset(a) => cmd_dataset(&ctx, a),
        Command::Align(a) => cmd_align(&ctx, a),
        Command::Features(a) => cmd_features(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Predict(a) => cmd_predict(&ctx, a),
        Command::E2e(a) => cmd_e2e(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
    }
}

/// Parse, run and map the outcome to an exit code: 0 success, 1 usage or
/// config error, 2 domain error.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
