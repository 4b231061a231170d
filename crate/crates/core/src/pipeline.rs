//! End-to-end runs: tag design, dataset synthesis, training and evaluation.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam_align::{self, AlignConfig, AlignmentRun, AodMode};
use crate::channel::{self, make_scenario, CsiProfile, Environment, Scenario, ScenarioConfig, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::estimator::{evaluate, train_forest, Dataset, ErrorReport, ForestModel, Hyperparams, Row, RowMeta};
use crate::features::{stitch_amplitudes, ChannelAmplitude, FeatureVector, DEFAULT_SUBCARRIERS_PER_CHANNEL};
use crate::resonator::{
    linear_grid, tag_response, tune_geometry, DgsGeometry, FrequencyResponse, LumpedModel, SearchSpace, TuneReport,
};
use crate::seed;

/// Grid the tag response is tabulated on; it covers every Wi-Fi subcarrier.
pub const TAG_GRID_START_HZ: f64 = 2.39e9;
pub const TAG_GRID_STOP_HZ: f64 = 2.50e9;
pub const TAG_GRID_STEP_HZ: f64 = 0.1e6;

pub fn tag_grid() -> Vec<f64> {
    linear_grid(TAG_GRID_START_HZ, TAG_GRID_STOP_HZ, TAG_GRID_STEP_HZ)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSpec {
    /// Moisture fractions the tag must separate, ascending.
    pub moisture_levels: Vec<f64>,
    pub band_hz: [f64; 2],
    pub search_space: SearchSpace,
    pub model: LumpedModel,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            moisture_levels: vec![0.0, 0.05, 0.10, 0.15, 0.20],
            band_hz: [2.5e9, 2.6e9],
            search_space: SearchSpace::default(),
            model: LumpedModel::default(),
        }
    }
}

pub fn design(spec: &DesignSpec) -> Result<TuneReport> {
    if spec.moisture_levels.is_empty() {
        return Err(Error::Config("moisture_levels is empty".into()));
    }
    tune_geometry(&spec.moisture_levels, spec.band_hz, &spec.search_space, &spec.model)
}

/// Which tag is deployed: a fixed geometry, or whatever the design spec
/// tunes to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TagSpec {
    pub geometry: Option<DgsGeometry>,
    pub design: DesignSpec,
}

impl TagSpec {
    pub fn resolve(&self) -> Result<DgsGeometry> {
        match self.geometry {
            Some(g) => {
                g.validate()?;
                Ok(g)
            }
            None => Ok(design(&self.design)?.geometry),
        }
    }

    pub fn model(&self) -> &LumpedModel {
        &self.design.model
    }

    /// Response with the tag in soil of moisture `pct` percent, or in air.
    pub fn response(&self, geom: &DgsGeometry, pct: Option<f64>) -> Result<FrequencyResponse> {
        tag_response(geom, pct.map(|p| p / 100.0), self.model(), &tag_grid())
    }
}

/// Seed of the scene in environment `env_index`.
pub fn scenario_seed(cfg: &ScenarioConfig, global: u64, env_index: usize) -> u64 {
    cfg.seed.unwrap_or_else(|| seed::derive_indexed(global, "scenario", env_index as u64))
}

/// Matched-filter weights toward the aligned angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Beams {
    pub tx: Vec<Complex64>,
    pub rx: Vec<Complex64>,
}

impl Beams {
    pub fn toward(scenario: &Scenario, aod_deg: f64, aoa_deg: f64) -> Self {
        Self {
            tx: beam_align::beamforming_weights(&scenario.arrays.tx, aod_deg),
            rx: beam_align::beamforming_weights(&scenario.arrays.rx, aoa_deg),
        }
    }
}

/// Raw CSI of `packets` packets, each spanning all channels.
pub fn capture(
    scenario: &Scenario,
    tag_fr: &FrequencyResponse,
    tx_weights: &[Complex64],
    packets: usize,
    capture_seed: u64,
) -> Result<Vec<Vec<CsiProfile>>> {
    (0..packets)
        .map(|p| {
            (1..=NUM_CHANNELS)
                .map(|ch| {
                    let s =
                        seed::derive_indexed(capture_seed, "csi", p as u64 * u64::from(NUM_CHANNELS) + u64::from(ch));
                    channel::synthesize_csi(
                        &scenario.paths,
                        tag_fr,
                        tx_weights,
                        &scenario.arrays,
                        ch,
                        scenario.noise_power,
                        s,
                    )
                })
                .collect()
        })
        .collect()
}

/// Per-channel amplitudes averaged over the packets of a capture.
pub fn channel_amplitudes(packets: &[Vec<CsiProfile>], rx_weights: &[Complex64]) -> Result<Vec<ChannelAmplitude>> {
    let first = packets.first().ok_or_else(|| Error::Shape("capture has no packets".into()))?;
    (0..first.len())
        .map(|c| {
            let per_channel: Vec<CsiProfile> = packets
                .iter()
                .map(|p| p.get(c).cloned().ok_or_else(|| Error::Shape("packets differ in channel count".into())))
                .collect::<Result<_>>()?;
            ChannelAmplitude::from_profiles(&per_channel, rx_weights)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetPlan {
    /// Moisture levels in percent.
    pub levels_pct: Vec<f64>,
    pub packets_per_level: usize,
    /// Packets averaged into the reference capture.
    pub reference_packets: usize,
    pub environments: Vec<Environment>,
    pub snr_db: f64,
    /// Drop receiver noise entirely.
    pub noiseless: bool,
    pub scenario: ScenarioConfig,
    pub tag: TagSpec,
    pub subcarriers_per_channel: usize,
    pub align: AlignConfig,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        Self {
            levels_pct: (0..10).map(|i| 20.0 * f64::from(i) / 9.0).collect(),
            packets_per_level: 100,
            reference_packets: 100,
            environments: vec![Environment::Open],
            snr_db: 25.0,
            noiseless: false,
            scenario: ScenarioConfig::default(),
            tag: TagSpec::default(),
            subcarriers_per_channel: DEFAULT_SUBCARRIERS_PER_CHANNEL,
            // Once the notch enters the band the wet tag can fall below
            // clutter and LoS sidelobes, which breaks the second-peak rule.
            align: AlignConfig { aod_mode: AodMode::Differential, ..AlignConfig::default() },
        }
    }
}

impl DatasetPlan {
    pub fn validate(&self) -> Result<()> {
        if self.levels_pct.is_empty() || self.environments.is_empty() {
            return Err(Error::Config("plan needs at least one level and one environment".into()));
        }
        if self.levels_pct.iter().any(|l| !(0.0..=100.0).contains(l)) {
            return Err(Error::Config("moisture levels must lie in [0, 100] percent".into()));
        }
        if self.packets_per_level == 0 || self.reference_packets == 0 {
            return Err(Error::Config("packet counts must be positive".into()));
        }
        Ok(())
    }

    pub fn scenario_for(&self, env_index: usize, global_seed: u64) -> Result<Scenario> {
        let cfg =
            ScenarioConfig { environment: self.environments[env_index], snr_db: self.snr_db, ..self.scenario.clone() };
        let s = make_scenario(&cfg, scenario_seed(&cfg, global_seed, env_index))?;
        Ok(if self.noiseless { s.with_noise_power(0.0) } else { s })
    }
}

/// A cell that produced no rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub environment: usize,
    pub level: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBuild {
    pub dataset: Dataset,
    pub geometry: DgsGeometry,
    pub skipped: Vec<SkippedCell>,
}

/// Rows of one (environment, level) cell: align on the live tag, capture a
/// reference with the same tag in air, then one feature row per live packet.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    plan: &DatasetPlan,
    scenario: &Scenario,
    geom: &DgsGeometry,
    reference_fr: &FrequencyResponse,
    env_index: usize,
    level_index: usize,
    cell_seed: u64,
) -> Result<Vec<Row>> {
    let pct = plan.levels_pct[level_index];
    let live_fr = plan.tag.response(geom, Some(pct))?;
    let run = beam_align::align(scenario, &live_fr, &plan.align, seed::derive(cell_seed, "align"))?;
    let beams = Beams::toward(scenario, run.result.aod_deg, run.result.aoa_deg);
    let reference =
        capture(scenario, reference_fr, &beams.tx, plan.reference_packets, seed::derive(cell_seed, "reference"))?;
    let reference = channel_amplitudes(&reference, &beams.rx)?;

    (0..plan.packets_per_level)
        .into_par_iter()
        .map(|p| {
            let s = seed::derive_indexed(cell_seed, "packet", p as u64);
            let live = capture(scenario, &live_fr, &beams.tx, 1, s)?;
            let fv =
                stitch_amplitudes(&channel_amplitudes(&live, &beams.rx)?, &reference, plan.subcarriers_per_channel)?;
            Ok(Row {
                features: fv.gain_db,
                label: pct,
                meta: RowMeta { environment: env_index as u32, level: level_index as u32, packet: p as u32, seed: s },
            })
        })
        .collect()
}

/// Feature grid of a plan, independent of any capture.
pub fn feature_freqs(subcarriers_per_channel: usize) -> Result<Vec<f64>> {
    let amps: Vec<ChannelAmplitude> = (1..=NUM_CHANNELS)
        .map(|ch| {
            let freqs = channel::subcarrier_freqs(ch)?;
            let amplitude = vec![1.0; freqs.len()];
            Ok(ChannelAmplitude { channel_index: ch, freqs, amplitude })
        })
        .collect::<Result<_>>()?;
    Ok(stitch_amplitudes(&amps, &amps, subcarriers_per_channel)?.freqs)
}

pub fn build_dataset(plan: &DatasetPlan, global_seed: u64) -> Result<DatasetBuild> {
    plan.validate()?;
    let geom = plan.tag.resolve()?;
    let reference_fr = plan.tag.response(&geom, None)?;
    let freqs = feature_freqs(plan.subcarriers_per_channel)?;

    let scenarios: Vec<Scenario> =
        (0..plan.environments.len()).map(|e| plan.scenario_for(e, global_seed)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> =
        (0..plan.environments.len()).flat_map(|e| (0..plan.levels_pct.len()).map(move |l| (e, l))).collect();
    let data_seed = seed::derive(global_seed, "dataset");
    let results: Vec<Result<Vec<Row>>> = cells
        .par_iter()
        .map(|&(e, l)| {
            let cell_seed = seed::derive_indexed(seed::derive_indexed(data_seed, "env", e as u64), "level", l as u64);
            run_cell(plan, &scenarios[e], &geom, &reference_fr, e, l, cell_seed)
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (&(e, l), r) in cells.iter().zip(results) {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(err @ (Error::TagNotDetected(_) | Error::TagNotResolved(_) | Error::DegenerateSubspace { .. })) => {
                skipped.push(SkippedCell { environment: e, level: l, reason: err.to_string() })
            }
            Err(err) => return Err(err),
        }
    }
    Ok(DatasetBuild { dataset: Dataset::new(freqs, rows)?, geometry: geom, skipped })
}

/// Labels must take at least two values for a regression to mean anything.
pub fn check_trainable(data: &Dataset) -> Result<()> {
    if data.len() < 2 || data.distinct_labels().len() < 2 {
        return Err(Error::DegenerateData(format!(
            "{} rows with {} distinct label(s)",
            data.len(),
            data.distinct_labels().len()
        )));
    }
    Ok(())
}

/// Train with the forest seed derived from `global_seed`.
pub fn train(data: &Dataset, hyperparams: &Hyperparams, global_seed: u64) -> Result<ForestModel> {
    check_trainable(data)?;
    let hp = Hyperparams { seed: seed::derive(global_seed, "forest"), ..*hyperparams };
    train_forest(data, &hp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E2eConfig {
    pub plan: DatasetPlan,
    pub train_fraction: f64,
    pub hyperparams: Hyperparams,
}

impl Default for E2eConfig {
    fn default() -> Self {
        Self { plan: DatasetPlan::default(), train_fraction: 0.5, hyperparams: Hyperparams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2eSummary {
    pub geometry: DgsGeometry,
    pub train_rows: usize,
    pub test_rows: usize,
    pub skipped_cells: Vec<SkippedCell>,
    pub mean_abs_error: f64,
    pub median_abs_error: f64,
    pub p90_abs_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct E2eOutcome {
    pub summary: E2eSummary,
    pub report: ErrorReport,
    pub model: ForestModel,
}

pub fn run_e2e(cfg: &E2eConfig, global_seed: u64) -> Result<E2eOutcome> {
    let build = build_dataset(&cfg.plan, global_seed)?;
    check_trainable(&build.dataset)?;
    let (train_set, test_set) = build.dataset.split(cfg.train_fraction, seed::derive(global_seed, "split"))?;
    let model = train(&train_set, &cfg.hyperparams, global_seed)?;
    let report = evaluate(&model, &test_set)?;
    Ok(E2eOutcome {
        summary: E2eSummary {
            geometry: build.geometry,
            train_rows: train_set.len(),
            test_rows: test_set.len(),
            skipped_cells: build.skipped,
            mean_abs_error: report.mean,
            median_abs_error: report.median,
            p90_abs_error: report.p90,
            max_abs_error: report.max,
        },
        report,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub e2e: E2eConfig,
    pub snr_db: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { e2e: E2eConfig::default(), snr_db: vec![0.0, 10.0, 20.0, 30.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub mean_abs_error: f64,
    pub median_abs_error: f64,
    pub p90_abs_error: f64,
    pub skipped_cells: usize,
}

/// Repeat the end-to-end run at each SNR with the same seed, so points differ
/// only in noise level.
pub fn run_sweep(cfg: &SweepConfig, global_seed: u64) -> Result<Vec<SweepPoint>> {
    if cfg.snr_db.is_empty() {
        return Err(Error::Config("snr_db list is empty".into()));
    }
    cfg.snr_db
        .iter()
        .map(|&snr| {
            let mut c = cfg.e2e.clone();
            c.plan.snr_db = snr;
            let o = run_e2e(&c, global_seed)?;
            Ok(SweepPoint {
                snr_db: snr,
                mean_abs_error: o.summary.mean_abs_error,
                median_abs_error: o.summary.median_abs_error,
                p90_abs_error: o.summary.p90_abs_error,
                skipped_cells: o.summary.skipped_cells.len(),
            })
        })
        .collect()
}

/// One scene, one moisture level: what `simulate` writes to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub scenario: ScenarioConfig,
    pub tag: TagSpec,
    pub moisture_pct: f64,
    pub packets: usize,
    pub reference_packets: usize,
    pub noiseless: bool,
    pub align: AlignConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            tag: TagSpec::default(),
            moisture_pct: 10.0,
            packets: 10,
            reference_packets: 100,
            noiseless: false,
            align: AlignConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub alignment: AlignmentRun,
    pub live: Vec<Vec<CsiProfile>>,
    pub reference: Vec<Vec<CsiProfile>>,
}

pub fn simulate(cfg: &SimulateConfig, global_seed: u64) -> Result<Simulation> {
    if cfg.packets == 0 || cfg.reference_packets == 0 {
        return Err(Error::Config("packet counts must be positive".into()));
    }
    let scenario = make_scenario(&cfg.scenario, scenario_seed(&cfg.scenario, global_seed, 0))?;
    let scenario = if cfg.noiseless { scenario.with_noise_power(0.0) } else { scenario };
    let geom = cfg.tag.resolve()?;
    let live_fr = cfg.tag.response(&geom, Some(cfg.moisture_pct))?;
    let reference_fr = cfg.tag.response(&geom, None)?;
    let alignment = beam_align::align(&scenario, &live_fr, &cfg.align, seed::derive(global_seed, "align"))?;
    let beams = Beams::toward(&scenario, alignment.result.aod_deg, alignment.result.aoa_deg);
    let live = capture(&scenario, &live_fr, &beams.tx, cfg.packets, seed::derive(global_seed, "live"))?;
    let reference =
        capture(&scenario, &reference_fr, &beams.tx, cfg.reference_packets, seed::derive(global_seed, "reference"))?;
    Ok(Simulation { alignment, live, reference })
}

/// Feature vector of a live capture against a reference, packets averaged.
pub fn features_from_captures(
    live: &[Vec<CsiProfile>],
    reference: &[Vec<CsiProfile>],
    rx_weights: &[Complex64],
    subcarriers_per_channel: usize,
) -> Result<FeatureVector> {
    stitch_amplitudes(
        &channel_amplitudes(live, rx_weights)?,
        &channel_amplitudes(reference, rx_weights)?,
        subcarriers_per_channel,
    )
}
