//! Passive beam alignment toward the tag.
//!
//! The transmitter sweeps a beam across `[0°, 180°]` while the receiver
//! records packet power, giving a spatial power profile whose largest peak
//! points at the receiver and whose second-largest peak points at the tag.
//! With the transmit beam parked on the tag, the receiver runs MUSIC over its
//! array to find the tag's angle of arrival.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, steering_vector, ArrayGeometry, Scenario, F_REF_HZ, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::resonator::FrequencyResponse;
use crate::seed;

/// Received power versus transmit beam angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialProfile {
    pub angles_deg: Vec<f64>,
    pub power_db: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub aod_deg: f64,
    pub aoa_deg: f64,
    /// Smoothed profile value at the AoD peak over the profile median, dB.
    pub confidence_db: f64,
}

/// How the AoD is read off the beam-scan profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AodMode {
    /// Angle of the second-largest peak.
    #[default]
    SecondPeak,
    /// Angle of the largest increase over a tag-free scan.
    Differential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub scan_step_deg: f64,
    pub packets_per_angle: usize,
    /// Channel the beam scan transmits on.
    pub scan_channel: u8,
    pub aod_mode: AodMode,
    /// Packets, each spanning all 13 channels, used as MUSIC snapshots.
    pub aoa_packets: usize,
    pub num_sources: usize,
    pub aoa_grid_step_deg: f64,
    /// A with-tag MUSIC peak this close to a tag-free peak is not the tag.
    pub match_tolerance_deg: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            scan_step_deg: 1.0,
            packets_per_angle: 2,
            scan_channel: 1,
            aod_mode: AodMode::SecondPeak,
            aoa_packets: 2,
            num_sources: 2,
            aoa_grid_step_deg: 0.5,
            match_tolerance_deg: 3.0,
        }
    }
}

/// Minimum margin of the tag peak over the tag-free MUSIC spectrum.
const MUSIC_DISTINCT_DB: f64 = 3.0;

/// Conjugate steering toward `angle_deg`, scaled to unit total power.
pub fn beamforming_weights(array: &ArrayGeometry, angle_deg: f64) -> Vec<Complex64> {
    let norm = (array.num_elements as f64).sqrt();
    steering_vector(array, angle_deg, F_REF_HZ).into_iter().map(|a| a.conj() / norm).collect()
}

/// Conjugate steering with unit-modulus entries (every element at full
/// power), as used during the beam scan.
pub fn scan_weights(array: &ArrayGeometry, angle_deg: f64) -> Vec<Complex64> {
    steering_vector(array, angle_deg, F_REF_HZ).into_iter().map(|a| a.conj()).collect()
}

/// Uniform angle grid over `[0, 180]`; `step_deg` must divide 180.
pub fn angle_grid(step_deg: f64) -> Result<Vec<f64>> {
    if !(step_deg > 0.0) {
        return Err(Error::Domain(format!("angle step must be positive, got {step_deg}")));
    }
    let n = (180.0 / step_deg).round();
    if (n * step_deg - 180.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("angle step {step_deg}° does not divide 180°")));
    }
    Ok((0..=n as usize).map(|i| i as f64 * step_deg).collect())
}

pub fn beam_scan_profile(
    scenario: &Scenario,
    tag_fr: &FrequencyResponse,
    config: &AlignConfig,
    seed: u64,
) -> Result<SpatialProfile> {
    let angles = angle_grid(config.scan_step_deg)?;
    let packets = config.packets_per_angle.max(1);
    let power_db = angles
        .par_iter()
        .enumerate()
        .map(|(i, &angle)| {
            let w = scan_weights(&scenario.arrays.tx, angle);
            let mut total = 0.0;
            for p in 0..packets {
                let s = seed::derive_indexed(seed, "scan", (i * packets + p) as u64);
                let csi = channel::synthesize_csi(
                    &scenario.paths,
                    tag_fr,
                    &w,
                    &scenario.arrays,
                    config.scan_channel,
                    scenario.noise_power,
                    s,
                )?;
                total += csi.mean_power();
            }
            Ok(10.0 * (total / packets as f64).log10())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpatialProfile { angles_deg: angles, power_db })
}

/// Three-point moving average; the end points average their two samples.
pub fn smooth3(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Indices of strict local maxima. A run of equal values counts as one peak,
/// reported at its centre, when both neighbours of the run are lower; an end
/// point only needs its single neighbour to be lower.
pub fn find_peaks(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    if n < 2 {
        return peaks;
    }
    let mut s = 0;
    while s < n {
        let mut e = s;
        while e + 1 < n && x[e + 1] == x[s] {
            e += 1;
        }
        let left_ok = s == 0 || x[s - 1] < x[s];
        let right_ok = e == n - 1 || x[e + 1] < x[e];
        if left_ok && right_ok && !(s == 0 && e == n - 1) {
            peaks.push((s + e) / 2);
        }
        s = e + 1;
    }
    peaks
}

fn to_linear(db: &[f64]) -> Vec<f64> {
    db.iter().map(|d| 10f64.powf(d / 10.0)).collect()
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// AoD and a peak-to-median confidence in dB.
pub fn estimate_aod_with_confidence(
    with_tag: &SpatialProfile,
    without_tag: Option<&SpatialProfile>,
) -> Result<(f64, f64)> {
    let n = with_tag.angles_deg.len();
    if n < 3 || with_tag.power_db.len() != n {
        return Err(Error::Shape("spatial profile needs at least three angles".into()));
    }
    let smoothed = smooth3(&to_linear(&with_tag.power_db));
    let smoothed_db: Vec<f64> = smoothed.iter().map(|p| 10.0 * p.log10()).collect();
    let med = median(&smoothed_db);

    let idx = match without_tag {
        Some(reference) => {
            if reference.angles_deg != with_tag.angles_deg {
                return Err(Error::Shape("profiles are on different angle grids".into()));
            }
            let diff: Vec<f64> =
                to_linear(&with_tag.power_db).iter().zip(to_linear(&reference.power_db)).map(|(a, b)| a - b).collect();
            let diff = smooth3(&diff);
            let (i, best) = diff
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
            if !(best > 0.0) {
                return Err(Error::TagNotDetected("no power increase over the tag-free scan".into()));
            }
            i
        }
        None => {
            let mut peaks = find_peaks(&smoothed);
            if peaks.len() < 2 {
                return Err(Error::TagNotDetected(format!("{} peak(s) in the beam-scan profile", peaks.len())));
            }
            // Stable sort keeps the lower angle first on exact ties.
            peaks.sort_by(|&a, &b| smoothed[b].total_cmp(&smoothed[a]));
            peaks[1]
        }
    };
    Ok((with_tag.angles_deg[idx], smoothed_db[idx] - med))
}

pub fn estimate_aod(with_tag: &SpatialProfile, without_tag: Option<&SpatialProfile>) -> Result<f64> {
    estimate_aod_with_confidence(with_tag, without_tag).map(|(a, _)| a)
}

/// MUSIC pseudo-spectrum `1 / (aᴴ E_n E_nᴴ a)` over `angle_grid`.
///
/// `snapshots` is element-major: row `m` holds every time sample of element
/// `m`. Steering vectors are evaluated at [`F_REF_HZ`].
pub fn music_spectrum(
    snapshots: &[Vec<Complex64>],
    num_sources: usize,
    angle_grid: &[f64],
    array: &ArrayGeometry,
) -> Result<Vec<f64>> {
    let m = snapshots.len();
    if m != array.num_elements {
        return Err(Error::Shape(format!("{m} snapshot rows for {} elements", array.num_elements)));
    }
    let k = snapshots[0].len();
    if snapshots.iter().any(|row| row.len() != k) {
        return Err(Error::Shape("snapshot rows differ in length".into()));
    }
    if num_sources == 0 || num_sources >= m {
        return Err(Error::Domain(format!("need 1 ≤ sources < {m} elements, got {num_sources}")));
    }
    if k < num_sources {
        return Err(Error::Domain(format!("{k} snapshots for {num_sources} sources")));
    }

    let mut cov = CMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let s: Complex64 = snapshots[i].iter().zip(&snapshots[j]).map(|(a, b)| a * b.conj()).sum();
            cov[(i, j)] = s;
            cov[(j, i)] = s.conj();
        }
    }
    cov.scale(1.0 / k as f64);

    let eig = hermitian_eigen(&cov);
    let lambda_max = eig.values[m - 1];
    let rank = if lambda_max > 0.0 { eig.values.iter().filter(|&&v| v > lambda_max * 1e-10).count() } else { 0 };
    if num_sources > rank {
        return Err(Error::DegenerateSubspace { num_sources, rank });
    }
    let noise: Vec<Vec<Complex64>> = (0..m - num_sources).map(|c| eig.vectors.column(c)).collect();

    Ok(angle_grid
        .iter()
        .map(|&theta| {
            let a = steering_vector(array, theta, F_REF_HZ);
            let denom: f64 = noise
                .iter()
                .map(|e| e.iter().zip(&a).map(|(ei, ai)| ei.conj() * ai).sum::<Complex64>().norm_sqr())
                .sum();
            1.0 / denom.max(1e-300)
        })
        .collect())
}

/// Picks the tag's MUSIC peak.
///
/// With a tag-free spectrum, the tag is the highest with-tag peak that has no
/// tag-free peak within `tolerance_deg` and rises at least 3 dB above the
/// tag-free spectrum. Without one, it is the peak nearest `predicted_deg`.
pub fn select_tag_peak(
    angles: &[f64],
    with_db: &[f64],
    without_db: Option<&[f64]>,
    predicted_deg: Option<f64>,
    tolerance_deg: f64,
) -> Result<f64> {
    let peaks = find_peaks(with_db);
    match (without_db, predicted_deg) {
        (Some(reference), _) => {
            let ref_peaks: Vec<f64> = find_peaks(reference).into_iter().map(|i| angles[i]).collect();
            peaks
                .into_iter()
                .filter(|&i| ref_peaks.iter().all(|r| (r - angles[i]).abs() > tolerance_deg))
                .filter(|&i| with_db[i] - reference[i] >= MUSIC_DISTINCT_DB)
                .max_by(|&a, &b| with_db[a].total_cmp(&with_db[b]))
                .map(|i| angles[i])
                .ok_or_else(|| Error::TagNotResolved("no MUSIC peak absent from the tag-free spectrum".into()))
        }
        (None, Some(pred)) => peaks
            .into_iter()
            .min_by(|&a, &b| (angles[a] - pred).abs().total_cmp(&(angles[b] - pred).abs()))
            .map(|i| angles[i])
            .ok_or_else(|| Error::TagNotResolved("MUSIC spectrum has no peak".into())),
        (None, None) => Err(Error::TagNotResolved("no reference spectrum or predicted angle".into())),
    }
}

/// MUSIC spectra (dB) behind an AoA estimate, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoaEstimate {
    pub aoa_deg: f64,
    pub angles_deg: Vec<f64>,
    pub with_tag_db: Vec<f64>,
    pub without_tag_db: Vec<f64>,
}

fn snapshots_for(
    scenario: &Scenario,
    tag_fr: &FrequencyResponse,
    tx_weights: &[Complex64],
    packets: usize,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>> {
    let m = scenario.arrays.rx.num_elements;
    let mut rows = vec![Vec::new(); m];
    for p in 0..packets {
        for ch in 1..=NUM_CHANNELS {
            let s = seed::derive_indexed(seed, "aoa", p as u64 * u64::from(NUM_CHANNELS) + u64::from(ch));
            let csi = channel::synthesize_csi(
                &scenario.paths,
                tag_fr,
                tx_weights,
                &scenario.arrays,
                ch,
                scenario.noise_power,
                s,
            )?;
            for (row, h) in rows.iter_mut().zip(csi.h) {
                row.extend(h);
            }
        }
    }
    Ok(rows)
}

/// AoA of the tag with the transmit beam parked at `aod_deg`.
///
/// Every subcarrier of every channel is one snapshot; the spread of
/// frequencies decorrelates the LoS and tag paths, which carry the same
/// symbols.
pub fn estimate_aoa(
    scenario: &Scenario,
    tag_fr: &FrequencyResponse,
    aod_deg: f64,
    config: &AlignConfig,
    seed: u64,
) -> Result<AoaEstimate> {
    if !(0.0..=180.0).contains(&aod_deg) {
        return Err(Error::Domain(format!("AoD {aod_deg}° outside [0, 180]")));
    }
    let w = beamforming_weights(&scenario.arrays.tx, aod_deg);
    let packets = config.aoa_packets.max(1);
    let angles = angle_grid(config.aoa_grid_step_deg)?;
    let to_db = |p: Vec<f64>| p.into_iter().map(|v| 10.0 * v.log10()).collect::<Vec<_>>();

    let with = snapshots_for(scenario, tag_fr, &w, packets, seed::derive(seed, "with_tag"))?;
    let with_db = to_db(music_spectrum(&with, config.num_sources, &angles, &scenario.arrays.rx)?);
    let without = snapshots_for(&scenario.without_tag(), tag_fr, &w, packets, seed::derive(seed, "without_tag"))?;
    let without_db = to_db(music_spectrum(&without, config.num_sources, &angles, &scenario.arrays.rx)?);

    let aoa = select_tag_peak(&angles, &with_db, Some(&without_db), None, config.match_tolerance_deg)?;
    Ok(AoaEstimate { aoa_deg: aoa, angles_deg: angles, with_tag_db: with_db, without_tag_db: without_db })
}

/// Everything `align` produces, including the curves behind the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRun {
    pub result: AlignmentResult,
    pub profile: SpatialProfile,
    pub profile_without_tag: Option<SpatialProfile>,
    pub aoa: AoaEstimate,
}

/// Beam scan, AoD extraction and MUSIC AoA in sequence.
pub fn align(scenario: &Scenario, tag_fr: &FrequencyResponse, config: &AlignConfig, seed: u64) -> Result<AlignmentRun> {
    let profile = beam_scan_profile(scenario, tag_fr, config, seed::derive(seed, "scan_with_tag"))?;
    let profile_without_tag = match config.aod_mode {
        AodMode::SecondPeak => None,
        AodMode::Differential => {
            Some(beam_scan_profile(&scenario.without_tag(), tag_fr, config, seed::derive(seed, "scan_without_tag"))?)
        }
    };
    let (aod, confidence) = estimate_aod_with_confidence(&profile, profile_without_tag.as_ref())?;
    let aoa = estimate_aoa(scenario, tag_fr, aod, config, seed::derive(seed, "aoa"))?;
    Ok(AlignmentRun {
        result: AlignmentResult { aod_deg: aod, aoa_deg: aoa.aoa_deg, confidence_db: confidence },
        profile,
        profile_without_tag,
        aoa,
    })
}
