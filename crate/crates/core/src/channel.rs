//! Plan-view multipath scene and per-subcarrier CSI synthesis.
//!
//! Both transceivers are uniform linear arrays. Angles are measured from the
//! array axis, so 90° is broadside. A propagation path contributes
//!
//! ```text
//! h_m(f) = a_rx(θ_aoa, f)_m · g(f) · AF_tx(θ_aod, f) · e^{−j2πfτ}
//! ```
//!
//! where `AF_tx(θ, f) = Σ_n w_n a_tx(θ, f)_n` is the field the transmit
//! weights radiate toward `θ`, and `g(f)` is the path gain, additionally
//! scaled by the tag's frequency response for the tag reflection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resonator::FrequencyResponse;
use crate::seed;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Frequency at which element spacing is expressed in wavelengths.
pub const F_REF_HZ: f64 = 2.44e9;
pub const NUM_CHANNELS: u8 = 13;
pub const SUBCARRIERS_PER_CHANNEL: usize = 64;
pub const SUBCARRIER_SPACING_HZ: f64 = 312_500.0;

/// Centre frequency of a 2.4 GHz Wi-Fi channel (1–13).
pub fn channel_center_hz(channel_index: u8) -> Result<f64> {
    if !(1..=NUM_CHANNELS).contains(&channel_index) {
        return Err(Error::Domain(format!("channel {channel_index} outside 1..=13")));
    }
    Ok(2.412e9 + 5e6 * f64::from(channel_index - 1))
}

/// Subcarrier frequencies of a channel, ascending. Subcarrier 32 sits on the
/// channel centre.
pub fn subcarrier_freqs(channel_index: u8) -> Result<Vec<f64>> {
    let centre = channel_center_hz(channel_index)?;
    Ok((0..SUBCARRIERS_PER_CHANNEL).map(|i| centre + (i as f64 - 32.0) * SUBCARRIER_SPACING_HZ).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    /// Element spacing in wavelengths at [`F_REF_HZ`].
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing: f64) -> Result<Self> {
        let a = Self { num_elements, spacing };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements == 0 || !(self.spacing > 0.0) {
            return Err(Error::Domain(format!("invalid array {self:?}")));
        }
        Ok(())
    }
}

/// Element `n` gets `exp(−j 2π d (f/f_ref) n cos θ)`; `angle_deg` is expected
/// in `[0, 180]`.
pub fn steering_vector(array: &ArrayGeometry, angle_deg: f64, freq: f64) -> Vec<Complex64> {
    let k = -2.0 * PI * array.spacing * (freq / F_REF_HZ) * angle_deg.to_radians().cos();
    (0..array.num_elements).map(|n| Complex64::from_polar(1.0, k * n as f64)).collect()
}

/// Field radiated toward `angle_deg` by an array driven with `weights`.
pub fn array_factor(array: &ArrayGeometry, weights: &[Complex64], angle_deg: f64, freq: f64) -> Complex64 {
    steering_vector(array, angle_deg, freq).iter().zip(weights).map(|(a, w)| a * w).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    LoS,
    TagReflection,
    Clutter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub kind: PathKind,
    pub aod_deg: f64,
    pub aoa_deg: f64,
    pub gain: Complex64,
    pub delay_s: f64,
}

impl Path {
    fn validate(&self) -> Result<()> {
        let ok_angle = |a: f64| (0.0..=180.0).contains(&a);
        if !ok_angle(self.aod_deg) || !ok_angle(self.aoa_deg) {
            return Err(Error::Domain(format!("path angles outside [0, 180]: {self:?}")));
        }
        if !(self.gain.norm() > 0.0) || !self.delay_s.is_finite() {
            return Err(Error::Domain(format!("path needs non-zero gain and finite delay: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrays {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
}

/// CSI of one channel: `h[m][k]` for Rx element `m` and subcarrier `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiProfile {
    pub channel_index: u8,
    pub subcarrier_freqs: Vec<f64>,
    pub h: Vec<Vec<Complex64>>,
}

impl CsiProfile {
    pub fn num_rx(&self) -> usize {
        self.h.len()
    }

    /// Single stream after combining the Rx elements with `weights`
    /// (`Σ_m w_m h_m`).
    pub fn combine(&self, weights: &[Complex64]) -> Result<Vec<Complex64>> {
        if weights.len() != self.h.len() {
            return Err(Error::Shape(format!("{} combining weights for {} Rx elements", weights.len(), self.h.len())));
        }
        Ok((0..self.subcarrier_freqs.len())
            .map(|k| self.h.iter().zip(weights).map(|(row, w)| w * row[k]).sum())
            .collect())
    }

    /// Mean `|h|²` over elements and subcarriers.
    pub fn mean_power(&self) -> f64 {
        let n = (self.h.len() * self.subcarrier_freqs.len()) as f64;
        self.h.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / n
    }
}

/// Per-subcarrier CSI of one channel for the given paths.
///
/// Noise is circular complex Gaussian with total power `noise_power` per
/// element and subcarrier, drawn from a generator seeded with `rng_seed`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_csi(
    paths: &[Path],
    tag_fr: &FrequencyResponse,
    tx_weights: &[Complex64],
    arrays: &Arrays,
    channel_index: u8,
    noise_power: f64,
    rng_seed: u64,
) -> Result<CsiProfile> {
    arrays.tx.validate()?;
    arrays.rx.validate()?;
    if tx_weights.len() != arrays.tx.num_elements {
        return Err(Error::Shape(format!("{} Tx weights for {} elements", tx_weights.len(), arrays.tx.num_elements)));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::Domain(format!("negative noise power {noise_power}")));
    }
    for p in paths {
        p.validate()?;
    }
    let freqs = subcarrier_freqs(channel_index)?;
    let m_rx = arrays.rx.num_elements;
    let mut h = vec![vec![Complex64::new(0.0, 0.0); freqs.len()]; m_rx];

    for path in paths {
        for (k, &f) in freqs.iter().enumerate() {
            let mut g = path.gain;
            if path.kind == PathKind::TagReflection {
                g *= 10f64.powf(tag_fr.gain_at(f)? / 20.0);
            }
            let af = array_factor(&arrays.tx, tx_weights, path.aod_deg, f);
            let phase = Complex64::from_polar(1.0, -2.0 * PI * f * path.delay_s);
            let common = g * af * phase;
            for (m, a) in steering_vector(&arrays.rx, path.aoa_deg, f).into_iter().enumerate() {
                h[m][k] += a * common;
            }
        }
    }

    if noise_power > 0.0 {
        let mut rng = seed::rng(rng_seed);
        let sigma = (noise_power / 2.0).sqrt();
        for row in &mut h {
            for z in row.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z += Complex64::new(sigma * re, sigma * im);
            }
        }
    }

    Ok(CsiProfile { channel_index, subcarrier_freqs: freqs, h })
}

/// Clutter and noise presets. All are synthetic analogs, not calibrated
/// reproductions of a measured room.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    /// LoS and tag only.
    None,
    #[default]
    Open,
    Office,
    /// Office clutter with noise raised to stand in for people moving.
    Motion,
}

impl Environment {
    pub fn clutter_paths(self) -> usize {
        match self {
            Environment::None => 0,
            Environment::Open => 2,
            Environment::Office | Environment::Motion => 6,
        }
    }

    pub fn extra_noise_db(self) -> f64 {
        match self {
            Environment::Motion => 10.0,
            _ => 0.0,
        }
    }
}

/// Mean clutter path power relative to the LoS path.
pub const CLUTTER_RELATIVE_POWER_DB: f64 = -10.0;
/// Clutter excess delay is uniform in `[0, CLUTTER_MAX_EXCESS_DELAY_S]`.
pub const CLUTTER_MAX_EXCESS_DELAY_S: f64 = 200e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Positions in metres.
    pub tx_pos: [f64; 2],
    pub rx_pos: [f64; 2],
    pub tag_pos: Option<[f64; 2]>,
    pub tx_elements: usize,
    pub rx_elements: usize,
    /// Direction of each array's axis in the plane, degrees.
    pub tx_axis_deg: f64,
    pub rx_axis_deg: f64,
    pub element_spacing: f64,
    pub environment: Environment,
    /// Overrides the preset's clutter path count.
    pub clutter: Option<usize>,
    pub snr_db: f64,
    pub tag_gain_dbi: f64,
    /// Scenario seed; derived from the global seed when absent.
    pub seed: Option<u64>,
}

fn polar(r: f64, deg: f64) -> [f64; 2] {
    [r * deg.to_radians().cos(), r * deg.to_radians().sin()]
}

impl Default for ScenarioConfig {
    /// Tx and Rx 4 m apart with Rx 40° off the Tx axis, the tag 2 m from Tx
    /// at 102°, and the Rx array turned so the tag arrives at 60°.
    fn default() -> Self {
        let tx_pos = [0.0, 0.0];
        let rx_pos = polar(4.0, 40.0);
        let tag_pos = polar(2.0, 102.0);
        let to_tag = (tag_pos[1] - rx_pos[1]).atan2(tag_pos[0] - rx_pos[0]).to_degrees();
        Self {
            tx_pos,
            rx_pos,
            tag_pos: Some(tag_pos),
            tx_elements: 8,
            rx_elements: 4,
            tx_axis_deg: 0.0,
            rx_axis_deg: to_tag - 60.0,
            element_spacing: 0.5,
            environment: Environment::Open,
            clutter: None,
            snr_db: 20.0,
            tag_gain_dbi: 16.8,
            seed: None,
        }
    }
}

/// A realised scene: arrays, propagation paths and the noise power that
/// realises the configured SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub arrays: Arrays,
    pub paths: Vec<Path>,
    pub noise_power: f64,
}

impl Scenario {
    pub fn tag_path(&self) -> Option<&Path> {
        self.paths.iter().find(|p| p.kind == PathKind::TagReflection)
    }

    pub fn los_path(&self) -> Option<&Path> {
        self.paths.iter().find(|p| p.kind == PathKind::LoS)
    }

    /// Same scene with the tag removed.
    pub fn without_tag(&self) -> Scenario {
        Scenario {
            arrays: self.arrays,
            paths: self.paths.iter().filter(|p| p.kind != PathKind::TagReflection).copied().collect(),
            noise_power: self.noise_power,
        }
    }

    /// Every path gain multiplied by `factor`; noise is left alone.
    pub fn scaled(&self, factor: f64) -> Scenario {
        Scenario {
            arrays: self.arrays,
            paths: self.paths.iter().map(|p| Path { gain: p.gain * factor, ..*p }).collect(),
            noise_power: self.noise_power,
        }
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Scenario {
        Scenario { noise_power, ..self.clone() }
    }
}

/// Angle between an array axis and the direction to `target`, degrees in
/// `[0, 180]`.
fn angle_from_axis(origin: [f64; 2], axis_deg: f64, target: [f64; 2]) -> Result<(f64, f64)> {
    let dx = target[0] - origin[0];
    let dy = target[1] - origin[1];
    let d = dx.hypot(dy);
    if !(d > 1e-9) {
        return Err(Error::Geometry(format!("coincident positions {origin:?} and {target:?}")));
    }
    let (s, c) = axis_deg.to_radians().sin_cos();
    let cosang = ((dx * c + dy * s) / d).clamp(-1.0, 1.0);
    Ok((cosang.acos().to_degrees(), d))
}

/// Build the path list for a scene.
///
/// LoS amplitude falls as `1/d`; the tag path as `G/(d_tx·d_rx)` with `G` the
/// tag antenna gain. Clutter paths are drawn from a generator seeded with
/// `seed`.
pub fn make_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    let arrays = Arrays {
        tx: ArrayGeometry::new(config.tx_elements, config.element_spacing)?,
        rx: ArrayGeometry::new(config.rx_elements, config.element_spacing)?,
    };
    let (los_aod, d) = angle_from_axis(config.tx_pos, config.tx_axis_deg, config.rx_pos)?;
    let (los_aoa, _) = angle_from_axis(config.rx_pos, config.rx_axis_deg, config.tx_pos)?;
    let los_gain = 1.0 / d;
    let los_delay = d / SPEED_OF_LIGHT;
    let mut paths = vec![Path {
        kind: PathKind::LoS,
        aod_deg: los_aod,
        aoa_deg: los_aoa,
        gain: Complex64::new(los_gain, 0.0),
        delay_s: los_delay,
    }];

    if let Some(tag) = config.tag_pos {
        let (aod, d_tx) = angle_from_axis(config.tx_pos, config.tx_axis_deg, tag)?;
        let (aoa, d_rx) = angle_from_axis(config.rx_pos, config.rx_axis_deg, tag)?;
        let g = 10f64.powf(config.tag_gain_dbi / 20.0) / (d_tx * d_rx);
        paths.push(Path {
            kind: PathKind::TagReflection,
            aod_deg: aod,
            aoa_deg: aoa,
            gain: Complex64::new(g, 0.0),
            delay_s: (d_tx + d_rx) / SPEED_OF_LIGHT,
        });
    }

    let n_clutter = config.clutter.unwrap_or_else(|| config.environment.clutter_paths());
    let mut rng = seed::rng(seed::derive(seed, "clutter"));
    let clutter_sigma = los_gain * 10f64.powf(CLUTTER_RELATIVE_POWER_DB / 20.0) / 2f64.sqrt();
    for _ in 0..n_clutter {
        let aod = rng.random_range(0.0..=180.0);
        let aoa = rng.random_range(0.0..=180.0);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let excess = rng.random_range(0.0..=CLUTTER_MAX_EXCESS_DELAY_S);
        let gain = Complex64::new(clutter_sigma * re, clutter_sigma * im);
        if gain.norm() == 0.0 {
            continue;
        }
        paths.push(Path { kind: PathKind::Clutter, aod_deg: aod, aoa_deg: aoa, gain, delay_s: los_delay + excess });
    }

    let noise_db = -config.snr_db + config.environment.extra_noise_db();
    let noise_power = los_gain * los_gain * 10f64.powf(noise_db / 10.0);
    Ok(Scenario { arrays, paths, noise_power })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat() -> FrequencyResponse {
        FrequencyResponse::flat(2.3e9, 2.6e9).unwrap()
    }

    fn ones(n: usize) -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0); n]
    }

    #[test]
    fn channel_plan() {
        assert_eq!(channel_center_hz(1).unwrap(), 2.412e9);
        assert_eq!(channel_center_hz(13).unwrap(), 2.472e9);
        assert!(channel_center_hz(0).is_err());
        assert!(channel_center_hz(14).is_err());
        let f = subcarrier_freqs(7).unwrap();
        assert_eq!(f.len(), 64);
        assert_eq!(f[32], 2.442e9);
        assert_eq!(f[0], 2.432e9);
        assert!(f.windows(2).all(|w| w[1] - w[0] == SUBCARRIER_SPACING_HZ));
    }

    #[test]
    fn steering_broadside_and_endfire() {
        let arr = ArrayGeometry::new(8, 0.5).unwrap();
        for z in steering_vector(&arr, 90.0, 2.44e9) {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        for (n, z) in steering_vector(&arr, 0.0, F_REF_HZ).into_iter().enumerate() {
            let expected = Complex64::from_polar(1.0, -PI * n as f64);
            assert!((z - expected).norm() < 1e-12);
        }
        for angle in [0.0, 33.0, 90.0, 151.5, 180.0] {
            let a = steering_vector(&arr, angle, 2.41e9);
            let ip: Complex64 = a.iter().map(|z| z.conj() * z).sum();
            assert_relative_eq!(ip.re, 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_los_path_is_flat_in_magnitude() {
        let arrays = Arrays { tx: ArrayGeometry::new(8, 0.5).unwrap(), rx: ArrayGeometry::new(4, 0.5).unwrap() };
        let p =
            Path { kind: PathKind::LoS, aod_deg: 90.0, aoa_deg: 90.0, gain: Complex64::new(0.3, 0.0), delay_s: 20e-9 };
        let csi = synthesize_csi(&[p], &flat(), &ones(8), &arrays, 5, 0.0, 1).unwrap();
        let m0 = csi.h[0][0].norm();
        for row in &csi.h {
            for z in row {
                assert_relative_eq!(z.norm(), m0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_noise() {
        let s = make_scenario(&ScenarioConfig::default(), 3).unwrap();
        let w = ones(8);
        let fr = flat();
        let a = synthesize_csi(&s.paths, &fr, &w, &s.arrays, 3, s.noise_power, 42).unwrap();
        let b = synthesize_csi(&s.paths, &fr, &w, &s.arrays, 3, s.noise_power, 42).unwrap();
        let c = synthesize_csi(&s.paths, &fr, &w, &s.arrays, 3, s.noise_power, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn synthesis_errors() {
        let s = make_scenario(&ScenarioConfig::default(), 3).unwrap();
        let fr = flat();
        assert!(matches!(synthesize_csi(&s.paths, &fr, &ones(7), &s.arrays, 1, 0.0, 0), Err(Error::Shape(_))));
        let narrow = FrequencyResponse::flat(2.40e9, 2.42e9).unwrap();
        assert!(synthesize_csi(&s.paths, &narrow, &ones(8), &s.arrays, 13, 0.0, 0).is_err());
        assert!(synthesize_csi(&s.paths, &fr, &ones(8), &s.arrays, 14, 0.0, 0).is_err());
    }

    #[test]
    fn default_scene_geometry() {
        let cfg = ScenarioConfig::default();
        let s = make_scenario(&cfg, 0).unwrap();
        let los = s.los_path().unwrap();
        let tag = s.tag_path().unwrap();
        assert_relative_eq!(los.aod_deg, 40.0, epsilon = 1e-9);
        assert_relative_eq!(tag.aod_deg, 102.0, epsilon = 1e-9);
        assert_relative_eq!(tag.aoa_deg, 60.0, epsilon = 1e-9);
        assert_eq!(s.paths.len(), 2 + Environment::Open.clutter_paths());
        assert_relative_eq!(s.noise_power, los.gain.norm_sqr() / 100.0, max_relative = 1e-12);
    }

    #[test]
    fn tag_at_midpoint() {
        let cfg = ScenarioConfig {
            tx_pos: [0.0, 0.0],
            rx_pos: [4.0, 0.0],
            tag_pos: Some([2.0, 0.0]),
            tx_axis_deg: 90.0,
            rx_axis_deg: 90.0,
            environment: Environment::None,
            ..ScenarioConfig::default()
        };
        let s = make_scenario(&cfg, 0).unwrap();
        assert_eq!(s.paths.len(), 2);
        let tag = s.tag_path().unwrap();
        // Toward +x from a y-pointing axis.
        assert_relative_eq!(tag.aod_deg, 90.0, epsilon = 1e-12);
        assert_relative_eq!(tag.delay_s, 4.0 / SPEED_OF_LIGHT, max_relative = 1e-15);
        assert_relative_eq!(s.los_path().unwrap().delay_s, tag.delay_s, max_relative = 1e-15);
    }

    #[test]
    fn coincident_positions_rejected() {
        let cfg = ScenarioConfig { tag_pos: Some([0.0, 0.0]), ..ScenarioConfig::default() };
        assert!(matches!(make_scenario(&cfg, 0), Err(Error::Geometry(_))));
    }

    #[test]
    fn office_preset_is_reproducible() {
        let cfg = ScenarioConfig { environment: Environment::Office, ..ScenarioConfig::default() };
        let a = make_scenario(&cfg, 11).unwrap();
        let b = make_scenario(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.paths.len(), 8);
        let los = a.los_path().unwrap();
        for p in a.paths.iter().filter(|p| p.kind == PathKind::Clutter) {
            assert!(p.delay_s >= los.delay_s && p.delay_s <= los.delay_s + CLUTTER_MAX_EXCESS_DELAY_S);
        }
        assert_ne!(a, make_scenario(&cfg, 12).unwrap());
    }
}
