//! Lumped-element model of the defected-ground-structure (DGS) bandstop
//! resonator, its frequency response under soil loading, and the slot
//! geometry search.
//!
//! The slot is a parallel `L_C ‖ C_C` tank in series with the line-to-ground
//! capacitance `C_1`:
//!
//! ```text
//! Z_R(ω) = r_loss + 1 / (jωC_C + 1/(jωL_C)) + 1 / (jωC_1)
//! ```
//!
//! `Z_R` vanishes at `f_c = 1 / (2π √(L_C (C_1 + C_C)))`, which is the notch
//! centre of the through response. Wetter soil raises `C_C` and pulls `f_c`
//! down.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::soil;

/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Relative permittivity of the FR4 substrate.
pub const EPSILON_FR4: f64 = 4.4;

pub const GAIN_FLOOR_DB: f64 = -80.0;
pub const GAIN_CEILING_DB: f64 = 20.0;

/// Slot geometry of the DGS resonator. Lengths in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgsGeometry {
    pub w_mm: f64,
    pub a_mm: f64,
    #[serde(default = "default_substrate_thickness")]
    pub substrate_thickness_mm: f64,
    #[serde(default = "default_line_width")]
    pub line_width_mm: f64,
}

fn default_substrate_thickness() -> f64 {
    1.2
}

fn default_line_width() -> f64 {
    2.24
}

impl DgsGeometry {
    pub fn new(w_mm: f64, a_mm: f64) -> Result<Self> {
        let g = Self {
            w_mm,
            a_mm,
            substrate_thickness_mm: default_substrate_thickness(),
            line_width_mm: default_line_width(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_mm > 0.0 && self.a_mm > 0.0) {
            return Err(Error::Domain(format!(
                "slot dimensions must be positive (w = {} mm, a = {} mm)",
                self.w_mm, self.a_mm
            )));
        }
        if !(self.substrate_thickness_mm > 0.0 && self.line_width_mm > 0.0) {
            return Err(Error::Domain("substrate and line dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Lumped circuit values. Impedances in ohms, capacitances in farads,
/// inductance in henries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub z_line: f64,
    pub z_source: f64,
    pub c1: f64,
    pub cc: f64,
    pub lc: f64,
    pub r_loss: f64,
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.z_line, self.z_source, self.c1, self.cc, self.lc];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("circuit values must be positive: {self:?}")));
        }
        if !(self.r_loss >= 0.0) {
            return Err(Error::Domain(format!("negative loss resistance {}", self.r_loss)));
        }
        Ok(())
    }
}

/// Geometry-to-circuit mapping.
///
/// `C_C = κ_C ε₀ ε_eff a / w` with `ε_eff` the mean of substrate and soil
/// permittivity, and `L_C = κ_L a`. The two constants are pinned by one
/// reference design: a 10 mm × 0.1 mm slot on dry loam has its notch at
/// 2.55 GHz with a 0.04 pF slot capacitance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpedModel {
    /// Dimensionless capacitance factor.
    pub kappa_c: f64,
    /// Inductance per slot length, H/m.
    pub kappa_l: f64,
    pub c1: f64,
    pub z_line: f64,
    pub z_source: f64,
    pub r_loss: f64,
    pub epsilon_substrate: f64,
}

impl LumpedModel {
    pub const REFERENCE_A_MM: f64 = 10.0;
    pub const REFERENCE_W_MM: f64 = 0.1;
    pub const REFERENCE_FC_HZ: f64 = 2.55e9;
    pub const REFERENCE_CC_F: f64 = 0.04e-12;
    pub const DEFAULT_C1_F: f64 = 0.4e-12;

    /// Calibrate `κ_C` and `κ_L` against the reference design with the given
    /// line-to-ground capacitance.
    pub fn calibrated(c1: f64) -> Self {
        let eps_dry = soil::topp_permittivity(0.0).expect("0 is in range");
        let eps_eff = 0.5 * (EPSILON_FR4 + eps_dry);
        let aspect = Self::REFERENCE_A_MM / Self::REFERENCE_W_MM;
        let kappa_c = Self::REFERENCE_CC_F / (EPSILON_0 * eps_eff * aspect);
        let omega = 2.0 * PI * Self::REFERENCE_FC_HZ;
        let lc = 1.0 / (omega * omega * (c1 + Self::REFERENCE_CC_F));
        let kappa_l = lc / (Self::REFERENCE_A_MM * 1e-3);
        Self { kappa_c, kappa_l, c1, z_line: 50.0, z_source: 50.0, r_loss: 0.2, epsilon_substrate: EPSILON_FR4 }
    }
}

impl Default for LumpedModel {
    fn default() -> Self {
        Self::calibrated(Self::DEFAULT_C1_F)
    }
}

/// Gain curve of the tag over a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    freqs: Vec<f64>,
    gain_db: Vec<f64>,
}

impl FrequencyResponse {
    pub fn new(freqs: Vec<f64>, gain_db: Vec<f64>) -> Result<Self> {
        if freqs.is_empty() || freqs.len() != gain_db.len() {
            return Err(Error::Shape(format!("{} frequencies vs {} gains", freqs.len(), gain_db.len())));
        }
        check_grid(&freqs)?;
        Ok(Self { freqs, gain_db })
    }

    /// A response that is 0 dB everywhere on `[lo, hi]`.
    pub fn flat(lo_hz: f64, hi_hz: f64) -> Result<Self> {
        Self::new(vec![lo_hz, hi_hz], vec![0.0, 0.0])
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn gain_db(&self) -> &[f64] {
        &self.gain_db
    }

    /// Gain at `freq`, linear interpolation in dB between grid points.
    pub fn gain_at(&self, freq: f64) -> Result<f64> {
        let (lo, hi) = (self.freqs[0], self.freqs[self.freqs.len() - 1]);
        if !(freq >= lo && freq <= hi) {
            return Err(Error::Domain(format!("frequency {freq} Hz outside tag response grid [{lo}, {hi}]")));
        }
        let i = self.freqs.partition_point(|&f| f <= freq);
        if i == self.freqs.len() {
            return Ok(self.gain_db[i - 1]);
        }
        if i == 0 {
            return Ok(self.gain_db[0]);
        }
        let (f0, f1) = (self.freqs[i - 1], self.freqs[i]);
        let t = (freq - f0) / (f1 - f0);
        Ok(self.gain_db[i - 1] + t * (self.gain_db[i] - self.gain_db[i - 1]))
    }

    /// Frequency of the deepest point of the curve (first one on ties).
    pub fn notch_frequency(&self) -> f64 {
        let mut best = 0;
        for (i, g) in self.gain_db.iter().enumerate() {
            if *g < self.gain_db[best] {
                best = i;
            }
        }
        self.freqs[best]
    }
}

fn check_grid(freqs: &[f64]) -> Result<()> {
    if freqs.is_empty() {
        return Err(Error::Domain("empty frequency grid".into()));
    }
    if freqs.iter().any(|f| !f.is_finite()) || freqs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("frequency grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Uniform grid from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

/// DGS impedance `Z_R(ω)`.
///
/// At the parallel `L_C ‖ C_C` pole the tank admittance is exactly zero and
/// the returned value has an infinite imaginary part.
pub fn impedance(params: &CircuitParams, omega: f64) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("angular frequency must be positive, got {omega}")));
    }
    let j = Complex64::i();
    let tank_admittance = j * omega * params.cc + 1.0 / (j * omega * params.lc);
    let c1 = 1.0 / (j * omega * params.c1);
    if tank_admittance == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(params.r_loss + c1.re, f64::INFINITY));
    }
    Ok(params.r_loss + 1.0 / tank_admittance + c1)
}

/// Through gain in dB at one angular frequency, clipped to
/// `[GAIN_FLOOR_DB, GAIN_CEILING_DB]`.
pub fn gain_db_at(params: &CircuitParams, omega: f64) -> Result<f64> {
    let zr = impedance(params, omega)?;
    let (zl, zo) = (params.z_line, params.z_source);
    let ratio = if zr.is_finite() {
        let num = (zo * zr).norm();
        let den = (zl * zl + 2.0 * zl * zr + zo * zr + zo * zl).norm();
        num / den
    } else {
        // |Z_R| → ∞ limit of the ratio.
        zo / (2.0 * zl + zo)
    };
    let db = if ratio > 0.0 { 20.0 * ratio.log10() } else { f64::NEG_INFINITY };
    Ok(db.clamp(GAIN_FLOOR_DB, GAIN_CEILING_DB))
}

pub fn frequency_response(params: &CircuitParams, freqs: &[f64]) -> Result<FrequencyResponse> {
    params.validate()?;
    check_grid(freqs)?;
    let gain_db = freqs.iter().map(|f| gain_db_at(params, 2.0 * PI * f)).collect::<Result<Vec<_>>>()?;
    FrequencyResponse::new(freqs.to_vec(), gain_db)
}

/// Notch centre `1 / (2π √(L_C (C_1 + C_C)))` in Hz.
pub fn resonant_frequency(params: &CircuitParams) -> f64 {
    1.0 / (2.0 * PI * (params.lc * (params.c1 + params.cc)).sqrt())
}

/// Circuit values for a slot geometry loaded by soil of relative permittivity
/// `epsilon_soil`.
pub fn lump_from_geometry(geom: &DgsGeometry, epsilon_soil: f64, model: &LumpedModel) -> Result<CircuitParams> {
    geom.validate()?;
    if !(epsilon_soil >= 1.0) {
        return Err(Error::Domain(format!("soil permittivity {epsilon_soil} below 1")));
    }
    let eps_eff = 0.5 * (model.epsilon_substrate + epsilon_soil);
    let params = CircuitParams {
        z_line: model.z_line,
        z_source: model.z_source,
        c1: model.c1,
        cc: model.kappa_c * EPSILON_0 * eps_eff * geom.a_mm / geom.w_mm,
        lc: model.kappa_l * geom.a_mm * 1e-3,
        r_loss: model.r_loss,
    };
    params.validate()?;
    Ok(params)
}

/// Notch centre of a geometry at moisture fraction `theta`.
pub fn fc_at_moisture(geom: &DgsGeometry, theta: f64, model: &LumpedModel) -> Result<f64> {
    let eps = soil::topp_permittivity(theta)?;
    Ok(resonant_frequency(&lump_from_geometry(geom, eps, model)?))
}

/// Tag response at moisture fraction `theta` (use `None` for a tag in air).
pub fn tag_response(
    geom: &DgsGeometry,
    theta: Option<f64>,
    model: &LumpedModel,
    freqs: &[f64],
) -> Result<FrequencyResponse> {
    let eps = match theta {
        Some(t) => soil::topp_permittivity(t)?,
        None => 1.0,
    };
    frequency_response(&lump_from_geometry(geom, eps, model)?, freqs)
}

/// Inclusive grid of one slot dimension, millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.start > 0.0 && self.stop >= self.start) {
            return Err(Error::Domain(format!("invalid grid range {self:?}")));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        // Rounded to a micrometre so grid points print cleanly.
        Ok((0..n).map(|i| ((self.start + i as f64 * self.step) * 1e3).round() / 1e3).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub w_mm: GridRange,
    pub a_mm: GridRange,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            w_mm: GridRange { start: 0.1, stop: 2.0, step: 0.1 },
            a_mm: GridRange { start: 4.0, stop: 14.0, step: 0.5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub geometry: DgsGeometry,
    /// `f_c(θ_k) − f_c(θ_{k+1})` for adjacent moisture levels.
    pub delta_f_hz: Vec<f64>,
    pub fc_per_level_hz: Vec<f64>,
    /// Smallest adjacent offset, the quantity the search maximises.
    pub min_delta_f_hz: f64,
}

/// Two-step slot search.
///
/// Step 1 keeps grid geometries whose notch at the driest level falls inside
/// `band`. Step 2 picks, among those, the geometry with the largest minimum
/// adjacent notch offset across `moisture_levels`; ties go to smaller `a`,
/// then smaller `w`.
pub fn tune_geometry(
    moisture_levels: &[f64],
    band: [f64; 2],
    search_space: &SearchSpace,
    model: &LumpedModel,
) -> Result<TuneReport> {
    if moisture_levels.len() < 2 {
        return Err(Error::Domain("at least two moisture levels are required".into()));
    }
    if moisture_levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("moisture levels must be strictly ascending".into()));
    }
    let [lo, hi] = band;
    if !(lo < hi && lo >= 2.4e9 && hi <= 3.0e9) {
        return Err(Error::Domain(format!("band [{lo}, {hi}] Hz must lie within [2.4, 3.0] GHz")));
    }
    let eps: Vec<f64> = moisture_levels.iter().map(|&t| soil::topp_permittivity(t)).collect::<Result<_>>()?;

    let ws = search_space.w_mm.values()?;
    let a_s = search_space.a_mm.values()?;

    let mut best: Option<TuneReport> = None;
    let mut nearest_fc = f64::NAN;
    let mut nearest_dist = f64::INFINITY;

    // Visiting a ascending then w ascending makes "strictly better" the
    // tie-break rule.
    for &a in &a_s {
        for &w in &ws {
            let geom = DgsGeometry::new(w, a)?;
            let fcs: Vec<f64> = eps
                .iter()
                .map(|&e| lump_from_geometry(&geom, e, model).map(|p| resonant_frequency(&p)))
                .collect::<Result<_>>()?;
            let dry = fcs[0];
            if dry < lo || dry > hi {
                let dist = if dry < lo { lo - dry } else { dry - hi };
                if dist < nearest_dist {
                    nearest_dist = dist;
                    nearest_fc = dry;
                }
                continue;
            }
            let delta: Vec<f64> = fcs.windows(2).map(|p| p[0] - p[1]).collect();
            let min_delta = delta.iter().copied().fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| min_delta > b.min_delta_f_hz) {
                best = Some(TuneReport {
                    geometry: geom,
                    delta_f_hz: delta,
                    fc_per_level_hz: fcs,
                    min_delta_f_hz: min_delta,
                });
            }
        }
    }

    best.ok_or(Error::InfeasibleBand { lo_hz: lo, hi_hz: hi, nearest_fc_hz: nearest_fc })
}
