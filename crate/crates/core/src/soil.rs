//! Soil moisture to permittivity (Topp polynomial) and moisture unit conversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bulk density of loam, g/cm³, used when a configuration leaves it out.
pub const DEFAULT_BULK_DENSITY: f64 = 1.3;

/// A soil sample: gravimetric water content and the permittivity it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilSample {
    theta_gwc: f64,
    epsilon: f64,
}

impl SoilSample {
    pub fn from_gwc(theta_gwc: f64) -> Result<Self> {
        let epsilon = topp_permittivity(theta_gwc)?;
        Ok(Self { theta_gwc, epsilon })
    }

    /// Moisture given in percent (0–100).
    pub fn from_percent(percent: f64) -> Result<Self> {
        Self::from_gwc(percent / 100.0)
    }

    pub fn theta_gwc(&self) -> f64 {
        self.theta_gwc
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Relative permittivity of moist soil, `3.03 + 9.3θ + 146θ² − 76.6θ³`.
///
/// `theta` is a moisture fraction and must lie in `[0, 1]`; the polynomial is
/// an empirical fit and is not extrapolated.
pub fn topp_permittivity(theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!("moisture fraction {theta} outside [0, 1]")));
    }
    Ok(3.03 + 9.3 * theta + 146.0 * theta * theta - 76.6 * theta * theta * theta)
}

/// Volumetric to gravimetric water content given bulk density in g/cm³.
pub fn vwc_to_gwc(vwc: f64, bulk_density: f64) -> Result<f64> {
    if !(bulk_density > 0.0) {
        return Err(Error::Domain(format!("bulk density must be positive, got {bulk_density}")));
    }
    if !(vwc >= 0.0) {
        return Err(Error::Domain(format!("negative volumetric content {vwc}")));
    }
    Ok(vwc / bulk_density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn topp_reference_values() {
        assert_eq!(topp_permittivity(0.0).unwrap(), 3.03);
        assert_relative_eq!(topp_permittivity(0.1).unwrap(), 5.3434, epsilon = 1e-12);
        assert_relative_eq!(topp_permittivity(0.5).unwrap(), 34.605, epsilon = 1e-12);
    }

    #[test]
    fn topp_rejects_out_of_range() {
        assert!(matches!(topp_permittivity(-0.01), Err(Error::Domain(_))));
        assert!(matches!(topp_permittivity(1.01), Err(Error::Domain(_))));
        assert!(topp_permittivity(f64::NAN).is_err());
        assert!(topp_permittivity(1.0).is_ok());
    }

    #[test]
    fn topp_strictly_increasing_on_grid() {
        let eps: Vec<f64> = (0..=100).map(|i| topp_permittivity(i as f64 / 100.0).unwrap()).collect();
        assert!(eps.windows(2).all(|w| w[0] < w[1]));
        assert!(eps.iter().all(|&e| e >= 1.0));
    }

    #[test]
    fn vwc_conversion() {
        assert_eq!(vwc_to_gwc(0.25, 1.0).unwrap(), 0.25);
        assert_eq!(vwc_to_gwc(0.0, 1.3).unwrap(), 0.0);
        assert_relative_eq!(vwc_to_gwc(0.30, 1.2).unwrap(), 0.25, epsilon = 1e-15);
        assert!(matches!(vwc_to_gwc(0.3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(vwc_to_gwc(0.3, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn vwc_linear_in_vwc() {
        let d = DEFAULT_BULK_DENSITY;
        for i in 0..20 {
            let v = i as f64 * 0.03;
            let lhs = vwc_to_gwc(2.0 * v, d).unwrap();
            let rhs = 2.0 * vwc_to_gwc(v, d).unwrap();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-15);
        }
    }

    #[test]
    fn sample_carries_topp_value() {
        let s = SoilSample::from_percent(10.0).unwrap();
        assert_eq!(s.epsilon(), topp_permittivity(0.1).unwrap());
        assert!(SoilSample::from_percent(120.0).is_err());
    }
}
