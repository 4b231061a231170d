use serde::{Deserialize, Serialize};

use super::{predict, Dataset, ForestModel};
use crate::error::{Error, Result};

/// Absolute-error summary. `cdf` pairs each sorted error with the fraction of
/// rows at or below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Nearest-rank 90th percentile.
    pub p90: f64,
    pub max: f64,
    pub cdf: Vec<(f64, f64)>,
}

impl ErrorReport {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Domain("no errors to summarise".into()));
        }
        let mut e: Vec<f64> = errors.iter().map(|x| x.abs()).collect();
        e.sort_by(f64::total_cmp);
        let n = e.len();
        let median = if n % 2 == 1 { e[n / 2] } else { 0.5 * (e[n / 2 - 1] + e[n / 2]) };
        let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
        Ok(Self {
            count: n,
            mean: e.iter().sum::<f64>() / n as f64,
            median,
            p90: e[rank - 1],
            max: e[n - 1],
            cdf: e.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n as f64)).collect(),
        })
    }
}

pub fn evaluate(model: &ForestModel, test: &Dataset) -> Result<ErrorReport> {
    let errors =
        test.rows.iter().map(|r| predict(model, &r.features).map(|p| p - r.label)).collect::<Result<Vec<_>>>()?;
    ErrorReport::from_errors(&errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        let errs: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = ErrorReport::from_errors(&errs).unwrap();
        assert_eq!(r.p90, 9.0);
        assert_eq!(r.median, 5.5);
        assert_eq!(r.mean, 5.5);
        assert!(r.cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(r.cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn zero_errors() {
        let r = ErrorReport::from_errors(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((r.mean, r.median, r.p90, r.max), (0.0, 0.0, 0.0, 0.0));
        assert!(ErrorReport::from_errors(&[]).is_err());
    }
}
