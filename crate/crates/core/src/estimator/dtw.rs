use crate::error::{Error, Result};

/// Dynamic time warping cost with `|x_i − y_j|` local cost and unit
/// match/insert/delete steps, no window.
pub fn dtw_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Domain("DTW needs non-empty sequences".into()));
    }
    let m = y.len();
    // Two rolling rows of the cumulative cost table.
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for xi in x {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = (xi - y[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProfile {
    pub gain_db: Vec<f64>,
    /// Moisture, percent.
    pub label: f64,
}

/// Label of the reference closest under DTW; distance ties go to the lower
/// moisture.
pub fn dtw_estimate(profile: &[f64], references: &[LabeledProfile]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Domain("no reference profiles".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for r in references {
        if r.gain_db.len() != profile.len() {
            return Err(Error::Shape(format!(
                "reference of length {} vs profile of length {}",
                r.gain_db.len(),
                profile.len()
            )));
        }
        let d = dtw_distance(profile, &r.gain_db)?;
        let better = match best {
            None => true,
            Some((bd, bl)) => d < bd || (d == bd && r.label < bl),
        };
        if better {
            best = Some((d, r.label));
        }
    }
    Ok(best.expect("references is non-empty").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 1.0);
        // Warping absorbs the repeated sample.
        assert_eq!(dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[0.0], &[1.0, 2.0]).unwrap(), 3.0);
        assert!(dtw_distance(&[], &[1.0]).is_err());
        assert!(dtw_distance(&[1.0], &[]).is_err());
    }

    #[test]
    fn symmetric() {
        let x = [0.3, -1.2, 4.0, 2.5, 2.5];
        let y = [1.0, 0.0, 3.0];
        assert_eq!(dtw_distance(&x, &y).unwrap(), dtw_distance(&y, &x).unwrap());
    }

    #[test]
    fn estimate_rules() {
        let refs = vec![
            LabeledProfile { gain_db: vec![1.0, 1.0, 1.0], label: 10.0 },
            LabeledProfile { gain_db: vec![2.0, 2.0, 2.0], label: 5.0 },
            LabeledProfile { gain_db: vec![3.0, 3.0, 3.0], label: 0.0 },
        ];
        assert_eq!(dtw_estimate(&[2.0, 2.0, 2.0], &refs).unwrap(), 5.0);
        let equal: Vec<_> = refs.iter().map(|r| LabeledProfile { gain_db: vec![0.0; 3], ..r.clone() }).collect();
        assert_eq!(dtw_estimate(&[1.0, 1.0, 1.0], &equal).unwrap(), 0.0);
        assert!(dtw_estimate(&[1.0], &[]).is_err());
        assert!(matches!(dtw_estimate(&[1.0], &refs), Err(Error::Shape(_))));
    }
}
