use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Where a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowMeta {
    pub environment: u32,
    pub level: u32,
    pub packet: u32,
    /// Seed of the packet's noise draw.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub features: Vec<f64>,
    /// Moisture, percent.
    pub label: f64,
    pub meta: RowMeta,
}

/// Labelled feature rows on one shared frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub freqs: Vec<f64>,
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn new(freqs: Vec<f64>, rows: Vec<Row>) -> Result<Self> {
        let d = Self { freqs, rows };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.features.len() != self.freqs.len() {
                return Err(Error::Shape(format!(
                    "row {i} has {} features, grid has {}",
                    r.features.len(),
                    self.freqs.len()
                )));
            }
            if !(0.0..=100.0).contains(&r.label) {
                return Err(Error::Domain(format!("row {i} label {} outside [0, 100]", r.label)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.freqs.len()
    }

    pub fn distinct_labels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.label).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Seeded split stratified by label: within each label the rows are
    /// shuffled and the first `round(train_fraction · n)` go to training.
    pub fn split(&self, train_fraction: f64, split_seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Domain(format!("train fraction {train_fraction} outside [0, 1]")));
        }
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            groups.entry(r.label.to_bits()).or_default().push(i);
        }
        let mut rng = seed::rng(seed::derive(split_seed, "split"));
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for idx in groups.values_mut() {
            idx.shuffle(&mut rng);
            let cut = (train_fraction * idx.len() as f64).round() as usize;
            train.extend(idx[..cut].iter().copied());
            test.extend(idx[cut..].iter().copied());
        }
        train.sort_unstable();
        test.sort_unstable();
        let pick = |ix: &[usize]| Dataset {
            freqs: self.freqs.clone(),
            rows: ix.iter().map(|&i| self.rows[i].clone()).collect(),
        };
        Ok((pick(&train), pick(&test)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn toy(n_per_label: u32) -> Dataset {
        let mut rows = Vec::new();
        for level in 0..4u32 {
            for p in 0..n_per_label {
                rows.push(Row {
                    features: vec![f64::from(level), f64::from(p)],
                    label: 5.0 * f64::from(level),
                    meta: RowMeta { environment: 0, level, packet: p, seed: u64::from(level * 1000 + p) },
                });
            }
        }
        Dataset::new(vec![1.0, 2.0], rows).unwrap()
    }

    #[test]
    fn split_is_disjoint_and_stratified() {
        let d = toy(10);
        let (train, test) = d.split(0.5, 3).unwrap();
        assert_eq!(train.len() + test.len(), d.len());
        let a: HashSet<RowMeta> = train.rows.iter().map(|r| r.meta).collect();
        let b: HashSet<RowMeta> = test.rows.iter().map(|r| r.meta).collect();
        assert!(a.is_disjoint(&b));
        for l in d.distinct_labels() {
            assert_eq!(train.rows.iter().filter(|r| r.label == l).count(), 5);
        }
        assert_eq!(d.split(0.5, 3).unwrap(), (train, test));
    }

    #[test]
    fn validation() {
        let bad_len =
            Row { features: vec![1.0], label: 1.0, meta: RowMeta { environment: 0, level: 0, packet: 0, seed: 0 } };
        assert!(matches!(Dataset::new(vec![1.0, 2.0], vec![bad_len]), Err(Error::Shape(_))));
        let bad_label =
            Row { features: vec![1.0], label: 120.0, meta: RowMeta { environment: 0, level: 0, packet: 0, seed: 0 } };
        assert!(Dataset::new(vec![1.0], vec![bad_label]).is_err());
    }
}
