//! Stitched filter-gain features.
//!
//! A centred block of subcarriers is taken from each of the 13 channels and
//! the blocks are laid end to end in frequency order. Each entry is the
//! filter gain between a reference capture and the live capture, which
//! cancels everything common to both (path loss, array gains, clutter).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CsiProfile, SUBCARRIERS_PER_CHANNEL};
use crate::error::{Error, Result};
use crate::resonator::GAIN_FLOOR_DB;

pub const DEFAULT_SUBCARRIERS_PER_CHANNEL: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub freqs: Vec<f64>,
    pub gain_db: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.gain_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gain_db.is_empty()
    }

    pub fn mean_gain_db(&self) -> f64 {
        self.gain_db.iter().sum::<f64>() / self.gain_db.len() as f64
    }
}

/// `20·log10(a / a_ref)`; a zero amplitude clips to the −80 dB floor.
pub fn filter_gain(a: f64, a_ref: f64) -> Result<f64> {
    if !(a_ref > 0.0) {
        return Err(Error::Domain(format!("reference amplitude must be positive, got {a_ref}")));
    }
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("amplitude must be non-negative, got {a}")));
    }
    if a == 0.0 {
        return Ok(GAIN_FLOOR_DB);
    }
    Ok((20.0 * (a / a_ref).log10()).max(GAIN_FLOOR_DB))
}

/// Combined-stream amplitude of one channel, averaged over packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAmplitude {
    pub channel_index: u8,
    pub freqs: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl ChannelAmplitude {
    /// Mean of `|Σ_m w_m h_m|` over the packets of one channel.
    pub fn from_profiles(packets: &[CsiProfile], rx_weights: &[Complex64]) -> Result<Self> {
        let first = packets.first().ok_or_else(|| Error::Shape("no packets for channel".into()))?;
        let mut sum = vec![0.0; first.subcarrier_freqs.len()];
        for p in packets {
            if p.channel_index != first.channel_index || p.subcarrier_freqs != first.subcarrier_freqs {
                return Err(Error::Shape("packets of one channel disagree on the subcarrier grid".into()));
            }
            for (s, z) in sum.iter_mut().zip(p.combine(rx_weights)?) {
                *s += z.norm();
            }
        }
        let n = packets.len() as f64;
        Ok(Self {
            channel_index: first.channel_index,
            freqs: first.subcarrier_freqs.clone(),
            amplitude: sum.into_iter().map(|s| s / n).collect(),
        })
    }
}

fn centred_block(n: usize) -> Result<std::ops::Range<usize>> {
    if n == 0 || n > SUBCARRIERS_PER_CHANNEL {
        return Err(Error::Domain(format!("subcarriers per channel must be in 1..=64, got {n}")));
    }
    let start = SUBCARRIERS_PER_CHANNEL / 2 - n / 2;
    Ok(start..start + n)
}

fn sorted_by_channel(x: &[ChannelAmplitude]) -> Vec<&ChannelAmplitude> {
    let mut v: Vec<&ChannelAmplitude> = x.iter().collect();
    v.sort_by_key(|c| c.channel_index);
    v
}

/// Stitch per-channel amplitudes into a feature vector.
///
/// Each entry is `filter_gain(A_ref, A)`, the attenuation of the live capture
/// relative to the reference, so a notch that deepens in band shows up as a
/// rising value. Overlapping frequencies keep their first (lowest-channel)
/// occurrence.
pub fn stitch_amplitudes(
    live: &[ChannelAmplitude],
    reference: &[ChannelAmplitude],
    subcarriers_per_channel: usize,
) -> Result<FeatureVector> {
    let block = centred_block(subcarriers_per_channel)?;
    let live = sorted_by_channel(live);
    let reference = sorted_by_channel(reference);
    let chans = |v: &[&ChannelAmplitude]| v.iter().map(|c| c.channel_index).collect::<Vec<_>>();
    if live.is_empty() || chans(&live) != chans(&reference) {
        return Err(Error::Shape(format!(
            "live channels {:?} vs reference channels {:?}",
            chans(&live),
            chans(&reference)
        )));
    }
    if live.windows(2).any(|w| w[0].channel_index == w[1].channel_index) {
        return Err(Error::Shape("duplicate channel in capture".into()));
    }

    let mut freqs = Vec::new();
    let mut gain_db = Vec::new();
    for (l, r) in live.iter().zip(&reference) {
        if l.freqs != r.freqs || l.amplitude.len() != l.freqs.len() || r.amplitude.len() != r.freqs.len() {
            return Err(Error::Shape(format!("channel {} grids disagree", l.channel_index)));
        }
        if l.freqs.len() != SUBCARRIERS_PER_CHANNEL {
            return Err(Error::Shape(format!("channel {} has {} subcarriers", l.channel_index, l.freqs.len())));
        }
        for k in block.clone() {
            let f = l.freqs[k];
            if freqs.last().is_some_and(|&last| f <= last) {
                continue;
            }
            freqs.push(f);
            gain_db.push(filter_gain(r.amplitude[k], l.amplitude[k])?);
        }
    }
    Ok(FeatureVector { freqs, gain_db })
}

/// Stitch single-packet captures, combining Rx elements with `rx_weights`.
pub fn stitch_channels(
    per_channel: &[CsiProfile],
    reference: &[CsiProfile],
    rx_weights: &[Complex64],
    subcarriers_per_channel: usize,
) -> Result<FeatureVector> {
    let amps = |v: &[CsiProfile]| {
        v.iter()
            .map(|p| ChannelAmplitude::from_profiles(std::slice::from_ref(p), rx_weights))
            .collect::<Result<Vec<_>>>()
    };
    stitch_amplitudes(&amps(per_channel)?, &amps(reference)?, subcarriers_per_channel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::subcarrier_freqs;
    use approx::assert_relative_eq;

    #[test]
    fn filter_gain_values() {
        assert_eq!(filter_gain(0.7, 0.7).unwrap(), 0.0);
        assert_relative_eq!(filter_gain(10.0, 1.0).unwrap(), 20.0, epsilon = 1e-12);
        assert_relative_eq!(filter_gain(2.0, 1.0).unwrap(), 6.020_599_913_279_624, epsilon = 1e-12);
        assert_eq!(filter_gain(0.0, 1.0).unwrap(), GAIN_FLOOR_DB);
        assert!(matches!(filter_gain(1.0, 0.0), Err(Error::Domain(_))));
        assert!(filter_gain(1.0, -1.0).is_err());
    }

    fn amps(channels: impl Iterator<Item = u8>, value: impl Fn(f64) -> f64) -> Vec<ChannelAmplitude> {
        channels
            .map(|ch| {
                let freqs = subcarrier_freqs(ch).unwrap();
                let amplitude = freqs.iter().map(|&f| value(f)).collect();
                ChannelAmplitude { channel_index: ch, freqs, amplitude }
            })
            .collect()
    }

    #[test]
    fn thirteen_by_eight_is_104_increasing() {
        let live = amps(1..=13, |_| 0.5);
        let reference = amps(1..=13, |_| 1.0);
        let fv = stitch_amplitudes(&live, &reference, 8).unwrap();
        assert_eq!(fv.len(), 104);
        assert!(fv.freqs.windows(2).all(|w| w[0] < w[1]));
        assert!(fv.gain_db.iter().all(|g| (g - 6.020_599_913_279_624).abs() < 1e-12));
    }

    #[test]
    fn overlapping_blocks_are_deduplicated() {
        let live = amps(1..=13, |_| 1.0);
        let fv = stitch_amplitudes(&live, &live, 64).unwrap();
        assert!(fv.freqs.windows(2).all(|w| w[0] < w[1]));
        // 2402 MHz to 2481.6875 MHz on the 312.5 kHz lattice.
        assert_eq!(fv.len(), 64 + 12 * 16);
        assert!(fv.gain_db.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_errors() {
        let a = amps(1..=13, |_| 1.0);
        let b = amps(1..=12, |_| 1.0);
        assert!(matches!(stitch_amplitudes(&a, &b, 8), Err(Error::Shape(_))));
        assert!(matches!(stitch_amplitudes(&a, &a, 0), Err(Error::Domain(_))));
        assert!(stitch_amplitudes(&a, &a, 65).is_err());
    }

    #[test]
    fn order_of_channels_does_not_matter() {
        let notch = |f: f64| 1.0 + ((f - 2.44e9) / 1e7).powi(2);
        let live = amps(1..=13, notch);
        let mut shuffled = live.clone();
        shuffled.reverse();
        let reference = amps(1..=13, |_| 1.0);
        assert_eq!(
            stitch_amplitudes(&live, &reference, 8).unwrap(),
            stitch_amplitudes(&shuffled, &reference, 8).unwrap()
        );
    }
}
