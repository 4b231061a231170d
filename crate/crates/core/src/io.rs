//! File formats. Every writer goes through [`write_atomic`], so a reader never
//! sees a half-written file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::channel::CsiProfile;
use crate::error::{Error, Result};
use crate::estimator::{Dataset, Row, RowMeta};
use crate::features::FeatureVector;

/// Write `bytes` to a sibling temp file and rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Build a CSV in memory from a header and rows of already formatted fields.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Config(format!("bad {what} value {s:?}")))
}

fn parse_int<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Config(format!("bad {what} value {s:?}")))
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("missing CSV column {name:?}")))
}

/// Two-column numeric table, e.g. `freq_hz,gain_db`.
pub fn xy_csv(x_name: &str, y_name: &str, x: &[f64], y: &[f64]) -> Result<Vec<u8>> {
    csv_bytes(&[x_name, y_name], x.iter().zip(y).map(|(a, b)| vec![fmt(*a), fmt(*b)]))
}

pub fn read_xy_csv(path: &Path, x_name: &str, y_name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.clone();
    let (ix, iy) = (header_index(&h, x_name)?, header_index(&h, y_name)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        xs.push(parse_f64(&rec[ix], x_name)?);
        ys.push(parse_f64(&rec[iy], y_name)?);
    }
    Ok((xs, ys))
}

pub fn feature_csv(fv: &FeatureVector) -> Result<Vec<u8>> {
    xy_csv("freq_hz", "gain_db", &fv.freqs, &fv.gain_db)
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureVector> {
    let (freqs, gain_db) = read_xy_csv(path, "freq_hz", "gain_db")?;
    Ok(FeatureVector { freqs, gain_db })
}

const CSI_HEADER: [&str; 7] = ["packet", "channel", "subcarrier", "freq_hz", "rx_element", "re", "im"];

/// Raw CSI in long form, one row per (packet, channel, subcarrier, element).
/// `packets[p]` holds the per-channel profiles of packet `p`.
pub fn csi_csv(packets: &[Vec<CsiProfile>]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (p, chans) in packets.iter().enumerate() {
        for prof in chans {
            for (k, f) in prof.subcarrier_freqs.iter().enumerate() {
                for (m, hm) in prof.h.iter().enumerate() {
                    let z = hm[k];
                    rows.push(vec![
                        p.to_string(),
                        prof.channel_index.to_string(),
                        k.to_string(),
                        fmt(*f),
                        m.to_string(),
                        fmt(z.re),
                        fmt(z.im),
                    ]);
                }
            }
        }
    }
    csv_bytes(&CSI_HEADER, rows)
}

/// Inverse of [`csi_csv`]. Packets and channels come back sorted.
pub fn read_csi_csv(path: &Path) -> Result<Vec<Vec<CsiProfile>>> {
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.clone();
    let ix: Vec<usize> = CSI_HEADER.iter().map(|c| header_index(&h, c)).collect::<Result<_>>()?;
    // packet -> channel -> subcarrier -> (freq, element -> value)
    type Sc = BTreeMap<usize, (f64, BTreeMap<usize, Complex64>)>;
    let mut tree: BTreeMap<usize, BTreeMap<u8, Sc>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let p: usize = parse_int(&rec[ix[0]], "packet")?;
        let ch: u8 = parse_int(&rec[ix[1]], "channel")?;
        let k: usize = parse_int(&rec[ix[2]], "subcarrier")?;
        let f = parse_f64(&rec[ix[3]], "freq_hz")?;
        let m: usize = parse_int(&rec[ix[4]], "rx_element")?;
        let z = Complex64::new(parse_f64(&rec[ix[5]], "re")?, parse_f64(&rec[ix[6]], "im")?);
        let entry = tree.entry(p).or_default().entry(ch).or_default().entry(k).or_insert((f, BTreeMap::new()));
        if entry.1.insert(m, z).is_some() {
            return Err(Error::Shape(format!("duplicate CSI entry p={p} ch={ch} k={k} m={m}")));
        }
    }
    let mut out = Vec::new();
    for (_, chans) in tree {
        let mut profiles = Vec::new();
        for (ch, scs) in chans {
            let n_rx = scs.values().next().map_or(0, |(_, e)| e.len());
            let mut freqs = Vec::with_capacity(scs.len());
            let mut h = vec![Vec::with_capacity(scs.len()); n_rx];
            for (expected_k, (k, (f, elems))) in scs.into_iter().enumerate() {
                if k != expected_k || elems.len() != n_rx || elems.keys().copied().ne(0..n_rx) {
                    return Err(Error::Shape(format!("incomplete CSI grid on channel {ch}")));
                }
                freqs.push(f);
                for (m, z) in elems {
                    h[m].push(z);
                }
            }
            profiles.push(CsiProfile { channel_index: ch, subcarrier_freqs: freqs, h });
        }
        out.push(profiles);
    }
    Ok(out)
}

const META_COLUMNS: [&str; 5] = ["label", "environment", "level", "packet", "seed"];

/// Wide dataset table: label and provenance columns, then one column per
/// feature frequency (the header is the frequency in Hz).
pub fn dataset_csv(data: &Dataset) -> Result<Vec<u8>> {
    let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(data.freqs.iter().map(|f| fmt(*f)));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(
        &header_refs,
        data.rows.iter().map(|r| {
            let mut v = vec![
                fmt(r.label),
                r.meta.environment.to_string(),
                r.meta.level.to_string(),
                r.meta.packet.to_string(),
                r.meta.seed.to_string(),
            ];
            v.extend(r.features.iter().map(|x| fmt(*x)));
            v
        }),
    )
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.clone();
    if h.len() < META_COLUMNS.len() || h.iter().zip(META_COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::Config(format!("dataset header must start with {}", META_COLUMNS.join(","))));
    }
    let freqs: Vec<f64> =
        h.iter().skip(META_COLUMNS.len()).map(|s| parse_f64(s, "frequency header")).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let features = rec.iter().skip(META_COLUMNS.len()).map(|s| parse_f64(s, "feature")).collect::<Result<_>>()?;
        rows.push(Row {
            features,
            label: parse_f64(&rec[0], "label")?,
            meta: RowMeta {
                environment: parse_int(&rec[1], "environment")?,
                level: parse_int(&rec[2], "level")?,
                packet: parse_int(&rec[3], "packet")?,
                seed: parse_int(&rec[4], "seed")?,
            },
        });
    }
    Dataset::new(freqs, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.json");
        write_json(&p, &vec![1.5, 2.0]).unwrap();
        let back: Vec<f64> = read_json(&p).unwrap();
        assert_eq!(back, vec![1.5, 2.0]);
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn csi_round_trip() {
        let prof = |ch: u8, s: f64| CsiProfile {
            channel_index: ch,
            subcarrier_freqs: vec![1.0, 2.0, 3.0],
            h: (0..2).map(|m| (0..3).map(|k| Complex64::new(s + m as f64, 0.1 * k as f64 - s)).collect()).collect(),
        };
        let packets = vec![vec![prof(1, 0.3), prof(2, 1.0 / 3.0)], vec![prof(1, -7.25), prof(2, 1e-17)]];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("csi.csv");
        write_atomic(&p, &csi_csv(&packets).unwrap()).unwrap();
        assert_eq!(read_csi_csv(&p).unwrap(), packets);
    }

    #[test]
    fn dataset_round_trip() {
        let meta = RowMeta { environment: 1, level: 2, packet: 3, seed: u64::MAX };
        let d = Dataset::new(
            vec![2.412e9, 2.4123125e9],
            vec![Row { features: vec![0.1 + 0.2, -1.0 / 3.0], label: 20.0 / 9.0, meta }],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_atomic(&p, &dataset_csv(&d).unwrap()).unwrap();
        assert_eq!(read_dataset_csv(&p).unwrap(), d);
    }
}
