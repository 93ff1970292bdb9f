//! Binary matrix format and the key-value sidecar.
//!
//! Layout: `RMES` magic, u32 version, u64 n, u64 d, then n·d little-endian
//! f64 values in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{GroundTruth, SampleSet};

pub const DATASET_MAGIC: &[u8; 4] = b"RMES";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_dataset(samples: &SampleSet) -> Vec<u8> {
    let (n, d) = (samples.n(), samples.dim());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * d);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for v in samples.to_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, reason: reason.into() }
}

fn take<'a>(bytes: &'a [u8], at: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    bytes
        .get(at..at + len)
        .ok_or_else(|| format_err(at, format!("truncated {what}: need {len} bytes, {} left", bytes.len().saturating_sub(at))))
}

/// Parses the binary format. Truncation is reported at the offset where the
/// first incomplete field or value starts.
pub fn decode_dataset(bytes: &[u8]) -> Result<SampleSet> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(take(bytes, 4, 4, "version")?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(take(bytes, 8, 8, "row count")?.try_into().unwrap());
    let d = u64::from_le_bytes(take(bytes, 16, 8, "column count")?.try_into().unwrap());
    if n == 0 || d == 0 {
        return Err(format_err(8, format!("empty shape {n}x{d}")));
    }
    let count = n
        .checked_mul(d)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| format_err(8, format!("shape {n}x{d} too large")))?;
    let body = &bytes[HEADER_LEN..];
    let expected = count * 8;
    if body.len() < expected {
        let full = body.len() / 8;
        return Err(format_err(
            HEADER_LEN + full * 8,
            format!("truncated data: value {full} of {count} incomplete"),
        ));
    }
    if body.len() > expected {
        return Err(format_err(HEADER_LEN + expected, "trailing bytes after data"));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SampleSet::from_row_major(n as usize, d as usize, &values)
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &SampleSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(samples)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

/// `<dataset>.meta`
pub fn sidecar_path(dataset: impl AsRef<Path>) -> PathBuf {
    let mut s = dataset.as_ref().as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub truth: GroundTruth,
    pub seed: Option<u64>,
}

fn join_f64(v: &[f64]) -> String {
    // `{:?}` prints the shortest representation that round-trips exactly.
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

pub fn encode_sidecar(truth: &GroundTruth, seed: Option<u64>) -> String {
    let mut s = String::new();
    writeln!(s, "mu_star={}", join_f64(truth.mu_star.as_slice())).unwrap();
    let mask: String = truth.good_mask.iter().map(|g| if *g { '1' } else { '0' }).collect();
    writeln!(s, "good_mask={mask}").unwrap();
    writeln!(s, "sigma={:?}", truth.sigma).unwrap();
    if let Some(seed) = seed {
        writeln!(s, "seed={seed}").unwrap();
    }
    s
}

pub fn decode_sidecar(text: &str) -> Result<Sidecar> {
    let mut mu = None;
    let mut mask = None;
    let mut sigma = 1.0;
    let mut seed = None;
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let here = offset;
        offset += line.len();
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(here, format!("expected key=value, got {line:?}")))?;
        let bad = |what: &str| format_err(here, format!("bad {what}: {v:?}"));
        match k.trim() {
            "mu_star" => {
                let vals: std::result::Result<Vec<f64>, _> =
                    v.split(',').map(|x| x.trim().parse::<f64>()).collect();
                mu = Some(vals.map_err(|_| bad("mu_star"))?);
            }
            "good_mask" => {
                let m: Option<Vec<bool>> = v
                    .trim()
                    .chars()
                    .map(|c| match c {
                        '1' => Some(true),
                        '0' => Some(false),
                        _ => None,
                    })
                    .collect();
                mask = Some(m.ok_or_else(|| bad("good_mask"))?);
            }
            "sigma" => sigma = v.trim().parse().map_err(|_| bad("sigma"))?,
            "seed" => seed = Some(v.trim().parse().map_err(|_| bad("seed"))?),
            _ => {}
        }
    }
    let mu = mu.ok_or_else(|| format_err(offset, "missing mu_star"))?;
    let mask = mask.ok_or_else(|| format_err(offset, "missing good_mask"))?;
    Ok(Sidecar {
        truth: GroundTruth { mu_star: DVector::from_vec(mu), good_mask: mask, sigma },
        seed,
    })
}

pub fn write_sidecar(dataset: impl AsRef<Path>, truth: &GroundTruth, seed: Option<u64>) -> Result<()> {
    let path = sidecar_path(dataset);
    fs::write(&path, encode_sidecar(truth, seed)).map_err(|e| Error::io(&path, e))
}

/// Reads `<dataset>.meta` if it exists.
pub fn read_sidecar(dataset: impl AsRef<Path>) -> Result<Option<Sidecar>> {
    let path = sidecar_path(dataset);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    decode_sidecar(&text).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SampleSet {
        SampleSet::from_rows(&[vec![1.0, -0.0, 1e-300], vec![f64::MAX, 0.1 + 0.2, -7.5]]).unwrap()
    }

    #[test]
    fn round_trip_bits() {
        let s = sample();
        let back = decode_dataset(&encode_dataset(&s)).unwrap();
        let a: Vec<u64> = s.to_row_major().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.to_row_major().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_offsets() {
        let bytes = encode_dataset(&sample());
        // Inside the third value.
        let cut = HEADER_LEN + 2 * 8 + 3;
        match decode_dataset(&bytes[..cut]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, (HEADER_LEN + 16) as u64),
            other => panic!("{other:?}"),
        }
        // Inside the column count.
        match decode_dataset(&bytes[..18]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_dataset(&sample());
        bytes[4] = 9;
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format { offset: 4, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn sidecar_round_trip() {
        let t = GroundTruth {
            mu_star: DVector::from_vec(vec![0.1, -2.5e-17]),
            good_mask: vec![true, false, true],
            sigma: 3.0,
        };
        let back = decode_sidecar(&encode_sidecar(&t, Some(42))).unwrap();
        assert_eq!(back.truth, t);
        assert_eq!(back.seed, Some(42));
    }
}
