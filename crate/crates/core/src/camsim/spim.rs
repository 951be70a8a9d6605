//! "SPIM" measurement files: `"SPIM" | u32 version | u32 M | M × f64`, all little-endian.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::MeasurementVector;

pub const SPIM_MAGIC: &[u8; 4] = b"SPIM";
pub const SPIM_VERSION: u32 = 1;
const HEADER: usize = 12;

pub fn spim_file_size(m: usize) -> usize {
    HEADER + 8 * m
}

pub fn encode_spim(y: &MeasurementVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(spim_file_size(y.len()));
    out.extend_from_slice(SPIM_MAGIC);
    out.extend_from_slice(&SPIM_VERSION.to_le_bytes());
    out.extend_from_slice(&(y.len() as u32).to_le_bytes());
    for v in y.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_spim(bytes: &[u8]) -> Result<MeasurementVector> {
    if bytes.len() < HEADER {
        return Err(Error::format(bytes.len() as u64, "truncated SPIM header"));
    }
    if &bytes[..4] != SPIM_MAGIC {
        return Err(Error::format(0, "missing SPIM magic"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != SPIM_VERSION {
        return Err(Error::format(4, format!("unsupported SPIM version {}", word(4))));
    }
    let m = word(8) as usize;
    let expected = spim_file_size(m);
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated SPIM payload: {m} values need {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(expected as u64, "trailing bytes after SPIM payload"));
    }
    let values = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(MeasurementVector(values))
}

pub fn write_spim(path: impl AsRef<Path>, y: &MeasurementVector) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_spim(y)).map_err(|e| Error::io(path, e))
}

pub fn read_spim(path: impl AsRef<Path>) -> Result<MeasurementVector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_spim(&bytes)
}

/// `index,value` rows with a header line.
pub fn measurements_csv(y: &MeasurementVector) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in y.values().iter().enumerate() {
        let _ = writeln!(s, "{i},{v:?}");
    }
    s
}
