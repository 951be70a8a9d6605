//! "SPIP" pattern files.
//!
//! Layout: `b"SPIP"`, then u32 version (= 1), u32 M, u32 N, all little-endian;
//! then M planes of N rows each. Every row is bit-packed MSB-first and padded
//! to a whole byte; bit 1 means +1, bit 0 means −1. Padding bits are zero.

use std::fs;
use std::path::Path;

use super::PatternStack;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SPIP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

fn row_bytes(n: usize) -> usize {
    n.div_ceil(8)
}

pub fn spip_file_size(m: usize, n: usize) -> usize {
    HEADER_LEN + m * n * row_bytes(n)
}

pub fn encode_spip(stack: &PatternStack) -> Vec<u8> {
    let (m, n) = (stack.m(), stack.n());
    let mut out = Vec::with_capacity(spip_file_size(m, n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for row in stack.entries().chunks(n) {
        for chunk in row.chunks(8) {
            let mut byte = 0u8;
            for (bit, &e) in chunk.iter().enumerate() {
                if e > 0 {
                    byte |= 0x80 >> bit;
                }
            }
            out.push(byte);
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(bytes.len() as u64, "truncated SPIP header"))
}

pub fn decode_spip(bytes: &[u8]) -> Result<PatternStack> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad SPIP magic"));
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported SPIP version {version}")));
    }
    let m = read_u32(bytes, 8)? as usize;
    let n = read_u32(bytes, 12)? as usize;
    if m == 0 {
        return Err(Error::format(8, "M must be positive"));
    }
    if n == 0 {
        return Err(Error::format(12, "N must be positive"));
    }
    let expected = spip_file_size(m, n);
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated SPIP payload, expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(expected as u64, "trailing bytes after SPIP payload"));
    }
    let rb = row_bytes(n);
    let mut entries = Vec::with_capacity(m * n * n);
    for (r, row) in bytes[HEADER_LEN..].chunks(rb).enumerate() {
        for c in 0..n {
            let bit = row[c / 8] & (0x80 >> (c % 8));
            entries.push(if bit != 0 { 1 } else { -1 });
        }
        let used = n % 8;
        if used != 0 && row[rb - 1] & (0xFF >> used) != 0 {
            let offset = HEADER_LEN + r * rb + rb - 1;
            return Err(Error::format(offset as u64, "non-zero SPIP padding bits"));
        }
    }
    PatternStack::from_signs(m, n, entries)
}

pub fn write_spip(path: impl AsRef<Path>, stack: &PatternStack) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_spip(stack)).map_err(|e| Error::io(path, e))
}

pub fn read_spip(path: impl AsRef<Path>) -> Result<PatternStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_spip(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn size_formula() {
        assert_eq!(spip_file_size(410, 64), 16 + 410 * 64 * 8);
        assert_eq!(spip_file_size(410, 64), 209_936);
        let s = PatternStack::random(410, 64, &mut ChaCha8Rng::seed_from_u64(0));
        let bytes = encode_spip(&s);
        assert_eq!(bytes.len(), 209_936);
        assert_eq!(decode_spip(&bytes).unwrap(), s);
    }

    #[test]
    fn bit_order_is_msb_first() {
        let mut e = vec![-1i8; 9 * 9];
        e[0] = 1;
        e[8] = 1;
        let bytes = encode_spip(&PatternStack::from_signs(1, 9, e).unwrap());
        assert_eq!(&bytes[..4], b"SPIP");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 1, 0, 0, 0, 9, 0, 0, 0]);
        assert_eq!(bytes[16], 0x80);
        assert_eq!(bytes[17], 0x80);
        assert_eq!(bytes.len(), 16 + 9 * 2);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut bytes = encode_spip(&PatternStack::random(3, 8, &mut ChaCha8Rng::seed_from_u64(1)));
        bytes[1] = b'Q';
        assert!(matches!(decode_spip(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_and_version_errors_report_offsets() {
        let bytes = encode_spip(&PatternStack::random(3, 8, &mut ChaCha8Rng::seed_from_u64(1)));
        match decode_spip(&bytes[..bytes.len() - 1]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64 - 1),
            other => panic!("{other:?}"),
        }
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_spip(&v2), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(decode_spip(&bytes[..10]), Err(Error::Format { .. })));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode_spip(&longer), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn write_read_write_is_identity(m in 1usize..6, n in 1usize..20, seed in any::<u64>()) {
            let s = PatternStack::random(m, n, &mut ChaCha8Rng::seed_from_u64(seed));
            let bytes = encode_spip(&s);
            let back = decode_spip(&bytes).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(encode_spip(&back), bytes);
        }
    }
}
