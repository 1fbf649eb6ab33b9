//! Raw IQ dumps: interleaved little-endian `f32` (I, Q) pairs, no header.

use std::io;
use std::path::Path;

use num_complex::{Complex32, Complex64};
use thiserror::Error;

/// Bytes per complex sample.
pub const SAMPLE_BYTES: usize = 8;

#[derive(Debug, Error)]
pub enum IqError {
    #[error("IQ dump length {0} is not a multiple of {SAMPLE_BYTES} bytes")]
    Truncated(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * SAMPLE_BYTES);
    for s in samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8]) -> Result<Vec<Complex32>, IqError> {
    if !bytes.len().is_multiple_of(SAMPLE_BYTES) {
        return Err(IqError::Truncated(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(SAMPLE_BYTES)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex32::new(re, im)
        })
        .collect())
}

pub fn write_iq_file(path: &Path, samples: &[Complex64]) -> Result<(), IqError> {
    std::fs::write(path, encode_iq(samples))?;
    Ok(())
}

pub fn read_iq_file(path: &Path) -> Result<Vec<Complex32>, IqError> {
    decode_iq(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let bytes = encode_iq(&[Complex64::new(1.0, -2.0)]);
        assert_eq!(bytes, [0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0]);
    }

    #[test]
    fn truncated_rejected() {
        assert!(matches!(decode_iq(&[0; 7]), Err(IqError::Truncated(7))));
        assert!(decode_iq(&[]).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn round_trip_at_f32_precision(v in prop::collection::vec((-1e6f32..1e6, -1e6f32..1e6), 0..64)) {
            let samples: Vec<Complex64> = v.iter().map(|&(r, i)| Complex64::new(r.into(), i.into())).collect();
            let back = decode_iq(&encode_iq(&samples)).unwrap();
            prop_assert_eq!(back, v.iter().map(|&(r, i)| Complex32::new(r, i)).collect::<Vec<_>>());
        }
    }
}
