//! Reference implementations that do not share code with the library.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Fractional bits of the fixed-point series accumulator.
const FRAC_BITS: u64 = 320;

/// J0 by its Maclaurin series, evaluated exactly on the binary value of `x`
/// in 320-bit fixed point, so cancellation between huge terms is harmless.
pub fn j0_series(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    // x = mant * 2^exp exactly.
    let bits = x.abs().to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let (mant, exp) = if raw_exp == 0 {
        (bits & ((1 << 52) - 1), -1074)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), raw_exp - 1075)
    };
    let mant_sq = BigInt::from(mant) * BigInt::from(mant);
    // x^2 / 4 = mant^2 * 2^(2*exp - 2)
    let shift = 2 * exp - 2;

    let one = BigInt::from(1) << FRAC_BITS;
    let mut term = one.clone();
    let mut sum = one;
    let cutoff = BigInt::from(1) << (FRAC_BITS - 100);
    let mut k: u64 = 1;
    loop {
        term *= &mant_sq;
        term = if shift >= 0 {
            term << shift as u64
        } else {
            term >> (-shift) as u64
        };
        term /= BigInt::from(k) * BigInt::from(k);
        if k % 2 == 1 {
            sum -= &term;
        } else {
            sum += &term;
        }
        if term < cutoff && k as f64 > x {
            break;
        }
        k += 1;
    }
    let top: BigInt = sum >> (FRAC_BITS - 62);
    let as_i128: i128 = top.try_into().expect("J0 magnitude is at most 1");
    as_i128 as f64 / (1u64 << 62) as f64
}

/// Direct `O(P*M)` DFT of zero-padded taps.
pub fn dft(taps: &[Complex64], bins: usize) -> Vec<Complex64> {
    (0..bins)
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, &h) in taps.iter().enumerate() {
                let angle = -2.0 * PI * ((n * p) % bins) as f64 / bins as f64;
                acc += h * Complex64::new(angle.cos(), angle.sin());
            }
            acc
        })
        .collect()
}

/// Elementwise brute-force mean square error over nested rows.
pub fn brute_mse(x: &[Vec<Complex64>], y: &[Vec<Complex64>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..x.len() {
        for j in 0..x[i].len() {
            let dr = x[i][j].re - y[i][j].re;
            let di = x[i][j].im - y[i][j].im;
            sum += dr * dr + di * di;
            count += 1;
        }
    }
    sum / count as f64
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
