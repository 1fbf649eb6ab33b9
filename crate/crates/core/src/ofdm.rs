//! OFDM framing, Schmidl-Cox synchronisation and preamble channel estimation.
//!
//! All transforms are unitary (`1/sqrt(M)` on both directions), so a frequency
//! bin with `|X|^2 = 2` on half of the bins gives unit time-domain power.
//!
//! A frame is one Schmidl-Cox training symbol followed by data symbols, each
//! with a cyclic prefix. The training symbol sounds only even bins, so its
//! body consists of two identical halves.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel;

/// Stream used to draw the preamble PN sequence from its seed.
const STREAM_PN: u64 = 0x5c_0001;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OfdmError {
    #[error("numerology field `{field}` is invalid: {reason}")]
    Numerology { field: &'static str, reason: String },
    #[error("payload of {got} bits exceeds frame capacity of {capacity} bits")]
    PayloadTooLong { got: usize, capacity: usize },
    #[error("expected {expected} samples, got {got}")]
    Length { expected: usize, got: usize },
    #[error("no preamble: half-symbol correlation metric {metric:.3} below floor")]
    NoPreamble { metric: f64 },
    #[error("known preamble value on even bin {0} is zero")]
    ZeroPilot(usize),
}

/// OFDM parameters. Defaults are 64-point FFT, 48 data subcarriers, 16-sample
/// cyclic prefix, 3.125 MSps, four data symbols per training symbol and a
/// 2.45 GHz carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmNumerology {
    pub fft_size: usize,
    pub data_subcarriers: usize,
    pub cp_len: usize,
    pub sample_rate: f64,
    pub data_syms_per_preamble: usize,
    pub carrier_freq: f64,
}

impl Default for OfdmNumerology {
    fn default() -> Self {
        Self {
            fft_size: 64,
            data_subcarriers: 48,
            cp_len: 16,
            sample_rate: 3.125e6,
            data_syms_per_preamble: 4,
            carrier_freq: 2.45e9,
        }
    }
}

impl OfdmNumerology {
    pub fn validate(&self) -> Result<(), OfdmError> {
        let bad = |field, reason: &str| {
            Err(OfdmError::Numerology {
                field,
                reason: reason.to_string(),
            })
        };
        if self.fft_size < 4 || !self.fft_size.is_multiple_of(2) {
            return bad("fft_size", "must be even and at least 4");
        }
        if self.cp_len >= self.fft_size {
            return bad("cp_len", "must be shorter than fft_size");
        }
        if self.data_subcarriers == 0 || !self.data_subcarriers.is_multiple_of(2) {
            return bad("data_subcarriers", "must be even and positive");
        }
        if self.data_subcarriers > self.fft_size - 1 {
            return bad("data_subcarriers", "must leave the DC bin free");
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad("sample_rate", "must be positive");
        }
        if !(self.carrier_freq.is_finite() && self.carrier_freq > 0.0) {
            return bad("carrier_freq", "must be positive");
        }
        Ok(())
    }

    /// Samples in one OFDM symbol including its cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    /// Samples in one frame: training symbol plus data symbols.
    pub fn frame_len(&self) -> usize {
        (1 + self.data_syms_per_preamble) * self.symbol_len()
    }

    /// Frame duration in seconds, i.e. the channel measurement period.
    pub fn frame_duration(&self) -> f64 {
        self.frame_len() as f64 / self.sample_rate
    }

    /// Payload bits carried by one frame (QPSK on every data bin).
    pub fn payload_capacity(&self) -> usize {
        2 * self.data_subcarriers * self.data_syms_per_preamble
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.sample_rate / self.fft_size as f64
    }

    /// FFT indices of the data bins: `+1..=+D/2` then `-D/2..=-1`, DC unused.
    pub fn data_bins(&self) -> Vec<usize> {
        let half = self.data_subcarriers / 2;
        (1..=half).chain(self.fft_size - half..self.fft_size).collect()
    }
}

/// Per-packet frequency-response estimate seen by the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub h: Vec<Complex64>,
    pub timestamp_k: u64,
    /// Diagnostic tag; never read by the detector.
    pub source_label: String,
}

impl ChannelSnapshot {
    pub fn new(h: Vec<Complex64>, timestamp_k: u64, source_label: impl Into<String>) -> Self {
        Self {
            h,
            timestamp_k,
            source_label: source_label.into(),
        }
    }
}

/// Time-domain frame and the bins it occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmFrame {
    pub preamble: Vec<Complex64>,
    pub data_symbols: Vec<Vec<Complex64>>,
    pub subcarrier_map: Vec<usize>,
}

impl OfdmFrame {
    /// Concatenated transmit samples.
    pub fn samples(&self) -> Vec<Complex64> {
        let mut out = self.preamble.clone();
        for sym in &self.data_symbols {
            out.extend_from_slice(sym);
        }
        out
    }
}

/// Unitary FFT pair of one size, reusable across calls.
#[derive(Clone)]
pub struct Transforms {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Transforms {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            scale: 1.0 / (size as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, time: &[Complex64]) -> Vec<Complex64> {
        let mut buf = time.to_vec();
        self.forward.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
        buf
    }

    pub fn inverse(&self, bins: &[Complex64]) -> Vec<Complex64> {
        let mut buf = bins.to_vec();
        self.inverse.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
        buf
    }
}

impl std::fmt::Debug for Transforms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transforms").field("size", &self.len()).finish()
    }
}

fn with_cp(body: &[Complex64], cp_len: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(body.len() + cp_len);
    out.extend_from_slice(&body[body.len() - cp_len..]);
    out.extend_from_slice(body);
    out
}

fn qpsk(b0: bool, b1: bool) -> Complex64 {
    Complex64::new(if b0 { -1.0 } else { 1.0 }, if b1 { -1.0 } else { 1.0 })
}

/// Frequency-domain training symbol: `+-1 +-j` (magnitude sqrt(2)) on even
/// bins drawn from `pn_seed`, zero on odd bins.
pub fn sc_preamble_bins(numerology: &OfdmNumerology, pn_seed: u64) -> Vec<Complex64> {
    let mut rng = channel::stream(pn_seed, STREAM_PN);
    (0..numerology.fft_size)
        .map(|n| {
            if n % 2 == 0 {
                qpsk(rng.random(), rng.random())
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Time-domain Schmidl-Cox training symbol with cyclic prefix.
pub fn gen_sc_preamble(numerology: &OfdmNumerology, pn_seed: u64) -> Vec<Complex64> {
    let tx = Transforms::new(numerology.fft_size);
    let body = tx.inverse(&sc_preamble_bins(numerology, pn_seed));
    with_cp(&body, numerology.cp_len)
}

/// Modulator/demodulator for one numerology and training sequence.
#[derive(Debug, Clone)]
pub struct Modem {
    numerology: OfdmNumerology,
    transforms: Transforms,
    preamble_bins: Vec<Complex64>,
    preamble: Vec<Complex64>,
    data_bins: Vec<usize>,
    data_amplitude: f64,
}

impl Modem {
    pub fn new(numerology: OfdmNumerology, pn_seed: u64) -> Result<Self, OfdmError> {
        numerology.validate()?;
        let transforms = Transforms::new(numerology.fft_size);
        let preamble_bins = sc_preamble_bins(&numerology, pn_seed);
        let preamble = with_cp(&transforms.inverse(&preamble_bins), numerology.cp_len);
        // QPSK points are +-1 +-j; scale so the data symbols also have unit
        // time-domain power.
        let data_amplitude = (numerology.fft_size as f64 / (2.0 * numerology.data_subcarriers as f64)).sqrt();
        Ok(Self {
            numerology,
            transforms,
            preamble_bins,
            preamble,
            data_bins: numerology.data_bins(),
            data_amplitude,
        })
    }

    pub fn numerology(&self) -> &OfdmNumerology {
        &self.numerology
    }

    pub fn transforms(&self) -> &Transforms {
        &self.transforms
    }

    pub fn preamble_bins(&self) -> &[Complex64] {
        &self.preamble_bins
    }

    pub fn preamble(&self) -> &[Complex64] {
        &self.preamble
    }

    /// Maps up to [`OfdmNumerology::payload_capacity`] bits onto a frame,
    /// zero-padding short payloads.
    pub fn modulate(&self, payload_bits: &[bool]) -> Result<OfdmFrame, OfdmError> {
        let capacity = self.numerology.payload_capacity();
        if payload_bits.len() > capacity {
            return Err(OfdmError::PayloadTooLong {
                got: payload_bits.len(),
                capacity,
            });
        }
        let mut bits = payload_bits.iter().copied().chain(std::iter::repeat(false));
        let data_symbols = (0..self.numerology.data_syms_per_preamble)
            .map(|_| {
                let mut bins = vec![Complex64::new(0.0, 0.0); self.numerology.fft_size];
                for &n in &self.data_bins {
                    let (b0, b1) = (bits.next().unwrap_or(false), bits.next().unwrap_or(false));
                    bins[n] = qpsk(b0, b1) * self.data_amplitude;
                }
                with_cp(&self.transforms.inverse(&bins), self.numerology.cp_len)
            })
            .collect();
        Ok(OfdmFrame {
            preamble: self.preamble.clone(),
            data_symbols,
            subcarrier_map: self.data_bins.clone(),
        })
    }

    /// Equalises and hard-decides the data symbols of an aligned frame
    /// (`frame_len` samples starting at the training symbol's cyclic prefix).
    pub fn demodulate(&self, frame: &[Complex64], channel: &ChannelSnapshot) -> Result<Vec<bool>, OfdmError> {
        let expected = self.numerology.frame_len();
        if frame.len() < expected {
            return Err(OfdmError::Length {
                expected,
                got: frame.len(),
            });
        }
        let sym_len = self.numerology.symbol_len();
        let cp = self.numerology.cp_len;
        let mut bits = Vec::with_capacity(self.numerology.payload_capacity());
        for s in 0..self.numerology.data_syms_per_preamble {
            let start = (s + 1) * sym_len + cp;
            let bins = self.transforms.forward(&frame[start..start + self.numerology.fft_size]);
            for &n in &self.data_bins {
                let z = bins[n] / channel.h[n];
                bits.push(z.re < 0.0);
                bits.push(z.im < 0.0);
            }
        }
        Ok(bits)
    }

    /// Least-squares channel estimate from an aligned, CFO-corrected
    /// training-symbol body; see [`estimate_channel`].
    pub fn estimate_channel(
        &self,
        rx_preamble: &[Complex64],
        k: u64,
        label: &str,
    ) -> Result<ChannelSnapshot, OfdmError> {
        estimate_channel_with(&self.transforms, rx_preamble, &self.preamble_bins, k, label)
    }
}

/// One-shot modulation with a fresh [`Modem`].
pub fn modulate_frame(
    numerology: &OfdmNumerology,
    payload_bits: &[bool],
    pn_seed: u64,
) -> Result<OfdmFrame, OfdmError> {
    Modem::new(*numerology, pn_seed)?.modulate(payload_bits)
}

/// Schmidl-Cox timing metric `M(d) = |P(d)|^2 / R(d)^2` for every start
/// offset `d` with a full window, where
/// `P(d) = sum_m conj(r[d+m]) r[d+m+L]` over the half length `L = M/2` and
/// `R(d)` is half the energy of the whole `M`-sample window. With this
/// normalisation `M(d) <= 1`, reaching 1 exactly for identical halves.
///
/// The returned vector has `rx.len() - fft_size + 1` entries (empty if the
/// input is shorter than one FFT).
pub fn sc_timing_metric(rx: &[Complex64], numerology: &OfdmNumerology) -> Vec<f64> {
    let m = numerology.fft_size;
    let half = m / 2;
    if rx.len() < m {
        return Vec::new();
    }
    let count = rx.len() - m + 1;
    // Prefix sums keep this linear in the buffer length.
    let mut corr = vec![Complex64::new(0.0, 0.0); rx.len() - half + 1];
    for i in 0..rx.len() - half {
        corr[i + 1] = corr[i] + rx[i].conj() * rx[i + half];
    }
    let mut energy = vec![0.0; rx.len() + 1];
    for (i, s) in rx.iter().enumerate() {
        energy[i + 1] = energy[i] + s.norm_sqr();
    }
    (0..count)
        .map(|d| {
            let p = corr[d + half] - corr[d];
            let r = 0.5 * (energy[d + m] - energy[d]);
            if r > 0.0 {
                (p.norm_sqr() / (r * r)).min(1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Minimum half-symbol correlation metric accepted as a preamble.
pub const CFO_METRIC_FLOOR: f64 = 0.1;

/// Coarse carrier frequency offset in Hz from the phase of the half-symbol
/// autocorrelation of an aligned training-symbol body (cyclic prefix
/// removed). Unambiguous for offsets below one subcarrier spacing.
pub fn estimate_cfo(rx_preamble: &[Complex64], numerology: &OfdmNumerology) -> Result<f64, OfdmError> {
    let m = numerology.fft_size;
    if rx_preamble.len() != m {
        return Err(OfdmError::Length {
            expected: m,
            got: rx_preamble.len(),
        });
    }
    let half = m / 2;
    let (first, second) = rx_preamble.split_at(half);
    let p: Complex64 = first.iter().zip(second).map(|(a, b)| a.conj() * b).sum();
    let r = 0.5 * rx_preamble.iter().map(|s| s.norm_sqr()).sum::<f64>();
    let metric = if r > 0.0 { p.norm_sqr() / (r * r) } else { 0.0 };
    if metric.is_nan() || metric < CFO_METRIC_FLOOR {
        return Err(OfdmError::NoPreamble { metric });
    }
    Ok(p.arg() / (2.0 * PI * half as f64 / numerology.sample_rate))
}

/// Rotates `samples` by `exp(sign * j*2*pi*f*n/fs)`, `n` counted from zero.
fn rotate(samples: &mut [Complex64], freq_hz: f64, sample_rate: f64, sign: f64) {
    let w = sign * 2.0 * PI * freq_hz / sample_rate;
    for (n, s) in samples.iter_mut().enumerate() {
        *s *= Complex64::from_polar(1.0, w * n as f64);
    }
}

/// Applies a frequency offset of `freq_hz` (transmitter/receiver LO mismatch).
pub fn apply_cfo(samples: &mut [Complex64], freq_hz: f64, sample_rate: f64) {
    rotate(samples, freq_hz, sample_rate, 1.0);
}

/// Removes a frequency offset of `freq_hz`.
pub fn correct_cfo(samples: &mut [Complex64], freq_hz: f64, sample_rate: f64) {
    rotate(samples, freq_hz, sample_rate, -1.0);
}

/// Least-squares channel estimate from an aligned, CFO-corrected training
/// symbol body of `fft_size` samples.
///
/// Even bins get `Y[n] / X[n]`; each odd bin is the mean of its two even
/// neighbours, wrapping from the last bin to bin 0.
pub fn estimate_channel(
    rx_preamble: &[Complex64],
    known_preamble_bins: &[Complex64],
    numerology: &OfdmNumerology,
) -> Result<ChannelSnapshot, OfdmError> {
    let transforms = Transforms::new(numerology.fft_size);
    estimate_channel_with(&transforms, rx_preamble, known_preamble_bins, 0, "")
}

fn estimate_channel_with(
    transforms: &Transforms,
    rx_preamble: &[Complex64],
    known: &[Complex64],
    k: u64,
    label: &str,
) -> Result<ChannelSnapshot, OfdmError> {
    let m = transforms.len();
    for (got, expected) in [(rx_preamble.len(), m), (known.len(), m)] {
        if got != expected {
            return Err(OfdmError::Length { expected, got });
        }
    }
    if let Some(n) = (0..m).step_by(2).find(|&n| known[n] == Complex64::new(0.0, 0.0)) {
        return Err(OfdmError::ZeroPilot(n));
    }
    let y = transforms.forward(rx_preamble);
    let mut h = vec![Complex64::new(0.0, 0.0); m];
    for n in (0..m).step_by(2) {
        h[n] = y[n] / known[n];
    }
    for n in (1..m).step_by(2) {
        h[n] = 0.5 * (h[n - 1] + h[(n + 1) % m]);
    }
    Ok(ChannelSnapshot::new(h, k, label))
}

/// Random payload bits.
pub fn random_bits<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<bool> {
    (0..count).map(|_| rng.random()).collect()
}
