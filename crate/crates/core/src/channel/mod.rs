//! Tapped-delay-line Rayleigh channel simulation.
//!
//! Each transmitter-to-Alice link is a set of complex Gaussian taps with an
//! exponential power delay profile. Taps evolve per packet interval as a
//! first-order Gauss-Markov process. Bob and Eve links are coupled at
//! construction through the Clarke spatial correlation `J0(2*pi*d/lambda)`
//! and evolve independently afterwards.

mod bessel;

pub use bessel::bessel_j0;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Frequency bins of a channel snapshot.
pub const DEFAULT_BINS: usize = 64;

/// Default tap count; fits inside the 16-sample cyclic prefix.
pub const DEFAULT_NUM_TAPS: usize = 8;

/// Ratio between the last and the first tap power in the default profile (-20 dB).
pub const DEFAULT_LAST_TAP_DB: f64 = -20.0;

// Stream identifiers for the per-link ChaCha generators.
const STREAM_BOB_INIT: u64 = 0x0b0b_0001;
const STREAM_EVE_INNOVATION: u64 = 0x0e0e_0001;
const STREAM_BOB_EVOLUTION: u64 = 0x0b0b_0002;
const STREAM_EVE_EVOLUTION: u64 = 0x0e0e_0002;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("temporal_rho must lie in [0, 1], got {0}")]
    TemporalRho(f64),
    #[error("num_taps must be at least 1")]
    NoTaps,
    #[error("pdp decay constant must be positive and finite, got {0}")]
    PdpDecay(f64),
    #[error("number of frequency bins ({bins}) must be at least the tap count ({taps})")]
    TooFewBins { bins: usize, taps: usize },
    #[error("geometry field `{field}` is invalid: {value}")]
    Geometry { field: &'static str, value: f64 },
}

/// Positions of Alice, Bob and Eve as pairwise distances, plus the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGeometry {
    /// Alice to Bob distance in metres.
    #[serde(default = "default_link_distance")]
    pub d_ab: f64,
    /// Alice to Eve distance in metres.
    #[serde(default = "default_link_distance")]
    pub d_ae: f64,
    /// Bob to Eve distance in metres.
    #[serde(default = "default_d_be")]
    pub d_be: f64,
    /// Carrier frequency in Hz.
    #[serde(default = "default_carrier")]
    pub carrier_freq: f64,
}

fn default_link_distance() -> f64 {
    3.0
}

fn default_d_be() -> f64 {
    0.10
}

fn default_carrier() -> f64 {
    2.45e9
}

impl Default for SpatialGeometry {
    fn default() -> Self {
        Self {
            d_ab: default_link_distance(),
            d_ae: default_link_distance(),
            d_be: default_d_be(),
            carrier_freq: default_carrier(),
        }
    }
}

impl SpatialGeometry {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn with_d_be(mut self, d_be: f64) -> Self {
        self.d_be = d_be;
        self
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (field, value) in [("d_ab", self.d_ab), ("d_ae", self.d_ae), ("d_be", self.d_be)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ChannelError::Geometry { field, value });
            }
        }
        if !(self.carrier_freq.is_finite() && self.carrier_freq > 0.0) {
            return Err(ChannelError::Geometry {
                field: "carrier_freq",
                value: self.carrier_freq,
            });
        }
        Ok(())
    }
}

/// Clarke spatial correlation between the Bob and Eve channels,
/// `J0(2*pi*d_BE / lambda)`, clamped to [-1, 1].
pub fn spatial_correlation(geometry: &SpatialGeometry) -> f64 {
    let arg = 2.0 * PI * geometry.d_be / geometry.wavelength();
    bessel_j0(arg).clamp(-1.0, 1.0)
}

/// Exponential power delay profile: tap `p` carries power proportional to
/// `exp(-p / decay)`, normalised so the powers sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    powers: Vec<f64>,
}

impl PowerDelayProfile {
    pub fn exponential(num_taps: usize, decay: f64) -> Result<Self, ChannelError> {
        if num_taps == 0 {
            return Err(ChannelError::NoTaps);
        }
        if !(decay.is_finite() && decay > 0.0) {
            return Err(ChannelError::PdpDecay(decay));
        }
        let raw: Vec<f64> = (0..num_taps).map(|p| (-(p as f64) / decay).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            powers: raw.into_iter().map(|p| p / total).collect(),
        })
    }

    /// Decay constant that puts the last of `num_taps` taps `last_tap_db`
    /// below the first. A single tap gets an arbitrary (irrelevant) constant.
    pub fn decay_for_span(num_taps: usize, last_tap_db: f64) -> f64 {
        if num_taps <= 1 || last_tap_db >= 0.0 {
            return 1.0;
        }
        let ratio = 10f64.powf(last_tap_db / 10.0);
        (num_taps - 1) as f64 / -ratio.ln()
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn num_taps(&self) -> usize {
        self.powers.len()
    }
}

/// Parameters shared by a Bob/Eve link pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub num_taps: usize,
    pub pdp_decay: f64,
    pub temporal_rho: f64,
    /// Frequency-response length (FFT size of the OFDM numerology).
    pub bins: usize,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            num_taps: DEFAULT_NUM_TAPS,
            pdp_decay: PowerDelayProfile::decay_for_span(DEFAULT_NUM_TAPS, DEFAULT_LAST_TAP_DB),
            temporal_rho: 1.0,
            bins: DEFAULT_BINS,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..=1.0).contains(&self.temporal_rho) {
            return Err(ChannelError::TemporalRho(self.temporal_rho));
        }
        if self.num_taps == 0 {
            return Err(ChannelError::NoTaps);
        }
        if self.bins < self.num_taps {
            return Err(ChannelError::TooFewBins {
                bins: self.bins,
                taps: self.num_taps,
            });
        }
        PowerDelayProfile::exponential(self.num_taps, self.pdp_decay).map(|_| ())
    }
}

/// One channel state: impulse response taps and their zero-padded DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<Complex64>,
    freq_response: Vec<Complex64>,
}

impl ChannelRealization {
    /// Builds a realization from taps, computing the `bins`-point DFT.
    pub fn from_taps(taps: Vec<Complex64>, bins: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(bins);
        Self::with_fft(taps, fft.as_ref())
    }

    fn with_fft(taps: Vec<Complex64>, fft: &dyn Fft<f64>) -> Self {
        let mut freq_response = vec![Complex64::new(0.0, 0.0); fft.len()];
        freq_response[..taps.len()].copy_from_slice(&taps);
        fft.process(&mut freq_response);
        Self { taps, freq_response }
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn freq_response(&self) -> &[Complex64] {
        &self.freq_response
    }

    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

/// Stateful simulated channel from one transmitter to Alice.
pub struct FadingLink {
    pdp: PowerDelayProfile,
    temporal_rho: f64,
    state: ChannelRealization,
    rng: ChaCha8Rng,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FadingLink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FadingLink")
            .field("pdp", &self.pdp)
            .field("temporal_rho", &self.temporal_rho)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl FadingLink {
    /// Independent link with taps drawn from `seed`.
    pub fn new(params: &LinkParams, seed: u64) -> Result<Self, ChannelError> {
        params.validate()?;
        let pdp = PowerDelayProfile::exponential(params.num_taps, params.pdp_decay)?;
        let mut init = stream(seed, STREAM_BOB_INIT);
        let taps = draw_taps(&pdp, &mut init);
        let fft = FftPlanner::new().plan_fft_forward(params.bins);
        let state = ChannelRealization::with_fft(taps, fft.as_ref());
        Ok(Self {
            pdp,
            temporal_rho: params.temporal_rho,
            state,
            rng: stream(seed, STREAM_BOB_EVOLUTION),
            fft,
        })
    }

    pub fn current(&self) -> &ChannelRealization {
        &self.state
    }

    pub fn temporal_rho(&self) -> f64 {
        self.temporal_rho
    }

    pub fn pdp(&self) -> &PowerDelayProfile {
        &self.pdp
    }

    /// Replaces the generator driving temporal evolution. Used to give
    /// calibration and evaluation runs disjoint evolution streams over the
    /// same initial channel.
    pub fn reseed_evolution(&mut self, seed: u64, stream_id: u64) {
        self.rng = stream(seed, stream_id);
    }

    /// Advances one packet interval:
    /// `h_p <- rho * h_p + sqrt(1 - rho^2) * w_p`, `w_p ~ CN(0, pdp_p)`.
    pub fn step(&mut self) -> &ChannelRealization {
        let rho = self.temporal_rho;
        if rho < 1.0 {
            let innovation = (1.0 - rho * rho).sqrt();
            let taps: Vec<Complex64> = self
                .state
                .taps
                .iter()
                .zip(self.pdp.powers())
                .map(|(&h, &power)| h * rho + complex_gaussian(&mut self.rng, power) * innovation)
                .collect();
            self.state = ChannelRealization::with_fft(taps, self.fft.as_ref());
        }
        &self.state
    }
}

/// Builds the Bob and Eve links for one geometry.
///
/// Eve's initial taps are `rho_s * h_B + sqrt(1 - rho_s^2) * g` with `g` an
/// independent draw from the same profile. For a fixed `seed` Bob's channel
/// and `g` do not depend on the geometry, so moving Eve changes only her link.
pub fn make_linked_pair(
    geometry: &SpatialGeometry,
    params: &LinkParams,
    seed: u64,
) -> Result<(FadingLink, FadingLink), ChannelError> {
    geometry.validate()?;
    let bob = FadingLink::new(params, seed)?;
    let rho_s = spatial_correlation(geometry);
    let spread = (1.0 - rho_s * rho_s).max(0.0).sqrt();

    let mut innovation = stream(seed, STREAM_EVE_INNOVATION);
    let g = draw_taps(&bob.pdp, &mut innovation);
    let eve_taps: Vec<Complex64> = bob
        .state
        .taps
        .iter()
        .zip(&g)
        .map(|(&h, &g)| h * rho_s + g * spread)
        .collect();
    let eve = FadingLink {
        pdp: bob.pdp.clone(),
        temporal_rho: bob.temporal_rho,
        state: ChannelRealization::with_fft(eve_taps, bob.fft.as_ref()),
        rng: stream(seed, STREAM_EVE_EVOLUTION),
        fft: Arc::clone(&bob.fft),
    };
    Ok((bob, eve))
}

/// Noise variance giving `snr_db` against a signal of power `signal_power`.
/// Infinite SNR yields zero.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power / 10f64.powf(snr_db / 10.0)
    }
}

/// Adds circular complex white Gaussian noise of total variance `variance`.
pub fn add_awgn<R: Rng + ?Sized>(samples: &mut [Complex64], variance: f64, rng: &mut R) {
    if variance <= 0.0 {
        return;
    }
    for s in samples.iter_mut() {
        *s += complex_gaussian(rng, variance);
    }
}

/// Passes `samples` through the tapped delay line and adds receiver noise.
///
/// The output is the full linear convolution (`len + taps - 1` samples).
/// Noise variance is set from the mean transmitted power and `snr_db`; with
/// the unit-power profile this is the SNR averaged over fading. An infinite
/// `snr_db` disables noise and consumes no randomness.
pub fn apply_channel<R: Rng + ?Sized>(
    samples: &[Complex64],
    realization: &ChannelRealization,
    snr_db: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let taps = realization.taps();
    let mut out = vec![Complex64::new(0.0, 0.0); samples.len() + taps.len() - 1];
    for (i, &x) in samples.iter().enumerate() {
        for (p, &h) in taps.iter().enumerate() {
            out[i + p] += x * h;
        }
    }
    let tx_power = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    add_awgn(&mut out, noise_variance(tx_power, snr_db), rng);
    out
}

/// Deterministic generator for one `(seed, stream)` pair.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

fn draw_taps<R: Rng + ?Sized>(pdp: &PowerDelayProfile, rng: &mut R) -> Vec<Complex64> {
    pdp.powers().iter().map(|&p| complex_gaussian(rng, p)).collect()
}
