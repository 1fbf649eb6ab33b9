//! Channel profile monitoring decision core.
//!
//! A packet is processed when the mean square error between its channel
//! snapshot and the last accepted snapshot is strictly below the threshold,
//! and dropped otherwise.

use std::fmt;

use ndarray::ArrayView2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ofdm::ChannelSnapshot;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("empty input")]
    Empty,
    #[error("correlation undefined: zero variance")]
    DegenerateVariance,
    #[error("reference set vectors differ in length ({ab} vs {ae})")]
    UnequalReference { ab: usize, ae: usize },
    #[error("reference error {0} is negative or not finite")]
    BadReferenceValue(f64),
    #[error("detector has no threshold")]
    Uncalibrated,
    #[error("threshold must be finite and non-negative, got {0}")]
    BadThreshold(f64),
}

/// Mean of `|x_ij - y_ij|^2` over all `L x M` entries.
pub fn mse(x: ArrayView2<'_, Complex64>, y: ArrayView2<'_, Complex64>) -> Result<f64, DetectorError> {
    if x.dim() != y.dim() {
        return Err(DetectorError::ShapeMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    if x.is_empty() {
        return Err(DetectorError::Empty);
    }
    let sum: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(sum / x.len() as f64)
}

/// [`mse`] of two equally long vectors viewed as `1 x M` matrices.
pub fn mse_vec(x: &[Complex64], y: &[Complex64]) -> Result<f64, DetectorError> {
    fn row(v: &[Complex64]) -> ArrayView2<'_, Complex64> {
        ArrayView2::from_shape((1, v.len()), v).expect("1 x len view")
    }
    mse(row(x), row(y))
}

/// Real-valued representation used for the Pearson correlation of complex
/// snapshots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PccMode {
    /// Real parts followed by imaginary parts (length `2M`).
    #[default]
    RealImag,
    /// Magnitudes only (length `M`).
    Magnitude,
}

fn flatten(v: &[Complex64], mode: PccMode) -> Vec<f64> {
    match mode {
        PccMode::RealImag => v.iter().map(|c| c.re).chain(v.iter().map(|c| c.im)).collect(),
        PccMode::Magnitude => v.iter().map(|c| c.norm()).collect(),
    }
}

/// Pearson correlation of two real vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, DetectorError> {
    if x.len() != y.len() {
        return Err(DetectorError::ShapeMismatch {
            left: (1, x.len()),
            right: (1, y.len()),
        });
    }
    if x.len() < 2 {
        return Err(DetectorError::DegenerateVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(DetectorError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between two complex snapshots under `mode`.
pub fn pcc(x: &[Complex64], y: &[Complex64], mode: PccMode) -> Result<f64, DetectorError> {
    if x.len() != y.len() {
        return Err(DetectorError::ShapeMismatch {
            left: (1, x.len()),
            right: (1, y.len()),
        });
    }
    pearson(&flatten(x, mode), &flatten(y, mode))
}

/// Per-packet errors recorded while both transmitters' origins are known.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceSet {
    /// Bob snapshot against the previous Bob snapshot.
    pub e_ab_ref: Vec<f64>,
    /// Eve snapshot against the previous Bob snapshot.
    pub e_ae_ref: Vec<f64>,
}

impl ReferenceSet {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.e_ab_ref.len() != self.e_ae_ref.len() {
            return Err(DetectorError::UnequalReference {
                ab: self.e_ab_ref.len(),
                ae: self.e_ae_ref.len(),
            });
        }
        if self.e_ab_ref.is_empty() {
            return Err(DetectorError::Empty);
        }
        match self
            .e_ab_ref
            .iter()
            .chain(&self.e_ae_ref)
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            Some(&v) => Err(DetectorError::BadReferenceValue(v)),
            None => Ok(()),
        }
    }

    pub fn mean_ab(&self) -> f64 {
        mean(&self.e_ab_ref)
    }

    pub fn mean_ae(&self) -> f64 {
        mean(&self.e_ae_ref)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// How the threshold is derived from a [`ReferenceSet`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// `0.5 * |mean(e_ab) - mean(e_ae)|`.
    #[default]
    HalfGap,
    /// `0.5 * (mean(e_ab) + mean(e_ae))`. Not used by the reference setups.
    Midpoint,
}

/// Threshold `e_th = 0.5 * |mean(e_ab_ref) - mean(e_ae_ref)|`.
pub fn calibrate_threshold(refset: &ReferenceSet) -> Result<f64, DetectorError> {
    calibrate_threshold_with(refset, ThresholdRule::HalfGap)
}

pub fn calibrate_threshold_with(refset: &ReferenceSet, rule: ThresholdRule) -> Result<f64, DetectorError> {
    refset.validate()?;
    let (ab, ae) = (refset.mean_ab(), refset.mean_ae());
    Ok(match rule {
        ThresholdRule::HalfGap => 0.5 * (ab - ae).abs(),
        ThresholdRule::Midpoint => 0.5 * (ab + ae),
    })
}

/// When the reference snapshot advances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdatePolicy {
    /// Only accepted packets replace the reference.
    #[default]
    OnAccept,
    /// Every decided packet replaces the reference.
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Drop,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::Drop => "drop",
        })
    }
}

/// Ground-truth transmitter, for evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Bob,
    Eve,
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::Bob => "bob",
            Truth::Eve => "eve",
        })
    }
}

/// Outcome for one received packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub k: u64,
    /// MSE against the reference; NaN when the packet was not synchronised.
    pub e: f64,
    /// PCC against the reference; NaN when undefined.
    pub pcc: f64,
    pub verdict: Verdict,
    pub truth: Truth,
    pub sync_ok: bool,
}

impl ErrorRecord {
    /// Record for a packet lost before channel estimation.
    pub fn sync_failure(k: u64, truth: Truth) -> Self {
        Self {
            k,
            e: f64::NAN,
            pcc: f64::NAN,
            verdict: Verdict::Drop,
            truth,
            sync_ok: false,
        }
    }
}

/// Last accepted snapshot plus the decision threshold.
#[derive(Debug, Clone)]
pub struct DetectorState {
    reference: Option<ChannelSnapshot>,
    threshold: Option<f64>,
    policy: UpdatePolicy,
    pcc_mode: PccMode,
}

impl DetectorState {
    pub fn new(policy: UpdatePolicy) -> Self {
        Self {
            reference: None,
            threshold: None,
            policy,
            pcc_mode: PccMode::default(),
        }
    }

    pub fn with_threshold(mut self, e_th: f64) -> Result<Self, DetectorError> {
        self.set_threshold(e_th)?;
        Ok(self)
    }

    pub fn with_pcc_mode(mut self, mode: PccMode) -> Self {
        self.pcc_mode = mode;
        self
    }

    pub fn set_threshold(&mut self, e_th: f64) -> Result<(), DetectorError> {
        if !(e_th.is_finite() && e_th >= 0.0) {
            return Err(DetectorError::BadThreshold(e_th));
        }
        self.threshold = Some(e_th);
        Ok(())
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn reference(&self) -> Option<&ChannelSnapshot> {
        self.reference.as_ref()
    }

    pub fn policy(&self) -> UpdatePolicy {
        self.policy
    }

    /// Installs a trusted snapshot as reference (initial authentication).
    pub fn seed_reference(&mut self, snapshot: ChannelSnapshot) {
        self.reference = Some(snapshot);
    }

    /// MSE of `snapshot` against the current reference, `None` before seeding.
    pub fn packet_error(&self, snapshot: &ChannelSnapshot) -> Option<Result<f64, DetectorError>> {
        self.reference.as_ref().map(|r| mse_vec(&snapshot.h, &r.h))
    }

    /// Applies the accept/drop rule to `snapshot`.
    ///
    /// Without a reference the packet is accepted by fiat and becomes the
    /// reference.
    pub fn decide(&mut self, snapshot: ChannelSnapshot, truth: Truth) -> Result<ErrorRecord, DetectorError> {
        let e_th = self.threshold.ok_or(DetectorError::Uncalibrated)?;
        let k = snapshot.timestamp_k;
        let Some(reference) = self.reference.as_ref() else {
            self.reference = Some(snapshot);
            return Ok(ErrorRecord {
                k,
                e: 0.0,
                pcc: 1.0,
                verdict: Verdict::Accept,
                truth,
                sync_ok: true,
            });
        };
        let e = mse_vec(&snapshot.h, &reference.h)?;
        let pcc = pcc(&snapshot.h, &reference.h, self.pcc_mode).unwrap_or(f64::NAN);
        let verdict = if e < e_th { Verdict::Accept } else { Verdict::Drop };
        if verdict == Verdict::Accept || self.policy == UpdatePolicy::Always {
            self.reference = Some(snapshot);
        }
        Ok(ErrorRecord {
            k,
            e,
            pcc,
            verdict,
            truth,
            sync_ok: true,
        })
    }
}
