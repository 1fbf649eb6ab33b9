//! End-to-end experiments: channel simulation, OFDM reception and the
//! detector, driven by a [`ScenarioConfig`].
//!
//! Every run starts with one bootstrap packet from Bob that seeds the
//! detector reference (initial trust is assumed) and is not counted. Both
//! links advance one packet interval per slot, whoever transmits.
//!
//! Random streams are derived from the config seed. The initial channel
//! depends only on the seed, so calibration and evaluation see the same
//! environment; their noise, payload and channel-evolution streams are
//! disjoint.

use std::collections::VecDeque;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, add_awgn, apply_channel, make_linked_pair, noise_variance, ChannelError, FadingLink};
use crate::config::{AttackSchedule, ConfigError, ScenarioConfig, SweepAxis};
use crate::detector::{
    calibrate_threshold_with, mse_vec, DetectorError, DetectorState, ErrorRecord, ReferenceSet, Truth, Verdict,
};
use crate::ofdm::{self, apply_cfo, correct_cfo, estimate_cfo, sc_timing_metric, ChannelSnapshot, Modem, OfdmError};

/// Payload length of one mission-critical MTC packet in bits (40 bytes).
pub const MC_MTC_PAYLOAD_BITS: usize = 40 * 8;

const BOOTSTRAP_ATTEMPTS: usize = 100;

mod streams {
    pub const CAL_NOISE: u64 = 0xca1_0001;
    pub const CAL_PAYLOAD: u64 = 0xca1_0002;
    pub const CAL_BOB: u64 = 0xca1_0003;
    pub const CAL_EVE: u64 = 0xca1_0004;
    pub const EVAL_NOISE: u64 = 0xe7a1_0001;
    pub const EVAL_PAYLOAD: u64 = 0xe7a1_0002;
    pub const EVAL_BOB: u64 = 0xe7a1_0003;
    pub const EVAL_EVE: u64 = 0xe7a1_0004;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Ofdm(#[from] OfdmError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("bootstrap packet never synchronised after {0} attempts")]
    Bootstrap(usize),
    #[error("calibration produced no reference pairs ({0} rounds lost to sync failures)")]
    NoReferencePairs(usize),
}

/// Why a received packet produced no channel snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum RxFailure {
    /// Timing metric near the slot start stayed below the threshold.
    Sync {
        peak_metric: f64,
    },
    Ofdm(OfdmError),
}

/// Preamble-only receiver: frame detection, coarse CFO correction and
/// least-squares channel estimation.
///
/// Frames arrive in known slots (periodic MC-MTC traffic), so the FFT window
/// is placed from the schedule. The Schmidl-Cox metric gates detection
/// within one cyclic prefix of the scheduled start.
#[derive(Debug, Clone)]
pub struct Receiver {
    modem: Modem,
    sync_threshold: f64,
    lead: usize,
}

impl Receiver {
    pub fn new(modem: Modem, sync_threshold: f64, lead: usize) -> Self {
        Self {
            modem,
            sync_threshold,
            lead,
        }
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    pub fn lead(&self) -> usize {
        self.lead
    }

    /// Processes one slot buffer: `lead` noise samples then the frame.
    pub fn receive(&self, buffer: &[Complex64], k: u64, label: &str) -> Result<ChannelSnapshot, RxFailure> {
        self.receive_inner(buffer, k, label, true)
    }

    /// Like [`Receiver::receive`] without the timing-metric gate, for the
    /// trusted bootstrap packet whose slot is known.
    pub fn receive_trusted(&self, buffer: &[Complex64], k: u64, label: &str) -> Result<ChannelSnapshot, RxFailure> {
        self.receive_inner(buffer, k, label, false)
    }

    fn receive_inner(
        &self,
        buffer: &[Complex64],
        k: u64,
        label: &str,
        gate: bool,
    ) -> Result<ChannelSnapshot, RxFailure> {
        let n = self.modem.numerology();
        let (m, cp) = (n.fft_size, n.cp_len);
        let body_start = self.lead + cp;
        if buffer.len() < body_start + m {
            return Err(RxFailure::Ofdm(OfdmError::Length {
                expected: body_start + m,
                got: buffer.len(),
            }));
        }
        let lo = self.lead.saturating_sub(cp);
        let hi = (self.lead + cp).min(buffer.len() - m);
        let metric = sc_timing_metric(&buffer[lo..hi + m], n);
        let peak = metric.iter().copied().fold(0.0, f64::max);
        if gate && peak < self.sync_threshold {
            return Err(RxFailure::Sync { peak_metric: peak });
        }
        let mut body = buffer[body_start..body_start + m].to_vec();
        let cfo = estimate_cfo(&body, n).map_err(RxFailure::Ofdm)?;
        correct_cfo(&mut body, cfo, n.sample_rate);
        self.modem.estimate_channel(&body, k, label).map_err(RxFailure::Ofdm)
    }
}

/// Transmitter for slot `k` under `schedule`. Slot 0 is the bootstrap.
pub fn slot_transmitter(schedule: &AttackSchedule, k: u64) -> Truth {
    if k == 0 {
        return Truth::Bob;
    }
    let eve = match *schedule {
        AttackSchedule::None => false,
        AttackSchedule::Interleaved { eve_fraction } => {
            (k as f64 * eve_fraction).floor() > ((k - 1) as f64 * eve_fraction).floor()
        }
        AttackSchedule::Burst { start, len } => k >= start && k - start < len,
        AttackSchedule::Replay { delay_packets } => k > delay_packets && k.is_multiple_of(2),
    };
    if eve {
        Truth::Eve
    } else {
        Truth::Bob
    }
}

/// Shared per-run simulation state.
struct Link {
    receiver: Receiver,
    snr_db: f64,
    cfo_hz: f64,
    noise: ChaCha8Rng,
}

impl Link {
    fn new(config: &ScenarioConfig, noise_stream: u64) -> Result<Self, HarnessError> {
        let modem = Modem::new(config.numerology, config.pn_seed)?;
        Ok(Self {
            receiver: Receiver::new(modem, config.receiver.sync_threshold, config.receiver.lead_samples),
            snr_db: config.snr_db,
            cfo_hz: config.cfo_hz,
            noise: channel::stream(config.seed, noise_stream),
        })
    }

    /// Slot buffer as seen by Alice for `payload` sent over `link`.
    fn transmit(&mut self, link: &FadingLink, payload: &[bool]) -> Result<Vec<Complex64>, HarnessError> {
        let frame = self.receiver.modem().modulate(payload)?.samples();
        let tx_power = frame.iter().map(|s| s.norm_sqr()).sum::<f64>() / frame.len() as f64;
        let mut buffer = vec![Complex64::new(0.0, 0.0); self.receiver.lead()];
        add_awgn(&mut buffer, noise_variance(tx_power, self.snr_db), &mut self.noise);
        buffer.extend(apply_channel(&frame, link.current(), self.snr_db, &mut self.noise));
        if self.cfo_hz != 0.0 {
            apply_cfo(&mut buffer, self.cfo_hz, self.receiver.modem().numerology().sample_rate);
        }
        Ok(buffer)
    }

    fn observe(
        &mut self,
        link: &FadingLink,
        payload: &[bool],
        k: u64,
        truth: Truth,
    ) -> Result<(Vec<Complex64>, Result<ChannelSnapshot, RxFailure>), HarnessError> {
        let buffer = self.transmit(link, payload)?;
        let rx = self.receiver.receive(&buffer, k, &truth.to_string());
        Ok((buffer, rx))
    }

    fn bootstrap<R: Rng>(&mut self, bob: &mut FadingLink, payloads: &mut R) -> Result<ChannelSnapshot, HarnessError> {
        for attempt in 0..BOOTSTRAP_ATTEMPTS {
            if attempt > 0 {
                bob.step();
            }
            let payload = ofdm::random_bits(MC_MTC_PAYLOAD_BITS, payloads);
            let buffer = self.transmit(bob, &payload)?;
            if let Ok(snapshot) = self.receiver.receive_trusted(&buffer, 0, "bob") {
                return Ok(snapshot);
            }
        }
        Err(HarnessError::Bootstrap(BOOTSTRAP_ATTEMPTS))
    }
}

/// Reference measurements plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub refset: ReferenceSet,
    /// Rounds dropped because either packet failed to synchronise.
    pub sync_failures: usize,
}

/// Records the reference set in the calibration geometry.
///
/// Each round sends one Eve packet and then one Bob packet. Eve's error is
/// taken against the previous Bob snapshot, as is Bob's; Bob's snapshot
/// then becomes the new previous one.
pub fn run_calibration(config: &ScenarioConfig) -> Result<Calibration, HarnessError> {
    config.validate()?;
    let (mut bob, mut eve) = make_linked_pair(&config.calibration_geometry(), &config.link_params(), config.seed)?;
    bob.reseed_evolution(config.seed, streams::CAL_BOB);
    eve.reseed_evolution(config.seed, streams::CAL_EVE);
    let mut link = Link::new(config, streams::CAL_NOISE)?;
    let mut payloads = channel::stream(config.seed, streams::CAL_PAYLOAD);

    let mut previous = link.bootstrap(&mut bob, &mut payloads)?;
    let rounds = config.calibration_packets();
    let mut refset = ReferenceSet {
        e_ab_ref: Vec::with_capacity(rounds),
        e_ae_ref: Vec::with_capacity(rounds),
    };
    let mut sync_failures = 0;
    for round in 1..=rounds as u64 {
        bob.step();
        eve.step();
        let payload = ofdm::random_bits(MC_MTC_PAYLOAD_BITS, &mut payloads);
        let (_, from_eve) = link.observe(&eve, &payload, 2 * round - 1, Truth::Eve)?;

        bob.step();
        eve.step();
        let payload = ofdm::random_bits(MC_MTC_PAYLOAD_BITS, &mut payloads);
        let (_, from_bob) = link.observe(&bob, &payload, 2 * round, Truth::Bob)?;

        match (from_eve, from_bob) {
            (Ok(e), Ok(b)) => {
                refset.e_ae_ref.push(mse_vec(&e.h, &previous.h)?);
                refset.e_ab_ref.push(mse_vec(&b.h, &previous.h)?);
                previous = b;
            }
            (Err(_), Ok(b)) => {
                sync_failures += 1;
                previous = b;
            }
            _ => sync_failures += 1,
        }
    }
    if refset.e_ab_ref.is_empty() {
        return Err(HarnessError::NoReferencePairs(sync_failures));
    }
    Ok(Calibration { refset, sync_failures })
}

/// Aggregated outcome of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub bob_drop_rate: f64,
    pub eve_drop_rate: f64,
    pub e_th_used: f64,
    pub bob_packets: usize,
    pub eve_packets: usize,
    pub bob_sync_failures: usize,
    pub eve_sync_failures: usize,
    /// Present when the threshold came from a calibration run.
    pub calibration: Option<CalibrationSummary>,
    /// Per-packet records in transmission order, `k = 1..=N`.
    pub records: Vec<ErrorRecord>,
    /// Where the per-packet CSV was written, if it was.
    pub csv_path: Option<PathBuf>,
    /// Receive buffer of the packet requested through [`RunOptions::capture_packet`].
    pub captured: Option<Vec<Complex64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSummary {
    pub mean_e_ab: f64,
    pub mean_e_ae: f64,
    pub pairs: usize,
    pub sync_failures: usize,
}

/// Drop counts recomputed from records: `(bob_dropped, bob_total, eve_dropped, eve_total)`.
pub fn tally(records: &[ErrorRecord]) -> (usize, usize, usize, usize) {
    let mut t = (0, 0, 0, 0);
    for r in records {
        let dropped = usize::from(r.verdict == Verdict::Drop);
        match r.truth {
            Truth::Bob => {
                t.0 += dropped;
                t.1 += 1;
            }
            Truth::Eve => {
                t.2 += dropped;
                t.3 += 1;
            }
        }
    }
    t
}

fn rate(dropped: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        dropped as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep the receive buffer of this packet index in the report.
    pub capture_packet: Option<u64>,
}

/// Runs one scenario with default options.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, HarnessError> {
    run_scenario_with(config, RunOptions::default())
}

pub fn run_scenario_with(config: &ScenarioConfig, options: RunOptions) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let (e_th, calibration) = match config.detector.e_th {
        Some(e_th) => (e_th, None),
        None => {
            let cal = run_calibration(config)?;
            let e_th = calibrate_threshold_with(&cal.refset, config.detector.threshold_rule)?;
            let summary = CalibrationSummary {
                mean_e_ab: cal.refset.mean_ab(),
                mean_e_ae: cal.refset.mean_ae(),
                pairs: cal.refset.e_ab_ref.len(),
                sync_failures: cal.sync_failures,
            };
            (e_th, Some(summary))
        }
    };

    let (mut bob, mut eve) = make_linked_pair(&config.geometry, &config.link_params(), config.seed)?;
    bob.reseed_evolution(config.seed, streams::EVAL_BOB);
    eve.reseed_evolution(config.seed, streams::EVAL_EVE);
    let mut link = Link::new(config, streams::EVAL_NOISE)?;
    let mut payloads = channel::stream(config.seed, streams::EVAL_PAYLOAD);
    let mut detector = DetectorState::new(config.update_policy)
        .with_threshold(e_th)?
        .with_pcc_mode(config.detector.pcc_mode);

    let seed_snapshot = link.bootstrap(&mut bob, &mut payloads)?;
    detector.seed_reference(seed_snapshot);

    let replay_delay = match config.attack {
        AttackSchedule::Replay { delay_packets } => delay_packets as usize,
        _ => 0,
    };
    let mut bob_history: VecDeque<(u64, Vec<bool>)> = VecDeque::new();
    let mut records = Vec::with_capacity(config.num_packets);
    let mut captured = None;
    let (mut bob_sync_failures, mut eve_sync_failures) = (0, 0);

    for k in 1..=config.num_packets as u64 {
        bob.step();
        eve.step();
        let truth = slot_transmitter(&config.attack, k);
        let fresh = ofdm::random_bits(MC_MTC_PAYLOAD_BITS, &mut payloads);
        let payload = match (truth, replay_delay) {
            (Truth::Eve, delay) if delay > 0 => bob_history
                .iter()
                .rev()
                .find(|(slot, _)| *slot + delay as u64 <= k)
                .map(|(_, bits)| bits.clone())
                .unwrap_or(fresh),
            _ => fresh,
        };
        if truth == Truth::Bob && replay_delay > 0 {
            bob_history.push_back((k, payload.clone()));
            if bob_history.len() > replay_delay + 1 {
                bob_history.pop_front();
            }
        }
        let source = match truth {
            Truth::Bob => &bob,
            Truth::Eve => &eve,
        };
        let (buffer, rx) = link.observe(source, &payload, k, truth)?;
        if options.capture_packet == Some(k) {
            captured = Some(buffer);
        }
        let record = match rx {
            Ok(snapshot) => detector.decide(snapshot, truth)?,
            Err(_) => {
                match truth {
                    Truth::Bob => bob_sync_failures += 1,
                    Truth::Eve => eve_sync_failures += 1,
                }
                ErrorRecord::sync_failure(k, truth)
            }
        };
        records.push(record);
    }

    let (bob_dropped, bob_packets, eve_dropped, eve_packets) = tally(&records);
    Ok(RunReport {
        bob_drop_rate: rate(bob_dropped, bob_packets),
        eve_drop_rate: rate(eve_dropped, eve_packets),
        e_th_used: e_th,
        bob_packets,
        eve_packets,
        bob_sync_failures,
        eve_sync_failures,
        calibration,
        records,
        csv_path: None,
        captured,
    })
}

/// Applies one sweep coordinate to a config.
pub fn apply_axis(config: &mut ScenarioConfig, axis: SweepAxis, value: f64) {
    match axis {
        SweepAxis::DBe => config.geometry.d_be = value,
        SweepAxis::SnrDb => config.snr_db = value,
        SweepAxis::TemporalRho => config.temporal_rho = value,
        SweepAxis::ETh => config.detector.e_th = Some(value),
    }
}

/// One `(value, seed)` cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    pub bob_drop_rate: f64,
    pub eve_drop_rate: f64,
    pub e_th: f64,
    /// Set when the cell failed; rates are NaN then.
    pub error: Option<String>,
}

/// Mean and standard deviation over the seeds of one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAggregate {
    pub axis_value: f64,
    pub cells: usize,
    pub failures: usize,
    pub bob_mean: f64,
    pub bob_std: f64,
    pub eve_mean: f64,
    pub eve_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    /// Ordered by value, then seed, as given.
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
}

/// Runs every `(value, seed)` cell, in parallel. Failed cells are recorded
/// and do not stop the sweep.
pub fn sweep(
    config: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
) -> Result<SweepTable, HarnessError> {
    if values.is_empty() {
        return Err(ConfigError::Invalid {
            field: "sweep.values".into(),
            reason: "must not be empty".into(),
        }
        .into());
    }
    if seeds.is_empty() {
        return Err(ConfigError::Invalid {
            field: "sweep.seeds".into(),
            reason: "must not be empty".into(),
        }
        .into());
    }
    let cells: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(value, seed)| {
            let mut cell = config.clone();
            cell.seed = seed;
            cell.sweep = None;
            apply_axis(&mut cell, axis, value);
            match run_scenario(&cell) {
                Ok(report) => SweepRow {
                    axis_value: value,
                    seed,
                    bob_drop_rate: report.bob_drop_rate,
                    eve_drop_rate: report.eve_drop_rate,
                    e_th: report.e_th_used,
                    error: None,
                },
                Err(e) => SweepRow {
                    axis_value: value,
                    seed,
                    bob_drop_rate: f64::NAN,
                    eve_drop_rate: f64::NAN,
                    e_th: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let aggregates = values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let group = &rows[i * seeds.len()..(i + 1) * seeds.len()];
            let ok: Vec<&SweepRow> = group.iter().filter(|r| r.error.is_none()).collect();
            let (bob_mean, bob_std) = mean_std(ok.iter().map(|r| r.bob_drop_rate));
            let (eve_mean, eve_std) = mean_std(ok.iter().map(|r| r.eve_drop_rate));
            SweepAggregate {
                axis_value: value,
                cells: group.len(),
                failures: group.len() - ok.len(),
                bob_mean,
                bob_std,
                eve_mean,
                eve_std,
            }
        })
        .collect();
    Ok(SweepTable { axis, rows, aggregates })
}

/// Mean and sample standard deviation; NaN for empty input, zero spread for one value.
fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
