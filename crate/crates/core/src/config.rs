//! Scenario configuration: TOML schema, defaults, overrides and validation.
//!
//! Every table rejects unknown keys. Absent optional fields take the
//! defaults listed on each field; a file holding only `seed` and a
//! `[geometry]` table describes the reference separated setup.
//!
//! ```toml
//! seed = 7
//! num_packets = 10000        # evaluated packets N
//! snr_db = 20.0              # `inf` disables receiver noise
//! temporal_rho = 1.0         # 1 = static channel
//! cfo_hz = 0.0               # carrier offset applied to every packet
//! pn_seed = 0                # training-symbol PN sequence
//! update_policy = "on-accept" # or "always"
//!
//! [geometry]                 # metres and Hz
//! d_ab = 3.0
//! d_ae = 3.0
//! d_be = 0.10
//! carrier_freq = 2.45e9
//!
//! [numerology]               # all optional
//! fft_size = 64
//! data_subcarriers = 48
//! cp_len = 16
//! sample_rate = 3.125e6
//! data_syms_per_preamble = 4
//! carrier_freq = 2.45e9
//!
//! [channel]
//! num_taps = 8
//! last_tap_db = -20.0        # or pdp_decay = <taps>, not both
//!
//! [attack]                   # kind = none | interleaved | burst | replay
//! kind = "interleaved"
//! eve_fraction = 0.5         # burst: start, len; replay: delay_packets
//!
//! [detector]
//! # e_th = 1.0               # fixed threshold; omit to calibrate first
//! calibration_d_be = 0.10    # Eve position during calibration (default: geometry.d_be)
//! calibration_packets = 10000 # default: num_packets
//! threshold_rule = "half-gap" # or "midpoint"
//! pcc_mode = "real-imag"     # or "magnitude"
//!
//! [receiver]
//! sync_threshold = 0.4       # minimum Schmidl-Cox metric near the slot start
//! lead_samples = 32          # noise-only samples ahead of each frame
//!
//! [sweep]                    # used by the `sweep` command
//! axis = "d_be"              # d_be | snr_db | temporal_rho | e_th
//! values = [0.0, 0.0612, 0.1224]
//! seeds = [1, 2, 3]
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{LinkParams, PowerDelayProfile, SpatialGeometry, DEFAULT_LAST_TAP_DB, DEFAULT_NUM_TAPS};
use crate::detector::{PccMode, ThresholdRule, UpdatePolicy};
use crate::ofdm::OfdmNumerology;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("malformed override `{0}`: expected key=value")]
    Override(String),
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Which transmitter occupies each evaluated slot after the bootstrap packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttackSchedule {
    /// Bob only.
    None,
    /// Eve takes a fraction of the slots, spread evenly; 0.5 alternates.
    Interleaved { eve_fraction: f64 },
    /// Eve transmits in slots `start..start + len` (1-based).
    Burst { start: u64, len: u64 },
    /// Every second slot after `delay_packets`, Eve retransmits the payload
    /// Bob sent `delay_packets` slots earlier.
    Replay { delay_packets: u64 },
}

impl Default for AttackSchedule {
    fn default() -> Self {
        AttackSchedule::Interleaved { eve_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_num_taps")]
    pub num_taps: usize,
    /// Exponential decay constant in taps. Mutually exclusive with `last_tap_db`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdp_decay: Option<f64>,
    /// Power of the last tap relative to the first, in dB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_tap_db: Option<f64>,
}

fn default_num_taps() -> usize {
    DEFAULT_NUM_TAPS
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            num_taps: DEFAULT_NUM_TAPS,
            pdp_decay: None,
            last_tap_db: None,
        }
    }
}

impl ChannelConfig {
    pub fn decay(&self) -> f64 {
        self.pdp_decay.unwrap_or_else(|| {
            PowerDelayProfile::decay_for_span(self.num_taps, self.last_tap_db.unwrap_or(DEFAULT_LAST_TAP_DB))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Fixed threshold; `None` runs a calibration first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_th: Option<f64>,
    /// Bob-Eve distance during calibration; defaults to `geometry.d_be`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_d_be: Option<f64>,
    /// Calibration rounds; defaults to `num_packets`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_packets: Option<usize>,
    #[serde(default)]
    pub threshold_rule: ThresholdRule,
    #[serde(default)]
    pub pcc_mode: PccMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverConfig {
    pub sync_threshold: f64,
    pub lead_samples: usize,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            sync_threshold: 0.4,
            lead_samples: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DBe,
    SnrDb,
    TemporalRho,
    ETh,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::DBe => "d_be",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::TemporalRho => "temporal_rho",
            SweepAxis::ETh => "e_th",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "d_be" => Ok(SweepAxis::DBe),
            "snr_db" => Ok(SweepAxis::SnrDb),
            "temporal_rho" => Ok(SweepAxis::TemporalRho),
            "e_th" => Ok(SweepAxis::ETh),
            other => Err(ConfigError::invalid("sweep.axis", format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: Vec<u64>,
}

fn default_sweep_seeds() -> Vec<u64> {
    (1..=10).collect()
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "default_num_packets")]
    pub num_packets: usize,
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
    #[serde(default = "default_temporal_rho")]
    pub temporal_rho: f64,
    #[serde(default)]
    pub cfo_hz: f64,
    #[serde(default)]
    pub pn_seed: u64,
    #[serde(default)]
    pub update_policy: UpdatePolicy,
    #[serde(default)]
    pub geometry: SpatialGeometry,
    #[serde(default)]
    pub numerology: OfdmNumerology,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub attack: AttackSchedule,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub receiver: ReceiverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_num_packets() -> usize {
    10_000
}

fn default_snr_db() -> f64 {
    20.0
}

fn default_temporal_rho() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            num_packets: default_num_packets(),
            snr_db: default_snr_db(),
            temporal_rho: default_temporal_rho(),
            cfo_hz: 0.0,
            pn_seed: 0,
            update_policy: UpdatePolicy::default(),
            geometry: SpatialGeometry::default(),
            numerology: OfdmNumerology::default(),
            channel: ChannelConfig::default(),
            attack: AttackSchedule::default(),
            detector: DetectorConfig::default(),
            receiver: ReceiverConfig::default(),
            sweep: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[Override]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            o.apply(&mut table)?;
        }
        let config: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serialises to TOML")
    }

    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            num_taps: self.channel.num_taps,
            pdp_decay: self.channel.decay(),
            temporal_rho: self.temporal_rho,
            bins: self.numerology.fft_size,
        }
    }

    /// Geometry used while recording the reference set.
    pub fn calibration_geometry(&self) -> SpatialGeometry {
        match self.detector.calibration_d_be {
            Some(d) => self.geometry.with_d_be(d),
            None => self.geometry,
        }
    }

    pub fn calibration_packets(&self) -> usize {
        self.detector.calibration_packets.unwrap_or(self.num_packets)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn err(field: &str, reason: impl Into<String>) -> ConfigError {
            ConfigError::invalid(field, reason)
        }
        if self.num_packets < 1 {
            return Err(err("num_packets", "must be at least 1"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(err("snr_db", "must be a number or +inf"));
        }
        if !(0.0..=1.0).contains(&self.temporal_rho) {
            return Err(err("temporal_rho", format!("{} is outside [0, 1]", self.temporal_rho)));
        }
        if !self.cfo_hz.is_finite() {
            return Err(err("cfo_hz", "must be finite"));
        }
        for (field, value) in [
            ("geometry.d_ab", self.geometry.d_ab),
            ("geometry.d_ae", self.geometry.d_ae),
            ("geometry.d_be", self.geometry.d_be),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(err(field, format!("{value} is not a non-negative distance")));
            }
        }
        if !(self.geometry.carrier_freq.is_finite() && self.geometry.carrier_freq > 0.0) {
            return Err(err("geometry.carrier_freq", "must be positive"));
        }
        self.numerology.validate().map_err(|e| match e {
            crate::ofdm::OfdmError::Numerology { field, reason } => err(&format!("numerology.{field}"), reason),
            other => err("numerology", other.to_string()),
        })?;
        if self.channel.num_taps < 1 {
            return Err(err("channel.num_taps", "must be at least 1"));
        }
        if self.channel.num_taps > self.numerology.cp_len + 1 {
            return Err(err(
                "channel.num_taps",
                format!(
                    "delay spread of {} taps exceeds the cyclic prefix",
                    self.channel.num_taps
                ),
            ));
        }
        if self.channel.pdp_decay.is_some() && self.channel.last_tap_db.is_some() {
            return Err(err(
                "channel.pdp_decay",
                "set either pdp_decay or last_tap_db, not both",
            ));
        }
        if let Some(d) = self.channel.pdp_decay {
            if !(d.is_finite() && d > 0.0) {
                return Err(err("channel.pdp_decay", "must be positive"));
            }
        }
        if let Some(db) = self.channel.last_tap_db {
            if !(db.is_finite() && db < 0.0) {
                return Err(err("channel.last_tap_db", "must be negative"));
            }
        }
        match self.attack {
            AttackSchedule::Interleaved { eve_fraction } if !(0.0..=1.0).contains(&eve_fraction) => {
                return Err(err("attack.eve_fraction", format!("{eve_fraction} is outside [0, 1]")));
            }
            AttackSchedule::Replay { delay_packets: 0 } => {
                return Err(err("attack.delay_packets", "must be at least 1"));
            }
            _ => {}
        }
        if let Some(e_th) = self.detector.e_th {
            if !(e_th.is_finite() && e_th >= 0.0) {
                return Err(err("detector.e_th", "must be finite and non-negative"));
            }
        }
        if let Some(d) = self.detector.calibration_d_be {
            if !(d.is_finite() && d >= 0.0) {
                return Err(err("detector.calibration_d_be", "must be a non-negative distance"));
            }
        }
        if self.detector.calibration_packets == Some(0) {
            return Err(err("detector.calibration_packets", "must be at least 1"));
        }
        if !(self.receiver.sync_threshold.is_finite() && (0.0..=1.0).contains(&self.receiver.sync_threshold)) {
            return Err(err("receiver.sync_threshold", "must lie in [0, 1]"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(err("sweep.values", "must not be empty"));
            }
            if sweep.seeds.is_empty() {
                return Err(err("sweep.seeds", "must not be empty"));
            }
            if let Some(v) = sweep.values.iter().find(|v| v.is_nan()) {
                return Err(err("sweep.values", format!("{v} is not a number")));
            }
        }
        Ok(())
    }
}

/// A `dotted.key=value` assignment applied on top of a config file. The
/// value is read as a TOML literal, falling back to a bare string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: toml::Value,
}

impl Override {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (key, raw) = text
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(text.to_string()))?;
        let path: Vec<String> = key.trim().split('.').map(|s| s.trim().to_string()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::Override(text.to_string()));
        }
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        Ok(Self { path, value })
    }

    pub fn key(&self) -> String {
        self.path.join(".")
    }

    fn apply(&self, table: &mut toml::Table) -> Result<(), ConfigError> {
        let (last, parents) = self.path.split_last().expect("override path is non-empty");
        let mut cursor = table;
        for (depth, part) in parents.iter().enumerate() {
            let entry = cursor
                .entry(part.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cursor = entry.as_table_mut().ok_or_else(|| {
                ConfigError::invalid(
                    &self.path[..=depth].join("."),
                    "is not a table and cannot hold sub-keys",
                )
            })?;
        }
        cursor.insert(last.clone(), self.value.clone());
        Ok(())
    }
}

/// Reads, overrides and validates a scenario file.
pub fn parse_config(path: &Path, overrides: &[Override]) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_toml_with_overrides(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[geometry]\nd_be = 0.1\n";

    fn invalid_field(result: Result<ScenarioConfig, ConfigError>) -> String {
        match result {
            Err(ConfigError::Invalid { field, .. }) => field,
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_uses_reference_numerology() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.numerology.fft_size, 64);
        assert_eq!(c.numerology.data_subcarriers, 48);
        assert_eq!(c.numerology.cp_len, 16);
        assert_eq!(c.numerology.sample_rate, 3.125e6);
        assert_eq!(c.numerology.carrier_freq, 2.45e9);
        assert_eq!(c.num_packets, 10_000);
        assert_eq!(c.geometry.d_ab, 3.0);
        assert_eq!(c.attack, AttackSchedule::Interleaved { eve_fraction: 0.5 });
        assert_eq!(c, {
            let mut d = ScenarioConfig::with_seed(3);
            d.geometry.d_be = 0.1;
            d
        });
    }

    #[test]
    fn rho_out_of_range_names_field() {
        let text = format!("temporal_rho = 1.2\n{MINIMAL}");
        assert_eq!(invalid_field(ScenarioConfig::from_toml_str(&text)), "temporal_rho");
    }

    #[test]
    fn override_takes_precedence() {
        let text = format!("snr_db = 20.0\n{MINIMAL}");
        let o = Override::parse("snr_db=10").unwrap();
        let c = ScenarioConfig::from_toml_with_overrides(&text, &[o]).unwrap();
        assert_eq!(c.snr_db, 10.0);
    }

    #[test]
    fn nested_override_creates_tables() {
        let o = [
            Override::parse("detector.e_th = 0.25").unwrap(),
            Override::parse("attack.kind=burst").unwrap(),
            Override::parse("attack.start=5").unwrap(),
            Override::parse("attack.len=3").unwrap(),
        ];
        let c = ScenarioConfig::from_toml_with_overrides("seed = 1", &o).unwrap();
        assert_eq!(c.detector.e_th, Some(0.25));
        assert_eq!(c.attack, AttackSchedule::Burst { start: 5, len: 3 });
    }

    #[test]
    fn unknown_override_key_is_error() {
        let o = Override::parse("snr=10").unwrap();
        let err = ScenarioConfig::from_toml_with_overrides(MINIMAL, &[o]).unwrap_err();
        assert!(err.to_string().contains("snr"), "{err}");
        let o = Override::parse("geometry.d_xx=1").unwrap();
        assert!(ScenarioConfig::from_toml_with_overrides(MINIMAL, &[o]).is_err());
    }

    #[test]
    fn override_through_scalar_is_error() {
        let o = Override::parse("seed.x=1").unwrap();
        let err = ScenarioConfig::from_toml_with_overrides(MINIMAL, &[o]).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "seed"));
    }

    #[test]
    fn malformed_overrides() {
        for bad in ["novalue", "=3", "a..b=1", ""] {
            assert!(Override::parse(bad).is_err(), "{bad}");
        }
        assert_eq!(
            Override::parse("a=hello world").unwrap().value,
            toml::Value::String("hello world".into())
        );
    }

    #[test]
    fn unknown_attack_field_rejected() {
        let text = "seed = 1\n[attack]\nkind = \"burst\"\nstart = 1\nlen = 2\neve_fraction = 0.3\n";
        assert!(ScenarioConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn syntax_error_reported() {
        assert!(matches!(
            ScenarioConfig::from_toml_str("seed = = 1"),
            Err(ConfigError::Syntax(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_toml_str("num_packets = 3"),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn field_level_validation() {
        let cases = [
            ("seed = 1\nnum_packets = 0", "num_packets"),
            ("seed = 1\n[geometry]\nd_be = -0.5", "geometry.d_be"),
            ("seed = 1\n[numerology]\ncp_len = 80", "numerology.cp_len"),
            ("seed = 1\n[channel]\nnum_taps = 20", "channel.num_taps"),
            (
                "seed = 1\n[attack]\nkind = \"interleaved\"\neve_fraction = 1.5",
                "attack.eve_fraction",
            ),
            ("seed = 1\n[detector]\ne_th = -1.0", "detector.e_th"),
            ("seed = 1\n[sweep]\naxis = \"d_be\"\nvalues = []", "sweep.values"),
        ];
        for (text, field) in cases {
            assert_eq!(invalid_field(ScenarioConfig::from_toml_str(text)), field, "{text}");
        }
    }

    #[test]
    fn effective_config_round_trips() {
        let mut c = ScenarioConfig::with_seed(9);
        c.snr_db = f64::INFINITY;
        c.detector.e_th = Some(0.5);
        c.attack = AttackSchedule::Replay { delay_packets: 4 };
        c.sweep = Some(SweepSpec {
            axis: SweepAxis::SnrDb,
            values: vec![0.0, 10.0],
            seeds: vec![1],
        });
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_file_reports_path() {
        let err = parse_config(Path::new("/nonexistent/cfg.toml"), &[]).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cfg.toml"));
    }
}
