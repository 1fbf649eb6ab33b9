//! Payload overhead of message integrity codes, the cryptographic
//! alternative to channel-based authentication.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("payload size must be at least one byte")]
pub struct ZeroPayload;

/// MIC bytes as a percentage of the payload, rounded to two decimals.
pub fn mic_overhead(mic_bytes: u32, payload_bytes: u32) -> Result<f64, ZeroPayload> {
    if payload_bytes == 0 {
        return Err(ZeroPayload);
    }
    let percent = 100.0 * f64::from(mic_bytes) / f64::from(payload_bytes);
    Ok((percent * 100.0).round() / 100.0)
}

/// One row of the overhead table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverheadRow {
    pub system: &'static str,
    pub mic_bytes: u32,
    pub payload_bytes: u32,
}

/// IEEE 802.15.4 MIC sizes against its maximum 113-byte MAC payload, and the
/// same sizes against a 40-byte MC-MTC payload.
pub const MIC_OVERHEAD_TABLE: [OverheadRow; 6] = [
    OverheadRow {
        system: "IEEE 802.15.4",
        mic_bytes: 4,
        payload_bytes: 113,
    },
    OverheadRow {
        system: "IEEE 802.15.4",
        mic_bytes: 8,
        payload_bytes: 113,
    },
    OverheadRow {
        system: "IEEE 802.15.4",
        mic_bytes: 16,
        payload_bytes: 113,
    },
    OverheadRow {
        system: "MC-MTC",
        mic_bytes: 4,
        payload_bytes: 40,
    },
    OverheadRow {
        system: "MC-MTC",
        mic_bytes: 8,
        payload_bytes: 40,
    },
    OverheadRow {
        system: "MC-MTC",
        mic_bytes: 16,
        payload_bytes: 40,
    },
];

/// Renders the overhead table as aligned text, one line per row after a header.
pub fn format_overhead_table() -> String {
    let mut out = format!(
        "{:<14} {:>8} {:>11} {:>12}\n",
        "System", "MIC size", "MAC payload", "MIC overhead"
    );
    for row in MIC_OVERHEAD_TABLE {
        let pct = mic_overhead(row.mic_bytes, row.payload_bytes).expect("table payloads are non-zero");
        out.push_str(&format!(
            "{:<14} {:>8} {:>11} {:>11.2}%\n",
            row.system, row.mic_bytes, row.payload_bytes, pct
        ));
    }
    out
}
