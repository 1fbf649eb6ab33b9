#![no_main]

use cpm_core::trace::{read_packet_csv, read_reference_csv, read_summary_csv, write_packet_csv, write_summary_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_packet_csv(data) {
        let mut buf = Vec::new();
        write_packet_csv(&mut buf, &records).unwrap();
        assert_eq!(read_packet_csv(buf.as_slice()).unwrap().len(), records.len());
    }
    if let Ok(rows) = read_summary_csv(data) {
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap().len(), rows.len());
    }
    let _ = read_reference_csv(data);
});
