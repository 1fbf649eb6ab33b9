#![no_main]

use cpm_core::iq::{decode_iq, encode_iq, SAMPLE_BYTES};
use libfuzzer_sys::fuzz_target;
use num_complex::Complex64;

fuzz_target!(|data: &[u8]| {
    match decode_iq(data) {
        Ok(samples) => {
            assert_eq!(samples.len() * SAMPLE_BYTES, data.len());
            let wide: Vec<Complex64> = samples
                .iter()
                .map(|s| Complex64::new(s.re.into(), s.im.into()))
                .collect();
            // NaN payloads may change bits when widened and narrowed again.
            if samples.iter().all(|s| !s.re.is_nan() && !s.im.is_nan()) {
                assert_eq!(encode_iq(&wide), data);
            }
        }
        Err(_) => assert_ne!(data.len() % SAMPLE_BYTES, 0),
    }
});
