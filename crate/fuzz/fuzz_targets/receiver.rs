#![no_main]

use cpm_core::harness::Receiver;
use cpm_core::iq::decode_iq;
use cpm_core::ofdm::{Modem, OfdmNumerology};
use libfuzzer_sys::fuzz_target;
use num_complex::Complex64;

fuzz_target!(|data: &[u8]| {
    let Ok(samples) = decode_iq(data) else {
        return;
    };
    let buffer: Vec<Complex64> = samples
        .iter()
        .map(|s| Complex64::new(s.re.into(), s.im.into()))
        .collect();
    let receiver = Receiver::new(Modem::new(OfdmNumerology::default(), 0).unwrap(), 0.4, 32);
    if let Ok(snapshot) = receiver.receive(&buffer, 0, "fuzz") {
        assert_eq!(snapshot.h.len(), 64);
    }
    let _ = receiver.receive_trusted(&buffer, 0, "fuzz");
});
