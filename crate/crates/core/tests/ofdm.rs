mod oracle;

use cpm_core::channel::{add_awgn, apply_channel, stream, ChannelRealization};
use cpm_core::ofdm::{
    apply_cfo, correct_cfo, estimate_cfo, estimate_channel, random_bits, sc_preamble_bins, sc_timing_metric,
    ChannelSnapshot, Modem, OfdmNumerology,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn modem() -> Modem {
    Modem::new(OfdmNumerology::default(), 7).unwrap()
}

/// Training-symbol body (cyclic prefix dropped) of a received frame.
fn body(rx: &[Complex64], n: &OfdmNumerology) -> Vec<Complex64> {
    rx[n.cp_len..n.cp_len + n.fft_size].to_vec()
}

#[test]
fn frame_is_400_samples_and_128_us() {
    let n = OfdmNumerology::default();
    assert_eq!(n.frame_len(), 400);
    assert_eq!(modem().modulate(&[]).unwrap().samples().len(), 400);
    assert!((n.frame_duration() - 128e-6).abs() < 1e-15);
    assert_eq!(n.data_bins().len(), 48);
    assert_eq!(n.payload_capacity(), 384);
}

#[test]
fn noiseless_loopback_is_bit_exact() {
    let m = modem();
    let n = *m.numerology();
    let flat = ChannelSnapshot::new(vec![c(1.0, 0.0); n.fft_size], 0, "");
    let mut rng = stream(3, 1);
    for _ in 0..100 {
        let bits = random_bits(n.payload_capacity(), &mut rng);
        let tx = m.modulate(&bits).unwrap().samples();
        assert_eq!(m.demodulate(&tx, &flat).unwrap(), bits);
    }
}

#[test]
fn loopback_through_multipath_with_estimated_channel() {
    let m = modem();
    let n = *m.numerology();
    // Odd bins are interpolated, so keep the echo weak enough that the
    // interpolation error cannot flip a decision.
    let r = ChannelRealization::from_taps(vec![c(1.0, 0.0), c(0.3, -0.2)], n.fft_size);
    let mut rng = stream(4, 1);
    let bits = random_bits(n.payload_capacity(), &mut rng);
    let rx = apply_channel(&m.modulate(&bits).unwrap().samples(), &r, f64::INFINITY, &mut rng);
    let est = m.estimate_channel(&body(&rx, &n), 0, "bob").unwrap();
    assert_eq!(m.demodulate(&rx, &est).unwrap(), bits);
}

#[test]
fn noiseless_estimate_matches_analytic_response_on_even_bins() {
    let n = OfdmNumerology::default();
    let known = sc_preamble_bins(&n, 7);
    let taps = vec![c(0.8, 0.1), c(-0.3, 0.45)];
    let analytic = oracle::dft(&taps, n.fft_size);
    let r = ChannelRealization::from_taps(taps, n.fft_size);
    let rx = apply_channel(modem().preamble(), &r, f64::INFINITY, &mut stream(0, 0));
    let est = estimate_channel(&body(&rx, &n), &known, &n).unwrap();
    for k in (0..n.fft_size).step_by(2) {
        assert!((est.h[k] - analytic[k]).norm() < 1e-9, "bin {k}");
    }
    for k in (1..n.fft_size).step_by(2) {
        let want = 0.5 * (est.h[k - 1] + est.h[(k + 1) % n.fft_size]);
        assert!((est.h[k] - want).norm() < 1e-15);
    }
}

#[test]
fn estimator_noise_variance_matches_theory() {
    // Per even bin: Var(N/X) = sigma^2 / |X|^2 = sigma^2 / 2.
    let n = OfdmNumerology::default();
    let m = modem();
    let sigma2 = 0.01;
    let trials = 2000;
    let mut rng = stream(5, 1);
    let mut acc = 0.0;
    for _ in 0..trials {
        let mut rx = m.preamble().to_vec();
        add_awgn(&mut rx, sigma2, &mut rng);
        let h = m.estimate_channel(&body(&rx, &n), 0, "").unwrap().h;
        acc += (0..n.fft_size).step_by(2).map(|k| (h[k] - 1.0).norm_sqr()).sum::<f64>();
    }
    let got = acc / (trials * n.fft_size / 2) as f64;
    let want = sigma2 / 2.0;
    assert!(got < 1.5 * want && got > want / 1.5, "got {got}, want {want}");
}

#[test]
fn cfo_recovered_noiseless() {
    let n = OfdmNumerology::default();
    for f in [10e3, -10e3, 1.0, 20e3] {
        let mut rx = modem().preamble().to_vec();
        apply_cfo(&mut rx, f, n.sample_rate);
        let got = estimate_cfo(&body(&rx, &n), &n).unwrap();
        assert!((got - f).abs() < 1.0, "{f}: {got}");
    }
}

#[test]
fn cfo_estimate_is_unbiased_at_20_db() {
    // The half-symbol estimator's standard deviation at 20 dB is a few
    // hundred hertz; check the bias and the spread against theory.
    let n = OfdmNumerology::default();
    let m = modem();
    let mut rng = stream(6, 1);
    let trials = 1000;
    let errs: Vec<f64> = (0..trials)
        .map(|_| {
            let mut rx = m.preamble().to_vec();
            apply_cfo(&mut rx, 10e3, n.sample_rate);
            add_awgn(&mut rx, 0.01, &mut rng);
            estimate_cfo(&body(&rx, &n), &n).unwrap() - 10e3
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / trials as f64;
    let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / trials as f64).sqrt();
    // Phase noise of the 32-term correlation: sqrt(2 sigma^2 / 32) rad.
    let theory = (2.0 * 0.01 / 32.0f64).sqrt() * n.sample_rate / (2.0 * std::f64::consts::PI * 32.0);
    assert!(mean.abs() < 4.0 * theory / (trials as f64).sqrt(), "bias {mean}");
    assert!(std < 1.5 * theory && std > theory / 1.5, "std {std}, theory {theory}");
}

#[test]
fn cfo_correction_undoes_offset() {
    let n = OfdmNumerology::default();
    let tx = modem().preamble().to_vec();
    let mut rx = tx.clone();
    apply_cfo(&mut rx, 12_345.0, n.sample_rate);
    correct_cfo(&mut rx, 12_345.0, n.sample_rate);
    assert!(oracle::max_abs_diff(&rx, &tx) < 1e-12);
}

#[test]
fn timing_metric_peaks_on_clean_frame() {
    let n = OfdmNumerology::default();
    let tx = modem().modulate(&[]).unwrap().samples();
    let metric = sc_timing_metric(&tx, &n);
    assert!(metric[n.cp_len] >= 0.99, "{}", metric[n.cp_len]);
    assert!(metric.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
}

#[test]
fn timing_metric_stays_low_on_noise() {
    let n = OfdmNumerology::default();
    let mut rng = stream(8, 1);
    let quiet = (0..100)
        .filter(|_| {
            let mut rx = vec![c(0.0, 0.0); 400];
            add_awgn(&mut rx, 1.0, &mut rng);
            sc_timing_metric(&rx, &n).iter().copied().fold(0.0, f64::max) < 0.5
        })
        .count();
    assert!(quiet >= 99, "{quiet}/100");
}

#[test]
fn short_buffer_gives_empty_metric() {
    let n = OfdmNumerology::default();
    assert!(sc_timing_metric(&[c(1.0, 0.0); 63], &n).is_empty());
    assert_eq!(sc_timing_metric(&[c(1.0, 0.0); 64], &n).len(), 1);
}

#[test]
fn estimate_rejects_wrong_length() {
    let n = OfdmNumerology::default();
    assert!(estimate_cfo(&[c(1.0, 0.0); 63], &n).is_err());
    assert!(estimate_channel(&[c(1.0, 0.0); 63], &sc_preamble_bins(&n, 1), &n).is_err());
}

proptest! {
    #[test]
    fn estimate_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let n = OfdmNumerology::default();
        let known = sc_preamble_bins(&n, 7);
        let mut rng = stream(seed, 1);
        let mut x = vec![c(0.0, 0.0); 64];
        let mut y = vec![c(0.0, 0.0); 64];
        add_awgn(&mut x, 1.0, &mut rng);
        add_awgn(&mut y, 1.0, &mut rng);
        let s = c(a, b);
        let mix: Vec<_> = x.iter().zip(&y).map(|(p, q)| s * p + q).collect();
        let hx = estimate_channel(&x, &known, &n).unwrap().h;
        let hy = estimate_channel(&y, &known, &n).unwrap().h;
        let hm = estimate_channel(&mix, &known, &n).unwrap().h;
        let want: Vec<_> = hx.iter().zip(&hy).map(|(p, q)| s * p + q).collect();
        prop_assert!(oracle::max_abs_diff(&hm, &want) < 1e-9);
    }

    #[test]
    fn cfo_estimate_is_odd(f in -20e3f64..20e3) {
        let n = OfdmNumerology::default();
        let est = |f: f64| {
            let mut rx = modem().preamble().to_vec();
            apply_cfo(&mut rx, f, n.sample_rate);
            estimate_cfo(&body(&rx, &n), &n).unwrap()
        };
        prop_assert!((est(f) + est(-f)).abs() < 1e-6);
    }
}
