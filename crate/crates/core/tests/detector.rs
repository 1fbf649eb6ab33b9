mod oracle;

use cpm_core::channel::stream;
use cpm_core::detector::{
    calibrate_threshold, calibrate_threshold_with, mse, mse_vec, pcc, DetectorState, PccMode, ReferenceSet,
    ThresholdRule, Truth, UpdatePolicy, Verdict,
};
use cpm_core::ofdm::ChannelSnapshot;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn snap(h: Vec<Complex64>, k: u64) -> ChannelSnapshot {
    ChannelSnapshot::new(h, k, "")
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec(
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(re, im)| Complex64::new(re, im)),
        len,
    )
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<Complex64>, Vec<Complex64>)> {
    (2..=max).prop_flat_map(|m| (complex_vec(m), complex_vec(m)))
}

#[test]
fn mse_matches_brute_force_on_random_matrices() {
    let mut rng = stream(2024, 1);
    for _ in 0..200 {
        let rows = rng.random_range(1..=4);
        let cols = rng.random_range(1..=8);
        let mut draw = || -> Vec<Vec<Complex64>> {
            (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| Complex64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
                        .collect()
                })
                .collect()
        };
        let (x, y) = (draw(), draw());
        let to_array = |v: &[Vec<Complex64>]| Array2::from_shape_fn((rows, cols), |(i, j)| v[i][j]);
        let got = mse(to_array(&x).view(), to_array(&y).view()).unwrap();
        let want = oracle::brute_mse(&x, &y);
        assert!((got - want).abs() < 1e-12, "{rows}x{cols}: {got} vs {want}");
    }
}

#[test]
fn mse_rejects_shape_mismatch_and_empty() {
    let a = Array2::<Complex64>::zeros((2, 3));
    let b = Array2::<Complex64>::zeros((3, 2));
    assert!(mse(a.view(), b.view()).is_err());
    let e = Array2::<Complex64>::zeros((0, 3));
    assert!(mse(e.view(), e.view()).is_err());
}

#[test]
fn threshold_of_worked_example_is_two() {
    let r = ReferenceSet {
        e_ab_ref: vec![0.0; 3],
        e_ae_ref: vec![4.0; 3],
    };
    assert_eq!(calibrate_threshold(&r).unwrap(), 2.0);
    assert_eq!(calibrate_threshold_with(&r, ThresholdRule::Midpoint).unwrap(), 2.0);
}

#[test]
fn threshold_is_half_gap_on_random_sets() {
    let mut rng = stream(99, 1);
    for _ in 0..100 {
        let len = rng.random_range(1..50);
        let ab: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..0.1)).collect();
        let ae: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..5.0)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let want = 0.5 * (mean(&ab) - mean(&ae)).abs();
        let got = calibrate_threshold(&ReferenceSet {
            e_ab_ref: ab,
            e_ae_ref: ae,
        })
        .unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn threshold_rejects_bad_reference_sets() {
    let bad = [
        (vec![], vec![]),
        (vec![1.0], vec![1.0, 2.0]),
        (vec![-1.0], vec![1.0]),
        (vec![f64::NAN], vec![1.0]),
    ];
    for (ab, ae) in bad {
        assert!(calibrate_threshold(&ReferenceSet {
            e_ab_ref: ab,
            e_ae_ref: ae
        })
        .is_err());
    }
}

#[test]
fn packet_at_threshold_is_dropped_and_just_below_accepted() {
    let reference = vec![Complex64::new(0.0, 0.0); 64];
    let probe = vec![Complex64::new(0.3, -0.7); 64];
    let e = mse_vec(&probe, &reference).unwrap();

    let mut at = DetectorState::new(UpdatePolicy::OnAccept).with_threshold(e).unwrap();
    at.seed_reference(snap(reference.clone(), 0));
    assert_eq!(
        at.decide(snap(probe.clone(), 1), Truth::Bob).unwrap().verdict,
        Verdict::Drop
    );

    let mut above = DetectorState::new(UpdatePolicy::OnAccept)
        .with_threshold(e * (1.0 + 1e-12))
        .unwrap();
    above.seed_reference(snap(reference, 0));
    assert_eq!(
        above.decide(snap(probe, 1), Truth::Bob).unwrap().verdict,
        Verdict::Accept
    );
}

#[test]
fn unseeded_detector_accepts_and_seeds() {
    let mut d = DetectorState::new(UpdatePolicy::OnAccept).with_threshold(0.0).unwrap();
    let h = vec![Complex64::new(1.0, 1.0); 8];
    let r = d.decide(snap(h.clone(), 5), Truth::Eve).unwrap();
    assert_eq!(r.verdict, Verdict::Accept);
    assert_eq!(d.reference().unwrap().h, h);
}

#[test]
fn uncalibrated_detector_errors() {
    let mut d = DetectorState::new(UpdatePolicy::OnAccept);
    assert!(d
        .decide(snap(vec![Complex64::new(1.0, 0.0); 4], 0), Truth::Bob)
        .is_err());
    assert!(DetectorState::new(UpdatePolicy::OnAccept).with_threshold(-1.0).is_err());
    assert!(DetectorState::new(UpdatePolicy::OnAccept)
        .with_threshold(f64::NAN)
        .is_err());
}

proptest! {
    #[test]
    fn mse_is_symmetric((x, y) in pair(64)) {
        prop_assert_eq!(mse_vec(&x, &y).unwrap(), mse_vec(&y, &x).unwrap());
    }

    #[test]
    fn mse_is_positive_definite((x, y) in pair(64)) {
        prop_assert_eq!(mse_vec(&x, &x).unwrap(), 0.0);
        let e = mse_vec(&x, &y).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e == 0.0, x == y);
    }

    #[test]
    fn mse_scales_quadratically((x, y) in pair(32), a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let s = Complex64::new(a, b);
        let sx: Vec<_> = x.iter().map(|v| s * v).collect();
        let sy: Vec<_> = y.iter().map(|v| s * v).collect();
        let want = s.norm_sqr() * mse_vec(&x, &y).unwrap();
        prop_assert!((mse_vec(&sx, &sy).unwrap() - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn pcc_is_scale_invariant((x, y) in pair(32), a in 0.01f64..100.0) {
        let sx: Vec<_> = x.iter().map(|v| v * a).collect();
        for mode in [PccMode::RealImag, PccMode::Magnitude] {
            if let (Ok(p), Ok(q)) = (pcc(&x, &y, mode), pcc(&sx, &y, mode)) {
                prop_assert!((p - q).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn decision_is_monotone_in_threshold((r, x) in pair(16), t1 in 0.0f64..200.0, t2 in 0.0f64..200.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let verdict = |t: f64| {
            let mut d = DetectorState::new(UpdatePolicy::OnAccept).with_threshold(t).unwrap();
            d.seed_reference(snap(r.clone(), 0));
            d.decide(snap(x.clone(), 1), Truth::Bob).unwrap().verdict
        };
        if verdict(lo) == Verdict::Accept {
            prop_assert_eq!(verdict(hi), Verdict::Accept);
        }
    }

    #[test]
    fn reference_advances_only_on_accept(steps in prop::collection::vec(complex_vec(8), 1..20), t in 0.0f64..100.0) {
        let mut d = DetectorState::new(UpdatePolicy::OnAccept).with_threshold(t).unwrap();
        d.seed_reference(snap(vec![Complex64::new(0.0, 0.0); 8], 0));
        for (k, h) in steps.into_iter().enumerate() {
            let before = d.reference().unwrap().clone();
            let r = d.decide(snap(h.clone(), k as u64 + 1), Truth::Bob).unwrap();
            match r.verdict {
                Verdict::Accept => prop_assert_eq!(&d.reference().unwrap().h, &h),
                Verdict::Drop => prop_assert_eq!(d.reference().unwrap(), &before),
            }
        }
    }

    #[test]
    fn always_policy_tracks_every_packet(steps in prop::collection::vec(complex_vec(8), 1..10)) {
        let mut d = DetectorState::new(UpdatePolicy::Always).with_threshold(0.0).unwrap();
        d.seed_reference(snap(vec![Complex64::new(0.0, 0.0); 8], 0));
        for h in steps {
            d.decide(snap(h.clone(), 1), Truth::Eve).unwrap();
            prop_assert_eq!(&d.reference().unwrap().h, &h);
        }
    }
}
