mod common;

use herald_core::spectral::{
    eval_cross_correlation, eval_single_mode_correlation, tabulate_pdf, CavityParams,
    CrossCorrelation, DEFAULT_T_RANGE,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn narrow_photon() -> CavityParams {
    CavityParams {
        gamma_s: 3.5e6,
        gamma_i: 3.5e6,
        ..CavityParams::default()
    }
}

#[test]
fn half_point_matches_bisection() {
    let p = CavityParams::default();
    let x = 2.0 * common::sinc2_half_point() * p.fsr / p.envelope_fwhm;
    let expected = (x.sin() / x).powi(2);
    assert!((p.envelope_weight(1) - expected).abs() < 1e-14);
}

#[test]
fn factorized_sum_matches_double_sum() {
    let p = narrow_photon();
    let m_max = 151;
    let model = CrossCorrelation::new(&p, m_max).unwrap();
    let period = p.comb_period();
    let peak = model.value(0.5 * p.tau0);
    for tau in [
        0.5 * p.tau0,
        0.5 * p.tau0 + period,
        0.5 * p.tau0 - 3.0 * period,
        0.5 * p.tau0 + 10.0 * period,
    ] {
        let reference = common::double_sum(&p, tau, m_max as i64);
        let got = model.value(tau);
        assert!(
            ((got - reference) / reference).abs() < 1e-6,
            "tau {tau}: {got} vs {reference}"
        );
    }
    // Between comb peaks the sum cancels to almost nothing.
    for tau in [1e-9, -1e-9, 37e-9] {
        let reference = common::double_sum(&p, tau, m_max as i64);
        let got = eval_cross_correlation(&p, tau, m_max).unwrap();
        assert!((got - reference).abs() < 1e-9 * peak, "tau {tau}");
    }
}

#[test]
fn default_truncation_is_converged() {
    let p = CavityParams::default();
    let m = p.default_m_max();
    let taus: Vec<f64> = (0..1000).map(|k| -3e-9 + 6e-9 * k as f64 / 999.0).collect();
    let coarse = CrossCorrelation::new(&p, m).unwrap().values(&taus);
    let fine = CrossCorrelation::new(&p, 2 * m).unwrap().values(&taus);
    let peak = fine.iter().cloned().fold(0.0, f64::max);
    let worst = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs() / peak)
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn single_mode_limit_is_double_exponential() {
    let p = CavityParams {
        tau0: 0.0,
        ..CavityParams::default()
    };
    let at_zero = eval_single_mode_correlation(&p, 0.0).unwrap();
    for tau in [-40e-9, -3e-9, 1e-12, 5e-9, 80e-9] {
        let v = eval_single_mode_correlation(&p, tau).unwrap();
        let expected = (-2.0 * PI * p.gamma_s * f64::abs(tau)).exp();
        assert!((v / at_zero - expected).abs() < 1e-12, "tau {tau}");
    }
}

#[test]
fn autocorrelation_peaks_at_round_trip() {
    let p = CavityParams::default();
    let model = CrossCorrelation::with_default_truncation(&p).unwrap();
    let step = 1e-12;
    let taus: Vec<f64> = (0..40_000).map(|k| k as f64 * step).collect();
    let g = model.values(&taus);
    let lags = 1000..3000;
    let best = lags
        .max_by(|&a, &b| {
            let ac = |lag: usize| g.iter().zip(&g[lag..]).map(|(x, y)| x * y).sum::<f64>();
            ac(a).total_cmp(&ac(b))
        })
        .unwrap();
    let expected = p.comb_period() / step;
    assert!(
        (best as f64 - expected).abs() <= 2.0,
        "{best} vs {expected}"
    );
}

#[test]
fn mass_concentrates_on_comb_peaks() {
    let p = CavityParams::default();
    let curve = tabulate_pdf(&p, 100, DEFAULT_T_RANGE, (1 << 17) + 1).unwrap();
    let period = p.comb_period();
    let half = 0.2e-9;
    let mass =
        |center: f64| curve.cdf_at(center + half).unwrap() - curve.cdf_at(center - half).unwrap();
    let (mut on, mut off) = (0.0, 0.0);
    for k in -20..=20 {
        let peak = 0.5 * p.tau0 + k as f64 * period;
        on += mass(peak);
        off += mass(peak + 0.5 * period);
    }
    assert!(on > 5.0 * off, "on {on}, off {off}");
}

#[test]
fn mode_powers_are_a_symmetric_distribution() {
    let model = CrossCorrelation::new(&CavityParams::default(), 200).unwrap();
    let p = model.mode_powers();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for k in 0..p.len() {
        assert!((p[k] - p[p.len() - 1 - k]).abs() <= 1e-12 * p[200]);
    }
    assert!(p.iter().all(|&x| x <= p[200]));
}

#[test]
fn large_truncation_matches_brute_force() {
    let p = CavityParams::default();
    let m = 400;
    let oracle = common::BruteForce::new(&p, m);
    let model = CrossCorrelation::new(&p, m as usize).unwrap();
    let taus: Vec<f64> = (0..200).map(|k| -2e-9 + 4e-9 * k as f64 / 199.0).collect();
    let got = model.values(&taus);
    let reference: Vec<f64> = taus.iter().map(|&t| oracle.value(t)).collect();
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    for (a, b) in got.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-9 * peak);
    }
}

proptest! {
    #[test]
    fn values_are_finite_and_non_negative(tau in -1e-6f64..1e-6) {
        let v = eval_cross_correlation(&CavityParams::default(), tau, 40).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn equal_damping_is_mirror_symmetric(u in 0.0f64..50e-9, m_max in 0usize..30) {
        let p = CavityParams::default();
        let model = CrossCorrelation::new(&p, m_max).unwrap();
        let a = model.value(0.5 * p.tau0 + u);
        let b = model.value(0.5 * p.tau0 - u);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(b).max(1e-300));
    }

    #[test]
    fn batch_matches_single(taus in prop::collection::vec(-20e-9f64..20e-9, 1..40)) {
        let model = CrossCorrelation::new(&CavityParams::default(), 25).unwrap();
        let batch = model.values(&taus);
        for (t, v) in taus.iter().zip(batch) {
            let single = model.value(*t);
            prop_assert!((v - single).abs() <= 1e-12 * single.max(1e-300));
        }
    }
}
