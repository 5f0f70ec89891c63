use memsc::device::{
    pulse_width_for, sample_switch, sample_switching_time, switch_probability, switching_time_density, DeviceParams,
};
use memsc::rng::{Label, RngState, Role};
use memsc::sc::{encode, Priori};
use memsc::stats::{chi_square, ks_two_sample, mean, median};
use proptest::prelude::*;
use rand::Rng;

fn rng(seed: u64) -> RngState {
    RngState::new(seed, Label::role(Role::Device))
}

#[test]
fn switching_times_fit_the_exponential_law() {
    let params = DeviceParams::default();
    let mut r = rng(1);
    let samples: Vec<f64> = (0..100_000).map(|_| sample_switching_time(&params, &mut r)).collect();
    assert!(samples.iter().all(|&t| t >= 0.0));
    // 20 equiprobable bins under Exp(tau).
    let bins = 20;
    let mut counts = vec![0u64; bins];
    for t in &samples {
        let u = -(-t / params.tau).exp_m1();
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let outcome = chi_square(&counts, &vec![1.0 / bins as f64; bins], 0.01);
    assert!(outcome.passed(), "chi-square {} >= {}", outcome.statistic, outcome.critical);
    assert!((mean(&samples) / 0.38e-3 - 1.0).abs() < 0.02);
    assert!((median(&samples) / (0.38e-3 * std::f64::consts::LN_2) - 1.0).abs() < 0.02);
}

#[test]
fn density_has_exponential_shape() {
    let p = DeviceParams::default();
    let d0 = switching_time_density(0.0, &p).unwrap();
    assert!((d0 - 0.5 / 0.38e-3).abs() < 1e-9 * d0);
    let ratio = switching_time_density(2.0 * p.tau, &p).unwrap() / switching_time_density(p.tau, &p).unwrap();
    assert!((ratio - (-1.0f64).exp()).abs() < 1e-12);
    assert!(switching_time_density(-1.0, &p).is_err());
}

#[test]
fn half_probability_at_ln2_tau() {
    let p = DeviceParams::default();
    let t = 0.38e-3 * std::f64::consts::LN_2;
    assert!((switch_probability(t, 4.5, &p).unwrap() - 0.5).abs() < 1e-12);
    assert!((pulse_width_for(0.5, 4.5, &p).unwrap() - t).abs() < 1e-15);
}

#[test]
fn sampled_switch_rate_matches_probability() {
    let p = DeviceParams::default();
    let t = pulse_width_for(0.3, p.v_prog, &p).unwrap();
    let mut r = rng(2);
    let on = (0..100_000).filter(|_| sample_switch(t, p.v_prog, &p, &mut r).unwrap()).count();
    assert!((on as f64 / 1e5 - 0.3).abs() <= 0.006);
    assert!(!(0..1000).any(|_| sample_switch(0.0, p.v_prog, &p, &mut r).unwrap()));
}

#[test]
fn device_encoding_matches_sc_encoding() {
    let params = DeviceParams::default();
    let value: f64 = 0.2;
    let p = (value + 1.0) / 2.0;
    let t = pulse_width_for(p, params.v_prog, &params).unwrap();
    let n = 4096;
    let mut r = rng(3);
    let mut dev = Vec::new();
    let mut sc = Vec::new();
    for _ in 0..500 {
        dev.push((0..n).filter(|_| sample_switch(t, params.v_prog, &params, &mut r).unwrap()).count() as f64);
        sc.push(encode(value, n, Priori::Bipolar, &mut r).unwrap().popcount() as f64);
    }
    let ks = ks_two_sample(&dev, &sc, 0.01);
    assert!(ks.passed(), "KS {} >= {}", ks.statistic, ks.critical);
}

#[test]
fn monotone_over_random_grid() {
    let params = DeviceParams::default();
    let mut r = rng(4);
    for _ in 0..2000 {
        let v1 = r.random_range(3.5..5.5);
        let v2 = v1 + r.random_range(0.01..0.5);
        let t1 = r.random_range(0.0..2e-3);
        let t2 = t1 + r.random_range(1e-6..1e-3);
        let p = |t, v| switch_probability(t, v, &params).unwrap();
        assert!(p(t1, v1) <= p(t2, v1));
        assert!(p(t2, v1) < p(t2, v2) || p(t2, v1) == 1.0);
    }
}

#[test]
fn invalid_arguments_are_rejected() {
    let p = DeviceParams::default();
    assert!(switch_probability(-1e-9, 4.5, &p).is_err());
    assert!(matches!(pulse_width_for(1.0, 4.5, &p), Err(memsc::Error::UnreachableProbability(_))));
    assert!(matches!(pulse_width_for(-0.1, 4.5, &p), Err(memsc::Error::Range { .. })));
    let bad = DeviceParams { v0: 0.0, ..p };
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn inverse_round_trip(p in 0.0f64..=(1.0 - 1e-9), v in 0.1f64..10.0) {
        let params = DeviceParams::default();
        let t = pulse_width_for(p, v, &params).unwrap();
        prop_assert!(t.is_finite() && t >= 0.0);
        let back = switch_probability(t, v, &params).unwrap();
        prop_assert!((back - p).abs() <= 1e-9, "p {} back {}", p, back);
    }
}
