use memsc::rng::{Label, RngState, Role};
use memsc::sc::{
    and_mul, bernoulli_stream, decode, encode, lfsr_stream, negate, scaled_add, xnor_mul, BitStream, LfsrState, Priori,
};
use memsc::stats::ks_one_sample_discrete;
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

fn rng(seed: u64, tensor: u32) -> RngState {
    RngState::new(seed, Label::new(tensor, 0, Role::Other, 0))
}

#[test]
fn encode_converges_to_target() {
    let mut r = rng(1, 0);
    for &(v, priori) in &[(0.3, Priori::Unipolar), (-0.7, Priori::Bipolar), (0.0, Priori::Bipolar)] {
        let mut hits = 0;
        for _ in 0..200 {
            let s = encode(v, 16384, priori, &mut r).unwrap();
            hits += usize::from((decode(&s) - v).abs() <= 0.05);
        }
        assert!(hits >= 190, "{v}: {hits}/200");
    }
}

#[test]
fn endpoints_encode_deterministically() {
    let mut r = rng(2, 0);
    assert_eq!(encode(1.0, 1000, Priori::Bipolar, &mut r).unwrap().popcount(), 1000);
    assert_eq!(encode(-1.0, 1000, Priori::Bipolar, &mut r).unwrap().popcount(), 0);
    assert_eq!(encode(0.0, 1000, Priori::Unipolar, &mut r).unwrap().popcount(), 0);
}

#[test]
fn out_of_range_values_are_rejected() {
    let mut r = rng(3, 0);
    assert!(encode(1.2, 16, Priori::Bipolar, &mut r).is_err());
    assert!(encode(-0.1, 16, Priori::Unipolar, &mut r).is_err());
    assert!(encode(f64::NAN, 16, Priori::Bipolar, &mut r).is_err());
}

#[test]
fn composed_popcount_follows_binomial_law() {
    // theta=0.4, g=-0.3, -eta=-0.5 through XNOR then the half-select MUX.
    let (theta, g, eta) = (0.4, -0.3, 0.5);
    let pt = (theta + 1.0) / 2.0;
    let pg = (g + 1.0) / 2.0;
    let pe = (-eta + 1.0) / 2.0;
    let p_prod = pg * pe + (1.0 - pg) * (1.0 - pe);
    let p = 0.5 * pt + 0.5 * p_prod;
    let n = 4096;
    let mut counts = Vec::new();
    for rep in 0..500 {
        let r = |t: u32| RngState::new(9, Label::new(t, rep, Role::Other, 0));
        let ts = encode(theta, n, Priori::Bipolar, &mut r(0)).unwrap();
        let gs = encode(g, n, Priori::Bipolar, &mut r(1)).unwrap();
        let es = encode(-eta, n, Priori::Bipolar, &mut r(2)).unwrap();
        let sel = encode(0.5, n, Priori::Unipolar, &mut r(3)).unwrap();
        let out = scaled_add(&ts, &xnor_mul(&gs, &es).unwrap(), &sel).unwrap();
        counts.push(out.popcount() as f64);
    }
    let law = Binomial::new(p, n as u64).unwrap();
    let ks = ks_one_sample_discrete(&counts, |k| if k < 0.0 { 0.0 } else { law.cdf(k as u64) }, 0.01);
    assert!(ks.passed(), "KS {} >= {}", ks.statistic, ks.critical);
}

#[test]
fn and_multiplies_unipolar_values() {
    let mut r = rng(4, 0);
    let a = encode(0.6, 16384, Priori::Unipolar, &mut r).unwrap();
    let b = encode(0.5, 16384, Priori::Unipolar, &mut r).unwrap();
    assert!((decode(&and_mul(&a, &b).unwrap()) - 0.3).abs() < 0.03);
}

#[test]
fn xnor_truth_table() {
    let a = BitStream::parse("0011", Priori::Bipolar).unwrap();
    let b = BitStream::parse("0101", Priori::Bipolar).unwrap();
    let out: String = xnor_mul(&a, &b).unwrap().iter().map(|x| if x { '1' } else { '0' }).collect();
    assert_eq!(out, "1001");
}

#[test]
fn mismatched_operands_are_rejected() {
    let a = BitStream::zeros(8, Priori::Bipolar).unwrap();
    let b = BitStream::zeros(9, Priori::Bipolar).unwrap();
    let u = BitStream::zeros(8, Priori::Unipolar).unwrap();
    assert!(xnor_mul(&a, &b).is_err());
    assert!(xnor_mul(&a, &u).is_err());
    assert!(and_mul(&a, &a).is_err());
    assert!(scaled_add(&a, &a, &b).is_err());
    assert_eq!(scaled_add(&a, &a, &u).unwrap(), a);
}

#[test]
fn lfsr_stream_tracks_its_target() {
    let mut lfsr = LfsrState::default_with_seed(0xACE1).unwrap();
    for &v in &[-0.8, -0.25, 0.0, 0.6] {
        let s = lfsr_stream(v, 32768, Priori::Bipolar, &mut lfsr).unwrap();
        assert!((decode(&s) - v).abs() < 0.02, "{v}: {}", decode(&s));
    }
    let u = bernoulli_stream(0.25, 16384, Priori::Unipolar, &mut rng(5, 0)).unwrap();
    assert!((decode(&u) - 0.25).abs() < 0.03);
}

proptest! {
    #[test]
    fn negation_is_exact(bits in proptest::collection::vec(any::<bool>(), 1..3000)) {
        let s = BitStream::from_bits(bits, Priori::Bipolar).unwrap();
        prop_assert_eq!(decode(&negate(&s).unwrap()), -decode(&s));
        prop_assert_eq!(negate(&negate(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn decode_stays_in_range(bits in proptest::collection::vec(any::<bool>(), 1..500), bipolar in any::<bool>()) {
        let priori = if bipolar { Priori::Bipolar } else { Priori::Unipolar };
        let (lo, hi) = priori.range();
        let v = decode(&BitStream::from_bits(bits, priori).unwrap());
        prop_assert!(v >= lo && v <= hi);
    }

    #[test]
    fn xnor_is_commutative(seed in any::<u64>(), a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        let mut r = rng(seed, 0);
        let sa = encode(a, 257, Priori::Bipolar, &mut r).unwrap();
        let sb = encode(b, 257, Priori::Bipolar, &mut r).unwrap();
        prop_assert_eq!(xnor_mul(&sa, &sb).unwrap(), xnor_mul(&sb, &sa).unwrap());
    }
}
