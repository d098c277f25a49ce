//! Independent oracles: exact rational binomial probabilities and the exact
//! mean absolute deviation of a binomial proportion.

use std::sync::Arc;

use margin_adapt::binomial::binom_pmf;
use margin_adapt::domain::{draw_sample, DiscreteDistribution, Domain, LossFunction, Model};
use margin_adapt::erm::expected_modulus;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

/// `C(n, k)` by the multiplicative recurrence.
fn choose(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 0..k {
        c *= n - i;
        c /= i + 1;
    }
    c
}

/// `num / den` rounded to f64 through a 64-bit quotient.
fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let q = if shift >= 0 { (num << shift as u64) / den } else { num / (den << (-shift) as u64) };
    q.to_f64().unwrap() * 2f64.powi(-shift as i32)
}

/// `P(Bin(n, a/2^m) = k)` exactly, as a rational.
fn exact_pmf(n: u64, a: u64, m: u32, k: u64) -> f64 {
    let b = (1u64 << m) - a;
    let num = choose(n, k) * BigUint::from(a).pow(k as u32) * BigUint::from(b).pow((n - k) as u32);
    let den = BigUint::one() << (m as u64 * n);
    ratio_to_f64(&num, &den)
}

#[test]
fn pmf_matches_exact_rationals() {
    let cases: &[(u64, u64, u32)] = &[(10, 1, 1), (37, 3, 3), (500, 3, 3), (1000, 1, 1), (2000, 5, 4), (20000, 1, 1)];
    for &(n, a, m) in cases {
        let p = a as f64 / (1u64 << m) as f64;
        let centre = (n as f64 * p).round() as u64;
        let spread = (3.0 * (n as f64 * p * (1.0 - p)).sqrt()).ceil() as u64;
        let ks = [centre.saturating_sub(spread), centre, (centre + spread).min(n), 1, n - 1];
        for k in ks {
            let exact = exact_pmf(n, a, m, k);
            if exact < 1e-300 {
                continue;
            }
            let got = binom_pmf(n, p, k).unwrap();
            let rel = (got / exact - 1.0).abs();
            assert!(rel <= 1e-12, "n = {n}, p = {p}, k = {k}: {got} vs {exact} (rel {rel:e})");
        }
    }
}

#[test]
fn central_pmf_at_large_n() {
    let n = 100_000u64;
    let exact = ratio_to_f64(&choose(n, n / 2), &(BigUint::one() << n));
    let got = binom_pmf(n, 0.5, n / 2).unwrap();
    assert!((got / exact - 1.0).abs() <= 1e-12, "{got} vs {exact}");
}

/// A fair coin on the single atom where the two functions differ.
fn coin_model() -> (Model, DiscreteDistribution) {
    let d = Arc::new(Domain::product(["x"]).unwrap());
    let p = DiscreteDistribution::new(d.clone(), vec![0.5, 0.5]).unwrap();
    let f = LossFunction::new(0, d.clone(), vec![0.0, 1.0]).unwrap();
    let g = LossFunction::constant(1, d, 0.0).unwrap();
    (Model::new("coin", vec![f, g]).unwrap(), p)
}

/// `E|Bin(n, 1/2)/n − 1/2|` by direct summation.
fn exact_mad(n: u64) -> f64 {
    (0..=n)
        .map(|k| binom_pmf(n, 0.5, k).unwrap() * (k as f64 / n as f64 - 0.5).abs())
        .sum()
}

#[test]
fn expected_modulus_matches_binomial_mad() {
    let (model, p) = coin_model();
    let exact = exact_mad(100);
    assert!((exact - 0.0398).abs() < 1e-3);
    let est = expected_modulus(&model, &p, 100, 1.0, 2000, 17).unwrap();
    assert!(
        (est.mean - exact).abs() <= 3.0 * est.std_error,
        "estimate {} ± {} vs exact {exact}",
        est.mean,
        est.std_error
    );
}

#[test]
fn expected_modulus_decays_like_root_n() {
    let (model, p) = coin_model();
    let a = expected_modulus(&model, &p, 100, 1.0, 4000, 3).unwrap();
    let b = expected_modulus(&model, &p, 200, 1.0, 4000, 4).unwrap();
    let factor = a.mean / b.mean;
    assert!((1.25..=1.6).contains(&factor), "decay factor {factor}");
    let exact = exact_mad(100) / exact_mad(200);
    assert!((exact - 2f64.sqrt()).abs() < 0.02);
}

#[test]
fn draws_follow_the_masses() {
    let d = Arc::new(Domain::product(["a", "b"]).unwrap());
    let masses = vec![0.1, 0.2, 0.3, 0.4];
    let p = DiscreteDistribution::new(d, masses.clone()).unwrap();
    let n = 200_000;
    let s = draw_sample(&p, n, 99).unwrap();
    for (c, m) in s.counts().iter().zip(&masses) {
        let freq = f64::from(*c) / n as f64;
        let se = (m * (1.0 - m) / n as f64).sqrt();
        assert!((freq - m).abs() <= 4.0 * se, "frequency {freq} for mass {m}");
    }
}
