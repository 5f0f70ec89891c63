//! Goodness-of-fit helpers shared by the property suites and `selftest`.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Asymptotic Kolmogorov coefficient `c(alpha) = sqrt(-ln(alpha / 2) / 2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Outcome of a hypothesis test at a fixed level.
#[derive(Clone, Copy, Debug)]
pub struct TestOutcome {
    pub statistic: f64,
    pub critical: f64,
}

impl TestOutcome {
    pub fn passed(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> TestOutcome {
    ks_against(samples, &cdf, &cdf, alpha)
}

/// One-sample KS test for an integer-valued law (binomial popcounts).
///
/// Evaluated on the support points only, which makes the asymptotic critical
/// value conservative.
pub fn ks_one_sample_discrete(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    alpha: f64,
) -> TestOutcome {
    ks_against(samples, &cdf, &|x| cdf(x - 1.0), alpha)
}

fn ks_against(
    samples: &[f64],
    cdf: &dyn Fn(f64) -> f64,
    cdf_left: &dyn Fn(f64) -> f64,
    alpha: f64,
) -> TestOutcome {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let below = i as f64 / n;
        while i < xs.len() && xs[i] == x {
            i += 1;
        }
        let at = i as f64 / n;
        d = d.max((at - cdf(x)).abs()).max((below - cdf_left(x)).abs());
    }
    TestOutcome {
        statistic: d,
        critical: ks_coefficient(alpha) / n.sqrt(),
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> TestOutcome {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (n, m) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] == x {
            i += 1;
        }
        while j < xb.len() && xb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    TestOutcome {
        statistic: d,
        critical: ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt(),
    }
}

/// Pearson chi-square goodness of fit; `expected` are bin probabilities.
pub fn chi_square(observed: &[u64], expected: &[f64], alpha: f64) -> TestOutcome {
    assert_eq!(observed.len(), expected.len());
    let total: u64 = observed.iter().sum();
    let stat = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    let critical = ChiSquared::new(dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha);
    TestOutcome {
        statistic: stat,
        critical,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator); zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
