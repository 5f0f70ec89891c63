//! Probabilistic CBRAM switching.
//!
//! A conductive-bridge cell driven by a pulse of width `t` at voltage `V`
//! turns on with probability
//!
//! ```text
//! P(t, V) = 1 - exp(-t * exp(V / V0) / tau0)
//! ```
//!
//! so the effective time constant is `tau_eff(V) = tau0 * exp(-V / V0)`.
//! Holding `V` fixed and choosing `t` per column dials in any bit
//! probability below one. Switching times themselves follow an exponential
//! law `P(t) = (dt / tau) * exp(-t / tau)`, where `dt` is the histogram bin
//! width used when comparing against binned measurements.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::config::Config;
use crate::error::{contract, Error, Result};

/// Fitting constants of the switching model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceParams {
    /// Voltage scale `V0` (volts).
    pub v0: f64,
    /// Time scale `tau0` (seconds).
    pub tau0: f64,
    /// Programming voltage (volts).
    pub v_prog: f64,
    /// Histogram bin width of the switching-time fit (dimensionless).
    pub delta_t: f64,
    /// Mean switching time at the programming voltage (seconds).
    pub tau: f64,
    /// Standard deviation of the per-cell log-normal jitter on `tau_eff`;
    /// zero disables cell-to-cell variation.
    pub jitter_sigma: f64,
}

pub const DEFAULT_V0: f64 = 0.4;
pub const DEFAULT_V_PROG: f64 = 4.5;
pub const DEFAULT_TAU: f64 = 0.38e-3;
pub const DEFAULT_DELTA_T: f64 = 0.5;

impl Default for DeviceParams {
    /// `tau0` is chosen so that `tau_eff(4.5 V) = 0.38 ms` with `V0 = 0.4 V`.
    fn default() -> Self {
        Self {
            v0: DEFAULT_V0,
            tau0: DEFAULT_TAU * (DEFAULT_V_PROG / DEFAULT_V0).exp(),
            v_prog: DEFAULT_V_PROG,
            delta_t: DEFAULT_DELTA_T,
            tau: DEFAULT_TAU,
            jitter_sigma: 0.0,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("device.v0", self.v0),
            ("device.tau0", self.tau0),
            ("device.v_prog", self.v_prog),
            ("device.tau", self.tau),
            ("device.delta_t", self.delta_t),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(contract(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(contract("device.jitter_sigma must be non-negative"));
        }
        let te = self.tau_eff(self.v_prog);
        if !(te.is_finite() && te > 0.0) {
            return Err(contract(format!("tau_eff({}) = {te} is degenerate", self.v_prog)));
        }
        Ok(())
    }

    /// Reads `device.*` keys, falling back to the defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let p = Self {
            v0: cfg.get_or("device.v0", d.v0)?,
            tau0: cfg.get_or("device.tau0", d.tau0)?,
            v_prog: cfg.get_or("device.v_prog", d.v_prog)?,
            delta_t: cfg.get_or("device.delta_t", d.delta_t)?,
            tau: cfg.get_or("device.tau", d.tau)?,
            jitter_sigma: cfg.get_or("device.jitter_sigma", d.jitter_sigma)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// `tau0 * exp(-V / V0)`.
    pub fn tau_eff(&self, v: f64) -> f64 {
        self.tau0 * (-v / self.v0).exp()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() {
        return Err(Error::Numeric(t));
    }
    if t < 0.0 {
        return Err(contract(format!("pulse width must be non-negative, got {t}")));
    }
    Ok(())
}

/// Probability that a cell switches under a `t`-second pulse at `v` volts.
pub fn switch_probability(t: f64, v: f64, params: &DeviceParams) -> Result<f64> {
    check_time(t)?;
    Ok(probability_with_tau(t, params.tau_eff(v)))
}

pub(crate) fn probability_with_tau(t: f64, tau_eff: f64) -> f64 {
    -(-t / tau_eff).exp_m1()
}

/// Pulse width that switches a cell with probability `p`; inverse of
/// [`switch_probability`].
pub fn pulse_width_for(p: f64, v: f64, params: &DeviceParams) -> Result<f64> {
    if p.is_nan() {
        return Err(Error::Numeric(p));
    }
    if p >= 1.0 {
        return Err(Error::UnreachableProbability(p));
    }
    if p < 0.0 {
        return Err(Error::Range {
            value: p,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(-params.tau_eff(v) * (-p).ln_1p())
}

/// One programming attempt: returns whether the cell switched on.
pub fn sample_switch<R: Rng + ?Sized>(
    t: f64,
    v: f64,
    params: &DeviceParams,
    rng: &mut R,
) -> Result<bool> {
    let p = switch_probability(t, v, params)?;
    Ok(rng.random::<f64>() < p)
}

/// Like [`sample_switch`] but with this cell's own `tau_eff`, drawn with
/// log-normal jitter when `params.jitter_sigma > 0`.
pub fn sample_switch_cell<R: Rng + ?Sized>(
    t: f64,
    v: f64,
    params: &DeviceParams,
    rng: &mut R,
) -> Result<bool> {
    check_time(t)?;
    let mut tau_eff = params.tau_eff(v);
    if params.jitter_sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        tau_eff *= (params.jitter_sigma * z).exp();
    }
    Ok(rng.random::<f64>() < probability_with_tau(t, tau_eff))
}

/// Binned switching-time density `(delta_t / tau) * exp(-t / tau)`.
pub fn switching_time_density(t: f64, params: &DeviceParams) -> Result<f64> {
    check_time(t)?;
    Ok(params.delta_t / params.tau * (-t / params.tau).exp())
}

/// Switching time drawn from the exponential law with mean `tau`.
pub fn sample_switching_time<R: Rng + ?Sized>(params: &DeviceParams, rng: &mut R) -> f64 {
    Exp::new(1.0 / params.tau)
        .expect("tau validated positive")
        .sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Label, RngState, Role};

    fn p() -> DeviceParams {
        DeviceParams::default()
    }

    #[test]
    fn default_tau_eff_matches_switching_time_fit() {
        let d = p();
        assert!((d.tau_eff(4.5) - 0.38e-3).abs() < 1e-15);
        assert!((d.tau0 - 0.38e-3 * 11.25f64.exp()).abs() / d.tau0 < 1e-12);
        d.validate().unwrap();
    }

    #[test]
    fn zero_pulse_never_switches() {
        assert_eq!(switch_probability(0.0, 4.5, &p()).unwrap(), 0.0);
        let mut rng = RngState::from_seed(1);
        for _ in 0..100 {
            assert!(!sample_switch(0.0, 4.5, &p(), &mut rng).unwrap());
        }
    }

    #[test]
    fn long_pulse_saturates() {
        let t = 100.0 * p().tau_eff(4.5);
        let prob = switch_probability(t, 4.5, &p()).unwrap();
        assert!(prob >= 1.0 - (-100.0f64).exp());
    }

    #[test]
    fn half_probability_at_ln2_tau() {
        let t = 0.38e-3 * std::f64::consts::LN_2;
        assert!((switch_probability(t, 4.5, &p()).unwrap() - 0.5).abs() < 1e-12);
        assert!((pulse_width_for(0.5, 4.5, &p()).unwrap() - t).abs() / t < 1e-12);
        assert_eq!(pulse_width_for(0.0, 4.5, &p()).unwrap(), 0.0);
    }

    #[test]
    fn inverse_round_trip() {
        for prob in [0.01, 0.5, 0.99] {
            let t = pulse_width_for(prob, 4.5, &p()).unwrap();
            let back = switch_probability(t, 4.5, &p()).unwrap();
            assert!((back - prob).abs() / prob <= 1e-9);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            pulse_width_for(1.0, 4.5, &p()),
            Err(Error::UnreachableProbability(_))
        ));
        assert!(matches!(pulse_width_for(-0.1, 4.5, &p()), Err(Error::Range { .. })));
        assert!(matches!(switch_probability(-1.0, 4.5, &p()), Err(Error::Contract(_))));
        assert!(switching_time_density(-1.0, &p()).is_err());
        let mut bad = p();
        bad.v0 = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn density_shape() {
        let d0 = switching_time_density(0.0, &p()).unwrap();
        assert!((d0 - 0.5 / 0.38e-3).abs() < 1e-9);
        assert!((d0 - 1315.789).abs() < 1e-2);
        let d1 = switching_time_density(0.38e-3, &p()).unwrap();
        let d2 = switching_time_density(2.0 * 0.38e-3, &p()).unwrap();
        assert!((d1 - d0 * (-1.0f64).exp()).abs() < 1e-9);
        assert!((d2 / d1 - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_draws_match_target() {
        let t = pulse_width_for(0.3, 4.5, &p()).unwrap();
        let mut rng = RngState::new(5, Label::role(Role::Device));
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_switch(t, 4.5, &p(), &mut rng).unwrap())
            .count();
        // 4 * sqrt(0.3 * 0.7 / 1e5) = 0.0058
        assert!((ones as f64 / n as f64 - 0.3).abs() < 0.006);
    }

    #[test]
    fn switching_time_moments() {
        let mut rng = RngState::new(6, Label::role(Role::Device));
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| sample_switching_time(&p(), &mut rng))
            .collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.38e-3).abs() / 0.38e-3 < 0.02);
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        let want = 0.38e-3 * std::f64::consts::LN_2;
        assert!((median - want).abs() / want < 0.02);
    }

    #[test]
    fn jitter_disabled_matches_plain_sampling() {
        let t = pulse_width_for(0.4, 4.5, &p()).unwrap();
        let mut a = RngState::from_seed(9);
        let mut b = RngState::from_seed(9);
        for _ in 0..1000 {
            assert_eq!(
                sample_switch(t, 4.5, &p(), &mut a).unwrap(),
                sample_switch_cell(t, 4.5, &p(), &mut b).unwrap()
            );
        }
    }

    #[test]
    fn reads_device_keys() {
        let cfg = Config::parse("device.v0 = 0.5\ndevice.tau = 1e-3").unwrap();
        let d = DeviceParams::from_config(&cfg).unwrap();
        assert_eq!(d.v0, 0.5);
        assert_eq!(d.tau, 1e-3);
        assert!(DeviceParams::from_config(&Config::parse("device.tau = -1").unwrap()).is_err());
    }
}
