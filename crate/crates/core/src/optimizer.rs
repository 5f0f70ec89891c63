//! Parameter updates carried out on stochastic bit streams.
//!
//! Plain SGD, `theta <- theta - eta * g`, maps onto one XNOR and one
//! multiplexer: the gradient stream is XNOR-multiplied with a stream encoding
//! `-eta`, and a 50 % multiplexer adds the product to the weight stream. The
//! multiplexer halves its sum, so the decoded result is doubled and clamped
//! back to `[-1, 1]`.
//!
//! Momentum, `v <- gamma * v + eta * g; theta <- theta - v`, uses two XNOR
//! products into one multiplexer for the velocity, decodes it, and feeds a
//! fresh encoding of the negated velocity into a second multiplexer with the
//! weight stream.
//!
//! Three execution modes share one interface:
//!
//! * [`ExecMode::BitExact`] builds every stream bit by bit;
//! * [`ExecMode::Binomial`] computes the probability of the final stream in
//!   closed form and draws its popcount from `Binomial(n_bit, p)`, which has
//!   the same distribution because every output bit is an independent
//!   Bernoulli draw;
//! * [`ExecMode::Float`] is the conventional floating-point baseline.

use num_traits::Float;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::config::Config;
use crate::error::{contract, Error, Result};
use crate::rng::{Label, RngState, Role};
use crate::sc::{decode, encode, negate, scaled_add, xnor_mul, Priori};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Sgd,
    Momentum,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Mode::Sgd),
            "momentum" => Ok(Mode::Momentum),
            _ => Err(Error::Config(format!("unknown optimizer mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Sgd => "sgd",
            Mode::Momentum => "momentum",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExecMode {
    /// 32-bit/64-bit floating point baseline.
    Float,
    /// Every stream materialized and combined gate by gate.
    BitExact,
    /// Closed-form output probability, binomial popcount.
    Binomial,
}

impl std::str::FromStr for ExecMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "float" => Ok(ExecMode::Float),
            "bitexact" | "bit-exact" | "bit_exact" => Ok(ExecMode::BitExact),
            "binomial" => Ok(ExecMode::Binomial),
            _ => Err(Error::Config(format!("unknown exec mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExecMode::Float => "float",
            ExecMode::BitExact => "bitexact",
            ExecMode::Binomial => "binomial",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub mode: Mode,
    /// Learning rate.
    pub eta: f64,
    /// Momentum coefficient.
    pub gamma: f64,
    /// Stream length.
    pub n_bit: usize,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub exec: ExecMode,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sgd,
            eta: 0.5,
            gamma: 0.9,
            n_bit: 16384,
            clip_lo: -1.0,
            clip_hi: 1.0,
            exec: ExecMode::Binomial,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(contract(format!("learning rate {} outside (0, 1]", self.eta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(contract(format!("momentum {} outside [0, 1)", self.gamma)));
        }
        if self.n_bit == 0 {
            return Err(contract("n_bit must be at least 1"));
        }
        if self.clip_lo.partial_cmp(&self.clip_hi) != Some(std::cmp::Ordering::Less) {
            return Err(contract("clip_lo must be below clip_hi"));
        }
        if self.exec != ExecMode::Float && (self.clip_lo < -1.0 || self.clip_hi > 1.0) {
            return Err(contract("stochastic updates need clip bounds inside [-1, 1]"));
        }
        Ok(())
    }

    /// Reads `optimizer.*` keys over the defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let c = Self {
            mode: cfg.get_or("optimizer.mode", d.mode)?,
            eta: cfg.get_or("optimizer.lr", d.eta)?,
            gamma: cfg.get_or("optimizer.momentum", d.gamma)?,
            n_bit: cfg.get_or("optimizer.n_bit", d.n_bit)?,
            clip_lo: cfg.get_or("optimizer.clip_lo", d.clip_lo)?,
            clip_hi: cfg.get_or("optimizer.clip_hi", d.clip_hi)?,
            exec: cfg.get_or("optimizer.exec", d.exec)?,
            seed: cfg.get_or("optimizer.seed", d.seed)?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Weight and velocity of one parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParamState {
    pub theta: f64,
    pub velocity: f64,
}

/// Substream address of one parameter update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepKey {
    pub seed: u64,
    pub tensor: u32,
    pub index: u64,
    pub step: u64,
}

impl StepKey {
    pub fn new(seed: u64, tensor: u32, index: u64, step: u64) -> Self {
        Self {
            seed,
            tensor,
            index,
            step,
        }
    }

    pub fn rng(&self, role: Role) -> RngState {
        RngState::new(self.seed, Label::new(self.tensor, self.index, role, self.step))
    }
}

pub fn clip_gradient(g: f64, cfg: &OptimizerConfig) -> Result<f64> {
    if !g.is_finite() {
        return Err(Error::Numeric(g));
    }
    Ok(g.clamp(cfg.clip_lo, cfg.clip_hi))
}

fn check_unit(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Numeric(x));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(contract(format!("{what} = {x} outside [-1, 1]")));
    }
    Ok(())
}

/// Scaled-add compensation: double the decoded half-sum and clamp.
fn unhalve(v: f64) -> f64 {
    (2.0 * v).clamp(-1.0, 1.0)
}

fn bipolar_p(v: f64) -> f64 {
    (v + 1.0) / 2.0
}

/// Output probability of an XNOR gate with independent inputs.
pub fn xnor_probability(pa: f64, pb: f64) -> f64 {
    pa * pb + (1.0 - pa) * (1.0 - pb)
}

/// Bit probability of the SGD datapath's final (half-sum) stream.
pub fn sgd_output_probability(theta: f64, g: f64, eta: f64) -> f64 {
    0.5 * bipolar_p(theta) + 0.5 * xnor_probability(bipolar_p(g), bipolar_p(-eta))
}

/// Bit probability of the momentum datapath's velocity half-sum stream.
pub fn velocity_output_probability(velocity: f64, g: f64, eta: f64, gamma: f64) -> f64 {
    0.5 * xnor_probability(bipolar_p(gamma), bipolar_p(velocity))
        + 0.5 * xnor_probability(bipolar_p(eta), bipolar_p(g))
}

/// Bit probability of the momentum datapath's weight half-sum stream.
pub fn momentum_weight_probability(theta: f64, new_velocity: f64) -> f64 {
    0.5 * bipolar_p(theta) + 0.5 * (1.0 - bipolar_p(new_velocity))
}

fn binomial_value<R: Rng + ?Sized>(p: f64, n_bit: usize, rng: &mut R) -> f64 {
    let k = Binomial::new(n_bit as u64, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng);
    Priori::Bipolar.value_of(k as f64 / n_bit as f64)
}

/// `theta - eta * clip(g)`.
pub fn float_sgd_step(theta: f64, g: f64, cfg: &OptimizerConfig) -> Result<f64> {
    Ok(theta - cfg.eta * clip_gradient(g, cfg)?)
}

/// `v' = gamma * v + eta * clip(g)`, `theta' = theta - v'`.
pub fn float_momentum_step(state: ParamState, g: f64, cfg: &OptimizerConfig) -> Result<ParamState> {
    let velocity = cfg.gamma * state.velocity + cfg.eta * clip_gradient(g, cfg)?;
    Ok(ParamState {
        theta: state.theta - velocity,
        velocity,
    })
}

/// SGD over materialized streams.
pub fn sc_sgd_step(theta: f64, g: f64, cfg: &OptimizerConfig, key: StepKey) -> Result<f64> {
    check_unit(theta, "theta")?;
    let g = clip_gradient(g, cfg)?;
    let n = cfg.n_bit;
    let gs = encode(g, n, Priori::Bipolar, &mut key.rng(Role::Gradient))?;
    let es = encode(-cfg.eta, n, Priori::Bipolar, &mut key.rng(Role::LearningRate))?;
    let ts = encode(theta, n, Priori::Bipolar, &mut key.rng(Role::Theta))?;
    let sel = encode(0.5, n, Priori::Unipolar, &mut key.rng(Role::Select))?;
    let product = xnor_mul(&gs, &es)?;
    let half = scaled_add(&ts, &product, &sel)?;
    Ok(unhalve(decode(&half)))
}

/// Momentum over materialized streams.
pub fn sc_momentum_step(
    state: ParamState,
    g: f64,
    cfg: &OptimizerConfig,
    key: StepKey,
) -> Result<ParamState> {
    check_unit(state.theta, "theta")?;
    check_unit(state.velocity, "velocity")?;
    let g = clip_gradient(g, cfg)?;
    let n = cfg.n_bit;
    let bip = Priori::Bipolar;
    let gam = encode(cfg.gamma, n, bip, &mut key.rng(Role::Momentum))?;
    let vs = encode(state.velocity, n, bip, &mut key.rng(Role::Velocity))?;
    let es = encode(cfg.eta, n, bip, &mut key.rng(Role::LearningRate))?;
    let gs = encode(g, n, bip, &mut key.rng(Role::Gradient))?;
    let vsel = encode(0.5, n, Priori::Unipolar, &mut key.rng(Role::VelocitySelect))?;
    let v_half = scaled_add(&xnor_mul(&gam, &vs)?, &xnor_mul(&es, &gs)?, &vsel)?;
    let velocity = unhalve(decode(&v_half));

    let vn = encode(velocity, n, bip, &mut key.rng(Role::VelocityReencode))?;
    let ts = encode(state.theta, n, bip, &mut key.rng(Role::Theta))?;
    let sel = encode(0.5, n, Priori::Unipolar, &mut key.rng(Role::Select))?;
    let t_half = scaled_add(&ts, &negate(&vn)?, &sel)?;
    Ok(ParamState {
        theta: unhalve(decode(&t_half)),
        velocity,
    })
}

/// SGD with a binomial popcount in place of the materialized streams.
pub fn binomial_sgd_step(theta: f64, g: f64, cfg: &OptimizerConfig, key: StepKey) -> Result<f64> {
    check_unit(theta, "theta")?;
    let g = clip_gradient(g, cfg)?;
    let p = sgd_output_probability(theta, g, cfg.eta);
    Ok(unhalve(binomial_value(p, cfg.n_bit, &mut key.rng(Role::Select))))
}

/// Momentum with binomial popcounts in place of the materialized streams.
pub fn binomial_momentum_step(
    state: ParamState,
    g: f64,
    cfg: &OptimizerConfig,
    key: StepKey,
) -> Result<ParamState> {
    check_unit(state.theta, "theta")?;
    check_unit(state.velocity, "velocity")?;
    let g = clip_gradient(g, cfg)?;
    let pv = velocity_output_probability(state.velocity, g, cfg.eta, cfg.gamma);
    let velocity = unhalve(binomial_value(pv, cfg.n_bit, &mut key.rng(Role::VelocitySelect)));
    let pt = momentum_weight_probability(state.theta, velocity);
    let theta = unhalve(binomial_value(pt, cfg.n_bit, &mut key.rng(Role::Select)));
    Ok(ParamState { theta, velocity })
}

/// One SGD update in the configured execution mode.
pub fn sgd_step(theta: f64, g: f64, cfg: &OptimizerConfig, key: StepKey) -> Result<f64> {
    match cfg.exec {
        ExecMode::Float => float_sgd_step(theta, g, cfg),
        ExecMode::BitExact => sc_sgd_step(theta, g, cfg, key),
        ExecMode::Binomial => binomial_sgd_step(theta, g, cfg, key),
    }
}

/// One momentum update in the configured execution mode.
pub fn momentum_step(
    state: ParamState,
    g: f64,
    cfg: &OptimizerConfig,
    key: StepKey,
) -> Result<ParamState> {
    match cfg.exec {
        ExecMode::Float => float_momentum_step(state, g, cfg),
        ExecMode::BitExact => sc_momentum_step(state, g, cfg, key),
        ExecMode::Binomial => binomial_momentum_step(state, g, cfg, key),
    }
}

/// One update of `state` in the configured mode and execution.
pub fn step(state: ParamState, g: f64, cfg: &OptimizerConfig, key: StepKey) -> Result<ParamState> {
    match cfg.mode {
        Mode::Sgd => Ok(ParamState {
            theta: sgd_step(state.theta, g, cfg, key)?,
            velocity: state.velocity,
        }),
        Mode::Momentum => momentum_step(state, g, cfg, key),
    }
}

/// Mean on-probability of the gradient array, `mean((clip(g) + 1) / 2)`.
pub fn gradient_on_probability<T: Float>(grads: &[T], cfg: &OptimizerConfig) -> Result<f64> {
    if grads.is_empty() {
        return Ok(0.5);
    }
    let mut acc = 0.0;
    for g in grads {
        acc += bipolar_p(clip_gradient(g.to_f64().unwrap_or(f64::NAN), cfg)?);
    }
    Ok(acc / grads.len() as f64)
}

/// Update every element of a parameter tensor.
///
/// `velocity` must match `params` in length for momentum and is ignored for
/// SGD. `scale` is a static per-tensor range: values are stored as
/// `scale * theta` with `theta` in `[-1, 1]`. Each element draws from its own
/// `(tensor, index, step)` substreams. Returns the gradient on-probability
/// statistic of this tensor.
#[allow(clippy::too_many_arguments)]
pub fn update_tensor<T: Float>(
    params: &mut [T],
    velocity: &mut [T],
    grads: &[T],
    cfg: &OptimizerConfig,
    tensor: u32,
    step_index: u64,
    scale: f64,
) -> Result<f64> {
    if params.len() != grads.len() {
        return Err(contract(format!(
            "update_tensor: {} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if cfg.mode == Mode::Momentum && velocity.len() != params.len() {
        return Err(contract(format!(
            "update_tensor: {} parameters but {} velocities",
            params.len(),
            velocity.len()
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(contract("update_tensor: scale must be positive"));
    }
    let e_grad = gradient_on_probability(grads, cfg)?;
    let to = |x: T| x.to_f64().unwrap_or(f64::NAN);
    let from = |x: f64| T::from(x).expect("f64 converts to float type");
    for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
        let key = StepKey::new(cfg.seed, tensor, i as u64, step_index);
        let g = to(g) * scale;
        match cfg.mode {
            Mode::Sgd => {
                let theta = sgd_step(to(*p) / scale, g, cfg, key)?;
                *p = from(theta * scale);
            }
            Mode::Momentum => {
                let state = ParamState {
                    theta: to(*p) / scale,
                    velocity: to(velocity[i]),
                };
                let next = momentum_step(state, g, cfg, key)?;
                *p = from(next.theta * scale);
                velocity[i] = from(next.velocity);
            }
        }
    }
    Ok(e_grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(exec: ExecMode) -> OptimizerConfig {
        OptimizerConfig {
            eta: 0.1,
            exec,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn clipping() {
        let c = cfg(ExecMode::Float);
        assert_eq!(clip_gradient(0.3, &c).unwrap(), 0.3);
        assert_eq!(clip_gradient(5.0, &c).unwrap(), 1.0);
        assert_eq!(clip_gradient(-2.0, &c).unwrap(), -1.0);
        assert!(matches!(clip_gradient(f64::INFINITY, &c), Err(Error::Numeric(_))));
        assert!(clip_gradient(f64::NAN, &c).is_err());
    }

    #[test]
    fn float_baselines() {
        let mut c = cfg(ExecMode::Float);
        assert!((float_sgd_step(0.5, 0.2, &c).unwrap() - 0.48).abs() < 1e-15);
        c.eta = 0.5;
        let s = float_momentum_step(
            ParamState {
                theta: 0.0,
                velocity: 0.1,
            },
            0.2,
            &c,
        )
        .unwrap();
        assert!((s.velocity - 0.19).abs() < 1e-15);
        assert!((s.theta + 0.19).abs() < 1e-15);
        let still = float_momentum_step(ParamState { theta: 0.3, velocity: 0.0 }, 0.0, &c).unwrap();
        assert_eq!(still, ParamState { theta: 0.3, velocity: 0.0 });
    }

    #[test]
    fn composed_probability_matches_expectation() {
        // Doubled bipolar value of the half-sum stream is theta - eta * g.
        for (t, g, e) in [(0.5, 0.2, 0.1), (-0.3, -0.7, 0.5), (0.9, 1.0, 0.01)] {
            let p = sgd_output_probability(t, g, e);
            assert!((2.0 * (2.0 * p - 1.0) - (t - e * g)).abs() < 1e-12);
        }
        let pv = velocity_output_probability(0.1, 0.2, 0.5, 0.9);
        assert!((2.0 * (2.0 * pv - 1.0) - 0.19).abs() < 1e-12);
        let pt = momentum_weight_probability(0.0, 0.19);
        assert!((2.0 * (2.0 * pt - 1.0) + 0.19).abs() < 1e-12);
    }

    #[test]
    fn single_bit_streams() {
        let mut c = cfg(ExecMode::Binomial);
        c.n_bit = 1;
        for i in 0..50 {
            let r = binomial_sgd_step(0.2, 0.1, &c, StepKey::new(1, 0, i, 0)).unwrap();
            assert!(r == 1.0 || r == -1.0);
            let r = sc_sgd_step(0.2, 0.1, &c, StepKey::new(1, 0, i, 0)).unwrap();
            assert!(r == 1.0 || r == -1.0);
        }
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        for exec in [ExecMode::BitExact, ExecMode::Binomial] {
            let mut c = cfg(exec);
            c.eta = 1.0;
            c.n_bit = 64;
            for i in 0..40 {
                let r = sgd_step(-1.0, 1.0, &c, StepKey::new(2, 0, i, 0)).unwrap();
                assert!((-1.0..=1.0).contains(&r));
                let s = momentum_step(
                    ParamState { theta: -1.0, velocity: 1.0 },
                    1.0,
                    &c,
                    StepKey::new(2, 0, i, 0),
                )
                .unwrap();
                assert!((-1.0..=1.0).contains(&s.theta));
                assert!((-1.0..=1.0).contains(&s.velocity));
            }
        }
    }

    #[test]
    fn out_of_range_state_is_rejected() {
        let c = cfg(ExecMode::BitExact);
        assert!(sc_sgd_step(1.5, 0.0, &c, StepKey::new(0, 0, 0, 0)).is_err());
        assert!(binomial_sgd_step(-1.5, 0.0, &c, StepKey::new(0, 0, 0, 0)).is_err());
        let bad = ParamState { theta: 0.0, velocity: 2.0 };
        assert!(sc_momentum_step(bad, 0.0, &c, StepKey::new(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(ExecMode::Binomial);
        c.eta = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(ExecMode::Binomial);
        c.gamma = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(ExecMode::Binomial);
        c.clip_hi = 2.0;
        assert!(c.validate().is_err());
        c.exec = ExecMode::Float;
        assert!(c.validate().is_ok());
        let parsed = OptimizerConfig::from_config(
            &Config::parse("optimizer.mode = momentum\noptimizer.exec = bitexact\noptimizer.lr = 0.05")
                .unwrap(),
        )
        .unwrap();
        assert_eq!(parsed.mode, Mode::Momentum);
        assert_eq!(parsed.exec, ExecMode::BitExact);
        assert_eq!(parsed.eta, 0.05);
    }

    #[test]
    fn tensor_update_statistics() {
        let c = cfg(ExecMode::Binomial);
        let mut p = vec![0.1f32; 10];
        let mut v = vec![];
        assert_eq!(update_tensor(&mut p, &mut v, &[0.0f32; 10], &c, 0, 0, 1.0).unwrap(), 0.5);
        assert_eq!(update_tensor(&mut p, &mut v, &[1.0f32; 10], &c, 0, 1, 1.0).unwrap(), 1.0);
        assert_eq!(update_tensor(&mut p, &mut v, &[7.0f32; 10], &c, 0, 2, 1.0).unwrap(), 1.0);
        assert!(update_tensor(&mut p, &mut v, &[0.0f32; 9], &c, 0, 3, 1.0).is_err());
        let mut m = c;
        m.mode = Mode::Momentum;
        assert!(update_tensor(&mut p, &mut v, &[0.0f32; 10], &m, 0, 3, 1.0).is_err());
    }

    #[test]
    fn tensor_update_is_deterministic() {
        let c = cfg(ExecMode::Binomial);
        let grads: Vec<f64> = (0..32).map(|i| (i as f64 - 16.0) / 20.0).collect();
        let mut a = vec![0.2f64; 32];
        let mut b = vec![0.2f64; 32];
        update_tensor(&mut a, &mut [], &grads, &c, 4, 9, 1.0).unwrap();
        update_tensor(&mut b, &mut [], &grads, &c, 4, 9, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn float_tensor_update_applies_scale() {
        let c = cfg(ExecMode::Float);
        let mut p = vec![2.0f64];
        // theta = 1, g_theta = 2 * 0.25 = 0.5, theta' = 1 - 0.05, p' = 1.9
        update_tensor(&mut p, &mut [], &[0.25], &c, 0, 0, 2.0).unwrap();
        assert!((p[0] - 1.9).abs() < 1e-12);
    }
}
