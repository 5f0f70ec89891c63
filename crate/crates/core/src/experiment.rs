//! Configuration-driven experiments: training sweeps, aggregation, cost
//! reports, device samples and the self-test.
//!
//! All output lands under `output.dir`:
//!
//! * `runs/<run_id>.csv`, one per training run;
//! * `aggregate.csv`, mean and standard deviation across repeats;
//! * `cost_n<n_bit>.json`, one per stochastic stream length;
//! * `device_samples.csv` from [`device_sample`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use crate::config::Config;
use crate::crossbar::{plan_array, power_report, CostReport, TileConfig, DEFAULT_E_WEIGHT, DEFAULT_KAPPA, DEFAULT_STREAMS};
use crate::device::{pulse_width_for, sample_switching_time, switch_probability, DeviceParams};
use crate::error::{Error, Result};
use crate::nn::{idx, load_idx, train, Dataset, MetricsLog, Network, ProtocolConfig};
use crate::optimizer::{self, ExecMode, Mode, OptimizerConfig, ParamState, StepKey};
use crate::rng::{Label, RngState, Role};
use crate::sc::{self, LfsrState, Priori, DEFAULT_LFSR_TAPS, DEFAULT_LFSR_WIDTH};
use crate::stats;

/// Keys accepted by [`ExperimentConfig::from_config`].
pub const ALLOWED_KEYS: &[&str] = &[
    "optimizer.mode",
    "optimizer.lr",
    "optimizer.n_bit",
    "optimizer.momentum",
    "optimizer.clip_lo",
    "optimizer.clip_hi",
    "optimizer.exec",
    "train.epochs",
    "train.batch_size",
    "train.repeats",
    "train.seed",
    "train.seed_stride",
    "train.eval_every",
    "train.bn_momentum",
    "train.baseline",
    "data.dir",
    "data.train_subset",
    "data.test_subset",
    "data.synthetic",
    "data.synthetic_train",
    "data.synthetic_test",
    "output.dir",
    "cost.kappa",
    "cost.e_weight",
    "cost.e_grad",
    "cost.n_streams",
    "device.*",
    "tile.*",
    "lfsr.*",
    "selftest.*",
];

/// Column set of every per-run metrics CSV.
pub const METRICS_HEADER: &str =
    "run_id,optimizer,lr,n_bit,epoch,minibatch,train_loss,test_accuracy,e_grad_stat,wall_time_s";

/// Column set of the aggregate CSV.
pub const AGGREGATE_HEADER: &str = "optimizer,lr,n_bit,epoch,minibatch,repeats,train_loss_mean,train_loss_std,test_accuracy_mean,test_accuracy_std,e_grad_stat_mean,e_grad_stat_std";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub modes: Vec<Mode>,
    pub lrs: Vec<f64>,
    pub n_bits: Vec<usize>,
    pub gamma: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub exec: ExecMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Seed offset between repeats; 0 makes every repeat identical.
    pub seed_stride: u64,
    /// Test-set evaluation cadence in minibatches; 0 means epoch ends only.
    pub eval_every: usize,
    pub bn_momentum: f64,
    /// Also train a floating-point run per (optimizer, lr).
    pub baseline: bool,
    pub data_dir: PathBuf,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    /// Fall back to the synthetic set when the IDX files are missing.
    pub synthetic: bool,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub output_dir: PathBuf,
    pub kappa: f64,
    pub e_weight: f64,
    pub n_streams: usize,
    pub device: DeviceParams,
    pub tile: TileConfig,
    /// SHA-256 of the canonical configuration.
    pub config_hash: String,
}

fn list_or<T: std::str::FromStr>(cfg: &Config, key: &str, default: Vec<T>) -> Result<Vec<T>> {
    let v = cfg.get_list(key)?.unwrap_or(default);
    if v.is_empty() {
        return Err(Error::Config(format!("{key} must not be empty")));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(ALLOWED_KEYS)?;
        let epochs: usize = cfg.get_or("train.epochs", 1)?;
        let c = Self {
            modes: list_or(cfg, "optimizer.mode", vec![Mode::Sgd])?,
            lrs: list_or(cfg, "optimizer.lr", vec![0.01, 0.05, 0.1, 0.5])?,
            n_bits: list_or(cfg, "optimizer.n_bit", vec![2048, 8192, 16384, 65536])?,
            gamma: cfg.get_or("optimizer.momentum", 0.9)?,
            clip_lo: cfg.get_or("optimizer.clip_lo", -1.0)?,
            clip_hi: cfg.get_or("optimizer.clip_hi", 1.0)?,
            exec: cfg.get_or("optimizer.exec", ExecMode::Binomial)?,
            epochs,
            batch_size: cfg.get_or("train.batch_size", 256)?,
            repeats: cfg.get_or("train.repeats", 3)?,
            seed: cfg.get_or("train.seed", 1)?,
            seed_stride: cfg.get_or("train.seed_stride", 1)?,
            eval_every: cfg.get_or("train.eval_every", usize::from(epochs == 1))?,
            bn_momentum: cfg.get_or("train.bn_momentum", 0.1)?,
            baseline: cfg.get_or("train.baseline", false)?,
            data_dir: cfg.get_or("data.dir", PathBuf::from("data/mnist"))?,
            train_subset: cfg.get("data.train_subset")?,
            test_subset: cfg.get("data.test_subset")?,
            synthetic: cfg.get_or("data.synthetic", false)?,
            synthetic_train: cfg.get_or("data.synthetic_train", 2000)?,
            synthetic_test: cfg.get_or("data.synthetic_test", 500)?,
            output_dir: cfg.get_or("output.dir", PathBuf::from("out"))?,
            kappa: cfg.get_or("cost.kappa", DEFAULT_KAPPA)?,
            e_weight: cfg.get_or("cost.e_weight", DEFAULT_E_WEIGHT)?,
            n_streams: cfg.get_or("cost.n_streams", DEFAULT_STREAMS)?,
            device: DeviceParams::from_config(cfg)?,
            tile: TileConfig::from_config(cfg)?,
            config_hash: cfg.hash(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("train.repeats must be at least 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("train.bn_momentum must lie in [0, 1]".into()));
        }
        for run in self.runs() {
            run.opt.validate()?;
        }
        Ok(())
    }

    /// The sweep grid in output order: optimizer, lr, n_bit (float baseline
    /// first as `n_bit = 0`), repeat.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &lr in &self.lrs {
                let mut points: Vec<(usize, ExecMode)> = Vec::new();
                if self.baseline {
                    points.push((0, ExecMode::Float));
                }
                points.extend(self.n_bits.iter().map(|&n| (n, self.exec)));
                for (n_bit, exec) in points {
                    for repeat in 0..self.repeats {
                        let seed = self.seed.wrapping_add(repeat as u64 * self.seed_stride);
                        let opt = OptimizerConfig {
                            mode,
                            eta: lr,
                            gamma: self.gamma,
                            n_bit: n_bit.max(1),
                            clip_lo: self.clip_lo,
                            clip_hi: self.clip_hi,
                            exec,
                            seed,
                        };
                        out.push(RunSpec {
                            run_id: format!("{mode}_lr{lr}_n{n_bit}_r{repeat}"),
                            n_bit,
                            repeat,
                            opt,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One training run of the grid. `n_bit = 0` marks the float baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub n_bit: usize,
    pub repeat: usize,
    pub opt: OptimizerConfig,
}

/// Load MNIST from `data_dir`, or the synthetic set when allowed and the
/// files are absent.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let [ti, tl, vi, vl] = idx::mnist_paths(&cfg.data_dir);
    let present = [&ti, &tl, &vi, &vl].iter().all(|p| p.is_file());
    let (train_set, test_set) = if present {
        (load_idx(&ti, &tl)?, load_idx(&vi, &vl)?)
    } else if cfg.synthetic {
        (
            Dataset::synthetic(cfg.synthetic_train, cfg.seed),
            Dataset::synthetic(cfg.synthetic_test, cfg.seed.wrapping_add(1)),
        )
    } else {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("MNIST files not found under {}", cfg.data_dir.display()),
        )));
    };
    let cut = |d: Dataset, n: Option<usize>| match n {
        Some(n) => d.take(n),
        None => d,
    };
    Ok((cut(train_set, cfg.train_subset), cut(test_set, cfg.test_subset)))
}

/// Train one run from scratch.
pub fn run_one(
    cfg: &ExperimentConfig,
    run: &RunSpec,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<MetricsLog> {
    let mut net = Network::<f32>::mnist_cnn(&mut RngState::new(run.opt.seed, Label::role(Role::Init)))?;
    net.set_bn_momentum(cfg.bn_momentum);
    let protocol = ProtocolConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: run.opt.seed,
        eval_every: cfg.eval_every,
        run_id: run.run_id.clone(),
    };
    train(&mut net, train_set, test_set, &run.opt, &protocol)
}

/// Per-run metrics in the CSV schema of [`METRICS_HEADER`].
pub fn metrics_csv(run: &RunSpec, log: &MetricsLog) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in log.records() {
        let acc = r.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.run_id, run.opt.mode, run.opt.eta, run.n_bit, r.epoch, r.minibatch, r.train_loss, acc, r.e_grad_stat, r.wall_time_s
        );
    }
    s
}

/// Running mean and spread that stays exact for identical inputs.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0).sqrt()
        }
    }
}

#[derive(Default)]
struct Cell {
    repeats: usize,
    loss: Moments,
    acc: Moments,
    e_grad: Moments,
}

/// Aggregate CSV over repeats, sorted by optimizer, lr, n_bit, epoch and
/// minibatch. Wall time is left out so the file is reproducible.
pub fn aggregate_csv(results: &[(RunSpec, MetricsLog)]) -> String {
    type Key = (String, u64, usize, usize, usize);
    let mut cells: BTreeMap<Key, Cell> = BTreeMap::new();
    let mut lr_text: BTreeMap<u64, f64> = BTreeMap::new();
    for (run, log) in results {
        // Non-negative learning rates order the same as their bit patterns.
        let lr_key = run.opt.eta.to_bits();
        lr_text.insert(lr_key, run.opt.eta);
        for r in log.records() {
            let cell = cells
                .entry((run.opt.mode.to_string(), lr_key, run.n_bit, r.epoch, r.minibatch))
                .or_default();
            cell.repeats += 1;
            cell.loss.push(r.train_loss);
            cell.e_grad.push(r.e_grad_stat);
            if let Some(a) = r.test_accuracy {
                cell.acc.push(a);
            }
        }
    }
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for ((mode, lr_key, n_bit, epoch, minibatch), c) in &cells {
        let (acc_mean, acc_std) = if c.acc.n > 0 {
            (c.acc.mean.to_string(), c.acc.std().to_string())
        } else {
            (String::new(), String::new())
        };
        let _ = writeln!(
            s,
            "{mode},{},{n_bit},{epoch},{minibatch},{},{},{},{acc_mean},{acc_std},{},{}",
            lr_text[lr_key],
            c.repeats,
            c.loss.mean,
            c.loss.std(),
            c.e_grad.mean,
            c.e_grad.std()
        );
    }
    s
}

/// Cost report tagged with the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostDocument {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: CostReport,
}

pub fn cost_document(cfg: &ExperimentConfig, n_bit: usize, e_grad: f64) -> Result<CostDocument> {
    let plan = plan_array(n_bit, cfg.n_streams, &cfg.tile)?;
    let report = power_report(&plan, e_grad, cfg.e_weight, &cfg.tile, cfg.kappa)?;
    Ok(CostDocument {
        config_hash: cfg.config_hash.clone(),
        report,
    })
}

fn write_json(path: &Path, doc: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Files written by [`run_experiment`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentOutput {
    pub run_csvs: Vec<PathBuf>,
    pub aggregate: PathBuf,
    pub cost_reports: Vec<PathBuf>,
}

/// Run the sweep grid and write all CSV and cost files.
///
/// Each stochastic `n_bit` gets a cost report driven by the step-1 gradient
/// statistic of its first run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_grid(cfg, &cfg.runs())
}

fn run_grid(cfg: &ExperimentConfig, runs: &[RunSpec]) -> Result<ExperimentOutput> {
    let (train_set, test_set) = load_datasets(cfg)?;
    let run_dir = cfg.output_dir.join("runs");
    fs::create_dir_all(&run_dir)?;
    let mut out = ExperimentOutput::default();
    let mut results = Vec::with_capacity(runs.len());
    let mut e_grad_by_n: BTreeMap<usize, f64> = BTreeMap::new();
    for run in runs {
        let log = run_one(cfg, run, &train_set, &test_set)?;
        let path = run_dir.join(format!("{}.csv", run.run_id));
        fs::write(&path, metrics_csv(run, &log))?;
        out.run_csvs.push(path);
        if run.n_bit > 0 {
            if let Some(e) = log.step1_e_grad() {
                e_grad_by_n.entry(run.n_bit).or_insert(e);
            }
        }
        results.push((run.clone(), log));
    }
    out.aggregate = cfg.output_dir.join("aggregate.csv");
    fs::write(&out.aggregate, aggregate_csv(&results))?;
    for (n_bit, e) in e_grad_by_n {
        let path = cfg.output_dir.join(format!("cost_n{n_bit}.json"));
        write_json(&path, &cost_document(cfg, n_bit, e)?)?;
        out.cost_reports.push(path);
    }
    Ok(out)
}

/// A single run: the first grid point and repeat.
pub fn run_single(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let single = ExperimentConfig {
        repeats: 1,
        baseline: false,
        ..cfg.clone()
    };
    let first = single.runs().into_iter().next().ok_or_else(|| Error::Config("empty grid".into()))?;
    run_grid(&single, &[first])
}

/// Cost reports for every configured `n_bit` at a fixed gradient statistic
/// (`cost.e_grad`, default 0.5367).
pub fn cost_only(cfg: &ExperimentConfig, e_grad: f64) -> Result<Vec<(PathBuf, CostDocument)>> {
    fs::create_dir_all(&cfg.output_dir)?;
    let mut out = Vec::new();
    for &n in &cfg.n_bits {
        let doc = cost_document(cfg, n, e_grad)?;
        let path = cfg.output_dir.join(format!("cost_n{n}.json"));
        write_json(&path, &doc)?;
        out.push((path, doc));
    }
    Ok(out)
}

/// Switching-time samples as `sample_id,switching_time_s`.
pub fn device_sample(params: &DeviceParams, count: usize, seed: u64, path: &Path) -> Result<Vec<f64>> {
    let mut rng = RngState::new(seed, Label::role(Role::Device));
    let samples: Vec<f64> = (0..count).map(|_| sample_switching_time(params, &mut rng)).collect();
    let mut s = String::from("sample_id,switching_time_s\n");
    for (i, t) in samples.iter().enumerate() {
        let _ = writeln!(s, "{i},{t}");
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, s)?;
    Ok(samples)
}

/// One self-test property.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Short versions of the arithmetic, device and optimizer properties.
///
/// Reads `selftest.seed`, `lfsr.width`, `lfsr.taps` and the `device.*` keys.
pub fn selftest(cfg: &Config) -> Result<Vec<Check>> {
    let seed: u64 = cfg.get_or("selftest.seed", 1)?;
    let width: u32 = cfg.get_or("lfsr.width", DEFAULT_LFSR_WIDTH)?;
    let taps: Vec<u32> = cfg
        .get_list("lfsr.taps")?
        .unwrap_or_else(|| DEFAULT_LFSR_TAPS.to_vec());
    let device = DeviceParams::from_config(cfg)?;
    let rng = |tensor: u32, role: Role| RngState::new(seed, Label::new(tensor, 0, role, 0));
    let mut out = Vec::new();

    let n = 16384;
    let trials = 50;
    let (a, b) = (0.6, -0.5);
    let mut mul_ok = 0;
    let mut add_ok = 0;
    let mut r = rng(1, Role::Other);
    for _ in 0..trials {
        let sa = sc::encode(a, n, Priori::Bipolar, &mut r)?;
        let sb = sc::encode(b, n, Priori::Bipolar, &mut r)?;
        let sel = sc::encode(0.5, n, Priori::Unipolar, &mut r)?;
        mul_ok += usize::from((sc::decode(&sc::xnor_mul(&sa, &sb)?) - a * b).abs() <= 0.05);
        add_ok += usize::from((sc::decode(&sc::scaled_add(&sa, &sb, &sel)?) - (a + b) / 2.0).abs() <= 0.05);
    }
    out.push(check("sc.xnor_mul", mul_ok * 100 >= 95 * trials, format!("{mul_ok}/{trials} within 0.05")));
    out.push(check("sc.scaled_add", add_ok * 100 >= 95 * trials, format!("{add_ok}/{trials} within 0.05")));

    let mut r = rng(2, Role::Other);
    let mut exact = 0;
    for _ in 0..200 {
        let len = r.random_range(1..2000);
        let s = sc::encode(r.random_range(-1.0..=1.0), len, Priori::Bipolar, &mut r)?;
        exact += usize::from(sc::decode(&sc::negate(&s)?) == -sc::decode(&s));
    }
    out.push(check("sc.negate", exact == 200, format!("{exact}/200 exact")));

    let lfsr = LfsrState::new(width, &taps, 1)?;
    let full = (1u64 << width) - 1;
    let period = lfsr.period();
    out.push(check(
        "lfsr.period",
        period == Some(full),
        match period {
            Some(p) => format!("period {p}, maximal {full}"),
            None => "seed state never recurs".to_string(),
        },
    ));

    let mut worst: f64 = 0.0;
    for i in 1..200 {
        let p = i as f64 / 200.0;
        let t = pulse_width_for(p, device.v_prog, &device)?;
        let back = switch_probability(t, device.v_prog, &device)?;
        worst = worst.max((back - p).abs() / p);
    }
    out.push(check("device.round_trip", worst <= 1e-9, format!("max relative error {worst:.3e}")));

    let mut r = rng(3, Role::Device);
    let samples: Vec<f64> = (0..20_000).map(|_| sample_switching_time(&device, &mut r)).collect();
    let bins = 20;
    let mut counts = vec![0u64; bins];
    for t in &samples {
        let u = 1.0 - (-t / device.tau).exp();
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let outcome = stats::chi_square(&counts, &vec![1.0 / bins as f64; bins], 0.01);
    out.push(check(
        "device.switching_law",
        outcome.passed(),
        format!("chi-square {:.2} vs critical {:.2}", outcome.statistic, outcome.critical),
    ));

    let opt = OptimizerConfig {
        eta: 0.5,
        n_bit: 16384,
        seed,
        ..Default::default()
    };
    let (theta, g) = (0.3, -0.4);
    let expected = optimizer::float_sgd_step(theta, g, &opt)?;
    let reps = 400;
    let draws: Vec<f64> = (0..reps)
        .map(|i| optimizer::binomial_sgd_step(theta, g, &opt, StepKey::new(seed, 0, 0, i)))
        .collect::<Result<_>>()?;
    let se = stats::std_dev(&draws) / (reps as f64).sqrt();
    let gap = (stats::mean(&draws) - expected).abs();
    out.push(check("optimizer.unbiased", gap <= 4.0 * se, format!("|mean - float| {gap:.2e}, 4 SE {:.2e}", 4.0 * se)));

    let small = |exec| OptimizerConfig {
        mode: Mode::Momentum,
        eta: 0.5,
        n_bit: 1024,
        exec,
        seed,
        ..Default::default()
    };
    let state = ParamState {
        theta: 0.2,
        velocity: 0.1,
    };
    let draw = |exec| -> Result<Vec<f64>> {
        let c = small(exec);
        (0..200)
            .map(|i| optimizer::step(state, -0.3, &c, StepKey::new(seed, 1, 0, i)).map(|s| s.theta))
            .collect()
    };
    let ks = stats::ks_two_sample(&draw(ExecMode::BitExact)?, &draw(ExecMode::Binomial)?, 0.01);
    out.push(check(
        "optimizer.mode_equivalence",
        ks.passed(),
        format!("KS {:.4} vs critical {:.4}", ks.statistic, ks.critical),
    ));
    Ok(out)
}
