use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use memsc::config::Config;
use memsc::device::DeviceParams;
use memsc::experiment::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "memsc", version, about = "Stochastic-computing parameter update simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single run (first grid point).
    Train(Common),
    /// Run the full sweep grid with repeats and write the aggregate.
    Sweep(Common),
    /// Write area and power reports for every configured n_bit.
    Cost(Common),
    /// Write CBRAM switching-time samples as CSV.
    DeviceSample(Common),
    /// Run the short property suites.
    Selftest(Common),
}

fn load(common: &Common) -> memsc::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::new(),
    };
    for o in &common.overrides {
        cfg.set(o)?;
    }
    Ok(cfg)
}

fn report_outputs(out: &experiment::ExperimentOutput) {
    for p in &out.run_csvs {
        println!("run       {}", p.display());
    }
    println!("aggregate {}", out.aggregate.display());
    for p in &out.cost_reports {
        println!("cost      {}", p.display());
    }
}

fn run(cli: Cli) -> memsc::Result<bool> {
    match cli.command {
        Command::Train(c) => {
            let cfg = ExperimentConfig::from_config(&load(&c)?)?;
            report_outputs(&experiment::run_single(&cfg)?);
        }
        Command::Sweep(c) => {
            let cfg = ExperimentConfig::from_config(&load(&c)?)?;
            report_outputs(&experiment::run_experiment(&cfg)?);
        }
        Command::Cost(c) => {
            let raw = load(&c)?;
            let e_grad: f64 = raw.get_or("cost.e_grad", 0.5367)?;
            let cfg = ExperimentConfig::from_config(&raw)?;
            for (path, doc) in experiment::cost_only(&cfg, e_grad)? {
                let r = &doc.report;
                println!(
                    "n_bit {:>6}  tiles {:>5}  area {:.4} mm2  power {:.2} uW  static cap {:.2} uW  ({})",
                    r.n_bit,
                    r.total_tiles,
                    r.total_area_mm2,
                    r.total_power_w * 1e6,
                    r.static_power_cap_w * 1e6,
                    path.display()
                );
            }
        }
        Command::DeviceSample(c) => {
            let raw = load(&c)?;
            raw.check_keys(experiment::ALLOWED_KEYS)?;
            let params = DeviceParams::from_config(&raw)?;
            let count: usize = raw.get_or("device.samples", 100_000)?;
            let seed: u64 = raw.get_or("device.seed", 1)?;
            let dir: PathBuf = raw.get_or("output.dir", PathBuf::from("out"))?;
            let path = dir.join("device_samples.csv");
            let samples = experiment::device_sample(&params, count, seed, &path)?;
            println!(
                "{} samples, mean {:.4e} s, written to {}",
                samples.len(),
                memsc::stats::mean(&samples),
                path.display()
            );
        }
        Command::Selftest(c) => {
            let raw = load(&c)?;
            raw.check_keys(experiment::ALLOWED_KEYS)?;
            let mut all = true;
            for check in experiment::selftest(&raw)? {
                println!("{} {:<28} {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
                all &= check.passed;
            }
            return Ok(all);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
