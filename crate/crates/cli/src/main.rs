//! `shared-cacc`: run scenarios, sweep human authority, validate the solvers.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shared_cacc::metrics::{moe_report, odd_sweep, parse_grid};
use shared_cacc::simulator::simulate;
use shared_cacc::validate::{run_suite, Suite, ValidationConfig, DEFAULT_SEED};

use output::{RunManifest, ThresholdReport};

const EXIT_CONFIG: u8 = 1;
const EXIT_COLLISION: u8 = 2;
const EXIT_BREACH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "shared-cacc",
    version,
    about = "Human-machine shared CACC takeover simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files.
    #[arg(long, env = "SHARED_CACC_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `key.path=value` applied to the config before validation; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario; writes trajectory CSV, MOE JSON and a manifest.
    Run(Common),
    /// Sweep constant human authority and locate the string-stability boundary.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept parameter.
        #[arg(long, default_value = "alpha_h")]
        param: String,
        /// `lo:step:hi` or a comma-separated list.
        #[arg(long, default_value = "0:0.1:1")]
        grid: String,
    },
    /// Run the randomized solver cross-checks.
    Validate {
        /// Suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Seed of the random instance generator.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Random instances per suite.
        #[arg(long)]
        instances: Option<usize>,
        /// Adds this offset to a feedback gain (negative control).
        #[arg(long, hide = true)]
        perturb_gain: Option<f64>,
    },
    /// Recompute MOEs from a trajectory CSV written by `run`.
    Metrics {
        /// Trajectory CSV.
        #[arg(long)]
        csv: PathBuf,
        /// Scenario the CSV was produced from (timing and metric settings).
        #[arg(long)]
        config: PathBuf,
        /// Same as for `run`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failures carry their exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(common) => cmd_run(&common),
        Command::Sweep { common, param, grid } => cmd_sweep(&common, &param, &grid),
        Command::Validate {
            suite,
            seed,
            instances,
            perturb_gain,
        } => cmd_validate(&suite, seed, instances, perturb_gain),
        Command::Metrics {
            csv,
            config,
            overrides,
            out,
        } => cmd_metrics(&csv, &config, &overrides, out.as_deref()).map_err(config_error),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn prepare(common: &Common) -> Result<shared_cacc::simulator::ScenarioConfig> {
    let cfg = config::load(&common.config, &common.overrides, common.seed)?;
    std::fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("cannot create output directory {}", common.out_dir.display()))?;
    Ok(cfg)
}

fn stem(cfg: &shared_cacc::simulator::ScenarioConfig, config_path: &Path) -> String {
    if cfg.name.is_empty() {
        config_path
            .file_stem()
            .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    } else {
        cfg.name.clone()
    }
}

fn cmd_run(common: &Common) -> Result<u8, Failure> {
    let cfg = prepare(common).map_err(config_error)?;
    let started = Instant::now();
    let log = simulate(&cfg).map_err(|e| config_error(e.into()))?;
    let report = moe_report(&log, &cfg.metrics).map_err(|e| config_error(e.into()))?;
    let runtime = started.elapsed().as_secs_f64();

    let name = stem(&cfg, &common.config);
    let traj = common.out_dir.join(format!("{name}_trajectory.csv"));
    let moe = common.out_dir.join(format!("{name}_moe.json"));
    let manifest = common.out_dir.join(format!("{name}_manifest.json"));
    let write = || -> Result<()> {
        output::write_trajectory(&traj, &log)?;
        output::write_json(&moe, &report)?;
        output::write_json(
            &manifest,
            &RunManifest::new("run", &cfg, vec![traj.clone(), moe.clone()], runtime),
        )
    };
    write().map_err(config_error)?;

    println!(
        "{name}: max theta {:.4}, string stable {}, influence {:.1} s{}, collision {}",
        report.max_theta,
        report.string_stable,
        report.influence_duration,
        if report.influence_censored { " (censored)" } else { "" },
        report.collision
    );
    println!("wrote {}", manifest.display());
    if report.collision {
        for c in &log.collisions {
            eprintln!("collision: follower {} at t = {:.2} s", c.vehicle, c.time);
        }
        return Ok(EXIT_COLLISION);
    }
    Ok(0)
}

fn cmd_sweep(common: &Common, param: &str, grid: &str) -> Result<u8, Failure> {
    if param != "alpha_h" {
        return Err(config_error(anyhow::anyhow!(
            "unsupported sweep parameter `{param}` (only alpha_h)"
        )));
    }
    let cfg = prepare(common).map_err(config_error)?;
    let points = parse_grid(grid).map_err(|e| config_error(e.into()))?;
    let started = Instant::now();
    let sweep = odd_sweep(&cfg, &points, &cfg.metrics).map_err(|e| config_error(e.into()))?;
    let runtime = started.elapsed().as_secs_f64();

    let name = stem(&cfg, &common.config);
    let table = common.out_dir.join(format!("{name}_sweep.csv"));
    let threshold = common.out_dir.join(format!("{name}_threshold.json"));
    let manifest = common.out_dir.join(format!("{name}_sweep_manifest.json"));
    let report = ThresholdReport::from_sweep(param, &sweep);
    let write = || -> Result<()> {
        output::write_sweep(&table, &sweep)?;
        output::write_json(&threshold, &report)?;
        output::write_json(
            &manifest,
            &RunManifest::new("sweep", &cfg, vec![table.clone(), threshold.clone()], runtime),
        )
    };
    write().map_err(config_error)?;

    for row in &sweep.rows {
        println!(
            "alpha_h={:.3} max_theta={:.4} stable={}{}",
            row.alpha_h,
            row.max_theta,
            row.stable,
            if row.collision { " collision" } else { "" }
        );
    }
    for w in &sweep.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", report.message);
    Ok(0)
}

fn cmd_validate(suite: &str, seed: u64, instances: Option<usize>, perturb: Option<f64>) -> Result<u8, Failure> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        match Suite::parse(suite) {
            Some(s) => vec![s],
            None => {
                let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                return Err(config_error(anyhow::anyhow!(
                    "unknown suite `{suite}`; expected `all` or one of {}",
                    names.join(", ")
                )));
            }
        }
    };
    let mut cfg = ValidationConfig {
        seed,
        gain_perturbation: perturb,
        ..Default::default()
    };
    if let Some(n) = instances {
        if n == 0 {
            return Err(config_error(anyhow::anyhow!("--instances must be positive")));
        }
        cfg.instances = n;
    }
    let mut ok = true;
    for s in suites {
        let report = run_suite(s, &cfg);
        println!("[{}] {} instances, seed {}", s.name(), report.instances, seed);
        for c in &report.checks {
            let verdict = if c.passed() { "ok" } else { "BREACH" };
            println!(
                "  {:<28} worst {:.3e}  tol {:.1e}  {verdict}",
                c.name, c.worst, c.tolerance
            );
            if !c.passed() {
                println!("    reproduce: {}", c.worst_instance);
            }
        }
        for e in &report.errors {
            println!("  error: {e}");
        }
        ok &= report.passed();
    }
    Ok(if ok { 0 } else { EXIT_BREACH })
}

fn cmd_metrics(csv: &Path, config: &Path, overrides: &[String], out: Option<&Path>) -> Result<u8> {
    let cfg = config::load(config, overrides, None)?;
    let log = output::read_trajectory(csv, &cfg)?;
    if log.n_followers() != cfg.n_followers {
        bail!(
            "{} holds {} followers but the config has {}",
            csv.display(),
            log.n_followers(),
            cfg.n_followers
        );
    }
    let report = moe_report(&log, &cfg.metrics)?;
    match out {
        Some(path) => output::write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(0)
}
