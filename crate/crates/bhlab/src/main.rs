//! Command-line entry point: run one experiment from a config file, print a
//! human-readable summary, and write machine-readable results plus a
//! manifest. Exit code 0 on all-PASS, 1 on any FAIL, 2 on config errors.

use bhlab::config::ExperimentConfig;
use bhlab::experiments::{
    badstate, duhamel, interp, lightcone, moments, opineq, truncation, Check,
};
use bhlab::output::{self, RunManifest};
use bhlab::{bounds, par};
use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "bhlab", version, about = "Bose-Hubbard dynamics laboratory")]
struct Cli {
    /// Worker threads for the data-parallel pool (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Override the random seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the dense-path dimension threshold from the config.
    #[arg(long, global = true)]
    dense_threshold: Option<usize>,
    /// Output directory (also settable via BHLAB_OUTPUT_DIR).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Commutator light-cone scan over a (time, distance) grid.
    Lightcone { config: PathBuf },
    /// Time-uniform moment bound audit.
    Moments { config: PathBuf },
    /// Occupation-cap truncation error sweep.
    Truncation { config: PathBuf },
    /// Projected-dynamics error inequality audit.
    Duhamel { config: PathBuf },
    /// Operator-inequality audits (block sandwich, hopping, tails).
    Opineq { config: PathBuf },
    /// Translation-averaged line-concentration state audit.
    Badstate { config: PathBuf },
    /// Classical interpolation inequality audit.
    Interp { config: PathBuf },
    /// Print the closed-form bound evaluators as JSON.
    Bounds { config: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        par::set_threads(cli.threads);
    }
    let code = match run(cli) {
        Ok(all_pass) => {
            if all_pass {
                0
            } else {
                1
            }
        }
        Err(RunError::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(RunError::Other(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}

enum RunError {
    Config(String),
    Other(String),
}

impl From<bhlab::config::ConfigError> for RunError {
    fn from(e: bhlab::config::ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<bhlab::experiments::ExperimentError> for RunError {
    fn from(e: bhlab::experiments::ExperimentError) -> Self {
        match e {
            bhlab::experiments::ExperimentError::Config(c) => RunError::Config(c.to_string()),
            other => RunError::Other(other.to_string()),
        }
    }
}

impl From<bhlab::output::OutputError> for RunError {
    fn from(e: bhlab::output::OutputError) -> Self {
        RunError::Other(e.to_string())
    }
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let (name, config_path) = match &cli.command {
        Command::Lightcone { config } => ("lightcone", config),
        Command::Moments { config } => ("moments", config),
        Command::Truncation { config } => ("truncation", config),
        Command::Duhamel { config } => ("duhamel", config),
        Command::Opineq { config } => ("opineq", config),
        Command::Badstate { config } => ("badstate", config),
        Command::Interp { config } => ("interp", config),
        Command::Bounds { config } => ("bounds", config),
    };
    let snapshot = std::fs::read_to_string(config_path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&snapshot)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(dt) = cli.dense_threshold {
        cfg.run.dense_threshold = dt;
    }
    let out_dir = cli
        .output_dir
        .or_else(|| std::env::var_os("BHLAB_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("bhlab-out"))
        .join(name);

    let manifest = RunManifest::new(name, config_path, snapshot);
    let mut outputs = Vec::new();
    let pass = match &cli.command {
        Command::Lightcone { .. } => {
            let report = lightcone::lightcone_scan(&cfg)?;
            let csv = out_dir.join("scan.csv");
            output::emit_scan_csv(&report.records, &csv)?;
            outputs.push(csv);
            let json = out_dir.join("lightcone.json");
            output::emit_json(&report, &json)?;
            outputs.push(json);
            print_checks("lightcone", &report.checks);
            println!(
                "  {} grid points, {} slope fits, {} point errors",
                report.records.len(),
                report.slopes.len(),
                report.point_errors.len()
            );
            report.pass
        }
        Command::Moments { .. } => {
            let report = moments::moment_conservation_audit(&cfg)?;
            let json = out_dir.join("moments.json");
            output::emit_json(&report, &json)?;
            outputs.push(json);
            print_checks("moments", &report.checks);
            println!(
                "  bound 2(E_rho + C) = {:.6}, {} samples",
                report.bound,
                report.samples.len()
            );
            report.pass
        }
        Command::Truncation { .. } => {
            let report = truncation::truncation_error_audit(&cfg)?;
            let json = out_dir.join("truncation.json");
            output::emit_json(&report, &json)?;
            outputs.push(json);
            print_checks("truncation", &report.checks);
            for row in &report.rows {
                println!(
                    "  qbar {:>2}  trace {:.6e}  expect {:.6e}",
                    row.qbar, row.error_trace, row.error_expect
                );
            }
            report.pass
        }
        Command::Duhamel { .. } => {
            let report = duhamel::duhamel_inequality_audit(&cfg)?;
            let json = out_dir.join("duhamel.json");
            output::emit_json(&report, &json)?;
            outputs.push(json);
            print_checks("duhamel", &report.checks);
            println!("  tau0 = {:.6e}, {} points", report.tau0, report.points.len());
            report.pass
        }
        Command::Opineq { .. } => {
            let report = opineq::operator_inequality_audit(&cfg)?;
            let json = out_dir.join("opineq.json");
            output::emit_json(&report, &json)?;
            outputs.push(json);
            print_checks("opineq", &report.checks);
            report.pass
        }
        Command::Badstate { .. } => {
            let report = badstate::badstate_audit(&cfg)?;
            let json = out_dir.join("badstate.json");
            output::emit_json(&report, &json)?;
            outputs.push(json);
            print_checks("badstate", &report.checks);
            println!(
                "  energy density {:.6e} (design residual {:.3e})",
                report.energy_density, report.design_residual
            );
            report.pass
        }
        Command::Interp { .. } => {
            let report = interp::interpolation_audit(&cfg)?;
            let json = out_dir.join("interp.json");
            output::emit_json(&report, &json)?;
            outputs.push(json);
            print_checks("interp", &report.checks);
            report.pass
        }
        Command::Bounds { .. } => {
            let table = bounds_table(&cfg)?;
            let json = out_dir.join("bounds.json");
            output::emit_json(&table, &json)?;
            outputs.push(json);
            println!("{}", serde_json::to_string_pretty(&table).map_err(|e| RunError::Other(e.to_string()))?);
            true
        }
    };

    let manifest_path = manifest.finish(pass, outputs, &out_dir)?;
    println!(
        "{}: {}  (manifest {})",
        name,
        if pass { "PASS" } else { "FAIL" },
        manifest_path.display()
    );
    Ok(pass)
}

fn print_checks(name: &str, checks: &[Check]) {
    for c in checks {
        println!(
            "{name}: {}  {}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
}

#[derive(Serialize)]
struct BoundsTable {
    d: usize,
    p: f64,
    tau0: f64,
    improvement_threshold_trace: f64,
    improvement_smallest_p_trace: u64,
    improvement_threshold_expect: f64,
    improvement_smallest_p_expect: u64,
    moment_constant: f64,
    rows: Vec<BoundsRow>,
    schedule: Option<bounds::Schedule>,
}

#[derive(Serialize)]
struct BoundsRow {
    t: f64,
    r: f64,
    velocity_trace: Option<f64>,
    velocity_expect: Option<f64>,
    velocity_trace_alternate: Option<f64>,
    envelope_trace: Option<f64>,
    envelope_expect: Option<f64>,
    short_time_trace: Option<f64>,
    short_time_expect: Option<f64>,
    interpolated_moment_bound: Option<f64>,
}

fn bounds_table(cfg: &ExperimentConfig) -> Result<BoundsTable, RunError> {
    let b = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| RunError::Config("bounds subcommand needs a [bounds] section".into()))?;
    let tau0 = bounds::short_time_threshold(b.j_bar, b.gamma, b.k, b.d)
        .map_err(|e| RunError::Other(e.to_string()))?;
    let (tt, pt) = bounds::improvement_threshold(b.d, bounds::BoundMode::Trace)
        .map_err(|e| RunError::Other(e.to_string()))?;
    let (te, pe) = bounds::improvement_threshold(b.d, bounds::BoundMode::Expectation)
        .map_err(|e| RunError::Other(e.to_string()))?;
    let c = bounds::moment_constant(b.j_bar, b.p, b.d, cfg.model.eps, cfg.model.c_wtilde)
        .map_err(|e| RunError::Other(e.to_string()))?;
    let params = bounds::BoundParams {
        d: b.d,
        p: b.p,
        j_bar: b.j_bar,
        gamma: b.gamma,
        k: b.k,
        c_p: f64::NAN,
        q0: 0,
        calibration: b.calibration,
    };
    let times = if b.t.is_empty() { vec![1.0, 2.0, 4.0] } else { b.t.clone() };
    let radii = if b.r.is_empty() { vec![8.0, 16.0] } else { b.r.clone() };
    let mut rows = Vec::new();
    for &t in &times {
        for &r in &radii {
            let velocity_trace = bounds::velocity(t, b.d, b.p, bounds::BoundMode::Trace).ok();
            let velocity_expect =
                bounds::velocity(t, b.d, b.p, bounds::BoundMode::Expectation).ok();
            let velocity_trace_alternate = if b.alternate_velocity {
                bounds::velocity_alternate(t, b.d, b.p).ok()
            } else {
                None
            };
            rows.push(BoundsRow {
                t,
                r,
                velocity_trace,
                velocity_expect,
                velocity_trace_alternate,
                envelope_trace: bounds::envelope(t, r, &params, bounds::BoundMode::Trace).ok(),
                envelope_expect: bounds::envelope(t, r, &params, bounds::BoundMode::Expectation)
                    .ok(),
                short_time_trace: bounds::short_time_envelope(
                    r,
                    2.0,
                    r,
                    b.p,
                    b.k,
                    b.calibration,
                    bounds::BoundMode::Trace,
                )
                .ok(),
                short_time_expect: bounds::short_time_envelope(
                    r,
                    2.0,
                    r,
                    b.p,
                    b.k,
                    b.calibration,
                    bounds::BoundMode::Expectation,
                )
                .ok(),
                interpolated_moment_bound: bounds::interpolated_particle_bound(
                    t,
                    2.0 * b.p,
                    b.p,
                    b.d,
                    b.calibration,
                )
                .ok(),
            });
        }
    }
    let schedule = times
        .iter()
        .copied()
        .find(|&t| t >= 1.0)
        .and_then(|t| bounds::schedule(t, radii[0].max(2.0) as usize, 1, tau0, b.d, b.p).ok());
    Ok(BoundsTable {
        d: b.d,
        p: b.p,
        tau0,
        improvement_threshold_trace: tt,
        improvement_smallest_p_trace: pt,
        improvement_threshold_expect: te,
        improvement_smallest_p_expect: pe,
        moment_constant: c,
        rows,
        schedule,
    })
}
