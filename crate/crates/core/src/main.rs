use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use convex_probe::config::ExperimentConfig;
use convex_probe::geometry::{direction_grid, hausdorff_distance, Direction};
use convex_probe::harness::{self, Experiment};
use convex_probe::{Error, Result};

#[derive(Parser)]
#[command(name = "convex-probe", version, about = "Cube-probing support estimation on blurred, noisy images")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check the kernel's declared lower bound on the grid's frequency lattice.
    ValidateKernel,
    /// One ℓ̃ trace over the r-grid along a direction.
    Probe {
        /// Direction angle in radians; defaults to sweep.direction_angle.
        #[arg(long, allow_hyphen_values = true)]
        angle: Option<f64>,
    },
    /// Support estimate along one direction.
    Estimate {
        #[arg(long, allow_hyphen_values = true)]
        angle: Option<f64>,
    },
    /// Estimates on a uniform direction grid and their half-plane intersection.
    Reconstruct {
        /// Number of directions; defaults to sweep.directions when >= 3, else 180.
        #[arg(long)]
        directions: Option<usize>,
    },
    /// Monte Carlo sweep over the configured noise levels.
    Rates,
    /// Null-scene calibration of the threshold constant C3.
    CalibrateC3,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    let out = cli.common.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    match cli.command {
        Command::ValidateKernel => validate_kernel(&cfg, out),
        Command::Probe { angle } => probe(&cfg, angle, out),
        Command::Estimate { angle } => estimate(&cfg, angle, out),
        Command::Reconstruct { directions } => reconstruct(&cfg, directions, out),
        Command::Rates => {
            let results = harness::run_rate_sweep(&cfg)?;
            for s in &results.summary {
                match s.rmse_hausdorff {
                    Some(h) => println!("eps={} rmse={:.6e} hausdorff={:.6e}", s.eps, s.rmse_pointwise, h),
                    None => println!("eps={} rmse={:.6e}", s.eps, s.rmse_pointwise),
                }
            }
            for f in &results.fits {
                println!("slope {} = {:.4} ± {:.4}", f.quantity, f.slope, f.stderr);
            }
            harness::emit_outputs(&results, out)?;
            Ok(())
        }
        Command::CalibrateC3 => {
            let cal = harness::calibrate_c3(&cfg)?;
            for r in &cal.rows {
                println!("eps={} delta={:.5} q99.9={:.6e} C3={:.4}", r.eps, r.delta, r.quantile, r.c3);
            }
            println!("C3 = {:.4}", cal.c3);
            harness::write_csv(&out.join("c3.csv"), &harness::C3_COLUMNS, &cal.rows)
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn direction(cfg: &ExperimentConfig, angle: Option<f64>) -> Direction {
    Direction::from_angle(angle.unwrap_or(cfg.sweep.direction_angle))
}

#[derive(Serialize)]
struct KernelRow {
    kernel: String,
    declared_l: f64,
    declared_beta: f64,
    min_ratio: f64,
    worst_omega_x: f64,
    worst_omega_y: f64,
    pass: bool,
}

fn validate_kernel(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let kernel = cfg.kernel()?;
    let report = kernel.validate_on_lattice(&cfg.grid()?);
    println!(
        "{}: min |K̂|(1+|ω|²)^(β/2) = {:.6e} at ω = ({:.4}, {:.4}); declared L = {}, β = {} -> {}",
        kernel.id(),
        report.min_ratio,
        report.worst_omega.x,
        report.worst_omega.y,
        report.declared_l,
        report.declared_beta,
        if report.pass { "pass" } else { "FAIL" }
    );
    let row = KernelRow {
        kernel: kernel.id(),
        declared_l: report.declared_l,
        declared_beta: report.declared_beta,
        min_ratio: report.min_ratio,
        worst_omega_x: report.worst_omega.x,
        worst_omega_y: report.worst_omega.y,
        pass: report.pass,
    };
    harness::write_csv(
        &out.join("kernel.csv"),
        &["kernel", "declared_l", "declared_beta", "min_ratio", "worst_omega_x", "worst_omega_y", "pass"],
        &[row],
    )?;
    if report.pass {
        Ok(())
    } else {
        Err(Error::Config("kernel violates its declared lower bound".into()))
    }
}

fn warn_wrap(exp: &Experiment) {
    if exp.config().noise.mode == convex_probe::config::NoiseMode::Grid && exp.wrap_warning() {
        eprintln!("warning: blurred image reaches the periodic domain edge");
    }
}

#[derive(Serialize)]
struct ProbeRow {
    r: f64,
    estimate: f64,
    exact: f64,
}

fn probe(cfg: &ExperimentConfig, angle: Option<f64>, out: &Path) -> Result<()> {
    let exp = Experiment::new(cfg)?;
    let eps = cfg.noise.eps;
    let est = exp.estimator(eps)?;
    let u = direction(cfg, angle);
    let obs = exp.observation(eps, 0)?;
    warn_wrap(&exp);
    let trace = est.trace(u, obs.source(exp.model()))?;
    let exact = exp.exact_trace(&est, u)?;
    let rows: Vec<ProbeRow> = trace
        .r
        .iter()
        .zip(&trace.values)
        .zip(&exact)
        .map(|((&r, &estimate), &exact)| ProbeRow { r, estimate, exact })
        .collect();
    println!(
        "delta={:.5} theta={:.5} sigma_noise={:.6e} points={}",
        est.delta(),
        est.theta(),
        trace.sigma_noise,
        rows.len()
    );
    harness::write_csv(&out.join("probe.csv"), &["r", "estimate", "exact"], &rows)
}

#[derive(Serialize)]
struct EstimateRow {
    direction: usize,
    angle: f64,
    h_true: f64,
    h_hat: f64,
    crossed: bool,
    sigma_noise: f64,
}

fn estimate(cfg: &ExperimentConfig, angle: Option<f64>, out: &Path) -> Result<()> {
    let exp = Experiment::new(cfg)?;
    let eps = cfg.noise.eps;
    let est = exp.estimator(eps)?;
    let u = direction(cfg, angle);
    let obs = exp.observation(eps, 0)?;
    warn_wrap(&exp);
    let e = est.estimate_support(u, obs.source(exp.model()), false)?;
    let h_true = exp.body().support_function(&u);
    println!(
        "h_hat={:.6} h_true={:.6} crossed={} sigma_noise={:.6e}",
        e.h_hat, h_true, e.crossed, e.sigma_noise
    );
    let row = EstimateRow {
        direction: 0,
        angle: u.angle(),
        h_true,
        h_hat: e.h_hat,
        crossed: e.crossed,
        sigma_noise: e.sigma_noise,
    };
    harness::write_csv(&out.join("estimate.csv"), &ESTIMATE_COLUMNS, &[row])
}

const ESTIMATE_COLUMNS: [&str; 6] = ["direction", "angle", "h_true", "h_hat", "crossed", "sigma_noise"];

fn reconstruct(cfg: &ExperimentConfig, directions: Option<usize>, out: &Path) -> Result<()> {
    let n = directions.unwrap_or(if cfg.sweep.directions >= 3 { cfg.sweep.directions } else { 180 });
    let exp = Experiment::new(cfg)?;
    let eps = cfg.noise.eps;
    let est = exp.estimator(eps)?;
    let obs = exp.observation(eps, 0)?;
    warn_wrap(&exp);
    let rec = est.reconstruct_body(n, obs.source(exp.model()))?;
    let body = exp.body();
    let rows: Vec<EstimateRow> = direction_grid(n)?
        .iter()
        .zip(&rec.estimates)
        .enumerate()
        .map(|(k, (u, e))| EstimateRow {
            direction: k,
            angle: u.angle(),
            h_true: body.support_function(u),
            h_hat: e.h_hat,
            crossed: e.crossed,
            sigma_noise: e.sigma_noise,
        })
        .collect();
    let haus = hausdorff_distance(&rec.intersection.polygon, body, 8 * n)?;
    println!(
        "directions={} hausdorff={:.6} sigma_x={:.6e} vertices={}",
        n,
        haus,
        rec.sigma_x,
        rec.intersection.polygon.vertices.len()
    );
    harness::write_csv(&out.join("reconstruction.csv"), &ESTIMATE_COLUMNS, &rows)?;
    let svg = out.join("overlay.svg");
    std::fs::write(&svg, harness::overlay_svg(body, &rec)).map_err(|e| io_error(&svg, e))
}
