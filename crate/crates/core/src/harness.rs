//! Monte Carlo rate sweeps, log-log slope fits, threshold calibration and
//! the CSV/SVG outputs.
//!
//! Replication `rep` always observes the field seeded by
//! `derive_seed(master, FIELD_STREAM, rep)`, so every noise level reuses the
//! same underlying white noise. Replications run on scoped worker threads
//! and are gathered by index, so output bytes never depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, IntensityConfig, NoiseMode};
use crate::error::{Error, Result};
use crate::estimator::{
    assemble_reconstruction, oracle_direction_seed, threshold_scan, DirectionalSpectrum, FieldSpectrum,
    ObservationSource, ProbeEstimator, ProbeTrace, Reconstruction, SpectralLattice, SupportEstimate,
};
use crate::field::{derive_seed, simulate_grid_field, GaussianProbeSampler};
use crate::geometry::{hausdorff_distance, ConvexBody, Direction, Point, Shape, SupportProfile};
use crate::grid::{Fft2, GridField, GridSpec};
use crate::kernel::BlurKernel;
use crate::mollifier::ProbeLocation;
use crate::quadrature::Tolerance;
use crate::scene::{default_eta_grid, least_squares, IntensityModel};

const FIELD_STREAM: u64 = 0x6669_656c;
const CALIBRATION_STREAM: u64 = 0x6333_6361;
/// Replications whose fields are held in memory at once.
const BLOCK: usize = 64;
const RASTER_SUPERSAMPLE: usize = 8;
/// Hausdorff distances are evaluated on this many times the probed directions.
const HAUSDORFF_OVERSAMPLE: usize = 8;

pub const CALIBRATION_DRAWS: usize = 2000;
pub const CALIBRATION_QUANTILE: f64 = 0.999;

pub const RATE_COLUMNS: [&str; 10] = [
    "eps",
    "beta",
    "alpha_true",
    "direction",
    "rep",
    "h_true",
    "h_hat",
    "abs_err",
    "crossed",
    "sigma_noise",
];
pub const SUMMARY_COLUMNS: [&str; 4] = ["eps", "rmse_pointwise", "rmse_hausdorff", "n_reps"];
pub const FIT_COLUMNS: [&str; 4] = ["quantity", "slope", "stderr", "n_points"];
pub const DIAGNOSTIC_COLUMNS: [&str; 5] = ["eps", "delta", "theta", "rmse_sup", "direction_grid_term"];
pub const C3_COLUMNS: [&str; 5] = ["eps", "delta", "quantile", "c3", "draws"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub eps: f64,
    pub beta: f64,
    pub alpha_true: f64,
    pub direction: usize,
    pub rep: usize,
    pub h_true: f64,
    pub h_hat: f64,
    pub abs_err: f64,
    pub crossed: bool,
    pub sigma_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub eps: f64,
    pub rmse_pointwise: f64,
    /// Present when at least three directions are probed.
    pub rmse_hausdorff: Option<f64>,
    pub n_reps: usize,
}

/// Per-ε tuning and the sup-risk of the whole `r`-scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    /// RMS over replications and directions of `sup_r |ℓ̃(u, r) − ℓ_f(u, r)|`.
    pub rmse_sup: f64,
    /// Hausdorff distance between the body and the polygon cut out by its exact
    /// support values on the direction grid.
    pub direction_grid_term: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitRow {
    pub quantity: String,
    pub slope: f64,
    pub stderr: f64,
    pub n_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug)]
pub struct OverlayData {
    pub body: ConvexBody,
    pub reconstruction: Reconstruction,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResults {
    pub rows: Vec<RateRow>,
    pub summary: Vec<SummaryRow>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub fits: Vec<FitRow>,
    /// First replication at the smallest ε, when directions ≥ 3.
    pub overlay: Option<OverlayData>,
}

/// An observation realized for one command: a grid field or an oracle seed.
pub enum Observation {
    Grid(FieldSpectrum),
    Oracle(u64),
}

impl Observation {
    pub fn source<'a>(&'a self, model: &'a IntensityModel) -> ObservationSource<'a> {
        match self {
            Observation::Grid(fs) => ObservationSource::Grid(fs),
            Observation::Oracle(seed) => ObservationSource::Oracle { model, seed: *seed },
        }
    }
}

/// Scene, kernel and lattice resolved from a configuration.
pub struct Experiment {
    cfg: ExperimentConfig,
    model: IntensityModel,
    kernel: BlurKernel,
    lattice: Arc<SpectralLattice>,
    directions: Vec<Direction>,
    fft: Fft2,
    blurred: OnceLock<(GridField, bool)>,
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let model = cfg.intensity()?;
        let kernel = cfg.kernel()?;
        let grid = cfg.grid()?;
        let lattice = Arc::new(SpectralLattice::new(grid, kernel)?);
        Ok(Self {
            cfg: cfg.clone(),
            model,
            kernel,
            lattice,
            directions: cfg.directions()?,
            fft: Fft2::new(grid.n()),
            blurred: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn model(&self) -> &IntensityModel {
        &self.model
    }

    pub fn body(&self) -> &ConvexBody {
        self.model.body()
    }

    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }

    pub fn grid(&self) -> &GridSpec {
        self.lattice.grid()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn estimator(&self, eps: f64) -> Result<ProbeEstimator> {
        ProbeEstimator::with_lattice(self.cfg.estimator(eps), self.lattice.clone())
    }

    fn blurred_with_flag(&self) -> &(GridField, bool) {
        self.blurred.get_or_init(|| {
            let f = self.model.rasterize(self.grid(), RASTER_SUPERSAMPLE);
            let b = self.kernel.blur_on_grid(&f, self.body().radius_bound());
            (b.field, b.wrap_warning)
        })
    }

    /// `Kf` on the grid, from cell averages of `f`.
    pub fn blurred(&self) -> &GridField {
        &self.blurred_with_flag().0
    }

    /// Whether the blurred image reaches the periodic domain edge.
    pub fn wrap_warning(&self) -> bool {
        self.blurred_with_flag().1
    }

    /// Grid-mode observation drawn with `seed`.
    pub fn observe(&self, eps: f64, seed: u64) -> Result<FieldSpectrum> {
        let field = simulate_grid_field(self.blurred(), eps, seed, &self.kernel.id(), &self.cfg.scene_id())?;
        Ok(FieldSpectrum::with_fft(field, &self.fft))
    }

    /// Observation for replication `rep` in the configured noise mode.
    pub fn observation(&self, eps: f64, rep: usize) -> Result<Observation> {
        let seed = replication_seed(self.cfg.seed, rep);
        match self.cfg.noise.mode {
            NoiseMode::Grid => Ok(Observation::Grid(self.observe(eps, seed)?)),
            NoiseMode::Oracle => Ok(Observation::Oracle(seed)),
        }
    }

    /// `α` of the scene along `u`: analytic for disks and ellipses, fitted otherwise.
    pub fn alpha_true(&self, u: &Direction) -> Result<f64> {
        let extra = match self.cfg.scene.intensity {
            IntensityConfig::Sharp { .. } => 0.0,
            IntensityConfig::BoundaryPower { gamma, .. } => gamma,
        };
        match self.body().shape() {
            Shape::Disk { .. } | Shape::Ellipse { .. } => Ok(1.5 + extra),
            Shape::Polygon { .. } => Ok(self
                .model
                .fit_alpha(u, &default_eta_grid(self.cfg.scene.class_delta, 9))?
                .alpha),
        }
    }

    /// `ℓ_f(u, r_j)` over the estimator's scan grid.
    pub fn exact_trace(&self, est: &ProbeEstimator, u: Direction) -> Result<Vec<f64>> {
        let tol = Tolerance::new(1e-10, 1e-10);
        est.config()
            .r_grid()
            .iter()
            .map(|&r| self.model.probe_functional_exact(&ProbeLocation { u, r }, tol))
            .collect()
    }

    /// Hausdorff distance from the body to the polygon of its exact support
    /// values on `direction_grid(n)`.
    pub fn direction_grid_term(&self, n: usize) -> Result<f64> {
        let exact = SupportProfile::of_body(self.body(), n)?.intersection();
        hausdorff_distance(&exact.polygon, self.body(), HAUSDORFF_OVERSAMPLE * n)
    }
}

/// Field seed of replication `rep`; shared by every ε of a sweep.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, FIELD_STREAM, rep as u64)
}

struct Cell {
    estimate: SupportEstimate,
    sup_err: f64,
}

fn sup_error(trace: &ProbeTrace, exact: &[f64]) -> f64 {
    trace
        .values
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Maps `f` over `items` on scoped worker threads, keeping input order.
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

fn tag(eps: f64, rep: usize, direction: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Sweep {
        eps,
        rep,
        direction,
        source: Box::new(e),
    }
}

/// Runs the configured sweep: one row per `(ε, rep, direction)` plus the
/// per-ε aggregates and slope fits.
pub fn run_rate_sweep(cfg: &ExperimentConfig) -> Result<SweepResults> {
    cfg.validate_sweep()?;
    let exp = Experiment::new(cfg)?;
    let dirs = exp.directions().to_vec();
    let n_dirs = dirs.len();
    let body = exp.body().clone();
    let alpha: Vec<f64> = dirs
        .iter()
        .enumerate()
        .map(|(k, u)| exp.alpha_true(u).map_err(tag(cfg.sweep.eps[0], 0, k)))
        .collect::<Result<_>>()?;
    let h_true: Vec<f64> = dirs.iter().map(|u| body.support_function(u)).collect();
    let grid_term = if n_dirs >= 3 {
        Some(exp.direction_grid_term(n_dirs)?)
    } else {
        None
    };
    let reps: Vec<usize> = (0..cfg.sweep.reps).collect();
    let beta = exp.kernel().beta();

    let mut out = SweepResults::default();
    for (ei, &eps) in cfg.sweep.eps.iter().enumerate() {
        let est = exp.estimator(eps).map_err(tag(eps, 0, 0))?;
        let exact: Vec<Vec<f64>> = dirs
            .iter()
            .enumerate()
            .map(|(k, u)| exp.exact_trace(&est, *u).map_err(tag(eps, 0, k)))
            .collect::<Result<_>>()?;
        let cells = match cfg.noise.mode {
            NoiseMode::Grid => sweep_grid(&exp, &est, eps, &reps, &dirs, &exact)?,
            NoiseMode::Oracle => sweep_oracle(&exp, &est, eps, &reps, &dirs, &exact)?,
        };

        let mut sq_point = 0.0;
        let mut sq_sup = 0.0;
        let mut sq_haus = 0.0;
        for (rep, row) in cells.into_iter().enumerate() {
            for (k, cell) in row.iter().enumerate() {
                let err = (h_true[k] - cell.estimate.h_hat).abs();
                sq_point += err * err;
                sq_sup += cell.sup_err * cell.sup_err;
                out.rows.push(RateRow {
                    eps,
                    beta,
                    alpha_true: alpha[k],
                    direction: k,
                    rep,
                    h_true: h_true[k],
                    h_hat: cell.estimate.h_hat,
                    abs_err: err,
                    crossed: cell.estimate.crossed,
                    sigma_noise: cell.estimate.sigma_noise,
                });
            }
            if n_dirs >= 3 {
                let rec = assemble_reconstruction(row.into_iter().map(|c| c.estimate).collect());
                let h = hausdorff_distance(&rec.intersection.polygon, &body, HAUSDORFF_OVERSAMPLE * n_dirs)
                    .map_err(tag(eps, rep, 0))?;
                sq_haus += h * h;
                if rep == 0 && ei + 1 == cfg.sweep.eps.len() {
                    out.overlay = Some(OverlayData {
                        body: body.clone(),
                        reconstruction: rec,
                    });
                }
            }
        }
        let n = cfg.sweep.reps as f64;
        out.summary.push(SummaryRow {
            eps,
            rmse_pointwise: (sq_point / (n * n_dirs as f64)).sqrt(),
            rmse_hausdorff: (n_dirs >= 3).then(|| (sq_haus / n).sqrt()),
            n_reps: cfg.sweep.reps,
        });
        out.diagnostics.push(DiagnosticRow {
            eps,
            delta: est.delta(),
            theta: est.theta(),
            rmse_sup: (sq_sup / (n * n_dirs as f64)).sqrt(),
            direction_grid_term: grid_term,
        });
    }
    out.fits = fit_summary(&out.summary, &out.diagnostics);
    Ok(out)
}

fn sweep_grid(
    exp: &Experiment,
    est: &ProbeEstimator,
    eps: f64,
    reps: &[usize],
    dirs: &[Direction],
    exact: &[Vec<f64>],
) -> Result<Vec<Vec<Cell>>> {
    let mut cells: Vec<Vec<Cell>> = Vec::with_capacity(reps.len());
    for block in reps.chunks(BLOCK) {
        let fields = par_map(block, |&rep| {
            exp.observe(eps, replication_seed(exp.cfg.seed, rep))
                .map_err(tag(eps, rep, 0))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut rows: Vec<Vec<Cell>> = block.iter().map(|_| Vec::with_capacity(dirs.len())).collect();
        for (k, u) in dirs.iter().enumerate() {
            let spec = est.spectrum(*u);
            let results = par_map(&fields, |fs| scan_cell(est, &spec, ObservationSource::Grid(fs), &exact[k]));
            for ((row, res), &rep) in rows.iter_mut().zip(results).zip(block) {
                row.push(res.map_err(tag(eps, rep, k))?);
            }
        }
        cells.extend(rows);
    }
    Ok(cells)
}

fn scan_cell(
    est: &ProbeEstimator,
    spec: &DirectionalSpectrum,
    source: ObservationSource<'_>,
    exact: &[f64],
) -> Result<Cell> {
    let trace = est.trace_with(spec, source)?;
    Ok(Cell {
        sup_err: sup_error(&trace, exact),
        estimate: est.threshold(spec.direction(), &trace, false),
    })
}

fn sweep_oracle(
    exp: &Experiment,
    est: &ProbeEstimator,
    eps: f64,
    reps: &[usize],
    dirs: &[Direction],
    exact: &[Vec<f64>],
) -> Result<Vec<Vec<Cell>>> {
    let mut cells: Vec<Vec<Cell>> = reps.iter().map(|_| Vec::with_capacity(dirs.len())).collect();
    for (k, u) in dirs.iter().enumerate() {
        let spec = est.spectrum(*u);
        let means = est.window_means(exp.model(), *u).map_err(tag(eps, 0, k))?;
        let sampler = GaussianProbeSampler::new(spec.scan_gram()).map_err(tag(eps, 0, k))?;
        let sigma_noise = eps * spec.psi_norm_sq().sqrt();
        let r = est.config().r_grid();
        let results = par_map(reps, |&rep| {
            let seed = oracle_direction_seed(replication_seed(exp.cfg.seed, rep), k);
            let values = sampler.draw_with(&means, eps, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let trace = ProbeTrace {
                r: r.clone(),
                values,
                sigma_noise,
                jitter: sampler.jitter,
            };
            Ok(Cell {
                sup_err: sup_error(&trace, &exact[k]),
                estimate: threshold_scan(*u, &trace, est.theta(), false),
            })
        });
        for ((row, res), &rep) in cells.iter_mut().zip(results).zip(reps) {
            row.push(res.map_err(tag(eps, rep, k))?);
        }
    }
    Ok(cells)
}

fn fit_summary(summary: &[SummaryRow], diagnostics: &[DiagnosticRow]) -> Vec<FitRow> {
    let mut fits = Vec::new();
    let mut push = |name: &str, pts: Vec<(f64, f64)>| {
        if let Ok(f) = fit_loglog_slope(&pts) {
            fits.push(FitRow {
                quantity: name.to_string(),
                slope: f.slope,
                stderr: f.stderr,
                n_points: pts.len(),
            });
        }
    };
    push("rmse_pointwise", summary.iter().map(|s| (s.eps, s.rmse_pointwise)).collect());
    if summary.iter().all(|s| s.rmse_hausdorff.is_some()) {
        push(
            "rmse_hausdorff",
            summary.iter().map(|s| (s.eps, s.rmse_hausdorff.unwrap_or(f64::NAN))).collect(),
        );
    }
    push("rmse_sup", diagnostics.iter().map(|d| (d.eps, d.rmse_sup)).collect());
    fits
}

/// Least-squares slope of `log RMSE` on `log ε` with its standard error.
///
/// Needs at least three positive points whose ε span one decade.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::arg(format!("slope fit needs >= 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(e, v)| !(e > 0.0 && v > 0.0 && e.is_finite() && v.is_finite())) {
        return Err(Error::arg("slope fit needs positive, finite (ε, RMSE) pairs"));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::arg("slope fit needs ε spanning at least one decade"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, _, stderr) = least_squares(&xs, &ys);
    Ok(SlopeFit { slope, stderr })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct C3Row {
    pub eps: f64,
    pub delta: f64,
    /// 99.9% quantile of `sup_r |ℓ̃(u, r)|` on the null scene.
    pub quantile: f64,
    /// Smallest `C₃` whose threshold reaches the quantile.
    pub c3: f64,
    pub draws: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct C3Calibration {
    pub rows: Vec<C3Row>,
    /// `C₃` at the smallest ε of the sweep. The required constant shrinks
    /// as ε decreases, and the largest value can push `θ_*` past 1 at the
    /// coarse end of the sweep.
    pub c3: f64,
}

/// `C₃` for which `θ_*(ε)` equals `q` exactly.
pub fn c3_for_quantile(cfg: &ExperimentConfig, eps: f64, q: f64) -> f64 {
    let e = cfg.estimator(eps);
    let lhs = q.powf(e.beta + 0.5) * e.l / (eps * e.m.powf(e.beta - 0.5));
    lhs * lhs / (1.0 / eps).ln()
}

/// Draws null-scene scans along the first configured direction and
/// reports, per sweep ε, the smallest `C₃` with `θ_*` at the 99.9% quantile
/// of `sup_r |noise|`. The noise mode of the configuration decides between
/// the exact Gaussian law and simulated grid fields.
pub fn calibrate_c3(cfg: &ExperimentConfig) -> Result<C3Calibration> {
    cfg.validate_sweep()?;
    let exp = Experiment::new(cfg)?;
    let u = exp.directions()[0];
    let mut rows = Vec::with_capacity(cfg.sweep.eps.len());
    for (ei, &eps) in cfg.sweep.eps.iter().enumerate() {
        let mut ecfg = cfg.estimator(eps);
        ecfg.theta_override = Some(1.0);
        let est = ProbeEstimator::with_lattice(ecfg, exp.lattice.clone()).map_err(tag(eps, 0, 0))?;
        let spec = est.spectrum(u);
        let base = derive_seed(cfg.seed, CALIBRATION_STREAM, ei as u64);
        let draws: Vec<usize> = (0..CALIBRATION_DRAWS).collect();
        let mut sups: Vec<f64> = match cfg.noise.mode {
            NoiseMode::Oracle => {
                let sampler = GaussianProbeSampler::new(spec.scan_gram()).map_err(tag(eps, 0, 0))?;
                let zeros = vec![0.0; spec.r_grid_n() + 1];
                let mut rng = ChaCha8Rng::seed_from_u64(base);
                draws
                    .iter()
                    .map(|&d| {
                        let v = sampler.draw_with(&zeros, eps, &mut rng).map_err(tag(eps, d, 0))?;
                        Ok(v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
                    })
                    .collect::<Result<_>>()?
            }
            NoiseMode::Grid => {
                let null = GridField::zeros(*exp.grid());
                par_map(&draws, |&d| {
                    let field = simulate_grid_field(&null, eps, derive_seed(base, FIELD_STREAM, d as u64), "null", "null")
                        .map_err(tag(eps, d, 0))?;
                    let fs = FieldSpectrum::with_fft(field, &exp.fft);
                    Ok(spec.scan(&fs).iter().fold(0.0f64, |m, x| m.max(x.abs())))
                })
                .into_iter()
                .collect::<Result<_>>()?
            }
        };
        sups.sort_by(f64::total_cmp);
        let idx = ((CALIBRATION_QUANTILE * sups.len() as f64).ceil() as usize).max(1) - 1;
        let q = sups[idx];
        rows.push(C3Row {
            eps,
            delta: est.delta(),
            quantile: q,
            c3: c3_for_quantile(cfg, eps, q),
            draws: CALIBRATION_DRAWS,
        });
    }
    let c3 = rows.last().map_or(f64::NAN, |r| r.c3);
    Ok(C3Calibration { rows, c3 })
}

/// Writes `header` then one record per row. An empty `rows` leaves a
/// header-only file.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `rates.csv`, `summary.csv`, `fit.csv`, `diagnostics.csv` and, when
/// a reconstruction is present, `overlay.svg`. Returns the paths written.
pub fn emit_outputs(results: &SweepResults, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str| {
        let p = out_dir.join(name);
        written.push(p.clone());
        p
    };
    write_csv(&put("rates.csv"), &RATE_COLUMNS, &results.rows)?;
    write_csv(&put("summary.csv"), &SUMMARY_COLUMNS, &results.summary)?;
    write_csv(&put("fit.csv"), &FIT_COLUMNS, &results.fits)?;
    write_csv(&put("diagnostics.csv"), &DIAGNOSTIC_COLUMNS, &results.diagnostics)?;
    if let Some(o) = &results.overlay {
        let path = put("overlay.svg");
        std::fs::write(&path, overlay_svg(&o.body, &o.reconstruction)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(written)
}

fn svg_path(points: &[Point]) -> String {
    let mut d = String::new();
    for (i, p) in points.iter().enumerate() {
        let _ = write!(d, "{}{:.6},{:.6} ", if i == 0 { "M" } else { "L" }, p.x, -p.y);
    }
    if points.is_empty() {
        d.push_str("M0,0 ");
    }
    d.push('Z');
    d
}

/// True boundary and reconstructed polygon as two closed paths, plus a ray
/// along every direction whose scan never crossed the threshold.
pub fn overlay_svg(body: &ConvexBody, rec: &Reconstruction) -> String {
    let truth = body.boundary(720);
    let poly = &rec.intersection.polygon.vertices;
    let reach = truth
        .iter()
        .chain(poly.iter())
        .map(|p| p.norm())
        .fold(1.0, f64::max)
        * 1.05;
    let stroke = reach / 300.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="600" height="600" viewBox="{:.6} {:.6} {:.6} {:.6}">"#,
        -reach,
        -reach,
        2.0 * reach,
        2.0 * reach
    );
    let _ = writeln!(
        s,
        r#"<path d="{}" fill="none" stroke="black" stroke-width="{stroke:.6}"/>"#,
        svg_path(&truth)
    );
    let _ = writeln!(
        s,
        r#"<path d="{}" fill="none" stroke="red" stroke-width="{stroke:.6}"/>"#,
        svg_path(poly)
    );
    for e in rec.estimates.iter().filter(|e| !e.crossed) {
        let _ = writeln!(
            s,
            r#"<line x1="0" y1="0" x2="{:.6}" y2="{:.6}" stroke="blue" stroke-width="{:.6}"/>"#,
            e.u.x(),
            -e.u.y(),
            stroke / 2.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
            .iter()
            .map(|&e: &f64| (e, e.powf(0.444)))
            .collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert_abs_diff_eq!(f.slope, 0.444, epsilon = 1e-12);
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, 0.2)).collect();
        assert_abs_diff_eq!(fit_loglog_slope(&flat).unwrap().slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn slope_fit_preconditions() {
        assert!(matches!(
            fit_loglog_slope(&[(0.1, 1.0), (0.01, 0.5)]),
            Err(Error::Argument(_))
        ));
        assert!(fit_loglog_slope(&[(0.1, 1.0), (0.08, 0.9), (0.05, 0.8)]).is_err());
    }

    #[test]
    fn quantile_inversion_matches_threshold() {
        let cfg = ExperimentConfig::default();
        let eps = 1e-2;
        let q = 0.05;
        let mut e = cfg.estimator(eps);
        e.c3 = c3_for_quantile(&cfg, eps, q);
        assert_abs_diff_eq!(e.theta_star().unwrap(), q, epsilon = 1e-12);
    }
}
