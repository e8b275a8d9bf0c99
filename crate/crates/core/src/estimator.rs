//! Probe-functional estimates `ℓ̃(τ) = ∫ ψ_{τ,δ} dY`, the threshold scan for
//! `ĥ(u)`, and reconstruction of the body from estimated support values.
//!
//! Everything is computed on the frequency lattice of the simulation grid
//! with the Nyquist row and column dropped, so the lattice is symmetric and
//! `ψ` is exactly real. On that lattice
//!
//! ```text
//! ℓ̃(u, r) = (1/2R)² Re Σ_k S_u(ω_k) e^{i(1+r)u·ω_k} Z_k,   S_u = φ̂_δ(A_u⁻¹ω) / K̂(ω),
//! ```
//!
//! where `Z` is the DFT of the increments with the half-sample phase removed.
//! For a whole `r`-grid `r_j = j/m` this is a type-1 NUFFT in `u·ω_k / m`,
//! and the same transform of `S_u²` gives the lag covariance of the scan.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{derive_seed, integrate_against, GaussianProbeSampler, ObservationField};
use crate::geometry::{direction_grid, Direction, HalfplaneIntersection, SupportProfile};
use crate::grid::{Fft2, GridField, GridSpec};
use crate::kernel::BlurKernel;
use crate::mollifier::{lattice_lambda_max, MollifierSpec, ProbeLocation};
use crate::nufft::Nufft1;
use crate::quadrature::Tolerance;
use crate::scene::IntensityModel;

/// Seed stream for per-direction oracle draws.
const ORACLE_DIRECTION_STREAM: u64 = 0x6f72_6163;
/// Bins with `|S_u|` below this fraction of the largest are skipped in scans.
const PRUNE: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub eps: f64,
    pub l: f64,
    pub beta: f64,
    /// Bound `M` on the intensity.
    pub m: f64,
    pub c3: f64,
    pub delta_override: Option<f64>,
    pub theta_override: Option<f64>,
    pub r_grid_n: usize,
}

impl EstimatorConfig {
    pub fn new(eps: f64, l: f64, beta: f64, m: f64) -> Self {
        Self {
            eps,
            l,
            beta,
            m,
            c3: 8.0,
            delta_override: None,
            theta_override: None,
            r_grid_n: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let both = self.delta_override.is_some() && self.theta_override.is_some();
        if !(self.eps > 0.0 && self.eps < 1.0) && !(self.eps == 0.0 && both) {
            return Err(Error::config(format!(
                "ε must lie in (0, 1) (ε = 0 only with both δ and θ overrides), got {}",
                self.eps
            )));
        }
        if !(self.l > 0.0 && self.beta >= 0.0 && self.m > 0.0 && self.c3 > 0.0) {
            return Err(Error::config("L, M and C3 must be positive and β non-negative"));
        }
        if self.r_grid_n < 64 {
            return Err(Error::config(format!("r_grid_n must be >= 64, got {}", self.r_grid_n)));
        }
        Ok(())
    }

    fn log_term(&self) -> f64 {
        (1.0 / self.eps).ln()
    }

    /// `((ε/(L M)) √ln(1/ε))^{1/(β+1/2)}` unless overridden.
    pub fn delta_star(&self) -> Result<f64> {
        let d = match self.delta_override {
            Some(d) => d,
            None => {
                self.validate()?;
                let bracket = self.eps / (self.l * self.m) * self.log_term().sqrt();
                bracket.powf(1.0 / (self.beta + 0.5))
            }
        };
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::config(format!(
                "δ = {d} is not in (0, 1): ε not small enough for this (L, M, β)"
            )));
        }
        Ok(d)
    }

    /// `((ε/L) M^{β-1/2} √(C₃ ln(1/ε)))^{1/(β+1/2)}` unless overridden.
    pub fn theta_star(&self) -> Result<f64> {
        let t = match self.theta_override {
            Some(t) => t,
            None => {
                self.validate()?;
                let bracket = self.eps / self.l * self.m.powf(self.beta - 0.5) * (self.c3 * self.log_term()).sqrt();
                bracket.powf(1.0 / (self.beta + 0.5))
            }
        };
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::config(format!("threshold θ must be positive, got {t}")));
        }
        if self.theta_override.is_none() && t >= 1.0 {
            return Err(Error::config(format!(
                "θ = {t} >= 1: ε not small enough for this (L, M, β, C3)"
            )));
        }
        Ok(t)
    }

    /// Scan offsets `r_j = j / r_grid_n`, `j = 0..=r_grid_n`.
    pub fn r_grid(&self) -> Vec<f64> {
        let m = self.r_grid_n as f64;
        (0..=self.r_grid_n).map(|j| j as f64 / m).collect()
    }
}

/// Half of the symmetric frequency lattice with `1/K̂` precomputed.
#[derive(Clone, Debug)]
pub struct SpectralLattice {
    grid: GridSpec,
    kernel: BlurKernel,
    idx: Vec<u32>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    inv_k: Vec<f64>,
    /// 1 for the zero frequency, 2 for bins standing in for a conjugate pair.
    mult: Vec<f64>,
}

impl SpectralLattice {
    /// Fails when the kernel violates its declared `(L, β)` on this lattice.
    pub fn new(grid: GridSpec, kernel: BlurKernel) -> Result<Self> {
        let report = kernel.validate_on_lattice(&grid);
        if !report.pass {
            return Err(Error::config(format!(
                "kernel {} violates |K̂| >= L(1+|ω|²)^(-β/2) on the lattice (min ratio {:.3e} < L = {})",
                kernel.id(),
                report.min_ratio,
                report.declared_l
            )));
        }
        let n = grid.n();
        let cap = n * n / 2 + 1;
        let mut lat = Self {
            grid,
            kernel,
            idx: Vec::with_capacity(cap),
            w1: Vec::with_capacity(cap),
            w2: Vec::with_capacity(cap),
            inv_k: Vec::with_capacity(cap),
            mult: Vec::with_capacity(cap),
        };
        for iy in 0..n {
            if grid.is_nyquist(iy) {
                continue;
            }
            let k2 = grid.freq_index(iy);
            for ix in 0..n {
                if grid.is_nyquist(ix) {
                    continue;
                }
                let k1 = grid.freq_index(ix);
                if k2 < 0 || (k2 == 0 && k1 < 0) {
                    continue;
                }
                let (a, b) = (grid.omega(ix), grid.omega(iy));
                lat.idx.push((iy * n + ix) as u32);
                lat.w1.push(a);
                lat.w2.push(b);
                lat.inv_k.push(1.0 / kernel.fourier_radial(a * a + b * b));
                lat.mult.push(if k1 == 0 && k2 == 0 { 1.0 } else { 2.0 });
            }
        }
        Ok(lat)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    /// A mollifier whose transform cache covers this lattice.
    pub fn mollifier(&self, delta: f64) -> Result<MollifierSpec> {
        MollifierSpec::with_cache(delta, lattice_lambda_max(self.grid.dx()))
    }

    /// `‖ψ_{τ,δ}‖²` by Parseval on the lattice; independent of `r`.
    pub fn psi_norm_sq(&self, moll: &MollifierSpec, u: &Direction) -> f64 {
        let up = u.perp();
        let mut acc = 0.0;
        for i in 0..self.len() {
            let s = u.x() * self.w1[i] + u.y() * self.w2[i];
            let v = up.x * self.w1[i] + up.y * self.w2[i];
            let sv = moll.phi_hat_delta_1d(s) * moll.phi_hat_delta_1d(v) * self.inv_k[i];
            acc += self.mult[i] * sv * sv;
        }
        self.grid.lattice_weight() * acc
    }
}

/// Lattice data of one direction, ready for `r`-scans.
#[derive(Clone, Debug)]
pub struct DirectionalSpectrum {
    u: Direction,
    lattice_weight: f64,
    idx: Vec<u32>,
    /// `u·ω / m`.
    x: Vec<f64>,
    /// `mult · S · e^{i u·ω}`.
    a: Vec<Complex64>,
    /// `mult · S²`.
    s2: Vec<f64>,
    norm_sq: f64,
    nufft: Nufft1,
}

impl DirectionalSpectrum {
    pub fn new(lattice: &SpectralLattice, moll: &MollifierSpec, u: Direction, r_grid_n: usize) -> Self {
        let up = u.perp();
        let m = r_grid_n as f64;
        let count = lattice.len();
        let mut s_vals = Vec::with_capacity(count);
        let mut big = 0.0f64;
        for i in 0..count {
            let s = u.x() * lattice.w1[i] + u.y() * lattice.w2[i];
            let v = up.x * lattice.w1[i] + up.y * lattice.w2[i];
            let sv = moll.phi_hat_delta_1d(s) * moll.phi_hat_delta_1d(v) * lattice.inv_k[i];
            big = big.max(sv.abs());
            s_vals.push((s, sv));
        }
        let cut = PRUNE * big;
        let mut out = Self {
            u,
            lattice_weight: lattice.grid.lattice_weight(),
            idx: Vec::new(),
            x: Vec::new(),
            a: Vec::new(),
            s2: Vec::new(),
            norm_sq: 0.0,
            nufft: Nufft1::new(r_grid_n),
        };
        let mut norm = 0.0;
        for (i, &(s, sv)) in s_vals.iter().enumerate() {
            let w = lattice.mult[i];
            norm += w * sv * sv;
            if sv.abs() <= cut {
                continue;
            }
            out.idx.push(lattice.idx[i]);
            out.x.push(s / m);
            out.a.push(Complex64::from_polar(w * sv, s));
            out.s2.push(w * sv * sv);
        }
        out.norm_sq = out.lattice_weight * norm;
        out
    }

    pub fn direction(&self) -> Direction {
        self.u
    }

    pub fn r_grid_n(&self) -> usize {
        self.nufft.max_mode()
    }

    pub fn psi_norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// `ℓ̃(u, j/m)` for `j = 0..=m` on one observed field.
    pub fn scan(&self, spectrum: &FieldSpectrum) -> Vec<f64> {
        let c: Vec<Complex64> = self
            .idx
            .iter()
            .zip(&self.a)
            .map(|(&k, a)| a * spectrum.z[k as usize])
            .collect();
        self.nufft
            .execute(&self.x, &c)
            .iter()
            .map(|f| self.lattice_weight * f.re)
            .collect()
    }

    /// Noise covariance per unit `ε²` at lags `j/m`, `j = 0..=m`.
    pub fn lag_covariance(&self) -> Vec<f64> {
        let c: Vec<Complex64> = self.s2.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.nufft
            .execute(&self.x, &c)
            .iter()
            .map(|f| self.lattice_weight * f.re)
            .collect()
    }

    /// Toeplitz covariance matrix of the scan per unit `ε²`.
    pub fn scan_gram(&self) -> DMatrix<f64> {
        let lag = self.lag_covariance();
        let n = lag.len();
        DMatrix::from_fn(n, n, |i, j| lag[i.abs_diff(j)])
    }
}

/// DFT of an observed field with the half-sample phase `(-1)^{k₁+k₂}` applied.
#[derive(Clone, Debug)]
pub struct FieldSpectrum {
    field: ObservationField,
    z: Vec<Complex64>,
}

impl FieldSpectrum {
    pub fn new(field: ObservationField) -> Self {
        let fft = Fft2::new(field.grid().n());
        Self::with_fft(field, &fft)
    }

    /// Reuses an FFT plan; it must match the grid size.
    pub fn with_fft(field: ObservationField, fft: &Fft2) -> Self {
        let grid = *field.grid();
        let n = grid.n();
        assert_eq!(fft.n(), n, "FFT plan size differs from the grid");
        let mut z: Vec<Complex64> = field
            .increments()
            .data()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft.forward(&mut z);
        for iy in 0..n {
            for ix in 0..n {
                if (ix + iy) % 2 == 1 {
                    z[iy * n + ix] = -z[iy * n + ix];
                }
            }
        }
        Self { field, z }
    }

    pub fn field(&self) -> &ObservationField {
        &self.field
    }
}

/// `ψ_{τ,δ}` sampled on the grid: inverse transform of `φ̂_{τ,δ}/K̂` over the
/// symmetric lattice. Also returns the largest imaginary residual relative
/// to the largest real value.
pub fn psi_on_grid_with_residual(
    tau: &ProbeLocation,
    moll: &MollifierSpec,
    lattice: &SpectralLattice,
) -> (GridField, f64) {
    let grid = lattice.grid;
    let n = grid.n();
    let kernel = lattice.kernel;
    let mut buf = vec![Complex64::default(); n * n];
    for iy in 0..n {
        if grid.is_nyquist(iy) {
            continue;
        }
        let b = grid.omega(iy);
        for ix in 0..n {
            if grid.is_nyquist(ix) {
                continue;
            }
            let a = grid.omega(ix);
            let w = crate::geometry::Point::new(a, b);
            let mut v = moll.phi_hat_tau_delta(tau, &w) / kernel.fourier_radial(a * a + b * b);
            if (ix + iy) % 2 == 1 {
                v = -v;
            }
            buf[iy * n + ix] = v;
        }
    }
    Fft2::new(n).forward(&mut buf);
    let lw = grid.lattice_weight();
    let mut re_max = 0.0f64;
    let mut im_max = 0.0f64;
    let data: Vec<f64> = buf
        .iter()
        .map(|z| {
            re_max = re_max.max(z.re.abs());
            im_max = im_max.max(z.im.abs());
            lw * z.re
        })
        .collect();
    let field = GridField::from_vec(grid, data).expect("grid size");
    (field, if re_max > 0.0 { im_max / re_max } else { 0.0 })
}

pub fn psi_on_grid(tau: &ProbeLocation, moll: &MollifierSpec, lattice: &SpectralLattice) -> GridField {
    psi_on_grid_with_residual(tau, moll, lattice).0
}

/// `‖ψ_{τ,δ}‖` on the frequency lattice.
pub fn psi_norm(tau: &ProbeLocation, moll: &MollifierSpec, lattice: &SpectralLattice) -> f64 {
    lattice.psi_norm_sq(moll, &tau.u).sqrt()
}

/// Where probe estimates come from.
#[derive(Clone, Copy, Debug)]
pub enum ObservationSource<'a> {
    /// A simulated field; all probes share this one realization.
    Grid(&'a FieldSpectrum),
    /// Exact Gaussian law with means from quadrature of `⟨f, φ_{τ,δ}⟩`.
    Oracle { model: &'a IntensityModel, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportEstimate {
    pub u: Direction,
    pub h_hat: f64,
    pub crossed: bool,
    /// `(r, ℓ̃(u, r))` for the whole scan, when requested.
    pub trace: Option<Vec<(f64, f64)>>,
    /// `ε ‖ψ‖`.
    pub sigma_noise: f64,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub estimates: Vec<SupportEstimate>,
    pub profile: SupportProfile,
    pub intersection: HalfplaneIntersection,
    /// `ε ‖ψ‖` per direction.
    pub sigma_noise: Vec<f64>,
    /// Largest `ε ‖ψ‖` over the probed directions.
    pub sigma_x: f64,
}

/// A full `r`-scan along one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeTrace {
    pub r: Vec<f64>,
    pub values: Vec<f64>,
    pub sigma_noise: f64,
    /// Diagonal loading used by the oracle factorization.
    pub jitter: f64,
}

/// Estimator with its tuning resolved and lattice caches built.
#[derive(Clone, Debug)]
pub struct ProbeEstimator {
    cfg: EstimatorConfig,
    lattice: Arc<SpectralLattice>,
    moll: MollifierSpec,
    delta: f64,
    theta: f64,
}

impl ProbeEstimator {
    pub fn new(cfg: EstimatorConfig, grid: GridSpec, kernel: BlurKernel) -> Result<Self> {
        Self::with_lattice(cfg, Arc::new(SpectralLattice::new(grid, kernel)?))
    }

    pub fn with_lattice(cfg: EstimatorConfig, lattice: Arc<SpectralLattice>) -> Result<Self> {
        cfg.validate()?;
        let delta = cfg.delta_star()?;
        let theta = cfg.theta_star()?;
        let moll = lattice.mollifier(delta)?;
        Ok(Self {
            cfg,
            lattice,
            moll,
            delta,
            theta,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mollifier(&self) -> &MollifierSpec {
        &self.moll
    }

    pub fn lattice(&self) -> &SpectralLattice {
        &self.lattice
    }

    pub fn spectrum(&self, u: Direction) -> DirectionalSpectrum {
        DirectionalSpectrum::new(&self.lattice, &self.moll, u, self.cfg.r_grid_n)
    }

    /// Window means `⟨f, φ_{(u, r_j), δ}⟩` over the scan grid.
    pub fn window_means(&self, model: &IntensityModel, u: Direction) -> Result<Vec<f64>> {
        let tol = Tolerance::new(1e-9, 1e-10);
        self.cfg
            .r_grid()
            .iter()
            .map(|&r| model.window_inner_product(&ProbeLocation { u, r }, &self.moll, tol))
            .collect()
    }

    /// `ℓ̃(u, r_j)` over the whole scan grid from one realization.
    pub fn trace(&self, u: Direction, source: ObservationSource<'_>) -> Result<ProbeTrace> {
        let spec = self.spectrum(u);
        self.trace_with(&spec, source)
    }

    pub fn trace_with(&self, spec: &DirectionalSpectrum, source: ObservationSource<'_>) -> Result<ProbeTrace> {
        let eps = self.cfg.eps;
        let sigma_noise = eps * spec.psi_norm_sq().sqrt();
        let r = self.cfg.r_grid();
        match source {
            ObservationSource::Grid(fs) => {
                if fs.field().grid() != self.lattice.grid() {
                    return Err(Error::arg("observation field and estimator use different grids"));
                }
                Ok(ProbeTrace {
                    r,
                    values: spec.scan(fs),
                    sigma_noise,
                    jitter: 0.0,
                })
            }
            ObservationSource::Oracle { model, seed } => {
                let means = self.window_means(model, spec.direction())?;
                if eps == 0.0 {
                    return Ok(ProbeTrace {
                        r,
                        values: means,
                        sigma_noise,
                        jitter: 0.0,
                    });
                }
                let sampler = GaussianProbeSampler::new(spec.scan_gram())?;
                let values = sampler.draw_with(&means, eps, &mut ChaCha8Rng::seed_from_u64(seed))?;
                Ok(ProbeTrace {
                    r,
                    values,
                    sigma_noise,
                    jitter: sampler.jitter,
                })
            }
        }
    }

    /// Largest scan offset whose estimate reaches `θ`.
    pub fn threshold(&self, u: Direction, trace: &ProbeTrace, keep_trace: bool) -> SupportEstimate {
        threshold_scan(u, trace, self.theta, keep_trace)
    }

    pub fn estimate_support(&self, u: Direction, source: ObservationSource<'_>, keep_trace: bool) -> Result<SupportEstimate> {
        let trace = self.trace(u, source)?;
        Ok(self.threshold(u, &trace, keep_trace))
    }

    /// One probe estimate. Grid mode integrates the sampled `ψ` against the
    /// field; oracle mode draws from `N(⟨f, φ⟩, ε²‖ψ‖²)`.
    pub fn estimate_probe(&self, tau: &ProbeLocation, source: ObservationSource<'_>) -> Result<f64> {
        match source {
            ObservationSource::Grid(fs) => {
                let psi = psi_on_grid(tau, &self.moll, &self.lattice);
                integrate_against(fs.field(), &psi)
            }
            ObservationSource::Oracle { model, seed } => {
                let mean = model.window_inner_product(tau, &self.moll, Tolerance::new(1e-9, 1e-10))?;
                let norm_sq = self.lattice.psi_norm_sq(&self.moll, &tau.u);
                let sampler = GaussianProbeSampler::new(DMatrix::from_element(1, 1, norm_sq))?;
                Ok(sampler.draw(&[mean], self.cfg.eps, seed)?[0])
            }
        }
    }

    /// Support estimates on `direction_grid(n)` and their half-plane intersection.
    ///
    /// Grid mode uses the one field for every direction. Oracle mode draws
    /// each direction's scan independently (seeded per direction index).
    pub fn reconstruct_body(&self, n: usize, source: ObservationSource<'_>) -> Result<Reconstruction> {
        let dirs = direction_grid(n)?;
        let mut estimates = Vec::with_capacity(n);
        for (k, u) in dirs.iter().enumerate() {
            let src = match source {
                ObservationSource::Oracle { model, seed } => ObservationSource::Oracle {
                    model,
                    seed: oracle_direction_seed(seed, k),
                },
                grid => grid,
            };
            estimates.push(self.estimate_support(*u, src, false)?);
        }
        Ok(assemble_reconstruction(estimates))
    }
}

/// Seed of direction `k` in an oracle-mode reconstruction drawn from `seed`.
pub fn oracle_direction_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, ORACLE_DIRECTION_STREAM, k as u64)
}

pub fn threshold_scan(u: Direction, trace: &ProbeTrace, theta: f64, keep_trace: bool) -> SupportEstimate {
    let hit = (0..trace.values.len()).rev().find(|&j| trace.values[j] >= theta);
    SupportEstimate {
        u,
        h_hat: hit.map_or(0.0, |j| trace.r[j]),
        crossed: hit.is_some(),
        trace: keep_trace.then(|| trace.r.iter().copied().zip(trace.values.iter().copied()).collect()),
        sigma_noise: trace.sigma_noise,
    }
}

/// Builds the reconstruction from per-direction estimates on a uniform grid.
pub fn assemble_reconstruction(estimates: Vec<SupportEstimate>) -> Reconstruction {
    let values: Vec<f64> = estimates.iter().map(|e| e.h_hat).collect();
    let profile = SupportProfile::new(values).expect("estimates lie in [0, 1] on a grid of >= 3 directions");
    let intersection = profile.intersection();
    let sigma_noise: Vec<f64> = estimates.iter().map(|e| e.sigma_noise).collect();
    let sigma_x = sigma_noise.iter().copied().fold(0.0, f64::max);
    Reconstruction {
        estimates,
        profile,
        intersection,
        sigma_noise,
        sigma_x,
    }
}
