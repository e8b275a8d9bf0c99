//! Intensity functions on convex supports and exact probe-functional oracles.
//!
//! Integrals over `E_τ ∩ G` are computed in the probe frame: an outer
//! integral over `t = x·u` and an inner integral along the chord of `G` at
//! level `t`. Inside the unit ball the lateral walls of the cube never cut
//! `G`, so `E_τ ∩ G = { x ∈ G : x·u ≥ r }`.

use crate::error::{Error, Result};
use crate::geometry::{ConvexBody, Direction, Point, Shape};
use crate::grid::{GridField, GridSpec};
use crate::mollifier::{MollifierSpec, ProbeLocation};
use crate::quadrature::{integrate, Tolerance};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IntensityProfile {
    /// `f = level · 1_G`.
    Sharp { level: f64 },
    /// `f(x) = min(M, scale · dist(x, ∂G)^gamma)` on `G`.
    BoundaryPower { gamma: f64, scale: f64 },
}

#[derive(Clone, Debug)]
pub struct IntensityModel {
    body: ConvexBody,
    profile: IntensityProfile,
    bound: f64,
}

/// Parameters `(α, Q, Δ)` of the lower mass bound `∫_{H_u(η)} f ≥ Q η^α`, `η ≤ Δ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassClassParams {
    pub alpha: f64,
    pub q: f64,
    pub delta: f64,
}

impl MassClassParams {
    pub fn new(alpha: f64, q: f64, delta: f64) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::arg(format!("α must be >= 1 for a convex support, got {alpha}")));
        }
        if !(q > 0.0 && delta > 0.0) {
            return Err(Error::arg("Q and Δ must be positive"));
        }
        Ok(Self { alpha, q, delta })
    }
}

/// Default slab depth range used when probing the mass class.
pub const DEFAULT_CLASS_DELTA: f64 = 0.2;

/// Fitted `(α, Q)` from a log-log regression of slab mass on depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    pub q: f64,
}

impl IntensityModel {
    pub fn new(body: ConvexBody, profile: IntensityProfile, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::arg(format!("bound M must be positive, got {bound}")));
        }
        match profile {
            IntensityProfile::Sharp { level } => {
                if !(level > 0.0 && level <= bound) {
                    return Err(Error::arg(format!("sharp level must lie in (0, M] = (0, {bound}], got {level}")));
                }
            }
            IntensityProfile::BoundaryPower { gamma, scale } => {
                if !(gamma >= 0.0 && scale > 0.0) {
                    return Err(Error::arg("boundary_power needs gamma >= 0 and scale > 0"));
                }
            }
        }
        Ok(Self { body, profile, bound })
    }

    pub fn sharp(body: ConvexBody, level: f64) -> Result<Self> {
        Self::new(body, IntensityProfile::Sharp { level }, level.max(1.0))
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn profile(&self) -> IntensityProfile {
        self.profile
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eval_intensity(&self, x: &Point) -> f64 {
        if !self.body.contains(x) {
            return 0.0;
        }
        match self.profile {
            IntensityProfile::Sharp { level } => level,
            IntensityProfile::BoundaryPower { gamma, scale } => {
                (scale * self.body.distance_to_boundary(x).powf(gamma)).min(self.bound)
            }
        }
    }

    fn outer_range(&self, u: &Direction, r: f64) -> Option<(f64, f64)> {
        let hi = self.body.support_function(u);
        let lo = r.max(-self.body.support_function(&Direction::normalized(-u.vector()).ok()?));
        (lo < hi).then_some((lo, hi))
    }

    fn outer_breaks(&self, u: &Direction, extra: &[f64]) -> Vec<f64> {
        let mut b = self.body.chord_breaks(u);
        b.extend_from_slice(extra);
        b
    }

    /// `∫_{chord} f(t u + s u⊥) w(s) ds` with `w` given through its
    /// antiderivative `cum` (sharp) or pointwise `weight` (smooth profiles).
    fn chord_integral(
        &self,
        u: &Direction,
        t: f64,
        cum: &dyn Fn(f64) -> f64,
        weight: &dyn Fn(f64) -> f64,
        breaks: &[f64],
        tol: Tolerance,
    ) -> Result<f64> {
        let Some((lo, hi)) = self.body.chord(u, t) else {
            return Ok(0.0);
        };
        match self.profile {
            IntensityProfile::Sharp { level } => Ok(level * (cum(hi) - cum(lo))),
            IntensityProfile::BoundaryPower { .. } => {
                if hi <= lo {
                    return Ok(0.0);
                }
                let base = t * u.vector();
                let perp = u.perp();
                // Boundary distances carry absolute rounding of order machine epsilon.
                let floor = 8.0 * f64::EPSILON * self.bound * (hi - lo);
                integrate(
                    |s| self.eval_intensity(&(base + s * perp)) * weight(s),
                    lo,
                    hi,
                    breaks,
                    Tolerance { abs: tol.abs.max(floor), ..tol },
                )
                .map(|e| e.value)
            }
        }
    }

    /// Mass of `f` inside the cube probe `E_τ`.
    pub fn probe_functional_exact(&self, tau: &ProbeLocation, tol: Tolerance) -> Result<f64> {
        let u = &tau.u;
        if tau.r >= self.body.support_function(u) {
            return Ok(0.0);
        }
        if let (Shape::Disk { center, radius }, IntensityProfile::Sharp { level }) = (self.body.shape(), self.profile) {
            return Ok(level * disk_segment_area(*radius, tau.r - u.dot(center)));
        }
        self.slab_mass(u, tau.r, tol)
    }

    /// Same as [`Self::probe_functional_exact`] but always by quadrature.
    pub fn probe_functional_quadrature(&self, tau: &ProbeLocation, tol: Tolerance) -> Result<f64> {
        if tau.r >= self.body.support_function(&tau.u) {
            return Ok(0.0);
        }
        self.slab_mass(&tau.u, tau.r, tol)
    }

    /// `∫_{x·u ≥ r} f`.
    fn slab_mass(&self, u: &Direction, r: f64, tol: Tolerance) -> Result<f64> {
        let Some((lo, hi)) = self.outer_range(u, r) else {
            return Ok(0.0);
        };
        let inner_tol = inner_tolerance(tol);
        let id = |s: f64| s;
        let one = |_: f64| 1.0;
        let breaks = self.outer_breaks(u, &[]);
        let mut failure = None;
        let est = integrate(
            |t| {
                if failure.is_some() {
                    return 0.0;
                }
                match self.chord_integral(u, t, &id, &one, &[], inner_tol) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            lo,
            hi,
            &breaks,
            tol,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(est.value),
        }
    }

    /// `⟨f, φ_{τ,δ}⟩` by nested quadrature.
    pub fn window_inner_product(&self, tau: &ProbeLocation, moll: &MollifierSpec, tol: Tolerance) -> Result<f64> {
        let u = &tau.u;
        let Some((lo, hi)) = self.outer_range(u, tau.r) else {
            return Ok(0.0);
        };
        let shift = 1.0 + tau.r;
        let d = moll.delta();
        let inner_tol = inner_tolerance(tol);
        let cum = |s: f64| moll.antiderivative(s);
        let weight = |s: f64| moll.ramp_p_delta(s);
        let inner_breaks = [-1.0 + d, 1.0 - d];
        let breaks = self.outer_breaks(u, &[tau.r + d]);
        let mut failure = None;
        let est = integrate(
            |t| {
                let w = moll.ramp_p_delta(t - shift);
                if w == 0.0 || failure.is_some() {
                    return 0.0;
                }
                match self.chord_integral(u, t, &cum, &weight, &inner_breaks, inner_tol) {
                    Ok(v) => w * v,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            lo,
            hi,
            &breaks,
            tol,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(est.value),
        }
    }

    /// Least-squares fit of `log ℓ_f(u, h(u) - η)` against `log η`.
    pub fn fit_alpha(&self, u: &Direction, eta_grid: &[f64]) -> Result<AlphaFit> {
        if eta_grid.len() < 5 {
            return Err(Error::arg("fit_alpha needs at least 5 depths"));
        }
        if eta_grid.windows(2).any(|w| !(w[1] < w[0])) || !(eta_grid[eta_grid.len() - 1] > 0.0) {
            return Err(Error::arg("depths must be positive and strictly decreasing"));
        }
        if eta_grid[0] / eta_grid[eta_grid.len() - 1] < 10.0 * (1.0 - 1e-12) {
            return Err(Error::arg("depths must span at least one decade"));
        }
        let h = self.body.support_function(u);
        let tol = Tolerance::new(1e-300, 1e-9);
        let mut xs = Vec::with_capacity(eta_grid.len());
        let mut ys = Vec::with_capacity(eta_grid.len());
        for &eta in eta_grid {
            let tau = ProbeLocation { u: *u, r: h - eta };
            let mass = self.probe_functional_exact(&tau, tol)?;
            if !(mass > 0.0) {
                return Err(Error::arg(format!("direction sees no mass at depth {eta}")));
            }
            xs.push(eta.ln());
            ys.push(mass.ln());
        }
        let (slope, intercept, _) = least_squares(&xs, &ys);
        Ok(AlphaFit {
            alpha: slope,
            q: intercept.exp(),
        })
    }

    /// Cell averages of `f` on the grid, from `ss × ss` midpoint samples per cell.
    pub fn rasterize(&self, grid: &GridSpec, ss: usize) -> GridField {
        let n = grid.n();
        let dx = grid.dx();
        let reach = self.body.radius_bound() + dx;
        let mut field = GridField::zeros(*grid);
        let inv = 1.0 / (ss * ss) as f64;
        let sharp = matches!(self.profile, IntensityProfile::Sharp { .. });
        let data = field.data_mut();
        for iy in 0..n {
            let y = grid.coord(iy);
            if y.abs() > reach {
                continue;
            }
            for ix in 0..n {
                let x = grid.coord(ix);
                if x.abs() > reach {
                    continue;
                }
                let c = Point::new(x, y);
                if sharp {
                    let h = 0.5 * dx;
                    let corners = [(-h, -h), (h, -h), (h, h), (-h, h)];
                    let inside = corners
                        .iter()
                        .filter(|(a, b)| self.body.contains(&(c + Point::new(*a, *b))))
                        .count();
                    if inside == 4 {
                        data[iy * n + ix] = self.eval_intensity(&c);
                        continue;
                    }
                    if inside == 0 && !near(&self.body, &c, dx) {
                        continue;
                    }
                }
                let mut acc = 0.0;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let p = c + dx * Point::new(
                            (sx as f64 + 0.5) / ss as f64 - 0.5,
                            (sy as f64 + 0.5) / ss as f64 - 0.5,
                        );
                        acc += self.eval_intensity(&p);
                    }
                }
                data[iy * n + ix] = acc * inv;
            }
        }
        field
    }
}

/// True when the cell around `c` may touch the body even with no corner inside.
fn near(body: &ConvexBody, c: &Point, dx: f64) -> bool {
    let n = c.norm();
    if n == 0.0 {
        return true;
    }
    let u = Direction::normalized(*c).expect("nonzero");
    // Outside the supporting line through the cell's far side: cannot touch.
    u.dot(c) - dx <= body.support_function(&u)
}

/// Area of `{ x ∈ disk(0, ρ) : x₁ ≥ d }`.
pub fn disk_segment_area(rho: f64, d: f64) -> f64 {
    if d >= rho {
        0.0
    } else if d <= -rho {
        std::f64::consts::PI * rho * rho
    } else {
        rho * rho * (d / rho).acos() - d * (rho * rho - d * d).sqrt()
    }
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, stderr(a))`.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = if xs.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, intercept, stderr)
}

/// Inner chord tolerance: tighter than the outer one, floored where rounding
/// in the boundary distance dominates.
fn inner_tolerance(tol: Tolerance) -> Tolerance {
    Tolerance::new(tol.abs * 1e-2, (tol.rel * 1e-2).max(1e-11))
}

/// Geometric grid of `count` depths from `Δ/10` down to `Δ/100`.
pub fn default_eta_grid(class_delta: f64, count: usize) -> Vec<f64> {
    let hi = class_delta / 10.0;
    let ratio = 0.1f64.powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| hi * ratio.powi(k as i32)).collect()
}
