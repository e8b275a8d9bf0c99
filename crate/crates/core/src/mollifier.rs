//! Smooth cutoff `p_δ`, the tensor window `φ_δ`, its rotated-shifted probe
//! version `φ_{τ,δ}`, and their Fourier transforms.
//!
//! The ramp is the normalized cumulative of `γ(t) = exp(-1/(t(1-t)))`,
//! tabulated once on 4096 intervals with cubic Hermite interpolation (the
//! derivative is known exactly). A second table holds the antiderivative of
//! the ramp, so that `∫_a^b p_δ` is available in closed form for quadrature.
//!
//! `p̂_δ(λ) = 2 sin(λ(1-δ))/λ + 2δ ∫_0^1 Γ(t) cos(λ(1-δt)) dt` is evaluated
//! by panel Gauss–Legendre and cached per `δ` on a fine λ grid.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Direction, Point};
use crate::quadrature::gauss_legendre;

const RAMP_INTERVALS: usize = 4096;
/// Spacing of the cached `p̂_δ` grid.
const LAMBDA_STEP: f64 = 1.0 / 64.0;
/// Resynchronize the rotation recurrences this often.
const RESEED_EVERY: usize = 512;
/// Smallest δ the ramp table resolves (a ramp spans at least ~0.4 table cells).
pub const MIN_DELTA: f64 = 1e-4;

pub fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

struct RampTable {
    /// Γ at knots `i/4096`.
    cum: Vec<f64>,
    /// `∫_0^t Γ` at knots.
    cum2: Vec<f64>,
    /// `1 / ∫_0^1 γ`.
    c2: f64,
}

fn ramp_table() -> &'static RampTable {
    static TABLE: OnceLock<RampTable> = OnceLock::new();
    TABLE.get_or_init(build_ramp_table)
}

fn build_ramp_table() -> RampTable {
    let n = RAMP_INTERVALS;
    let h = 1.0 / n as f64;
    let (x, w) = gauss_legendre(10);
    let half = n / 2;
    let mut partial = vec![0.0; half + 1];
    for i in 0..half {
        let a = i as f64 * h;
        let piece: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| wi * bump(a + 0.5 * h * (xi + 1.0)))
            .sum::<f64>()
            * 0.5
            * h;
        partial[i + 1] = partial[i] + piece;
    }
    // γ is symmetric about 1/2, so the total mass is twice the left half and
    // the table is mirrored; this pins Γ(1/2) = 1/2 exactly.
    let total = 2.0 * partial[half];
    let mut cum = vec![0.0; n + 1];
    for i in 0..=half {
        cum[i] = partial[i] / total;
    }
    for i in 0..half {
        cum[n - i] = 1.0 - cum[i];
    }
    cum[half] = 0.5;
    let c2 = 1.0 / total;

    // Exact integral of the Hermite interpolant over each cell.
    let mut cum2 = vec![0.0; n + 1];
    for i in 0..n {
        let d0 = c2 * bump(i as f64 * h);
        let d1 = c2 * bump((i + 1) as f64 * h);
        cum2[i + 1] = cum2[i] + 0.5 * h * (cum[i] + cum[i + 1]) + h * h * (d0 - d1) / 12.0;
    }
    RampTable { cum, cum2, c2 }
}

fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

fn locate(t: f64) -> (usize, f64) {
    let pos = t * RAMP_INTERVALS as f64;
    let i = (pos.floor() as usize).min(RAMP_INTERVALS - 1);
    (i, pos - i as f64)
}

/// The normalized cumulative `Γ(t) = c₂ ∫_0^t γ`, clamped to `[0, 1]`.
pub fn ramp(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let tab = ramp_table();
    let h = 1.0 / RAMP_INTERVALS as f64;
    let (i, s) = locate(t);
    let d0 = tab.c2 * bump(i as f64 * h);
    let d1 = tab.c2 * bump((i + 1) as f64 * h);
    hermite(tab.cum[i], tab.cum[i + 1], d0, d1, h, s).clamp(0.0, 1.0)
}

/// `∫_0^t Γ`; equals `t - 1/2` for `t ≥ 1`.
fn ramp_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 0.5 + (t - 1.0);
    }
    let tab = ramp_table();
    let (i, s) = locate(t);
    let h = 1.0 / RAMP_INTERVALS as f64;
    hermite(tab.cum2[i], tab.cum2[i + 1], tab.cum[i], tab.cum[i + 1], h, s)
}

/// `c₂ = 1 / ∫_0^1 γ`.
pub fn normalizer() -> f64 {
    ramp_table().c2
}

/// Location on the probe index set: direction `u` and offset `r ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeLocation {
    pub u: Direction,
    pub r: f64,
}

impl ProbeLocation {
    pub fn new(u: Direction, r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::arg(format!("probe offset r must lie in [0, 1], got {r}")));
        }
        Ok(Self { u, r })
    }

    /// Center `(1 + r)u` of the cube `E_τ`.
    pub fn center(&self) -> Point {
        (1.0 + self.r) * self.u.vector()
    }

    /// Coordinates of `x` in the frame of `E_τ`: `A_u⁻¹(x - (1+r)u)`.
    pub fn local(&self, x: &Point) -> Point {
        let d = x - self.center();
        Point::new(self.u.dot(&d), self.u.perp().dot(&d))
    }

    /// Membership in the closed cube `E_τ = A_u[-1,1]² + (1+r)u`.
    pub fn in_cube(&self, x: &Point) -> bool {
        let y = self.local(x);
        y.x.abs() <= 1.0 && y.y.abs() <= 1.0
    }
}

/// One smoothing width with its cached transform.
#[derive(Clone, Debug)]
pub struct MollifierSpec {
    delta: f64,
    lambda_max: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MollifierSpec {
    /// Spec with a modest transform cache (`|λ| ≤ 64`); larger arguments are
    /// evaluated directly.
    pub fn new(delta: f64) -> Result<Self> {
        Self::with_cache(delta, 64.0)
    }

    /// Spec whose `p̂_δ` cache covers `|λ| ≤ lambda_max`.
    pub fn with_cache(delta: f64, lambda_max: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!("smoothing width δ must lie in (0, 1), got {delta}")));
        }
        if delta < MIN_DELTA {
            return Err(Error::config(format!(
                "δ = {delta:e} is below the ramp table resolution ({MIN_DELTA:e}); use a finer ramp table"
            )));
        }
        let mut spec = Self {
            delta,
            lambda_max: 0.0,
            values: Vec::new(),
            slopes: Vec::new(),
        };
        spec.build_cache(lambda_max.max(1.0));
        Ok(spec)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn cache_limit(&self) -> f64 {
        self.lambda_max
    }

    /// `p_δ(x)`.
    pub fn ramp_p_delta(&self, x: f64) -> f64 {
        let a = x.abs();
        if a >= 1.0 {
            0.0
        } else if a <= 1.0 - self.delta {
            1.0
        } else {
            ramp((1.0 - a) / self.delta)
        }
    }

    /// `∫_{-∞}^x p_δ`, which rises from 0 to `2 - δ`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let d = self.delta;
        if x <= -1.0 {
            0.0
        } else if x >= 1.0 {
            2.0 - d
        } else if x > 0.0 {
            2.0 - d - self.antiderivative(-x)
        } else if x < -1.0 + d {
            d * ramp_integral((x + 1.0) / d)
        } else {
            0.5 * d + (x + 1.0 - d)
        }
    }

    /// `φ_δ(x) = p_δ(x₁) p_δ(x₂)`.
    pub fn phi_delta_eval(&self, x: &Point) -> f64 {
        self.ramp_p_delta(x.x) * self.ramp_p_delta(x.y)
    }

    /// `φ_{τ,δ}(x) = φ_δ(A_u⁻¹(x - (1+r)u))`, supported exactly on `E_τ`.
    pub fn phi_tau_delta_eval(&self, tau: &ProbeLocation, x: &Point) -> f64 {
        self.phi_delta_eval(&tau.local(x))
    }

    /// `p̂_δ(λ)`, real because `p_δ` is even.
    pub fn phi_hat_delta_1d(&self, lambda: f64) -> f64 {
        let a = lambda.abs();
        if a > self.lambda_max {
            return self.transform_direct(a).0;
        }
        let pos = a / LAMBDA_STEP;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let s = pos - i as f64;
        hermite(
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            LAMBDA_STEP,
            s,
        )
    }

    /// `φ̂_δ(v) = p̂_δ(v₁) p̂_δ(v₂)`.
    pub fn phi_hat_delta(&self, v: &Point) -> f64 {
        self.phi_hat_delta_1d(v.x) * self.phi_hat_delta_1d(v.y)
    }

    /// `φ̂_{τ,δ}(ω) = e^{i(1+r)u·ω} φ̂_δ(A_u⁻¹ω)`.
    pub fn phi_hat_tau_delta(&self, tau: &ProbeLocation, omega: &Point) -> Complex64 {
        let s = tau.u.dot(omega);
        let v = Point::new(s, tau.u.perp().dot(omega));
        Complex64::from_polar(self.phi_hat_delta(&v), (1.0 + tau.r) * s)
    }

    /// `max_{0 ≤ λ ≤ λ_max} |p̂_δ(λ)| (1 + λ)^k` on a grid of step `step`.
    pub fn decay_constant(&self, k: i32, lambda_max: f64, step: f64) -> f64 {
        let n = (lambda_max / step).ceil() as usize;
        (0..=n)
            .map(|j| {
                let l = (j as f64 * step).min(lambda_max);
                self.phi_hat_delta_1d(l).abs() * (1.0 + l).powi(k)
            })
            .fold(0.0, f64::max)
    }

    fn ramp_nodes(&self, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let (x, w) = gauss_legendre(10);
        let hp = 1.0 / panels as f64;
        let mut theta = Vec::with_capacity(panels * x.len());
        let mut weight = Vec::with_capacity(panels * x.len());
        for p in 0..panels {
            for (xi, wi) in x.iter().zip(&w) {
                let t = hp * (p as f64 + 0.5 * (xi + 1.0));
                theta.push(1.0 - self.delta * t);
                weight.push(2.0 * self.delta * 0.5 * hp * wi * ramp(t));
            }
        }
        (theta, weight)
    }

    fn panels_for(&self, lambda: f64) -> usize {
        ((lambda * self.delta / 2.0).ceil() as usize).max(16)
    }

    /// Value and derivative of `p̂_δ` at `λ ≥ 0` by direct quadrature.
    fn transform_direct(&self, lambda: f64) -> (f64, f64) {
        let (theta, weight) = self.ramp_nodes(self.panels_for(lambda));
        let (plateau, plateau_slope) = plateau_part(1.0 - self.delta, lambda);
        let mut v = plateau;
        let mut dv = plateau_slope;
        for (th, w) in theta.iter().zip(&weight) {
            let (s, c) = (lambda * th).sin_cos();
            v += w * c;
            dv -= w * th * s;
        }
        (v, dv)
    }

    fn build_cache(&mut self, lambda_max: f64) {
        let count = (lambda_max / LAMBDA_STEP).ceil() as usize + 1;
        let (theta, weight) = self.ramp_nodes(self.panels_for(lambda_max));
        let q = theta.len();
        // e^{iλθ_q} advanced by rotation from one λ node to the next.
        let step: Vec<Complex64> = theta
            .iter()
            .map(|th| Complex64::from_polar(1.0, LAMBDA_STEP * th))
            .collect();
        let mut rot = vec![Complex64::new(1.0, 0.0); q];
        let mut values = Vec::with_capacity(count);
        let mut slopes = Vec::with_capacity(count);
        for j in 0..count {
            let lambda = j as f64 * LAMBDA_STEP;
            if j % RESEED_EVERY == 0 {
                for (z, th) in rot.iter_mut().zip(&theta) {
                    *z = Complex64::from_polar(1.0, lambda * th);
                }
            }
            let (mut v, mut dv) = plateau_part(1.0 - self.delta, lambda);
            for k in 0..q {
                v += weight[k] * rot[k].re;
                dv -= weight[k] * theta[k] * rot[k].im;
                rot[k] *= step[k];
            }
            values.push(v);
            slopes.push(dv);
        }
        self.lambda_max = (count - 1) as f64 * LAMBDA_STEP;
        self.values = values;
        self.slopes = slopes;
    }
}

/// `2 sin(aλ)/λ` and its λ-derivative, with series near zero.
fn plateau_part(a: f64, lambda: f64) -> (f64, f64) {
    let x = a * lambda;
    if x.abs() < 1e-3 {
        let x2 = x * x;
        let v = 2.0 * a * (1.0 - x2 / 6.0 + x2 * x2 / 120.0);
        let dv = 2.0 * a * a * (-x / 3.0 + x * x2 / 30.0);
        (v, dv)
    } else {
        let (s, c) = x.sin_cos();
        (2.0 * s / lambda, 2.0 * (x * c - s) / (lambda * lambda))
    }
}

/// Frequency bound that covers the lattice of a grid with spacing `dx`,
/// including rotated coordinates (factor √2).
pub fn lattice_lambda_max(dx: f64) -> f64 {
    1.01 * 2f64.sqrt() * PI / dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};
    use approx::assert_abs_diff_eq;

    #[test]
    fn ramp_shape() {
        assert_eq!(ramp(0.5), 0.5);
        assert_eq!(ramp(0.0), 0.0);
        assert_eq!(ramp(1.0), 1.0);
        for k in 1..100 {
            let t = k as f64 / 100.0;
            assert!(ramp(t) >= ramp(t - 0.01));
            assert_abs_diff_eq!(ramp(t) + ramp(1.0 - t), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn normalizer_matches_adaptive_quadrature() {
        let mass = integrate(bump, 0.0, 1.0, &[], Tolerance::new(1e-15, 1e-13)).unwrap().value;
        assert_abs_diff_eq!(normalizer() * mass, 1.0, epsilon = 1e-12);
        let at = |t: f64| {
            integrate(bump, 0.0, t, &[], Tolerance::new(1e-15, 1e-13)).unwrap().value / mass
        };
        for t in [0.05, 0.2, 0.37, 0.5, 0.81, 0.97] {
            assert_abs_diff_eq!(ramp(t), at(t), epsilon = 1e-11);
        }
    }

    #[test]
    fn p_delta_examples() {
        let m = MollifierSpec::new(0.1).unwrap();
        assert_eq!(m.ramp_p_delta(0.0), 1.0);
        assert_eq!(m.ramp_p_delta(1.0), 0.0);
        assert_eq!(m.ramp_p_delta(-1.0), 0.0);
        assert_abs_diff_eq!(m.ramp_p_delta(-1.0 + 0.05), 0.5, epsilon = 1e-12);
        assert_eq!(m.phi_delta_eval(&Point::new(0.0, 0.0)), 1.0);
        assert_eq!(m.phi_delta_eval(&Point::new(1.0, 0.0)), 0.0);
        assert_abs_diff_eq!(m.phi_delta_eval(&Point::new(-0.95, 0.0)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        for delta in [0.02, 0.1, 0.3] {
            let m = MollifierSpec::new(delta).unwrap();
            assert_abs_diff_eq!(m.antiderivative(2.0), 2.0 - delta, epsilon = 1e-14);
            for x in [-0.999, -1.0 + delta / 3.0, -0.4, 0.0, 0.7, 1.0 - delta / 4.0, 0.9999] {
                let q = integrate(|y| m.ramp_p_delta(y), -1.0, x, &[-1.0 + delta, 1.0 - delta], Tolerance::new(1e-13, 1e-12))
                    .unwrap()
                    .value;
                assert_abs_diff_eq!(m.antiderivative(x), q, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn transform_at_zero() {
        for delta in [0.1, 0.02, 0.5] {
            let m = MollifierSpec::new(delta).unwrap();
            assert_abs_diff_eq!(m.phi_hat_delta_1d(0.0), 2.0 - delta, epsilon = 1e-12);
        }
        let m = MollifierSpec::new(0.1).unwrap();
        assert_abs_diff_eq!(m.phi_hat_delta_1d(0.0), 1.9, epsilon = 1e-12);
    }

    #[test]
    fn transform_matches_adaptive_quadrature() {
        let m = MollifierSpec::with_cache(0.07, 300.0).unwrap();
        for lambda in [0.3, 1.0, 7.77, 31.4, 150.2, 299.0, 410.0] {
            let q = integrate(
                |x| 2.0 * m.ramp_p_delta(x) * (lambda * x).cos(),
                0.0,
                1.0,
                &[1.0 - 0.07],
                Tolerance::new(1e-14, 1e-12),
            )
            .unwrap()
            .value;
            assert_abs_diff_eq!(m.phi_hat_delta_1d(lambda), q, epsilon = 1e-10);
            assert_eq!(m.phi_hat_delta_1d(-lambda), m.phi_hat_delta_1d(lambda));
        }
    }

    #[test]
    fn decay_is_bounded() {
        let m = MollifierSpec::with_cache(0.1, 200.0).unwrap();
        let c4 = m.decay_constant(4, 200.0, 0.05);
        assert!(c4.is_finite() && c4 >= 1.9);
    }

    #[test]
    fn tau_transform_examples() {
        let m = MollifierSpec::new(0.1).unwrap();
        let u = Direction::new(1.0, 0.0).unwrap();
        let tau = ProbeLocation::new(u, 0.37).unwrap();
        let z = m.phi_hat_tau_delta(&tau, &Point::zeros());
        assert_abs_diff_eq!(z.re, 1.9 * 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        let u = Direction::from_angle(0.4);
        let a = ProbeLocation::new(u, 0.1).unwrap();
        let b = ProbeLocation::new(u, 0.9).unwrap();
        for w in [Point::new(3.0, -1.0), Point::new(-20.0, 7.5)] {
            assert_abs_diff_eq!(m.phi_hat_tau_delta(&a, &w).norm(), m.phi_hat_tau_delta(&b, &w).norm(), epsilon = 1e-12);
        }
        assert!(ProbeLocation::new(u, 1.2).is_err());
    }

    #[test]
    fn window_support_is_the_cube() {
        let m = MollifierSpec::new(0.2).unwrap();
        let tau = ProbeLocation::new(Direction::from_angle(PI / 6.0), 0.3).unwrap();
        let inner = |x: &Point| {
            let y = tau.local(x);
            y.x.abs() <= 0.8 && y.y.abs() <= 0.8
        };
        for i in 0..60 {
            for j in 0..60 {
                let x = Point::new(-0.5 + 3.5 * i as f64 / 59.0, -2.0 + 4.0 * j as f64 / 59.0);
                let v = m.phi_tau_delta_eval(&tau, &x);
                assert!(v <= if tau.in_cube(&x) { 1.0 } else { 0.0 });
                assert!(v >= if inner(&x) { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn tiny_delta_is_rejected() {
        assert!(matches!(MollifierSpec::new(1e-5), Err(Error::Config(_))));
        assert!(MollifierSpec::new(1.0).is_err());
    }
}
