//! One-dimensional type-1 nonuniform FFT by fast Gaussian gridding.
//!
//! Computes `F_j = Σ_k c_k e^{i j x_k}` for `j = 0..=m` with the
//! Greengard–Lee scheme: spread onto a 2× oversampled periodic grid with a
//! Gaussian, FFT, then divide out the Gaussian's transform.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Half-width of the spreading stencil in fine-grid points.
const SPREAD: usize = 12;

#[derive(Clone)]
pub struct Nufft1 {
    max_mode: usize,
    fine: usize,
    h: f64,
    tau: f64,
    /// `exp(-(l h)² / 4τ)` for `l = 0..=SPREAD`.
    e3: Vec<f64>,
    plan: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Nufft1 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nufft1")
            .field("max_mode", &self.max_mode)
            .field("fine", &self.fine)
            .finish()
    }
}

impl Nufft1 {
    /// Plan for output modes `0..=max_mode`.
    pub fn new(max_mode: usize) -> Self {
        let modes = 2 * (max_mode + 1);
        let fine = 2 * modes;
        let h = TAU / fine as f64;
        let tau = PI * SPREAD as f64 / (modes * modes) as f64 / 3.0;
        let e3 = (0..=SPREAD)
            .map(|l| (-((l as f64 * h).powi(2)) / (4.0 * tau)).exp())
            .collect();
        let plan = FftPlanner::new().plan_fft_inverse(fine);
        Self {
            max_mode,
            fine,
            h,
            tau,
            e3,
            plan,
        }
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// `F_j = Σ_k c_k e^{i j x_k}`, `j = 0..=max_mode`. Positions may be any
    /// real numbers; they are reduced mod 2π.
    pub fn execute(&self, x: &[f64], c: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), c.len());
        let mut grid = vec![Complex64::default(); self.fine];
        let fine = self.fine as isize;
        let inv4t = 1.0 / (4.0 * self.tau);
        for (&xk, &ck) in x.iter().zip(c) {
            let xr = xk.rem_euclid(TAU);
            let l0 = (xr / self.h).floor();
            let d = xr - l0 * self.h;
            let l0 = l0 as isize;
            let e1 = (-d * d * inv4t).exp();
            let e2 = (d * self.h * 2.0 * inv4t).exp();
            let base = ck * e1;
            // l' = 0, 1, .., SPREAD
            let mut p = 1.0;
            for (lp, e3) in self.e3.iter().enumerate() {
                let idx = (l0 + lp as isize).rem_euclid(fine) as usize;
                grid[idx] += base * (p * e3);
                p *= e2;
            }
            // l' = -1, .., -(SPREAD - 1)
            let inv = 1.0 / e2;
            let mut p = inv;
            for lp in 1..SPREAD {
                let idx = (l0 - lp as isize).rem_euclid(fine) as usize;
                grid[idx] += base * (p * self.e3[lp]);
                p *= inv;
            }
        }
        let mut scratch = vec![Complex64::default(); self.plan.get_inplace_scratch_len()];
        self.plan.process_with_scratch(&mut grid, &mut scratch);
        let norm = (PI / self.tau).sqrt() / self.fine as f64;
        (0..=self.max_mode)
            .map(|j| grid[j] * (norm * ((j * j) as f64 * self.tau).exp()))
            .collect()
    }
}

/// Direct `O(mK)` evaluation of the same sums.
pub fn direct_sum(x: &[f64], c: &[Complex64], max_mode: usize) -> Vec<Complex64> {
    (0..=max_mode)
        .map(|j| {
            x.iter()
                .zip(c)
                .map(|(xk, ck)| ck * Complex64::from_polar(1.0, j as f64 * xk))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, k) in [(64usize, 300usize), (512, 2000), (37, 50)] {
            let x: Vec<f64> = (0..k).map(|_| rng.random_range(-40.0..40.0)).collect();
            let c: Vec<Complex64> = (0..k)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let scale: f64 = c.iter().map(|z| z.norm()).sum();
            let fast = Nufft1::new(m).execute(&x, &c);
            let slow = direct_sum(&x, &c, m);
            let err = fast
                .iter()
                .zip(&slow)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10 * scale, "m={m}: {err:e} vs scale {scale}");
        }
    }

    #[test]
    fn single_exponential() {
        let out = Nufft1::new(10).execute(&[0.3], &[Complex64::new(1.0, 0.0)]);
        for (j, v) in out.iter().enumerate() {
            let want = Complex64::from_polar(1.0, 0.3 * j as f64);
            assert!((v - want).norm() < 1e-11);
        }
    }
}
