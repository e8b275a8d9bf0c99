//! The periodic simulation grid on `[-R, R)²` and its frequency lattice.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    extent: f64,
    n: usize,
}

impl GridSpec {
    /// Domain `[-extent, extent)²` with `n` samples per axis.
    ///
    /// Every probe cube lies within radius `2 + √2` of the origin, so the
    /// extent must be at least that; `n` must be a power of two, `≥ 128`.
    pub fn new(extent: f64, n: usize) -> Result<Self> {
        if !(extent >= 2.0 + 2f64.sqrt()) {
            return Err(Error::config(format!(
                "grid extent {extent} does not cover every probe cube (need >= 2 + √2)"
            )));
        }
        if n < 128 || !n.is_power_of_two() {
            return Err(Error::config(format!("grid size n must be a power of two >= 128, got {n}")));
        }
        Ok(Self { extent, n })
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Coordinate of sample `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.dx()
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point {
        Point::new(self.coord(ix), self.coord(iy))
    }

    /// Signed frequency index of DFT bin `i` (`-n/2` for the Nyquist bin).
    pub fn freq_index(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Lattice spacing `2π / (2R)`.
    pub fn dw(&self) -> f64 {
        PI / self.extent
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.freq_index(i) as f64 * self.dw()
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// Lattice measure `(Δω / 2π)² = (1 / 2R)²`.
    pub fn lattice_weight(&self) -> f64 {
        let w = 0.5 / self.extent;
        w * w
    }
}

/// Real samples on a grid, row-major with `x` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::arg(format!(
                "grid data has {} samples, expected {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    /// Samples `f` at every grid point.
    pub fn sample(grid: GridSpec, mut f: impl FnMut(&Point) -> f64) -> Self {
        let n = grid.n();
        let mut data = Vec::with_capacity(grid.len());
        for iy in 0..n {
            for ix in 0..n {
                data.push(f(&grid.point(ix, iy)));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.data[iy * self.grid.n() + ix]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `Σ a_i b_i`; errors when the grids differ.
    pub fn dot(&self, other: &GridField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::arg("grid mismatch"));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

/// Two-dimensional FFT of size `n × n` built from 1-D plans.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized `Σ_j a_j e^{-2πi k·j/n}` in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    /// Unnormalized `Σ_k a_k e^{+2πi k·j/n}` in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n * self.n);
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, self.n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, self.n);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(4.0, 512).is_ok());
        assert!(GridSpec::new(3.0, 512).is_err());
        assert!(GridSpec::new(4.0, 500).is_err());
        assert!(GridSpec::new(4.0, 64).is_err());
        let g = GridSpec::new(4.0, 128).unwrap();
        assert_eq!(g.dx(), 0.0625);
        assert_eq!(g.coord(0), -4.0);
        assert_eq!(g.freq_index(64), -64);
        assert_eq!(g.freq_index(63), 63);
    }

    #[test]
    fn fft_matches_direct_sum() {
        let n = 8;
        let f = Fft2::new(n);
        let a: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut b = a.clone();
        f.forward(&mut b);
        for k2 in 0..n {
            for k1 in 0..n {
                let mut s = Complex64::default();
                for j2 in 0..n {
                    for j1 in 0..n {
                        let ph = -2.0 * PI * ((k1 * j1 + k2 * j2) as f64) / n as f64;
                        s += a[j2 * n + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert_abs_diff_eq!((s - b[k2 * n + k1]).norm(), 0.0, epsilon = 1e-12);
            }
        }
        f.inverse(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!((x - y / (n * n) as f64).norm(), 0.0, epsilon = 1e-14);
        }
    }
}
