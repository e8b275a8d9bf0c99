//! Observation process on the grid and its exact finite-dimensional law.
//!
//! Grid mode draws the increments `ΔY_i = (Kf)(x_i)Δx² + εΔx Z_i`. Each grid
//! row uses its own ChaCha stream of the field seed, so a cell's draw depends
//! only on `(seed, row, column)` and rows can be generated in any order.
//!
//! Oracle mode samples `means + ε C z` with `C Cᵀ` the Gram matrix of the
//! weight functions, which is the exact joint law of the probe estimates.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

/// Mixes `(master, stream, index)` into a 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub kernel: String,
    pub scene: String,
    pub eps: f64,
    pub seed: u64,
}

/// One realization of the increments of `Y`; immutable once drawn.
#[derive(Clone, Debug)]
pub struct ObservationField {
    increments: GridField,
    provenance: Provenance,
}

impl ObservationField {
    pub fn grid(&self) -> &GridSpec {
        self.increments.grid()
    }

    pub fn increments(&self) -> &GridField {
        &self.increments
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn eps(&self) -> f64 {
        self.provenance.eps
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::arg(format!("noise level ε must lie in [0, 1), got {eps}")));
    }
    Ok(())
}

/// Draws the increments for a blurred image `Kf` sampled on the grid.
pub fn simulate_grid_field(
    blurred: &GridField,
    eps: f64,
    seed: u64,
    kernel: &str,
    scene: &str,
) -> Result<ObservationField> {
    check_eps(eps)?;
    let grid = *blurred.grid();
    let n = grid.n();
    let area = grid.cell_area();
    let sigma = eps * grid.dx();
    let mut data: Vec<f64> = blurred.data().iter().map(|v| v * area).collect();
    if eps > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (row, chunk) in data.chunks_mut(n).enumerate() {
            rng.set_stream(row as u64);
            rng.set_word_pos(0);
            for v in chunk {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
        }
    }
    Ok(ObservationField {
        increments: GridField::from_vec(grid, data)?,
        provenance: Provenance {
            kernel: kernel.to_string(),
            scene: scene.to_string(),
            eps,
            seed,
        },
    })
}

/// `Σ_i w(x_i) ΔY_i`.
pub fn integrate_against(field: &ObservationField, weights: &GridField) -> Result<f64> {
    weights.dot(&field.increments)
}

/// Gram matrix `⟨ψ_i, ψ_j⟩ = Δx² Σ ψ_i ψ_j` of grid functions.
pub fn gram_matrix(psi: &[GridField]) -> Result<DMatrix<f64>> {
    let k = psi.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let area = psi[i].grid().cell_area();
            let v = area * psi[i].dot(&psi[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Factored covariance for exact joint draws of probe estimates.
#[derive(Clone, Debug)]
pub struct GaussianProbeSampler {
    factor: DMatrix<f64>,
    /// Diagonal loading that was needed for the factorization (0 when none).
    pub jitter: f64,
}

impl GaussianProbeSampler {
    /// Cholesky factor of `gram`, retrying with growing diagonal jitter
    /// starting at `1e-12 · trace / n` when the matrix is numerically indefinite.
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(Error::arg("Gram matrix must be square and nonempty"));
        }
        if let Some(c) = Cholesky::new(gram.clone()) {
            return Ok(Self {
                factor: c.l(),
                jitter: 0.0,
            });
        }
        let base = 1e-12 * gram.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
        let mut jitter = base;
        for _ in 0..12 {
            let mut m = gram.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(c) = Cholesky::new(m) {
                return Ok(Self { factor: c.l(), jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::Numerical {
            message: "Gram matrix could not be factored even with diagonal jitter".into(),
            achieved: jitter,
        })
    }

    pub fn from_psi_grids(psi: &[GridField]) -> Result<Self> {
        Self::new(gram_matrix(psi)?)
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `means + ε C z` with `z` drawn from `rng`.
    pub fn draw_with<R: Rng>(&self, means: &[f64], eps: f64, rng: &mut R) -> Result<Vec<f64>> {
        check_eps(eps)?;
        if means.len() != self.dim() {
            return Err(Error::arg(format!(
                "{} means for {} probes",
                means.len(),
                self.dim()
            )));
        }
        if eps == 0.0 {
            return Ok(means.to_vec());
        }
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let noise = &self.factor * z;
        Ok(means.iter().zip(noise.iter()).map(|(m, e)| m + eps * e).collect())
    }

    pub fn draw(&self, means: &[f64], eps: f64, seed: u64) -> Result<Vec<f64>> {
        self.draw_with(means, eps, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// One joint draw of probe estimates with exact means and grid Gram matrix.
pub fn exact_gaussian_probe_draws(means: &[f64], psi: &[GridField], eps: f64, seed: u64) -> Result<Vec<f64>> {
    GaussianProbeSampler::from_psi_grids(psi)?.draw(means, eps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> GridSpec {
        GridSpec::new(4.0, 128).unwrap()
    }

    #[test]
    fn noiseless_field_is_the_mean() {
        let g = grid();
        let b = GridField::sample(g, |x| (-x.norm_squared()).exp());
        let f = simulate_grid_field(&b, 0.0, 7, "identity", "test").unwrap();
        for (y, m) in f.increments().data().iter().zip(b.data()) {
            assert_eq!(*y, m * g.cell_area());
        }
    }

    #[test]
    fn eps_out_of_range() {
        let b = GridField::zeros(grid());
        assert!(matches!(simulate_grid_field(&b, 1.0, 1, "", ""), Err(Error::Argument(_))));
        assert!(simulate_grid_field(&b, -0.1, 1, "", "").is_err());
    }

    #[test]
    fn white_noise_moments() {
        let g = GridSpec::new(4.0, 256).unwrap();
        let f = simulate_grid_field(&GridField::zeros(g), 0.1, 11, "", "").unwrap();
        let s = 0.1 * g.dx();
        let z: Vec<f64> = f.increments().data().iter().map(|v| v / s).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() <= 3.0 / n.sqrt() * 2f64.sqrt());
    }

    #[test]
    fn determinism_and_seed_independence() {
        let g = GridSpec::new(4.0, 512).unwrap();
        let zero = GridField::zeros(g);
        let a = simulate_grid_field(&zero, 0.5, 42, "", "").unwrap();
        let b = simulate_grid_field(&zero, 0.5, 42, "", "").unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = simulate_grid_field(&zero, 0.5, 43, "", "").unwrap();
        let (x, y) = (a.increments().data(), c.increments().data());
        let sxy: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let sxx: f64 = x.iter().map(|p| p * p).sum();
        let syy: f64 = y.iter().map(|p| p * p).sum();
        assert!((sxy / (sxx * syy).sqrt()).abs() < 0.05);
    }

    #[test]
    fn integrate_against_basics() {
        let g = grid();
        let b = GridField::sample(g, |x| x.x.cos());
        let f = simulate_grid_field(&b, 0.2, 3, "", "").unwrap();
        assert_eq!(integrate_against(&f, &GridField::zeros(g)).unwrap(), 0.0);
        let other = GridField::zeros(GridSpec::new(4.0, 256).unwrap());
        assert!(integrate_against(&f, &other).is_err());
        let w1 = GridField::sample(g, |x| x.y);
        let w2 = GridField::sample(g, |x| 1.0 - x.x);
        let sum = GridField::sample(g, |x| 2.0 * x.y - 3.0 * (1.0 - x.x));
        let lhs = integrate_against(&f, &sum).unwrap();
        let rhs = 2.0 * integrate_against(&f, &w1).unwrap() - 3.0 * integrate_against(&f, &w2).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn oracle_draw_examples() {
        let g = grid();
        let psi = vec![GridField::sample(g, |x| if x.x > 0.0 && x.x < 1.0 { 1.0 } else { 0.0 })];
        assert_eq!(exact_gaussian_probe_draws(&[0.3], &psi, 0.0, 1).unwrap(), vec![0.3]);
        let sampler = GaussianProbeSampler::from_psi_grids(&psi).unwrap();
        let norm2 = gram_matrix(&psi).unwrap()[(0, 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..2000)
            .map(|_| sampler.draw_with(&[0.3], 0.1, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / 2000.0;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 1999.0;
        assert!((var / (0.01 * norm2) - 1.0).abs() < 0.1);
    }

    #[test]
    fn orthogonal_probes_are_uncorrelated() {
        let g = grid();
        let psi = vec![
            GridField::sample(g, |x| if x.x > 0.5 { 1.0 } else { 0.0 }),
            GridField::sample(g, |x| if x.x < -0.5 { 1.0 } else { 0.0 }),
        ];
        let sampler = GaussianProbeSampler::from_psi_grids(&psi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws: Vec<Vec<f64>> = (0..2000).map(|_| sampler.draw_with(&[0.0, 0.0], 0.1, &mut rng).unwrap()).collect();
        let sxy: f64 = draws.iter().map(|d| d[0] * d[1]).sum();
        let sxx: f64 = draws.iter().map(|d| d[0] * d[0]).sum();
        let syy: f64 = draws.iter().map(|d| d[1] * d[1]).sum();
        assert!((sxy / (sxx * syy).sqrt()).abs() <= 0.08);
    }

    #[test]
    fn singular_gram_gets_jitter() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = GaussianProbeSampler::new(g).unwrap();
        assert!(s.jitter > 0.0);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(2, 0, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }
}
