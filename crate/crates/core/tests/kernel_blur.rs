use std::f64::consts::{PI, TAU};

use convex_probe::geometry::{ConvexBody, Point};
use convex_probe::grid::{GridField, GridSpec};
use convex_probe::kernel::BlurKernel;
use convex_probe::quadrature::gauss_legendre;
use convex_probe::scene::IntensityModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk_image(grid: GridSpec, radius: f64) -> GridField {
    IntensityModel::sharp(ConvexBody::centered_disk(radius).unwrap(), 1.0)
        .unwrap()
        .rasterize(&grid, 8)
}

/// `s K₁(s) = s ∫₀^∞ e^{-s cosh t} cosh t dt`, tending to 1 as `s → 0`.
fn s_k1(s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let (x, w) = gauss_legendre(20);
    let upper = (40.0 / s).max(2.0).acosh() + 1.0;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        for k in 0..6 {
            let a = upper * k as f64 / 6.0;
            let b = upper * (k + 1) as f64 / 6.0;
            let t = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            acc += 0.5 * (b - a) * wi * (-s * t.cosh()).exp() * t.cosh();
        }
    }
    s * acc
}

/// `(G₂ * 1_D)(x)` for the kernel with transform `(1+|ω|²)⁻¹`, i.e.
/// `G₂(x) = K₀(|x|)/2π`, and the disk `D` of radius `rho` centred at `c`.
/// In polar coordinates around `x`, `∫₀^S K₀(s) s ds = 1 − S K₁(S)`.
fn sobolev2_disk(x: Point, c: Point, rho: f64) -> f64 {
    let d = x - c;
    let (gx, gw) = gauss_legendre(24);
    let panels = 16;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = TAU * p as f64 / panels as f64;
        let b = TAU * (p + 1) as f64 / panels as f64;
        for (xi, wi) in gx.iter().zip(&gw) {
            let phi = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            let e = Point::new(phi.cos(), phi.sin());
            // |d + s e|² = ρ² ⇒ s² + 2 s (d·e) + |d|² − ρ² = 0
            let bq = d.dot(&e);
            let disc = bq * bq - (d.norm_squared() - rho * rho);
            let val = if disc <= 0.0 {
                0.0
            } else {
                let s1 = (-bq - disc.sqrt()).max(0.0);
                let s2 = -bq + disc.sqrt();
                if s2 <= 0.0 {
                    0.0
                } else {
                    s_k1(s1) - s_k1(s2)
                }
            };
            acc += 0.5 * (b - a) * wi * val;
        }
    }
    acc / TAU
}

#[test]
fn bessel_k1_reference_values() {
    // K₁(0.1), K₁(1), K₁(5) from standard tables.
    for (s, k1) in [(0.1, 9.853844780870606), (1.0, 0.6019072301972346), (5.0, 0.004044613445452164)] {
        assert!((s_k1(s) / s - k1).abs() <= 1e-9 * k1, "K1({s})");
    }
}

#[test]
fn sobolev2_blur_matches_space_domain_convolution() {
    let grid = GridSpec::new(4.0, 512).unwrap();
    let k = BlurKernel::sobolev(2.0).unwrap();
    let blurred = k.blur_on_grid(&disk_image(grid, 0.7), 0.7);
    assert!(!blurred.wrap_warning);
    let field = &blurred.field;
    let data = field.data();
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo >= -1e-8 && hi <= 1.0 + 1e-8, "range [{lo}, {hi}]");

    // Coarse 64 × 64 sub-grid covering [-2, 2)², periodic images included.
    let mut worst = 0.0f64;
    for iy in (128..384).step_by(4) {
        for ix in (128..384).step_by(4) {
            let x = grid.point(ix, iy);
            let mut exact = 0.0;
            for a in -1..=1 {
                for b in -1..=1 {
                    exact += sobolev2_disk(x, Point::new(8.0 * a as f64, 8.0 * b as f64), 0.7);
                }
            }
            worst = worst.max((field.get(ix, iy) - exact).abs());
        }
    }
    assert!(worst < 2e-3, "max deviation from convolution oracle {worst:e}");
}

#[test]
fn blurred_disk_is_radially_symmetric() {
    let grid = GridSpec::new(4.0, 256).unwrap();
    let field = BlurKernel::sobolev(2.0).unwrap().blur_on_grid(&disk_image(grid, 0.7), 0.7).field;
    let n = grid.n();
    // Grid symmetries of a centred disk: reflections about both axes and the diagonal.
    let mut worst = 0.0f64;
    for iy in 1..n {
        for ix in 1..n {
            let v = field.get(ix, iy);
            worst = worst
                .max((v - field.get(iy, ix)).abs())
                .max((v - field.get(n - ix, iy)).abs())
                .max((v - field.get(ix, n - iy)).abs());
        }
    }
    assert!(worst < 1e-12, "{worst:e}");
    // Equal-radius points off the grid axes agree to interpolation accuracy.
    let on_axis = field.get(n / 2 + 40, n / 2);
    let diag = field.get(n / 2 + 24, n / 2 + 32);
    assert!((on_axis - diag).abs() < 5e-3);
}

#[test]
fn dc_gain_and_identity() {
    let grid = GridSpec::new(4.0, 256).unwrap();
    let f = disk_image(grid, 0.7);
    for k in [BlurKernel::identity(), BlurKernel::sobolev(1.0).unwrap(), BlurKernel::sobolev(2.5).unwrap()] {
        let b = k.blur_on_grid(&f, 0.7).field;
        assert!(((b.sum() - f.sum()) / f.sum()).abs() < 1e-8);
    }
    let same = BlurKernel::identity().blur_on_grid(&f, 0.7).field;
    assert_eq!(same, f);
}

#[test]
fn blur_is_linear() {
    let grid = GridSpec::new(4.0, 128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = GridField::sample(grid, |_| rng.random_range(-1.0..1.0));
    let g = disk_image(grid, 0.5);
    let (a, b) = (0.7, -1.3);
    let combo = GridField::from_vec(grid, f.data().iter().zip(g.data()).map(|(x, y)| a * x + b * y).collect()).unwrap();
    let k = BlurKernel::sobolev(1.0).unwrap();
    let lhs = k.blur_on_grid(&combo, 1.0).field;
    let bf = k.blur_on_grid(&f, 1.0).field;
    let bg = k.blur_on_grid(&g, 1.0).field;
    for i in 0..grid.len() {
        let rhs = a * bf.data()[i] + b * bg.data()[i];
        assert!((lhs.data()[i] - rhs).abs() < 1e-10);
    }
}

#[test]
fn transform_is_radial() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let k = BlurKernel::sobolev(1.7).unwrap();
    for _ in 0..200 {
        let r = rng.random_range(0.0..300.0);
        let (a, b) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
        let w1 = Point::new(r * a.cos(), r * a.sin());
        let w2 = Point::new(r * b.cos(), r * b.sin());
        let (x, y) = (k.kernel_fourier(&w1), k.kernel_fourier(&w2));
        assert!((x - y).norm() <= 1e-14 * x.norm().max(1e-300));
        assert_eq!(x.im, 0.0);
        assert!(x.re > 0.0);
    }
    assert!((BlurKernel::sobolev(2.0).unwrap().kernel_fourier(&Point::new(PI.cos(), PI.sin())).re - 0.5).abs() < 1e-15);
}
