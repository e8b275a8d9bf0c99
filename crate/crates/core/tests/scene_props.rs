use std::f64::consts::{PI, TAU};

use convex_probe::geometry::{ConvexBody, Direction, Point};
use convex_probe::mollifier::{MollifierSpec, ProbeLocation};
use convex_probe::quadrature::Tolerance;
use convex_probe::scene::{default_eta_grid, IntensityModel, IntensityProfile};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerance {
    Tolerance::new(1e-10, 1e-10)
}

fn models() -> Vec<IntensityModel> {
    let disk = ConvexBody::centered_disk(0.7).unwrap();
    let square = ConvexBody::square(0.6).unwrap();
    let ellipse = ConvexBody::ellipse(0.8, 0.5).unwrap();
    vec![
        IntensityModel::sharp(disk.clone(), 1.0).unwrap(),
        IntensityModel::sharp(square.clone(), 0.5).unwrap(),
        IntensityModel::new(disk, IntensityProfile::BoundaryPower { gamma: 1.0, scale: 1.0 }, 1.0).unwrap(),
        IntensityModel::new(ellipse, IntensityProfile::BoundaryPower { gamma: 2.0, scale: 3.0 }, 1.0).unwrap(),
        IntensityModel::new(square, IntensityProfile::BoundaryPower { gamma: 0.5, scale: 1.0 }, 0.4).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn probe_mass_is_nonincreasing_in_r(which in 0usize..5, a in 0.0f64..TAU) {
        let m = &models()[which];
        let u = Direction::from_angle(a);
        let mut prev = f64::INFINITY;
        for k in 0..=40 {
            let r = k as f64 / 40.0;
            let v = m.probe_functional_exact(&ProbeLocation::new(u, r).unwrap(), tol()).unwrap();
            prop_assert!(v <= prev + 1e-10, "r={r}: {v} > {prev}");
            prop_assert!(v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn probe_mass_vanishes_beyond_support(which in 0usize..5, a in 0.0f64..TAU, extra in 0.0f64..0.3) {
        let m = &models()[which];
        let u = Direction::from_angle(a);
        let r = (m.body().support_function(&u) + extra).min(1.0);
        prop_assert_eq!(m.probe_functional_exact(&ProbeLocation::new(u, r).unwrap(), tol()).unwrap(), 0.0);
    }

    #[test]
    fn intensity_is_bounded(which in 0usize..5, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let m = &models()[which];
        let p = Point::new(x, y);
        let v = m.eval_intensity(&p);
        prop_assert!((0.0..=m.bound()).contains(&v));
        if !m.body().contains(&p) {
            prop_assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn segment_area_matches_quadrature_on_random_probes() {
    let m = IntensityModel::sharp(ConvexBody::centered_disk(0.7).unwrap(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let tau = ProbeLocation::new(Direction::from_angle(rng.random_range(0.0..TAU)), rng.random_range(0.0..1.0)).unwrap();
        let closed = m.probe_functional_exact(&tau, tol()).unwrap();
        let quad = m.probe_functional_quadrature(&tau, Tolerance::new(1e-9, 1e-10)).unwrap();
        assert!((closed - quad).abs() <= 1e-7, "{tau:?}: {closed} vs {quad}");
    }
}

#[test]
fn unit_disk_segment() {
    let m = IntensityModel::sharp(ConvexBody::centered_disk(1.0).unwrap(), 1.0).unwrap();
    let u = Direction::from_angle(0.9);
    let half = m.probe_functional_exact(&ProbeLocation::new(u, 0.0).unwrap(), tol()).unwrap();
    assert!((half - PI / 2.0).abs() < 1e-12);
    let seg = m.probe_functional_exact(&ProbeLocation::new(u, 0.5).unwrap(), tol()).unwrap();
    assert!((seg - (0.5f64.acos() - 0.5 * 0.75f64.sqrt())).abs() < 1e-12);
}

#[test]
fn boundary_power_alpha_on_disk() {
    let eta = default_eta_grid(0.2, 9);
    for gamma in [0.0, 1.0, 2.0] {
        let m = IntensityModel::new(
            ConvexBody::centered_disk(0.7).unwrap(),
            IntensityProfile::BoundaryPower { gamma, scale: 1.0 },
            1.0,
        )
        .unwrap();
        let fit = m.fit_alpha(&Direction::from_angle(0.4), &eta).unwrap();
        assert!((fit.alpha - (gamma + 1.5)).abs() <= 0.05, "γ={gamma}: α̂={}", fit.alpha);
    }
}

#[test]
fn window_mass_below_probe_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in models() {
        for delta in [0.05, 0.2] {
            let moll = MollifierSpec::new(delta).unwrap();
            for _ in 0..4 {
                let tau =
                    ProbeLocation::new(Direction::from_angle(rng.random_range(0.0..TAU)), rng.random_range(0.0..0.9)).unwrap();
                let full = m.probe_functional_exact(&tau, tol()).unwrap();
                let win = m.window_inner_product(&tau, &moll, Tolerance::new(1e-9, 1e-10)).unwrap();
                let cap = m.bound() * (4.0 - (2.0 - 2.0 * delta) * (2.0 - 2.0 * delta));
                assert!(win <= full + 1e-8 && full - win <= cap + 1e-8, "{full} {win} {cap}");
            }
        }
    }
}
