//! Property tests of the K-transform calculus and the generator.

use glauber_core::combinatorics::sites::{k_inverse_table, k_transform, k_transform_table, star_table};
use glauber_core::combinatorics::{k_transform as k_points, CylinderFunction, QuasiObservable, SiteFunction};
use glauber_core::generator::SiteGenerator;
use glauber_core::{BoxGeometry, Caps, FiniteConfiguration, Region, SiteSet, SiteSpace, SpacePoint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(n: usize) -> impl Strategy<Value = SiteFunction> {
    prop::collection::vec(-1.0f64..1.0, 1 << n).prop_map(move |v| SiteFunction::from_fn(n, |s| v[s.bits() as usize]))
}

fn space(n: usize) -> impl Strategy<Value = SiteSpace> {
    (
        prop::collection::vec(0.2f64..2.0, n),
        prop::collection::vec(prop_oneof![Just(f64::INFINITY), -0.5f64..2.0], n * n),
    )
        .prop_map(move |(w, raw)| {
            let mut m = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..i {
                    m[i][j] = raw[i * n + j];
                    m[j][i] = raw[i * n + j];
                }
            }
            SiteSpace::new(w, m).unwrap()
        })
}

proptest! {
    #[test]
    fn k_is_linear(g1 in table(4), g2 in table(4), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let combo = SiteFunction::linear_combination(a, &g1, b, &g2);
        for gamma in SiteSet::full(4).subsets() {
            let lhs = k_transform(&combo, gamma);
            let rhs = a * k_transform(&g1, gamma) + b * k_transform(&g2, gamma);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn k_is_bijective(g in table(6)) {
        prop_assert!(k_inverse_table(&k_transform_table(&g)).max_abs_diff(&g) < 1e-12);
        prop_assert!(k_transform_table(&k_inverse_table(&g)).max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn k_is_multiplicative(g1 in table(5), g2 in table(5)) {
        let lhs = k_transform_table(&star_table(&g1, &g2, &Caps::default()).unwrap());
        let (a, b) = (k_transform_table(&g1), k_transform_table(&g2));
        for gamma in SiteSet::full(5).subsets() {
            prop_assert!((lhs.get(gamma) - a.get(gamma) * b.get(gamma)).abs() < 1e-12);
        }
    }

    #[test]
    fn star_is_commutative_with_unit(g1 in table(4), g2 in table(4)) {
        let caps = Caps::default();
        prop_assert!(star_table(&g1, &g2, &caps).unwrap().max_abs_diff(&star_table(&g2, &g1, &caps).unwrap()) < 1e-14);
        let unit = SiteFunction::empty_indicator(4);
        prop_assert!(star_table(&g1, &unit, &caps).unwrap().max_abs_diff(&g1) < 1e-15);
    }

    #[test]
    fn generator_intertwines(sp in space(4), g in table(4), z in 0.0f64..1.5) {
        let gen = SiteGenerator::new(&sp, z).unwrap();
        let (r, _) = gen.intertwining_residual(&g).unwrap();
        prop_assert!(r < 1e-11);
    }

    #[test]
    fn constants_are_harmonic(sp in space(5), z in 0.0f64..2.0, c in -3.0f64..3.0) {
        let gen = SiteGenerator::new(&sp, z).unwrap();
        for gamma in sp.all().subsets() {
            prop_assert_eq!(gen.apply_h_fn(|_| c, gamma), 0.0);
        }
    }
}

#[test]
fn cylinder_bound_holds() {
    let geom = BoxGeometry::torus(2, 6.0).unwrap();
    let caps = Caps::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..10_000 {
        let lo = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
        let window = Region::new(geom, &lo, &[lo[0] + 2.5, lo[1] + 2.5]).unwrap();
        let f = CylinderFunction::new(QuasiObservable::random_product(window, trial % 4, &mut rng));
        let n = rng.random_range(0..9);
        let gamma: FiniteConfiguration = (0..n).map(|_| geom.uniform_point(&mut rng)).collect();
        let value = f.eval(&gamma, &caps).unwrap();
        assert!(value.abs() <= f.polynomial_bound(&gamma) * (1.0 + 1e-12), "trial {trial}");
    }
}

#[test]
fn continuum_k_of_coherent_state_is_product() {
    let geom = BoxGeometry::torus(1, 10.0).unwrap();
    let window = Region::new(geom, &[2.0], &[8.0]).unwrap();
    let f = |x: &SpacePoint| 0.3 * (x.coord(0)).sin();
    let g = QuasiObservable::coherent(window, 10, 0.3, f);
    let pts = [1.0, 2.5, 3.0, 5.5, 7.9, 9.0];
    let gamma: FiniteConfiguration = pts.iter().map(|&x| SpacePoint::new(&[x])).collect();
    let expected: f64 = gamma.iter().filter(|p| window.contains(p)).map(|p| 1.0 + f(p)).product();
    assert!((k_points(&g, &gamma, &Caps::default()).unwrap() - expected).abs() < 1e-14);
}
