use std::f64::consts::PI;

use invmetric::bergman::{representative_coords, transformation_residual, BasisSpec, KernelModel};
use invmetric::{Automorphism, PlanarDomain};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_in_annulus(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Complex64 {
    Complex64::from_polar(rng.gen_range(lo..hi), rng.gen_range(0.0..2.0 * PI))
}

#[test]
fn annulus_series_matches_gram_oracle() {
    let annulus = PlanarDomain::annulus(1.0, 2.0).unwrap();
    let spec = BasisSpec {
        outer_degree: 110,
        hole_degree: 70,
        angular_nodes: 192,
        ..BasisSpec::default()
    };
    let oracle = KernelModel::numeric(&annulus, spec).unwrap();
    let series = KernelModel::annulus_truncated(1.0, 2.0, 150).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let z = random_in_annulus(&mut rng, 1.2, 1.8);
        let w = random_in_annulus(&mut rng, 1.2, 1.8);
        let exact = series.kernel1(z, w);
        let r = (oracle.kernel1(z, w) - exact).norm() / exact.norm();
        assert!(r < 1e-6, "relative error {r:e} at {z}, {w}");
    }
}

#[test]
fn disc_closed_matches_gram_oracle() {
    let disc = PlanarDomain::unit_disc();
    let spec = BasisSpec {
        outer_degree: 63,
        angular_nodes: 128,
        ..BasisSpec::default()
    };
    let oracle = KernelModel::numeric(&disc, spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let z = random_in_annulus(&mut rng, 0.0, 0.8);
        let w = random_in_annulus(&mut rng, 0.0, 0.8);
        let exact = KernelModel::DiscClosed.kernel1(z, w);
        let r = (oracle.kernel1(z, w) - exact).norm() / exact.norm();
        assert!(r < 1e-6, "relative error {r:e}");
    }
}

#[test]
fn transformation_law_into_moebius_image() {
    let base = PlanarDomain::annulus(0.25, 1.0).unwrap();
    let phi = Automorphism::Moebius([c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(1.0, 0.0)]);
    let image = PlanarDomain::moebius_image(&base, phi.clone()).unwrap();
    let spec = BasisSpec {
        outer_degree: 60,
        hole_degree: 40,
        angular_nodes: 512,
        ..BasisSpec::default()
    };
    let oracle = KernelModel::numeric(&image, spec).unwrap();
    let series = KernelModel::annulus_truncated(0.25, 1.0, 150).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pairs: Vec<_> = (0..20)
        .map(|_| {
            (
                random_in_annulus(&mut rng, 0.4, 0.6),
                random_in_annulus(&mut rng, 0.4, 0.6),
            )
        })
        .collect();
    let r = transformation_residual(&series, &oracle, &phi, &pairs).unwrap();
    assert!(r < 1e-5, "residual {r:e}");
    let b = series.metric_factor(c(0.5, 0.1)).unwrap();
    let m = phi.mobius().unwrap();
    let pushed =
        oracle.metric_factor(m.apply(c(0.5, 0.1))).unwrap() * m.derivative(c(0.5, 0.1)).norm_sqr();
    assert!((pushed - b).abs() < 1e-4 * b, "{pushed} vs {b}");
}

#[test]
fn disc_transformation_law_for_random_moebius_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let k = KernelModel::DiscClosed;
    for _ in 0..50 {
        let a = random_in_annulus(&mut rng, 0.0, 0.9);
        let phi =
            Automorphism::disc_mobius(a).then(Automorphism::Rotation(rng.gen_range(0.0..2.0 * PI)));
        let pairs: Vec<_> = (0..10)
            .map(|_| {
                (
                    random_in_annulus(&mut rng, 0.0, 0.9),
                    random_in_annulus(&mut rng, 0.0, 0.9),
                )
            })
            .collect();
        assert!(transformation_residual(&k, &k, &phi, &pairs).unwrap() < 1e-10);
    }
}

#[test]
fn disc_kernel_lower_bound_near_boundary() {
    let k = KernelModel::DiscClosed;
    let one = c(1.0, 0.0);
    let mut min = f64::INFINITY;
    let pts: Vec<Complex64> = (0..41)
        .flat_map(|i| (0..41).map(move |j| c(0.9 + i as f64 * 0.005, -0.1 + j as f64 * 0.005)))
        .filter(|z| z.norm() < 1.0 && (z - one).norm() < 0.1)
        .collect();
    for &z in &pts {
        for &w in &pts {
            if (z - w).norm() < 0.1 {
                min = min.min(k.kernel1(z, w).norm());
            }
        }
    }
    assert!(min >= 1.0 / (4.0 * PI), "minimum {min}");
}

#[test]
fn representative_coordinates_linearize_disc_automorphisms() {
    let k = KernelModel::DiscClosed;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let step = 2e-5;
    for _ in 0..10 {
        let p = random_in_annulus(&mut rng, 0.0, 0.5);
        let a = random_in_annulus(&mut rng, 0.0, 0.5);
        let phi = Automorphism::disc_mobius(a).mobius().unwrap();
        let q = phi.apply(p);
        let (mut num, mut den) = (c(0.0, 0.0), 0.0);
        let mut pairs = Vec::new();
        for _ in 0..50 {
            let z = p + random_in_annulus(&mut rng, 0.0, 0.2);
            let x = representative_coords(&k, p, z, step).unwrap();
            let y = representative_coords(&k, q, phi.apply(z), step).unwrap();
            num += x.conj() * y;
            den += x.norm_sqr();
            pairs.push((x, y));
        }
        let slope = num / den;
        let res: f64 = pairs
            .iter()
            .map(|(x, y)| (y - slope * x).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let norm: f64 = pairs.iter().map(|(_, y)| y.norm_sqr()).sum::<f64>().sqrt();
        assert!(res / norm < 1e-3, "fit residual {:e}", res / norm);
    }
}
