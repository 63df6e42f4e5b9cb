use pdm::density::{holder_norm, ibp_density, kernel_density, silverman_bandwidth, uniform_grid};
use pdm::wiener::{sample_increments, TimeGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, Normal};

fn normal_samples(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn kernel_recovers_standard_normal_peak() {
    let x = normal_samples(1, 1_000_000);
    let est = kernel_density(&x, &[0.0], None).unwrap();
    let target = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((est.values[0] - target).abs() < 3e-3, "{}", est.values[0]);
}

#[test]
fn kernel_halves_agree() {
    let x = normal_samples(2, 200_000);
    let q = uniform_grid(-2.0, 2.0, 9).unwrap();
    let (a, b) = x.split_at(100_000);
    let h = silverman_bandwidth(a).unwrap();
    let ea = kernel_density(a, &q, Some(h)).unwrap();
    let eb = kernel_density(b, &q, Some(h)).unwrap();
    for i in 0..q.len() {
        let se = (ea.stderr[i].powi(2) + eb.stderr[i].powi(2)).sqrt();
        assert!((ea.values[i] - eb.values[i]).abs() < 4.0 * se, "point {i}");
    }
}

#[test]
fn kernel_mass_is_close_to_one() {
    let x = normal_samples(3, 20_000);
    let q = uniform_grid(-5.0, 5.0, 101).unwrap();
    let m = kernel_density(&x, &q, None).unwrap().mass();
    assert!((0.95..=1.01).contains(&m), "{m}");
}

#[test]
fn ibp_density_of_brownian_endpoint() {
    // F = W(1) with unit weight G has H = W(1).
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let samples: Vec<(f64, f64)> = (0..100_000)
        .map(|i| {
            let w = sample_increments(5, i, &grid, 1).unwrap().terminal(0);
            (w, w)
        })
        .collect();
    let q = uniform_grid(-2.0, 2.0, 9).unwrap();
    let est = ibp_density(&samples, &q).unwrap();
    let law = Normal::new(0.0, 1.0).unwrap();
    for (i, &y) in q.iter().enumerate() {
        let z = (est.values[i] - law.pdf(y)) / est.stderr[i];
        assert!(z.abs() < 4.0, "y = {y}: z = {z}");
    }
}

#[test]
fn ibp_density_is_linear_in_the_weight() {
    let samples: Vec<(f64, f64)> = normal_samples(6, 1000).chunks(2).map(|c| (c[0], c[1])).collect();
    let doubled: Vec<(f64, f64)> = samples.iter().map(|&(f, h)| (f, 2.0 * h)).collect();
    let q = [-0.5, 0.0, 0.5];
    let a = ibp_density(&samples, &q).unwrap();
    let b = ibp_density(&doubled, &q).unwrap();
    for i in 0..3 {
        assert_eq!(2.0 * a.values[i], b.values[i]);
        assert_eq!(2.0 * a.stderr[i], b.stderr[i]);
    }
}

proptest! {
    #[test]
    fn holder_norm_grows_with_beta(values in prop::collection::vec(-2.0..2.0f64, 2..20), b1 in 0.0..0.99f64, b2 in 0.0..0.99f64) {
        // On a grid of span at most one every |x - y|^beta shrinks as beta grows.
        let spacing = 1.0 / values.len() as f64;
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        let a = holder_norm(&values, spacing, lo).unwrap();
        let b = holder_norm(&values, spacing, hi).unwrap();
        prop_assert!(a.total <= b.total + 1e-12);
        prop_assert_eq!(a.sup_term, b.sup_term);
    }

    #[test]
    fn holder_norm_is_a_seminorm_plus_sup(values in prop::collection::vec(-2.0..2.0f64, 2..12), c in -3.0..3.0f64, beta in 0.0..0.99f64) {
        let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
        let a = holder_norm(&values, 0.1, beta).unwrap();
        let b = holder_norm(&scaled, 0.1, beta).unwrap();
        prop_assert!((b.total - c.abs() * a.total).abs() <= 1e-9 * (1.0 + b.total));
    }
}
