mod common;

use common::median;
use mind_core::bench::{gen_gaussian_pairs, ksg_mi, true_gaussian_mi, GaussianPairConfig};
use mind_core::rng::Stream;
use ndarray::Array2;

#[test]
fn strong_scalar_pair() {
    let (x, y) = gen_gaussian_pairs(&GaussianPairConfig { d: 1, rho: 0.9, n: 10_000, seed: 0 }).unwrap();
    let est = ksg_mi(x.view(), y.view(), 5).unwrap();
    let truth = true_gaussian_mi(1, 0.9).unwrap();
    assert!((est - truth).abs() <= 0.05, "{est} vs {truth}");
}

#[test]
fn independent_scalars() {
    let mut rng = Stream::new(2, 2);
    let x = Array2::from_shape_fn((10_000, 1), |_| rng.normal());
    let y = Array2::from_shape_fn((10_000, 1), |_| rng.normal());
    let est = ksg_mi(x.view(), y.view(), 5).unwrap();
    assert!(est.abs() <= 0.03, "{est}");
}

#[test]
fn error_shrinks_with_n() {
    let truth = true_gaussian_mi(1, 0.5).unwrap();
    let mut medians = Vec::new();
    for n in [1_000, 10_000, 100_000] {
        let errs = (0..5)
            .map(|seed| {
                let (x, y) = gen_gaussian_pairs(&GaussianPairConfig { d: 1, rho: 0.5, n, seed }).unwrap();
                (ksg_mi(x.view(), y.view(), 5).unwrap() - truth).abs()
            })
            .collect();
        medians.push(median(errs));
    }
    assert!(medians[0] >= medians[1] && medians[1] >= medians[2], "{medians:?}");
}

#[test]
#[ignore = "KSG with k = 5 collapses far below the [1.5, 4.5] band in 256 dimensions"]
fn table_scale_order_of_magnitude() {
    let (x, y) = gen_gaussian_pairs(&GaussianPairConfig { d: 128, rho: 0.5, n: 1000, seed: 0 }).unwrap();
    let est = ksg_mi(x.view(), y.view(), 5).unwrap();
    assert!((1.5..=4.5).contains(&est), "{est}");
}
