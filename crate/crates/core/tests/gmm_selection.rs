use covshift::gmm::{select_components, SelectConfig};
use covshift::rng::seeded;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn single_gaussian_selects_few_components() {
    let mut small = 0;
    for seed in 0..20 {
        let mut rng = seeded(seed);
        let x = Array2::from_shape_fn((2000, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let s = select_components(x.view(), &mut rng, &SelectConfig::default()).unwrap();
        if s.k <= 3 {
            small += 1;
        }
    }
    assert!(small >= 18, "k <= 3 in {small}/20 runs");
}

#[test]
fn separated_clusters_select_at_least_three() {
    let centers = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = seeded(100 + seed);
        let x = Array2::from_shape_fn((900, 2), |(i, j)| centers[i % 3][j] + rng.sample::<f64, _>(StandardNormal));
        let s = select_components(x.view(), &mut rng, &SelectConfig::default()).unwrap();
        if s.k >= 3 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "k >= 3 in {hits}/20 runs");
}
