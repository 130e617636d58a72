mod common;

use common::{brute_nn, random_samples, sample};
use hotspot_core::baselines::{
    kmeans_fit, kmeans_predict, masked_distance, nn_predict, CentroidSet, NearestNeighbor,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

#[test]
fn nearest_neighbor_equals_full_scan() {
    for seed in 0..20 {
        let mut rng = StdRng::seed_from_u64(seed);
        let train = random_samples(&mut rng, 50, 6, 0);
        let test = random_samples(&mut rng, 10, 6, 1000);
        for v_star in 0..6 {
            let nn = NearestNeighbor::new(&train, v_star).unwrap();
            for t in &test {
                assert_eq!(nn.predict(t), brute_nn(&train, t, v_star));
                assert_eq!(nn_predict(&train, t, v_star).unwrap(), brute_nn(&train, t, v_star));
            }
        }
    }
}

#[test]
fn earliest_of_equidistant_neighbors_wins() {
    let train = vec![
        sample(0, 50.0, vec![1, 0, 3]),
        sample(1, 10.0, vec![1, 0, 1]),
        sample(2, 30.0, vec![0, 1, 1]),
    ];
    let test = sample(9, 0.0, vec![1, 0, 0]);
    assert_eq!(nn_predict(&train, &test, 2).unwrap(), 0.5);
}

#[test]
fn point_centroids_reproduce_nearest_neighbor() {
    let mut rng = StdRng::seed_from_u64(11);
    let train = random_samples(&mut rng, 40, 5, 0);
    let test = random_samples(&mut rng, 200, 5, 1000);
    for v_star in 0..5 {
        let cs = CentroidSet::from_points(&train, v_star).unwrap();
        let nn = NearestNeighbor::new(&train, v_star).unwrap();
        for t in &test {
            assert_eq!(kmeans_predict(&cs, t, v_star).unwrap(), nn.predict(t));
        }
    }
}

#[test]
fn lloyd_never_raises_the_error() {
    for seed in 0..30 {
        let mut rng = StdRng::seed_from_u64(seed);
        let train = random_samples(&mut rng, 80, 7, 0);
        let cs = kmeans_fit(&train, 6, 3, &mut rng, 3).unwrap();
        for pair in cs.sse_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "seed {seed}: {:?}", cs.sse_trace);
        }
        assert!((cs.sse - cs.sse_trace.last().unwrap()).abs() <= 1e-12);
        for c in &cs.centroids {
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn one_cluster_is_the_mean_of_masked_vectors() {
    let mut rng = StdRng::seed_from_u64(5);
    let train = random_samples(&mut rng, 25, 4, 0);
    let cs = kmeans_fit(&train, 1, 0, &mut rng, 2).unwrap();
    let usable: Vec<Vec<f64>> = train.iter().filter_map(|s| s.masked(0)).collect();
    for d in 0..3 {
        let mean = usable.iter().map(|m| m[d]).sum::<f64>() / usable.len() as f64;
        assert!((cs.centroids[0][d] - mean).abs() < 1e-12);
    }
}

#[test]
fn too_many_clusters_is_an_input_error() {
    let mut rng = StdRng::seed_from_u64(0);
    let train = random_samples(&mut rng, 3, 4, 0);
    let err = kmeans_fit(&train, 4, 0, &mut rng, 1).unwrap_err();
    assert!(err.is_input_error());
}

proptest! {
    #[test]
    fn masked_distance_is_a_pseudometric(seed in any::<u64>(), v_star in 0usize..5) {
        let mut rng = StdRng::seed_from_u64(seed);
        let s = random_samples(&mut rng, 3, 5, 0);
        let (a, b, c) = (&s[0], &s[1], &s[2]);
        let ab = masked_distance(a, b, v_star);
        prop_assert_eq!(ab, masked_distance(b, a, v_star));
        if a.masked(v_star).is_some() {
            prop_assert_eq!(masked_distance(a, a, v_star), 0.0);
        }
        let (ac, cb) = (masked_distance(a, c, v_star), masked_distance(c, b, v_star));
        if ab.is_finite() && ac.is_finite() && cb.is_finite() {
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }

    #[test]
    fn baseline_outputs_are_probabilities(seed in any::<u64>(), v_star in 0usize..4, k in 1usize..6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let train = random_samples(&mut rng, 12, 4, 0);
        let test = random_samples(&mut rng, 5, 4, 100);
        let usable = train.iter().filter(|s| s.masked(v_star).is_some()).count();
        prop_assume!(usable >= k);
        let cs = kmeans_fit(&train, k, v_star, &mut rng, 2).unwrap();
        for t in &test {
            let p = kmeans_predict(&cs, t, v_star).unwrap();
            let q = nn_predict(&train, t, v_star).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((0.0..=1.0).contains(&q));
        }
    }
}
