mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use shufflepoint::geometry::{
    ball_query, cluster_fps, covering_radius, fps, kmeans, knn, ClusterFps, PointCloud,
};

fn cloud(pts: Vec<[f64; 3]>) -> PointCloud {
    PointCloud::new(pts).unwrap()
}

#[test]
fn fps_equals_greedy_oracle_on_small_clouds() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let n = r.random_range(1..=8);
        let pts = uniform_cloud(&mut r, n);
        let c = cloud(pts.clone());
        for k in 1..=n {
            let start = r.random_range(0..n);
            assert_eq!(fps(&c, k, start).unwrap().indices, brute_force_fps(&pts, k, start), "seed {seed} k {k}");
        }
    }
}

#[test]
fn fps_on_a_coarse_lattice_with_ties() {
    // integer coordinates make exact distance ties common
    for seed in 0..50 {
        let mut r = rng(1000 + seed);
        let pts: Vec<[f64; 3]> = (0..8)
            .map(|_| [r.random_range(0..3) as f64, r.random_range(0..3) as f64, 0.0])
            .collect();
        let c = cloud(pts.clone());
        assert_eq!(fps(&c, 8, 0).unwrap().indices, brute_force_fps(&pts, 8, 0));
    }
}

#[test]
fn fps_is_a_two_approximation() {
    for seed in 0..40 {
        let mut r = rng(2000 + seed);
        let n = r.random_range(4..=12);
        let k = r.random_range(1..=4);
        let pts = uniform_cloud(&mut r, n);
        let c = cloud(pts.clone());
        let got = covering_radius(&c, &fps(&c, k, 0).unwrap().indices).unwrap();
        assert!(got <= 2.0 * optimal_cover(&pts, k) + 1e-12);
    }
}

#[test]
fn knn_matches_exhaustive_sort() {
    for seed in 0..100 {
        let mut r = rng(3000 + seed);
        let n = r.random_range(1..200);
        let base = uniform_cloud(&mut r, n);
        let qs = uniform_cloud(&mut r, 5);
        let k = r.random_range(1..=n);
        let got = knn(&qs, &cloud(base.clone()), k).unwrap();
        for (q, row) in qs.iter().zip(&got) {
            assert_eq!(row, &brute_force_knn(q, &base, k));
        }
    }
}

#[test]
fn knn_on_the_grid_path_matches_exhaustive_sort() {
    let mut r = rng(7);
    let base = uniform_cloud(&mut r, 6000);
    let qs = uniform_cloud(&mut r, 20);
    let c = cloud(base.clone());
    let got = knn(&qs, &c, 9).unwrap();
    for (q, row) in qs.iter().zip(&got) {
        assert_eq!(row, &brute_force_knn(q, &base, 9));
    }
}

#[test]
fn query_point_in_base_finds_itself() {
    let mut r = rng(8);
    let base = uniform_cloud(&mut r, 50);
    let got = knn(&base[17..18], &cloud(base.clone()), 1).unwrap();
    assert_eq!(got, vec![vec![17]]);
}

#[test]
fn ball_query_matches_range_scan() {
    for seed in 0..60 {
        let mut r = rng(4000 + seed);
        let n = if seed % 10 == 0 { 5000 } else { r.random_range(1..300) };
        let pts = uniform_cloud(&mut r, n);
        let c = cloud(pts.clone());
        let centers: Vec<usize> = (0..6).map(|_| r.random_range(0..n)).collect();
        let radius = r.random_range(0.01..0.5);
        let max = r.random_range(1..40);
        let got = ball_query(&c, &centers, radius, max).unwrap();
        for (&ctr, g) in centers.iter().zip(&got) {
            assert_eq!(g, &brute_force_ball(&pts, ctr, radius, max));
        }
    }
}

#[test]
fn covering_radius_matches_oracle_on_the_grid_path() {
    let mut r = rng(9);
    let pts = uniform_cloud(&mut r, 5000);
    let c = cloud(pts.clone());
    let sample = fps(&c, 64, 0).unwrap().indices;
    let got = covering_radius(&c, &sample).unwrap();
    assert_eq!(got, brute_force_cover(&pts, &sample));
}

#[test]
fn kmeans_separates_two_blobs() {
    let mut r = rng(10);
    let mut pts = Vec::new();
    for i in 0..100 {
        let o = if i < 50 { 0.0 } else { 10.0 };
        pts.push([o + r.random_range(-0.1..0.1), o + r.random_range(-0.1..0.1), o + r.random_range(-0.1..0.1)]);
    }
    let a = kmeans(&cloud(pts.clone()), 2, 50, 1e-9, 3).unwrap();
    let first = a.assignment[0];
    assert!(a.assignment[..50].iter().all(|&x| x == first));
    assert!(a.assignment[50..].iter().all(|&x| x != first));
    // every point sits with its nearest centroid
    for (p, &id) in pts.iter().zip(&a.assignment) {
        let d = |c: &[f64; 3]| (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>();
        assert!(a.centroids.iter().all(|c| d(&a.centroids[id]) <= d(c)));
    }
}

#[test]
fn kmeans_inertia_never_increases_and_reruns_are_identical() {
    for seed in 0..20 {
        let mut r = rng(5000 + seed);
        let c = cloud(uniform_cloud(&mut r, 400));
        let a = kmeans(&c, 8, 30, 0.0, seed).unwrap();
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0], "{:?}", a.inertia_history);
        }
        assert_eq!(a, kmeans(&c, 8, 30, 0.0, seed).unwrap());
    }
}

#[test]
fn cluster_fps_takes_ten_from_each_blob() {
    let mut r = rng(11);
    let mut pts = Vec::new();
    for i in 0..200 {
        let o = if i < 100 { 0.0 } else { 20.0 };
        pts.push([o + r.random::<f64>(), r.random::<f64>(), r.random::<f64>()]);
    }
    // neighborhoods no larger than a blob keep each sweep inside its own blob
    let s = cluster_fps(&cloud(pts), 2, Some(100), 20, 4).unwrap();
    assert_eq!(s.indices.iter().filter(|&&i| i < 100).count(), 10);
    assert_eq!(s.indices.len(), 20);
}

#[test]
fn cluster_fps_covering_radius_stays_within_factor() {
    for seed in 0..3 {
        let mut r = rng(6000 + seed);
        let c = cloud(uniform_cloud(&mut r, 4096));
        let plain = covering_radius(&c, &fps(&c, 512, 0).unwrap().indices).unwrap();
        let clustered = covering_radius(&c, &cluster_fps(&c, 16, None, 512, seed).unwrap().indices).unwrap();
        assert!(clustered <= 2.5 * plain, "{clustered} vs {plain}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cluster_fps_returns_exactly_k_unique(seed in 0u64..10_000, n in 8usize..120, c in 1usize..5, per in 1usize..4) {
        let k = c * per;
        prop_assume!(k <= n);
        let mut r = rng(seed);
        let cl = cloud(uniform_cloud(&mut r, n));
        let s = ClusterFps::new(c, seed).sample(&cl, k).unwrap();
        let mut u = s.indices.clone();
        u.sort();
        u.dedup();
        prop_assert_eq!(u.len(), k);
        prop_assert!(u.iter().all(|&i| i < n));
    }

    #[test]
    fn covering_radius_shrinks_with_supersets(seed in 0u64..10_000, n in 2usize..60, extra in 1usize..10) {
        let mut r = rng(seed);
        let cl = cloud(uniform_cloud(&mut r, n));
        let small: Vec<usize> = (0..n).step_by(3).collect();
        let mut big = small.clone();
        big.extend((0..extra).map(|_| r.random_range(0..n)));
        prop_assert!(covering_radius(&cl, &big).unwrap() <= covering_radius(&cl, &small).unwrap());
    }

    #[test]
    fn fps_indices_are_unique(seed in 0u64..10_000, n in 1usize..80) {
        let mut r = rng(seed);
        let cl = cloud(uniform_cloud(&mut r, n));
        let k = r.random_range(1..=n);
        let mut s = fps(&cl, k, r.random_range(0..n)).unwrap().indices;
        s.sort();
        s.dedup();
        prop_assert_eq!(s.len(), k);
    }
}
