mod common;

use std::rc::Rc;

use common::{gradient_error, random_matrix, rng};
use rand::Rng;
use shufflepoint::numerics::{Eager, Graph, Matrix, ParamStore, Segments, Tape};
use shufflepoint::shuffle::*;

fn sorted_entries(m: &Matrix) -> Vec<f64> {
    let mut v = m.data().to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// A random (D, g) with g dividing D.
fn width_and_groups(r: &mut impl Rng) -> (usize, usize) {
    let g = r.random_range(1..=6);
    (g * r.random_range(1..=6), g)
}

#[test]
fn sample_shuffle_inverse_recovers_input() {
    for seed in 0..1000 {
        let mut r = rng(seed);
        let n = r.random_range(1..40);
        let g = r.random_range(1..10);
        let f = random_matrix(&mut r, n, 3, 1.0);
        let s = sample_shuffle(&f, g);
        let back = s.gather_rows(&invert(&sample_permutation(n, g))).unwrap();
        assert_eq!(back, f);
        assert_eq!(sorted_entries(&s), sorted_entries(&f));
        assert_eq!(sample_shuffle(&f, 1), f);
        assert_eq!(sample_shuffle(&f, n), f);
    }
}

#[test]
fn channel_shuffle_inverse_and_double_shuffle() {
    for seed in 0..1000 {
        let mut r = rng(10_000 + seed);
        let (d, g) = width_and_groups(&mut r);
        let rows = r.random_range(1..10);
        let f = random_matrix(&mut r, rows, d, 1.0);
        let s = channel_shuffle(&f, g).unwrap();
        let back = s.gather_cols(&invert(&channel_permutation(d, g).unwrap())).unwrap();
        assert_eq!(back, f);
        assert_eq!(sorted_entries(&s), sorted_entries(&f));
        assert_eq!(channel_shuffle(&f, 1).unwrap(), f);
        assert_eq!(channel_shuffle(&s, d / g).unwrap(), f);
    }
}

#[test]
fn six_rows_and_six_columns_by_hand() {
    let f = Matrix::from_fn(6, 6, |r, c| (10 * r + c) as f64);
    let rows = sample_shuffle(&f, 2);
    let order: Vec<f64> = (0..6).map(|i| rows.get(i, 0) / 10.0).collect();
    assert_eq!(order, vec![0.0, 2.0, 4.0, 1.0, 3.0, 5.0]);
    let cols = channel_shuffle(&f, 2).unwrap();
    assert_eq!(cols.row(0), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    assert!(channel_shuffle(&f, 4).is_err());
}

#[test]
fn gradient_through_shuffles_is_the_inverse_permutation() {
    for seed in 0..50 {
        let mut r = rng(20_000 + seed);
        let n = r.random_range(2..12);
        let (d, g) = width_and_groups(&mut r);
        let gs = r.random_range(1..5);
        let mut store = ParamStore::new();
        let x = store.add("x", random_matrix(&mut r, n, d, 1.0));
        let w = random_matrix(&mut r, n, d, 1.0);
        let rp: Rc<[usize]> = sample_permutation(n, gs).into();
        let cp: Rc<[usize]> = channel_permutation(d, g).unwrap().into();
        let build = |t: &mut Tape, s: &ParamStore| {
            let v = t.param(s, x);
            let a = t.gather_rows(&v, rp.clone())?;
            let b = t.gather_cols(&a, cp.clone())?;
            let wc = t.constant(w.clone());
            let p = t.mul(&b, &wc)?;
            Ok(t.sum(&p))
        };
        assert!(gradient_error(&store, build) < 1e-4);

        // d loss / d x is the weighting read back through both inverse permutations
        let mut t = Tape::new();
        let loss = build(&mut t, &store).unwrap();
        let grads = t.backward(loss).unwrap();
        let expect = w
            .gather_cols(&invert(&cp))
            .unwrap()
            .gather_rows(&invert(&rp))
            .unwrap();
        assert_eq!(grads.get(&store, x), expect);
    }
}

fn linear_sigma<G: Graph>(g: &mut G, store: &ParamStore, input: &G::Node) -> shufflepoint::Result<G::Node> {
    let w = g.param(store, store.find("w").unwrap());
    g.matmul(input, &w)
}

#[test]
fn identity_shuffles_make_both_branches_equal() {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    store.add("w", random_matrix(&mut r, 7, 8, 1.0));
    let mut g = Eager::new();
    let f = g.constant(random_matrix(&mut r, 9, 4, 1.0));
    let p = g.constant(random_matrix(&mut r, 9, 3, 1.0));
    let seg = Segments::uniform(1, 9);
    let out = her_transform(&mut g, &f, &p, &seg, ShuffleSpec::identity(), |g, x, _| {
        linear_sigma(g, &store, x)
    })
    .unwrap();
    assert_eq!(g.value(&out.sigma), g.value(&out.shuffled));
}

#[test]
fn single_point_differs_only_by_channel_order() {
    let mut r = rng(2);
    let mut store = ParamStore::new();
    store.add("w", random_matrix(&mut r, 7, 8, 1.0));
    let mut g = Eager::new();
    let f = g.constant(random_matrix(&mut r, 1, 4, 1.0));
    let p = g.constant(random_matrix(&mut r, 1, 3, 1.0));
    let out = her_transform(&mut g, &f, &p, &Segments::uniform(1, 1), ShuffleSpec::new(4, 4).unwrap(), |g, x, _| {
        linear_sigma(g, &store, x)
    })
    .unwrap();
    let sigma = g.value(&out.sigma).clone();
    assert_eq!(&channel_shuffle(&sigma, 4).unwrap(), g.value(&out.shuffled));
}

#[test]
fn shuffled_branch_is_a_column_permutation_of_the_row_shuffled_map() {
    let mut r = rng(3);
    let mut store = ParamStore::new();
    store.add("w", random_matrix(&mut r, 7, 8, 1.0));
    let fm = random_matrix(&mut r, 10, 4, 1.0);
    let pm = random_matrix(&mut r, 10, 3, 1.0);
    let mut g = Eager::new();
    let f = g.constant(fm.clone());
    let p = g.constant(pm.clone());
    let out = her_transform(&mut g, &f, &p, &Segments::uniform(1, 10), ShuffleSpec::new(3, 2).unwrap(), |g, x, _| {
        linear_sigma(g, &store, x)
    })
    .unwrap();
    let direct = pm
        .concat_cols(&sample_shuffle(&fm, 3))
        .unwrap()
        .matmul(store.get(store.find("w").unwrap()))
        .unwrap();
    let got = g.value(&out.shuffled);
    for c in 0..8 {
        let col: Vec<f64> = (0..10).map(|i| got.get(i, c)).collect();
        assert!((0..8).any(|k| (0..10).all(|i| direct.get(i, k) == col[i])));
    }
    assert_eq!(sorted_entries(got), sorted_entries(&direct));
}

#[test]
fn segment_count_mismatch_is_rejected() {
    let mut g = Eager::new();
    let f = g.constant(Matrix::zeros(5, 2));
    let p = g.constant(Matrix::zeros(5, 3));
    let res = her_shuffled(&mut g, &f, &p, &Segments::uniform(1, 4), ShuffleSpec::default(), |_, x| Ok(x.clone()));
    assert!(res.is_err());
}
