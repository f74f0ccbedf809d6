mod common;

use common::{gradient_error, random_matrix, rng};
use rand::Rng;
use shufflepoint::lmir::*;
use shufflepoint::numerics::{adam_step, AdamState, Eager, Graph, Matrix, ParamStore, Tape};

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

fn discriminator(store: &mut ParamStore, dx: usize, dz: usize, hidden: usize, seed: u64) -> Discriminator {
    Discriminator::new(store, "t", dx, dz, hidden, &mut rng(seed))
}

fn set(store: &mut ParamStore, t: &Discriminator, values: [Matrix; 4]) {
    for (id, v) in t.param_ids().into_iter().zip(values) {
        *store.get_mut(id) = v;
    }
}

fn eager_pair(g: &mut Eager, x: Matrix, sigma: Matrix, shuffled: Matrix) -> MiPair<<Eager as Graph>::Node> {
    let (x, s, h) = (g.constant(x), g.constant(sigma), g.constant(shuffled));
    MiPair::new(x, s, h, 0)
}

#[test]
fn constant_score_matches_closed_form() {
    let mut store = ParamStore::new();
    let t = discriminator(&mut store, 2, 2, 3, 0);
    set(&mut store, &t, [Matrix::zeros(4, 3), Matrix::zeros(1, 3), Matrix::zeros(3, 1), Matrix::scalar(1.0)]);
    let mut g = Eager::new();
    let mut r = rng(1);
    let pair = eager_pair(&mut g, random_matrix(&mut r, 6, 2, 1.0), random_matrix(&mut r, 6, 2, 1.0), random_matrix(&mut r, 6, 2, 1.0));
    let v = dim_estimator(&mut g, &store, &t, &pair).unwrap();
    let expect = -(2.0 + 1f64.exp() + (-1f64).exp()).ln();
    assert!((g.value(&v).item() - expect).abs() < 1e-12);
    assert!((expect + 1.62652).abs() < 1e-5);
}

#[test]
fn confident_discriminator_scores_near_zero() {
    // sigma rows have z = -1, shuffled rows z = +1; the score is 5 * relu(z + 1) - 5
    let mut store = ParamStore::new();
    let t = discriminator(&mut store, 1, 1, 1, 0);
    set(
        &mut store,
        &t,
        [Matrix::from_rows(&[vec![0.0], vec![1.0]]), Matrix::scalar(1.0), Matrix::scalar(5.0), Matrix::scalar(-5.0)],
    );
    let mut g = Eager::new();
    let pair = eager_pair(&mut g, Matrix::zeros(4, 1), Matrix::filled(4, 1, -1.0), Matrix::filled(4, 1, 1.0));
    let v = lmir_estimator(&mut g, &store, &t, &pair).unwrap();
    let expect = -2.0 * softplus(-5.0);
    assert!((g.value(&v).item() - expect).abs() < 1e-12);
    assert!((expect + 0.0134307).abs() < 1e-6);
}

#[test]
fn exchange_identity_is_exact_and_estimates_are_negative() {
    for seed in 0..200 {
        let mut r = rng(seed);
        let (dx, dz, n) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..20));
        let mut store = ParamStore::new();
        let t = discriminator(&mut store, dx, dz, r.random_range(1..9), seed);
        let mut g = Eager::new();
        let pair = eager_pair(&mut g, random_matrix(&mut r, n, dx, 3.0), random_matrix(&mut r, n, dz, 3.0), random_matrix(&mut r, n, dz, 3.0));
        let l = lmir_estimator(&mut g, &store, &t, &pair).unwrap();
        let d = dim_estimator(&mut g, &store, &t, &pair.clone().exchanged()).unwrap();
        assert_eq!(g.value(&l).item().to_bits(), g.value(&d).item().to_bits());
        assert!(g.value(&l).item() < 0.0);
        let d0 = dim_estimator(&mut g, &store, &t, &pair).unwrap();
        assert!(g.value(&d0).item() < 0.0);
    }
}

#[test]
fn scores_are_row_wise() {
    let mut r = rng(4);
    let mut store = ParamStore::new();
    let t = discriminator(&mut store, 3, 2, 5, 4);
    let x = random_matrix(&mut r, 7, 3, 1.0);
    let z = random_matrix(&mut r, 7, 2, 1.0);
    let perm = [3, 0, 6, 1, 5, 2, 4];
    let mut g = Eager::new();
    let (xv, zv) = (g.constant(x.clone()), g.constant(z.clone()));
    let s = pair_scores(&mut g, &store, &t, &xv, &zv).unwrap();
    let (xp, zp) = (g.constant(x.gather_rows(&perm).unwrap()), g.constant(z.gather_rows(&perm).unwrap()));
    let sp = pair_scores(&mut g, &store, &t, &xp, &zp).unwrap();
    assert_eq!(g.value(&s).gather_rows(&perm).unwrap(), *g.value(&sp));
    let bad = g.constant(Matrix::zeros(7, 4));
    assert!(pair_scores(&mut g, &store, &t, &xv, &bad).is_err());
}

#[test]
fn estimator_gradients_match_finite_differences() {
    for est in [Estimator::Dim, Estimator::Lmir] {
        let mut worst: f64 = 0.0;
        for seed in 0..30 {
            let mut r = rng(100 + seed);
            let mut store = ParamStore::new();
            let t = discriminator(&mut store, 3, 4, 6, seed);
            let x = store.add("x", random_matrix(&mut r, 5, 3, 1.0));
            let s = store.add("sigma", random_matrix(&mut r, 5, 4, 1.0));
            let h = store.add("shuffled", random_matrix(&mut r, 5, 4, 1.0));
            let err = gradient_error(&store, |tape, st| {
                let pair = MiPair::new(tape.param(st, x), tape.param(st, s), tape.param(st, h), 0);
                est.apply(tape, st, &t, &pair)
            });
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "{est:?}: {worst:e}");
    }
}

#[test]
fn layer_average_gradient() {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    let a = store.add("a", random_matrix(&mut r, 1, 1, 1.0));
    let b = store.add("b", random_matrix(&mut r, 1, 1, 1.0));
    let err = gradient_error(&store, |t, s| {
        let (va, vb) = (t.param(s, a), t.param(s, b));
        let sq = t.mul(&va, &va)?;
        lmir_loss(t, &[sq, vb])
    });
    assert!(err < 1e-6);
}

#[test]
fn training_the_discriminator_raises_the_estimate() {
    let mut gains = 0.0;
    for seed in 0..5 {
        let mut r = rng(500 + seed);
        let n = 64;
        let x = random_matrix(&mut r, n, 2, 1.0);
        // shuffled pairs are a noisy function of x, sigma pairs are unrelated noise
        let shuffled = Matrix::from_fn(n, 2, |i, j| x.get(i, j) + 0.1 * r.random_range(-1.0..1.0));
        let sigma = random_matrix(&mut r, n, 2, 1.0);
        let mut store = ParamStore::new();
        let t = discriminator(&mut store, 2, 2, 16, seed);
        let evaluate = |store: &ParamStore| {
            let mut g = Eager::new();
            let pair = eager_pair(&mut g, x.clone(), sigma.clone(), shuffled.clone());
            let v = lmir_estimator(&mut g, store, &t, &pair).unwrap();
            g.value(&v).item()
        };
        let before = evaluate(&store);
        let mut adam = AdamState::new(&store);
        for _ in 0..200 {
            let mut tape = Tape::new();
            let pair = MiPair::new(
                tape.constant(x.clone()),
                tape.constant(sigma.clone()),
                tape.constant(shuffled.clone()),
                0,
            );
            let est = lmir_estimator(&mut tape, &store, &t, &pair).unwrap();
            let loss = tape.scale(&est, -1.0);
            let grads = tape.backward(loss).unwrap();
            let grads = grads.for_store(&store);
            adam_step(&mut store, &grads, &mut adam, 0.01).unwrap();
        }
        gains += evaluate(&store) - before;
    }
    assert!(gains / 5.0 >= 0.0, "mean gain {}", gains / 5.0);
}
