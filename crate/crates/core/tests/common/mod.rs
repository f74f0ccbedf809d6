//! Test-only oracles shared by the integration suites. Nothing here calls the
//! code paths it is used to check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shufflepoint::numerics::{Graph, Matrix, ParamStore, Tape, Var};
use shufflepoint::Result;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Central differences of a scalar function of every entry in `store`.
pub fn central_differences(store: &ParamStore, f: impl Fn(&ParamStore) -> f64) -> Vec<Matrix> {
    let mut work = store.clone();
    let mut out = Vec::new();
    for id in store.ids() {
        let (r, c) = store.get(id).shape();
        let mut g = Matrix::zeros(r, c);
        for k in 0..r * c {
            let orig = work.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let up = f(&work);
            work.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let down = f(&work);
            work.get_mut(id).data_mut()[k] = orig;
            g.data_mut()[k] = (up - down) / (2.0 * FD_STEP);
        }
        out.push(g);
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over all entries of all tensors.
pub fn relative_error(a: &[Matrix], b: &[Matrix]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.shape(), y.shape());
        for (u, v) in x.data().iter().zip(y.data()) {
            diff += (u - v) * (u - v);
            na += u * u;
            nb += v * v;
        }
    }
    let denom = na.sqrt().max(nb.sqrt());
    if denom < 1e-12 {
        diff.sqrt()
    } else {
        diff.sqrt() / denom
    }
}

/// Compares tape gradients of `build`'s scalar output against central differences.
pub fn gradient_error(store: &ParamStore, build: impl Fn(&mut Tape, &ParamStore) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let loss = build(&mut tape, store).expect("forward");
    let grads = tape.backward(loss).expect("backward");
    let analytic = grads.for_store(store);
    let numeric = central_differences(store, |s| {
        let mut t = Tape::new();
        let l = build(&mut t, s).expect("forward");
        t.value(&l).item()
    });
    relative_error(&analytic, &numeric)
}

pub fn uniform_cloud(rng: &mut impl Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
        .collect()
}

fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

/// Greedy max-min selection recomputed from scratch at every step.
pub fn brute_force_fps(pts: &[[f64; 3]], k: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < k {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..pts.len() {
            if chosen.contains(&i) {
                continue;
            }
            let m = chosen.iter().map(|&c| d2(&pts[i], &pts[c])).fold(f64::INFINITY, f64::min);
            if m > best.0 {
                best = (m, i);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

pub fn brute_force_cover(pts: &[[f64; 3]], sample: &[usize]) -> f64 {
    pts.iter()
        .map(|p| sample.iter().map(|&s| d2(p, &pts[s])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Smallest covering radius over every k-subset.
pub fn optimal_cover(pts: &[[f64; 3]], k: usize) -> f64 {
    fn rec(pts: &[[f64; 3]], k: usize, from: usize, cur: &mut Vec<usize>, best: &mut f64) {
        if cur.len() == k {
            *best = best.min(brute_force_cover(pts, cur));
            return;
        }
        for i in from..pts.len() {
            cur.push(i);
            rec(pts, k, i + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(pts, k, 0, &mut Vec::new(), &mut best);
    best
}

pub fn brute_force_knn(q: &[f64; 3], base: &[[f64; 3]], k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..base.len()).collect();
    all.sort_by(|&a, &b| d2(q, &base[a]).partial_cmp(&d2(q, &base[b])).unwrap().then(a.cmp(&b)));
    all.truncate(k);
    all
}

pub fn brute_force_ball(pts: &[[f64; 3]], center: usize, radius: f64, max: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..pts.len())
        .filter(|&i| d2(&pts[center], &pts[i]) <= radius * radius)
        .take(max)
        .collect();
    if v.is_empty() {
        v.push(center);
    }
    while v.len() < max {
        v.push(v[0]);
    }
    v
}
