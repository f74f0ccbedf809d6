use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

/// Moment estimates for every tensor of one [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        Self::with_constants(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(store: &ParamStore, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Matrix> = store
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        AdamState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step(params: &mut ParamStore, grads: &[Matrix], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::Dimension {
            op: "adam_step",
            left: (params.len(), 0),
            right: (grads.len(), state.first_moment.len()),
        });
    }
    for ((id, g), m) in params.ids().zip(grads).zip(&state.first_moment) {
        let p = params.get(id);
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (k, id) in params.ids().enumerate().collect::<Vec<_>>() {
        let g = grads[k].data();
        let m = state.first_moment[k].data_mut();
        let v = state.second_moment[k].data_mut();
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Cosine annealing with warm restarts every `t_max` steps.
pub fn cosine_anneal_lr(step: u64, base_lr: f64, t_max: u64, min_lr: f64) -> f64 {
    let t_max = t_max.max(1);
    let phase = (step % t_max) as f64 / t_max as f64;
    min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (std::f64::consts::PI * phase).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: Matrix) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", value);
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let init = Matrix::from_rows(&[[1.0, -2.0, 3.0]]);
        let mut s = store_with(init.clone());
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &[Matrix::zeros(1, 3)], &mut st, 1e-3).unwrap();
        assert_eq!(s.get(s.find("w").unwrap()), &init);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = store_with(Matrix::zeros(1, 3));
        let mut st = AdamState::new(&s);
        let g = Matrix::from_rows(&[[0.3, -7.0, 1e-3]]);
        adam_step(&mut s, &[g], &mut st, 1e-3).unwrap();
        let p = s.get(s.find("w").unwrap());
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for (v, sign) in p.data().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - sign * 1e-3).abs() < 1e-3 * 1e-4, "{v}");
        }
    }

    #[test]
    fn constant_gradient_drives_monotonically() {
        let mut s = store_with(Matrix::zeros(1, 1));
        let mut st = AdamState::new(&s);
        let mut prev = 0.0;
        for _ in 0..50 {
            adam_step(&mut s, &[Matrix::scalar(2.0)], &mut st, 1e-2).unwrap();
            let now = s.get(s.find("w").unwrap()).item();
            assert!(now < prev);
            prev = now;
        }
        assert_eq!(st.step, 50);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut s = store_with(Matrix::zeros(2, 2));
        let mut st = AdamState::new(&s);
        assert!(adam_step(&mut s, &[Matrix::zeros(1, 2)], &mut st, 1e-3).is_err());
        assert_eq!(st.step, 0);
    }

    #[test]
    fn cosine_schedule_landmarks() {
        assert_eq!(cosine_anneal_lr(0, 1e-3, 32, 0.0), 1e-3);
        assert!((cosine_anneal_lr(16, 1e-3, 32, 1e-5) - (1e-3 + 1e-5) / 2.0).abs() < 1e-18);
        assert_eq!(cosine_anneal_lr(32, 1e-3, 32, 0.0), 1e-3);
        assert!(cosine_anneal_lr(31, 1e-3, 32, 0.0) < 1e-5);
    }
}
