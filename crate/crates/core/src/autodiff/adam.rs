use alloc::vec::Vec;

use thiserror::Error;

use super::{Gradients, ParamStore, Tensor};

/// Moment estimates for every tensor of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        Self::with_hyper(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0, beta1, beta2, eps }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("non-finite gradient for parameter `{0}`")]
pub struct NonFiniteGradient(pub alloc::string::String);

/// One bias-corrected Adam update. Nothing is modified when any gradient is
/// non-finite.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NonFiniteGradient> {
    for id in store.ids() {
        if !grads.get(id).data().iter().all(|g| g.is_finite()) {
            return Err(NonFiniteGradient(store.name(id).into()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(state.beta1, t as f64);
    let c2 = 1.0 - libm::pow(state.beta2, t as f64);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let g = grads.get(id).data();
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        let p = store.get_mut(id).data_mut();
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_store(v: f64) -> (ParamStore, super::super::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::from_vec(1, 1, vec![v]));
        (s, id)
    }

    #[test]
    fn zero_gradient_is_noop() {
        let (mut s, id) = scalar_store(0.3);
        let mut st = AdamState::new(&s);
        let g = Gradients::zeros_like(&s);
        adam_step(&mut s, &g, &mut st, 0.01).unwrap();
        assert_eq!(s.get(id).data()[0], 0.3);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for grad in [2.5, -0.003] {
            let (mut s, id) = scalar_store(1.0);
            let mut st = AdamState::new(&s);
            let mut g = Gradients::zeros_like(&s);
            g.get_mut(id).data_mut()[0] = grad;
            adam_step(&mut s, &g, &mut st, 0.01).unwrap();
            let delta = s.get(id).data()[0] - 1.0;
            // |g| / (|g| + eps) differs from 1 by at most eps / |g|
            let expected = -0.01 * grad.signum();
            assert!((delta - expected).abs() <= 0.01 * 1e-8 / grad.abs() + 1e-15, "{delta}");
        }
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        let (mut s, id) = scalar_store(0.5);
        let mut st = AdamState::new(&s);
        let grads = [0.7, -0.2];
        for gv in grads {
            let mut g = Gradients::zeros_like(&s);
            g.get_mut(id).data_mut()[0] = gv;
            adam_step(&mut s, &g, &mut st, 0.01).unwrap();
        }
        // hand-rolled reference
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.01f64);
        let (mut w, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for (t, gv) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * gv;
            v = b2 * v + (1.0 - b2) * gv * gv;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((s.get(id).data()[0] - w).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected_without_update() {
        let (mut s, id) = scalar_store(0.5);
        let mut st = AdamState::new(&s);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(id).data_mut()[0] = f64::NAN;
        assert_eq!(adam_step(&mut s, &g, &mut st, 0.01), Err(NonFiniteGradient("w".into())));
        assert_eq!(s.get(id).data()[0], 0.5);
        assert_eq!(st.step, 0);
    }
}
