use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Gradients, ParamStore};

/// Worst relative error per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub per_param: Vec<(String, f64)>,
}

/// `|a - n| / max(|a|, |n|)`. When both magnitudes are below `1e-10` the
/// absolute difference is returned instead, so exact zeros compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Compares `analytic` against central differences `(f(θ+h) − f(θ−h)) / 2h`
/// for every scalar of every parameter. The store is restored afterwards.
/// Panics unless `h > 0`.
pub fn finite_diff_check<F>(store: &mut ParamStore, analytic: &Gradients, h: f64, mut loss: F) -> GradCheck
where
    F: FnMut(&ParamStore) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut per_param = Vec::new();
    let mut max_relative_error = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let mut worst = 0.0f64;
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + h;
            let up = loss(store);
            store.get_mut(id).data_mut()[k] = orig - h;
            let down = loss(store);
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic.get(id).data()[k], numeric));
        }
        max_relative_error = max_relative_error.max(worst);
        per_param.push((store.name(id).to_string(), worst));
    }
    GradCheck { max_relative_error, per_param }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};
    use alloc::vec;

    #[test]
    fn linear_loss_is_exact() {
        let mut s = ParamStore::new();
        let w = s.add("w", Tensor::from_vec(1, 3, vec![0.5, -1.0, 2.0]));
        let x = Tensor::from_vec(3, 1, vec![1.5, 0.25, -3.0]);
        let f = |s: &ParamStore| {
            let mut t = Tape::new(s);
            let v = t.param(w);
            let c = t.constant(x.clone());
            let y = t.matmul(v, c);
            (t.value(y).data()[0], t.backward(y))
        };
        let (_, g) = f(&s);
        let check = finite_diff_check(&mut s, &g, 1e-3, |s| f(s).0);
        // central differences are exact for a linear loss up to cancellation, about eps·|f|/h
        assert!(check.max_relative_error < 1e-9, "{check:?}");
        assert_eq!(s.get(w).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    #[should_panic(expected = "must be positive")]
    fn zero_step_rejected() {
        let mut s = ParamStore::new();
        let g = Gradients::zeros_like(&s);
        finite_diff_check(&mut s, &g, 0.0, |_| 0.0);
    }
}
