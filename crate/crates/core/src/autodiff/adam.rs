use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamStore, Real, Tensor};

/// Adam hyper-parameters. Weight decay is decoupled: it shrinks the weights
/// directly (`p ← p − lr·λ·p`) instead of being added to the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), AutodiffError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(AutodiffError::InvalidArgument(format!(
            "{} gradients / {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (slot, g) in grads.iter().enumerate() {
        if g.shape() != params.get(slot).shape() {
            return Err(AutodiffError::Shape {
                op: "adam_step",
                detail: format!("gradient {:?} for {} {:?}", g.shape(), params.name(slot), params.get(slot).shape()),
            });
        }
        if !g.is_finite() {
            return Err(AutodiffError::NonFiniteGradient {
                param: params.name(slot).to_string(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::c(cfg.beta1), T::c(cfg.beta2));
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let lr_t = T::c(lr);
    let eps = T::c(cfg.eps);
    let decay = T::one() - lr_t * T::c(cfg.weight_decay);
    for (slot, g) in grads.iter().enumerate() {
        let m = state.m[slot].data_mut();
        let v = state.v[slot].data_mut();
        let p = params.get_mut(slot).data_mut();
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(x)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar_store(1.25);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &[Tensor::scalar(0.0)], &mut st, 1e-3, &cfg).unwrap();
        assert_eq!(p.get(0).item(), 1.25);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [0.3, -7.0] {
            let mut p = scalar_store(0.0);
            let mut st = AdamState::new(&p);
            let cfg = AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            };
            adam_step(&mut p, &[Tensor::scalar(g)], &mut st, 0.01, &cfg).unwrap();
            // m̂ = g, v̂ = g², step = lr·g/(|g| + ε)
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p.get(0).item() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn decoupled_decay_shrinks_geometrically() {
        let mut p = scalar_store(2.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig {
            weight_decay: 5e-4,
            ..AdamConfig::default()
        };
        for k in 1..=5 {
            adam_step(&mut p, &[Tensor::scalar(0.0)], &mut st, 0.1, &cfg).unwrap();
            let expected = 2.0 * (1.0 - 0.1 * 5e-4f64).powi(k);
            assert!((p.get(0).item() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_hand_rolled_trace() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let grad_at = |x: f64| 2.0 * (x - 3.0) + (x * 1.7).sin();
        let mut p = scalar_store(0.5);
        let mut st = AdamState::new(&p);
        let (mut x, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=20 {
            let g = grad_at(x);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-8);

            let g_impl = grad_at(p.get(0).item());
            adam_step(&mut p, &[Tensor::scalar(g_impl)], &mut st, 0.05, &cfg).unwrap();
            assert!((p.get(0).item() - x).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn non_finite_gradient_aborts_and_names_parameter() {
        let mut p = scalar_store(1.0);
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &[Tensor::scalar(f64::NAN)], &mut st, 0.1, &AdamConfig::default()).unwrap_err();
        assert_eq!(err, AutodiffError::NonFiniteGradient { param: "x".into() });
        assert_eq!(p.get(0).item(), 1.0);
        assert_eq!(st.step, 0);
    }
}
