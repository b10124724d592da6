use super::AdamConfig;
use crate::error::{Error, Result};
use crate::tensor::{GradientMap, ParamStore, Real, Tensor};

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        OptimizerState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected ADAM update. Every parameter must have a gradient.
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &GradientMap<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "optimizer tracks {} tensors, model has {}",
            state.m.len(),
            params.len()
        )));
    }
    for id in params.ids() {
        let g = grads
            .get(id)
            .ok_or_else(|| Error::Contract(format!("missing gradient for {}", params.name(id))))?;
        if g.shape() != params.get(id).shape() {
            return Err(Error::Contract(format!(
                "gradient for {} has shape {:?}, expected {:?}",
                params.name(id),
                g.shape(),
                params.get(id).shape()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for id in params.ids() {
        let g = grads.get(id).expect("checked above").data();
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        for (((p, &gi), mi), vi) in params.get_mut(id).data_mut().iter_mut().zip(g).zip(m).zip(v) {
            let gi = gi.f64();
            let m_new = cfg.beta1 * mi.f64() + (1.0 - cfg.beta1) * gi;
            let v_new = cfg.beta2 * vi.f64() + (1.0 - cfg.beta2) * gi * gi;
            *mi = T::of(m_new);
            *vi = T::of(v_new);
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + cfg.eps);
            *p = T::of(p.f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ParamId;

    fn single(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w));
        s
    }

    fn grad(g: f64) -> GradientMap<f64> {
        let mut m = GradientMap::new();
        m.accumulate(ParamId(0), Tensor::scalar(g));
        m
    }

    #[test]
    fn zero_gradient_only_counts_the_step() {
        let mut p = single(0.7);
        let mut st = OptimizerState::new(&p);
        adam_step(&mut p, &grad(0.0), &mut st, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p.get(ParamId(0)).item(), 0.7);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(0.0);
        let mut st = OptimizerState::new(&p);
        adam_step(&mut p, &grad(1.0), &mut st, 1e-3, &AdamConfig::default()).unwrap();
        assert!((p.get(ParamId(0)).item() + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn missing_gradient_is_named() {
        let mut p = single(0.0);
        p.add("other", Tensor::scalar(1.0));
        let mut st = OptimizerState::new(&p);
        let err = adam_step(&mut p, &grad(1.0), &mut st, 1e-3, &AdamConfig::default()).unwrap_err();
        assert_eq!(err.kind(), "contract");
        assert!(err.to_string().contains("other"));
        assert_eq!(st.step, 0);
    }
}
