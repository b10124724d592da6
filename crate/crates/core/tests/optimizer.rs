use msgnn::tensor::{GradientMap, ParamId, ParamStore, Tensor};
use msgnn::train::{adam_step, AdamConfig, OptimizerState};

/// Scalar ADAM written out longhand.
fn reference(mut w: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v) = (0.0, 0.0);
    let mut out = Vec::new();
    for t in 1..=steps as i32 {
        let g = 2.0 * w;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(t));
        let vhat = v / (1.0 - b2.powi(t));
        w -= lr * mhat / (vhat.sqrt() + eps);
        out.push(w);
    }
    out
}

fn trajectory(w0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", Tensor::scalar(w0));
    let mut state = OptimizerState::new(&store);
    (0..steps)
        .map(|_| {
            let mut grads = GradientMap::new();
            grads.accumulate(id, Tensor::scalar(2.0 * store.get(id).item()));
            adam_step(&mut store, &grads, &mut state, lr, &AdamConfig::default()).unwrap();
            store.get(ParamId(0)).item()
        })
        .collect()
}

#[test]
fn matches_longhand_adam_on_a_parabola() {
    for (w0, lr) in [(1.5, 0.1), (-0.3, 1e-3), (4.0, 0.5)] {
        for (got, want) in trajectory(w0, lr, 10).iter().zip(reference(w0, lr, 10)) {
            assert!((got - want).abs() < 1e-7, "w0={w0} lr={lr}: {got} vs {want}");
        }
    }
}

#[test]
fn mirrored_starts_give_mirrored_paths() {
    let up = trajectory(0.8, 0.05, 10);
    let down = trajectory(-0.8, 0.05, 10);
    for (a, b) in up.iter().zip(&down) {
        assert_eq!(*a, -*b);
    }
    assert!(up[9].abs() < 0.8);
}
