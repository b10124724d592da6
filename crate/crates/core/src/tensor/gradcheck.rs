//! Central finite-difference comparison against tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamId, Tensor, Var};
use crate::error::Result;

/// Smallest denominator of the relative error. Gradients that vanish
/// analytically (a bias feeding a softmax, say) leave only rounding noise
/// of order 1e-10 in the central difference, which this keeps from reading
/// as a relative error of 1.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

/// Elements checked per parameter tensor; larger tensors are subsampled.
pub const MAX_CHECKED_ELEMENTS: usize = 200;

fn evaluate<F>(f: &F, params: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().enumerate().map(|(i, p)| g.param(ParamId(i), p)).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Worst relative error `|a - n| / max(|a|, |n|, 1e-6)` between analytic
/// gradients of the scalar `f` and central differences with step `eps`.
///
/// Parameter `i` is bound to `ParamId(i)`.
pub fn finite_diff_check<F>(f: F, params: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    Ok(finite_diff_report(f, params, eps)?.into_iter().fold(0.0, f64::max))
}

/// Per-parameter worst relative error; see [`finite_diff_check`].
pub fn finite_diff_report<F>(f: F, params: &[Tensor<f64>], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().enumerate().map(|(i, p)| g.param(ParamId(i), p)).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let mut report = Vec::with_capacity(params.len());
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let n = p.numel();
        let picks: Vec<usize> = if n <= MAX_CHECKED_ELEMENTS {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, MAX_CHECKED_ELEMENTS).into_vec();
            v.sort_unstable();
            v
        };
        let mut worst: f64 = 0.0;
        for e in picks {
            let analytic = grads.get(ParamId(pi)).map_or(0.0, |t| t.data()[e]);
            let orig = p.data()[e];
            work[pi].data_mut()[e] = orig + eps;
            let up = evaluate(&f, &work)?;
            work[pi].data_mut()[e] = orig - eps;
            let down = evaluate(&f, &work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
        report.push(worst);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_matches() {
        let x = Tensor::new([2], vec![1.0, 2.0]).unwrap();
        let err = finite_diff_check(
            |g, v| {
                let sq = g.mul(v[0], v[0])?;
                Ok(g.sum(sq))
            },
            &[x],
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = finite_diff_check(|g, _| Ok(g.constant(Tensor::scalar(5.0))), &[x], 1e-3).unwrap();
        assert_eq!(err, 0.0);
    }
}
