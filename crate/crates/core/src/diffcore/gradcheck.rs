//! Central finite-difference gradient checking.

use crate::error::Result;

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Denominator floor for the relative error so that exact zeros compare cleanly.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Gradients of the scalar built by `f` at `params`, via `Graph::backward`.
pub fn analytic_gradients<F>(f: &F, params: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.wrt(v, p))
        .collect())
}

/// Max relative error between `analytic` and central differences of `f`.
pub fn compare_gradients<F>(f: &F, params: &[Tensor], analytic: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..work[pi].len() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let up = evaluate(f, &work)?;
            work[pi].data_mut()[j] = orig - eps;
            let down = evaluate(f, &work)?;
            work[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[j], numeric));
        }
    }
    Ok(worst)
}

/// Max relative error of backward-mode gradients against central differences.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(&f, params)?;
    compare_gradients(&f, params, &analytic, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let b = Tensor::vector(vec![0.25]);
        let err = grad_check(
            |g, p| {
                let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
                let y = g.dense(p[0], p[1], x)?;
                Ok(g.sum(y))
            },
            &[w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let f = |g: &mut Graph, p: &[Var]| {
            let s = g.sigmoid(p[0]);
            Ok(g.sum(s))
        };
        let x = vec![Tensor::vector(vec![0.3, -0.7, 1.1])];
        let mut grads = analytic_gradients(&f, &x).unwrap();
        assert!(compare_gradients(&f, &x, &grads, 1e-5).unwrap() < 1e-6);
        grads[0].data_mut()[1] *= 1.5;
        assert!(compare_gradients(&f, &x, &grads, 1e-5).unwrap() > 1e-2);
    }
}
