//! Central finite-difference validation of analytic gradients.

use crate::error::{Error, Result};

use super::{no_grad, Tensor};

/// Compare analytic gradients of `f` against central finite differences.
///
/// `f` must build a scalar loss from the given parameter tensors and be
/// deterministic (fix any noise tensors outside the closure). Returns the
/// maximum over all parameter entries of
/// `|analytic - central| / max(|analytic|, |central|, 1e-12)`.
pub fn check_gradient<F>(f: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    // Analytic pass on grad-enabled copies of the parameters.
    let grad_params: Vec<Tensor> = params
        .iter()
        .map(|p| Tensor::from_vec(p.to_vec(), p.shape()).map(Tensor::param))
        .collect::<Result<_>>()?;
    let loss = f(&grad_params)?;
    if loss.numel() != 1 {
        return Err(Error::Dimension(format!(
            "check_gradient: f returned shape {:?}, expected scalar",
            loss.shape()
        )));
    }
    if !loss.item()?.is_finite() {
        return Err(Error::Numeric("check_gradient: non-finite loss".into()));
    }
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = grad_params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    // Central differences, one parameter entry at a time.
    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let base = p.to_vec();
        for j in 0..base.len() {
            let eval = |delta: f64| -> Result<f64> {
                let mut perturbed: Vec<Tensor> = params.to_vec();
                let mut v = base.clone();
                v[j] += delta;
                perturbed[pi] = Tensor::from_vec(v, p.shape())?;
                let out = no_grad(|| f(&perturbed))?;
                let val = out.item()?;
                if !val.is_finite() {
                    return Err(Error::Numeric(format!(
                        "check_gradient: non-finite f at probe (param {pi}, entry {j})"
                    )));
                }
                Ok(val)
            };
            let plus = eval(step)?;
            let minus = eval(-step)?;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[pi][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
