//! Named traversal of trainable parameters.

use crate::tensor::Tensor;

/// Implemented by every layer and network that owns trainable tensors.
/// Names are dot-separated paths ("encoder.lift.weight").
pub trait HasParams {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));
}

pub fn collect_params<M: HasParams + ?Sized>(m: &M) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    m.visit_params("", &mut |name, t| out.push((name.to_string(), t.clone())));
    out
}

pub fn param_count<M: HasParams + ?Sized>(m: &M) -> usize {
    let mut n = 0;
    m.visit_params("", &mut |_, t| n += t.numel());
    n
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Zero the gradient buffers of every parameter.
pub fn zero_grads<M: HasParams + ?Sized>(m: &M) {
    m.visit_params("", &mut |_, t| t.zero_grad());
}
