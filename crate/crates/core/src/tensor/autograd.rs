//! Reverse-mode differentiation over a dynamic graph.
//!
//! Each op output may carry a [`GradFn`]: the parent handles plus a
//! vector-Jacobian closure. `backward` walks the graph once in reverse
//! topological order, accumulates gradients into every reachable tensor
//! that requires them, and frees each node's closure as it goes.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

use super::Tensor;

pub(crate) struct GradFn {
    #[allow(dead_code)]
    pub(crate) op: &'static str,
    pub(crate) parents: Vec<Tensor>,
    pub(crate) vjp: Box<dyn Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>>>,
}

impl GradFn {
    pub(crate) fn new(
        op: &'static str,
        parents: Vec<Tensor>,
        vjp: Box<dyn Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>>>,
    ) -> Self {
        GradFn { op, parents, vjp }
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

struct GradModeGuard {
    prev: bool,
}

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.prev));
    }
}

/// Run `f` without recording the computation graph. Outputs of operations
/// inside the closure are plain leaves.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    let _guard = GradModeGuard {
        prev: GRAD_ENABLED.with(|c| c.replace(false)),
    };
    f()
}

impl Tensor {
    /// Backpropagate from a scalar loss. Gradients accumulate (add) into
    /// the `grad` buffers of all reachable tensors that require them;
    /// repeated calls on freshly built graphs keep accumulating until
    /// `zero_grad`. The traversed graph is freed as a side effect.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Dimension(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Post-order DFS; reversing yields a valid topological order.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = t.inner.grad_fn.borrow().as_ref() {
                for p in &gf.parents {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let g = match pending.remove(&t.id()) {
                Some(g) => g,
                None => continue,
            };
            t.accumulate_grad(&g);
            let grad_fn = t.inner.grad_fn.borrow_mut().take();
            if let Some(gf) = grad_fn {
                let parent_grads = (gf.vjp)(t.data(), &g);
                debug_assert_eq!(parent_grads.len(), gf.parents.len());
                for (p, pg) in gf.parents.iter().zip(parent_grads) {
                    if !p.requires_grad() {
                        continue;
                    }
                    if let Some(pg) = pg {
                        debug_assert_eq!(pg.len(), p.numel());
                        pending
                            .entry(p.id())
                            .and_modify(|buf| {
                                for (a, b) in buf.iter_mut().zip(&pg) {
                                    *a += b;
                                }
                            })
                            .or_insert(pg);
                    }
                }
            }
        }
        Ok(())
    }
}
