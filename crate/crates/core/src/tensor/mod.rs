//! Dense 64-bit tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable once produced by an operation; the only interior
//! mutation is gradient accumulation during [`Tensor::backward`]. Every
//! operation validates that its output is finite and fails with a numeric
//! error otherwise, so NaN/Inf never propagates silently.

mod autograd;
mod contract;
mod gradcheck;

pub use autograd::{grad_enabled, no_grad};
pub use gradcheck::check_gradient;

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use autograd::GradFn;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    grad_fn: RefCell<Option<GradFn>>,
}

/// Cheap-to-clone handle to an immutable n-dimensional array of `f64`.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={})",
            self.shape(),
            self.requires_grad()
        )
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Walk every multi-index of `shape`, calling `f(out_linear, in_offset)`
/// where `in_offset` advances by `in_strides` (entries may be 0 to
/// broadcast). `out_linear` is the row-major position in `shape`.
pub(crate) fn for_each_offset(shape: &[usize], in_strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let n: usize = shape.iter().product();
    if n == 0 {
        return;
    }
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut in_off = 0usize;
    for out in 0..n {
        f(out, in_off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            in_off += in_strides[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            in_off -= in_strides[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
}

impl Tensor {
    // ── Constructors ────────────────────────────────────────────────

    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Dimension(format!(
                "from_vec: {} values do not fill shape {:?} ({} elements)",
                data.len(),
                shape,
                numel
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("from_vec: non-finite input value".into()));
        }
        Ok(Self::new_leaf(data, shape.to_vec(), false))
    }

    /// Build a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor::from_vec(data, shape)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Self::new_leaf(vec![0.0; n], shape.to_vec(), false)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Self::new_leaf(vec![value; n], shape.to_vec(), false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Self::new_leaf(vec![value], Vec::new(), false)
    }

    fn new_leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        Self::new_leaf_shared(Rc::new(data), shape, requires_grad)
    }

    fn new_leaf_shared(data: Rc<Vec<f64>>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
                grad_fn: RefCell::new(None),
            }),
        }
    }

    /// Mark a leaf tensor as a trainable parameter. Gradients accumulate
    /// into its `grad` buffer on [`Tensor::backward`].
    pub fn param(self) -> Tensor {
        Self::new_leaf_shared(Rc::clone(&self.inner.data), self.inner.shape.clone(), true)
    }

    /// Output of an operation: validates finiteness and records the
    /// backward closure when gradients are enabled and needed.
    pub(crate) fn from_op<F>(
        data: Vec<f64>,
        shape: Vec<usize>,
        op: &'static str,
        parents: Vec<Tensor>,
        vjp: F,
    ) -> Result<Tensor>
    where
        F: Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>> + 'static,
    {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value produced by `{op}`")));
        }
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        let t = Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: Rc::new(data),
                requires_grad: track,
                grad: RefCell::new(None),
                grad_fn: RefCell::new(if track {
                    Some(GradFn::new(op, parents, Box::new(vjp)))
                } else {
                    None
                }),
            }),
        };
        Ok(t)
    }

    // ── Accessors ───────────────────────────────────────────────────

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.as_ref().clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.grad_fn.borrow().is_none()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::Dimension(format!(
                "item: tensor has shape {:?}, not a scalar",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let strides = strides_of(self.shape());
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.inner.data[off]
    }

    /// Clone of the accumulated gradient buffer, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// New leaf sharing this tensor's values, cut off from the graph.
    pub fn detach(&self) -> Tensor {
        Self::new_leaf_shared(Rc::clone(&self.inner.data), self.inner.shape.clone(), false)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    // ── Elementwise arithmetic ──────────────────────────────────────

    fn check_same_shape(&self, rhs: &Tensor, op: &str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.check_same_shape(rhs, "add")?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "add",
            vec![self.clone(), rhs.clone()],
            move |_, g| vec![Some(g.to_vec()), Some(g.to_vec())],
        )
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.check_same_shape(rhs, "sub")?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "sub",
            vec![self.clone(), rhs.clone()],
            move |_, g| {
                vec![
                    Some(g.to_vec()),
                    Some(g.iter().map(|v| -v).collect()),
                ]
            },
        )
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.check_same_shape(rhs, "mul")?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(a, b)| a * b)
            .collect();
        let a = self.clone();
        let b = rhs.clone();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "mul",
            vec![self.clone(), rhs.clone()],
            move |_, g| {
                vec![
                    Some(g.iter().zip(b.data()).map(|(g, y)| g * y).collect()),
                    Some(g.iter().zip(a.data()).map(|(g, x)| g * x).collect()),
                ]
            },
        )
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        self.check_same_shape(rhs, "div")?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(a, b)| a / b)
            .collect();
        let a = self.clone();
        let b = rhs.clone();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "div",
            vec![self.clone(), rhs.clone()],
            move |_, g| {
                let ga = g.iter().zip(b.data()).map(|(g, y)| g / y).collect();
                let gb = g
                    .iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(g, (x, y))| -g * x / (y * y))
                    .collect();
                vec![Some(ga), Some(gb)]
            },
        )
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "scale",
            vec![self.clone()],
            move |_, g| vec![Some(g.iter().map(|v| v * c).collect())],
        )
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v + c).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "add_scalar",
            vec![self.clone()],
            move |_, g| vec![Some(g.to_vec())],
        )
    }

    fn unary_op(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        // derivative as a function of (input, output)
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&v| f(v)).collect();
        let x = self.clone();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            op,
            vec![self.clone()],
            move |out, g| {
                let gi: Vec<f64> = g
                    .iter()
                    .zip(x.data().iter().zip(out))
                    .map(|(g, (&xi, &yi))| g * df(xi, yi))
                    .collect();
                vec![Some(gi)]
            },
        )
    }

    pub fn square(&self) -> Result<Tensor> {
        self.unary_op("square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary_op("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary_op("exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor> {
        self.unary_op("ln", f64::ln, |x, _| 1.0 / x)
    }

    /// GELU in its exact error-function form.
    pub fn gelu(&self) -> Result<Tensor> {
        const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;
        const INV_SQRT_2PI: f64 = 0.3989422804014327;
        self.unary_op(
            "gelu",
            |x| 0.5 * x * (1.0 + libm::erf(x * INV_SQRT2)),
            |x, _| {
                let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT2));
                let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
                cdf + x * pdf
            },
        )
    }

    /// Clamp values into `[lo, hi]`; gradient passes through inside the
    /// closed interval and is zero outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v.clamp(lo, hi)).collect();
        let x = self.clone();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "clamp",
            vec![self.clone()],
            move |_, g| {
                vec![Some(
                    g.iter()
                        .zip(x.data())
                        .map(|(g, &v)| if v >= lo && v <= hi { *g } else { 0.0 })
                        .collect(),
                )]
            },
        )
    }

    // ── Reductions ──────────────────────────────────────────────────

    pub fn sum_all(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![s], Vec::new(), "sum_all", vec![self.clone()], move |_, g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        let n = self.numel() as f64;
        self.sum_all()?.scale(1.0 / n)
    }

    /// Sum over the given axes. With `keepdim` the reduced axes stay as
    /// extent-1 dimensions.
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        let rank = self.rank();
        for &a in axes {
            if a >= rank {
                return Err(Error::Dimension(format!(
                    "sum_axes: axis {a} out of range for rank {rank}"
                )));
            }
        }
        let reduced: Vec<bool> = (0..rank).map(|a| axes.contains(&a)).collect();
        let kept_shape: Vec<usize> = self
            .shape()
            .iter()
            .enumerate()
            .map(|(a, &d)| if reduced[a] { 1 } else { d })
            .collect();
        let out_strides_kept = strides_of(&kept_shape);
        // Strides into the kept-dim output while iterating the full input.
        let iter_strides: Vec<usize> = (0..rank)
            .map(|a| if reduced[a] { 0 } else { out_strides_kept[a] })
            .collect();
        let out_numel: usize = kept_shape.iter().product();
        let mut data = vec![0.0; out_numel];
        for_each_offset(self.shape(), &iter_strides, |i, o| {
            data[o] += self.inner.data[i];
        });
        let out_shape: Vec<usize> = if keepdim {
            kept_shape.clone()
        } else {
            self.shape()
                .iter()
                .enumerate()
                .filter(|(a, _)| !reduced[*a])
                .map(|(_, &d)| d)
                .collect()
        };
        let in_shape = self.shape().to_vec();
        Tensor::from_op(data, out_shape, "sum_axes", vec![self.clone()], move |_, g| {
            let mut gi = vec![0.0; in_shape.iter().product()];
            for_each_offset(&in_shape, &iter_strides, |i, o| {
                gi[i] = g[o];
            });
            vec![Some(gi)]
        })
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_axes(axes, keepdim)?.scale(1.0 / count as f64)
    }

    // ── Shape manipulation ──────────────────────────────────────────

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::Dimension(format!(
                "reshape: cannot view {:?} as {:?}",
                self.shape(),
                shape
            )));
        }
        let track = grad_enabled() && self.requires_grad();
        let out = Self::new_leaf_shared(Rc::clone(&self.inner.data), shape.to_vec(), track);
        if track {
            *out.inner.grad_fn.borrow_mut() = Some(GradFn::new(
                "reshape",
                vec![self.clone()],
                Box::new(move |_, g| vec![Some(g.to_vec())]),
            ));
        }
        Ok(out)
    }

    pub fn unsqueeze(&self, axis: usize) -> Result<Tensor> {
        let mut shape = self.shape().to_vec();
        if axis > shape.len() {
            return Err(Error::Dimension(format!(
                "unsqueeze: axis {axis} out of range for rank {}",
                shape.len()
            )));
        }
        shape.insert(axis, 1);
        self.reshape(&shape)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        if perm.len() != rank {
            return Err(Error::Dimension(format!(
                "permute: {} axes given for rank {rank}",
                perm.len()
            )));
        }
        let mut seen = vec![false; rank];
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(Error::Dimension(format!("permute: invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        let in_strides = strides_of(self.shape());
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let gather: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut data = vec![0.0; self.numel()];
        for_each_offset(&out_shape, &gather, |o, i| {
            data[o] = self.inner.data[i];
        });
        let out_shape_c = out_shape.clone();
        let numel = self.numel();
        Tensor::from_op(data, out_shape, "permute", vec![self.clone()], move |_, g| {
            let mut gi = vec![0.0; numel];
            for_each_offset(&out_shape_c, &gather, |o, i| {
                gi[i] = g[o];
            });
            vec![Some(gi)]
        })
    }

    /// Broadcast extent-1 axes up to `target`. Rank must match.
    pub fn expand(&self, target: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        if target.len() != rank {
            return Err(Error::Dimension(format!(
                "expand: target rank {} != tensor rank {rank}",
                target.len()
            )));
        }
        let in_strides = strides_of(self.shape());
        let mut gather = Vec::with_capacity(rank);
        for a in 0..rank {
            let d = self.shape()[a];
            if d == target[a] {
                gather.push(in_strides[a]);
            } else if d == 1 {
                gather.push(0);
            } else {
                return Err(Error::Dimension(format!(
                    "expand: axis {a} extent {d} cannot broadcast to {}",
                    target[a]
                )));
            }
        }
        let out_numel: usize = target.iter().product();
        let mut data = vec![0.0; out_numel];
        for_each_offset(target, &gather, |o, i| {
            data[o] = self.inner.data[i];
        });
        let target_c = target.to_vec();
        let in_numel = self.numel();
        Tensor::from_op(data, target.to_vec(), "expand", vec![self.clone()], move |_, g| {
            let mut gi = vec![0.0; in_numel];
            for_each_offset(&target_c, &gather, |o, i| {
                gi[i] += g[o];
            });
            vec![Some(gi)]
        })
    }

    /// Contiguous sub-range `start..start+len` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let rank = self.rank();
        if axis >= rank {
            return Err(Error::Dimension(format!(
                "slice: axis {axis} out of range for rank {rank}"
            )));
        }
        let d = self.shape()[axis];
        if start + len > d {
            return Err(Error::Dimension(format!(
                "slice: range {start}..{} exceeds extent {d} on axis {axis}",
                start + len
            )));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for ou in 0..outer {
            let base = (ou * d + start) * inner;
            data.extend_from_slice(&self.inner.data[base..base + len * inner]);
        }
        let in_numel = self.numel();
        Tensor::from_op(data, out_shape, "slice", vec![self.clone()], move |_, g| {
            let mut gi = vec![0.0; in_numel];
            for ou in 0..outer {
                let src = ou * len * inner;
                let dst = (ou * d + start) * inner;
                gi[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            vec![Some(gi)]
        })
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat: no tensors given".into()));
        }
        let rank = parts[0].rank();
        if axis >= rank {
            return Err(Error::Dimension(format!(
                "concat: axis {axis} out of range for rank {rank}"
            )));
        }
        let mut cat_extent = 0usize;
        for p in parts {
            if p.rank() != rank {
                return Err(Error::Dimension("concat: rank mismatch".into()));
            }
            for a in 0..rank {
                if a != axis && p.shape()[a] != parts[0].shape()[a] {
                    return Err(Error::Dimension(format!(
                        "concat: axis {a} extents differ ({} vs {})",
                        p.shape()[a],
                        parts[0].shape()[a]
                    )));
                }
            }
            cat_extent += p.shape()[axis];
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = cat_extent;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * cat_extent * inner];
        let mut offset = 0usize;
        let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        for (p, &ext) in parts.iter().zip(&extents) {
            for ou in 0..outer {
                let src = ou * ext * inner;
                let dst = (ou * cat_extent + offset) * inner;
                data[dst..dst + ext * inner].copy_from_slice(&p.inner.data[src..src + ext * inner]);
            }
            offset += ext;
        }
        let parents: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        Tensor::from_op(data, out_shape, "concat", parents, move |_, g| {
            let mut grads = Vec::with_capacity(extents.len());
            let mut offset = 0usize;
            for &ext in &extents {
                let mut gp = vec![0.0; outer * ext * inner];
                for ou in 0..outer {
                    let dst = ou * ext * inner;
                    let src = (ou * cat_extent + offset) * inner;
                    gp[dst..dst + ext * inner].copy_from_slice(&g[src..src + ext * inner]);
                }
                grads.push(Some(gp));
                offset += ext;
            }
            grads
        })
    }

    /// Stack tensors of identical shape along a new leading axis.
    pub fn stack(parts: &[&Tensor]) -> Result<Tensor> {
        let lifted: Vec<Tensor> = parts
            .iter()
            .map(|p| p.unsqueeze(0))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = lifted.iter().collect();
        Tensor::concat(&refs, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn elementwise_and_reductions() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::from_vec(vec![4.0, 3.0, 2.0, 1.0], &[2, 2]).unwrap();
        let s = a.add(&b).unwrap();
        assert_eq!(s.data(), &[5.0; 4]);
        let p = a.mul(&b).unwrap();
        assert_eq!(p.data(), &[4.0, 6.0, 6.0, 4.0]);
        assert_close(a.sum_all().unwrap().item().unwrap(), 10.0, 1e-15);
        assert_close(a.mean_all().unwrap().item().unwrap(), 2.5, 1e-15);
        let col_sum = a.sum_axes(&[0], false).unwrap();
        assert_eq!(col_sum.shape(), &[2]);
        assert_eq!(col_sum.data(), &[4.0, 6.0]);
    }

    #[test]
    fn non_finite_is_rejected() {
        let a = Tensor::from_vec(vec![1.0, 0.0], &[2]).unwrap();
        let b = Tensor::from_vec(vec![0.0, 0.0], &[2]).unwrap();
        let err = a.div(&b).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(Tensor::from_vec(vec![f64::NAN], &[1]).is_err());
    }

    #[test]
    fn permute_and_expand() {
        let a = Tensor::from_vec((0..6).map(|v| v as f64).collect(), &[2, 3]).unwrap();
        let t = a.permute(&[1, 0]).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let e = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let e = e.unsqueeze(1).unwrap().expand(&[2, 3]).unwrap();
        assert_eq!(e.data(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let a = Tensor::from_vec((0..24).map(|v| v as f64).collect(), &[2, 3, 4]).unwrap();
        let s0 = a.slice(1, 0, 1).unwrap();
        let s1 = a.slice(1, 1, 2).unwrap();
        let back = Tensor::concat(&[&s0, &s1], 1).unwrap();
        assert_eq!(back.data(), a.data());
    }

    #[test]
    fn clamp_bounds() {
        let a = Tensor::from_vec(vec![-2.0, 0.5, 7.0], &[3]).unwrap();
        let c = a.clamp(-1.0, 1.0).unwrap();
        assert_eq!(c.data(), &[-1.0, 0.5, 1.0]);
    }
}
