//! Generalized tensor contraction.

use crate::error::{Error, Result};

use super::Tensor;

fn raw_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

impl Tensor {
    /// Plain 2-D matrix product `(m,k) x (k,n) -> (m,n)`.
    pub fn matmul2d(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || rhs.rank() != 2 {
            return Err(Error::Dimension(format!(
                "matmul2d: expected rank-2 operands, got {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (rhs.shape()[0], rhs.shape()[1]);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul2d: inner extents differ ({k} vs {k2})"
            )));
        }
        let data = raw_matmul(self.data(), rhs.data(), m, k, n);
        let a = self.clone();
        let b = rhs.clone();
        Tensor::from_op(
            data,
            vec![m, n],
            "matmul2d",
            vec![self.clone(), rhs.clone()],
            move |_, g| {
                // dA[i,p] = sum_j g[i,j] B[p,j]
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * b.data()[p * n + j];
                        }
                        ga[i * k + p] = s;
                    }
                }
                // dB[p,j] = sum_i A[i,p] g[i,j]
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = a.data()[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gb[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                vec![Some(ga), Some(gb)]
            },
        )
    }

    /// Generalized contraction: sums over the paired axes
    /// `(self_axis, rhs_axis)` and places the remaining axes of `self`
    /// (in order) followed by the remaining axes of `rhs` in the output.
    /// With no pairs this is the outer product.
    pub fn contract(&self, rhs: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
        for (i, &(pa, pb)) in pairs.iter().enumerate() {
            if pa >= self.rank() || pb >= rhs.rank() {
                return Err(Error::Dimension(format!(
                    "contract: pair {i} = ({pa}, {pb}) out of range for ranks {} and {}",
                    self.rank(),
                    rhs.rank()
                )));
            }
            if self.shape()[pa] != rhs.shape()[pb] {
                return Err(Error::Dimension(format!(
                    "contract: axis {pa} of lhs (extent {}) does not match axis {pb} of rhs (extent {})",
                    self.shape()[pa],
                    rhs.shape()[pb]
                )));
            }
            for &(qa, qb) in &pairs[..i] {
                if qa == pa || qb == pb {
                    return Err(Error::Dimension(format!(
                        "contract: axis used twice in pairing (pair {i})"
                    )));
                }
            }
        }
        let free_a: Vec<usize> = (0..self.rank())
            .filter(|a| !pairs.iter().any(|&(pa, _)| pa == *a))
            .collect();
        let free_b: Vec<usize> = (0..rhs.rank())
            .filter(|b| !pairs.iter().any(|&(_, pb)| pb == *b))
            .collect();

        let mut perm_a: Vec<usize> = free_a.clone();
        perm_a.extend(pairs.iter().map(|&(pa, _)| pa));
        let mut perm_b: Vec<usize> = pairs.iter().map(|&(_, pb)| pb).collect();
        perm_b.extend(free_b.iter().copied());

        let fa: usize = free_a.iter().map(|&a| self.shape()[a]).product();
        let fb: usize = free_b.iter().map(|&b| rhs.shape()[b]).product();
        let k: usize = pairs.iter().map(|&(pa, _)| self.shape()[pa]).product();

        let lhs = self.permute(&perm_a)?.reshape(&[fa, k])?;
        let rhsm = rhs.permute(&perm_b)?.reshape(&[k, fb])?;
        let prod = lhs.matmul2d(&rhsm)?;

        let mut out_shape: Vec<usize> = free_a.iter().map(|&a| self.shape()[a]).collect();
        out_shape.extend(free_b.iter().map(|&b| rhs.shape()[b]));
        prod.reshape(&out_shape)
    }
}
