//! Learned spectral layers: the low-rank tensor-product spectral operator
//! and the composite S2-convolution built around the spherical transforms.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::params::{join, HasParams};
use crate::rng::RngStream;
use crate::sht::{spectral_resample, GridSpec, ShtPlan, SpectralField};
use crate::tensor::Tensor;

/// Low-rank spectral operator acting channel- and mode-wise:
/// project channels to rank `r` with `w_in`, contract the spectral axes
/// against rank-wise factors `a` (degree) and `b` (order), expand back by
/// the tensor product of the same factors, then project to the output
/// channels with `w_out`. Real factors act identically on the real and
/// imaginary coefficient parts, so decoded fields stay real.
#[derive(Debug, Clone)]
pub struct TensorProductOperator {
    pub w_in: Tensor,  // (c_in, rank)
    pub a: Tensor,     // (rank, l_max+1)
    pub b: Tensor,     // (rank, m_max+1)
    pub w_out: Tensor, // (rank, c_out)
    /// Optional separate synthesis factors (ablation switch, default off).
    pub a_syn: Option<Tensor>,
    pub b_syn: Option<Tensor>,
    mask: Tensor, // (l_max+1, m_max+1), 1 on the valid m <= l triangle
}

fn triangle_mask(l1: usize, m1: usize) -> Tensor {
    Tensor::from_fn(&[l1, m1], |idx| if idx[1] <= idx[0] { 1.0 } else { 0.0 })
        .expect("mask construction cannot fail")
}

impl TensorProductOperator {
    pub fn new(
        c_in: usize,
        c_out: usize,
        l1: usize,
        m1: usize,
        rank: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Self::with_separate_synthesis(c_in, c_out, l1, m1, rank, rng, false)
    }

    pub fn with_separate_synthesis(
        c_in: usize,
        c_out: usize,
        l1: usize,
        m1: usize,
        rank: usize,
        rng: &mut RngStream,
        separate_synthesis: bool,
    ) -> Result<Self> {
        if rank == 0 || c_in == 0 || c_out == 0 || l1 == 0 || m1 == 0 {
            return Err(Error::Config(format!(
                "tensor-product operator: degenerate dimensions (c_in={c_in}, c_out={c_out}, l1={l1}, m1={m1}, rank={rank})"
            )));
        }
        let fan_in = (1.0 / c_in as f64).sqrt();
        let fan_r = (1.0 / rank as f64).sqrt();
        let w_in = rng.gaussian(&[c_in, rank])?.scale(fan_in)?.param();
        let w_out = rng.gaussian(&[rank, c_out])?.scale(fan_r)?.param();

        // Spectral factors start near a smooth low-pass profile; spectral
        // layers amplify high modes badly under plain Gaussian init.
        let mut make_factor = |n: usize| -> Result<Tensor> {
            let noise = rng.gaussian(&[rank, n])?;
            Tensor::from_fn(&[rank, n], |idx| {
                let decay = (-(idx[1] as f64) / (0.35 * n as f64 + 1.0)).exp();
                decay * (1.0 + 0.2 * noise.get(idx))
            })
        };
        let a_raw = make_factor(l1)?;
        let b_raw = make_factor(m1)?;
        let (a_syn, b_syn) = if separate_synthesis {
            (Some(make_factor(l1)?.param()), Some(make_factor(m1)?.param()))
        } else {
            (None, None)
        };

        let mut op = TensorProductOperator {
            w_in,
            a: a_raw.param(),
            b: b_raw.param(),
            w_out,
            a_syn,
            b_syn,
            mask: triangle_mask(l1, m1),
        };

        // Calibrate w_out so a smooth (red-spectrum) input comes back with
        // roughly unit variance; activations in these networks concentrate
        // on low modes, where the low-pass factors amplify most.
        let shade = |t: Tensor| -> Result<Tensor> {
            let data: Vec<f64> = t
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let l = (i / m1) % l1;
                    let m = i % m1;
                    let decay_l = (-(l as f64) / (0.35 * l1 as f64 + 1.0)).exp();
                    let decay_m = (-(m as f64) / (0.35 * m1 as f64 + 1.0)).exp();
                    v * decay_l * decay_m
                })
                .collect();
            Tensor::from_vec(data, t.shape())
        };
        let probe_re = shade(rng.gaussian(&[2, c_in, l1, m1])?)?;
        let probe_im = shade(rng.gaussian(&[2, c_in, l1, m1])?)?;
        let probe = SpectralField::new(probe_re, probe_im)?;
        let out = op.apply(&probe)?;
        let in_rms = rms(probe.re.data()).hypot(rms(probe.im.data()));
        let out_rms = rms(out.re.data()).hypot(rms(out.im.data()));
        if out_rms > 0.0 {
            op.w_out = op.w_out.detach().scale(in_rms / out_rms)?.param();
        }
        Ok(op)
    }

    pub fn rank(&self) -> usize {
        self.w_in.shape()[1]
    }

    pub fn c_in(&self) -> usize {
        self.w_in.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.w_out.shape()[1]
    }

    pub fn l1(&self) -> usize {
        self.a.shape()[1]
    }

    pub fn m1(&self) -> usize {
        self.b.shape()[1]
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let (c_in, c_out, l1, m1, r) =
            (self.c_in(), self.c_out(), self.l1(), self.m1(), self.rank());
        let syn = if self.a_syn.is_some() { r * l1 + r * m1 } else { 0 };
        c_in * r + r * l1 + r * m1 + r * c_out + syn
    }

    /// `weights[r, l, m] = a[r, l] * b[r, m]`
    fn rank_weights(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (r, l1) = (a.shape()[0], a.shape()[1]);
        let m1 = b.shape()[1];
        let ae = a.unsqueeze(2)?.expand(&[r, l1, m1])?;
        let be = b.unsqueeze(1)?.expand(&[r, l1, m1])?;
        ae.mul(&be)
    }

    fn apply_part(&self, x: &Tensor, w_ana: &Tensor, w_syn: &Tensor) -> Result<Tensor> {
        let (batch, l1, m1) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let r = self.rank();
        // Channel projection: (B, C_in, L, M) -> (B, R, L, M)
        let h = x.contract(&self.w_in, &[(1, 0)])?.permute(&[0, 3, 1, 2])?;
        // Spectral contraction to (B, R)
        let w_ana_e = w_ana.unsqueeze(0)?.expand(&[batch, r, l1, m1])?;
        let s = h.mul(&w_ana_e)?.sum_axes(&[2, 3], false)?;
        // Tensor-product expansion back to (B, R, L, M)
        let w_syn_e = w_syn.unsqueeze(0)?.expand(&[batch, r, l1, m1])?;
        let g = s
            .unsqueeze(2)?
            .unsqueeze(3)?
            .expand(&[batch, r, l1, m1])?
            .mul(&w_syn_e)?;
        // Output channel projection: (B, R, L, M) -> (B, C_out, L, M)
        let out = g.contract(&self.w_out, &[(1, 0)])?.permute(&[0, 3, 1, 2])?;
        // Keep only the valid m <= l triangle.
        let c_out = self.c_out();
        let mask = self
            .mask
            .unsqueeze(0)?
            .unsqueeze(0)?
            .expand(&[batch, c_out, l1, m1])?;
        out.mul(&mask)
    }

    pub fn apply(&self, x: &SpectralField) -> Result<SpectralField> {
        if x.channels() != self.c_in() || x.l_max() + 1 != self.l1() || x.m_max() + 1 != self.m1() {
            return Err(Error::Config(format!(
                "tensor-product operator: input ({} ch, l_max {}, m_max {}) does not match operator ({} ch, l1 {}, m1 {})",
                x.channels(),
                x.l_max(),
                x.m_max(),
                self.c_in(),
                self.l1(),
                self.m1()
            )));
        }
        let w_ana = self.rank_weights(&self.a, &self.b)?;
        let w_syn = match (&self.a_syn, &self.b_syn) {
            (Some(a), Some(b)) => self.rank_weights(a, b)?,
            _ => w_ana.clone(),
        };
        let re = self.apply_part(&x.re, &w_ana, &w_syn)?;
        let im = self.apply_part(&x.im, &w_ana, &w_syn)?;
        SpectralField::new(re, im)
    }
}

impl HasParams for TensorProductOperator {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "w_in"), &self.w_in);
        f(&join(prefix, "a"), &self.a);
        f(&join(prefix, "b"), &self.b);
        f(&join(prefix, "w_out"), &self.w_out);
        if let Some(a) = &self.a_syn {
            f(&join(prefix, "a_syn"), a);
        }
        if let Some(b) = &self.b_syn {
            f(&join(prefix, "b_syn"), b);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "w_in"), &mut self.w_in);
        f(&join(prefix, "a"), &mut self.a);
        f(&join(prefix, "b"), &mut self.b);
        f(&join(prefix, "w_out"), &mut self.w_out);
        if let Some(a) = &mut self.a_syn {
            f(&join(prefix, "a_syn"), a);
        }
        if let Some(b) = &mut self.b_syn {
            f(&join(prefix, "b_syn"), b);
        }
    }
}

/// S2 convolution: spherical transform, a spectral-space map (resample or
/// learned operator), inverse transform onto the output grid, and an
/// optional gated residual when input and output shapes coincide.
#[derive(Debug, Clone)]
pub struct S2Conv {
    plan_in: Rc<ShtPlan>,
    plan_out: Rc<ShtPlan>,
    op: Option<TensorProductOperator>,
    residual_gate: Option<Tensor>,
}

impl S2Conv {
    /// Resample-only layer: no learned parameters.
    pub fn resample(
        grid_in: &GridSpec,
        l_max_in: usize,
        grid_out: &GridSpec,
        l_max_out: usize,
    ) -> Result<S2Conv> {
        Ok(S2Conv {
            plan_in: ShtPlan::new(grid_in, l_max_in)?,
            plan_out: ShtPlan::new(grid_out, l_max_out)?,
            op: None,
            residual_gate: None,
        })
    }

    /// Learned layer on a single grid. `residual` adds the input back
    /// through a scalar gate initialized to zero.
    pub fn learned(
        grid: &GridSpec,
        l_max: usize,
        c_in: usize,
        c_out: usize,
        rank: usize,
        residual: bool,
        rng: &mut RngStream,
    ) -> Result<S2Conv> {
        let plan = ShtPlan::new(grid, l_max)?;
        if residual && c_in != c_out {
            return Err(Error::Config(format!(
                "s2 conv: residual pathway requires matching channels, got {c_in} -> {c_out}"
            )));
        }
        let op =
            TensorProductOperator::new(c_in, c_out, plan.l_max() + 1, plan.m_max() + 1, rank, rng)?;
        Ok(S2Conv {
            plan_out: Rc::clone(&plan),
            plan_in: plan,
            op: Some(op),
            residual_gate: if residual {
                Some(Tensor::zeros(&[1]).param())
            } else {
                None
            },
        })
    }

    pub fn grid_in(&self) -> &GridSpec {
        self.plan_in.grid()
    }

    pub fn grid_out(&self) -> &GridSpec {
        self.plan_out.grid()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let coeffs = self.plan_in.forward(x)?;
        let mapped = match &self.op {
            None => spectral_resample(&coeffs, self.plan_out.l_max(), self.plan_out.m_max())?,
            Some(op) => {
                let resampled =
                    spectral_resample(&coeffs, self.plan_out.l_max(), self.plan_out.m_max())?;
                op.apply(&resampled)?
            }
        };
        let out = self.plan_out.inverse(&mapped)?;
        match &self.residual_gate {
            None => Ok(out),
            Some(gate) => {
                if x.shape() != out.shape() {
                    return Err(Error::Config(format!(
                        "s2 conv: residual requested across mismatched shapes {:?} -> {:?}",
                        x.shape(),
                        out.shape()
                    )));
                }
                let g = gate.reshape(&[1, 1, 1, 1])?.expand(out.shape())?;
                x.add(&out.mul(&g)?)
            }
        }
    }
}

impl HasParams for S2Conv {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        if let Some(op) = &self.op {
            op.visit_params(&join(prefix, "op"), f);
        }
        if let Some(g) = &self.residual_gate {
            f(&join(prefix, "gate"), g);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        if let Some(op) = &mut self.op {
            op.visit_params_mut(&join(prefix, "op"), f);
        }
        if let Some(g) = &mut self.residual_gate {
            f(&join(prefix, "gate"), g);
        }
    }
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}
