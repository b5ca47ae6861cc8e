//! Pointwise (1x1) channel-mixing building blocks.

use crate::error::{Error, Result};
use crate::params::{join, HasParams};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// 1x1 channel mixer: a per-gridpoint linear map over channels.
#[derive(Debug, Clone)]
pub struct Mixer {
    pub weight: Tensor, // (c_in, c_out)
    pub bias: Tensor,   // (c_out)
}

impl Mixer {
    pub fn new(c_in: usize, c_out: usize, rng: &mut RngStream) -> Result<Mixer> {
        let scale = (1.0 / c_in as f64).sqrt();
        Ok(Mixer {
            weight: rng.gaussian(&[c_in, c_out])?.scale(scale)?.param(),
            bias: Tensor::zeros(&[c_out]).param(),
        })
    }

    /// All-zero weights and bias (used where a block must start as a no-op).
    pub fn zeroed(c_in: usize, c_out: usize) -> Mixer {
        Mixer {
            weight: Tensor::zeros(&[c_in, c_out]).param(),
            bias: Tensor::zeros(&[c_out]).param(),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[1]
    }

    /// `(B, C_in, H, W) -> (B, C_out, H, W)`
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 4 || x.shape()[1] != self.c_in() {
            return Err(Error::Dimension(format!(
                "mixer: input {:?} does not provide {} channels",
                x.shape(),
                self.c_in()
            )));
        }
        let (b, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let mixed = x
            .contract(&self.weight, &[(1, 0)])?
            .permute(&[0, 3, 1, 2])?;
        let bias = self
            .bias
            .reshape(&[1, self.c_out(), 1, 1])?
            .expand(&[b, self.c_out(), h, w])?;
        mixed.add(&bias)
    }
}

impl HasParams for Mixer {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Two-mixer channel MLP (`c -> hidden -> c`) with GELU in between.
#[derive(Debug, Clone)]
pub struct ChannelMlp {
    pub lift: Mixer,
    pub proj: Mixer,
}

impl ChannelMlp {
    pub fn new(channels: usize, hidden: usize, rng: &mut RngStream) -> Result<ChannelMlp> {
        Ok(ChannelMlp {
            lift: Mixer::new(channels, hidden, rng)?,
            proj: Mixer::new(hidden, channels, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.proj.forward(&self.lift.forward(x)?.gelu()?)
    }
}

impl HasParams for ChannelMlp {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.lift.visit_params(&join(prefix, "lift"), f);
        self.proj.visit_params(&join(prefix, "proj"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.lift.visit_params_mut(&join(prefix, "lift"), f);
        self.proj.visit_params_mut(&join(prefix, "proj"), f);
    }
}
