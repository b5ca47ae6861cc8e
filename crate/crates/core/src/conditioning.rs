//! Dual-stream conditioning components: the learned seasonal embedding,
//! the spatially conditional RMS normalization layer, conditioning-tensor
//! assembly, and the per-channel variable/level metadata embedding.
//!
//! The conditioning tensor is consumed twice by every network: once
//! concatenated with the primary input channels and once through the
//! conditional normalization pathway.

use crate::error::{Error, Result};
use crate::layers::Mixer;
use crate::params::{join, HasParams};
use crate::rng::RngStream;
use crate::sht::GridSpec;
use crate::spectral::S2Conv;
use crate::tensor::Tensor;

/// Number of forcing channels (SST, SIC, LSM) and seasonal channels.
pub const FORCING_CHANNELS: usize = 3;
pub const SEASONAL_CHANNELS: usize = 3;
pub const CONDITIONING_CHANNELS: usize = FORCING_CHANNELS + SEASONAL_CHANNELS;

/// Annual-cycle features for a month index (1-based, periodic).
pub fn month_features(month: usize) -> (f64, f64) {
    let angle = std::f64::consts::TAU * month as f64 / 12.0;
    (angle.sin(), angle.cos())
}

/// Month-of-year embedding: a small MLP maps `[sin, cos]` of the annual
/// cycle to coefficients, contracted with a learned spatial basis.
#[derive(Debug, Clone)]
pub struct SeasonalEmbedding {
    pub w1: Tensor,    // (2, hidden)
    pub b1: Tensor,    // (hidden)
    pub w2: Tensor,    // (hidden, n_basis)
    pub b2: Tensor,    // (n_basis)
    pub basis: Tensor, // (n_basis, out_channels, n_lat, n_lon)
}

impl SeasonalEmbedding {
    pub fn new(grid: &GridSpec, rng: &mut RngStream) -> Result<SeasonalEmbedding> {
        let hidden = 64;
        let n_basis = SEASONAL_CHANNELS;
        Ok(SeasonalEmbedding {
            w1: rng.gaussian(&[2, hidden])?.scale((1.0f64 / 2.0).sqrt())?.param(),
            b1: Tensor::zeros(&[hidden]).param(),
            w2: rng
                .gaussian(&[hidden, n_basis])?
                .scale((1.0 / hidden as f64).sqrt())?
                .param(),
            b2: Tensor::zeros(&[n_basis]).param(),
            basis: rng
                .gaussian(&[n_basis, SEASONAL_CHANNELS, grid.n_lat(), grid.n_lon()])?
                .scale(0.1)?
                .param(),
        })
    }

    fn coefficients(&self, month: usize) -> Result<Tensor> {
        if !(1..=12).contains(&month) {
            return Err(Error::Data(format!(
                "seasonal embedding: month {month} outside 1..=12"
            )));
        }
        let (s, c) = month_features(month);
        let input = Tensor::from_vec(vec![s, c], &[2])?;
        let h = input.contract(&self.w1, &[(0, 0)])?.add(&self.b1)?.gelu()?;
        h.contract(&self.w2, &[(0, 0)])?.add(&self.b2)
    }

    /// Embedding for one month: `(out_channels, n_lat, n_lon)`.
    pub fn embed(&self, month: usize) -> Result<Tensor> {
        let coeff = self.coefficients(month)?;
        coeff.contract(&self.basis, &[(0, 0)])
    }

    /// Embeddings for a batch of months: `(B, out_channels, n_lat, n_lon)`.
    pub fn embed_batch(&self, months: &[usize]) -> Result<Tensor> {
        let parts: Vec<Tensor> = months
            .iter()
            .map(|&m| self.embed(m))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::stack(&refs)
    }
}

impl HasParams for SeasonalEmbedding {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "w1"), &self.w1);
        f(&join(prefix, "b1"), &self.b1);
        f(&join(prefix, "w2"), &self.w2);
        f(&join(prefix, "b2"), &self.b2);
        f(&join(prefix, "basis"), &self.basis);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "w1"), &mut self.w1);
        f(&join(prefix, "b1"), &mut self.b1);
        f(&join(prefix, "w2"), &mut self.w2);
        f(&join(prefix, "b2"), &mut self.b2);
        f(&join(prefix, "basis"), &mut self.basis);
    }
}

/// Concatenate forcings and seasonal embedding into the conditioning
/// tensor, channel order fixed as (SST, SIC, LSM, e1, e2, e3).
pub fn build_conditioning(forcings: &Tensor, seasonal: &Tensor) -> Result<Tensor> {
    if forcings.rank() != 4 || seasonal.rank() != 4 {
        return Err(Error::Dimension(
            "build_conditioning: expected (B, C, H, W) inputs".into(),
        ));
    }
    if forcings.shape()[1] != FORCING_CHANNELS || seasonal.shape()[1] != SEASONAL_CHANNELS {
        return Err(Error::Dimension(format!(
            "build_conditioning: expected {FORCING_CHANNELS}+{SEASONAL_CHANNELS} channels, got {} and {}",
            forcings.shape()[1],
            seasonal.shape()[1]
        )));
    }
    if forcings.shape()[0] != seasonal.shape()[0]
        || forcings.shape()[2..] != seasonal.shape()[2..]
    {
        return Err(Error::Dimension(format!(
            "build_conditioning: grids differ ({:?} vs {:?})",
            forcings.shape(),
            seasonal.shape()
        )));
    }
    Tensor::concat(&[forcings, seasonal], 1)
}

/// The gamma/alpha generator inside the conditional norm: a resample-free
/// S2 convolution between two channel mixers, with a zero-initialized
/// output projection so training starts from plain RMS-affine behavior.
#[derive(Debug, Clone)]
pub struct CondSubnet {
    lift: Mixer,
    conv: S2Conv,
    proj: Mixer,
}

impl CondSubnet {
    pub fn new(
        grid: &GridSpec,
        l_max: usize,
        hidden: usize,
        rank: usize,
        out_channels: usize,
        rng: &mut RngStream,
    ) -> Result<CondSubnet> {
        Ok(CondSubnet {
            lift: Mixer::new(CONDITIONING_CHANNELS, hidden, rng)?,
            conv: S2Conv::learned(grid, l_max, hidden, hidden, rank, false, rng)?,
            proj: Mixer::zeroed(hidden, out_channels),
        })
    }

    pub fn forward(&self, c: &Tensor) -> Result<Tensor> {
        let h = self.lift.forward(c)?.gelu()?;
        let h = self.conv.forward(&h)?.gelu()?;
        self.proj.forward(&h)
    }
}

impl HasParams for CondSubnet {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.lift.visit_params(&join(prefix, "lift"), f);
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.proj.visit_params(&join(prefix, "proj"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.lift.visit_params_mut(&join(prefix, "lift"), f);
        self.conv.visit_params_mut(&join(prefix, "conv"), f);
        self.proj.visit_params_mut(&join(prefix, "proj"), f);
    }
}

/// RMS normalization over the channel axis followed by a learned affine
/// modulation whose scale and shift vary spatially with the conditioning
/// tensor: `out = rmsnorm(h) * (gamma(c) + a) + (alpha(c) + b)`.
#[derive(Debug, Clone)]
pub struct SpatialCondRmsNorm {
    pub base_scale: Tensor, // a: (C), ones at init
    pub base_shift: Tensor, // b: (C), zeros at init
    subnet: CondSubnet,
    eps: f64,
}

impl SpatialCondRmsNorm {
    pub fn new(
        grid: &GridSpec,
        l_max: usize,
        channels: usize,
        cond_hidden: usize,
        cond_rank: usize,
        rng: &mut RngStream,
    ) -> Result<SpatialCondRmsNorm> {
        Ok(SpatialCondRmsNorm {
            base_scale: Tensor::full(&[channels], 1.0).param(),
            base_shift: Tensor::zeros(&[channels]).param(),
            subnet: CondSubnet::new(grid, l_max, cond_hidden, cond_rank, 2 * channels, rng)?,
            eps: 1e-6,
        })
    }

    pub fn channels(&self) -> usize {
        self.base_scale.shape()[0]
    }

    pub fn forward(&self, h: &Tensor, c: &Tensor) -> Result<Tensor> {
        let channels = self.channels();
        if h.rank() != 4 || h.shape()[1] != channels {
            return Err(Error::Dimension(format!(
                "conditional norm: activation {:?} does not carry {channels} channels",
                h.shape()
            )));
        }
        if h.shape()[2..] != c.shape()[2..] || h.shape()[0] != c.shape()[0] {
            return Err(Error::Config(format!(
                "conditional norm: conditioning {:?} not resampled to activation grid {:?}",
                c.shape(),
                h.shape()
            )));
        }
        let shape = h.shape().to_vec();
        // RMS over channels, per sample and spatial location.
        let ms = h.square()?.mean_axes(&[1], true)?;
        let rms = ms.add_scalar(self.eps)?.sqrt()?.expand(&shape)?;
        let normed = h.div(&rms)?;

        let ga = self.subnet.forward(c)?;
        let gamma = ga.slice(1, 0, channels)?;
        let alpha = ga.slice(1, channels, channels)?;
        let a = self
            .base_scale
            .reshape(&[1, channels, 1, 1])?
            .expand(&shape)?;
        let b = self
            .base_shift
            .reshape(&[1, channels, 1, 1])?
            .expand(&shape)?;
        normed.mul(&gamma.add(&a)?)?.add(&alpha.add(&b)?)
    }
}

impl HasParams for SpatialCondRmsNorm {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "base_scale"), &self.base_scale);
        f(&join(prefix, "base_shift"), &self.base_shift);
        self.subnet.visit_params(&join(prefix, "subnet"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "base_scale"), &mut self.base_scale);
        f(&join(prefix, "base_shift"), &mut self.base_shift);
        self.subnet.visit_params_mut(&join(prefix, "subnet"), f);
    }
}

/// Per-channel variable/level identity embedding: each physical input
/// channel looks up an 8-dimensional embedding, projected to one scalar
/// that is added as a bias to that channel before channel mixing.
#[derive(Debug, Clone)]
pub struct ChannelMetadataEmbedding {
    pub table: Tensor, // (n_ids, dim)
    pub proj: Tensor,  // (dim)
    onehot: Tensor,    // (n_channels, n_ids), constant
}

pub const METADATA_EMBED_DIM: usize = 8;

impl ChannelMetadataEmbedding {
    /// `channel_ids[c]` is the (variable, level) identity index of input
    /// channel `c`; ids must be below `n_ids`.
    pub fn new(channel_ids: &[usize], n_ids: usize, rng: &mut RngStream) -> Result<Self> {
        for (c, &id) in channel_ids.iter().enumerate() {
            if id >= n_ids {
                return Err(Error::Config(format!(
                    "metadata embedding: channel {c} references unknown id {id} (vocabulary {n_ids})"
                )));
            }
        }
        let onehot = Tensor::from_fn(&[channel_ids.len(), n_ids], |idx| {
            if channel_ids[idx[0]] == idx[1] {
                1.0
            } else {
                0.0
            }
        })?;
        Ok(ChannelMetadataEmbedding {
            table: rng
                .gaussian(&[n_ids, METADATA_EMBED_DIM])?
                .scale(0.1)?
                .param(),
            proj: rng
                .gaussian(&[METADATA_EMBED_DIM])?
                .scale((1.0 / METADATA_EMBED_DIM as f64).sqrt())?
                .param(),
            onehot,
        })
    }

    /// Identity pairs `(variable_id, level_id)` mapped to a dense index set.
    pub fn from_pairs(pairs: &[(usize, usize)], rng: &mut RngStream) -> Result<Self> {
        let mut vocab: Vec<(usize, usize)> = Vec::new();
        let ids: Vec<usize> = pairs
            .iter()
            .map(|p| {
                if let Some(i) = vocab.iter().position(|q| q == p) {
                    i
                } else {
                    vocab.push(*p);
                    vocab.len() - 1
                }
            })
            .collect();
        Self::new(&ids, vocab.len(), rng)
    }

    pub fn n_channels(&self) -> usize {
        self.onehot.shape()[0]
    }

    /// Per-channel scalar biases `(n_channels,)`.
    pub fn bias(&self) -> Result<Tensor> {
        let rows = self.onehot.contract(&self.table, &[(1, 0)])?;
        rows.contract(&self.proj, &[(1, 0)])
    }

    /// Add each channel's bias to `(B, C, H, W)` input.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.n_channels();
        if x.rank() != 4 || x.shape()[1] != c {
            return Err(Error::Dimension(format!(
                "metadata embedding: input {:?} does not carry {c} channels",
                x.shape()
            )));
        }
        let bias = self.bias()?.reshape(&[1, c, 1, 1])?.expand(x.shape())?;
        x.add(&bias)
    }
}

impl HasParams for ChannelMetadataEmbedding {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "table"), &self.table);
        f(&join(prefix, "proj"), &self.proj);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "table"), &mut self.table);
        f(&join(prefix, "proj"), &mut self.proj);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::collect_params;
    use crate::tensor::check_gradient;

    #[test]
    fn month_trig_features() {
        let (s, c) = month_features(3);
        assert!((s - 1.0).abs() < 1e-12 && c.abs() < 1e-12);
        let (s, c) = month_features(12);
        assert!(s.abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seasonal_embedding_is_periodic() {
        let (s1, c1) = month_features(5);
        let (s2, c2) = month_features(17);
        assert!((s1 - s2).abs() < 1e-12 && (c1 - c2).abs() < 1e-12);
    }

    #[test]
    fn month_out_of_range_is_rejected() {
        let grid = GridSpec::equiangular(6, 12).unwrap();
        let mut rng = RngStream::new(1, 0);
        let se = SeasonalEmbedding::new(&grid, &mut rng).unwrap();
        assert!(se.embed(0).is_err());
        assert!(se.embed(13).is_err());
    }

    #[test]
    fn forced_coefficients_contract_ones_basis() {
        let grid = GridSpec::equiangular(6, 12).unwrap();
        let mut rng = RngStream::new(2, 0);
        let mut se = SeasonalEmbedding::new(&grid, &mut rng).unwrap();
        // Zero the MLP and force output coefficients to [1, 0, 0].
        se.w2 = Tensor::zeros(se.w2.shape()).param();
        se.b2 = Tensor::from_vec(vec![1.0, 0.0, 0.0], &[3]).unwrap().param();
        se.basis = Tensor::full(&[3, 3, 6, 12], 1.0).param();
        let e = se.embed(7).unwrap();
        assert_eq!(e.shape(), &[3, 6, 12]);
        for v in e.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioning_concat_order_and_shapes() {
        let f = Tensor::from_fn(&[1, 3, 4, 8], |idx| (idx[1] * 100 + idx[3]) as f64).unwrap();
        let e = Tensor::zeros(&[1, 3, 4, 8]);
        let c = build_conditioning(&f, &e).unwrap();
        assert_eq!(c.shape(), &[1, 6, 4, 8]);
        // Channel 0 of the output is the SST field exactly.
        for j in 0..8 {
            assert_eq!(c.get(&[0, 0, 0, j]), f.get(&[0, 0, 0, j]));
        }
        let zeros = build_conditioning(&Tensor::zeros(&[1, 3, 4, 8]), &e).unwrap();
        assert!(zeros.data().iter().all(|&v| v == 0.0));
        assert!(build_conditioning(&f, &Tensor::zeros(&[1, 3, 4, 10])).is_err());
    }

    fn small_norm(rng: &mut RngStream, channels: usize) -> (GridSpec, SpatialCondRmsNorm) {
        let grid = GridSpec::equiangular(6, 12).unwrap();
        let norm = SpatialCondRmsNorm::new(&grid, 3, channels, 4, 2, rng).unwrap();
        (grid, norm)
    }

    #[test]
    fn constant_activation_normalizes_to_one() {
        let mut rng = RngStream::new(3, 0);
        let (_, norm) = small_norm(&mut rng, 3);
        let h = Tensor::full(&[1, 3, 6, 12], 4.0);
        let c = Tensor::zeros(&[1, 6, 6, 12]);
        let out = norm.forward(&h, &c).unwrap();
        for v in out.data() {
            assert!((v - 1.0).abs() <= 1e-6, "{v}");
        }
    }

    #[test]
    fn zero_affine_gives_zero_output() {
        let mut rng = RngStream::new(4, 0);
        let (_, mut norm) = small_norm(&mut rng, 2);
        norm.base_scale = Tensor::zeros(&[2]).param();
        let h = Tensor::full(&[1, 2, 6, 12], 3.0);
        let c = Tensor::zeros(&[1, 6, 6, 12]);
        let out = norm.forward(&h, &c).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_independent_loop_composition() {
        let mut rng = RngStream::new(5, 0);
        let (_, norm) = small_norm(&mut rng, 3);
        let h = rng.gaussian(&[2, 3, 6, 12]).unwrap();
        let c = rng.gaussian(&[2, 6, 6, 12]).unwrap();
        let out = norm.forward(&h, &c).unwrap();

        // Loop oracle: plain RMS norm then the affine from the subnet.
        let ga = norm.subnet.forward(&c).unwrap();
        for b in 0..2 {
            for y in 0..6 {
                for x in 0..12 {
                    let mut ms = 0.0;
                    for ch in 0..3 {
                        let v = h.get(&[b, ch, y, x]);
                        ms += v * v;
                    }
                    ms /= 3.0;
                    let denom = (ms + 1e-6).sqrt();
                    for ch in 0..3 {
                        let normed = h.get(&[b, ch, y, x]) / denom;
                        let gamma = ga.get(&[b, ch, y, x]) + norm.base_scale.get(&[ch]);
                        let alpha = ga.get(&[b, 3 + ch, y, x]) + norm.base_shift.get(&[ch]);
                        let expected = normed * gamma + alpha;
                        let got = out.get(&[b, ch, y, x]);
                        assert!((got - expected).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn output_rms_follows_uniform_scale_pattern() {
        // With alpha + b = 0 and a channel-uniform gamma + a, the output
        // RMS over channels equals |gamma + a|.
        let mut rng = RngStream::new(6, 0);
        let (_, mut norm) = small_norm(&mut rng, 4);
        norm.base_scale = Tensor::full(&[4], -2.5).param();
        let h = rng.gaussian(&[1, 4, 6, 12]).unwrap();
        let c = Tensor::zeros(&[1, 6, 6, 12]);
        let out = norm.forward(&h, &c).unwrap();
        for y in 0..6 {
            for x in 0..12 {
                let mut ms = 0.0;
                for ch in 0..4 {
                    let v = out.get(&[0, ch, y, x]);
                    ms += v * v;
                }
                let rms = (ms / 4.0).sqrt();
                assert!((rms - 2.5).abs() < 1e-3, "rms {rms}");
            }
        }
    }

    #[test]
    fn grid_mismatch_is_config_error() {
        let mut rng = RngStream::new(7, 0);
        let (_, norm) = small_norm(&mut rng, 2);
        let h = Tensor::zeros(&[1, 2, 6, 12]);
        let c = Tensor::zeros(&[1, 6, 4, 8]);
        assert!(matches!(norm.forward(&h, &c), Err(Error::Config(_))));
    }

    #[test]
    fn metadata_identical_ids_share_bias_and_zero_table_is_noop() {
        let mut rng = RngStream::new(8, 0);
        let emb = ChannelMetadataEmbedding::new(&[0, 1, 0], 2, &mut rng).unwrap();
        let bias = emb.bias().unwrap();
        assert_eq!(bias.get(&[0]), bias.get(&[2]));
        assert_ne!(bias.get(&[0]), bias.get(&[1]));

        let mut zeroed = emb.clone();
        zeroed.table = Tensor::zeros(zeroed.table.shape()).param();
        let x = rng.gaussian(&[1, 3, 2, 4]).unwrap();
        let y = zeroed.apply(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn metadata_unknown_id_is_config_error() {
        let mut rng = RngStream::new(9, 0);
        assert!(matches!(
            ChannelMetadataEmbedding::new(&[0, 5], 2, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn metadata_gradient_flows_only_from_own_channel() {
        let mut rng = RngStream::new(10, 0);
        let emb = ChannelMetadataEmbedding::new(&[0, 1], 2, &mut rng).unwrap();
        let x = rng.gaussian(&[1, 2, 2, 2]).unwrap();
        // Loss reads only channel 0; the table row of id 1 must get zero grad.
        let table = emb.table.clone();
        let y = emb.apply(&x).unwrap();
        let loss = y.slice(1, 0, 1).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        let grad = table.grad().unwrap();
        let dim = METADATA_EMBED_DIM;
        assert!(grad[..dim].iter().any(|&g| g != 0.0), "row 0 should train");
        assert!(grad[dim..].iter().all(|&g| g == 0.0), "row 1 must be silent");

        // And the analytic gradient agrees with finite differences.
        let x2 = x.clone();
        let emb2 = emb.clone();
        let err = check_gradient(
            move |ps| {
                let mut e = emb2.clone();
                e.table = ps[0].clone();
                e.proj = ps[1].clone();
                e.apply(&x2)?.slice(1, 0, 1)?.sum_all()
            },
            &[emb.table.detach(), emb.proj.detach()],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "err {err}");
    }

    #[test]
    fn conditioning_layers_pass_gradient_checks() {
        let grid = GridSpec::equiangular(6, 12).unwrap();
        let mut rng = RngStream::new(11, 0);
        let se = SeasonalEmbedding::new(&grid, &mut rng).unwrap();
        let named = collect_params(&se);
        let tensors: Vec<Tensor> = named.iter().map(|(_, t)| t.detach()).collect();
        let probe = rng.gaussian(&[3, 6, 12]).unwrap();
        let se2 = se.clone();
        let err = check_gradient(
            move |ps| {
                let mut s = se2.clone();
                let mut i = 0;
                s.visit_params_mut("", &mut |_, t| {
                    *t = ps[i].clone();
                    i += 1;
                });
                s.embed(4)?.mul(&probe)?.sum_all()
            },
            &tensors,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "seasonal embedding gradient error {err}");

        let norm = SpatialCondRmsNorm::new(&grid, 3, 2, 3, 2, &mut rng).unwrap();
        let h = rng.gaussian(&[1, 2, 6, 12]).unwrap();
        let c = rng.gaussian(&[1, 6, 6, 12]).unwrap();
        let probe = rng.gaussian(&[1, 2, 6, 12]).unwrap();
        let named = collect_params(&norm);
        let tensors: Vec<Tensor> = named.iter().map(|(_, t)| t.detach()).collect();
        let err = check_gradient(
            move |ps| {
                let mut n = norm.clone();
                let mut i = 0;
                n.visit_params_mut("", &mut |_, t| {
                    *t = ps[i].clone();
                    i += 1;
                });
                n.forward(&h, &c)?.mul(&probe)?.sum_all()
            },
            &tensors,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "conditional norm gradient error {err}");
    }
}
