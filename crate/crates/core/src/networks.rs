//! Encoder, decoder, and predictor assembly from S2-convolution and
//! conditioning blocks, the variational operations, and checkpoint I/O.
//!
//! All three networks share one pattern: channel lift (the encoder's lift
//! also adds the per-channel metadata bias), a conditional-norm block on
//! the input grid, a single spectral residual block (which carries the
//! grid change where there is one), a conditional-norm block on the
//! output grid, and a 1x1 head.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::RunConfig;
use crate::conditioning::{
    ChannelMetadataEmbedding, SeasonalEmbedding, SpatialCondRmsNorm, CONDITIONING_CHANNELS,
};
use crate::diffusion::{LatentNormalizer, VPredict};
use crate::error::{Error, Result, ResultExt};
use crate::io;
use crate::layers::{ChannelMlp, Mixer};
use crate::params::{collect_params, join, HasParams};
use crate::rng::RngStream;
use crate::sht::GridSpec;
use crate::spectral::S2Conv;
use crate::tensor::Tensor;

/// One month's variational latent state.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
    pub eps: Tensor,
}

/// `z = mu + exp(0.5 logvar) * eps`, differentiable in `mu` and `logvar`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(Error::Dimension(format!(
            "reparameterize: shapes differ ({:?}, {:?}, {:?})",
            mu.shape(),
            logvar.shape(),
            eps.shape()
        )));
    }
    let sigma = logvar.scale(0.5)?.exp()?;
    mu.add(&sigma.mul(eps)?)
}

/// KL divergence of a diagonal Gaussian posterior from the standard
/// normal prior: `0.5 * sum_j(mu_j^2 + sigma_j^2 - 1 - log sigma_j^2)`,
/// summed over latent dimensions and averaged over the batch.
pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> Result<Tensor> {
    if mu.shape() != logvar.shape() {
        return Err(Error::Dimension(format!(
            "kl_divergence: shapes differ ({:?} vs {:?})",
            mu.shape(),
            logvar.shape()
        )));
    }
    let term = mu
        .square()?
        .add(&logvar.exp()?)?
        .add_scalar(-1.0)?
        .sub(logvar)?;
    let batch = mu.shape().first().copied().unwrap_or(1);
    term.sum_all()?.scale(0.5 / batch as f64)
}

/// Conditional-norm block: spatially conditional RMS norm, GELU, then a
/// same-grid learned S2 convolution without a residual pathway.
#[derive(Debug, Clone)]
struct CondNormBlock {
    norm: SpatialCondRmsNorm,
    conv: S2Conv,
}

impl CondNormBlock {
    fn new(
        grid: &GridSpec,
        l_max: usize,
        channels: usize,
        rank: usize,
        cond_hidden: usize,
        cond_rank: usize,
        rng: &mut RngStream,
    ) -> Result<CondNormBlock> {
        Ok(CondNormBlock {
            norm: SpatialCondRmsNorm::new(grid, l_max, channels, cond_hidden, cond_rank, rng)?,
            conv: S2Conv::learned(grid, l_max, channels, channels, rank, false, rng)?,
        })
    }

    fn forward(&self, h: &Tensor, c: &Tensor) -> Result<Tensor> {
        self.conv.forward(&self.norm.forward(h, c)?.gelu()?)
    }
}

impl HasParams for CondNormBlock {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.norm.visit_params(&join(prefix, "norm"), f);
        self.conv.visit_params(&join(prefix, "conv"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.norm.visit_params_mut(&join(prefix, "norm"), f);
        self.conv.visit_params_mut(&join(prefix, "conv"), f);
    }
}

/// The single spectral residual block of each network: an optional
/// spectral resampling onto the output grid, a gated residual learned
/// S2 convolution, and a gated residual 1x1 channel MLP.
#[derive(Debug, Clone)]
struct SpectralResBlock {
    resample: Option<S2Conv>,
    conv: S2Conv,
    mlp: ChannelMlp,
    mlp_gate: Tensor,
}

impl SpectralResBlock {
    fn new(
        grid_in: &GridSpec,
        l_max_in: usize,
        grid_out: &GridSpec,
        l_max_out: usize,
        channels: usize,
        rank: usize,
        mlp_hidden: usize,
        rng: &mut RngStream,
    ) -> Result<SpectralResBlock> {
        let resample = if grid_in == grid_out && l_max_in == l_max_out {
            None
        } else {
            Some(S2Conv::resample(grid_in, l_max_in, grid_out, l_max_out)?)
        };
        Ok(SpectralResBlock {
            resample,
            conv: S2Conv::learned(grid_out, l_max_out, channels, channels, rank, true, rng)?,
            mlp: ChannelMlp::new(channels, mlp_hidden, rng)?,
            mlp_gate: Tensor::zeros(&[1]).param(),
        })
    }

    fn forward(&self, h: &Tensor) -> Result<Tensor> {
        let u = match &self.resample {
            Some(r) => r.forward(h)?,
            None => h.clone(),
        };
        let v = self.conv.forward(&u)?;
        let gate = self.mlp_gate.reshape(&[1, 1, 1, 1])?.expand(v.shape())?;
        v.add(&self.mlp.forward(&v)?.mul(&gate)?)
    }
}

impl HasParams for SpectralResBlock {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.mlp.visit_params(&join(prefix, "mlp"), f);
        f(&join(prefix, "mlp_gate"), &self.mlp_gate);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.conv.visit_params_mut(&join(prefix, "conv"), f);
        self.mlp.visit_params_mut(&join(prefix, "mlp"), f);
        f(&join(prefix, "mlp_gate"), &mut self.mlp_gate);
    }
}

/// Maps the standardized full state (prognostic + static + forcing
/// channels) plus conditioning to the latent posterior parameters.
#[derive(Debug, Clone)]
pub struct Encoder {
    meta: ChannelMetadataEmbedding,
    lift: Mixer,
    block_in: CondNormBlock,
    comp: SpectralResBlock,
    block_out: CondNormBlock,
    head_mu: Mixer,
    head_logvar: Mixer,
    logvar_clamp: f64,
}

impl Encoder {
    fn new(cfg: &RunConfig, phys: &GridSpec, latent: &GridSpec, rng: &mut RngStream) -> Result<Self> {
        let in_channels = cfg.encoder_input_channels();
        let ids: Vec<usize> = (0..in_channels).collect();
        Ok(Encoder {
            meta: ChannelMetadataEmbedding::new(&ids, in_channels, rng)?,
            lift: Mixer::new(in_channels + CONDITIONING_CHANNELS, cfg.enc_hidden, rng)?,
            block_in: CondNormBlock::new(
                phys,
                cfg.phys_l_max,
                cfg.enc_hidden,
                cfg.enc_rank,
                cfg.enc_cond_hidden,
                cfg.enc_cond_rank,
                rng,
            )?,
            comp: SpectralResBlock::new(
                phys,
                cfg.phys_l_max,
                latent,
                cfg.latent_l_max,
                cfg.enc_hidden,
                cfg.enc_rank,
                cfg.mlp_hidden,
                rng,
            )?,
            block_out: CondNormBlock::new(
                latent,
                cfg.latent_l_max,
                cfg.enc_hidden,
                cfg.enc_rank,
                cfg.enc_cond_hidden,
                cfg.enc_cond_rank,
                rng,
            )?,
            head_mu: Mixer::new(cfg.enc_hidden, cfg.latent_channels, rng)?,
            head_logvar: Mixer::new(cfg.enc_hidden, cfg.latent_channels, rng)?,
            logvar_clamp: cfg.logvar_clamp,
        })
    }

    /// `x_full`: `(B, prog+static+forcing, H, W)` standardized.
    /// Returns `(mu, logvar)` on the latent grid, logvar clamped.
    pub fn forward(
        &self,
        x_full: &Tensor,
        c_phys: &Tensor,
        c_latent: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let biased = self.meta.apply(x_full).at("encoder.lift.metadata")?;
        let joint = Tensor::concat(&[&biased, c_phys], 1).at("encoder.lift")?;
        let h = self.lift.forward(&joint).at("encoder.lift")?;
        let h = self.block_in.forward(&h, c_phys).at("encoder.block_in")?;
        let h = self.comp.forward(&h).at("encoder.compressive")?;
        let h = self.block_out.forward(&h, c_latent).at("encoder.block_out")?;
        let mu = self.head_mu.forward(&h).at("encoder.head_mu")?;
        let logvar = self
            .head_logvar
            .forward(&h)
            .at("encoder.head_logvar")?
            .clamp(-self.logvar_clamp, self.logvar_clamp)?;
        Ok((mu, logvar))
    }
}

impl HasParams for Encoder {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.meta.visit_params(&join(prefix, "meta"), f);
        self.lift.visit_params(&join(prefix, "lift"), f);
        self.block_in.visit_params(&join(prefix, "block_in"), f);
        self.comp.visit_params(&join(prefix, "comp"), f);
        self.block_out.visit_params(&join(prefix, "block_out"), f);
        self.head_mu.visit_params(&join(prefix, "head_mu"), f);
        self.head_logvar.visit_params(&join(prefix, "head_logvar"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.meta.visit_params_mut(&join(prefix, "meta"), f);
        self.lift.visit_params_mut(&join(prefix, "lift"), f);
        self.block_in.visit_params_mut(&join(prefix, "block_in"), f);
        self.comp.visit_params_mut(&join(prefix, "comp"), f);
        self.block_out.visit_params_mut(&join(prefix, "block_out"), f);
        self.head_mu.visit_params_mut(&join(prefix, "head_mu"), f);
        self.head_logvar
            .visit_params_mut(&join(prefix, "head_logvar"), f);
    }
}

/// Maps a latent state and conditioning back to the standardized
/// prognostic state. Static fields are only consumed when the
/// `decoder_receives_static` switch is on.
#[derive(Debug, Clone)]
pub struct Decoder {
    lift: Mixer,
    block_in: CondNormBlock,
    exp: SpectralResBlock,
    block_out: CondNormBlock,
    head: Mixer,
    receives_static: bool,
}

impl Decoder {
    fn new(cfg: &RunConfig, phys: &GridSpec, latent: &GridSpec, rng: &mut RngStream) -> Result<Self> {
        let extra = if cfg.decoder_receives_static {
            cfg.static_channels
        } else {
            0
        };
        Ok(Decoder {
            lift: Mixer::new(
                cfg.latent_channels + CONDITIONING_CHANNELS + extra,
                cfg.dec_hidden,
                rng,
            )?,
            block_in: CondNormBlock::new(
                latent,
                cfg.latent_l_max,
                cfg.dec_hidden,
                cfg.dec_rank,
                cfg.dec_cond_hidden,
                cfg.dec_cond_rank,
                rng,
            )?,
            exp: SpectralResBlock::new(
                latent,
                cfg.latent_l_max,
                phys,
                cfg.phys_l_max,
                cfg.dec_hidden,
                cfg.dec_rank,
                cfg.mlp_hidden,
                rng,
            )?,
            block_out: CondNormBlock::new(
                phys,
                cfg.phys_l_max,
                cfg.dec_hidden,
                cfg.dec_rank,
                cfg.dec_cond_hidden,
                cfg.dec_cond_rank,
                rng,
            )?,
            head: Mixer::new(cfg.dec_hidden, cfg.prog_channels, rng)?,
            receives_static: cfg.decoder_receives_static,
        })
    }

    /// `z`: `(B, Cz, Hz, Wz)`. Returns the standardized prognostic state
    /// `(B, prog, H, W)` (the mean of a fixed-variance Gaussian likelihood).
    pub fn forward(
        &self,
        z: &Tensor,
        c_latent: &Tensor,
        c_phys: &Tensor,
        statics_latent: Option<&Tensor>,
    ) -> Result<Tensor> {
        let joint = match (self.receives_static, statics_latent) {
            (false, _) => Tensor::concat(&[z, c_latent], 1).at("decoder.lift")?,
            (true, Some(s)) => Tensor::concat(&[z, c_latent, s], 1).at("decoder.lift")?,
            (true, None) => {
                return Err(Error::Config(
                    "decoder: static fields required but not supplied".into(),
                ))
            }
        };
        let h = self.lift.forward(&joint).at("decoder.lift")?;
        let h = self.block_in.forward(&h, c_latent).at("decoder.block_in")?;
        let h = self.exp.forward(&h).at("decoder.expansive")?;
        let h = self.block_out.forward(&h, c_phys).at("decoder.block_out")?;
        self.head.forward(&h).at("decoder.head")
    }
}

impl HasParams for Decoder {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.lift.visit_params(&join(prefix, "lift"), f);
        self.block_in.visit_params(&join(prefix, "block_in"), f);
        self.exp.visit_params(&join(prefix, "exp"), f);
        self.block_out.visit_params(&join(prefix, "block_out"), f);
        self.head.visit_params(&join(prefix, "head"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.lift.visit_params_mut(&join(prefix, "lift"), f);
        self.block_in.visit_params_mut(&join(prefix, "block_in"), f);
        self.exp.visit_params_mut(&join(prefix, "exp"), f);
        self.block_out.visit_params_mut(&join(prefix, "block_out"), f);
        self.head.visit_params_mut(&join(prefix, "head"), f);
    }
}

/// Latent diffusion backbone: predicts the v-target from the normalized
/// current latent, the noised target latent, latent-grid conditioning,
/// and a sinusoidal diffusion-time embedding projected to a few spatial
/// channels.
#[derive(Debug, Clone)]
pub struct Predictor {
    time_w1: Tensor, // (time_embed_dim, time_embed_dim)
    time_b1: Tensor,
    time_w2: Tensor, // (time_embed_dim, time_channels)
    time_b2: Tensor,
    lift: Mixer,
    block_in: CondNormBlock,
    res: SpectralResBlock,
    block_out: CondNormBlock,
    head: Mixer,
    time_embed_dim: usize,
    time_channels: usize,
}

impl Predictor {
    fn new(cfg: &RunConfig, latent: &GridSpec, rng: &mut RngStream) -> Result<Self> {
        let d = cfg.time_embed_dim;
        Ok(Predictor {
            time_w1: rng.gaussian(&[d, d])?.scale((1.0 / d as f64).sqrt())?.param(),
            time_b1: Tensor::zeros(&[d]).param(),
            time_w2: rng
                .gaussian(&[d, cfg.time_channels])?
                .scale((1.0 / d as f64).sqrt())?
                .param(),
            time_b2: Tensor::zeros(&[cfg.time_channels]).param(),
            lift: Mixer::new(
                2 * cfg.latent_channels + CONDITIONING_CHANNELS + cfg.time_channels,
                cfg.pred_hidden,
                rng,
            )?,
            block_in: CondNormBlock::new(
                latent,
                cfg.latent_l_max,
                cfg.pred_hidden,
                cfg.pred_rank,
                cfg.pred_cond_hidden,
                cfg.pred_cond_rank,
                rng,
            )?,
            res: SpectralResBlock::new(
                latent,
                cfg.latent_l_max,
                latent,
                cfg.latent_l_max,
                cfg.pred_hidden,
                cfg.pred_rank,
                cfg.mlp_hidden,
                rng,
            )?,
            block_out: CondNormBlock::new(
                latent,
                cfg.latent_l_max,
                cfg.pred_hidden,
                cfg.pred_rank,
                cfg.pred_cond_hidden,
                cfg.pred_cond_rank,
                rng,
            )?,
            head: Mixer::new(cfg.pred_hidden, cfg.latent_channels, rng)?,
            time_embed_dim: cfg.time_embed_dim,
            time_channels: cfg.time_channels,
        })
    }

    /// Sinusoidal features of normalized diffusion time `t = k/T`.
    fn sinusoidal(&self, t: f64) -> Vec<f64> {
        let half = self.time_embed_dim / 2;
        let mut out = Vec::with_capacity(self.time_embed_dim);
        for i in 0..half {
            let freq = if half > 1 {
                1000.0f64.powf(i as f64 / (half - 1) as f64)
            } else {
                1.0
            };
            out.push((t * freq).sin());
            out.push((t * freq).cos());
        }
        out
    }

    /// Per-sample time embedding expanded to spatial channels:
    /// `(B, time_channels, Hz, Wz)`.
    fn time_maps(&self, k_over_t: &[f64], h: usize, w: usize) -> Result<Tensor> {
        let mut maps = Vec::with_capacity(k_over_t.len());
        for &t in k_over_t {
            let emb = Tensor::from_vec(self.sinusoidal(t), &[self.time_embed_dim])?;
            let hdn = emb
                .contract(&self.time_w1, &[(0, 0)])?
                .add(&self.time_b1)?
                .gelu()?;
            let ch = hdn.contract(&self.time_w2, &[(0, 0)])?.add(&self.time_b2)?;
            maps.push(
                ch.reshape(&[self.time_channels, 1, 1])?
                    .expand(&[self.time_channels, h, w])?,
            );
        }
        let refs: Vec<&Tensor> = maps.iter().collect();
        Tensor::stack(&refs)
    }
}

impl VPredict for Predictor {
    fn predict_v(
        &self,
        z_norm: &Tensor,
        y_k: &Tensor,
        c_latent: &Tensor,
        k_over_t: &[f64],
    ) -> Result<Tensor> {
        if z_norm.shape() != y_k.shape() {
            return Err(Error::Dimension(format!(
                "predictor: latent inputs differ ({:?} vs {:?})",
                z_norm.shape(),
                y_k.shape()
            )));
        }
        if k_over_t.len() != z_norm.shape()[0] {
            return Err(Error::Dimension(format!(
                "predictor: {} diffusion times for batch {}",
                k_over_t.len(),
                z_norm.shape()[0]
            )));
        }
        let (h, w) = (z_norm.shape()[2], z_norm.shape()[3]);
        let tmaps = self.time_maps(k_over_t, h, w).at("predictor.time")?;
        let joint = Tensor::concat(&[z_norm, y_k, c_latent, &tmaps], 1).at("predictor.lift")?;
        let x = self.lift.forward(&joint).at("predictor.lift")?;
        let x = self.block_in.forward(&x, c_latent).at("predictor.block_in")?;
        let x = self.res.forward(&x).at("predictor.residual")?;
        let x = self.block_out.forward(&x, c_latent).at("predictor.block_out")?;
        self.head.forward(&x).at("predictor.head")
    }
}

impl HasParams for Predictor {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "time_w1"), &self.time_w1);
        f(&join(prefix, "time_b1"), &self.time_b1);
        f(&join(prefix, "time_w2"), &self.time_w2);
        f(&join(prefix, "time_b2"), &self.time_b2);
        self.lift.visit_params(&join(prefix, "lift"), f);
        self.block_in.visit_params(&join(prefix, "block_in"), f);
        self.res.visit_params(&join(prefix, "res"), f);
        self.block_out.visit_params(&join(prefix, "block_out"), f);
        self.head.visit_params(&join(prefix, "head"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "time_w1"), &mut self.time_w1);
        f(&join(prefix, "time_b1"), &mut self.time_b1);
        f(&join(prefix, "time_w2"), &mut self.time_w2);
        f(&join(prefix, "time_b2"), &mut self.time_b2);
        self.lift.visit_params_mut(&join(prefix, "lift"), f);
        self.block_in.visit_params_mut(&join(prefix, "block_in"), f);
        self.res.visit_params_mut(&join(prefix, "res"), f);
        self.block_out.visit_params_mut(&join(prefix, "block_out"), f);
        self.head.visit_params_mut(&join(prefix, "head"), f);
    }
}

/// Conditioning tensors on both grids for one batch of months.
#[derive(Debug, Clone)]
pub struct CondPair {
    pub phys: Tensor,
    pub latent: Tensor,
}

/// The full emulator: seasonal embedding, the three networks, the latent
/// normalizer, and the resample-only conditioning pathway onto the
/// latent grid.
#[derive(Clone)]
pub struct EmulatorModel {
    pub cfg: RunConfig,
    pub phys_grid: GridSpec,
    pub latent_grid: GridSpec,
    pub seasonal: SeasonalEmbedding,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub predictor: Predictor,
    pub normalizer: LatentNormalizer,
    cond_resampler: S2Conv,
    static_resampler: S2Conv,
}

impl EmulatorModel {
    pub fn new(cfg: &RunConfig, rng: &mut RngStream) -> Result<EmulatorModel> {
        cfg.validate()?;
        let phys = GridSpec::equiangular(cfg.n_lat, cfg.n_lon)?;
        let latent = GridSpec::equiangular(cfg.latent_n_lat, cfg.latent_n_lon)?;
        Ok(EmulatorModel {
            seasonal: SeasonalEmbedding::new(&phys, rng)?,
            encoder: Encoder::new(cfg, &phys, &latent, rng)?,
            decoder: Decoder::new(cfg, &phys, &latent, rng)?,
            predictor: Predictor::new(cfg, &latent, rng)?,
            normalizer: LatentNormalizer::new(),
            cond_resampler: S2Conv::resample(&phys, cfg.phys_l_max, &latent, cfg.latent_l_max)?,
            static_resampler: S2Conv::resample(&phys, cfg.phys_l_max, &latent, cfg.latent_l_max)?,
            phys_grid: phys,
            latent_grid: latent,
            cfg: cfg.clone(),
        })
    }

    /// Assemble the encoder input `(B, prog+static+forcing, H, W)` from
    /// standardized pieces. `statics` is unbatched `(static, H, W)`.
    pub fn encoder_input(
        &self,
        x_prog: &Tensor,
        statics: &Tensor,
        forcings: &Tensor,
    ) -> Result<Tensor> {
        let batch = x_prog.shape()[0];
        let s = statics.unsqueeze(0)?.expand(&[
            batch,
            statics.shape()[0],
            statics.shape()[1],
            statics.shape()[2],
        ])?;
        Tensor::concat(&[x_prog, &s, forcings], 1)
    }

    /// Conditioning tensors on the physical and latent grids for a batch
    /// of months with standardized forcings `(B, 3, H, W)`.
    pub fn conditioning(&self, forcings_std: &Tensor, months: &[usize]) -> Result<CondPair> {
        let seasonal = self.seasonal.embed_batch(months)?;
        let phys = crate::conditioning::build_conditioning(forcings_std, &seasonal)?;
        let latent = self.cond_resampler.forward(&phys)?;
        Ok(CondPair { phys, latent })
    }

    /// Static fields resampled to the latent grid (for the decoder switch).
    pub fn statics_on_latent(&self, statics_std: &Tensor, batch: usize) -> Result<Tensor> {
        let s = statics_std.unsqueeze(0)?;
        let s = self.static_resampler.forward(&s)?;
        let shape = [batch, s.shape()[1], s.shape()[2], s.shape()[3]];
        s.expand(&shape)
    }

    pub fn encode(&self, x_full: &Tensor, c: &CondPair) -> Result<(Tensor, Tensor)> {
        self.encoder.forward(x_full, &c.phys, &c.latent)
    }

    pub fn decode(
        &self,
        z: &Tensor,
        c: &CondPair,
        statics_latent: Option<&Tensor>,
    ) -> Result<Tensor> {
        self.decoder.forward(z, &c.latent, &c.phys, statics_latent)
    }

    /// Trainable parameter counts per component.
    pub fn param_counts(&self) -> Vec<(String, usize)> {
        let count = |m: &dyn HasParams| -> usize {
            let mut n = 0;
            m.visit_params("", &mut |_, t| n += t.numel());
            n
        };
        vec![
            ("seasonal".to_string(), count(&self.seasonal)),
            ("encoder".to_string(), count(&self.encoder)),
            ("decoder".to_string(), count(&self.decoder)),
            ("predictor".to_string(), count(&self.predictor)),
            ("normalizer".to_string(), count(&self.normalizer)),
        ]
    }
}

impl HasParams for EmulatorModel {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.seasonal.visit_params(&join(prefix, "seasonal"), f);
        self.encoder.visit_params(&join(prefix, "encoder"), f);
        self.decoder.visit_params(&join(prefix, "decoder"), f);
        self.predictor.visit_params(&join(prefix, "predictor"), f);
        self.normalizer.visit_params(&join(prefix, "normalizer"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.seasonal.visit_params_mut(&join(prefix, "seasonal"), f);
        self.encoder.visit_params_mut(&join(prefix, "encoder"), f);
        self.decoder.visit_params_mut(&join(prefix, "decoder"), f);
        self.predictor.visit_params_mut(&join(prefix, "predictor"), f);
        self.normalizer.visit_params_mut(&join(prefix, "normalizer"), f);
    }
}

// ── Checkpoints ─────────────────────────────────────────────────────

const WEIGHTS_FILE: &str = "weights.bin";
const MANIFEST_FILE: &str = "manifest.txt";

/// Write raw weights, EMA shadow weights, the full config, and the seed
/// into `dir` as a tensor container plus a text manifest of
/// name / shape / byte offset triples.
pub fn save_checkpoint(
    dir: &Path,
    model: &EmulatorModel,
    ema: &BTreeMap<String, Vec<f64>>,
    seed: u64,
    notes: &[(String, String)],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut writer = io::ContainerWriter::create(&dir.join(WEIGHTS_FILE))?;
    let params = collect_params(model);
    for (name, t) in &params {
        writer.append(name, t)?;
    }
    for (name, t) in &params {
        let shadow = ema.get(name).ok_or_else(|| {
            Error::Numeric(format!("checkpoint: EMA shadow missing for `{name}`"))
        })?;
        writer.append(&format!("ema.{name}"), &Tensor::from_vec(shadow.clone(), t.shape())?)?;
    }
    let entries = writer.finish()?;

    let mut manifest = String::new();
    manifest.push_str("format = climem-checkpoint-1\n");
    manifest.push_str(&format!("seed = {seed}\n"));
    for (k, v) in notes {
        manifest.push_str(&format!("note.{k} = {v}\n"));
    }
    manifest.push_str("config_begin\n");
    manifest.push_str(&model.cfg.to_text());
    manifest.push_str("config_end\n");
    manifest.push_str("tensors:\n");
    for (name, shape, offset) in &entries {
        let dims = if shape.is_empty() {
            "scalar".to_string()
        } else {
            shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x")
        };
        manifest.push_str(&format!("{name} {dims} {offset}\n"));
    }
    std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

pub struct Checkpoint {
    pub model: EmulatorModel,
    pub ema: BTreeMap<String, Vec<f64>>,
    pub seed: u64,
    pub notes: BTreeMap<String, String>,
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest = std::fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| Error::Io(format!("reading checkpoint manifest: {e}")))?;
    let mut seed = 0u64;
    let mut notes = BTreeMap::new();
    let mut config_text = String::new();
    let mut offsets: Vec<(String, u64)> = Vec::new();
    let mut in_config = false;
    let mut in_tensors = false;
    for line in manifest.lines() {
        if line == "config_begin" {
            in_config = true;
            continue;
        }
        if line == "config_end" {
            in_config = false;
            continue;
        }
        if line == "tensors:" {
            in_tensors = true;
            continue;
        }
        if in_config {
            config_text.push_str(line);
            config_text.push('\n');
        } else if in_tensors {
            let mut it = line.split_whitespace();
            let name = it.next().ok_or_else(|| {
                Error::Data("checkpoint manifest: malformed tensor line".into())
            })?;
            let _dims = it.next();
            let off: u64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Data("checkpoint manifest: missing offset".into()))?;
            offsets.push((name.to_string(), off));
        } else if let Some(rest) = line.strip_prefix("seed = ") {
            seed = rest
                .parse()
                .map_err(|_| Error::Data("checkpoint manifest: bad seed".into()))?;
        } else if let Some(rest) = line.strip_prefix("note.") {
            if let Some((k, v)) = rest.split_once(" = ") {
                notes.insert(k.to_string(), v.to_string());
            }
        }
    }
    let cfg = RunConfig::from_text(&config_text)?;
    let mut rng = RngStream::new(seed, 0);
    let mut model = EmulatorModel::new(&cfg, &mut rng)?;

    let weights = dir.join(WEIGHTS_FILE);
    let mut table: BTreeMap<String, Tensor> = BTreeMap::new();
    for (name, off) in &offsets {
        table.insert(name.clone(), io::read_container_entry(&weights, *off)?);
    }
    let mut missing: Vec<String> = Vec::new();
    model.visit_params_mut("", &mut |name, t| match table.get(name) {
        Some(v) if v.shape() == t.shape() => *t = v.detach().param(),
        _ => missing.push(name.to_string()),
    });
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "checkpoint: missing or mismatched tensors: {missing:?}"
        )));
    }
    let mut ema = BTreeMap::new();
    for (name, t) in table {
        if let Some(stripped) = name.strip_prefix("ema.") {
            ema.insert(stripped.to_string(), t.to_vec());
        }
    }
    Ok(Checkpoint {
        model,
        ema,
        seed,
        notes,
    })
}
