//! Joint optimization of encoder, decoder, predictor, and the latent
//! normalizer: the five-component loss, AdamW with decoupled weight
//! decay, exponential-moving-average weights, and best-model
//! checkpointing on the validation split.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::RunConfig;
use crate::data::MonthlyDataset;
use crate::diffusion::{build_cosine_schedule, DiffusionSchedule, VPredict};
use crate::error::{Error, Result, ResultExt};
use crate::networks::{kl_divergence, reparameterize, save_checkpoint, EmulatorModel};
use crate::params::{zero_grads, HasParams};
use crate::rng::RngStream;
use crate::tensor::{no_grad, Tensor};

/// Weighted loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub diff: f64,
    pub kl: f64,
    pub std: f64,
    pub mean: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &RunConfig) -> LossWeights {
        LossWeights {
            rec: cfg.lambda_rec,
            diff: cfg.lambda_diff,
            kl: cfg.lambda_kl,
            std: cfg.lambda_std,
            mean: cfg.lambda_mean,
        }
    }
}

/// Scalar values of every loss component for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub rec: f64,
    pub diff: f64,
    pub kl: f64,
    pub std: f64,
    pub mean: f64,
}

impl LossBreakdown {
    pub fn csv_header() -> &'static str {
        "total,rec,diff,kl,std,mean"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.total, self.rec, self.diff, self.kl, self.std, self.mean
        )
    }
}

/// One batch of consecutive-month sample pairs, standardized.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub x_prog: Tensor,      // (B, prog, H, W)
    pub x_prog_next: Tensor, // (B, prog, H, W)
    pub f: Tensor,           // (B, 3, H, W)
    pub f_next: Tensor,
    pub months: Vec<usize>,
    pub months_next: Vec<usize>,
}

/// Whole-record standardized blocks, sliced into batches.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub x_std: Tensor,
    pub f_std: Tensor,
    pub statics_std: Tensor,
    pub months: Vec<usize>,
}

pub fn prepare(ds: &MonthlyDataset) -> Result<PreparedData> {
    Ok(PreparedData {
        x_std: ds.x_std(0, ds.len())?,
        f_std: ds.f_std(0, ds.len())?,
        statics_std: ds.statics_std()?,
        months: ds.months.clone(),
    })
}

impl PreparedData {
    /// Build a batch from the pair start indices (pair `t` is `(t, t+1)`).
    pub fn batch(&self, pair_starts: &[usize]) -> Result<TrainBatch> {
        let gather = |src: &Tensor, offset: usize| -> Result<Tensor> {
            let parts: Vec<Tensor> = pair_starts
                .iter()
                .map(|&t| src.slice(0, t + offset, 1)?.reshape(&src.shape()[1..]))
                .collect::<Result<_>>()?;
            let refs: Vec<&Tensor> = parts.iter().collect();
            Tensor::stack(&refs)
        };
        Ok(TrainBatch {
            x_prog: gather(&self.x_std, 0)?.detach(),
            x_prog_next: gather(&self.x_std, 1)?.detach(),
            f: gather(&self.f_std, 0)?.detach(),
            f_next: gather(&self.f_std, 1)?.detach(),
            months: pair_starts.iter().map(|&t| self.months[t]).collect(),
            months_next: pair_starts.iter().map(|&t| self.months[t + 1]).collect(),
        })
    }
}

/// Mean squared error over all elements.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.sub(b)?.square()?.mean_all()
}

/// Unweighted loss component tensors (kept separate so tests can probe
/// each term and so the weighted sum is assembled in one place).
pub struct LossTerms {
    pub rec: Tensor,
    pub diff: Tensor,
    pub kl: Tensor,
    pub std: Tensor,
    pub mean: Tensor,
}

/// Weighted sum and scalar breakdown.
pub fn combine(terms: &LossTerms, w: &LossWeights) -> Result<(Tensor, LossBreakdown)> {
    let total = terms
        .rec
        .scale(w.rec)?
        .add(&terms.diff.scale(w.diff)?)?
        .add(&terms.kl.scale(w.kl)?)?
        .add(&terms.std.scale(w.std)?)?
        .add(&terms.mean.scale(w.mean)?)?;
    let bd = LossBreakdown {
        total: total.item()?,
        rec: terms.rec.item()?,
        diff: terms.diff.item()?,
        kl: terms.kl.item()?,
        std: terms.std.item()?,
        mean: terms.mean.item()?,
    };
    Ok((total, bd))
}

/// Noise sources consumed by one loss evaluation, drawn in a fixed order:
/// the reparameterization noise, the per-element diffusion step indices,
/// and the diffusion noise.
pub struct NoiseDraws {
    pub eps_v: Tensor,
    pub ks: Vec<usize>,
    pub eps_d: Tensor,
}

pub fn draw_noise(
    rng: &mut RngStream,
    batch: usize,
    latent_shape: &[usize],
    steps: usize,
) -> Result<NoiseDraws> {
    let mut shape = vec![batch];
    shape.extend_from_slice(latent_shape);
    let eps_v = rng.gaussian(&shape)?;
    let ks: Vec<usize> = (0..batch).map(|_| rng.below(steps as u64) as usize + 1).collect();
    let eps_d = rng.gaussian(&shape)?;
    Ok(NoiseDraws { eps_v, ks, eps_d })
}

/// Compute the five loss components for one batch.
///
/// Order of operations: encode both months; sample `z_t`; reconstruct
/// month `t`; build the (detached) normalized diffusion target from the
/// next month's posterior mean; noise it at per-element steps; predict
/// the v-target with the predictor conditioned on the normalized
/// stochastic latent `z_t`; add the prior-matching penalties that pull
/// the normalizer scalars toward the batch latent statistics.
pub fn loss_components(
    model: &EmulatorModel,
    batch: &TrainBatch,
    statics_std: &Tensor,
    sched: &DiffusionSchedule,
    noise: &NoiseDraws,
) -> Result<LossTerms> {
    let cfg = &model.cfg;
    let c_t = model.conditioning(&batch.f, &batch.months)?;
    let c_next = model.conditioning(&batch.f_next, &batch.months_next)?;

    let x_full_t = model.encoder_input(&batch.x_prog, statics_std, &batch.f)?;
    let x_full_next = model.encoder_input(&batch.x_prog_next, statics_std, &batch.f_next)?;
    let (mu_t, lv_t) = model.encode(&x_full_t, &c_t).at("loss rec")?;
    let (mu_next, _lv_next) = model.encode(&x_full_next, &c_next).at("loss diff target")?;

    let z_t = reparameterize(&mu_t, &lv_t, &noise.eps_v)?;
    let statics_latent = if cfg.decoder_receives_static {
        Some(model.statics_on_latent(statics_std, batch.x_prog.shape()[0])?)
    } else {
        None
    };
    let x_hat = model.decode(&z_t, &c_t, statics_latent.as_ref()).at("loss rec")?;
    let rec = mse(&x_hat, &batch.x_prog).at("loss rec")?;

    // Diffusion target: normalized next-month posterior mean. Detached by
    // default so the target path trains neither the encoder nor the
    // normalizer; the conditioning path below still does.
    let target_mu = if cfg.couple_diffusion_target {
        mu_next.clone()
    } else {
        mu_next.detach()
    };
    let y0 = if cfg.couple_diffusion_target {
        model.normalizer.normalize(&target_mu)?
    } else {
        model.normalizer.normalize(&target_mu)?.detach()
    };

    // Per-element noising at the drawn steps.
    let batch_n = y0.shape()[0];
    let mut sa = Vec::with_capacity(batch_n);
    let mut sb = Vec::with_capacity(batch_n);
    for &k in &noise.ks {
        if k < 1 || k > sched.steps {
            return Err(Error::Data(format!("diffusion step {k} out of range")));
        }
        let ab = sched.alpha_bar(k);
        sa.push(ab.sqrt());
        sb.push((1.0 - ab).sqrt());
    }
    let bshape = [batch_n, 1, 1, 1];
    let sa_t = Tensor::from_vec(sa, &bshape)?.expand(y0.shape())?;
    let sb_t = Tensor::from_vec(sb, &bshape)?.expand(y0.shape())?;
    let y_k = y0.mul(&sa_t)?.add(&noise.eps_d.mul(&sb_t)?)?;
    let v_target = noise.eps_d.mul(&sa_t)?.sub(&y0.mul(&sb_t)?)?;

    let z_norm = model.normalizer.normalize(&z_t)?;
    let k_over_t: Vec<f64> = noise
        .ks
        .iter()
        .map(|&k| k as f64 / sched.steps as f64)
        .collect();
    let v_hat = model
        .predictor
        .predict_v(&z_norm, &y_k, &c_t.latent, &k_over_t)
        .at("loss diff")?;
    let diff = mse(&v_hat, &v_target).at("loss diff")?;

    let kl = kl_divergence(&mu_t, &lv_t).at("loss kl")?;

    // Scalar statistics of the batch's target latent means, detached.
    let mu_stats = mu_next.detach();
    let n = mu_stats.numel() as f64;
    let mean_t: f64 = mu_stats.data().iter().sum::<f64>() / n;
    let var_t: f64 = mu_stats
        .data()
        .iter()
        .map(|v| (v - mean_t) * (v - mean_t))
        .sum::<f64>()
        / n;
    let std_t = var_t.sqrt();
    let sigma_p = model.normalizer.rho.exp()?;
    let std_term = sigma_p.add_scalar(-std_t)?.square()?.sum_all()?;
    let mean_term = model.normalizer.mu.add_scalar(-mean_t)?.square()?.sum_all()?;

    Ok(LossTerms {
        rec,
        diff,
        kl,
        std: std_term,
        mean: mean_term,
    })
}

/// Total loss with component breakdown. Fails with a numeric error naming
/// the component if any term is non-finite.
pub fn total_loss(
    model: &EmulatorModel,
    batch: &TrainBatch,
    statics_std: &Tensor,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    noise: &NoiseDraws,
) -> Result<(Tensor, LossBreakdown)> {
    let terms = loss_components(model, batch, statics_std, sched, noise)?;
    combine(&terms, weights)
}

/// AdamW with decoupled weight decay, plus the EMA shadow weights.
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_norm_cap: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamW {
    pub fn from_config(cfg: &RunConfig) -> AdamW {
        AdamW {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            grad_norm_cap: cfg.grad_norm_cap,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from the gradients accumulated on the model's
    /// parameters. Aborts without touching the weights if the global
    /// gradient norm exceeds the cap.
    pub fn step<M: HasParams>(&mut self, model: &mut M) -> Result<f64> {
        let mut sq = 0.0;
        model.visit_params("", &mut |_, t| {
            if let Some(g) = t.grad() {
                sq += g.iter().map(|v| v * v).sum::<f64>();
            }
        });
        let norm = sq.sqrt();
        if !norm.is_finite() || norm > self.grad_norm_cap {
            return Err(Error::Numeric(format!(
                "gradient explosion: norm {norm:.3e} exceeds cap {:.3e}; step aborted",
                self.grad_norm_cap
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps, wd) = (self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        let (m_map, v_map) = (&mut self.m, &mut self.v);
        let mut failure: Option<Error> = None;
        model.visit_params_mut("", &mut |name, w| {
            if failure.is_some() {
                return;
            }
            let n = w.numel();
            let grad = w.grad().unwrap_or_else(|| vec![0.0; n]);
            let m = m_map.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = v_map.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let mut new = w.to_vec();
            for i in 0..n {
                m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                new[i] -= lr * m_hat / (v_hat.sqrt() + eps) + lr * wd * new[i];
            }
            match Tensor::from_vec(new, w.shape()) {
                Ok(t) => *w = t.param(),
                Err(e) => failure = Some(e.at(&format!("optimizer update of `{name}`"))),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(norm)
    }
}

/// Exponential moving average of the model weights.
pub struct EmaWeights {
    pub decay: f64,
    shadow: BTreeMap<String, Vec<f64>>,
}

impl EmaWeights {
    /// Rehydrate from checkpointed shadow values.
    pub fn from_shadow(decay: f64, shadow: BTreeMap<String, Vec<f64>>) -> EmaWeights {
        EmaWeights { decay, shadow }
    }

    pub fn new<M: HasParams>(decay: f64, model: &M) -> EmaWeights {
        let mut shadow = BTreeMap::new();
        model.visit_params("", &mut |name, t| {
            shadow.insert(name.to_string(), t.to_vec());
        });
        EmaWeights { decay, shadow }
    }

    /// Zeroed shadow (update-rule arithmetic starts from nothing).
    pub fn zeroed<M: HasParams>(decay: f64, model: &M) -> EmaWeights {
        let mut ema = Self::new(decay, model);
        for v in ema.shadow.values_mut() {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        ema
    }

    /// `shadow <- decay * shadow + (1 - decay) * weight`
    pub fn update<M: HasParams>(&mut self, model: &M) {
        let d = self.decay;
        model.visit_params("", &mut |name, t| {
            let s = self.shadow.get_mut(name).expect("shadow tracks every parameter");
            for (si, wi) in s.iter_mut().zip(t.data()) {
                *si = d * *si + (1.0 - d) * wi;
            }
        });
    }

    pub fn shadow(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.shadow
    }

    /// Clone of the model carrying the EMA weights.
    pub fn model_with(&self, model: &EmulatorModel) -> Result<EmulatorModel> {
        let mut out = model.clone();
        let mut failure: Option<Error> = None;
        out.visit_params_mut("", &mut |name, t| {
            if failure.is_some() {
                return;
            }
            match self.shadow.get(name) {
                Some(v) => match Tensor::from_vec(v.clone(), t.shape()) {
                    Ok(nt) => *t = nt.param(),
                    Err(e) => failure = Some(e),
                },
                None => failure = Some(Error::Numeric(format!("EMA shadow missing `{name}`"))),
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

/// One optimization step: zero grads, evaluate the joint loss, backward,
/// AdamW update on all networks and the normalizer, EMA update.
pub fn train_step(
    model: &mut EmulatorModel,
    batch: &TrainBatch,
    statics_std: &Tensor,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    opt: &mut AdamW,
    ema: &mut EmaWeights,
    rng: &mut RngStream,
) -> Result<LossBreakdown> {
    zero_grads(model);
    let latent_shape = [
        model.cfg.latent_channels,
        model.cfg.latent_n_lat,
        model.cfg.latent_n_lon,
    ];
    let noise = draw_noise(rng, batch.months.len(), &latent_shape, sched.steps)?;
    let (loss, bd) = total_loss(model, batch, statics_std, sched, weights, &noise)?;
    loss.backward()?;
    opt.step(model)?;
    ema.update(model);
    Ok(bd)
}

/// Per-epoch training record.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_train: Vec<LossBreakdown>,
    pub epoch_val: Vec<LossBreakdown>,
    pub best_epoch: usize,
    pub best_val: f64,
}

fn mean_breakdown(items: &[LossBreakdown]) -> LossBreakdown {
    let n = items.len().max(1) as f64;
    let mut acc = LossBreakdown {
        total: 0.0,
        rec: 0.0,
        diff: 0.0,
        kl: 0.0,
        std: 0.0,
        mean: 0.0,
    };
    for b in items {
        acc.total += b.total / n;
        acc.rec += b.rec / n;
        acc.diff += b.diff / n;
        acc.kl += b.kl / n;
        acc.std += b.std / n;
        acc.mean += b.mean / n;
    }
    acc
}

/// Validation loss with a fixed noise stream (derived from the seed but
/// independent of the epoch, so saved and reloaded checkpoints reproduce
/// the value exactly).
pub fn validation_loss(
    model: &EmulatorModel,
    data: &PreparedData,
    val_pairs: &[usize],
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    seed: u64,
) -> Result<LossBreakdown> {
    let mut rng = RngStream::new(seed, 300);
    let latent_shape = [
        model.cfg.latent_channels,
        model.cfg.latent_n_lat,
        model.cfg.latent_n_lon,
    ];
    let mut per_batch = Vec::new();
    no_grad(|| -> Result<()> {
        for chunk in val_pairs.chunks(model.cfg.batch_size) {
            let batch = data.batch(chunk)?;
            let noise = draw_noise(&mut rng, chunk.len(), &latent_shape, sched.steps)?;
            let (_, bd) = total_loss(model, &batch, &data.statics_std, sched, weights, &noise)?;
            per_batch.push(bd);
        }
        Ok(())
    })?;
    Ok(mean_breakdown(&per_batch))
}

/// Full training loop with best-model checkpointing on validation total
/// loss evaluated with EMA weights. The checkpoint contains raw and EMA
/// weights, the full config, and the seed.
pub fn train_loop(
    ds: &MonthlyDataset,
    cfg: &RunConfig,
    out_dir: &Path,
    mut progress: impl FnMut(usize, &LossBreakdown, &LossBreakdown),
) -> Result<TrainReport> {
    cfg.validate()?;
    let data = prepare(ds)?;
    let sched = build_cosine_schedule(cfg.diffusion_steps, cfg.schedule_offset)?;
    let weights = LossWeights::from_config(cfg);

    let (t0, t1) = ds.train_range;
    let mut train_pairs: Vec<usize> = (t0..t1.saturating_sub(1)).collect();
    if cfg.train_pairs > 0 && cfg.train_pairs < train_pairs.len() {
        train_pairs.truncate(cfg.train_pairs);
    }
    if train_pairs.is_empty() {
        return Err(Error::Config("no consecutive-month training pairs".into()));
    }
    let (v0, v1) = ds.val_range;
    let val_pairs: Vec<usize> = (v0..v1.saturating_sub(1)).collect();
    if val_pairs.is_empty() {
        return Err(Error::Config("empty validation split".into()));
    }

    let root = RngStream::new(cfg.seed, 200);
    let mut init_rng = root.child(1);
    let mut model = EmulatorModel::new(cfg, &mut init_rng)?;
    let mut opt = AdamW::from_config(cfg);
    let mut ema = EmaWeights::new(cfg.ema_decay, &model);
    let mut noise_rng = root.child(3);

    let mut report = TrainReport {
        epoch_train: Vec::new(),
        epoch_val: Vec::new(),
        best_epoch: 0,
        best_val: f64::INFINITY,
    };

    for epoch in 0..cfg.epochs {
        let mut order = train_pairs.clone();
        root.child(2).child(epoch as u64).shuffle(&mut order);
        let mut per_batch = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.batch(chunk)?;
            let bd = train_step(
                &mut model,
                &batch,
                &data.statics_std,
                &sched,
                &weights,
                &mut opt,
                &mut ema,
                &mut noise_rng,
            )
            .at(&format!("epoch {epoch}"))?;
            per_batch.push(bd);
        }
        let train_bd = mean_breakdown(&per_batch);

        let eval_model = ema.model_with(&model)?;
        let val_bd = validation_loss(&eval_model, &data, &val_pairs, &sched, &weights, cfg.seed)?;
        progress(epoch, &train_bd, &val_bd);

        if val_bd.total < report.best_val {
            report.best_val = val_bd.total;
            report.best_epoch = epoch;
            save_checkpoint(
                out_dir,
                &model,
                ema.shadow(),
                cfg.seed,
                &[
                    ("epoch".to_string(), epoch.to_string()),
                    ("val_total".to_string(), format!("{}", val_bd.total)),
                ],
            )?;
        }
        report.epoch_train.push(train_bd);
        report.epoch_val.push(val_bd);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            n_lat: 10,
            n_lon: 20,
            phys_l_max: 8,
            latent_n_lat: 4,
            latent_n_lon: 8,
            latent_l_max: 3,
            prog_channels: 4,
            static_channels: 2,
            latent_channels: 4,
            enc_hidden: 6,
            dec_hidden: 6,
            pred_hidden: 6,
            enc_rank: 3,
            dec_rank: 3,
            pred_rank: 3,
            enc_cond_hidden: 3,
            dec_cond_hidden: 3,
            pred_cond_hidden: 3,
            mlp_hidden: 8,
            time_embed_dim: 8,
            time_channels: 2,
            months_total: 30,
            val_months: 5,
            train_months: 12,
            train_pairs: 0,
            epochs: 2,
            ..RunConfig::toy()
        }
    }

    fn setup() -> (RunConfig, MonthlyDataset, EmulatorModel, PreparedData, DiffusionSchedule) {
        let cfg = tiny_cfg();
        let ds = generate_synthetic(&cfg, 5).unwrap();
        let mut rng = RngStream::new(1, 0);
        let model = EmulatorModel::new(&cfg, &mut rng).unwrap();
        let data = prepare(&ds).unwrap();
        let sched = build_cosine_schedule(cfg.diffusion_steps, cfg.schedule_offset).unwrap();
        (cfg, ds, model, data, sched)
    }

    #[test]
    fn vanishing_components_give_zero_total() {
        // Perfect reconstruction, matched v-prediction, prior-matching
        // posterior, and matched normalizer statistics all vanish.
        let x = RngStream::new(2, 0).gaussian(&[2, 3]).unwrap();
        assert_eq!(mse(&x, &x).unwrap().item().unwrap(), 0.0);
        let zero = Tensor::scalar(0.0);
        let terms = LossTerms {
            rec: zero.clone(),
            diff: zero.clone(),
            kl: zero.clone(),
            std: zero.clone(),
            mean: zero.clone(),
        };
        let w = LossWeights {
            rec: 1.0,
            diff: 0.5,
            kl: 0.01,
            std: 1.0,
            mean: 1.0,
        };
        let (total, bd) = combine(&terms, &w).unwrap();
        assert_eq!(total.item().unwrap(), 0.0);
        assert_eq!(bd.total, 0.0);
    }

    #[test]
    fn breakdown_sums_to_total_and_weights_isolate_components() {
        let (cfg, _ds, model, data, sched) = setup();
        let batch = data.batch(&[5, 6, 7]).unwrap();
        let latent_shape = [cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon];
        let mut rng = RngStream::new(7, 1);
        let noise = draw_noise(&mut rng, 3, &latent_shape, sched.steps).unwrap();
        let w1 = LossWeights::from_config(&cfg);
        let (_, bd1) =
            total_loss(&model, &batch, &data.statics_std, &sched, &w1, &noise).unwrap();
        let recombined = w1.rec * bd1.rec
            + w1.diff * bd1.diff
            + w1.kl * bd1.kl
            + w1.std * bd1.std
            + w1.mean * bd1.mean;
        assert!((recombined - bd1.total).abs() <= 1e-12);

        // Doubling the diffusion weight doubles exactly that contribution.
        let mut w2 = w1;
        w2.diff *= 2.0;
        let (_, bd2) =
            total_loss(&model, &batch, &data.statics_std, &sched, &w2, &noise).unwrap();
        assert_eq!(bd1.rec, bd2.rec);
        assert_eq!(bd1.diff, bd2.diff);
        assert_eq!(bd1.kl, bd2.kl);
        let delta = bd2.total - bd1.total;
        assert!((delta - w1.diff * bd1.diff).abs() <= 1e-12);
    }

    #[test]
    fn every_parameter_group_receives_gradient() {
        let (cfg, _ds, model, data, sched) = setup();
        let batch = data.batch(&[3, 4, 8, 9]).unwrap();
        let latent_shape = [cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon];
        let mut rng = RngStream::new(9, 1);
        let noise = draw_noise(&mut rng, 4, &latent_shape, sched.steps).unwrap();
        let w = LossWeights::from_config(&cfg);
        zero_grads(&model);
        let (loss, _) = total_loss(&model, &batch, &data.statics_std, &sched, &w, &noise).unwrap();
        loss.backward().unwrap();
        for group in [
            "seasonal",
            "encoder",
            "encoder.meta",
            "decoder",
            "predictor",
            "normalizer",
        ] {
            let mut live = false;
            model.visit_params("", &mut |name, t| {
                if name.starts_with(group) {
                    if let Some(g) = t.grad() {
                        live |= g.iter().any(|&v| v != 0.0);
                    }
                }
            });
            assert!(live, "parameter group `{group}` got no gradient");
        }
    }

    #[test]
    fn diffusion_target_is_detached_from_next_month_encoder_path() {
        let (cfg, _ds, model, data, sched) = setup();
        let latent_shape = [cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon];
        let mut rng = RngStream::new(11, 1);
        let noise = draw_noise(&mut rng, 2, &latent_shape, sched.steps).unwrap();
        // Diffusion-only loss; probe gradients w.r.t. the batch inputs.
        let w = LossWeights {
            rec: 0.0,
            diff: 1.0,
            kl: 0.0,
            std: 0.0,
            mean: 0.0,
        };
        let base = data.batch(&[2, 6]).unwrap();
        let x_t = base.x_prog.detach().param();
        let x_next = base.x_prog_next.detach().param();
        let batch = TrainBatch {
            x_prog: x_t.clone(),
            x_prog_next: x_next.clone(),
            ..base.clone()
        };
        let (loss, _) = total_loss(&model, &batch, &data.statics_std, &sched, &w, &noise).unwrap();
        loss.backward().unwrap();
        // Conditioning path through the sampled latent carries gradient;
        // the target path does not.
        let gx = x_t.grad().expect("current month must receive gradient");
        assert!(gx.iter().any(|&v| v != 0.0));
        let gn = x_next.grad().unwrap_or_default();
        assert!(
            gn.iter().all(|&v| v == 0.0),
            "detached target leaked gradient into the next-month encoder path"
        );

        // With the coupling switch on, the target path carries gradient.
        let mut coupled = model.clone();
        coupled.cfg.couple_diffusion_target = true;
        let x_next2 = base.x_prog_next.detach().param();
        let batch2 = TrainBatch {
            x_prog: base.x_prog.detach(),
            x_prog_next: x_next2.clone(),
            ..base
        };
        let (loss2, _) =
            total_loss(&coupled, &batch2, &data.statics_std, &sched, &w, &noise).unwrap();
        loss2.backward().unwrap();
        let gn2 = x_next2.grad().expect("coupled target must carry gradient");
        assert!(gn2.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn predictor_sees_the_stochastic_latent_not_the_mean() {
        // Shifting only the encoder's log-variance head changes z_t but
        // not mu_t; the diffusion loss must respond.
        let (cfg, _ds, model, data, sched) = setup();
        let latent_shape = [cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon];
        let mut rng = RngStream::new(13, 1);
        let noise = draw_noise(&mut rng, 2, &latent_shape, sched.steps).unwrap();
        let w = LossWeights {
            rec: 0.0,
            diff: 1.0,
            kl: 0.0,
            std: 0.0,
            mean: 0.0,
        };
        let batch = data.batch(&[4, 10]).unwrap();
        let (_, bd1) = total_loss(&model, &batch, &data.statics_std, &sched, &w, &noise).unwrap();
        let mut shifted = model.clone();
        shifted.encoder.visit_params_mut("", &mut |name, t| {
            if name == "head_logvar.bias" {
                *t = t.detach().add_scalar(2.0).unwrap().param();
            }
        });
        let (_, bd2) =
            total_loss(&shifted, &batch, &data.statics_std, &sched, &w, &noise).unwrap();
        assert!(
            (bd1.diff - bd2.diff).abs() > 1e-12,
            "widening the posterior must move the diffusion loss through z_t"
        );
    }

    #[test]
    fn exactly_one_reparameterization_draw_per_loss() {
        // The noise budget per loss call: one eps_v block, one k block,
        // one eps_d block; nothing is drawn for the next month's latent.
        let (cfg, _ds, _model, _data, sched) = setup();
        let latent: usize = cfg.latent_channels * cfg.latent_n_lat * cfg.latent_n_lon;
        let mut rng = RngStream::new(15, 1);
        let before = rng.counter();
        let _ = draw_noise(&mut rng, 3, &[cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon], sched.steps).unwrap();
        let consumed = rng.counter() - before;
        // 2 ticks per normal draw, two latent blocks, plus 3 step draws.
        assert_eq!(consumed, (2 * 2 * 3 * latent + 3) as u64);
    }

    #[test]
    fn adamw_matches_hand_computed_single_parameter_step() {
        struct OneParam {
            w: Tensor,
        }
        impl HasParams for OneParam {
            fn visit_params(&self, _p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
                f("w", &self.w);
            }
            fn visit_params_mut(&mut self, _p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
                f("w", &mut self.w);
            }
        }
        let mut model = OneParam {
            w: Tensor::from_vec(vec![0.7], &[1]).unwrap().param(),
        };
        // Gradient of 0.5 * (w - 1)^2 at w = 0.7 is -0.3.
        let loss = model.w.add_scalar(-1.0).unwrap().square().unwrap().scale(0.5).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        let mut opt = AdamW {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
            grad_norm_cap: 1e3,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        };
        opt.step(&mut model).unwrap();
        // Hand evaluation of one AdamW update.
        let g = -0.3f64;
        let m = 0.1 * g;
        let v = 0.001 * g * g;
        let m_hat = m / (1.0 - 0.9);
        let v_hat = v / (1.0 - 0.999);
        let expected = 0.7 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8) - 0.01 * 0.1 * 0.7;
        assert!(
            (model.w.data()[0] - expected).abs() <= 1e-12,
            "{} vs {expected}",
            model.w.data()[0]
        );
    }

    #[test]
    fn zero_gradient_leaves_only_weight_decay() {
        struct OneParam {
            w: Tensor,
        }
        impl HasParams for OneParam {
            fn visit_params(&self, _p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
                f("w", &self.w);
            }
            fn visit_params_mut(&mut self, _p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
                f("w", &mut self.w);
            }
        }
        let mut model = OneParam {
            w: Tensor::from_vec(vec![2.0], &[1]).unwrap().param(),
        };
        let mut opt = AdamW {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            grad_norm_cap: 1e3,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        };
        opt.step(&mut model).unwrap();
        let expected = 2.0 - 0.1 * 0.01 * 2.0;
        assert!((model.w.data()[0] - expected).abs() <= 1e-15);
    }

    #[test]
    fn gradient_explosion_aborts_the_step() {
        struct OneParam {
            w: Tensor,
        }
        impl HasParams for OneParam {
            fn visit_params(&self, _p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
                f("w", &self.w);
            }
            fn visit_params_mut(&mut self, _p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
                f("w", &mut self.w);
            }
        }
        let mut model = OneParam {
            w: Tensor::from_vec(vec![1.0], &[1]).unwrap().param(),
        };
        let loss = model.w.scale(5e3).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        let mut opt = AdamW {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_norm_cap: 1e3,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        };
        let err = opt.step(&mut model).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(model.w.data()[0], 1.0, "aborted step must not move weights");
    }

    #[test]
    fn ema_update_rule_and_convergence() {
        struct OneParam {
            w: Tensor,
        }
        impl HasParams for OneParam {
            fn visit_params(&self, _p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
                f("w", &self.w);
            }
            fn visit_params_mut(&mut self, _p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
                f("w", &mut self.w);
            }
        }
        let model = OneParam {
            w: Tensor::from_vec(vec![1.0], &[1]).unwrap().param(),
        };
        let mut ema = EmaWeights::zeroed(0.995, &model);
        ema.update(&model);
        assert!((ema.shadow()["w"][0] - 0.005).abs() <= 1e-15);
        // With frozen weights the shadow converges to them.
        for _ in 0..5000 {
            ema.update(&model);
        }
        assert!((ema.shadow()["w"][0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic_and_reload_reproduces_validation() {
        let cfg = tiny_cfg();
        let ds = generate_synthetic(&cfg, 5).unwrap();
        let dir1 = std::env::temp_dir().join("climem_train_det_1");
        let dir2 = std::env::temp_dir().join("climem_train_det_2");
        let _ = std::fs::remove_dir_all(&dir1);
        let _ = std::fs::remove_dir_all(&dir2);
        let r1 = train_loop(&ds, &cfg, &dir1, |_, _, _| {}).unwrap();
        let r2 = train_loop(&ds, &cfg, &dir2, |_, _, _| {}).unwrap();
        assert_eq!(r1.epoch_train.len(), 2);
        for (a, b) in r1.epoch_train.iter().zip(&r2.epoch_train) {
            assert_eq!(a, b, "training loss curves must be bit-identical");
        }
        for (a, b) in r1.epoch_val.iter().zip(&r2.epoch_val) {
            assert_eq!(a, b);
        }

        // Reloading the checkpoint reproduces the saved validation loss.
        let ck = crate::networks::load_checkpoint(&dir1).unwrap();
        let eval_model = {
            let ema = EmaWeights {
                decay: cfg.ema_decay,
                shadow: ck.ema.clone(),
            };
            ema.model_with(&ck.model).unwrap()
        };
        let data = prepare(&ds).unwrap();
        let sched = build_cosine_schedule(cfg.diffusion_steps, cfg.schedule_offset).unwrap();
        let (v0, v1) = ds.val_range;
        let val_pairs: Vec<usize> = (v0..v1 - 1).collect();
        let bd = validation_loss(
            &eval_model,
            &data,
            &val_pairs,
            &sched,
            &LossWeights::from_config(&cfg),
            cfg.seed,
        )
        .unwrap();
        let saved: f64 = ck.notes["val_total"].parse().unwrap();
        assert!(
            (bd.total - saved).abs() <= 1e-12,
            "reloaded {} vs saved {saved}",
            bd.total
        );
    }
}
