//! Run configuration: one plain-text `key = value` document that covers
//! grid, channels, spectral ranks, diffusion schedule, loss weights,
//! optimizer settings, data generation and seeds. Defaults follow the
//! full-scale model; `RunConfig::toy()` is the small profile used by the
//! test suite and examples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // Physical and latent grids.
    pub n_lat: usize,
    pub n_lon: usize,
    pub phys_l_max: usize,
    pub latent_n_lat: usize,
    pub latent_n_lon: usize,
    pub latent_l_max: usize,

    // Channel inventory.
    pub prog_channels: usize,
    pub static_channels: usize,
    pub forcing_channels: usize,
    pub latent_channels: usize,

    // Network widths and spectral ranks.
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub pred_hidden: usize,
    pub enc_rank: usize,
    pub dec_rank: usize,
    pub pred_rank: usize,
    pub enc_cond_rank: usize,
    pub dec_cond_rank: usize,
    pub pred_cond_rank: usize,
    pub enc_cond_hidden: usize,
    pub dec_cond_hidden: usize,
    pub pred_cond_hidden: usize,
    pub mlp_hidden: usize,
    pub time_embed_dim: usize,
    pub time_channels: usize,
    pub logvar_clamp: f64,
    pub decoder_receives_static: bool,

    // Diffusion.
    pub diffusion_steps: usize,
    pub schedule_offset: f64,

    // Loss weights.
    pub lambda_rec: f64,
    pub lambda_diff: f64,
    pub lambda_kl: f64,
    pub lambda_std: f64,
    pub lambda_mean: f64,

    // Optimizer.
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub ema_decay: f64,
    pub grad_norm_cap: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Cap on consecutive-month training pairs (0 = use the whole split).
    pub train_pairs: usize,
    pub couple_diffusion_target: bool,

    // Synthetic data generation.
    pub months_total: usize,
    pub val_months: usize,
    pub train_months: usize,
    pub sst_sensitivity: f64,
    pub responsive_channel: usize,
    pub sst_trend_per_month: f64,
    pub enso_amplitude: f64,
    pub enso_period_months: usize,
    pub variability_scale: f64,

    pub seed: u64,

    // Default locations, overridable by CLI flags.
    pub data_dir: String,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_lat: 121,
            n_lon: 240,
            phys_l_max: 120,
            latent_n_lat: 40,
            latent_n_lon: 80,
            latent_l_max: 39,
            prog_channels: 42,
            static_channels: 4,
            forcing_channels: 3,
            latent_channels: 32,
            enc_hidden: 64,
            dec_hidden: 64,
            pred_hidden: 64,
            enc_rank: 64,
            dec_rank: 256,
            pred_rank: 128,
            enc_cond_rank: 2,
            dec_cond_rank: 4,
            pred_cond_rank: 2,
            enc_cond_hidden: 4,
            dec_cond_hidden: 2,
            pred_cond_hidden: 4,
            mlp_hidden: 128,
            time_embed_dim: 32,
            time_channels: 5,
            logvar_clamp: 12.0,
            decoder_receives_static: false,
            diffusion_steps: 15,
            schedule_offset: 0.008,
            lambda_rec: 1.0,
            lambda_diff: 0.5,
            lambda_kl: 0.01,
            lambda_std: 1.0,
            lambda_mean: 1.0,
            learning_rate: 0.001,
            weight_decay: 0.0001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            ema_decay: 0.995,
            grad_norm_cap: 1e3,
            batch_size: 4,
            epochs: 100,
            train_pairs: 0,
            couple_diffusion_target: false,
            months_total: 600,
            val_months: 72,
            train_months: 360,
            sst_sensitivity: 0.8,
            responsive_channel: 0,
            sst_trend_per_month: 0.006,
            enso_amplitude: 1.2,
            enso_period_months: 42,
            variability_scale: 1.0,
            seed: 0,
            data_dir: String::new(),
            out_dir: String::new(),
        }
    }
}

impl RunConfig {
    /// Desk-scale profile: full training finishes in minutes on one core
    /// while exercising every channel kind and network component.
    pub fn toy() -> Self {
        RunConfig {
            n_lat: 18,
            n_lon: 36,
            phys_l_max: 17,
            latent_n_lat: 6,
            latent_n_lon: 12,
            latent_l_max: 5,
            prog_channels: 6,
            latent_channels: 8,
            enc_hidden: 16,
            dec_hidden: 16,
            pred_hidden: 16,
            enc_rank: 8,
            dec_rank: 16,
            pred_rank: 8,
            mlp_hidden: 32,
            months_total: 600,
            val_months: 12,
            train_months: 65,
            train_pairs: 64,
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phys_l_max >= self.n_lat {
            return Err(Error::Config(format!(
                "phys_l_max = {} exceeds grid Nyquist degree {}",
                self.phys_l_max,
                self.n_lat - 1
            )));
        }
        if self.latent_l_max >= self.latent_n_lat {
            return Err(Error::Config(format!(
                "latent_l_max = {} exceeds latent grid Nyquist degree {}",
                self.latent_l_max,
                self.latent_n_lat - 1
            )));
        }
        if self.forcing_channels != 3 {
            return Err(Error::Config(
                "forcing_channels must be 3 (SST, SIC, LSM)".into(),
            ));
        }
        if self.diffusion_steps < 1 {
            return Err(Error::Config("diffusion_steps must be >= 1".into()));
        }
        if self.schedule_offset <= 0.0 {
            return Err(Error::Config("schedule_offset must be positive".into()));
        }
        if self.val_months + self.train_months > self.months_total {
            return Err(Error::Config(format!(
                "splits ({} validation + {} training months) exceed record length {}",
                self.val_months, self.train_months, self.months_total
            )));
        }
        if self.train_months < 2 {
            return Err(Error::Config(
                "training split needs at least two months to form a pair".into(),
            ));
        }
        if self.val_months < 2 {
            return Err(Error::Config(
                "validation split needs at least two months to form a pair".into(),
            ));
        }
        if self.responsive_channel >= self.prog_channels {
            return Err(Error::Config(format!(
                "responsive_channel {} outside {} prognostic channels",
                self.responsive_channel, self.prog_channels
            )));
        }
        for (name, v) in [
            ("lambda_rec", self.lambda_rec),
            ("lambda_diff", self.lambda_diff),
            ("lambda_kl", self.lambda_kl),
            ("lambda_std", self.lambda_std),
            ("lambda_mean", self.lambda_mean),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_lat", self.n_lat.to_string()),
            ("n_lon", self.n_lon.to_string()),
            ("phys_l_max", self.phys_l_max.to_string()),
            ("latent_n_lat", self.latent_n_lat.to_string()),
            ("latent_n_lon", self.latent_n_lon.to_string()),
            ("latent_l_max", self.latent_l_max.to_string()),
            ("prog_channels", self.prog_channels.to_string()),
            ("static_channels", self.static_channels.to_string()),
            ("forcing_channels", self.forcing_channels.to_string()),
            ("latent_channels", self.latent_channels.to_string()),
            ("enc_hidden", self.enc_hidden.to_string()),
            ("dec_hidden", self.dec_hidden.to_string()),
            ("pred_hidden", self.pred_hidden.to_string()),
            ("enc_rank", self.enc_rank.to_string()),
            ("dec_rank", self.dec_rank.to_string()),
            ("pred_rank", self.pred_rank.to_string()),
            ("enc_cond_rank", self.enc_cond_rank.to_string()),
            ("dec_cond_rank", self.dec_cond_rank.to_string()),
            ("pred_cond_rank", self.pred_cond_rank.to_string()),
            ("enc_cond_hidden", self.enc_cond_hidden.to_string()),
            ("dec_cond_hidden", self.dec_cond_hidden.to_string()),
            ("pred_cond_hidden", self.pred_cond_hidden.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("time_embed_dim", self.time_embed_dim.to_string()),
            ("time_channels", self.time_channels.to_string()),
            ("logvar_clamp", fmt_f64(self.logvar_clamp)),
            (
                "decoder_receives_static",
                self.decoder_receives_static.to_string(),
            ),
            ("diffusion_steps", self.diffusion_steps.to_string()),
            ("schedule_offset", fmt_f64(self.schedule_offset)),
            ("lambda_rec", fmt_f64(self.lambda_rec)),
            ("lambda_diff", fmt_f64(self.lambda_diff)),
            ("lambda_kl", fmt_f64(self.lambda_kl)),
            ("lambda_std", fmt_f64(self.lambda_std)),
            ("lambda_mean", fmt_f64(self.lambda_mean)),
            ("learning_rate", fmt_f64(self.learning_rate)),
            ("weight_decay", fmt_f64(self.weight_decay)),
            ("adam_beta1", fmt_f64(self.adam_beta1)),
            ("adam_beta2", fmt_f64(self.adam_beta2)),
            ("adam_eps", fmt_f64(self.adam_eps)),
            ("ema_decay", fmt_f64(self.ema_decay)),
            ("grad_norm_cap", fmt_f64(self.grad_norm_cap)),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("train_pairs", self.train_pairs.to_string()),
            (
                "couple_diffusion_target",
                self.couple_diffusion_target.to_string(),
            ),
            ("months_total", self.months_total.to_string()),
            ("val_months", self.val_months.to_string()),
            ("train_months", self.train_months.to_string()),
            ("sst_sensitivity", fmt_f64(self.sst_sensitivity)),
            ("responsive_channel", self.responsive_channel.to_string()),
            ("sst_trend_per_month", fmt_f64(self.sst_trend_per_month)),
            ("enso_amplitude", fmt_f64(self.enso_amplitude)),
            ("enso_period_months", self.enso_period_months.to_string()),
            ("variability_scale", fmt_f64(self.variability_scale)),
            ("seed", self.seed.to_string()),
            ("data_dir", self.data_dir.clone()),
            ("out_dir", self.out_dir.clone()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected `key = value`", lineno + 1))
            })?;
            seen.insert(k.trim().to_string(), v.trim().to_string());
        }
        for (k, v) in seen {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn pu(key: &str, v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: `{v}` is not an unsigned integer")))
        }
        fn pf(key: &str, v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: `{v}` is not a number")))
        }
        fn pb(key: &str, v: &str) -> Result<bool> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: `{v}` is not true/false")))
        }
        match key {
            "n_lat" => self.n_lat = pu(key, value)?,
            "n_lon" => self.n_lon = pu(key, value)?,
            "phys_l_max" => self.phys_l_max = pu(key, value)?,
            "latent_n_lat" => self.latent_n_lat = pu(key, value)?,
            "latent_n_lon" => self.latent_n_lon = pu(key, value)?,
            "latent_l_max" => self.latent_l_max = pu(key, value)?,
            "prog_channels" => self.prog_channels = pu(key, value)?,
            "static_channels" => self.static_channels = pu(key, value)?,
            "forcing_channels" => self.forcing_channels = pu(key, value)?,
            "latent_channels" => self.latent_channels = pu(key, value)?,
            "enc_hidden" => self.enc_hidden = pu(key, value)?,
            "dec_hidden" => self.dec_hidden = pu(key, value)?,
            "pred_hidden" => self.pred_hidden = pu(key, value)?,
            "enc_rank" => self.enc_rank = pu(key, value)?,
            "dec_rank" => self.dec_rank = pu(key, value)?,
            "pred_rank" => self.pred_rank = pu(key, value)?,
            "enc_cond_rank" => self.enc_cond_rank = pu(key, value)?,
            "dec_cond_rank" => self.dec_cond_rank = pu(key, value)?,
            "pred_cond_rank" => self.pred_cond_rank = pu(key, value)?,
            "enc_cond_hidden" => self.enc_cond_hidden = pu(key, value)?,
            "dec_cond_hidden" => self.dec_cond_hidden = pu(key, value)?,
            "pred_cond_hidden" => self.pred_cond_hidden = pu(key, value)?,
            "mlp_hidden" => self.mlp_hidden = pu(key, value)?,
            "time_embed_dim" => self.time_embed_dim = pu(key, value)?,
            "time_channels" => self.time_channels = pu(key, value)?,
            "logvar_clamp" => self.logvar_clamp = pf(key, value)?,
            "decoder_receives_static" => self.decoder_receives_static = pb(key, value)?,
            "diffusion_steps" => self.diffusion_steps = pu(key, value)?,
            "schedule_offset" => self.schedule_offset = pf(key, value)?,
            "lambda_rec" => self.lambda_rec = pf(key, value)?,
            "lambda_diff" => self.lambda_diff = pf(key, value)?,
            "lambda_kl" => self.lambda_kl = pf(key, value)?,
            "lambda_std" => self.lambda_std = pf(key, value)?,
            "lambda_mean" => self.lambda_mean = pf(key, value)?,
            "learning_rate" => self.learning_rate = pf(key, value)?,
            "weight_decay" => self.weight_decay = pf(key, value)?,
            "adam_beta1" => self.adam_beta1 = pf(key, value)?,
            "adam_beta2" => self.adam_beta2 = pf(key, value)?,
            "adam_eps" => self.adam_eps = pf(key, value)?,
            "ema_decay" => self.ema_decay = pf(key, value)?,
            "grad_norm_cap" => self.grad_norm_cap = pf(key, value)?,
            "batch_size" => self.batch_size = pu(key, value)?,
            "epochs" => self.epochs = pu(key, value)?,
            "train_pairs" => self.train_pairs = pu(key, value)?,
            "couple_diffusion_target" => self.couple_diffusion_target = pb(key, value)?,
            "months_total" => self.months_total = pu(key, value)?,
            "val_months" => self.val_months = pu(key, value)?,
            "train_months" => self.train_months = pu(key, value)?,
            "sst_sensitivity" => self.sst_sensitivity = pf(key, value)?,
            "responsive_channel" => self.responsive_channel = pu(key, value)?,
            "sst_trend_per_month" => self.sst_trend_per_month = pf(key, value)?,
            "enso_amplitude" => self.enso_amplitude = pf(key, value)?,
            "enso_period_months" => self.enso_period_months = pu(key, value)?,
            "variability_scale" => self.variability_scale = pf(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("seed: `{value}` is not an integer")))?
            }
            "data_dir" => self.data_dir = value.to_string(),
            "out_dir" => self.out_dir = value.to_string(),
            other => {
                return Err(Error::Config(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("reading config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::Io(format!("writing config {}: {e}", path.display())))
    }

    /// Total encoder input channels (prognostic + static + forcing).
    pub fn encoder_input_channels(&self) -> usize {
        self.prog_channels + self.static_channels + self.forcing_channels
    }

    /// Latent size over prognostic state size.
    pub fn compression_ratio(&self) -> f64 {
        let latent = self.latent_channels * self.latent_n_lat * self.latent_n_lon;
        let state = self.prog_channels * self.n_lat * self.n_lon;
        latent as f64 / state as f64
    }
}

fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}
