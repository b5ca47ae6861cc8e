//! `climem` command-line interface: synthetic data generation, joint
//! training, ensemble rollout under forcing scenarios, diagnostics, and
//! built-in numerical self-checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numeric error.

mod checks;
mod diagnose;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use climem_core::config::RunConfig;
use climem_core::data::{generate_synthetic, MonthlyDataset};
use climem_core::error::Result;
use climem_core::networks::load_checkpoint;
use climem_core::rollout::{build_scenario, parse_scenario, rollout_vectorized, RolloutSetup};
use climem_core::training::{train_loop, EmaWeights};

#[derive(Parser)]
#[command(
    name = "climem",
    about = "Monthly climate emulator: spherical-harmonic latent diffusion at desk scale",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic monthly dataset.
    GenData {
        /// Run configuration (key = value); toy profile when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (falls back to `out_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jointly train encoder, decoder, and predictor on a dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory (falls back to `data_dir` from the config).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint directory (falls back to `out_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Autoregressive ensemble rollout from a trained checkpoint.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// historical, historical+2, historical+4, climatology, climatology+2
        #[arg(long, default_value = "historical")]
        scenario: String,
        #[arg(long, default_value_t = 20)]
        members: usize,
        #[arg(long, default_value_t = 120)]
        months: usize,
        /// Base-record index of the initial condition; defaults to the
        /// first month after the training split.
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analysis commands over saved trajectories and datasets.
    #[command(subcommand)]
    Diagnose(diagnose::Diagnose),
    /// Report parameter counts and compression of a checkpoint.
    ModelInfo {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Built-in numerical self-checks.
    #[command(subcommand)]
    Check(checks::Check),
}

fn resolve_path(flag: Option<PathBuf>, cfg_value: &str, name: &str) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p),
        None if !cfg_value.is_empty() => Ok(PathBuf::from(cfg_value)),
        None => Err(climem_core::error::Error::Config(format!(
            "{name} not given and the config sets no default path"
        ))),
    }
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::toy(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let out = resolve_path(out, &cfg.out_dir, "--out")?;
            let ds = generate_synthetic(&cfg, cfg.seed)?;
            ds.save(&out)?;
            cfg.save(&out.join("config.txt"))?;
            println!(
                "wrote dataset: {} months on {}x{} grid, {} prognostic channels, seed {}",
                ds.len(),
                cfg.n_lat,
                cfg.n_lon,
                ds.prog_channels(),
                cfg.seed
            );
            println!(
                "splits: validation {}..{}, training {}..{}",
                ds.val_range.0, ds.val_range.1, ds.train_range.0, ds.train_range.1
            );
            Ok(())
        }
        Command::Train {
            config,
            seed,
            data,
            out,
        } => {
            let cfg = match (&config, &data) {
                (Some(_), _) => load_config(&config, seed)?,
                (None, Some(d)) if d.join("config.txt").exists() => {
                    load_config(&Some(d.join("config.txt")), seed)?
                }
                _ => load_config(&None, seed)?,
            };
            let data = resolve_path(data, &cfg.data_dir, "--data")?;
            let out = resolve_path(out, &cfg.out_dir, "--out")?;
            let ds = MonthlyDataset::load(&data)?;
            std::fs::create_dir_all(&out)?;
            let report = train_loop(&ds, &cfg, &out, |epoch, train, val| {
                println!(
                    "epoch {epoch:>4}  train {:.6}  (rec {:.4} diff {:.4} kl {:.4} std {:.4} mean {:.4})  val {:.6}",
                    train.total, train.rec, train.diff, train.kl, train.std, train.mean, val.total
                );
            })?;
            let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 13];
            for (e, (tr, va)) in report
                .epoch_train
                .iter()
                .zip(&report.epoch_val)
                .enumerate()
            {
                let row = [
                    e as f64, tr.total, tr.rec, tr.diff, tr.kl, tr.std, tr.mean, va.total,
                    va.rec, va.diff, va.kl, va.std, va.mean,
                ];
                for (c, v) in cols.iter_mut().zip(row) {
                    c.push(v);
                }
            }
            climem_core::diagnostics::write_csv(
                &out.join("losses.csv"),
                &[
                    "epoch",
                    "train_total",
                    "train_rec",
                    "train_diff",
                    "train_kl",
                    "train_std",
                    "train_mean",
                    "val_total",
                    "val_rec",
                    "val_diff",
                    "val_kl",
                    "val_std",
                    "val_mean",
                ],
                &cols,
            )?;
            println!(
                "best epoch {} (validation total {:.6}); checkpoint in {}",
                report.best_epoch,
                report.best_val,
                out.display()
            );
            Ok(())
        }
        Command::Rollout {
            checkpoint,
            data,
            scenario,
            members,
            months,
            start,
            seed,
            out,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let ds = MonthlyDataset::load(&data)?;
            let (kind, delta) = parse_scenario(&scenario)?;
            let start = start.unwrap_or(ds.train_range.1.min(ds.len() - 1));
            let seed = seed.unwrap_or(ck.seed);
            // Inference runs with the EMA weights stored in the checkpoint.
            let ema = EmaWeights::from_shadow(ck.model.cfg.ema_decay, ck.ema.clone());
            let model = ema.model_with(&ck.model)?;
            let scen = build_scenario(&ds.f, &ds.months, kind, delta, start, months + 1)?;
            let init = ds.bundle(start)?;
            let setup = RolloutSetup {
                model: &model,
                prog_specs: &ds.prog_specs,
                forcing_specs: &ds.forcing_specs,
                statics_std: ds.statics_std()?,
            };
            let traj = rollout_vectorized(&setup, &init, &scen, months, members, seed)?;
            traj.save(&out)?;
            println!(
                "rollout `{}`: {} members x {} months from base index {start}, seed {seed}",
                traj.scenario, members, months
            );
            println!("trajectory written to {}", out.display());
            Ok(())
        }
        Command::Diagnose(cmd) => diagnose::run(cmd),
        Command::ModelInfo { checkpoint } => {
            let ck = load_checkpoint(&checkpoint)?;
            let cfg = &ck.model.cfg;
            println!("checkpoint seed: {}", ck.seed);
            for (k, v) in &ck.notes {
                println!("{k}: {v}");
            }
            println!(
                "physical grid: {}x{} (band limit {}), latent grid: {}x{} (band limit {})",
                cfg.n_lat, cfg.n_lon, cfg.phys_l_max, cfg.latent_n_lat, cfg.latent_n_lon, cfg.latent_l_max
            );
            println!(
                "channels: {} prognostic + {} static + {} forcing; latent {}",
                cfg.prog_channels, cfg.static_channels, cfg.forcing_channels, cfg.latent_channels
            );
            let mut total = 0usize;
            for (name, count) in ck.model.param_counts() {
                println!("{name:>12}: {count} trainable parameters");
                total += count;
            }
            println!("{:>12}: {total} trainable parameters", "total");
            let latent = cfg.latent_channels * cfg.latent_n_lat * cfg.latent_n_lon;
            let state = cfg.prog_channels * cfg.n_lat * cfg.n_lon;
            let full = cfg.encoder_input_channels() * cfg.n_lat * cfg.n_lon;
            println!(
                "compression ratio: {:.4} vs the prognostic state ({latent}/{state}), {:.4} vs the full encoder input ({latent}/{full})",
                cfg.compression_ratio(),
                latent as f64 / full as f64
            );
            println!(
                "diffusion: {} steps, cosine schedule offset {}",
                cfg.diffusion_steps, cfg.schedule_offset
            );
            Ok(())
        }
        Command::Check(cmd) => checks::run(cmd),
    }
}

fn main() {
    match run() {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
