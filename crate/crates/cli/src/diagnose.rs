//! `climem diagnose`: plot-ready tables and maps from saved trajectories.

use std::path::PathBuf;

use clap::Subcommand;

use climem_core::data::{IndexRegion, MonthlyDataset};
use climem_core::diagnostics::{
    climatology_and_anomaly, eof, global_mean_series, nino_index, project, regression_map,
    write_csv, write_field, zonal_mean,
};
use climem_core::error::{Error, Result};
use climem_core::rollout::EnsembleTrajectory;
use climem_core::sht::GridSpec;
use climem_core::tensor::Tensor;

#[derive(Subcommand)]
pub enum Diagnose {
    /// Area-weighted global-mean series per member and ensemble mean.
    GlobalMean {
        #[arg(long)]
        traj: PathBuf,
        /// Channel name; all channels when omitted.
        #[arg(long)]
        var: Option<String>,
        /// Drop this many leading months before analysis.
        #[arg(long, default_value_t = 0)]
        spin_up: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ensemble-mean per-calendar-month climatology maps.
    Climatology {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        var: String,
        #[arg(long, default_value_t = 0)]
        spin_up: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ensemble-mean climatology minus the dataset climatology.
    Bias {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        var: String,
        #[arg(long, default_value_t = 0)]
        spin_up: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regression of ensemble-mean anomalies on the forcing-SST index.
    Regress {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        var: String,
        #[arg(long, default_value_t = 0)]
        spin_up: usize,
        /// Override the dataset's index region: lat_min lat_max lon_min lon_max.
        #[arg(long, num_args = 4)]
        region: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leading EOFs of pooled per-member anomalies, with PC series.
    Eof {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        var: String,
        #[arg(long, default_value_t = 1)]
        modes: usize,
        #[arg(long, default_value_t = -90.0)]
        lat_min: f64,
        #[arg(long, default_value_t = 90.0)]
        lat_max: f64,
        #[arg(long, default_value_t = 0)]
        spin_up: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn grid_of(traj: &EnsembleTrajectory) -> Result<GridSpec> {
    let s = traj.data.shape();
    GridSpec::equiangular(s[3], s[4])
}

fn channel_index(traj: &EnsembleTrajectory, var: &str) -> Result<usize> {
    traj.channel_names
        .iter()
        .position(|n| n == var)
        .ok_or_else(|| {
            Error::Config(format!(
                "variable `{var}` not in trajectory (have: {})",
                traj.channel_names.join(", ")
            ))
        })
}

/// `(members, months, H, W)` block of one channel after spin-up removal.
fn channel_block(traj: &EnsembleTrajectory, c: usize, spin_up: usize) -> Result<(Tensor, Vec<usize>)> {
    let full = traj.channel(c)?;
    let months = traj.months[spin_up.min(traj.months.len())..].to_vec();
    if spin_up >= full.shape()[1] {
        return Err(Error::Config(format!(
            "spin-up {spin_up} discards the whole {}-month trajectory",
            full.shape()[1]
        )));
    }
    let t = full.slice(1, spin_up, full.shape()[1] - spin_up)?;
    Ok((t, months))
}

fn ensemble_mean(block: &Tensor) -> Result<Tensor> {
    block.mean_axes(&[0], false)
}

/// Whole-year truncation for climatology-based commands.
fn whole_years(block: &Tensor, months: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let t_n = block.shape()[0];
    let keep = t_n - t_n % 12;
    if keep == 0 {
        return Err(Error::Data(format!(
            "need at least one full year, have {t_n} months"
        )));
    }
    Ok((block.slice(0, 0, keep)?, months[..keep].to_vec()))
}

pub fn run(cmd: Diagnose) -> Result<()> {
    match cmd {
        Diagnose::GlobalMean {
            traj,
            var,
            spin_up,
            out,
        } => {
            let t = EnsembleTrajectory::load(&traj)?;
            let grid = grid_of(&t)?;
            std::fs::create_dir_all(&out)?;
            let selected: Vec<usize> = match &var {
                Some(v) => vec![channel_index(&t, v)?],
                None => (0..t.channel_names.len()).collect(),
            };
            for c in selected {
                let (block, months) = channel_block(&t, c, spin_up)?;
                let members = block.shape()[0];
                let mut headers = vec!["step".to_string(), "month".to_string(), "ensemble_mean".to_string()];
                let mut cols: Vec<Vec<f64>> = Vec::new();
                cols.push((0..months.len()).map(|i| (spin_up + i) as f64).collect());
                cols.push(months.iter().map(|&m| m as f64).collect());
                let mut member_series = Vec::with_capacity(members);
                for mi in 0..members {
                    let s = block.slice(0, mi, 1)?;
                    let s = s.reshape(&s.shape()[1..])?;
                    member_series.push(global_mean_series(&s, &grid)?);
                }
                let t_len = member_series[0].len();
                let ens: Vec<f64> = (0..t_len)
                    .map(|i| member_series.iter().map(|s| s[i]).sum::<f64>() / members as f64)
                    .collect();
                cols.push(ens);
                for (mi, s) in member_series.into_iter().enumerate() {
                    headers.push(format!("member_{mi}"));
                    cols.push(s);
                }
                let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
                let name = &t.channel_names[c];
                write_csv(&out.join(format!("{name}_global_mean.csv")), &header_refs, &cols)?;
                println!("wrote {name}_global_mean.csv ({} months)", t_len);
            }
            Ok(())
        }
        Diagnose::Climatology {
            traj,
            var,
            spin_up,
            out,
        } => {
            let t = EnsembleTrajectory::load(&traj)?;
            let grid = grid_of(&t)?;
            std::fs::create_dir_all(&out)?;
            let c = channel_index(&t, &var)?;
            let (block, months) = channel_block(&t, c, spin_up)?;
            let ens = ensemble_mean(&block)?;
            let (ens, months) = whole_years(&ens, &months)?;
            let clim = climatology_and_anomaly(&ens, months[0], false)?;
            climem_core::io::write_tensor(&out.join(format!("{var}_climatology.smt")), &clim.clim)?;
            let annual = clim.clim.mean_axes(&[0], false)?;
            write_field(&out.join(format!("{var}_annual_mean")), &annual, &grid)?;
            write_csv(
                &out.join(format!("{var}_annual_zonal.csv")),
                &["latitude", "zonal_mean"],
                &[grid.latitudes().to_vec(), zonal_mean(&annual, &grid)?],
            )?;
            println!(
                "wrote {var}_climatology.smt (12 monthly maps), {var}_annual_mean.smt, {var}_annual_zonal.csv"
            );
            Ok(())
        }
        Diagnose::Bias {
            traj,
            data,
            var,
            spin_up,
            out,
        } => {
            let t = EnsembleTrajectory::load(&traj)?;
            let ds = MonthlyDataset::load(&data)?;
            let grid = grid_of(&t)?;
            std::fs::create_dir_all(&out)?;
            let c = channel_index(&t, &var)?;
            let dc = ds
                .prog_specs
                .iter()
                .position(|s| s.name == var)
                .ok_or_else(|| Error::Config(format!("variable `{var}` not in dataset")))?;

            let (block, months) = channel_block(&t, c, spin_up)?;
            let ens = ensemble_mean(&block)?;
            let (ens, months) = whole_years(&ens, &months)?;
            let model_clim = climatology_and_anomaly(&ens, months[0], false)?.clim;

            // Reference climatology from the whole dataset record.
            let keep = ds.len() - ds.len() % 12;
            let ref_block = ds.x.slice(0, 0, keep)?.slice(1, dc, 1)?;
            let shp = ref_block.shape().to_vec();
            let ref_block = ref_block.reshape(&[shp[0], shp[2], shp[3]])?;
            let ref_clim = climatology_and_anomaly(&ref_block, ds.months[0], false)?.clim;

            let bias = model_clim.sub(&ref_clim)?;
            climem_core::io::write_tensor(&out.join(format!("{var}_bias.smt")), &bias)?;
            let annual = bias.mean_axes(&[0], false)?;
            write_field(&out.join(format!("{var}_annual_bias")), &annual, &grid)?;
            write_csv(
                &out.join(format!("{var}_bias_zonal.csv")),
                &["latitude", "zonal_mean"],
                &[grid.latitudes().to_vec(), zonal_mean(&annual, &grid)?],
            )?;
            println!("wrote {var}_bias.smt, {var}_annual_bias.smt, {var}_bias_zonal.csv");
            Ok(())
        }
        Diagnose::Regress {
            traj,
            data,
            var,
            spin_up,
            region,
            out,
        } => {
            let t = EnsembleTrajectory::load(&traj)?;
            let ds = MonthlyDataset::load(&data)?;
            let grid = grid_of(&t)?;
            std::fs::create_dir_all(&out)?;
            let c = channel_index(&t, &var)?;
            let (block, months) = channel_block(&t, c, spin_up)?;
            let ens = ensemble_mean(&block)?;
            let (ens, months) = whole_years(&ens, &months)?;
            let t_len = ens.shape()[0];

            // Forcing SST aligned with the analyzed window.
            let start = t.base_start + spin_up;
            if start + t_len > ds.len() {
                return Err(Error::Config(format!(
                    "trajectory window {start}..{} exceeds the dataset record {}",
                    start + t_len,
                    ds.len()
                )));
            }
            let sst = ds.f.slice(0, start, t_len)?.slice(1, 0, 1)?;
            let shp = sst.shape().to_vec();
            let sst = sst.reshape(&[shp[0], shp[2], shp[3]])?;
            let reg = match region {
                Some(v) => IndexRegion {
                    lat_min: v[0],
                    lat_max: v[1],
                    lon_min: v[2],
                    lon_max: v[3],
                },
                None => ds.index_region,
            };
            let index = nino_index(&sst, &grid, &reg, (0, t_len), months[0])?;
            let anoms = climatology_and_anomaly(&ens, months[0], false)?.anomalies;
            let slope = regression_map(&anoms, &index.values)?;
            write_field(&out.join(format!("{var}_regression")), &slope, &grid)?;
            write_csv(
                &out.join("index.csv"),
                &["step", "month", "index"],
                &[
                    (0..t_len).map(|i| (start + i) as f64).collect(),
                    months.iter().map(|&m| m as f64).collect(),
                    index.values.clone(),
                ],
            )?;
            println!("wrote {var}_regression.smt and index.csv");
            Ok(())
        }
        Diagnose::Eof {
            traj,
            var,
            modes,
            lat_min,
            lat_max,
            spin_up,
            out,
        } => {
            let t = EnsembleTrajectory::load(&traj)?;
            let grid = grid_of(&t)?;
            std::fs::create_dir_all(&out)?;
            let c = channel_index(&t, &var)?;
            let (block, months) = channel_block(&t, c, spin_up)?;
            let members = block.shape()[0];
            let (h, w) = (block.shape()[2], block.shape()[3]);

            // Pool per-member anomalies (each member anomalized against
            // the pooled ensemble climatology).
            let ens = ensemble_mean(&block)?;
            let (ens, months) = whole_years(&ens, &months)?;
            let t_len = ens.shape()[0];
            let clim = climatology_and_anomaly(&ens, months[0], false)?.clim;
            let mut pooled = Vec::with_capacity(members * t_len * h * w);
            for mi in 0..members {
                for ti in 0..t_len {
                    let m = months[ti] - 1;
                    for k in 0..h * w {
                        let v = block.data()[((mi * block.shape()[1]) + ti) * h * w + k]
                            - clim.data()[m * h * w + k];
                        pooled.push(v);
                    }
                }
            }
            let pooled = Tensor::from_vec(pooled, &[members * t_len, h, w])?;
            let band = Some((lat_min, lat_max));
            let result = eof(&pooled, modes, &grid, band)?;
            if let Some(warnmsg) = &result.warning {
                eprintln!("warning: {warnmsg}");
            }
            for k in 0..modes {
                let pat = result.patterns.slice(0, k, 1)?.reshape(&[h, w])?;
                write_field(&out.join(format!("{var}_eof{k}")), &pat, &grid)?;
            }
            write_csv(
                &out.join(format!("{var}_eof_explained.csv")),
                &["mode", "explained_fraction"],
                &[
                    (0..modes).map(|k| k as f64).collect(),
                    result.explained.clone(),
                ],
            )?;
            // Per-member PC series of the leading mode.
            let p0 = result.patterns.slice(0, 0, 1)?.reshape(&[h, w])?;
            let mut headers = vec!["step".to_string(), "month".to_string(), "ensemble_mean".to_string()];
            let mut cols: Vec<Vec<f64>> = vec![
                (0..t_len).map(|i| (spin_up + i) as f64).collect(),
                months.iter().map(|&m| m as f64).collect(),
            ];
            let mut member_pcs = Vec::with_capacity(members);
            for mi in 0..members {
                let mb = block.slice(0, mi, 1)?;
                let mb = mb.reshape(&mb.shape()[1..])?.slice(0, 0, t_len)?;
                let anom = climatology_and_anomaly(&mb, months[0], false)?.anomalies;
                member_pcs.push(project(&anom, &p0, &grid, band)?);
            }
            let ens_pc: Vec<f64> = (0..t_len)
                .map(|i| member_pcs.iter().map(|s| s[i]).sum::<f64>() / members as f64)
                .collect();
            cols.push(ens_pc);
            for (mi, s) in member_pcs.into_iter().enumerate() {
                headers.push(format!("member_{mi}"));
                cols.push(s);
            }
            let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
            write_csv(&out.join(format!("{var}_pc1.csv")), &header_refs, &cols)?;
            println!(
                "wrote {var}_eof*.smt, {var}_eof_explained.csv, {var}_pc1.csv (explained: {:.3})",
                result.explained[0]
            );
            Ok(())
        }
    }
}
