//! Autoregressive ensemble inference under the four forcing scenarios:
//! historical, historical with a uniform SST increase, repeating
//! climatology, and climatology with the increase.
//!
//! All members start from the same initial condition; stochasticity
//! enters only through the latent diffusion sampling, with one
//! counter-based stream per member. The predicted latent mean is fed
//! back as the next latent input; the decoded state is mapped to
//! physical units month by month.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{forward_transform, inverse_transform, StateBundle, VariableSpec};
use crate::diffusion::{build_cosine_schedule, ddpm_sample_with};
use crate::error::{Error, Result, ResultExt};
use crate::io;
use crate::networks::{reparameterize, CondPair, EmulatorModel};
use crate::rng::RngStream;
use crate::tensor::{no_grad, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Historical,
    HistoricalPlus,
    Climatology,
    ClimatologyPlus,
}

impl ScenarioKind {
    pub fn label(&self, delta: f64) -> String {
        match self {
            ScenarioKind::Historical => "historical".to_string(),
            ScenarioKind::HistoricalPlus => format!("historical+{}", delta),
            ScenarioKind::Climatology => "climatology".to_string(),
            ScenarioKind::ClimatologyPlus => format!("climatology+{}", delta),
        }
    }
}

/// Parse a CLI scenario name like `historical`, `historical+2`,
/// `historical+4`, `climatology`, `climatology+2`.
pub fn parse_scenario(s: &str) -> Result<(ScenarioKind, f64)> {
    let (base, delta) = match s.split_once('+') {
        None => (s, 0.0),
        Some((b, d)) => (
            b,
            d.parse::<f64>()
                .map_err(|_| Error::Config(format!("scenario `{s}`: bad SST offset")))?,
        ),
    };
    match (base, delta != 0.0) {
        ("historical", false) => Ok((ScenarioKind::Historical, 0.0)),
        ("historical", true) => Ok((ScenarioKind::HistoricalPlus, delta)),
        ("climatology", false) => Ok((ScenarioKind::Climatology, 0.0)),
        ("climatology", true) => Ok((ScenarioKind::ClimatologyPlus, delta)),
        _ => Err(Error::Config(format!(
            "unknown scenario `{s}` (expected historical[+K] or climatology[+K])"
        ))),
    }
}

/// A forcing series ready to drive a rollout window.
#[derive(Debug, Clone)]
pub struct ForcingScenario {
    pub kind: ScenarioKind,
    pub delta_sst: f64,
    /// Raw physical forcings `(n, 3, H, W)` over the window.
    pub f_raw: Tensor,
    /// Calendar month of each window index.
    pub months: Vec<usize>,
    /// Index of the window start in the base record.
    pub start: usize,
}

/// Build a scenario forcing series over `window_len` months starting at
/// `start` of the base record. Plus-variants shift only the SST channel,
/// everywhere, by exactly `delta_sst`; the sea-ice channel is unchanged.
/// Climatology variants repeat the per-calendar-month mean of the whole
/// base record and may extend past the base series; historical variants
/// must fit inside it.
pub fn build_scenario(
    base_f: &Tensor,
    base_months: &[usize],
    kind: ScenarioKind,
    delta_sst: f64,
    start: usize,
    window_len: usize,
) -> Result<ForcingScenario> {
    if base_f.rank() != 4 || base_f.shape()[1] != 3 {
        return Err(Error::Dimension(format!(
            "scenario: base forcings must be (T, 3, H, W), got {:?}",
            base_f.shape()
        )));
    }
    let t_base = base_f.shape()[0];
    if base_months.len() != t_base {
        return Err(Error::Config("scenario: month labels do not match base".into()));
    }
    let (h, w) = (base_f.shape()[2], base_f.shape()[3]);
    let hw = h * w;
    let months: Vec<usize> = (0..window_len)
        .map(|i| {
            if start + i < t_base {
                base_months[start + i]
            } else {
                // Extend the calendar cyclically past the record.
                let last = base_months[t_base - 1];
                (last - 1 + (start + i) - (t_base - 1)) % 12 + 1
            }
        })
        .collect();

    let needs_history = matches!(kind, ScenarioKind::Historical | ScenarioKind::HistoricalPlus);
    if needs_history && start + window_len > t_base {
        return Err(Error::Config(format!(
            "scenario window {start}..{} exceeds the {t_base}-month base record",
            start + window_len
        )));
    }

    let mut data = vec![0.0; window_len * 3 * hw];
    match kind {
        ScenarioKind::Historical | ScenarioKind::HistoricalPlus => {
            let src = base_f.data();
            data.copy_from_slice(&src[start * 3 * hw..(start + window_len) * 3 * hw]);
        }
        ScenarioKind::Climatology | ScenarioKind::ClimatologyPlus => {
            // Per-calendar-month mean over the whole base record.
            let mut clim = vec![0.0; 12 * 3 * hw];
            let mut count = [0usize; 12];
            let src = base_f.data();
            for t in 0..t_base {
                let m = base_months[t] - 1;
                count[m] += 1;
                for c in 0..3 {
                    let sbase = (t * 3 + c) * hw;
                    let dbase = (m * 3 + c) * hw;
                    for k in 0..hw {
                        clim[dbase + k] += src[sbase + k];
                    }
                }
            }
            for m in 0..12 {
                if count[m] == 0 {
                    return Err(Error::Config(format!(
                        "scenario: base record has no samples for calendar month {}",
                        m + 1
                    )));
                }
                for v in &mut clim[m * 3 * hw..(m + 1) * 3 * hw] {
                    *v /= count[m] as f64;
                }
            }
            for (i, &m) in months.iter().enumerate() {
                data[i * 3 * hw..(i + 1) * 3 * hw]
                    .copy_from_slice(&clim[(m - 1) * 3 * hw..m * 3 * hw]);
            }
        }
    }
    if matches!(kind, ScenarioKind::HistoricalPlus | ScenarioKind::ClimatologyPlus) {
        for t in 0..window_len {
            for v in &mut data[t * 3 * hw..t * 3 * hw + hw] {
                *v += delta_sst;
            }
        }
    }
    Ok(ForcingScenario {
        kind,
        delta_sst,
        f_raw: Tensor::from_vec(data, &[window_len, 3, h, w])?,
        months,
        start,
    })
}

/// Predicted ensemble in physical units.
#[derive(Debug, Clone)]
pub struct EnsembleTrajectory {
    /// `(members, months, prog_channels, H, W)`
    pub data: Tensor,
    pub channel_names: Vec<String>,
    /// Calendar month of each predicted step.
    pub months: Vec<usize>,
    pub member_stream_ids: Vec<u64>,
    pub member_final_counters: Vec<u64>,
    pub scenario: String,
    pub seed: u64,
    /// Base-record index of the first predicted month.
    pub base_start: usize,
}

impl EnsembleTrajectory {
    pub fn members(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_months(&self) -> usize {
        self.data.shape()[1]
    }

    /// `(members, months, H, W)` block of one channel.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        let t = self.data.slice(2, c, 1)?;
        let s = t.shape().to_vec();
        t.reshape(&[s[0], s[1], s[3], s[4]])
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut m = String::new();
        let _ = writeln!(m, "format = climem-trajectory-1");
        let _ = writeln!(m, "scenario = {}", self.scenario);
        let _ = writeln!(m, "seed = {}", self.seed);
        let _ = writeln!(m, "members = {}", self.members());
        let _ = writeln!(
            m,
            "months = {}",
            self.months
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(
            m,
            "member_stream_ids = {}",
            self.member_stream_ids
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(m, "base_start = {}", self.base_start);
        let _ = writeln!(m, "channels = {}", self.channel_names.join(","));
        for (c, name) in self.channel_names.iter().enumerate() {
            io::write_tensor(&dir.join(format!("var_{name}.smt")), &self.channel(c)?)?;
        }
        std::fs::write(dir.join("manifest.txt"), m)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<EnsembleTrajectory> {
        let manifest = std::fs::read_to_string(dir.join("manifest.txt"))
            .map_err(|e| Error::Io(format!("reading trajectory manifest: {e}")))?;
        let mut scenario = String::new();
        let mut seed = 0u64;
        let mut months = Vec::new();
        let mut stream_ids = Vec::new();
        let mut channels: Vec<String> = Vec::new();
        let mut base_start = 0usize;
        for line in manifest.lines() {
            let Some((k, v)) = line.split_once(" = ") else {
                continue;
            };
            match k {
                "scenario" => scenario = v.to_string(),
                "seed" => seed = v.parse().map_err(|_| Error::Data("bad seed".into()))?,
                "months" => {
                    months = v
                        .split(',')
                        .map(|s| s.parse().map_err(|_| Error::Data("bad month".into())))
                        .collect::<Result<_>>()?
                }
                "member_stream_ids" => {
                    stream_ids = v
                        .split(',')
                        .map(|s| s.parse().map_err(|_| Error::Data("bad stream id".into())))
                        .collect::<Result<_>>()?
                }
                "channels" => channels = v.split(',').map(str::to_string).collect(),
                "base_start" => {
                    base_start = v.parse().map_err(|_| Error::Data("bad base_start".into()))?
                }
                _ => {}
            }
        }
        let mut parts = Vec::new();
        for name in &channels {
            let t = io::read_tensor(&dir.join(format!("var_{name}.smt")))?;
            let s = t.shape().to_vec();
            parts.push(t.reshape(&[s[0], s[1], 1, s[2], s[3]])?);
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        let data = Tensor::concat(&refs, 2)?;
        Ok(EnsembleTrajectory {
            member_final_counters: vec![0; stream_ids.len()],
            base_start,
            data,
            channel_names: channels,
            months,
            member_stream_ids: stream_ids,
            scenario,
            seed,
        })
    }
}

/// Model plus the frozen statistics needed to move between physical and
/// standardized spaces during inference.
pub struct RolloutSetup<'a> {
    pub model: &'a EmulatorModel,
    pub prog_specs: &'a [VariableSpec],
    pub forcing_specs: &'a [VariableSpec],
    pub statics_std: Tensor,
}

fn member_stream(seed: u64, member: usize) -> RngStream {
    RngStream::new(seed, 4000 + member as u64)
}

fn expand_cond(c: &CondPair, members: usize) -> Result<CondPair> {
    let grow = |t: &Tensor| -> Result<Tensor> {
        let s = t.shape();
        t.expand(&[members, s[1], s[2], s[3]])
    };
    Ok(CondPair {
        phys: grow(&c.phys)?,
        latent: grow(&c.latent)?,
    })
}

fn run_members(
    setup: &RolloutSetup,
    init: &StateBundle,
    scenario: &ForcingScenario,
    n_months: usize,
    n_members: usize,
    seed: u64,
    vectorized: bool,
) -> Result<EnsembleTrajectory> {
    let model = setup.model;
    let cfg = &model.cfg;
    if scenario.f_raw.shape()[2] != cfg.n_lat || scenario.f_raw.shape()[3] != cfg.n_lon {
        return Err(Error::Config(format!(
            "rollout: scenario grid {:?} does not match model grid {}x{}",
            &scenario.f_raw.shape()[2..],
            cfg.n_lat,
            cfg.n_lon
        )));
    }
    if scenario.f_raw.shape()[0] < n_months + 1 {
        return Err(Error::Config(format!(
            "rollout: scenario only covers {} months, need {}",
            scenario.f_raw.shape()[0],
            n_months + 1
        )));
    }
    if n_members == 0 || n_months == 0 {
        return Err(Error::Config("rollout: members and months must be positive".into()));
    }
    let sched = build_cosine_schedule(cfg.diffusion_steps, cfg.schedule_offset)?;
    let f_std = forward_transform(&scenario.f_raw, setup.forcing_specs, 1)?;
    let (h, w) = (cfg.n_lat, cfg.n_lon);
    let prog = cfg.prog_channels;

    no_grad(|| -> Result<EnsembleTrajectory> {
        // Shared initial encoding; members differ only in their draws.
        let f0 = f_std.slice(0, 0, 1)?;
        let c0 = model.conditioning(&f0, &scenario.months[..1])?;
        let x_full0 = model.encoder_input(&init.x_std, &setup.statics_std, &f0)?;
        let (mu0, lv0) = model.encode(&x_full0, &c0).at("rollout init")?;

        let mut streams: Vec<RngStream> = (0..n_members).map(|i| member_stream(seed, i)).collect();
        let stream_ids: Vec<u64> = streams.iter().map(|s| s.stream_id()).collect();

        // Per-member conditioning pairs are shared values; precompute per
        // month at batch 1 and expand as needed.
        let conds: Vec<CondPair> = (0..=n_months)
            .map(|t| {
                let ft = f_std.slice(0, t, 1)?;
                model.conditioning(&ft, &scenario.months[t..t + 1])
            })
            .collect::<Result<_>>()?;

        let statics_latent_b1 = if cfg.decoder_receives_static {
            Some(model.statics_on_latent(&setup.statics_std, 1)?)
        } else {
            None
        };

        let mut out = vec![0.0; n_members * n_months * prog * h * w];
        let month_stride = prog * h * w;
        let member_stride = n_months * month_stride;

        let run_chain = |streams: &mut [RngStream], member_offset: usize, out: &mut [f64]| -> Result<()> {
            let members = streams.len();
            let mu0b = mu0.expand(&[members, cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon])?;
            let lv0b = lv0.expand(mu0b.shape())?;
            // Identical initial conditions; member-specific reparameterization.
            let eps0 = {
                let mut parts = Vec::with_capacity(members);
                for s in streams.iter_mut() {
                    parts.push(s.gaussian(&[1, cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon])?);
                }
                let refs: Vec<&Tensor> = parts.iter().collect();
                Tensor::concat(&refs, 0)?
            };
            let mut z = reparameterize(&mu0b, &lv0b, &eps0)?;
            for t in 0..n_months {
                let c_t = expand_cond(&conds[t], members)?;
                let c_next = expand_cond(&conds[t + 1], members)?;
                let mut draw = |shape: &[usize]| -> Result<Tensor> {
                    let mut per = shape.to_vec();
                    per[0] = 1;
                    let mut parts = Vec::with_capacity(members);
                    for s in streams.iter_mut() {
                        parts.push(s.gaussian(&per)?);
                    }
                    let refs: Vec<&Tensor> = parts.iter().collect();
                    Tensor::concat(&refs, 0)
                };
                let mu_next = ddpm_sample_with(
                    &model.predictor,
                    &z,
                    &c_t.latent,
                    &sched,
                    &model.normalizer,
                    &mut draw,
                )
                .at(&format!("rollout month {t}"))?;
                let statics_latent = match &statics_latent_b1 {
                    Some(s) => Some(s.expand(&[
                        members,
                        s.shape()[1],
                        s.shape()[2],
                        s.shape()[3],
                    ])?),
                    None => None,
                };
                let x_std = model
                    .decode(&mu_next, &c_next, statics_latent.as_ref())
                    .at(&format!("rollout month {t}"))?;
                let x_phys = inverse_transform(&x_std, setup.prog_specs, 1)
                    .at(&format!("rollout month {t}"))?;
                for mi in 0..members {
                    let dst = (member_offset + mi) * member_stride + t * month_stride;
                    let src = mi * month_stride;
                    out[dst..dst + month_stride]
                        .copy_from_slice(&x_phys.data()[src..src + month_stride]);
                }
                // Latent feedback: the predicted posterior mean, never a
                // re-stochasticized sample.
                z = mu_next;
            }
            Ok(())
        };

        if vectorized {
            run_chain(&mut streams, 0, &mut out)?;
        } else {
            for i in 0..n_members {
                run_chain(&mut streams[i..i + 1], i, &mut out)
                    .at(&format!("member {i}"))?;
            }
        }

        let counters = streams.iter().map(|s| s.counter()).collect();
        Ok(EnsembleTrajectory {
            data: Tensor::from_vec(out, &[n_members, n_months, prog, h, w])?,
            channel_names: setup.prog_specs.iter().map(|s| s.name.clone()).collect(),
            months: scenario.months[1..=n_months].to_vec(),
            member_stream_ids: stream_ids,
            member_final_counters: counters,
            scenario: scenario.kind.label(scenario.delta_sst),
            seed,
            base_start: scenario.start + 1,
        })
    })
}

/// Member-by-member rollout.
pub fn rollout(
    setup: &RolloutSetup,
    init: &StateBundle,
    scenario: &ForcingScenario,
    n_months: usize,
    n_members: usize,
    seed: u64,
) -> Result<EnsembleTrajectory> {
    run_members(setup, init, scenario, n_months, n_members, seed, false)
}

/// Same contract as [`rollout`] with members batched through the networks
/// in one pass; outputs are bit-compatible given the matched per-member
/// stream assignment.
pub fn rollout_vectorized(
    setup: &RolloutSetup,
    init: &StateBundle,
    scenario: &ForcingScenario,
    n_months: usize,
    n_members: usize,
    seed: u64,
) -> Result<EnsembleTrajectory> {
    run_members(setup, init, scenario, n_months, n_members, seed, true)
}
