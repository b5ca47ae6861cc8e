//! Variable transforms and standardization, dataset containers, and the
//! synthetic monthly-climate generator that stands in for reanalysis data
//! at desk scale.
//!
//! Non-negative variables are square-rooted and bounded variables pass
//! through a logit before standardization; losses are computed in this
//! transformed, standardized space and predictions are mapped back to
//! physical units on the way out.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::rng::RngStream;
use crate::sht::{GridSpec, ShtPlan, SpectralField};
use crate::tensor::Tensor;

/// Clamp distance from the {0, 1} boundaries inside the logit transform.
pub const LOGIT_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Unbounded,
    NonNegative,
    Bounded01,
}

impl VarKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VarKind::Unbounded => "unbounded",
            VarKind::NonNegative => "non-negative",
            VarKind::Bounded01 => "bounded01",
        }
    }

    pub fn parse(s: &str) -> Result<VarKind> {
        match s {
            "unbounded" => Ok(VarKind::Unbounded),
            "non-negative" => Ok(VarKind::NonNegative),
            "bounded01" => Ok(VarKind::Bounded01),
            other => Err(Error::Data(format!("unknown variable kind `{other}`"))),
        }
    }
}

/// Per-channel transform kind plus the training-split statistics taken in
/// transformed space.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VarKind,
    pub mean: f64,
    pub std: f64,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Kind-specific transform of one raw value (before standardization).
pub fn transform_value(kind: VarKind, raw: f64) -> Result<f64> {
    match kind {
        VarKind::Unbounded => Ok(raw),
        VarKind::NonNegative => {
            if raw < 0.0 {
                Err(Error::Data(format!(
                    "negative value {raw} in a non-negative variable"
                )))
            } else {
                Ok(raw.sqrt())
            }
        }
        VarKind::Bounded01 => {
            if !(0.0..=1.0).contains(&raw) {
                Err(Error::Data(format!(
                    "value {raw} outside [0, 1] in a bounded variable"
                )))
            } else {
                Ok(logit(raw.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)))
            }
        }
    }
}

/// Inverse of the kind-specific transform (after unstandardizing).
pub fn untransform_value(kind: VarKind, t: f64) -> f64 {
    match kind {
        VarKind::Unbounded => t,
        VarKind::NonNegative => t * t,
        VarKind::Bounded01 => logistic(t).clamp(0.0, 1.0),
    }
}

fn channel_layout(shape: &[usize], channel_axis: usize, n_channels: usize) -> Result<(usize, usize)> {
    if channel_axis >= shape.len() || shape[channel_axis] != n_channels {
        return Err(Error::Dimension(format!(
            "transform: axis {channel_axis} of {shape:?} does not hold {n_channels} channels"
        )));
    }
    let outer: usize = shape[..channel_axis].iter().product();
    let inner: usize = shape[channel_axis + 1..].iter().product();
    Ok((outer, inner))
}

/// Transform raw physical values and standardize with the per-channel
/// statistics. The channel axis is `channel_axis` of `x_raw`.
pub fn forward_transform(x_raw: &Tensor, specs: &[VariableSpec], channel_axis: usize) -> Result<Tensor> {
    let (outer, inner) = channel_layout(x_raw.shape(), channel_axis, specs.len())?;
    let src = x_raw.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for (c, spec) in specs.iter().enumerate() {
            let base = (o * specs.len() + c) * inner;
            for i in 0..inner {
                let t = transform_value(spec.kind, src[base + i]).map_err(|e| {
                    e.at(&format!("channel `{}` (index {})", spec.name, base + i))
                })?;
                out[base + i] = (t - spec.mean) / spec.std;
            }
        }
    }
    Tensor::from_vec(out, x_raw.shape())
}

/// Unstandardize and invert the kind transforms back to physical units.
pub fn inverse_transform(x_std: &Tensor, specs: &[VariableSpec], channel_axis: usize) -> Result<Tensor> {
    let (outer, inner) = channel_layout(x_std.shape(), channel_axis, specs.len())?;
    let src = x_std.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for (c, spec) in specs.iter().enumerate() {
            let base = (o * specs.len() + c) * inner;
            for i in 0..inner {
                let t = src[base + i] * spec.std + spec.mean;
                out[base + i] = untransform_value(spec.kind, t);
            }
        }
    }
    Tensor::from_vec(out, x_std.shape())
}

/// Per-channel mean and standard deviation in transformed space over the
/// given sample range of a `(T, C, H, W)` block.
pub fn compute_stats(
    x_raw: &Tensor,
    names: &[String],
    kinds: &[VarKind],
    sample_range: (usize, usize),
) -> Result<Vec<VariableSpec>> {
    if x_raw.rank() != 4 {
        return Err(Error::Dimension(format!(
            "compute_stats: expected (T, C, H, W), got {:?}",
            x_raw.shape()
        )));
    }
    let (start, end) = sample_range;
    if start >= end || end > x_raw.shape()[0] {
        return Err(Error::Stats(format!(
            "compute_stats: empty or invalid sample range {start}..{end}"
        )));
    }
    let channels = x_raw.shape()[1];
    if names.len() != channels || kinds.len() != channels {
        return Err(Error::Dimension(
            "compute_stats: names/kinds do not match channel count".into(),
        ));
    }
    let inner: usize = x_raw.shape()[2..].iter().product();
    let src = x_raw.data();
    let mut specs = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for t in start..end {
            let base = (t * channels + c) * inner;
            for i in 0..inner {
                let v = transform_value(kinds[c], src[base + i])
                    .map_err(|e| e.at(&format!("channel `{}` (index {})", names[c], base + i)))?;
                sum += v;
                sum_sq += v * v;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let std = var.sqrt();
        if std <= 1e-12 {
            return Err(Error::Stats(format!(
                "channel `{}` has (near-)zero variance over the training split",
                names[c]
            )));
        }
        specs.push(VariableSpec {
            name: names[c].clone(),
            kind: kinds[c],
            mean,
            std,
        });
    }
    Ok(specs)
}

/// Rectangular index region used for ENSO-like diagnostics, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexRegion {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

/// One month's state in physical units plus transformed/standardized form.
#[derive(Debug, Clone)]
pub struct StateBundle {
    pub month: usize,
    pub x_raw: Tensor,
    pub x_std: Tensor,
    pub f_raw: Tensor,
    pub f_std: Tensor,
    pub s_raw: Tensor,
    pub s_std: Tensor,
}

/// The on-disk dataset: raw physical blocks, calendar months, contiguous
/// split boundaries, frozen training statistics, and the planted
/// forcing-sensitivity coefficients of the generator.
#[derive(Debug, Clone)]
pub struct MonthlyDataset {
    pub grid: GridSpec,
    /// Calendar month (1..=12) of each time index.
    pub months: Vec<usize>,
    pub x: Tensor,       // (T, prog, H, W) raw
    pub f: Tensor,       // (T, 3, H, W) raw
    pub statics: Tensor, // (static, H, W) raw
    pub prog_specs: Vec<VariableSpec>,
    pub forcing_specs: Vec<VariableSpec>,
    pub static_specs: Vec<VariableSpec>,
    /// Half-open index ranges; validation precedes training chronologically.
    pub val_range: (usize, usize),
    pub train_range: (usize, usize),
    pub seed: u64,
    pub responsive_channel: usize,
    pub sst_sensitivity: f64,
    pub index_region: IndexRegion,
}

impl MonthlyDataset {
    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn prog_channels(&self) -> usize {
        self.x.shape()[1]
    }

    /// Standardized prognostic block over `[start, end)`: `(n, C, H, W)`.
    pub fn x_std(&self, start: usize, end: usize) -> Result<Tensor> {
        let slab = self.x.slice(0, start, end - start)?.detach();
        forward_transform(&slab, &self.prog_specs, 1)
    }

    pub fn f_std(&self, start: usize, end: usize) -> Result<Tensor> {
        let slab = self.f.slice(0, start, end - start)?.detach();
        forward_transform(&slab, &self.forcing_specs, 1)
    }

    pub fn statics_std(&self) -> Result<Tensor> {
        forward_transform(&self.statics, &self.static_specs, 0)
    }

    pub fn bundle(&self, t: usize) -> Result<StateBundle> {
        if t >= self.len() {
            return Err(Error::Data(format!(
                "sample {t} beyond record length {}",
                self.len()
            )));
        }
        let x_raw = self.x.slice(0, t, 1)?.detach();
        let f_raw = self.f.slice(0, t, 1)?.detach();
        Ok(StateBundle {
            month: self.months[t],
            x_std: forward_transform(&x_raw, &self.prog_specs, 1)?,
            f_std: forward_transform(&f_raw, &self.forcing_specs, 1)?,
            s_std: self.statics_std()?,
            s_raw: self.statics.clone(),
            x_raw,
            f_raw,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_tensor(&dir.join("x.smt"), &self.x)?;
        io::write_tensor(&dir.join("f.smt"), &self.f)?;
        io::write_tensor(&dir.join("statics.smt"), &self.statics)?;
        let mut m = String::new();
        let _ = writeln!(m, "format = climem-dataset-1");
        let _ = writeln!(m, "seed = {}", self.seed);
        let _ = writeln!(m, "n_lat = {}", self.grid.n_lat());
        let _ = writeln!(m, "n_lon = {}", self.grid.n_lon());
        let _ = writeln!(
            m,
            "months = {}",
            self.months
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(m, "val_range = {} {}", self.val_range.0, self.val_range.1);
        let _ = writeln!(m, "train_range = {} {}", self.train_range.0, self.train_range.1);
        let _ = writeln!(m, "responsive_channel = {}", self.responsive_channel);
        let _ = writeln!(m, "sst_sensitivity = {}", self.sst_sensitivity);
        let r = &self.index_region;
        let _ = writeln!(
            m,
            "index_region = {} {} {} {}",
            r.lat_min, r.lat_max, r.lon_min, r.lon_max
        );
        for (block, specs) in [
            ("prog", &self.prog_specs),
            ("forcing", &self.forcing_specs),
            ("static", &self.static_specs),
        ] {
            for s in specs.iter() {
                let _ = writeln!(m, "var = {block} {} {} {} {}", s.name, s.kind.as_str(), s.mean, s.std);
            }
        }
        std::fs::write(dir.join("manifest.txt"), m)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<MonthlyDataset> {
        let manifest = std::fs::read_to_string(dir.join("manifest.txt"))
            .map_err(|e| Error::Io(format!("reading dataset manifest: {e}")))?;
        let mut n_lat = 0usize;
        let mut n_lon = 0usize;
        let mut months = Vec::new();
        let mut seed = 0u64;
        let mut val_range = (0, 0);
        let mut train_range = (0, 0);
        let mut responsive_channel = 0usize;
        let mut sst_sensitivity = 0.0;
        let mut index_region = IndexRegion {
            lat_min: -5.0,
            lat_max: 5.0,
            lon_min: 190.0,
            lon_max: 240.0,
        };
        let mut prog_specs = Vec::new();
        let mut forcing_specs = Vec::new();
        let mut static_specs = Vec::new();
        for line in manifest.lines() {
            let Some((k, v)) = line.split_once(" = ") else {
                continue;
            };
            match k {
                "seed" => seed = v.parse().map_err(|_| Error::Data("bad seed".into()))?,
                "n_lat" => n_lat = v.parse().map_err(|_| Error::Data("bad n_lat".into()))?,
                "n_lon" => n_lon = v.parse().map_err(|_| Error::Data("bad n_lon".into()))?,
                "months" => {
                    months = v
                        .split(',')
                        .map(|s| s.parse().map_err(|_| Error::Data("bad month".into())))
                        .collect::<Result<_>>()?
                }
                "val_range" | "train_range" => {
                    let mut it = v.split_whitespace();
                    let a: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Data("bad range".into()))?;
                    let b: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Data("bad range".into()))?;
                    if k == "val_range" {
                        val_range = (a, b)
                    } else {
                        train_range = (a, b)
                    }
                }
                "responsive_channel" => {
                    responsive_channel =
                        v.parse().map_err(|_| Error::Data("bad responsive_channel".into()))?
                }
                "sst_sensitivity" => {
                    sst_sensitivity =
                        v.parse().map_err(|_| Error::Data("bad sst_sensitivity".into()))?
                }
                "index_region" => {
                    let vals: Vec<f64> = v
                        .split_whitespace()
                        .map(|s| s.parse().map_err(|_| Error::Data("bad region".into())))
                        .collect::<Result<_>>()?;
                    if vals.len() != 4 {
                        return Err(Error::Data("index_region needs 4 numbers".into()));
                    }
                    index_region = IndexRegion {
                        lat_min: vals[0],
                        lat_max: vals[1],
                        lon_min: vals[2],
                        lon_max: vals[3],
                    };
                }
                "var" => {
                    let parts: Vec<&str> = v.split_whitespace().collect();
                    if parts.len() != 5 {
                        return Err(Error::Data(format!("malformed var line `{v}`")));
                    }
                    let spec = VariableSpec {
                        name: parts[1].to_string(),
                        kind: VarKind::parse(parts[2])?,
                        mean: parts[3]
                            .parse()
                            .map_err(|_| Error::Data("bad var mean".into()))?,
                        std: parts[4]
                            .parse()
                            .map_err(|_| Error::Data("bad var std".into()))?,
                    };
                    match parts[0] {
                        "prog" => prog_specs.push(spec),
                        "forcing" => forcing_specs.push(spec),
                        "static" => static_specs.push(spec),
                        other => return Err(Error::Data(format!("unknown block `{other}`"))),
                    }
                }
                _ => {}
            }
        }
        let grid = GridSpec::equiangular(n_lat, n_lon)?;
        let x = io::read_tensor(&dir.join("x.smt"))?;
        let f = io::read_tensor(&dir.join("f.smt"))?;
        let statics = io::read_tensor(&dir.join("statics.smt"))?;
        if x.shape()[0] != months.len() {
            return Err(Error::Data(format!(
                "dataset: {} samples but {} month labels",
                x.shape()[0],
                months.len()
            )));
        }
        Ok(MonthlyDataset {
            grid,
            months,
            x,
            f,
            statics,
            prog_specs,
            forcing_specs,
            static_specs,
            val_range,
            train_range,
            seed,
            responsive_channel,
            sst_sensitivity,
            index_region,
        })
    }
}

fn kind_for_channel(c: usize) -> VarKind {
    match c % 6 {
        1 | 5 => VarKind::NonNegative,
        2 => VarKind::Bounded01,
        _ => VarKind::Unbounded,
    }
}

/// Band-limited random field with spectral amplitude decaying in degree.
fn smooth_field(rng: &mut RngStream, plan: &ShtPlan, amplitude: f64) -> Result<Tensor> {
    let (l1, m1) = (plan.l_max() + 1, plan.m_max() + 1);
    let mut re = vec![0.0; l1 * m1];
    let mut im = vec![0.0; l1 * m1];
    for l in 0..l1 {
        for m in 0..m1.min(l + 1) {
            let amp = amplitude / ((1 + l * l) as f64);
            re[l * m1 + m] = amp * rng.normal();
            if m > 0 {
                im[l * m1 + m] = amp * rng.normal();
            }
        }
    }
    let c = SpectralField::new(
        Tensor::from_vec(re, &[1, 1, l1, m1])?,
        Tensor::from_vec(im, &[1, 1, l1, m1])?,
    )?;
    plan.inverse(&c)?
        .reshape(&[plan.grid().n_lat(), plan.grid().n_lon()])
}

/// AR(1)-in-time, band-limited-in-space noise process kept in spectral
/// space and synthesized per month.
struct RedNoise {
    state_re: Vec<f64>,
    state_im: Vec<f64>,
    rho: f64,
    amp: f64,
    l1: usize,
    m1: usize,
}

impl RedNoise {
    fn new(plan: &ShtPlan, rho: f64, amp: f64) -> RedNoise {
        let (l1, m1) = (plan.l_max() + 1, plan.m_max() + 1);
        RedNoise {
            state_re: vec![0.0; l1 * m1],
            state_im: vec![0.0; l1 * m1],
            rho,
            amp,
            l1,
            m1,
        }
    }

    fn warm_up(&mut self, rng: &mut RngStream, steps: usize) {
        for _ in 0..steps {
            self.advance(rng);
        }
    }

    fn advance(&mut self, rng: &mut RngStream) {
        let drive = (1.0 - self.rho * self.rho).sqrt();
        for l in 0..self.l1 {
            for m in 0..self.m1.min(l + 1) {
                let k = l * self.m1 + m;
                let amp = self.amp / ((1 + l * l) as f64);
                self.state_re[k] = self.rho * self.state_re[k] + drive * amp * rng.normal();
                if m > 0 {
                    self.state_im[k] = self.rho * self.state_im[k] + drive * amp * rng.normal();
                }
            }
        }
    }

    fn field(&self, plan: &ShtPlan) -> Result<Tensor> {
        let c = SpectralField::new(
            Tensor::from_vec(self.state_re.clone(), &[1, 1, self.l1, self.m1])?,
            Tensor::from_vec(self.state_im.clone(), &[1, 1, self.l1, self.m1])?,
        )?;
        plan.inverse(&c)?
            .reshape(&[plan.grid().n_lat(), plan.grid().n_lon()])
    }
}

/// Generate a synthetic monthly dataset: per-channel smooth climatology,
/// a sinusoidal seasonal cycle, red-noise internal variability, and a
/// linear response of the designated channel to the SST anomaly with a
/// known coefficient recorded in the manifest. The SST forcing carries a
/// slow trend plus an oscillatory index-region signal for ENSO-like
/// diagnostics.
pub fn generate_synthetic(cfg: &RunConfig, seed: u64) -> Result<MonthlyDataset> {
    cfg.validate()?;
    let grid = GridSpec::equiangular(cfg.n_lat, cfg.n_lon)?;
    let gen_l_max = grid.max_l().min(8);
    let plan = ShtPlan::new(&grid, gen_l_max)?;
    let (h, w) = (grid.n_lat(), grid.n_lon());
    let t_total = cfg.months_total;
    let n_prog = cfg.prog_channels;
    let root = RngStream::new(seed, 100);

    let lat_of = |i: usize| grid.latitudes()[i];
    let lon_of = |j: usize| 360.0 * j as f64 / w as f64;

    // Index region for the oscillatory SST signal (equatorial band).
    let region = IndexRegion {
        lat_min: -12.0,
        lat_max: 12.0,
        lon_min: 160.0,
        lon_max: 260.0,
    };
    let enso_pattern = Tensor::from_fn(&[h, w], |idx| {
        let lat = lat_of(idx[0]);
        let lon = lon_of(idx[1]);
        let lat_c = (region.lat_min + region.lat_max) / 2.0;
        let lon_c = (region.lon_min + region.lon_max) / 2.0;
        let dl = (lat - lat_c) / (region.lat_max - region.lat_min);
        let dn = (lon - lon_c) / (region.lon_max - region.lon_min);
        (-4.0 * (dl * dl + dn * dn)).exp()
    })?;

    // SST building blocks. The anomaly carries a uniform trend, a
    // large-scale AR(1) level, a regional oscillation, and smooth red
    // noise, so the training record explores global SST excursions.
    let mut sst_rng = root.child(1);
    let sst_clim_pattern = smooth_field(&mut sst_rng, &plan, 1.2)?;
    let sst_seasonal = smooth_field(&mut sst_rng, &plan, 1.0)?;
    let mut sst_noise = RedNoise::new(&plan, 0.55, 0.3 * cfg.variability_scale);
    sst_noise.warm_up(&mut sst_rng, 24);
    let mut enso_ar = 0.0f64;
    let global_rho: f64 = 0.85;
    let global_std = 1.0 * cfg.variability_scale;
    let mut sst_global = 0.0f64;
    for _ in 0..48 {
        sst_global = global_rho * sst_global
            + (1.0 - global_rho * global_rho).sqrt() * global_std * sst_rng.normal();
    }

    // Per-channel building blocks for the prognostic state. The
    // responsive channel is dominated by its forcing-linked component so
    // the planted sensitivity is the main thing to learn about it.
    let mut chan_rng = root.child(2);
    let mut clim = Vec::new();
    let mut seas_sin = Vec::new();
    let mut seas_cos = Vec::new();
    let mut noise_procs = Vec::new();
    let mut global_noise = Vec::new();
    let chan_global_rho: f64 = 0.8;
    for c in 0..n_prog {
        let responsive = c == cfg.responsive_channel;
        let clim_amp = if responsive { 0.55 } else { 4.0 };
        let seas_amp = if responsive { 0.25 } else { 1.2 };
        let noise_amp = if responsive { 0.12 } else { 0.55 };
        clim.push(smooth_field(&mut chan_rng, &plan, clim_amp)?);
        seas_sin.push(smooth_field(&mut chan_rng, &plan, seas_amp)?);
        seas_cos.push(smooth_field(&mut chan_rng, &plan, seas_amp)?);
        let mut p = RedNoise::new(&plan, 0.6, noise_amp * cfg.variability_scale);
        p.warm_up(&mut chan_rng, 24);
        noise_procs.push(p);
        // Spatially uniform internal variability keeps the global-mean
        // spread of every channel well away from zero.
        let g_std = if responsive { 0.1 } else { 0.3 } * cfg.variability_scale;
        let mut g0 = 0.0f64;
        for _ in 0..24 {
            g0 = chan_global_rho * g0
                + (1.0 - chan_global_rho * chan_global_rho).sqrt() * g_std * chan_rng.normal();
        }
        global_noise.push((g0, g_std));
    }

    // Static fields and the fixed land-sea-mask-like forcing channel.
    let mut static_rng = root.child(3);
    let mut statics_data = Vec::with_capacity(cfg.static_channels * h * w);
    for _ in 0..cfg.static_channels {
        let fld = smooth_field(&mut static_rng, &plan, 3.0)?;
        statics_data.extend_from_slice(fld.data());
    }
    let statics = Tensor::from_vec(statics_data, &[cfg.static_channels, h, w])?;
    let lsm_core = smooth_field(&mut static_rng, &plan, 2.5)?;
    let lsm: Vec<f64> = lsm_core.data().iter().map(|&v| logistic(2.0 * v)).collect();

    let mut sic_rng = root.child(4);
    let sic_season_pattern = smooth_field(&mut sic_rng, &plan, 0.8)?;

    let mut x_data = vec![0.0; t_total * n_prog * h * w];
    let mut f_data = vec![0.0; t_total * 3 * h * w];
    let months: Vec<usize> = (0..t_total).map(|t| t % 12 + 1).collect();

    for t in 0..t_total {
        let m = months[t];
        let (ms, mc) = crate::conditioning::month_features(m);

        // SST anomaly: uniform trend + global level + oscillatory index
        // signal + red noise.
        sst_noise.advance(&mut sst_rng);
        sst_global = global_rho * sst_global
            + (1.0 - global_rho * global_rho).sqrt() * global_std * sst_rng.normal();
        let trend = cfg.sst_trend_per_month * t as f64;
        enso_ar = 0.8 * enso_ar + 0.6 * sst_rng.normal();
        let enso_idx = cfg.enso_amplitude
            * ((std::f64::consts::TAU * t as f64 / cfg.enso_period_months as f64).sin()
                + 0.45 * enso_ar);
        let sst_noise_field = sst_noise.field(&plan)?;
        // The spatially uniform part of the anomaly drives the planted
        // linear response of the designated channel.
        let uniform_anom = trend + sst_global;
        let mut sst_anom = vec![0.0; h * w];
        for (k, a) in sst_anom.iter_mut().enumerate() {
            *a = uniform_anom + enso_idx * enso_pattern.data()[k] + sst_noise_field.data()[k];
        }

        // Forcing channel 0: SST in Kelvin-like units.
        for i in 0..h {
            let lat = lat_of(i).to_radians();
            for j in 0..w {
                let k = i * w + j;
                let base = 291.0 - 5.0 * lat.sin() * lat.sin() + sst_clim_pattern.data()[k];
                let seasonal = sst_seasonal.data()[k] * ms + 0.6 * sst_seasonal.data()[k] * mc;
                f_data[(t * 3) * h * w + k] = base + seasonal + sst_anom[k];
            }
        }
        // Forcing channel 1: sea-ice-like bounded field, polar and seasonal.
        for i in 0..h {
            let lat = lat_of(i);
            for j in 0..w {
                let k = i * w + j;
                let polar = 10.0 * (lat.abs() / 90.0 - 0.72);
                let season = 1.1 * sic_season_pattern.data()[k] * ms * lat.signum();
                f_data[(t * 3 + 1) * h * w + k] = logistic(polar + season);
            }
        }
        // Forcing channel 2: fixed land-sea mask.
        f_data[(t * 3 + 2) * h * w..(t * 3 + 3) * h * w].copy_from_slice(&lsm);

        // Prognostic channels in pre-transform space, mapped by kind.
        for c in 0..n_prog {
            noise_procs[c].advance(&mut chan_rng);
            let noise = noise_procs[c].field(&plan)?;
            let (state, g_std) = global_noise[c];
            let next = chan_global_rho * state
                + (1.0 - chan_global_rho * chan_global_rho).sqrt() * g_std * chan_rng.normal();
            global_noise[c].0 = next;
            let respond = if c == cfg.responsive_channel {
                cfg.sst_sensitivity
            } else {
                0.0
            };
            let base = (t * n_prog + c) * h * w;
            for k in 0..h * w {
                let g = clim[c].data()[k]
                    + seas_sin[c].data()[k] * ms
                    + seas_cos[c].data()[k] * mc
                    + noise.data()[k]
                    + next
                    + respond * uniform_anom;
                x_data[base + k] = match kind_for_channel(c) {
                    VarKind::Unbounded => g,
                    VarKind::NonNegative => (0.3 * g).exp(),
                    VarKind::Bounded01 => logistic(0.8 * g),
                };
            }
        }
    }

    let x = Tensor::from_vec(x_data, &[t_total, n_prog, h, w])?;
    let f = Tensor::from_vec(f_data, &[t_total, 3, h, w])?;

    let val_range = (0usize, cfg.val_months);
    let train_range = (cfg.val_months, cfg.val_months + cfg.train_months);

    let prog_names: Vec<String> = (0..n_prog).map(|c| format!("var{c:02}")).collect();
    let prog_kinds: Vec<VarKind> = (0..n_prog).map(kind_for_channel).collect();
    let prog_specs = compute_stats(&x, &prog_names, &prog_kinds, train_range)?;

    let forcing_names = vec!["sst".to_string(), "sic".to_string(), "lsm".to_string()];
    let forcing_kinds = vec![VarKind::Unbounded, VarKind::Bounded01, VarKind::Bounded01];
    let forcing_specs = compute_stats(&f, &forcing_names, &forcing_kinds, train_range)?;

    let static_names: Vec<String> = (0..cfg.static_channels).map(|c| format!("static{c}")).collect();
    let static_kinds = vec![VarKind::Unbounded; cfg.static_channels];
    let statics_4d = statics.unsqueeze(0)?;
    let static_specs = compute_stats(&statics_4d, &static_names, &static_kinds, (0, 1))?;

    Ok(MonthlyDataset {
        grid,
        months,
        x,
        f,
        statics,
        prog_specs,
        forcing_specs,
        static_specs,
        val_range,
        train_range,
        seed,
        responsive_channel: cfg.responsive_channel,
        sst_sensitivity: cfg.sst_sensitivity,
        index_region: region,
    })
}
