//! Analysis toolkit: area-weighted means, climatology and anomalies,
//! index-regression maps, and EOF/principal-component analysis, plus
//! plot-ready CSV and gridded-field writers.
//!
//! All spatial averages use the grid's quadrature weights, the discrete
//! form of cosine-latitude weighting on these grids (pole rows carry
//! vanishing weight).

use std::fmt::Write as _;
use std::path::Path;

use crate::data::IndexRegion;
use crate::error::{Error, Result};
use crate::io;
use crate::sht::GridSpec;
use crate::tensor::Tensor;

/// Cosine-latitude-weighted global mean of a `(H, W)` field.
pub fn area_weighted_mean(field: &Tensor, grid: &GridSpec) -> Result<f64> {
    if field.shape() != [grid.n_lat(), grid.n_lon()] {
        return Err(Error::Dimension(format!(
            "area_weighted_mean: field {:?} does not match grid {}x{}",
            field.shape(),
            grid.n_lat(),
            grid.n_lon()
        )));
    }
    let w = grid.quadrature_weights();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..grid.n_lat() {
        let mut row = 0.0;
        for j in 0..grid.n_lon() {
            row += field.get(&[i, j]);
        }
        num += w[i] * row;
        den += w[i] * grid.n_lon() as f64;
    }
    Ok(num / den)
}

/// Area-weighted mean of each time slice of a `(T, H, W)` block.
pub fn global_mean_series(fields: &Tensor, grid: &GridSpec) -> Result<Vec<f64>> {
    if fields.rank() != 3 {
        return Err(Error::Dimension(format!(
            "global_mean_series: expected (T, H, W), got {:?}",
            fields.shape()
        )));
    }
    let (t_n, h, w_n) = (fields.shape()[0], fields.shape()[1], fields.shape()[2]);
    let w = grid.quadrature_weights();
    let den: f64 = w.iter().sum::<f64>() * w_n as f64;
    let mut out = Vec::with_capacity(t_n);
    for t in 0..t_n {
        let mut num = 0.0;
        for i in 0..h {
            let base = (t * h + i) * w_n;
            let row: f64 = fields.data()[base..base + w_n].iter().sum();
            num += w[i] * row;
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Per-calendar-month climatology and the anomaly series.
#[derive(Debug, Clone)]
pub struct Climatology {
    /// `(12, ...)` per-calendar-month means (index 0 = January).
    pub clim: Tensor,
    /// Same shape as the input series.
    pub anomalies: Tensor,
}

/// Remove the per-calendar-month mean from a time-first series covering
/// whole years. With `detrend` the least-squares linear trend is removed
/// jointly with the monthly means (exact for series built as
/// climatology plus a linear ramp).
pub fn climatology_and_anomaly(
    series: &Tensor,
    first_month: usize,
    detrend: bool,
) -> Result<Climatology> {
    if series.rank() < 1 {
        return Err(Error::Dimension("climatology: scalar input".into()));
    }
    let t_n = series.shape()[0];
    if t_n < 12 || t_n % 12 != 0 {
        return Err(Error::Data(format!(
            "climatology: series length {t_n} is not a positive whole number of years"
        )));
    }
    if !(1..=12).contains(&first_month) {
        return Err(Error::Data(format!("climatology: first month {first_month} outside 1..=12")));
    }
    let inner: usize = series.shape()[1..].iter().product();
    let months: Vec<usize> = (0..t_n).map(|t| (first_month - 1 + t) % 12).collect();

    // Design: 12 month indicators plus (if detrending) a centered time
    // column. The normal matrix is shared by every grid component.
    let p = if detrend { 13 } else { 12 };
    let t_mid = (t_n as f64 - 1.0) / 2.0;
    let mut normal = vec![0.0; p * p];
    for (t, &m) in months.iter().enumerate() {
        let tau = t as f64 - t_mid;
        normal[m * p + m] += 1.0;
        if detrend {
            normal[m * p + 12] += tau;
            normal[12 * p + m] += tau;
            normal[12 * p + 12] += tau * tau;
        }
    }
    let inv = invert_small(&normal, p)?;

    let src = series.data();
    let mut clim = vec![0.0; 12 * inner];
    let mut anoms = vec![0.0; t_n * inner];
    let mut rhs = vec![0.0; p];
    let mut beta = vec![0.0; p];
    for c in 0..inner {
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for (t, &m) in months.iter().enumerate() {
            let y = src[t * inner + c];
            rhs[m] += y;
            if detrend {
                rhs[12] += (t as f64 - t_mid) * y;
            }
        }
        for i in 0..p {
            beta[i] = (0..p).map(|j| inv[i * p + j] * rhs[j]).sum();
        }
        for m in 0..12 {
            clim[m * inner + c] = beta[m];
        }
        for (t, &m) in months.iter().enumerate() {
            let fitted = beta[m]
                + if detrend {
                    beta[12] * (t as f64 - t_mid)
                } else {
                    0.0
                };
            anoms[t * inner + c] = src[t * inner + c] - fitted;
        }
    }
    let mut clim_shape = series.shape().to_vec();
    clim_shape[0] = 12;
    Ok(Climatology {
        clim: Tensor::from_vec(clim, &clim_shape)?,
        anomalies: Tensor::from_vec(anoms, series.shape())?,
    })
}

fn invert_small(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if m[r * n + col].abs() > m[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if m[pivot * n + col].abs() < 1e-12 {
            return Err(Error::Stats("singular design matrix".into()));
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                m[r * n + j] -= f * m[col * n + j];
                inv[r * n + j] -= f * inv[col * n + j];
            }
        }
    }
    Ok(inv)
}

/// Monthly scalar index: a region-mean anomaly series, standardized over
/// its base period.
#[derive(Debug, Clone)]
pub struct IndexSeries {
    pub values: Vec<f64>,
    pub first_month: usize,
    pub base: (usize, usize),
    pub region: IndexRegion,
}

fn region_mask(grid: &GridSpec, region: &IndexRegion) -> Vec<(usize, usize, f64)> {
    let mut cells = Vec::new();
    let lons = grid.longitudes();
    for (i, &lat) in grid.latitudes().iter().enumerate() {
        if lat < region.lat_min || lat > region.lat_max {
            continue;
        }
        for (j, &lon) in lons.iter().enumerate() {
            let inside = if region.lon_min <= region.lon_max {
                lon >= region.lon_min && lon <= region.lon_max
            } else {
                lon >= region.lon_min || lon <= region.lon_max
            };
            if inside {
                cells.push((i, j, grid.quadrature_weights()[i]));
            }
        }
    }
    cells
}

/// Region-mean SST anomaly index, anomalized per calendar month over the
/// base period and standardized by the base-period spread.
pub fn nino_index(
    sst: &Tensor,
    grid: &GridSpec,
    region: &IndexRegion,
    base: (usize, usize),
    first_month: usize,
) -> Result<IndexSeries> {
    if sst.rank() != 3 {
        return Err(Error::Dimension(format!(
            "nino_index: expected (T, H, W), got {:?}",
            sst.shape()
        )));
    }
    let t_n = sst.shape()[0];
    let (b0, b1) = base;
    if b0 >= b1 || b1 > t_n {
        return Err(Error::Config(format!("nino_index: bad base period {b0}..{b1}")));
    }
    let cells = region_mask(grid, region);
    if cells.is_empty() {
        return Err(Error::Config("nino_index: region contains no grid points".into()));
    }
    let wsum: f64 = cells.iter().map(|c| c.2).sum();
    let (h, w) = (sst.shape()[1], sst.shape()[2]);
    let raw: Vec<f64> = (0..t_n)
        .map(|t| {
            let mut s = 0.0;
            for &(i, j, wt) in &cells {
                s += wt * sst.data()[(t * h + i) * w + j];
            }
            s / wsum
        })
        .collect();

    // Per-calendar-month means over the base period.
    let mut clim = [0.0f64; 12];
    let mut count = [0usize; 12];
    for t in b0..b1 {
        let m = (first_month - 1 + t) % 12;
        clim[m] += raw[t];
        count[m] += 1;
    }
    for m in 0..12 {
        if count[m] > 0 {
            clim[m] /= count[m] as f64;
        }
    }
    let mut anom: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(t, v)| v - clim[(first_month - 1 + t) % 12])
        .collect();
    let base_var: f64 =
        anom[b0..b1].iter().map(|v| v * v).sum::<f64>() / (b1 - b0) as f64;
    let std = base_var.sqrt();
    if std < 1e-14 {
        if anom.iter().all(|v| v.abs() < 1e-12) {
            // A constant region series yields the zero index.
            anom.iter_mut().for_each(|v| *v = 0.0);
            return Ok(IndexSeries {
                values: anom,
                first_month,
                base,
                region: *region,
            });
        }
        return Err(Error::Stats(
            "nino_index: zero variance over the base period".into(),
        ));
    }
    anom.iter_mut().for_each(|v| *v /= std);
    Ok(IndexSeries {
        values: anom,
        first_month,
        base,
        region: *region,
    })
}

/// Per-gridpoint least-squares slope of the anomaly fields on the index.
pub fn regression_map(anoms: &Tensor, index: &[f64]) -> Result<Tensor> {
    if anoms.rank() != 3 || anoms.shape()[0] != index.len() {
        return Err(Error::Dimension(format!(
            "regression_map: fields {:?} do not align with index length {}",
            anoms.shape(),
            index.len()
        )));
    }
    let denom: f64 = index.iter().map(|v| v * v).sum();
    if denom < 1e-14 {
        return Err(Error::Stats("regression_map: zero-variance index".into()));
    }
    let (t_n, h, w) = (anoms.shape()[0], anoms.shape()[1], anoms.shape()[2]);
    let mut out = vec![0.0; h * w];
    for t in 0..t_n {
        let it = index[t];
        if it == 0.0 {
            continue;
        }
        let base = t * h * w;
        for (o, s) in out.iter_mut().zip(&anoms.data()[base..base + h * w]) {
            *o += it * s;
        }
    }
    out.iter_mut().for_each(|v| *v /= denom);
    Tensor::from_vec(out, &[h, w])
}

/// Leading spatial modes of an anomaly series under the area-weighted
/// inner product.
#[derive(Debug, Clone)]
pub struct EofResult {
    /// `(modes, H, W)`; zero outside the latitude band.
    pub patterns: Tensor,
    /// `(modes, T)` principal-component series.
    pub pcs: Vec<Vec<f64>>,
    /// Fractions in [0, 1], non-increasing.
    pub explained: Vec<f64>,
    pub warning: Option<String>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvectors
/// (`vecs[k]` is the k-th eigenvector).
fn symmetric_eigen(mat: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = mat.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * fro.max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let vecs: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (vals, vecs)
}

/// Fit the leading EOFs of `(T, H, W)` anomalies. Latitude weighting uses
/// the square root of the quadrature weights on the data matrix, so the
/// covariance carries the area weights. Patterns are unit-norm and
/// mutually orthogonal under the weighted inner product; the sign is
/// fixed so each pattern's area-weighted mean over the hemisphere of its
/// strongest extremum is positive.
pub fn eof(
    anoms: &Tensor,
    n_modes: usize,
    grid: &GridSpec,
    lat_band: Option<(f64, f64)>,
) -> Result<EofResult> {
    if anoms.rank() != 3 {
        return Err(Error::Dimension(format!(
            "eof: expected (T, H, W), got {:?}",
            anoms.shape()
        )));
    }
    let t_n = anoms.shape()[0];
    if t_n < n_modes || n_modes == 0 {
        return Err(Error::Stats(format!(
            "eof: {t_n} samples cannot support {n_modes} modes"
        )));
    }
    let (h, w) = (anoms.shape()[1], anoms.shape()[2]);
    if h != grid.n_lat() || w != grid.n_lon() {
        return Err(Error::Dimension("eof: grid mismatch".into()));
    }
    let (lat_lo, lat_hi) = lat_band.unwrap_or((-90.0, 90.0));
    let mut points: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &lat) in grid.latitudes().iter().enumerate() {
        if lat < lat_lo || lat > lat_hi {
            continue;
        }
        let wt = grid.quadrature_weights()[i];
        if wt <= 0.0 {
            continue;
        }
        for j in 0..w {
            points.push((i, j, wt));
        }
    }
    let p_n = points.len();
    if p_n == 0 {
        return Err(Error::Config("eof: empty latitude band".into()));
    }

    // Weighted data matrix, flattened row-major (T x P).
    let mut y = vec![0.0; t_n * p_n];
    for t in 0..t_n {
        for (pi, &(i, j, wt)) in points.iter().enumerate() {
            y[t * p_n + pi] = wt.sqrt() * anoms.data()[(t * h + i) * w + j];
        }
    }

    // Eigendecompose the smaller Gram matrix.
    let use_temporal = t_n <= p_n;
    let n = if use_temporal { t_n } else { p_n };
    let mut gram = vec![0.0; n * n];
    if use_temporal {
        for a in 0..t_n {
            for b in a..t_n {
                let mut s = 0.0;
                for k in 0..p_n {
                    s += y[a * p_n + k] * y[b * p_n + k];
                }
                gram[a * t_n + b] = s;
                gram[b * t_n + a] = s;
            }
        }
    } else {
        for t in 0..t_n {
            for a in 0..p_n {
                let ya = y[t * p_n + a];
                if ya == 0.0 {
                    continue;
                }
                for b in a..p_n {
                    gram[a * p_n + b] += ya * y[t * p_n + b];
                }
            }
        }
        for a in 0..p_n {
            for b in 0..a {
                gram[a * p_n + b] = gram[b * p_n + a];
            }
        }
    }
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    let (vals, vecs) = symmetric_eigen(&gram, n);

    let mut warning = None;
    for k in 0..n_modes.saturating_sub(1) {
        if vals[k] > 0.0 && (vals[k] - vals[k + 1]).abs() / vals[k] < 1e-6 {
            warning = Some(format!(
                "leading eigenvalues {} and {} are degenerate (tied within 1e-6)",
                k,
                k + 1
            ));
        }
    }

    let mut patterns = vec![0.0; n_modes * h * w];
    let mut pcs = Vec::with_capacity(n_modes);
    let mut explained = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let lambda = vals[k].max(0.0);
        explained.push(if trace > 0.0 { lambda / trace } else { 0.0 });
        let sigma = lambda.sqrt();
        // Spatial mode in the sqrt-weighted space and the PC series.
        let (mode_w, pc): (Vec<f64>, Vec<f64>) = if use_temporal {
            let u = &vecs[k];
            let mut m = vec![0.0; p_n];
            for t in 0..t_n {
                let ut = u[t];
                if ut == 0.0 {
                    continue;
                }
                for pbuf in 0..p_n {
                    m[pbuf] += ut * y[t * p_n + pbuf];
                }
            }
            if sigma > 0.0 {
                m.iter_mut().for_each(|v| *v /= sigma);
            }
            (m, u.iter().map(|&ut| sigma * ut).collect())
        } else {
            let vvec = vecs[k].clone();
            let pc: Vec<f64> = (0..t_n)
                .map(|t| {
                    let mut s = 0.0;
                    for pbuf in 0..p_n {
                        s += y[t * p_n + pbuf] * vvec[pbuf];
                    }
                    s
                })
                .collect();
            (vvec, pc)
        };

        // Back to physical space and fix the sign convention.
        let mut pat = vec![0.0; h * w];
        for (pi, &(i, j, wt)) in points.iter().enumerate() {
            pat[i * w + j] = mode_w[pi] / wt.sqrt();
        }
        let mut extremum = (0usize, 0.0f64);
        for (i, _, _) in points.iter().copied() {
            for j in 0..w {
                let v = pat[i * w + j].abs();
                if v > extremum.1 {
                    extremum = (i, v);
                }
            }
        }
        let north = grid.latitudes()[extremum.0] >= 0.0;
        let mut hemi_mean = 0.0;
        let mut hemi_w = 0.0;
        for &(i, j, wt) in &points {
            let lat = grid.latitudes()[i];
            if (lat >= 0.0) == north {
                hemi_mean += wt * pat[i * w + j];
                hemi_w += wt;
            }
        }
        let flip = if hemi_w > 0.0 && hemi_mean / hemi_w < 0.0 {
            -1.0
        } else {
            1.0
        };
        for (dst, v) in patterns[k * h * w..(k + 1) * h * w].iter_mut().zip(&pat) {
            *dst = flip * v;
        }
        pcs.push(pc.into_iter().map(|v| flip * v).collect());
    }

    Ok(EofResult {
        patterns: Tensor::from_vec(patterns, &[n_modes, h, w])?,
        pcs,
        explained,
        warning,
    })
}

/// Project fields onto a pattern under the same weighted inner product
/// used by [`eof`]; projecting the fitted data onto mode k reproduces
/// that mode's PC series.
pub fn project(
    fields: &Tensor,
    pattern: &Tensor,
    grid: &GridSpec,
    lat_band: Option<(f64, f64)>,
) -> Result<Vec<f64>> {
    if fields.rank() != 3 || pattern.shape() != &fields.shape()[1..] {
        return Err(Error::Dimension(format!(
            "project: fields {:?} incompatible with pattern {:?}",
            fields.shape(),
            pattern.shape()
        )));
    }
    let (t_n, h, w) = (fields.shape()[0], fields.shape()[1], fields.shape()[2]);
    let (lat_lo, lat_hi) = lat_band.unwrap_or((-90.0, 90.0));
    let mut out = vec![0.0; t_n];
    for (i, &lat) in grid.latitudes().iter().enumerate().take(h) {
        if lat < lat_lo || lat > lat_hi {
            continue;
        }
        let wt = grid.quadrature_weights()[i];
        for j in 0..w {
            let p = pattern.get(&[i, j]);
            if p == 0.0 {
                continue;
            }
            for (t, o) in out.iter_mut().enumerate() {
                *o += wt * p * fields.data()[(t * h + i) * w + j];
            }
        }
    }
    Ok(out)
}

/// Per-latitude (zonal) mean of a `(H, W)` field.
pub fn zonal_mean(field: &Tensor, grid: &GridSpec) -> Result<Vec<f64>> {
    if field.shape() != [grid.n_lat(), grid.n_lon()] {
        return Err(Error::Dimension(format!(
            "zonal_mean: field {:?} does not match grid {}x{}",
            field.shape(),
            grid.n_lat(),
            grid.n_lon()
        )));
    }
    let w = grid.n_lon();
    Ok((0..grid.n_lat())
        .map(|i| field.data()[i * w..(i + 1) * w].iter().sum::<f64>() / w as f64)
        .collect())
}

/// Weighted inner product of two patterns (orthogonality checks).
pub fn weighted_dot(a: &Tensor, b: &Tensor, grid: &GridSpec) -> Result<f64> {
    if a.shape() != b.shape() || a.shape() != [grid.n_lat(), grid.n_lon()] {
        return Err(Error::Dimension("weighted_dot: shape mismatch".into()));
    }
    let mut s = 0.0;
    for i in 0..grid.n_lat() {
        let wt = grid.quadrature_weights()[i];
        for j in 0..grid.n_lon() {
            s += wt * a.get(&[i, j]) * b.get(&[i, j]);
        }
    }
    Ok(s)
}

// ── Plot-ready output ───────────────────────────────────────────────

/// Write a CSV of aligned columns.
pub fn write_csv(path: &Path, headers: &[&str], columns: &[Vec<f64>]) -> Result<()> {
    if columns.iter().any(|c| c.len() != columns[0].len()) {
        return Err(Error::Dimension("write_csv: ragged columns".into()));
    }
    let mut s = String::new();
    let _ = writeln!(s, "{}", headers.join(","));
    for r in 0..columns.first().map(|c| c.len()).unwrap_or(0) {
        let row: Vec<String> = columns.iter().map(|c| format!("{}", c[r])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Write a gridded field as a binary tensor file plus a small text
/// sidecar describing the grid.
pub fn write_field(path_base: &Path, field: &Tensor, grid: &GridSpec) -> Result<()> {
    io::write_tensor(&path_base.with_extension("smt"), field)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "n_lat = {}", grid.n_lat());
    let _ = writeln!(meta, "n_lon = {}", grid.n_lon());
    let _ = writeln!(meta, "lat_start = -90");
    let _ = writeln!(meta, "lat_end = 90");
    let _ = writeln!(meta, "lon_start = 0");
    let mn = field.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let mx = field.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(meta, "min = {mn}");
    let _ = writeln!(meta, "max = {mx}");
    std::fs::write(path_base.with_extension("meta.txt"), meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sht::{ShtPlan, SpectralField};

    fn grid() -> GridSpec {
        GridSpec::equiangular(18, 36).unwrap()
    }

    #[test]
    fn area_mean_of_constant_and_antisymmetric_fields() {
        let g = grid();
        let c = Tensor::full(&[18, 36], 3.7);
        assert!((area_weighted_mean(&c, &g).unwrap() - 3.7).abs() < 1e-12);
        let anti = Tensor::from_fn(&[18, 36], |idx| {
            let lat = g.latitudes()[idx[0]];
            if lat > 0.0 {
                1.0
            } else if lat < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(area_weighted_mean(&anti, &g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn area_mean_matches_spectral_quadrature() {
        let g = grid();
        let plan = ShtPlan::new(&g, 8).unwrap();
        let mut rng = RngStream::new(3, 0);
        let (l1, m1) = (9, plan.m_max() + 1);
        let mut re = vec![0.0; l1 * m1];
        let mut im = vec![0.0; l1 * m1];
        for l in 0..l1 {
            for m in 0..m1.min(l + 1) {
                re[l * m1 + m] = rng.normal();
                if m > 0 {
                    im[l * m1 + m] = rng.normal();
                }
            }
        }
        let coeffs = SpectralField::new(
            Tensor::from_vec(re.clone(), &[1, 1, l1, m1]).unwrap(),
            Tensor::from_vec(im, &[1, 1, l1, m1]).unwrap(),
        )
        .unwrap();
        let field = plan.inverse(&coeffs).unwrap().reshape(&[18, 36]).unwrap();
        let mean = area_weighted_mean(&field, &g).unwrap();
        // The spherical mean is a_00 / sqrt(4 pi).
        let expected = re[0] / (4.0 * std::f64::consts::PI).sqrt();
        let rel = (mean - expected).abs() / expected.abs().max(1e-12);
        assert!(rel < 1e-6, "rel {rel}");
    }

    #[test]
    fn climatology_of_periodic_series_has_zero_anomalies() {
        let t_n = 48;
        let series = Tensor::from_fn(&[t_n, 2], |idx| ((idx[0] % 12) as f64) + idx[1] as f64)
            .unwrap();
        let c = climatology_and_anomaly(&series, 1, false).unwrap();
        assert!(c.anomalies.data().iter().all(|v| v.abs() < 1e-12));
        // Anomaly means per calendar month vanish by definition.
        let c2 = climatology_and_anomaly(&series, 3, false).unwrap();
        assert!(c2.anomalies.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn partial_year_is_a_data_error() {
        let series = Tensor::zeros(&[13, 1]);
        assert!(matches!(
            climatology_and_anomaly(&series, 1, false),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn detrending_removes_a_planted_linear_ramp_exactly() {
        let t_n = 60;
        let clim = [3.0, -1.0, 0.5, 2.0, 7.0, -2.0, 1.0, 0.0, -4.0, 2.5, 3.5, -1.5];
        let series = Tensor::from_fn(&[t_n, 1], |idx| {
            clim[idx[0] % 12] + 0.031 * idx[0] as f64
        })
        .unwrap();
        let c = climatology_and_anomaly(&series, 1, true).unwrap();
        let worst = c.anomalies.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst <= 1e-10, "worst residual {worst}");
        // Anomaly per-calendar-month means are zero.
        for m in 0..12 {
            let mut s = 0.0;
            let mut n = 0;
            for t in (m..t_n).step_by(12) {
                s += c.anomalies.get(&[t, 0]);
                n += 1;
            }
            assert!((s / n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn regression_recovers_exact_and_null_slopes() {
        let mut rng = RngStream::new(5, 0);
        let t_n = 10_000;
        let index: Vec<f64> = (0..t_n).map(|_| rng.normal()).collect();
        // Standardize the index.
        let var = index.iter().map(|v| v * v).sum::<f64>() / t_n as f64;
        let index: Vec<f64> = index.iter().map(|v| v / var.sqrt()).collect();

        // field = 2 * index at every point.
        let field = Tensor::from_fn(&[t_n, 2, 2], |idx| 2.0 * index[idx[0]]).unwrap();
        let slope = regression_map(&field, &index).unwrap();
        for v in slope.data() {
            assert!((v - 2.0).abs() < 1e-10);
        }

        // Independent white noise regresses to zero within sampling error.
        let noise = Tensor::from_fn(&[t_n, 2, 2], |_| rng.normal()).unwrap();
        let slope = regression_map(&noise, &index).unwrap();
        for v in slope.data() {
            assert!(v.abs() < 0.05, "{v}");
        }

        // The index regressed on itself gives one.
        let self_field = Tensor::from_fn(&[t_n, 1, 1], |idx| index[idx[0]]).unwrap();
        let s = regression_map(&self_field, &index).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-12);

        assert!(matches!(
            regression_map(&field, &vec![0.0; t_n]),
            Err(Error::Stats(_))
        ));
    }

    #[test]
    fn ensemble_mean_regression_equals_mean_of_member_regressions() {
        let mut rng = RngStream::new(6, 0);
        let t_n = 200;
        let members = 4;
        let index: Vec<f64> = (0..t_n).map(|_| rng.normal()).collect();
        let fields: Vec<Tensor> = (0..members)
            .map(|_| Tensor::from_fn(&[t_n, 3, 3], |_| rng.normal()).unwrap())
            .collect();
        let mut mean_field = Tensor::zeros(&[t_n, 3, 3]);
        for f in &fields {
            mean_field = mean_field.add(f).unwrap();
        }
        let mean_field = mean_field.scale(1.0 / members as f64).unwrap();
        let lhs = regression_map(&mean_field, &index).unwrap();
        let mut rhs = Tensor::zeros(&[3, 3]);
        for f in &fields {
            rhs = rhs.add(&regression_map(f, &index).unwrap()).unwrap();
        }
        let rhs = rhs.scale(1.0 / members as f64).unwrap();
        assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    #[test]
    fn rank_one_data_yields_its_pattern_and_pc() {
        let g = grid();
        let mut rng = RngStream::new(7, 0);
        // Smooth pattern and a random amplitude series.
        let pattern = Tensor::from_fn(&[18, 36], |idx| {
            let lat = g.latitudes()[idx[0]].to_radians();
            let lon = (idx[1] as f64 / 36.0) * std::f64::consts::TAU;
            lat.cos() * lon.sin() + 0.3 * lat.sin()
        })
        .unwrap();
        let t_n = 40;
        let amps: Vec<f64> = (0..t_n).map(|_| rng.normal() * 2.0).collect();
        let data = Tensor::from_fn(&[t_n, 18, 36], |idx| {
            amps[idx[0]] * pattern.get(&[idx[1], idx[2]])
        })
        .unwrap();
        let r = eof(&data, 2, &g, None).unwrap();
        assert!(r.explained[0] >= 0.99, "explained {}", r.explained[0]);
        assert!(r.explained[0] >= r.explained[1]);

        // Pattern congruence (weighted correlation) with the construction.
        let dot = weighted_dot(
            &r.patterns.slice(0, 0, 1).unwrap().reshape(&[18, 36]).unwrap(),
            &pattern,
            &g,
        )
        .unwrap();
        let n1 = weighted_dot(&pattern, &pattern, &g).unwrap().sqrt();
        let congruence = dot.abs() / n1;
        assert!(congruence >= 0.99, "congruence {congruence}");

        // Projecting the data onto mode 1 reproduces PC1 (up to sign).
        let p0 = r.patterns.slice(0, 0, 1).unwrap().reshape(&[18, 36]).unwrap();
        let proj = project(&data, &p0, &g, None).unwrap();
        let corr = correlation(&proj, &r.pcs[0]);
        assert!(corr.abs() > 0.999999, "corr {corr}");

        // Orthogonality of the first two modes.
        let p1 = r.patterns.slice(0, 1, 1).unwrap().reshape(&[18, 36]).unwrap();
        let ortho = weighted_dot(&p0, &p1, &g).unwrap();
        assert!(ortho.abs() <= 1e-8, "ortho {ortho}");
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cab = 0.0;
        let mut ca = 0.0;
        let mut cb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cab += (x - ma) * (y - mb);
            ca += (x - ma) * (x - ma);
            cb += (y - mb) * (y - mb);
        }
        cab / (ca.sqrt() * cb.sqrt())
    }

    #[test]
    fn eof_latitude_band_restricts_the_domain() {
        let g = grid();
        let mut rng = RngStream::new(8, 0);
        let data = Tensor::from_fn(&[24, 18, 36], |_| rng.normal()).unwrap();
        let r = eof(&data, 1, &g, Some((0.0, 90.0))).unwrap();
        // Southern hemisphere stays zero.
        for (i, &lat) in g.latitudes().iter().enumerate() {
            if lat < 0.0 {
                for j in 0..36 {
                    assert_eq!(r.patterns.get(&[0, i, j]), 0.0);
                }
            }
        }
    }

    #[test]
    fn nino_index_contracts() {
        let g = grid();
        let region = IndexRegion {
            lat_min: -10.0,
            lat_max: 10.0,
            lon_min: 160.0,
            lon_max: 260.0,
        };
        // Constant SST gives the zero index.
        let sst = Tensor::full(&[24, 18, 36], 300.0);
        let idx = nino_index(&sst, &g, &region, (0, 24), 1).unwrap();
        assert!(idx.values.iter().all(|&v| v == 0.0));

        // Climatology plus a sinusoid localized in the region.
        let t_n = 120;
        let sst = Tensor::from_fn(&[t_n, 18, 36], |ix| {
            let lat = g.latitudes()[ix[1]];
            let lon = 360.0 * ix[2] as f64 / 36.0;
            let seasonal = ((ix[0] % 12) as f64).sin();
            let inside = lat.abs() <= 10.0 && (160.0..=260.0).contains(&lon);
            let sig = if inside {
                (std::f64::consts::TAU * ix[0] as f64 / 40.0).sin()
            } else {
                0.0
            };
            290.0 + seasonal + 2.0 * sig
        })
        .unwrap();
        let idx = nino_index(&sst, &g, &region, (0, t_n), 1).unwrap();
        let target: Vec<f64> = (0..t_n)
            .map(|t| (std::f64::consts::TAU * t as f64 / 40.0).sin())
            .collect();
        let corr = correlation(&idx.values, &target);
        assert!(corr >= 0.999, "corr {corr}");
        // Standardized over the base period.
        let var: f64 =
            idx.values.iter().map(|v| v * v).sum::<f64>() / t_n as f64;
        assert!((var - 1.0).abs() <= 1e-10, "var {var}");
        // Zero mean over the base period.
        let mean: f64 = idx.values.iter().sum::<f64>() / t_n as f64;
        assert!(mean.abs() <= 1e-10);
    }

    #[test]
    fn zonal_mean_averages_each_latitude_row() {
        let g = grid();
        let f = Tensor::from_fn(&[18, 36], |idx| idx[0] as f64 * 10.0 + (idx[1] % 2) as f64)
            .unwrap();
        let z = zonal_mean(&f, &g).unwrap();
        assert_eq!(z.len(), 18);
        for (i, v) in z.iter().enumerate() {
            assert!((v - (i as f64 * 10.0 + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_and_field_writers_produce_files() {
        let dir = std::env::temp_dir().join("climem_diag_out");
        std::fs::create_dir_all(&dir).unwrap();
        write_csv(
            &dir.join("series.csv"),
            &["t", "value"],
            &[vec![0.0, 1.0], vec![2.5, 3.5]],
        )
        .unwrap();
        let text = std::fs::read_to_string(dir.join("series.csv")).unwrap();
        assert!(text.starts_with("t,value\n0,2.5\n1,3.5\n"));

        let g = grid();
        let f = Tensor::full(&[18, 36], 1.25);
        write_field(&dir.join("fld"), &f, &g).unwrap();
        let back = io::read_tensor(&dir.join("fld.smt")).unwrap();
        assert_eq!(back.data(), f.data());
        assert!(dir.join("fld.meta.txt").exists());
    }
}
