//! Forward and inverse spherical harmonic transforms on equiangular
//! latitude-longitude grids, plus spectral resampling by mode
//! truncation/extension.
//!
//! Convention: orthonormal complex harmonics with Condon-Shortley phase,
//! so a unit constant field has the single coefficient `sqrt(4*pi)` at
//! `(l, m) = (0, 0)`. Grids are pole-inclusive (latitudes run from -90 to
//! +90 degrees) with Clenshaw-Curtis quadrature weights; the pole rows
//! carry near-zero weight. Real fields are represented by their `m >= 0`
//! coefficients split into real and imaginary parts, which keeps every
//! transform a real-linear (and therefore differentiable) map.

pub mod legendre;

use std::f64::consts::PI;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use legendre::{clenshaw_curtis_weights, normalized_assoc_legendre};

/// An equiangular latitude-longitude grid including both poles.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n_lat: usize,
    n_lon: usize,
    latitudes: Vec<f64>,
    weights: Vec<f64>,
}

impl GridSpec {
    pub fn equiangular(n_lat: usize, n_lon: usize) -> Result<GridSpec> {
        if n_lat < 2 || n_lon < 4 {
            return Err(Error::Config(format!(
                "grid {n_lat}x{n_lon} too small for spherical transforms"
            )));
        }
        let latitudes: Vec<f64> = (0..n_lat)
            .map(|i| -90.0 + 180.0 * i as f64 / (n_lat - 1) as f64)
            .collect();
        let weights = clenshaw_curtis_weights(n_lat);
        Ok(GridSpec {
            n_lat,
            n_lon,
            latitudes,
            weights,
        })
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    /// Latitudes in degrees, south to north.
    pub fn latitudes(&self) -> &[f64] {
        &self.latitudes
    }

    /// Quadrature weights over sin-latitude; nonnegative, summing to 2.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Longitudes in degrees, starting at 0.
    pub fn longitudes(&self) -> Vec<f64> {
        (0..self.n_lon)
            .map(|j| 360.0 * j as f64 / self.n_lon as f64)
            .collect()
    }

    /// Highest degree representable on this grid.
    pub fn max_l(&self) -> usize {
        self.n_lat - 1
    }

    /// Highest unaliased zonal order for a given band limit.
    pub fn max_m(&self, l_max: usize) -> usize {
        let nyq = if self.n_lon % 2 == 0 {
            self.n_lon / 2 - 1
        } else {
            (self.n_lon - 1) / 2
        };
        l_max.min(nyq)
    }

    /// Quadrature approximation of the integral of f^2 over the sphere
    /// (used for Parseval checks). Field shape `(n_lat, n_lon)`.
    pub fn quadrature_energy(&self, field: &Tensor) -> Result<f64> {
        if field.shape() != [self.n_lat, self.n_lon] {
            return Err(Error::Dimension(format!(
                "quadrature_energy: field {:?} does not match grid {}x{}",
                field.shape(),
                self.n_lat,
                self.n_lon
            )));
        }
        let dphi = 2.0 * PI / self.n_lon as f64;
        let mut e = 0.0;
        for i in 0..self.n_lat {
            let mut row = 0.0;
            for j in 0..self.n_lon {
                let v = field.get(&[i, j]);
                row += v * v;
            }
            e += self.weights[i] * row;
        }
        Ok(e * dphi)
    }
}

/// Complex spherical-harmonic coefficients of a batch of real fields,
/// stored rectangularly over `(degree l, order m >= 0)` with structural
/// zeros where `m > l`. Shapes are `(batch, channel, l_max+1, m_max+1)`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub re: Tensor,
    pub im: Tensor,
    l_max: usize,
    m_max: usize,
}

impl SpectralField {
    pub fn new(re: Tensor, im: Tensor) -> Result<SpectralField> {
        if re.shape() != im.shape() || re.rank() != 4 {
            return Err(Error::Dimension(format!(
                "spectral field parts must share a rank-4 shape, got {:?} and {:?}",
                re.shape(),
                im.shape()
            )));
        }
        let l_max = re.shape()[2] - 1;
        let m_max = re.shape()[3] - 1;
        Ok(SpectralField { re, im, l_max, m_max })
    }

    pub fn batch(&self) -> usize {
        self.re.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.re.shape()[1]
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Spherical energy sum: |a_l0|^2 + 2 sum_{m>=1} |a_lm|^2, matching
    /// the quadrature energy of the synthesized real field.
    pub fn energy(&self) -> f64 {
        let (l1, m1) = (self.l_max + 1, self.m_max + 1);
        let re = self.re.data();
        let im = self.im.data();
        let per = l1 * m1;
        let outer = re.len() / per;
        let mut e = 0.0;
        for o in 0..outer {
            for l in 0..l1 {
                for m in 0..m1 {
                    let k = o * per + l * m1 + m;
                    let a = re[k] * re[k] + im[k] * im[k];
                    e += if m == 0 { a } else { 2.0 * a };
                }
            }
        }
        e
    }
}

/// Precomputed tables for transforms between one grid and one band limit.
/// Plans are immutable after construction and can be shared.
#[derive(Debug)]
pub struct ShtPlan {
    grid: GridSpec,
    l_max: usize,
    m_max: usize,
    analysis_cos: Tensor,
    analysis_sin_neg: Tensor,
    synth_cos: Tensor,
    synth_sin: Tensor,
    proj_table: Rc<Vec<f64>>,
    synth_table: Rc<Vec<f64>>,
}

/// Batched contraction over the latitude/degree axis against a constant
/// `(n_lat, l_max+1, m_max+1)` table, batched over the trailing `m` axis.
/// `project = true` maps `(.., n_lat, m1) -> (.., l1, m1)`; `false` is the
/// adjoint direction `(.., l1, m1) -> (.., n_lat, m1)`.
fn lat_table_apply(
    input: &Tensor,
    table: &Rc<Vec<f64>>,
    n_lat: usize,
    l1: usize,
    m1: usize,
    project: bool,
) -> Result<Tensor> {
    let shape = input.shape();
    let rank = shape.len();
    let (rows_in, rows_out) = if project { (n_lat, l1) } else { (l1, n_lat) };
    if rank < 2 || shape[rank - 2] != rows_in || shape[rank - 1] != m1 {
        return Err(Error::Dimension(format!(
            "lat_table_apply: input {:?} incompatible with ({rows_in}, {m1}) slab",
            shape
        )));
    }
    let outer: usize = shape[..rank - 2].iter().product();

    let kernel = {
        let table = Rc::clone(table);
        move |src: &[f64], same_direction: bool| -> Vec<f64> {
            let to_l = same_direction == project;
            let ro = if to_l { l1 } else { n_lat };
            let ri = if to_l { n_lat } else { l1 };
            let mut dst = vec![0.0; outer * ro * m1];
            for o in 0..outer {
                let src_base = o * ri * m1;
                let dst_base = o * ro * m1;
                for i in 0..n_lat {
                    for l in 0..l1 {
                        let trow = &table[(i * l1 + l) * m1..(i * l1 + l + 1) * m1];
                        let (s, d) = if to_l { (i, l) } else { (l, i) };
                        let srow = &src[src_base + s * m1..src_base + (s + 1) * m1];
                        let drow = &mut dst[dst_base + d * m1..dst_base + (d + 1) * m1];
                        for ((dv, sv), tv) in drow.iter_mut().zip(srow).zip(trow) {
                            *dv += tv * sv;
                        }
                    }
                }
            }
            dst
        }
    };

    let data = kernel(input.data(), true);
    let mut out_shape = shape.to_vec();
    out_shape[rank - 2] = rows_out;
    Tensor::from_op(
        data,
        out_shape,
        if project { "sht_project" } else { "sht_synthesize" },
        vec![input.clone()],
        move |_, g| vec![Some(kernel(g, false))],
    )
}

impl ShtPlan {
    pub fn new(grid: &GridSpec, l_max: usize) -> Result<Rc<ShtPlan>> {
        if l_max > grid.max_l() {
            return Err(Error::Config(format!(
                "band limit l_max = {l_max} exceeds grid Nyquist degree {} for {} latitudes",
                grid.max_l(),
                grid.n_lat()
            )));
        }
        let m_max = grid.max_m(l_max);
        let (l1, m1) = (l_max + 1, m_max + 1);
        let n_lat = grid.n_lat();
        let n_lon = grid.n_lon();
        let dphi = 2.0 * PI / n_lon as f64;

        let analysis_cos = Tensor::from_fn(&[n_lon, m1], |idx| {
            (idx[1] as f64 * idx[0] as f64 * dphi).cos() * dphi
        })?;
        let analysis_sin_neg = Tensor::from_fn(&[n_lon, m1], |idx| {
            -(idx[1] as f64 * idx[0] as f64 * dphi).sin() * dphi
        })?;
        // Synthesis doubles m >= 1 terms to account for negative orders.
        let synth_cos = Tensor::from_fn(&[m1, n_lon], |idx| {
            let scale = if idx[0] == 0 { 1.0 } else { 2.0 };
            scale * (idx[0] as f64 * idx[1] as f64 * dphi).cos()
        })?;
        let synth_sin = Tensor::from_fn(&[m1, n_lon], |idx| {
            let scale = if idx[0] == 0 { 1.0 } else { 2.0 };
            scale * (idx[0] as f64 * idx[1] as f64 * dphi).sin()
        })?;

        let mut proj = vec![0.0; n_lat * l1 * m1];
        let mut synth = vec![0.0; n_lat * l1 * m1];
        for (i, lat) in grid.latitudes().iter().enumerate() {
            let x = lat.to_radians().sin();
            let tab = normalized_assoc_legendre(l_max, m_max, x);
            let w = grid.quadrature_weights()[i];
            for l in 0..l1 {
                for m in 0..m1.min(l + 1) {
                    let p = tab[l * m1 + m];
                    proj[(i * l1 + l) * m1 + m] = w * p;
                    synth[(i * l1 + l) * m1 + m] = p;
                }
            }
        }

        Ok(Rc::new(ShtPlan {
            grid: grid.clone(),
            l_max,
            m_max,
            analysis_cos,
            analysis_sin_neg,
            synth_cos,
            synth_sin,
            proj_table: Rc::new(proj),
            synth_table: Rc::new(synth),
        }))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Analyze a real grid field `(batch, channel, n_lat, n_lon)` into
    /// spherical-harmonic coefficients.
    pub fn forward(&self, field: &Tensor) -> Result<SpectralField> {
        if field.rank() != 4
            || field.shape()[2] != self.grid.n_lat()
            || field.shape()[3] != self.grid.n_lon()
        {
            return Err(Error::Dimension(format!(
                "sht forward: field {:?} does not match grid {}x{}",
                field.shape(),
                self.grid.n_lat(),
                self.grid.n_lon()
            )));
        }
        let (l1, m1) = (self.l_max + 1, self.m_max + 1);
        let fm_re = field.contract(&self.analysis_cos, &[(3, 0)])?;
        let fm_im = field.contract(&self.analysis_sin_neg, &[(3, 0)])?;
        let re = lat_table_apply(&fm_re, &self.proj_table, self.grid.n_lat(), l1, m1, true)?;
        let im = lat_table_apply(&fm_im, &self.proj_table, self.grid.n_lat(), l1, m1, true)?;
        SpectralField::new(re, im)
    }

    /// Synthesize coefficients back onto this plan's grid. The field's
    /// band limit must equal the plan's (resample first if needed).
    pub fn inverse(&self, coeffs: &SpectralField) -> Result<Tensor> {
        if coeffs.l_max() != self.l_max || coeffs.m_max() != self.m_max {
            return Err(Error::Config(format!(
                "sht inverse: coefficients band limit ({}, {}) does not match plan ({}, {})",
                coeffs.l_max(),
                coeffs.m_max(),
                self.l_max,
                self.m_max
            )));
        }
        let (l1, m1) = (self.l_max + 1, self.m_max + 1);
        let gm_re = lat_table_apply(&coeffs.re, &self.synth_table, self.grid.n_lat(), l1, m1, false)?;
        let gm_im = lat_table_apply(&coeffs.im, &self.synth_table, self.grid.n_lat(), l1, m1, false)?;
        let cos_part = gm_re.contract(&self.synth_cos, &[(3, 0)])?;
        let sin_part = gm_im.contract(&self.synth_sin, &[(3, 0)])?;
        cos_part.sub(&sin_part)
    }
}

fn pad_axis(t: &Tensor, axis: usize, extra: usize) -> Result<Tensor> {
    if extra == 0 {
        return Ok(t.clone());
    }
    let mut pad_shape = t.shape().to_vec();
    pad_shape[axis] = extra;
    let zeros = Tensor::zeros(&pad_shape);
    Tensor::concat(&[t, &zeros], axis)
}

/// Truncate or zero-extend coefficients to a new band limit. Modes present
/// in both index sets are copied; truncated modes are dropped; extended
/// modes are zero-filled.
pub fn spectral_resample(
    coeffs: &SpectralField,
    new_l_max: usize,
    new_m_max: usize,
) -> Result<SpectralField> {
    let keep_l = coeffs.l_max().min(new_l_max) + 1;
    let keep_m = coeffs.m_max().min(new_m_max) + 1;
    let mut re = coeffs.re.slice(2, 0, keep_l)?.slice(3, 0, keep_m)?;
    let mut im = coeffs.im.slice(2, 0, keep_l)?.slice(3, 0, keep_m)?;
    re = pad_axis(&re, 2, new_l_max + 1 - keep_l)?;
    im = pad_axis(&im, 2, new_l_max + 1 - keep_l)?;
    re = pad_axis(&re, 3, new_m_max + 1 - keep_m)?;
    im = pad_axis(&im, 3, new_m_max + 1 - keep_m)?;
    SpectralField::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::check_gradient;

    fn random_band_limited(
        rng: &mut RngStream,
        plan: &ShtPlan,
        batch: usize,
        channels: usize,
    ) -> SpectralField {
        let (l1, m1) = (plan.l_max() + 1, plan.m_max() + 1);
        let mut re = vec![0.0; batch * channels * l1 * m1];
        let mut im = vec![0.0; batch * channels * l1 * m1];
        for o in 0..batch * channels {
            for l in 0..l1 {
                for m in 0..=l.min(m1 - 1) {
                    re[(o * l1 + l) * m1 + m] = rng.normal();
                    if m > 0 {
                        im[(o * l1 + l) * m1 + m] = rng.normal();
                    }
                }
            }
        }
        SpectralField::new(
            Tensor::from_vec(re, &[batch, channels, l1, m1]).unwrap(),
            Tensor::from_vec(im, &[batch, channels, l1, m1]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_field_projects_onto_y00() {
        let grid = GridSpec::equiangular(18, 36).unwrap();
        let plan = ShtPlan::new(&grid, 10).unwrap();
        let field = Tensor::full(&[1, 1, 18, 36], 1.0);
        let c = plan.forward(&field).unwrap();
        let expected = (4.0 * PI).sqrt();
        assert!((c.re.get(&[0, 0, 0, 0]) - expected).abs() < 1e-12);
        for l in 0..=10 {
            for m in 0..=c.m_max() {
                if l == 0 && m == 0 {
                    continue;
                }
                assert!(c.re.get(&[0, 0, l, m]).abs() <= 1e-12, "l={l} m={m}");
                assert!(c.im.get(&[0, 0, l, m]).abs() <= 1e-12, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn zero_field_gives_zero_coefficients() {
        let grid = GridSpec::equiangular(12, 24).unwrap();
        let plan = ShtPlan::new(&grid, 6).unwrap();
        let c = plan.forward(&Tensor::zeros(&[1, 2, 12, 24])).unwrap();
        assert!(c.re.data().iter().all(|&v| v == 0.0));
        assert!(c.im.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn y32_recovered_and_matches_direct_quadrature() {
        // Field = Re(Y_3^2). Its m >= 0 coefficient is a_32 = 1/2.
        let grid = GridSpec::equiangular(24, 48).unwrap();
        let plan = ShtPlan::new(&grid, 8).unwrap();
        let y32 = |lat_deg: f64, lon_deg: f64| {
            let x = lat_deg.to_radians().sin();
            let s2 = 1.0 - x * x;
            let norm = 0.25 * (105.0 / (2.0 * PI)).sqrt();
            norm * s2 * x * (2.0 * lon_deg.to_radians()).cos()
        };
        let lats = grid.latitudes().to_vec();
        let lons = grid.longitudes();
        let field =
            Tensor::from_fn(&[1, 1, 24, 48], |idx| y32(lats[idx[2]], lons[idx[3]])).unwrap();
        let c = plan.forward(&field).unwrap();
        assert!((c.re.get(&[0, 0, 3, 2]) - 0.5).abs() < 1e-8);
        assert!(c.im.get(&[0, 0, 3, 2]).abs() < 1e-10);

        // Independent direct quadrature for the same coefficient.
        let dphi = 2.0 * PI / 48.0;
        let mut acc_re = 0.0;
        for (i, lat) in lats.iter().enumerate() {
            let x = lat.to_radians().sin();
            let s2: f64 = 1.0 - x * x;
            let p32 = 0.25 * (105.0 / (2.0 * PI)).sqrt() * s2 * x;
            for (j, lon) in lons.iter().enumerate() {
                let f = field.get(&[0, 0, i, j]);
                acc_re +=
                    grid.quadrature_weights()[i] * dphi * f * p32 * (2.0 * lon.to_radians()).cos();
            }
        }
        assert!((acc_re - c.re.get(&[0, 0, 3, 2])).abs() < 1e-10);

        // Every other coefficient is negligible.
        for l in 0..=8 {
            for m in 0..=c.m_max() {
                if (l, m) == (3, 2) {
                    continue;
                }
                assert!(c.re.get(&[0, 0, l, m]).abs() < 1e-8, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn roundtrip_on_five_degree_grid() {
        let grid = GridSpec::equiangular(36, 72).unwrap();
        let plan = ShtPlan::new(&grid, 17).unwrap();
        let mut rng = RngStream::new(17, 0);
        let coeffs = random_band_limited(&mut rng, &plan, 1, 2);
        let field = plan.inverse(&coeffs).unwrap();
        let back = plan.forward(&field).unwrap();
        let num: f64 = back
            .re
            .data()
            .iter()
            .zip(coeffs.re.data())
            .chain(back.im.data().iter().zip(coeffs.im.data()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = coeffs
            .re
            .data()
            .iter()
            .chain(coeffs.im.data())
            .map(|v| v * v)
            .sum();
        assert!((num / den).sqrt() <= 1e-6, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn delta_at_origin_synthesizes_constant() {
        let grid = GridSpec::equiangular(10, 20).unwrap();
        let plan = ShtPlan::new(&grid, 4).unwrap();
        let (l1, m1) = (5, plan.m_max() + 1);
        let mut re = vec![0.0; l1 * m1];
        re[0] = 1.0;
        let c = SpectralField::new(
            Tensor::from_vec(re, &[1, 1, l1, m1]).unwrap(),
            Tensor::zeros(&[1, 1, l1, m1]),
        )
        .unwrap();
        let field = plan.inverse(&c).unwrap();
        let expected = 1.0 / (4.0 * PI).sqrt();
        for v in field.data() {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_energy_matches_quadrature() {
        let grid = GridSpec::equiangular(36, 72).unwrap();
        let plan = ShtPlan::new(&grid, 17).unwrap();
        let mut rng = RngStream::new(23, 0);
        let coeffs = random_band_limited(&mut rng, &plan, 1, 1);
        let field = plan.inverse(&coeffs).unwrap();
        let grid_energy = grid
            .quadrature_energy(&field.reshape(&[36, 72]).unwrap())
            .unwrap();
        let coeff_energy = coeffs.energy();
        let rel = (grid_energy - coeff_energy).abs() / coeff_energy;
        assert!(rel < 1e-8, "rel {rel}");
    }

    #[test]
    fn resample_identity_and_containment() {
        let grid = GridSpec::equiangular(24, 48).unwrap();
        let plan = ShtPlan::new(&grid, 10).unwrap();
        let mut rng = RngStream::new(31, 0);
        let c = random_band_limited(&mut rng, &plan, 2, 1);
        let same = spectral_resample(&c, c.l_max(), c.m_max()).unwrap();
        assert_eq!(same.re.data(), c.re.data());
        assert_eq!(same.im.data(), c.im.data());

        // Truncate low-band coefficients up to 20 and back: identical.
        let up = spectral_resample(&c, 20, 20).unwrap();
        let back = spectral_resample(&up, c.l_max(), c.m_max()).unwrap();
        assert!(back.re.max_abs_diff(&c.re) < 1e-12);
        assert!(back.im.max_abs_diff(&c.im) < 1e-12);
    }

    #[test]
    fn constant_survives_grid_downsampling() {
        let fine = GridSpec::equiangular(24, 48).unwrap();
        let coarse = GridSpec::equiangular(8, 16).unwrap();
        let fine_plan = ShtPlan::new(&fine, 11).unwrap();
        let coarse_plan = ShtPlan::new(&coarse, 5).unwrap();
        let field = Tensor::full(&[1, 1, 24, 48], 3.25);
        let c = fine_plan.forward(&field).unwrap();
        let down = spectral_resample(&c, coarse_plan.l_max(), coarse_plan.m_max()).unwrap();
        let small = coarse_plan.inverse(&down).unwrap();
        for v in small.data() {
            assert!((v - 3.25).abs() < 1e-10);
        }
        // And back up to the fine grid, still constant.
        let up = spectral_resample(
            &coarse_plan.forward(&small).unwrap(),
            fine_plan.l_max(),
            fine_plan.m_max(),
        )
        .unwrap();
        let big = fine_plan.inverse(&up).unwrap();
        for v in big.data() {
            assert!((v - 3.25).abs() < 1e-10);
        }
    }

    #[test]
    fn linearity_of_forward() {
        let grid = GridSpec::equiangular(12, 24).unwrap();
        let plan = ShtPlan::new(&grid, 5).unwrap();
        let mut rng = RngStream::new(41, 0);
        let f = rng.gaussian(&[1, 1, 12, 24]).unwrap();
        let g = rng.gaussian(&[1, 1, 12, 24]).unwrap();
        let lhs = plan
            .forward(&f.scale(2.5).unwrap().add(&g).unwrap())
            .unwrap();
        let rhs_re = plan
            .forward(&f)
            .unwrap()
            .re
            .scale(2.5)
            .unwrap()
            .add(&plan.forward(&g).unwrap().re)
            .unwrap();
        assert!(lhs.re.max_abs_diff(&rhs_re) < 1e-12);
    }

    #[test]
    fn nyquist_violation_is_config_error() {
        let grid = GridSpec::equiangular(12, 24).unwrap();
        assert!(matches!(ShtPlan::new(&grid, 12), Err(Error::Config(_))));
    }

    #[test]
    fn gradients_flow_through_both_transforms() {
        let grid = GridSpec::equiangular(6, 12).unwrap();
        let plan = ShtPlan::new(&grid, 4).unwrap();
        let mut rng = RngStream::new(51, 0);
        let x = rng.gaussian(&[1, 1, 6, 12]).unwrap();
        let probe = rng.gaussian(&[1, 1, 6, 12]).unwrap();
        let plan2 = Rc::clone(&plan);
        let err = check_gradient(
            move |ps| {
                let c = plan2.forward(&ps[0])?;
                let c2 = SpectralField::new(c.re.scale(1.5)?, c.im.scale(1.5)?)?;
                let back = plan2.inverse(&c2)?;
                back.mul(&probe)?.sum_all()
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "gradient error {err}");
    }
}
