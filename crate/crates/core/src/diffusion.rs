//! Conditional latent denoising diffusion: cosine schedule, forward
//! noising with v-targets, online latent normalization, and the reverse
//! sampling loop that produces the next-month latent mean.

use crate::error::{Error, Result};
use crate::params::{join, HasParams};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Noise schedule `{beta_k, alpha_k, alpha_bar_k, beta_tilde_k}` for
/// k = 1..T, under the convention `alpha_bar_0 = 1` (so `beta_tilde_1 = 0`).
#[derive(Debug, Clone)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub offset: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

/// Cosine schedule: `alpha_bar(k) = f(k)/f(0)` with
/// `f(k) = cos^2(((k/T + s)/(1 + s)) * pi/2)`, betas clipped at 0.999 and
/// the cumulative products rebuilt from the clipped betas.
pub fn build_cosine_schedule(steps: usize, offset: f64) -> Result<DiffusionSchedule> {
    if steps < 1 {
        return Err(Error::Config(format!(
            "diffusion schedule needs at least one step, got {steps}"
        )));
    }
    if !(offset > 0.0) || !offset.is_finite() {
        return Err(Error::Config(format!(
            "schedule offset must be positive and finite, got {offset}"
        )));
    }
    let f = |k: f64| {
        let arg = (k / steps as f64 + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2;
        arg.cos().powi(2)
    };
    let f0 = f(0.0);
    let mut beta = Vec::with_capacity(steps);
    let mut prev_bar = 1.0;
    for k in 1..=steps {
        let bar = f(k as f64) / f0;
        beta.push((1.0 - bar / prev_bar).min(0.999));
        prev_bar = bar;
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let mut beta_tilde = Vec::with_capacity(steps);
    for k in 1..=steps {
        let prev = if k == 1 { 1.0 } else { alpha_bar[k - 2] };
        beta_tilde.push((1.0 - prev) / (1.0 - alpha_bar[k - 1]) * beta[k - 1]);
    }
    Ok(DiffusionSchedule {
        steps,
        offset,
        beta,
        alpha,
        alpha_bar,
        beta_tilde,
    })
}

impl DiffusionSchedule {
    fn check_k(&self, k: usize) -> Result<()> {
        if k < 1 || k > self.steps {
            return Err(Error::Data(format!(
                "diffusion step k = {k} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha[k - 1]
    }

    /// Cumulative retention, with `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.alpha_bar[k - 1]
        }
    }

    pub fn beta_tilde(&self, k: usize) -> f64 {
        self.beta_tilde[k - 1]
    }
}

/// Forward noising and the v-target at step `k`:
/// `y_k = sqrt(abar_k) y0 + sqrt(1 - abar_k) eps` and
/// `v_k = sqrt(abar_k) eps - sqrt(1 - abar_k) y0`.
pub fn noise_and_target(
    y0: &Tensor,
    k: usize,
    eps: &Tensor,
    sched: &DiffusionSchedule,
) -> Result<(Tensor, Tensor)> {
    sched.check_k(k)?;
    if y0.shape() != eps.shape() {
        return Err(Error::Dimension(format!(
            "noise_and_target: y0 {:?} and eps {:?} differ",
            y0.shape(),
            eps.shape()
        )));
    }
    let ab = sched.alpha_bar(k);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let y_k = y0.scale(sa)?.add(&eps.scale(sb)?)?;
    let v_k = eps.scale(sa)?.sub(&y0.scale(sb)?)?;
    Ok((y_k, v_k))
}

/// Learned scalar latent normalization `Norm(z) = (z - mu_p) / sigma_p`,
/// with `sigma_p = exp(rho)` kept positive under gradient updates.
#[derive(Debug, Clone)]
pub struct LatentNormalizer {
    pub mu: Tensor,  // scalar parameter
    pub rho: Tensor, // scalar parameter; sigma = exp(rho)
}

impl Default for LatentNormalizer {
    fn default() -> Self {
        Self::new()
    }
}

impl LatentNormalizer {
    pub fn new() -> LatentNormalizer {
        LatentNormalizer {
            mu: Tensor::zeros(&[1]).param(),
            rho: Tensor::zeros(&[1]).param(),
        }
    }

    pub fn mu_value(&self) -> f64 {
        self.mu.data()[0]
    }

    pub fn sigma_value(&self) -> f64 {
        self.rho.data()[0].exp()
    }

    fn broadcast(&self, t: &Tensor, shape: &[usize]) -> Result<Tensor> {
        let ones = vec![1usize; shape.len()];
        t.reshape(&ones)?.expand(shape)
    }

    pub fn normalize(&self, z: &Tensor) -> Result<Tensor> {
        let mu = self.broadcast(&self.mu, z.shape())?;
        let sigma = self.broadcast(&self.rho.exp()?, z.shape())?;
        z.sub(&mu)?.div(&sigma)
    }

    pub fn unnormalize(&self, z: &Tensor) -> Result<Tensor> {
        let mu = self.broadcast(&self.mu, z.shape())?;
        let sigma = self.broadcast(&self.rho.exp()?, z.shape())?;
        z.mul(&sigma)?.add(&mu)
    }
}

impl HasParams for LatentNormalizer {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "mu"), &self.mu);
        f(&join(prefix, "rho"), &self.rho);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "mu"), &mut self.mu);
        f(&join(prefix, "rho"), &mut self.rho);
    }
}

/// Anything that can predict the v-target from the normalized current
/// latent, the noised target latent, conditioning on the latent grid, and
/// per-sample normalized diffusion time.
pub trait VPredict {
    fn predict_v(
        &self,
        z_norm: &Tensor,
        y_k: &Tensor,
        c_latent: &Tensor,
        k_over_t: &[f64],
    ) -> Result<Tensor>;
}

/// Reverse DDPM sampling with the noise drawn through a caller-supplied
/// source (the ensemble engine stacks per-member draws through it).
pub fn ddpm_sample_with(
    predictor: &dyn VPredict,
    z_t: &Tensor,
    c_latent: &Tensor,
    sched: &DiffusionSchedule,
    normalizer: &LatentNormalizer,
    noise: &mut dyn FnMut(&[usize]) -> Result<Tensor>,
) -> Result<Tensor> {
    let z_norm = normalizer.normalize(z_t)?;
    let batch = z_t.shape()[0];
    let mut y = noise(z_t.shape())?;
    for k in (1..=sched.steps).rev() {
        let k_over_t = vec![k as f64 / sched.steps as f64; batch];
        let v_hat = predictor
            .predict_v(&z_norm, &y, c_latent, &k_over_t)
            .map_err(|e| e.at(&format!("ddpm_sample step k={k}")))?;
        let ab = sched.alpha_bar(k);
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        // Noise estimate from the v-prediction.
        let eps_hat = v_hat.scale(sa)?.add(&y.scale(sb)?)?;
        // Posterior mean.
        let coeff = sched.beta(k) / sb;
        let mean = y
            .sub(&eps_hat.scale(coeff)?)?
            .scale(1.0 / sched.alpha(k).sqrt())
            .map_err(|e| e.at(&format!("ddpm_sample step k={k}")))?;
        y = if k > 1 {
            mean.add(&noise(z_t.shape())?.scale(sched.beta_tilde(k).sqrt())?)?
        } else {
            mean
        };
    }
    normalizer.unnormalize(&y)
}

/// Reverse DDPM sampling for one physical step: given the current latent
/// `z_t` (unnormalized) and latent-grid conditioning, run exactly `T`
/// denoising steps and return the unnormalized predicted next-month
/// latent mean.
pub fn ddpm_sample(
    predictor: &dyn VPredict,
    z_t: &Tensor,
    c_latent: &Tensor,
    sched: &DiffusionSchedule,
    normalizer: &LatentNormalizer,
    rng: &mut RngStream,
) -> Result<Tensor> {
    ddpm_sample_with(predictor, z_t, c_latent, sched, normalizer, &mut |shape| {
        rng.gaussian(shape)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn schedule_construction_and_conventions() {
        let s = build_cosine_schedule(15, 0.008).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!((s.beta_tilde(1) - 0.0).abs() == 0.0);
        // Strictly decreasing cumulative retention, inside (0, 1].
        for k in 1..=15 {
            assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
            assert!(s.alpha_bar(k) > 0.0 && s.alpha_bar(k) <= 1.0);
            assert!(s.beta(k) > 0.0 && s.beta(k) <= 0.999);
            assert!(s.beta_tilde(k) >= 0.0);
        }
        // The final unclipped retention hits cos(pi/2) = 0, so the last
        // beta is clipped and alpha_bar(T) stays small but positive.
        assert!((s.beta(15) - 0.999).abs() < 1e-12);
        assert!(s.alpha_bar(15) > 0.0 && s.alpha_bar(15) < 1e-2);
    }

    #[test]
    fn schedule_matches_independent_closed_form() {
        let t = 15usize;
        let s = 0.008f64;
        let sched = build_cosine_schedule(t, s).unwrap();
        // Independent evaluation: alpha_bar as a ratio of squared cosines,
        // betas from consecutive ratios, clipped, re-accumulated.
        let g = |k: f64| {
            (((k / t as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2)
                .cos()
                .powi(2)
        };
        let mut bar_prev = 1.0;
        let mut prod = 1.0;
        for k in 1..=t {
            let bar = g(k as f64) / g(0.0);
            let beta = (1.0 - bar / bar_prev).min(0.999);
            assert!(
                (sched.beta(k) - beta).abs() <= 1e-12,
                "beta_{k}: {} vs {}",
                sched.beta(k),
                beta
            );
            prod *= 1.0 - beta;
            assert!(
                (sched.alpha_bar(k) - prod).abs() <= 1e-12,
                "alpha_bar_{k}"
            );
            let prev_bar_eff = sched.alpha_bar(k - 1);
            let bt = (1.0 - prev_bar_eff) / (1.0 - sched.alpha_bar(k)) * sched.beta(k);
            assert!((sched.beta_tilde(k) - bt).abs() <= 1e-12, "beta_tilde_{k}");
            bar_prev = bar;
        }
    }

    #[test]
    fn schedule_invariants_hold_for_many_settings() {
        for steps in [1usize, 2, 5, 15, 64] {
            for offset in [1e-4, 0.008, 0.05, 0.3] {
                let s = build_cosine_schedule(steps, offset).unwrap();
                assert_eq!(s.beta_tilde(1), 0.0, "T={steps} s={offset}");
                for k in 1..=steps {
                    assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
                    assert!(s.beta_tilde(k) >= 0.0);
                }
            }
        }
        assert!(build_cosine_schedule(0, 0.008).is_err());
        assert!(build_cosine_schedule(5, 0.0).is_err());
    }

    #[test]
    fn v_epsilon_identity_is_exact() {
        let sched = build_cosine_schedule(15, 0.008).unwrap();
        let mut rng = RngStream::new(7, 0);
        let y0 = rng.gaussian(&[2, 3, 4]).unwrap();
        let eps = rng.gaussian(&[2, 3, 4]).unwrap();
        for k in 1..=15 {
            let (y_k, v_k) = noise_and_target(&y0, k, &eps, &sched).unwrap();
            let ab = sched.alpha_bar(k);
            let rebuilt = v_k
                .scale(ab.sqrt())
                .unwrap()
                .add(&y_k.scale((1.0 - ab).sqrt()).unwrap())
                .unwrap();
            assert!(rebuilt.max_abs_diff(&eps) <= 1e-12, "k = {k}");
        }
        assert!(noise_and_target(&y0, 0, &eps, &sched).is_err());
        assert!(noise_and_target(&y0, 16, &eps, &sched).is_err());
    }

    #[test]
    fn limiting_cases_of_noising() {
        // A hypothetical schedule edge: alpha_bar = 1 gives y = y0, v = eps;
        // alpha_bar = 0 gives y = eps, v = -y0. Exercised via the formula.
        let mut rng = RngStream::new(8, 0);
        let y0 = rng.gaussian(&[4]).unwrap();
        let eps = rng.gaussian(&[4]).unwrap();
        for (ab, expect_y, expect_v) in [
            (1.0, y0.clone(), eps.clone()),
            (0.0, eps.clone(), y0.neg().unwrap()),
        ] {
            let (sa, sb) = (f64::sqrt(ab), f64::sqrt(1.0 - ab));
            let y = y0.scale(sa).unwrap().add(&eps.scale(sb).unwrap()).unwrap();
            let v = eps.scale(sa).unwrap().sub(&y0.scale(sb).unwrap()).unwrap();
            assert!(y.max_abs_diff(&expect_y) == 0.0);
            assert!(v.max_abs_diff(&expect_v) == 0.0);
        }
    }

    #[test]
    fn normalizer_roundtrip_and_identity() {
        let mut rng = RngStream::new(9, 0);
        let z = rng.gaussian(&[2, 3, 4, 5]).unwrap();
        let ident = LatentNormalizer::new();
        assert!(ident.normalize(&z).unwrap().max_abs_diff(&z) == 0.0);

        let mut n = LatentNormalizer::new();
        n.mu = Tensor::from_vec(vec![1.7], &[1]).unwrap().param();
        n.rho = Tensor::from_vec(vec![0.4], &[1]).unwrap().param();
        let round = n.unnormalize(&n.normalize(&z).unwrap()).unwrap();
        assert!(round.max_abs_diff(&z) <= 1e-12);
    }

    #[test]
    fn normalizer_whitens_matching_statistics() {
        let mut rng = RngStream::new(10, 0);
        let z = rng.gaussian(&[1, 4, 8, 8]).unwrap();
        // Build a batch with known offset and scale.
        let shifted = z.scale(2.5).unwrap().add_scalar(3.0).unwrap();
        let mut n = LatentNormalizer::new();
        n.mu = Tensor::from_vec(vec![3.0], &[1]).unwrap().param();
        n.rho = Tensor::from_vec(vec![2.5f64.ln()], &[1]).unwrap().param();
        let out = n.normalize(&shifted).unwrap();
        let mean: f64 = out.data().iter().sum::<f64>() / out.numel() as f64;
        let var: f64 =
            out.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / out.numel() as f64;
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.1, "std {}", var.sqrt());
    }

    /// Ideal denoiser for a fixed target: returns the true v implied by
    /// the chain state, and counts its invocations.
    struct IdealDenoiser {
        target: Tensor,
        sched: DiffusionSchedule,
        calls: Cell<usize>,
    }

    impl VPredict for IdealDenoiser {
        fn predict_v(
            &self,
            _z: &Tensor,
            y_k: &Tensor,
            _c: &Tensor,
            k_over_t: &[f64],
        ) -> Result<Tensor> {
            self.calls.set(self.calls.get() + 1);
            let k = (k_over_t[0] * self.sched.steps as f64).round() as usize;
            let ab = self.sched.alpha_bar(k);
            let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
            // eps implied by y_k for the fixed target, then v from it.
            let eps = y_k.sub(&self.target.scale(sa)?)?.scale(1.0 / sb)?;
            eps.scale(sa)?.sub(&self.target.scale(sb)?)
        }
    }

    struct ZeroPredictor;

    impl VPredict for ZeroPredictor {
        fn predict_v(
            &self,
            _z: &Tensor,
            y_k: &Tensor,
            _c: &Tensor,
            _k: &[f64],
        ) -> Result<Tensor> {
            Ok(Tensor::zeros(y_k.shape()))
        }
    }

    #[test]
    fn ideal_denoiser_recovers_target_exactly() {
        let sched = build_cosine_schedule(15, 0.008).unwrap();
        let mut rng = RngStream::new(11, 0);
        let target = rng.gaussian(&[1, 4, 6, 6]).unwrap();
        let denoiser = IdealDenoiser {
            target: target.clone(),
            sched: sched.clone(),
            calls: Cell::new(0),
        };
        let normalizer = LatentNormalizer::new();
        let z = rng.gaussian(&[1, 4, 6, 6]).unwrap();
        let c = Tensor::zeros(&[1, 6, 6, 6]);
        let out = ddpm_sample(&denoiser, &z, &c, &sched, &normalizer, &mut rng).unwrap();
        assert!(
            out.max_abs_diff(&target) <= 1e-10,
            "max diff {}",
            out.max_abs_diff(&target)
        );
        // Exactly T predictor evaluations.
        assert_eq!(denoiser.calls.get(), 15);
    }

    #[test]
    fn zero_predictor_is_deterministic_under_fixed_seed() {
        let sched = build_cosine_schedule(15, 0.008).unwrap();
        let normalizer = LatentNormalizer::new();
        let z = Tensor::zeros(&[1, 2, 4, 4]);
        let c = Tensor::zeros(&[1, 6, 4, 4]);
        let mut r1 = RngStream::new(5, 77);
        let mut r2 = RngStream::new(5, 77);
        let a = ddpm_sample(&ZeroPredictor, &z, &c, &sched, &normalizer, &mut r1).unwrap();
        let b = ddpm_sample(&ZeroPredictor, &z, &c, &sched, &normalizer, &mut r2).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.shape(), &[1, 2, 4, 4]);
        // With a zero v-hat the output is a nontrivial affine function of
        // the injected noises, so it should not be identically zero.
        assert!(a.data().iter().any(|&v| v != 0.0));
    }
}
