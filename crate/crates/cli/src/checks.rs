//! `climem check`: built-in numerical self-checks with one PASS/FAIL
//! line per item. Exits nonzero (numeric error) if anything fails.

use clap::Subcommand;

use climem_core::config::RunConfig;
use climem_core::diffusion::build_cosine_schedule;
use climem_core::error::{Error, Result};
use climem_core::networks::EmulatorModel;
use climem_core::params::{collect_params, HasParams};
use climem_core::rng::RngStream;
use climem_core::sht::{GridSpec, ShtPlan, SpectralField};
use climem_core::spectral::S2Conv;
use climem_core::tensor::{check_gradient, Tensor};

#[derive(Subcommand)]
pub enum Check {
    /// Finite-difference gradient checks of every layer at reduced size.
    Gradients,
    /// Spherical-transform roundtrip, Parseval, and normalization checks.
    Sht,
    /// Cosine-schedule table invariants.
    Schedule,
}

struct Report {
    failures: usize,
}

impl Report {
    fn new() -> Report {
        Report { failures: 0 }
    }

    fn item(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("[PASS] {name}: {detail}");
        } else {
            self.failures += 1;
            println!("[FAIL] {name}: {detail}");
        }
    }

    fn finish(self) -> Result<()> {
        if self.failures > 0 {
            Err(Error::Numeric(format!("{} check(s) failed", self.failures)))
        } else {
            Ok(())
        }
    }
}

fn grad_check_layer<M: HasParams + Clone>(
    layer: &M,
    f: impl Fn(&M) -> Result<Tensor>,
) -> Result<f64> {
    let named = collect_params(layer);
    let tensors: Vec<Tensor> = named.iter().map(|(_, t)| t.detach()).collect();
    let layer = layer.clone();
    check_gradient(
        move |ps| {
            let mut l = layer.clone();
            let mut i = 0;
            l.visit_params_mut("", &mut |_, t| {
                *t = ps[i].clone();
                i += 1;
            });
            f(&l)
        },
        &tensors,
        1e-5,
    )
}

pub fn run(cmd: Check) -> Result<()> {
    match cmd {
        Check::Gradients => gradients(),
        Check::Sht => sht(),
        Check::Schedule => schedule(),
    }
}

fn reduced_cfg() -> RunConfig {
    RunConfig {
        n_lat: 18,
        n_lon: 36,
        phys_l_max: 8,
        latent_n_lat: 6,
        latent_n_lon: 12,
        latent_l_max: 5,
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
        ..RunConfig::toy()
    }
}

fn gradients() -> Result<()> {
    let tol = 1e-4;
    let mut report = Report::new();
    let mut rng = RngStream::new(7, 0);
    let grid = GridSpec::equiangular(12, 24).unwrap();

    // Standalone S2 convolution (tensor-product operator inside).
    let conv = S2Conv::learned(&grid, 4, 2, 2, 3, true, &mut rng)?;
    let x = rng.gaussian(&[1, 2, 12, 24])?;
    let probe = rng.gaussian(&[1, 2, 12, 24])?;
    let err = grad_check_layer(&conv, move |c| c.forward(&x)?.mul(&probe)?.sum_all())?;
    report.item("s2-conv", err <= tol, format!("max relative error {err:.3e}"));

    // Conditional RMS norm.
    let norm =
        climem_core::conditioning::SpatialCondRmsNorm::new(&grid, 4, 3, 3, 2, &mut rng)?;
    let h = rng.gaussian(&[1, 3, 12, 24])?;
    let c = rng.gaussian(&[1, 6, 12, 24])?;
    let probe = rng.gaussian(&[1, 3, 12, 24])?;
    let err = grad_check_layer(&norm, move |n| n.forward(&h, &c)?.mul(&probe)?.sum_all())?;
    report.item(
        "conditional-rmsnorm",
        err <= tol,
        format!("max relative error {err:.3e}"),
    );

    // Seasonal embedding.
    let se = climem_core::conditioning::SeasonalEmbedding::new(&grid, &mut rng)?;
    let probe = rng.gaussian(&[3, 12, 24])?;
    let err = grad_check_layer(&se, move |s| s.embed(5)?.mul(&probe)?.sum_all())?;
    report.item(
        "seasonal-embedding",
        err <= tol,
        format!("max relative error {err:.3e}"),
    );

    // Metadata embedding.
    let me = climem_core::conditioning::ChannelMetadataEmbedding::new(&[0, 1, 2], 3, &mut rng)?;
    let x = rng.gaussian(&[1, 3, 4, 4])?;
    let err = grad_check_layer(&me, move |m| m.apply(&x)?.square()?.sum_all())?;
    report.item(
        "metadata-embedding",
        err <= tol,
        format!("max relative error {err:.3e}"),
    );

    // Full networks at reduced size.
    let cfg = reduced_cfg();
    let model = EmulatorModel::new(&cfg, &mut rng)?;
    let xp = rng.gaussian(&[1, cfg.prog_channels, cfg.n_lat, cfg.n_lon])?;
    let st = rng.gaussian(&[cfg.static_channels, cfg.n_lat, cfg.n_lon])?;
    let fo = rng.gaussian(&[1, 3, cfg.n_lat, cfg.n_lon])?;
    let z = rng.gaussian(&[1, cfg.latent_channels, cfg.latent_n_lat, cfg.latent_n_lon])?;
    let y = rng.gaussian(z.shape())?;

    let (m2, xp2, st2, fo2) = (model.clone(), xp.clone(), st.clone(), fo.clone());
    let err = {
        let named = collect_params(&model.encoder);
        let tensors: Vec<Tensor> = named.iter().map(|(_, t)| t.detach()).collect();
        check_gradient(
            move |ps| {
                let mut m = m2.clone();
                let mut i = 0;
                m.encoder.visit_params_mut("", &mut |_, t| {
                    *t = ps[i].clone();
                    i += 1;
                });
                let cp = m.conditioning(&fo2, &[4])?;
                let full = m.encoder_input(&xp2, &st2, &fo2)?;
                let (mu, lv) = m.encode(&full, &cp)?;
                mu.sum_all()?.add(&lv.square()?.sum_all()?)
            },
            &tensors,
            1e-5,
        )?
    };
    report.item("encoder", err <= tol, format!("max relative error {err:.3e}"));

    let (m2, fo2, z2) = (model.clone(), fo.clone(), z.clone());
    let err = {
        let named = collect_params(&model.decoder);
        let tensors: Vec<Tensor> = named.iter().map(|(_, t)| t.detach()).collect();
        check_gradient(
            move |ps| {
                let mut m = m2.clone();
                let mut i = 0;
                m.decoder.visit_params_mut("", &mut |_, t| {
                    *t = ps[i].clone();
                    i += 1;
                });
                let cp = m.conditioning(&fo2, &[4])?;
                m.decode(&z2, &cp, None)?.square()?.sum_all()
            },
            &tensors,
            1e-5,
        )?
    };
    report.item("decoder", err <= tol, format!("max relative error {err:.3e}"));

    let err = {
        use climem_core::diffusion::VPredict;
        let named = collect_params(&model.predictor);
        let tensors: Vec<Tensor> = named.iter().map(|(_, t)| t.detach()).collect();
        check_gradient(
            move |ps| {
                let mut m = model.clone();
                let mut i = 0;
                m.predictor.visit_params_mut("", &mut |_, t| {
                    *t = ps[i].clone();
                    i += 1;
                });
                let cp = m.conditioning(&fo, &[4])?;
                m.predictor
                    .predict_v(&z, &y, &cp.latent, &[0.4])?
                    .square()?
                    .sum_all()
            },
            &tensors,
            1e-5,
        )?
    };
    report.item("predictor", err <= tol, format!("max relative error {err:.3e}"));

    report.finish()
}

fn sht() -> Result<()> {
    let mut report = Report::new();
    let grid = GridSpec::equiangular(36, 72)?;
    let plan = ShtPlan::new(&grid, 17)?;
    let mut rng = RngStream::new(17, 0);

    // Random band-limited field roundtrip.
    let (l1, m1) = (18, plan.m_max() + 1);
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
        Tensor::from_vec(re, &[1, 1, l1, m1])?,
        Tensor::from_vec(im, &[1, 1, l1, m1])?,
    )?;
    let field = plan.inverse(&coeffs)?;
    let back = plan.forward(&field)?;
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
    let rel = (num / den).sqrt();
    report.item(
        "roundtrip l_max=17 on 36x72",
        rel <= 1e-6,
        format!("relative L2 error {rel:.3e}"),
    );

    // Parseval.
    let grid_energy = grid.quadrature_energy(&field.reshape(&[36, 72])?)?;
    let coeff_energy = coeffs.energy();
    let rel = (grid_energy - coeff_energy).abs() / coeff_energy;
    report.item("parseval", rel <= 1e-8, format!("relative error {rel:.3e}"));

    // Constant-field normalization.
    let c = plan.forward(&Tensor::full(&[1, 1, 36, 72], 1.0))?;
    let expected = (4.0 * std::f64::consts::PI).sqrt();
    let err = (c.re.get(&[0, 0, 0, 0]) - expected).abs();
    report.item(
        "constant-field coefficient",
        err <= 1e-12,
        format!("|a00 - sqrt(4pi)| = {err:.3e}"),
    );

    report.finish()
}

fn schedule() -> Result<()> {
    let mut report = Report::new();
    let s = build_cosine_schedule(15, 0.008)?;
    report.item(
        "beta_tilde(1) = 0",
        s.beta_tilde(1) == 0.0,
        format!("{}", s.beta_tilde(1)),
    );
    let mut monotone = true;
    for k in 1..=15 {
        monotone &= s.alpha_bar(k) < s.alpha_bar(k - 1) && s.alpha_bar(k) > 0.0;
    }
    report.item("alpha_bar strictly decreasing in (0, 1]", monotone, String::new());
    let g = |k: f64| {
        (((k / 15.0 + 0.008) / 1.008) * std::f64::consts::FRAC_PI_2)
            .cos()
            .powi(2)
    };
    let mut worst = 0.0f64;
    let mut bar_prev = 1.0;
    let mut prod = 1.0;
    for k in 1..=15 {
        let bar = g(k as f64) / g(0.0);
        let beta = (1.0 - bar / bar_prev).min(0.999);
        prod *= 1.0 - beta;
        worst = worst
            .max((s.beta(k) - beta).abs())
            .max((s.alpha_bar(k) - prod).abs());
        bar_prev = bar;
    }
    report.item(
        "closed-form table agreement",
        worst <= 1e-12,
        format!("max abs deviation {worst:.3e}"),
    );
    report.finish()
}
