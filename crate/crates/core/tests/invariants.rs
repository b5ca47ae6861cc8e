//! Property tests over the crate's core numerical contracts.

use proptest::prelude::*;

use climem_core::diffusion::{build_cosine_schedule, noise_and_target};
use climem_core::data::{
    forward_transform, inverse_transform, transform_value, untransform_value, VarKind,
    VariableSpec,
};
use climem_core::rng::RngStream;
use climem_core::sht::{spectral_resample, GridSpec, ShtPlan, SpectralField};
use climem_core::tensor::Tensor;

fn gaussian(seed: u64, shape: &[usize]) -> Tensor {
    RngStream::new(seed, 0).gaussian(shape).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn contraction_is_bilinear(seed in 0u64..5000, m in 1usize..5, k in 1usize..5, n in 1usize..5) {
        let a1 = gaussian(seed, &[m, k]);
        let a2 = gaussian(seed + 1, &[m, k]);
        let b = gaussian(seed + 2, &[k, n]);
        let lhs = a1.add(&a2).unwrap().contract(&b, &[(1, 0)]).unwrap();
        let rhs = a1.contract(&b, &[(1, 0)]).unwrap()
            .add(&a2.contract(&b, &[(1, 0)]).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        // Scaling one operand scales the output.
        let s = a1.scale(3.0).unwrap().contract(&b, &[(1, 0)]).unwrap();
        let s2 = a1.contract(&b, &[(1, 0)]).unwrap().scale(3.0).unwrap();
        prop_assert!(s.max_abs_diff(&s2) < 1e-12);
    }

    #[test]
    fn rng_streams_replay_bit_exactly(seed in any::<u64>(), stream in any::<u64>(), n in 1usize..200) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..n {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        prop_assert_eq!(a.counter(), n as u64);
    }

    #[test]
    fn schedule_monotone_for_any_setting(steps in 1usize..64, offset in 1e-4f64..0.5) {
        let s = build_cosine_schedule(steps, offset).unwrap();
        prop_assert_eq!(s.beta_tilde(1), 0.0);
        for k in 1..=steps {
            prop_assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
            prop_assert!(s.alpha_bar(k) > 0.0 && s.alpha_bar(k) <= 1.0);
            prop_assert!(s.beta(k) > 0.0 && s.beta(k) <= 0.999);
            prop_assert!(s.beta_tilde(k) >= 0.0);
        }
    }

    #[test]
    fn v_to_epsilon_identity(seed in 0u64..5000, steps in 1usize..40) {
        let sched = build_cosine_schedule(steps, 0.008).unwrap();
        let y0 = gaussian(seed, &[2, 3, 2]);
        let eps = gaussian(seed + 9, &[2, 3, 2]);
        for k in 1..=steps {
            let (y_k, v) = noise_and_target(&y0, k, &eps, &sched).unwrap();
            let ab = sched.alpha_bar(k);
            let back = v.scale(ab.sqrt()).unwrap()
                .add(&y_k.scale((1.0 - ab).sqrt()).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&eps) <= 1e-12);
        }
    }

    #[test]
    fn transform_roundtrip_identity(
        raw_u in prop::collection::vec(-50.0f64..50.0, 8),
        raw_n in prop::collection::vec(1e-6f64..100.0, 8),
        raw_b in prop::collection::vec(1e-5f64..0.99999, 8),
        mean in -3.0f64..3.0,
        std in 0.1f64..5.0,
    ) {
        let specs = vec![
            VariableSpec { name: "u".into(), kind: VarKind::Unbounded, mean, std },
            VariableSpec { name: "n".into(), kind: VarKind::NonNegative, mean, std },
            VariableSpec { name: "b".into(), kind: VarKind::Bounded01, mean, std },
        ];
        let mut data = Vec::new();
        for i in 0..8 {
            data.push(raw_u[i]);
            data.push(raw_n[i]);
            data.push(raw_b[i]);
        }
        let raw = Tensor::from_vec(data, &[8, 3, 1, 1]).unwrap();
        let round = inverse_transform(&forward_transform(&raw, &specs, 1).unwrap(), &specs, 1).unwrap();
        prop_assert!(round.max_abs_diff(&raw) < 1e-9);
    }

    #[test]
    fn kind_transforms_respect_domains(v in 0.0f64..1.0) {
        let t = transform_value(VarKind::Bounded01, v).unwrap();
        prop_assert!(t.is_finite());
        let back = untransform_value(VarKind::Bounded01, t);
        prop_assert!((0.0..=1.0).contains(&back));
        prop_assert!(transform_value(VarKind::NonNegative, -1.0 - v).is_err());
    }

    #[test]
    fn resample_containment(seed in 0u64..2000, keep in 2usize..7) {
        // Truncating to a superset band and back is the identity.
        let grid = GridSpec::equiangular(16, 32).unwrap();
        let plan = ShtPlan::new(&grid, keep).unwrap();
        let (l1, m1) = (plan.l_max() + 1, plan.m_max() + 1);
        let mut rng = RngStream::new(seed, 3);
        let mut re = vec![0.0; l1 * m1];
        for l in 0..l1 {
            for m in 0..m1.min(l + 1) {
                re[l * m1 + m] = rng.normal();
            }
        }
        let c = SpectralField::new(
            Tensor::from_vec(re, &[1, 1, l1, m1]).unwrap(),
            Tensor::zeros(&[1, 1, l1, m1]),
        ).unwrap();
        let up = spectral_resample(&c, 12, 12).unwrap();
        let back = spectral_resample(&up, c.l_max(), c.m_max()).unwrap();
        prop_assert!(back.re.max_abs_diff(&c.re) < 1e-12);
    }

    #[test]
    fn sht_linearity(seed in 0u64..2000, a in -3.0f64..3.0) {
        let grid = GridSpec::equiangular(10, 20).unwrap();
        let plan = ShtPlan::new(&grid, 5).unwrap();
        let f = gaussian(seed, &[1, 1, 10, 20]);
        let g = gaussian(seed + 7, &[1, 1, 10, 20]);
        let lhs = plan.forward(&f.scale(a).unwrap().add(&g).unwrap()).unwrap();
        let rf = plan.forward(&f).unwrap();
        let rg = plan.forward(&g).unwrap();
        let rhs_re = rf.re.scale(a).unwrap().add(&rg.re).unwrap();
        let rhs_im = rf.im.scale(a).unwrap().add(&rg.im).unwrap();
        prop_assert!(lhs.re.max_abs_diff(&rhs_re) < 1e-12);
        prop_assert!(lhs.im.max_abs_diff(&rhs_im) < 1e-12);
        // m = 0 coefficients of a real field have no imaginary part.
        for l in 0..=5usize {
            prop_assert!(rf.im.get(&[0, 0, l, 0]).abs() < 1e-12);
        }
    }
}
