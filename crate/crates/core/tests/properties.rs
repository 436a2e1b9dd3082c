use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sloc_core::bridge::{gibbs_reference, objective_pair, sinkhorn, DiscreteMeasure, SinkhornConfig};
use sloc_core::polchinski::{lsi_schedule, stability_factor};
use sloc_core::rgd::{chain_law_propagate, kl_contraction_bound};
use sloc_core::targets::{tilt, GaussianMeasure, GaussianMixture, MomentBudget, Reg, TargetMeasure};

fn weights(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|w| w / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stability_factor_is_a_decreasing_fraction(alpha in 0.01f64..100.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f_lo = stability_factor(alpha, lo).unwrap();
        let f_hi = stability_factor(alpha, hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&f_hi));
        prop_assert!(f_hi <= f_lo + 1e-15);
    }

    #[test]
    fn schedule_gamma_ends_at_alpha(alpha in 0.01f64..100.0) {
        let s = lsi_schedule(alpha).unwrap();
        prop_assert!((s.gamma(1.0) - alpha).abs() <= 1e-12 * alpha);
        prop_assert!(s.big_lambda(1.0).abs() <= 1e-15);
    }

    #[test]
    fn sinkhorn_marginals_match(
        mu in prop::collection::vec(0.05f64..1.0, 2..6),
        pi in prop::collection::vec(0.05f64..1.0, 2..6),
        shift in -2.0f64..2.0,
    ) {
        let xs: Vec<f64> = (0..mu.len()).map(|i| i as f64 * 0.7).collect();
        let ys: Vec<f64> = (0..pi.len()).map(|j| j as f64 * 0.5 + shift).collect();
        let m = DiscreteMeasure::on_line(&xs, weights(&mu)).unwrap();
        let p = DiscreteMeasure::on_line(&ys, weights(&pi)).unwrap();
        let r = gibbs_reference(&m, &p).unwrap();
        let res = sinkhorn(&m, &p, &r, &SinkhornConfig::default()).unwrap();
        prop_assert!(res.converged);
        prop_assert!(res.coupling.marginal_residual() <= 1e-9);
        let o = objective_pair(&res.coupling.matrix(), &m, &p, &r).unwrap();
        prop_assert!(o.ssb >= -1e-12);
    }

    #[test]
    fn gaussian_chain_law_contracts(a in -5.0f64..5.0, s2 in 0.1f64..10.0, var in 0.2f64..5.0, eta in 0.05f64..3.0) {
        let target = GaussianMeasure::scalar(0.0, var).unwrap();
        let laws = chain_law_propagate(&GaussianMeasure::scalar(a, s2).unwrap(), &target, eta, 3).unwrap();
        let bound = kl_contraction_bound(1.0 / var, eta);
        for w in laws.windows(2) {
            if w[0].kl > 1e-12 {
                prop_assert!(w[1].kl / w[0].kl <= bound + 1e-9);
            }
        }
    }

    #[test]
    fn mixture_tilt_mean_stays_in_the_hull(c in -20.0f64..20.0, t in 0.0f64..50.0, sep in 0.1f64..3.0) {
        let base: TargetMeasure = GaussianMixture::symmetric_pair(DVector::from_element(1, sep), 0.3).unwrap().into();
        let m = tilt(&base, DVector::from_element(1, c), Reg::Scalar(t)).unwrap().mean(&MomentBudget::default()).unwrap();
        // component posterior means lie between ±sep and c/t
        let reach = sep.max((c / t.max(1e-12)).abs()) + 1e-9;
        prop_assert!(m[0].abs() <= reach);
    }

    #[test]
    fn matrix_identity_reg_equals_scalar_reg(c in -5.0f64..5.0, t in 0.0f64..10.0) {
        let base: TargetMeasure = GaussianMeasure::new(DVector::from_vec(vec![0.3, -0.2]), DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5])).unwrap().into();
        let cv = DVector::from_element(2, c);
        let b = MomentBudget::default();
        let a = tilt(&base, cv.clone(), Reg::Scalar(t)).unwrap().mean(&b).unwrap();
        let m = tilt(&base, cv, Reg::Matrix(DMatrix::identity(2, 2) * t)).unwrap().mean(&b).unwrap();
        prop_assert_eq!(a, m);
    }
}
