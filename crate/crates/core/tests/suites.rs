use nalgebra::{DMatrix, DVector};
use sloc_core::suites::{self, Check, SuiteConfig};
use sloc_core::targets::{BuiltinPotential, GaussianMeasure, GaussianMixture, GenericPotential, TargetMeasure};

fn small() -> SuiteConfig {
    SuiteConfig { paths: 4000, particles: 500, particle_runs: 300, dt: 2e-3, ..SuiteConfig::default() }
}

fn assert_all(checks: &[Check]) {
    for c in checks {
        assert!(c.pass, "{}", c.line());
    }
}

fn mixture_2d() -> TargetMeasure {
    GaussianMixture::new(vec![
        (0.3, GaussianMeasure::new(DVector::from_vec(vec![-1.0, 0.5]), DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4])).unwrap()),
        (0.7, GaussianMeasure::isotropic(DVector::from_vec(vec![1.5, 0.0]), 0.3).unwrap()),
    ])
    .unwrap()
    .into()
}

#[test]
fn channel_agrees_for_mixtures_in_one_and_two_dimensions() {
    let one: TargetMeasure = GaussianMixture::symmetric_pair(DVector::from_element(1, 2.0), 0.4).unwrap().into();
    assert_all(&suites::channel_suite(&one, &small()).unwrap());
    assert_all(&suites::channel_suite(&mixture_2d(), &small()).unwrap());
}

#[test]
fn particles_track_a_mixture() {
    assert_all(&suites::particle_suite(&mixture_2d(), &small()).unwrap());
}

#[test]
fn backward_diffusion_for_shifted_gaussian() {
    let base: TargetMeasure = GaussianMeasure::scalar(1.5, 1.0).unwrap().into();
    assert_all(&suites::diffusion_suite(&base, &small()).unwrap());
}

#[test]
fn follmer_sampler_reaches_the_target() {
    let cfg = small();
    assert_all(&suites::follmer_suite(&GaussianMeasure::scalar(2.0, 1.0).unwrap().into(), &cfg).unwrap());
    let mix: TargetMeasure = GaussianMixture::symmetric_pair(DVector::from_element(1, 1.5), 0.5).unwrap().into();
    assert_all(&suites::follmer_suite(&mix, &cfg).unwrap());
}

#[test]
fn entropy_is_stable_along_the_flow() {
    assert_all(&suites::entropy_stability_suite(&small()).unwrap());
}

#[test]
fn kernel_identity_on_a_potential_target() {
    let p: TargetMeasure = GenericPotential::builtin(BuiltinPotential::Quartic { dim: 1, coef: 0.2 }).into();
    assert_all(&suites::kernel_identity_suite(&[p], &small()).unwrap());
}

#[test]
fn reports_are_reproducible() {
    let cfg = SuiteConfig { paths: 500, ..small() };
    let base: TargetMeasure = GaussianMeasure::standard(1).unwrap().into();
    let a = suites::channel_suite(&base, &cfg).unwrap();
    let b = suites::channel_suite(&base, &cfg).unwrap();
    assert_eq!(a, b);
    let c = suites::channel_suite(&base, &SuiteConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a[0].observed, c[0].observed);
}
