use speckle_pgd::checks::{central_differences, random_instance, relative_l2};
use speckle_pgd::likelihood::{grad_nll_real, nll_real};
use speckle_pgd::measurement::Ensemble;
use speckle_pgd::rng::RngSpec;
use speckle_pgd::theory::{lemma_checks, sweep_mse, sweep_trial, LipschitzGenerator, SweepConfig};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn generator_is_one_lipschitz() {
    let g = LipschitzGenerator::new(64, 8).unwrap();
    for i in 0..100 {
        let t1 = g.sample_theta(RngSpec::new(i, 1));
        let t2 = g.sample_theta(RngSpec::new(i, 2));
        assert!(dist(&g.eval(&t1), &g.eval(&t2)) <= dist(&t1, &t2) * (1.0 + 1e-12));
        assert!(g.eval(&t1).iter().all(|v| (g.x_min..=g.x_max).contains(v)));
    }
}

#[test]
fn pullback_is_chain_rule() {
    let g = LipschitzGenerator::new(16, 4).unwrap();
    let (_, a, looks) = random_instance(16, 8, 4, Ensemble::GaussianReal, 0.0, RngSpec::new(3, 3)).unwrap();
    let theta = g.sample_theta(RngSpec::new(3, 4));
    let analytic = g.pullback(&grad_nll_real(&g.eval(&theta), &looks, &a).unwrap());
    let fd = central_differences(&theta, 1e-5, |t| nll_real(&g.eval(t), &looks, &a)).unwrap();
    assert!(relative_l2(&analytic, &fd) < 1e-6);
}

#[test]
fn more_looks_lower_error_on_paired_trials() {
    let mut cfg = SweepConfig::looks_sweep(16, 8, 2, vec![4, 256]);
    cfg.mle.restarts = 3;
    let mut few = 0.0;
    let mut many = 0.0;
    for trial in 0..8 {
        few += sweep_trial(16, 8, 2, 4, trial, &cfg).unwrap();
        many += sweep_trial(16, 8, 2, 256, trial, &cfg).unwrap();
    }
    assert!(many < few, "L=256 {many} vs L=4 {few}");
}

#[test]
fn sweep_is_deterministic() {
    let mut cfg = SweepConfig::looks_sweep(16, 8, 2, vec![1, 8]);
    cfg.trials = 3;
    cfg.seed = 11;
    assert_eq!(sweep_mse(&cfg).unwrap(), sweep_mse(&cfg).unwrap());
}

#[test]
fn small_lemma_suite_passes() {
    let report = lemma_checks(20, 10, RngSpec::new(5, 5)).unwrap();
    assert!(report.ok(), "{report:?}");
    assert_eq!(report.eigen_bound.passed, 20);
}
