use proptest::prelude::*;

use spectral_oplearn::config::ExperimentConfig;
use spectral_oplearn::estimators::{analytic_bias, empirical_covariances, LambdaMap};
use spectral_oplearn::harness::{
    fit_rate, run_convergence, trial_seed, Experiment, ExperimentPlan,
};
use spectral_oplearn::spectral::bg_norm;
use spectral_oplearn::synth::make_dataset;
use spectral_oplearn::EstimatorKind;

fn small_config(sigma: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::template();
    cfg.problem.d_in = 32;
    cfg.problem.d_out = 64;
    cfg.problem.sigma = sigma;
    cfg.noise.sigma = sigma;
    cfg
}

#[test]
fn noiseless_multilevel_error_is_its_bias() {
    let ex = Experiment::new(small_config(0.0)).unwrap();
    let n = 1 << 14;
    let err = ex
        .run_trial(n, 0, EstimatorKind::Multilevel)
        .unwrap()
        .error_sq;
    let lmap = ex.lambda_map(EstimatorKind::Multilevel, n).unwrap();
    let a0 = ex.a0();
    let src = ex.truth.source.as_ref().unwrap();
    let bias = analytic_bias(src, &lmap, a0.input_decay(), a0.output_decay(), ex.cfg()).unwrap();
    assert!(err <= bias * bias + 1e-6, "{err} vs {}", bias * bias);
}

#[test]
fn trials_are_reproducible_and_distinct() {
    let ex = Experiment::new(small_config(0.1)).unwrap();
    let a = ex
        .run_trial(512, 3, EstimatorKind::Variance)
        .unwrap()
        .error_sq;
    let b = ex
        .run_trial(512, 3, EstimatorKind::Variance)
        .unwrap()
        .error_sq;
    assert_eq!(a.to_bits(), b.to_bits());
    let c = ex
        .run_trial(512, 4, EstimatorKind::Variance)
        .unwrap()
        .error_sq;
    assert_ne!(a, c);
}

#[test]
fn huge_lambda_gives_the_truth_norm() {
    let ex = Experiment::new(small_config(0.1)).unwrap();
    let err = ex
        .run_trial_with_map(256, 0, &LambdaMap::uniform(64, 1e15).unwrap())
        .unwrap();
    let cfg = ex.cfg();
    let truth = bg_norm(ex.a0(), cfg.beta_prime, cfg.gamma_prime).powi(2);
    assert!((err - truth).abs() <= 1e-6 * truth, "{err} vs {truth}");

    let huge_rule = ex.clone().with_single_exponent(-10.0).unwrap();
    let err = huge_rule
        .run_trial(256, 0, EstimatorKind::Single)
        .unwrap()
        .error_sq;
    assert!((err - truth).abs() <= 1e-6 * truth);
}

#[test]
fn shared_cell_matches_individual_trials() {
    let ex = Experiment::new(small_config(0.1)).unwrap();
    let cell = ex.run_cell(1024, 2, &EstimatorKind::ALL).unwrap();
    for o in cell {
        let alone = ex.run_trial(1024, 2, o.estimator).unwrap();
        assert_eq!(o.error_sq.to_bits(), alone.error_sq.to_bits());
    }
}

#[test]
fn streamed_moments_match_materialized_dataset() {
    let ex = Experiment::new(small_config(0.1)).unwrap();
    let (n, trial) = (3000, 1);
    let streamed = ex.covariances(n, trial).unwrap();
    let seed = trial_seed(ex.cfg().seed, n, trial);
    let data = make_dataset(ex.a0(), n, &ex.config.noise, seed).unwrap();
    let direct = empirical_covariances(&data).unwrap();
    assert!((&streamed.c_kk - &direct.c_kk).norm() <= 1e-12 * direct.c_kk.norm());
    assert!((&streamed.c_lk - &direct.c_lk).norm() <= 1e-12 * direct.c_lk.norm());
}

#[test]
fn report_shape_and_worker_independence() {
    let mut plan = ExperimentPlan::new(small_config(0.1), vec![256, 512, 1024, 2048], 5);
    let one = run_convergence(&plan).unwrap();
    plan.workers = 3;
    let three = run_convergence(&plan).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.summaries.len(), 4 * 4);
    assert_eq!(one.runs.len(), 4 * 4 * 5);
    assert_eq!(one.fits.len(), 4);
    assert!((one.theoretical_slope + 0.5).abs() < 1e-12);
    for s in &one.summaries {
        assert!(s.median_error_sq > 0.0);
        assert!(s.iqr_low <= s.median_error_sq && s.median_error_sq <= s.iqr_high);
    }
    assert!(one.runs.iter().all(|r| r.elapsed_ms.is_none()));
    for f in &one.fits {
        assert!(f.fit.slope.is_finite());
        assert!((0.0..=1.0).contains(&f.fit.r_squared));
    }
    plan.record_timings = true;
    let timed = run_convergence(&plan).unwrap();
    assert!(timed.runs.iter().all(|r| r.elapsed_ms.is_some()));
}

#[test]
fn medians_decrease_with_n() {
    let plan = ExperimentPlan::new(small_config(0.1), vec![256, 512, 1024, 2048, 4096], 7);
    let report = run_convergence(&plan).unwrap();
    for e in EstimatorKind::ALL {
        let medians: Vec<f64> = plan
            .n_list
            .iter()
            .map(|&n| report.summary(e, n).unwrap().median_error_sq)
            .collect();
        let violations = medians.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(violations <= 1, "{e}: {medians:?}");
    }
}

#[test]
fn sweep_needs_three_sizes() {
    let plan = ExperimentPlan::new(small_config(0.1), vec![256, 512], 2);
    assert!(run_convergence(&plan).is_err());
}

proptest! {
    #[test]
    fn fit_recovers_exact_power_laws(slope in -2.0f64..1.0, c in 0.01f64..100.0, k0 in 2u32..8) {
        let pts: Vec<(f64, f64)> = (k0..k0 + 5)
            .map(|k| { let n = 2f64.powi(k as i32); (n, c * n.powf(slope)) })
            .collect();
        let f = fit_rate(&pts).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn r_squared_is_a_fraction(errs in proptest::collection::vec(1e-6f64..1.0, 3..10)) {
        let pts: Vec<(f64, f64)> = errs.iter().enumerate().map(|(i, &e)| ((i + 2) as f64, e)).collect();
        let f = fit_rate(&pts).unwrap();
        prop_assert!((0.0..=1.0).contains(&f.r_squared));
        prop_assert!(f.slope.is_finite());
    }
}
