use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use steermetro::bounds::{van_trees_matrix, van_trees_phase_bound, violation_threshold, ThresholdMode};
use steermetro::estimation::{reconstruct_generator, Estimator};
use steermetro::experiment::{Pipeline, PipelineConfig};
use steermetro::information::{born_phase_joint, conditional_fisher_matrix, fisher_matrix_fd, FD_STEP};
use steermetro::priors::{JointPrior, PhasePrior, VisibilityPrior};
use steermetro::simulator::{simulate, ExperimentConfig, SettingSchedule};
use steermetro::steering_test::point_test;

fn prior(v0: f64) -> JointPrior {
    JointPrior::new(PhasePrior::new(FRAC_PI_4, PI / 16.0).unwrap(), VisibilityPrior::new(v0).unwrap())
}

#[test]
fn thresholds_match_closed_forms() {
    let single = violation_threshold(ThresholdMode::Single).unwrap();
    let multi = violation_threshold(ThresholdMode::Multi).unwrap();
    assert!((single - 1.0 / SQRT_2).abs() < 1e-10);
    assert!((multi - (2.0 - SQRT_2).sqrt()).abs() < 1e-10);
}

#[test]
fn analytic_fisher_matrix_matches_finite_differences() {
    let model = |phi: f64, v: f64| born_phase_joint(phi, v).unwrap();
    for &(phi, v) in &[(0.3, 0.6), (FRAC_PI_4, 0.97), (1.2, 0.85)] {
        let a = conditional_fisher_matrix(phi, v).unwrap();
        let fd = fisher_matrix_fd(model, phi, v, FD_STEP).unwrap();
        for (x, y) in [(a.phi_phi, fd.phi_phi), (a.phi_v, fd.phi_v), (a.v_v, fd.v_v)] {
            assert!((x - y).abs() < 1e-6, "({phi}, {v}): {x} vs {y}");
        }
    }
}

#[test]
fn public_pipeline_end_to_end() {
    let p = prior(0.97);
    let record = simulate(&ExperimentConfig {
        visibility: 0.97,
        phase: FRAC_PI_4,
        n_z: 2000,
        n_y: 495,
        seed: 99,
        schedule: SettingSchedule::Stochastic,
    })
    .unwrap();
    let estimate = Estimator::new(&p).unwrap().conditional(&record.phase).unwrap();
    assert!((estimate.phi - FRAC_PI_4).abs() < 6.0 * estimate.var_phi.sqrt());

    let bound = van_trees_phase_bound(&van_trees_matrix(&p, 2000).unwrap(), 2000).unwrap();
    assert!(estimate.var_phi > 0.5 * bound && estimate.var_phi < 2.0 * bound);

    let generator = reconstruct_generator(&record.generator).unwrap();
    assert!((generator.delta2_y_cond - (1.0 - 0.97f64.powi(2))).abs() < 0.05);
    let (xi2, certified) = point_test(2000, estimate.var_phi, generator.delta2_y_cond, &p, 0.005).unwrap();
    assert!(xi2 < 1.0 && certified);

    let mut cfg = PipelineConfig::new(0.97, FRAC_PI_4, p, 495);
    cfg.bootstrap_trials = 10;
    let run = Pipeline::new(cfg).unwrap().run(2000, 99).unwrap();
    assert_eq!(run.counts, record);
    assert_eq!(run.estimate, estimate);
    assert!(run.test.unwrap().certified(0.005));
}

#[test]
fn below_threshold_state_is_not_certified_by_point_test() {
    let p = prior(0.6);
    let record = simulate(&ExperimentConfig {
        visibility: 0.6,
        phase: FRAC_PI_4,
        n_z: 3000,
        n_y: 495,
        seed: 5,
        schedule: SettingSchedule::Stochastic,
    })
    .unwrap();
    let estimate = Estimator::new(&p).unwrap().conditional(&record.phase).unwrap();
    let generator = reconstruct_generator(&record.generator).unwrap();
    let (xi2, _) = point_test(3000, estimate.var_phi, generator.delta2_y_cond, &p, 0.05).unwrap();
    assert!(xi2 > 1.0, "ξ² = {xi2}");
}
