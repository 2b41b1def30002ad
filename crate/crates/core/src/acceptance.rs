//! The acceptance suite: analytic anchors, prior machinery, bounds, and the
//! statistical checks on simulated ensembles. Criterion AC-10 (byte-identical
//! reruns) needs two full invocations and is checked by the command-line
//! frontend.
//!
//! Every criterion records what it measured. Wall-clock times are kept apart
//! from the measurements so the measured part is reproducible byte for byte.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{van_trees_phase_bound, violation_threshold, ThresholdMode, VanTreesTerms};
use crate::error::{domain, Result};
use crate::experiment::{Pipeline, PipelineConfig};
use crate::information::{
    born_phase_joint, born_single_parameter_joint, conditional_fisher, conditional_fisher_matrix, fisher_matrix_fd,
    fisher_scalar, FD_STEP,
};
use crate::priors::{phase_score_integral, Axis, JointPrior, PhasePrior, VisibilityPrior};
use crate::qubit_model::{assemblage_for, model_conditional_y_variance, partially_coherent_singlet, PauliAxis};
use crate::rng::{substream_seed, Stream};
use crate::steering_test::{null_rejection_rate, CONFIDENCE_LEVELS};

/// Pinned targets and tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Targets {
    pub fd_tolerance: f64,
    pub f_zero_097: f64,
    pub inverse_fim_097: f64,
    pub anchor_tolerance: f64,
    pub score_tolerance: f64,
    pub normalization_tolerance: f64,
    pub mean_tolerance: f64,
    pub single_threshold: f64,
    pub multi_threshold: f64,
    pub threshold_tolerance: f64,
    pub crb_tolerance: f64,
    pub bound_slack_se: f64,
    pub bound_ratio_max: f64,
    pub detection_rate_min: f64,
    pub false_certification_max: f64,
    pub calibration_se: f64,
}

// Pinned decimal targets, not approximations of library constants.
#[allow(clippy::approx_constant)]
impl Default for Targets {
    fn default() -> Self {
        Self {
            fd_tolerance: 1e-6,
            f_zero_097: 0.9409,
            inverse_fim_097: 1.125624,
            anchor_tolerance: 1e-6,
            score_tolerance: 1e-4,
            normalization_tolerance: 1e-6,
            mean_tolerance: 1e-8,
            single_threshold: 0.7071068,
            multi_threshold: 0.7653669,
            threshold_tolerance: 1e-6,
            crb_tolerance: 0.01,
            bound_slack_se: 2.0,
            bound_ratio_max: 3.0,
            detection_rate_min: 0.70,
            false_certification_max: 0.08,
            calibration_se: 3.0,
        }
    }
}

/// One measured quantity of a criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub ok: bool,
}

impl Metric {
    fn new(name: impl Into<String>, value: f64, target: impl Into<String>, ok: bool) -> Self {
        Self { name: name.into(), value, target: target.into(), ok }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub metrics: Vec<Metric>,
}

impl Criterion {
    fn from_metrics(id: &str, title: &str, metrics: Vec<Metric>) -> Self {
        Self { id: id.into(), title: title.into(), passed: metrics.iter().all(|m| m.ok), metrics }
    }

    /// Metrics that missed their target.
    pub fn failures(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| !m.ok)
    }
}

/// Wall-clock time of one criterion against its budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub id: String,
    pub seconds: f64,
    pub budget_seconds: Option<f64>,
}

impl Timing {
    pub fn within_budget(&self) -> bool {
        self.budget_seconds.is_none_or(|b| self.seconds < b)
    }
}

/// Outcome of AC-1 … AC-9.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub seed: u64,
    pub criteria: Vec<Criterion>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl SuiteResult {
    pub fn criterion(&self, id: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.id == id)
    }

    pub fn timing(&self, id: &str) -> Option<&Timing> {
        self.timings.iter().find(|t| t.id == id)
    }

    /// Measured checks and runtime budget both satisfied.
    pub fn passed(&self, id: &str) -> bool {
        self.criterion(id).is_some_and(|c| c.passed) && self.timing(id).is_none_or(Timing::within_budget)
    }
}

fn prior(sigma: f64, v0: f64) -> Result<JointPrior> {
    Ok(JointPrior::new(PhasePrior::new(FRAC_PI_4, sigma)?, VisibilityPrior::new(v0)?))
}

/// AC-1: closed-form conditional FI and FIM against finite differences of the
/// Born-rule probabilities.
pub fn fisher_oracle(t: &Targets) -> Result<Criterion> {
    let phis = [0.0, FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_2 - 0.01];
    let (mut scalar_err, mut matrix_err) = (0.0f64, 0.0f64);
    for &phi in &phis {
        for &v in &[0.5, 0.8, 0.97] {
            let born_f = fisher_scalar(
                |x| born_single_parameter_joint(x, v).expect("valid visibility"),
                phi,
                FD_STEP,
            )?;
            scalar_err = scalar_err.max((conditional_fisher(phi, v)? - born_f).abs());
            let fd = fisher_matrix_fd(|x, y| born_phase_joint(x, y).expect("valid visibility"), phi, v, FD_STEP)?;
            let exact = conditional_fisher_matrix(phi, v)?;
            for d in [fd.phi_phi - exact.phi_phi, fd.phi_v - exact.phi_v, fd.v_v - exact.v_v] {
                matrix_err = matrix_err.max(d.abs());
            }
        }
    }
    let target = format!("< {:e}", t.fd_tolerance);
    Ok(Criterion::from_metrics(
        "AC-1",
        "Fisher oracle equivalence",
        vec![
            Metric::new("max |f - f_fd|", scalar_err, &target, scalar_err < t.fd_tolerance),
            Metric::new("max |F - F_fd|", matrix_err, &target, matrix_err < t.fd_tolerance),
        ],
    ))
}

/// AC-2: closed-form anchors.
pub fn closed_form_anchors(t: &Targets) -> Result<Criterion> {
    let tol = t.anchor_tolerance;
    let f0 = conditional_fisher(0.0, 0.97)?;
    let inv = conditional_fisher_matrix(FRAC_PI_4, 0.97)?.inverse()?[(0, 0)];
    let mut off = 0.0f64;
    let mut dy = 0.0f64;
    for v in [0.5, 0.8, 0.9, 0.97, 0.99] {
        off = off.max(conditional_fisher_matrix(FRAC_PI_4, v)?.phi_v.abs());
        let state = partially_coherent_singlet(v)?;
        let from_state = assemblage_for(&state, PauliAxis::Y).conditional_variance(PauliAxis::Y);
        dy = dy.max((from_state - (1.0 - v * v)).abs().max((model_conditional_y_variance(v) - (1.0 - v * v)).abs()));
    }
    Ok(Criterion::from_metrics(
        "AC-2",
        "Closed-form anchors",
        vec![
            Metric::new("f(0, 0.97)", f0, format!("{} ± {tol:e}", t.f_zero_097), (f0 - t.f_zero_097).abs() < tol),
            Metric::new(
                "(F^-1)_phiphi(pi/4, 0.97)",
                inv,
                format!("{} ± {tol:e}", t.inverse_fim_097),
                (inv - t.inverse_fim_097).abs() < tol,
            ),
            Metric::new("max |F_phiv(pi/4, v)|", off, format!("< {tol:e}"), off < tol),
            Metric::new("max |Delta2Y_cond - (1 - v^2)|", dy, format!("< {tol:e}"), dy < tol),
        ],
    ))
}

/// AC-3: score integral, normalization and raised-cosine mean.
pub fn prior_machinery(t: &Targets) -> Result<Criterion> {
    let mut metrics = Vec::new();
    for (label, sigma) in [("pi/8", PI / 8.0), ("pi/16", PI / 16.0)] {
        let p = prior(sigma, 0.95)?;
        let rel = (phase_score_integral(&p, 1)? * sigma * sigma - 1.0).abs();
        metrics.push(Metric::new(
            format!("score integral rel. error, sigma={label}"),
            rel,
            format!("< {:e}", t.score_tolerance),
            rel < t.score_tolerance,
        ));
        let (lo, hi) = p.phase.window();
        let axis = Axis::simpson(lo, hi, p.resolution)?;
        let mass: f64 = axis.nodes.iter().zip(&axis.weights).map(|(&x, &w)| w * p.phase.density(x)).sum();
        metrics.push(Metric::new(
            format!("phase prior mass, sigma={label}"),
            mass,
            format!("1 ± {:e}", t.normalization_tolerance),
            (mass - 1.0).abs() < t.normalization_tolerance,
        ));
    }
    for v0 in [0.8, 0.95, 0.97] {
        let vp = VisibilityPrior::new(v0)?;
        let (lo, hi) = vp.support();
        let axis = Axis::simpson(lo, hi, 512)?;
        let (mut mass, mut mean) = (0.0, 0.0);
        for (&x, &w) in axis.nodes.iter().zip(&axis.weights) {
            mass += w * vp.density(x);
            mean += w * x * vp.density(x);
        }
        metrics.push(Metric::new(
            format!("visibility prior mass, v0={v0}"),
            mass,
            format!("1 ± {:e}", t.normalization_tolerance),
            (mass - 1.0).abs() < t.normalization_tolerance,
        ));
        metrics.push(Metric::new(
            format!("visibility prior mean, v0={v0}"),
            mean,
            format!("{v0} ± {:e}", t.mean_tolerance),
            (mean - v0).abs() < t.mean_tolerance,
        ));
    }
    Ok(Criterion::from_metrics("AC-3", "Prior machinery", metrics))
}

/// AC-4: violation thresholds by bisection.
pub fn thresholds(t: &Targets) -> Result<Criterion> {
    let single = violation_threshold(ThresholdMode::Single)?;
    let multi = violation_threshold(ThresholdMode::Multi)?;
    let tol = t.threshold_tolerance;
    Ok(Criterion::from_metrics(
        "AC-4",
        "Violation thresholds",
        vec![
            Metric::new(
                "single-parameter threshold",
                single,
                format!("{} ± {tol:e}", t.single_threshold),
                (single - t.single_threshold).abs() < tol,
            ),
            Metric::new(
                "multiparameter threshold",
                multi,
                format!("{} ± {tol:e}", t.multi_threshold),
                (multi - t.multi_threshold).abs() < tol,
            ),
        ],
    ))
}

/// Resource counts swept by AC-5.
pub const VT_SWEEP: [u64; 10] = [10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000];

/// AC-5: monotone Van Trees bound converging to the prior-averaged CRB.
pub fn van_trees_consistency(t: &Targets) -> Result<Criterion> {
    let terms = VanTreesTerms::compute(&prior(PI / 16.0, 0.95)?)?;
    let mut worst_increase = f64::NEG_INFINITY;
    let mut last = f64::INFINITY;
    for &n in &VT_SWEEP {
        let b = van_trees_phase_bound(&terms.at(n)?, n)?;
        worst_increase = worst_increase.max(b - last);
        last = b;
    }
    let n = 100_000;
    let vt = van_trees_phase_bound(&terms.at(n)?, n)?;
    let crb = terms.averaged_fisher.inverse()?[(0, 0)] / n as f64;
    let rel = (vt - crb).abs() / crb;
    Ok(Criterion::from_metrics(
        "AC-5",
        "Van Trees consistency",
        vec![
            Metric::new("largest step increase over N in 10..1e4", worst_increase.max(0.0), "<= 0", worst_increase <= 0.0),
            Metric::new("|VT - CRB|/CRB at N=1e5", rel, format!("< {}", t.crb_tolerance), rel < t.crb_tolerance),
        ],
    ))
}

/// `N_Z` values of the estimator-versus-bound ensembles.
pub const ENSEMBLE_SWEEP: [u64; 4] = [100, 300, 1000, 3000];

/// AC-6: ensemble mean of the conditional posterior variance against the
/// conditional Van Trees bound at `v = 0.97`, `φ = π/4`.
pub fn estimator_vs_bound(t: &Targets, seed: u64) -> Result<Criterion> {
    let pipeline = Pipeline::new(PipelineConfig::new(0.97, FRAC_PI_4, prior(PI / 16.0, 0.97)?, 0))?;
    let mut metrics = Vec::new();
    for &n_z in &ENSEMBLE_SWEEP {
        let row = pipeline.ensemble(n_z, 300, seed)?;
        let bound = row.conditional_vt_bound;
        let lower_ok = row.mean_var_phi >= bound - t.bound_slack_se * row.se;
        metrics.push(Metric::new(
            format!("N_Z={n_z}: mean Var[phi] / conditional VT bound"),
            row.mean_var_phi / bound,
            format!(">= 1 - {}·SE/bound = {:.6}", t.bound_slack_se, 1.0 - t.bound_slack_se * row.se / bound),
            lower_ok,
        ));
        metrics.push(Metric::new(
            format!("N_Z={n_z}: mean Var[phi] / prior VT bound"),
            row.mean_var_phi / row.vt_bound,
            "reported",
            true,
        ));
        metrics.push(Metric::new(
            format!("N_Z={n_z}: mean Var[phi] <= 3x bound"),
            row.mean_var_phi / bound,
            format!("<= {}", t.bound_ratio_max),
            row.mean_var_phi <= t.bound_ratio_max * bound,
        ));
        metrics.push(Metric::new(format!("N_Z={n_z}: SE / bound"), row.se / bound, "reported", true));
    }
    Ok(Criterion::from_metrics("AC-6", "Estimator versus Van Trees bound", metrics))
}

/// AC-7: certification rates at `p = 0.005` for `N_Y = 495` and `N_Y = 200`.
pub fn steering_detection(t: &Targets, seed: u64) -> Result<Criterion> {
    let rate = |n_y: u64| -> Result<(f64, f64)> {
        let mut c = PipelineConfig::new(0.97, FRAC_PI_4, prior(PI / 16.0, 0.97)?, n_y);
        c.bootstrap_trials = 50;
        let row = Pipeline::new(c)?.ensemble(3000, 200, seed)?;
        let k = CONFIDENCE_LEVELS.iter().position(|&p| p == 0.005).expect("level present");
        Ok((row.certified_rate[k], row.mean_xi2.unwrap_or(f64::NAN)))
    };
    let (r495, xi495) = rate(495)?;
    let (r200, xi200) = rate(200)?;
    Ok(Criterion::from_metrics(
        "AC-7",
        "Steering detection",
        vec![
            Metric::new(
                "certification rate at p=0.005, N_Y=495",
                r495,
                format!(">= {}", t.detection_rate_min),
                r495 >= t.detection_rate_min,
            ),
            Metric::new("certification rate at p=0.005, N_Y=200", r200, "< rate at N_Y=495", r200 < r495),
            Metric::new("mean xi2, N_Y=495", xi495, "reported", true),
            Metric::new("mean xi2, N_Y=200", xi200, "reported", true),
        ],
    ))
}

/// AC-8: false certification below the violation thresholds.
pub fn null_safety(t: &Targets, seed: u64) -> Result<Criterion> {
    let mut c = PipelineConfig::new(0.6, FRAC_PI_4, prior(PI / 16.0, 0.6)?, 495);
    c.bootstrap_trials = 50;
    let row = Pipeline::new(c)?.ensemble(3000, 200, seed)?;
    let k = CONFIDENCE_LEVELS.iter().position(|&p| p == 0.05).expect("level present");
    let rate = row.certified_rate[k];
    Ok(Criterion::from_metrics(
        "AC-8",
        "Null safety",
        vec![
            Metric::new(
                "false certification rate at p=0.05, v=0.6",
                rate,
                format!("<= {}", t.false_certification_max),
                rate <= t.false_certification_max,
            ),
            Metric::new("mean xi2", row.mean_xi2.unwrap_or(f64::NAN), "reported", true),
        ],
    ))
}

/// AC-9: rejection frequency of synthetic normalized χ² draws.
pub fn chi_squared_calibration(t: &Targets, seed: u64) -> Result<Criterion> {
    let draws = 10_000;
    let mut metrics = Vec::new();
    for p in CONFIDENCE_LEVELS {
        for dof in [9, 99, 999] {
            let rate = null_rejection_rate(p, dof, draws, seed)?;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            metrics.push(Metric::new(
                format!("rejection rate p={p} dof={dof}"),
                rate,
                format!("{p} ± {}·{se:.5}", t.calibration_se),
                (rate - p).abs() <= t.calibration_se * se,
            ));
        }
    }
    Ok(Criterion::from_metrics("AC-9", "Chi-squared self-calibration", metrics))
}

/// Runtime budgets in seconds.
pub fn budget(id: &str) -> Option<f64> {
    match id {
        "AC-1" => Some(5.0),
        "AC-4" => Some(1.0),
        "AC-6" => Some(180.0),
        "AC-7" => Some(300.0),
        _ => None,
    }
}

/// Identifiers of the criteria `run_suite` evaluates, in order.
pub const SUITE_IDS: [&str; 9] = ["AC-1", "AC-2", "AC-3", "AC-4", "AC-5", "AC-6", "AC-7", "AC-8", "AC-9"];

/// Runs AC-1 … AC-9 with seeds split from `seed`.
pub fn run_suite(seed: u64, targets: &Targets) -> Result<SuiteResult> {
    run_selected(seed, targets, &SUITE_IDS)
}

/// Runs the listed criteria in suite order. Seeds do not depend on the
/// selection, so a criterion gives the same result alone or in the full suite.
pub fn run_selected(seed: u64, targets: &Targets, ids: &[&str]) -> Result<SuiteResult> {
    if let Some(bad) = ids.iter().find(|id| !SUITE_IDS.contains(id)) {
        return Err(domain(format!("unknown acceptance criterion {bad}")));
    }
    let mut criteria = Vec::new();
    let mut timings = Vec::new();
    let sub = |k: u64| substream_seed(seed, Stream::Experiment, 1_000_000 + k);
    type Step<'a> = Box<dyn Fn() -> Result<Criterion> + 'a>;
    let steps: Vec<(&str, Step)> = vec![
        ("AC-1", Box::new(|| fisher_oracle(targets))),
        ("AC-2", Box::new(|| closed_form_anchors(targets))),
        ("AC-3", Box::new(|| prior_machinery(targets))),
        ("AC-4", Box::new(|| thresholds(targets))),
        ("AC-5", Box::new(|| van_trees_consistency(targets))),
        ("AC-6", Box::new(|| estimator_vs_bound(targets, sub(6)))),
        ("AC-7", Box::new(|| steering_detection(targets, sub(7)))),
        ("AC-8", Box::new(|| null_safety(targets, sub(8)))),
        ("AC-9", Box::new(|| chi_squared_calibration(targets, sub(9)))),
    ];
    for (id, step) in steps {
        if !ids.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let criterion = step()?;
        timings.push(Timing { id: id.into(), seconds: start.elapsed().as_secs_f64(), budget_seconds: budget(id) });
        criteria.push(criterion);
    }
    Ok(SuiteResult { seed, criteria, timings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_criteria_pass() {
        let t = Targets::default();
        for c in [fisher_oracle(&t), closed_form_anchors(&t), prior_machinery(&t), thresholds(&t), van_trees_consistency(&t)] {
            let c = c.unwrap();
            assert!(c.passed, "{}: {:?}", c.id, c.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn tampered_threshold_is_flagged() {
        let t = Targets { multi_threshold: 0.7654, ..Targets::default() };
        let c = thresholds(&t).unwrap();
        assert!(!c.passed);
        assert_eq!(c.failures().count(), 1);
    }

    #[test]
    fn selection_runs_only_listed_criteria() {
        let r = run_selected(5, &Targets::default(), &["AC-4", "AC-2"]).unwrap();
        let ids: Vec<&str> = r.criteria.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["AC-2", "AC-4"]);
        assert!(run_selected(5, &Targets::default(), &["AC-11"]).is_err());
    }

    #[test]
    fn calibration_passes() {
        assert!(chi_squared_calibration(&Targets::default(), 3).unwrap().passed);
    }
}
