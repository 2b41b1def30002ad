//! The three subcommands. Each returns its files instead of writing them, so
//! `reproduce` can compare two runs byte for byte.

use std::f64::consts::PI;

use serde::Serialize;
use steermetro::acceptance::{run_selected, Criterion, Metric, SuiteResult, Timing};
use steermetro::bounds::{
    bound_table, max_phase_information, prior_averaged_y_variance, single_parameter_vt_yfg, violation_threshold,
    BoundRow, ThresholdMode,
};
use steermetro::experiment::{EnsembleRow, ExperimentOutcome, Pipeline, PipelineConfig};
use steermetro::information::{
    conditional_fisher, conditional_fisher_matrix, correlation_coefficient, effective_phase_info, VISIBILITY_CEILING,
};
use steermetro::steering_test::CONFIDENCE_LEVELS;

use crate::config::RunConfig;
use crate::output::{csv, json, OutputFile};
use crate::CliError;

fn linspace(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(move |k| if k + 1 == points { hi } else { lo + step * k as f64 })
}

#[derive(Serialize)]
struct FisherRow {
    v: f64,
    phi: f64,
    f: f64,
}

#[derive(Serialize)]
struct VisibilityRow {
    v: f64,
    f_max_single: f64,
    f_max_multi: f64,
    delta2_y: f64,
    single_violated: bool,
    multi_violated: bool,
}

#[derive(Clone, Copy, Serialize)]
struct ThresholdRow {
    mode: ThresholdMode,
    threshold: f64,
}

#[derive(Serialize)]
struct InverseFimRow {
    v: f64,
    phi: f64,
    f_phi_phi: f64,
    f_phi_v: f64,
    f_v_v: f64,
    inv_phi_phi: f64,
    inv_phi_v: f64,
    inv_v_v: f64,
    correlation: f64,
    effective_info: f64,
}

#[derive(Clone, Copy, Serialize)]
struct SweepRow {
    v0: f64,
    sigma: f64,
    #[serde(rename = "N")]
    n: u64,
    bound: f64,
    generator_term: f64,
    score_term: f64,
    lhs: f64,
    violated: bool,
}

impl SweepRow {
    fn new(v0: f64, sigma: f64, r: &BoundRow) -> Self {
        Self {
            v0,
            sigma,
            n: r.n,
            bound: r.bound,
            generator_term: r.generator_term,
            score_term: r.score_term,
            lhs: r.lhs,
            violated: r.violated,
        }
    }
}

#[derive(Serialize)]
struct SingleParameterRow {
    sigma: f64,
    v: f64,
    #[serde(rename = "N")]
    n: u64,
    lhs: f64,
    violated: bool,
}

#[derive(Serialize)]
struct BoundsSummary {
    thresholds: Vec<ThresholdRow>,
    prior_averaged_y_variance: f64,
    bound_table: Vec<BoundRow>,
}

/// Theoretical tables: information, thresholds and VT-YFG sweeps.
pub fn bounds(config: &RunConfig) -> Result<Vec<OutputFile>, CliError> {
    let b = &config.bounds;
    let mut files = Vec::new();

    let mut fisher = Vec::new();
    let mut inverse = Vec::new();
    for &v in &b.fisher_visibilities {
        for phi in linspace(0.0, PI, b.phi_points) {
            fisher.push(FisherRow { v, phi, f: conditional_fisher(phi, v)? });
            let f = conditional_fisher_matrix(phi, v)?;
            let finv = f.inverse()?;
            inverse.push(InverseFimRow {
                v,
                phi,
                f_phi_phi: f.phi_phi,
                f_phi_v: f.phi_v,
                f_v_v: f.v_v,
                inv_phi_phi: finv[(0, 0)],
                inv_phi_v: finv[(0, 1)],
                inv_v_v: finv[(1, 1)],
                correlation: correlation_coefficient(&finv)?,
                effective_info: effective_phase_info(&f)?.value,
            });
        }
    }
    files.push(csv("conditional_fisher", "conditional_fisher", config, &fisher)?);
    files.push(csv("inverse_fim", "inverse_fim", config, &inverse)?);

    let mut sweep = Vec::new();
    for k in 1..=b.v_points {
        let v = (k as f64 / b.v_points as f64).min(VISIBILITY_CEILING);
        let single = max_phase_information(ThresholdMode::Single, v)?;
        let multi = max_phase_information(ThresholdMode::Multi, v)?;
        let delta2_y = 1.0 - v * v;
        sweep.push(VisibilityRow {
            v,
            f_max_single: single,
            f_max_multi: multi,
            delta2_y,
            single_violated: single > delta2_y,
            multi_violated: multi > delta2_y,
        });
    }
    files.push(csv("visibility_sweep", "visibility_sweep", config, &sweep)?);

    let thresholds: Vec<ThresholdRow> = [ThresholdMode::Single, ThresholdMode::Multi]
        .into_iter()
        .map(|mode| Ok(ThresholdRow { mode, threshold: violation_threshold(mode)? }))
        .collect::<Result<_, steermetro::Error>>()?;
    files.push(csv("thresholds", "thresholds", config, &thresholds)?);

    let mut v0_rows = Vec::new();
    for &v0 in &b.v0_sweep {
        let prior = config.prior_with(config.prior.sigma, v0)?;
        v0_rows.extend(bound_table(&prior, &b.n)?.iter().map(|r| SweepRow::new(v0, config.prior.sigma, r)));
    }
    files.push(csv("vt_yfg_v0_sweep", "vt_yfg_sweep", config, &v0_rows)?);

    let mut sigma_rows = Vec::new();
    for &sigma in &b.sigma_sweep {
        let prior = config.prior_with(sigma, config.prior.v0)?;
        sigma_rows.extend(bound_table(&prior, &b.n)?.iter().map(|r| SweepRow::new(config.prior.v0, sigma, r)));
    }
    files.push(csv("vt_yfg_sigma_sweep", "vt_yfg_sweep", config, &sigma_rows)?);

    let mut single_rows = Vec::new();
    for &sigma in &b.single_sigma_sweep {
        let phase = config.prior_with(sigma, config.prior.v0)?.phase;
        for &n in &b.n {
            let check = single_parameter_vt_yfg(config.model.visibility, &phase, n)?;
            single_rows.push(SingleParameterRow {
                sigma,
                v: config.model.visibility,
                n,
                lhs: check.lhs,
                violated: check.violated,
            });
        }
    }
    files.push(csv("vt_yfg_single_parameter", "vt_yfg_single_parameter", config, &single_rows)?);

    let prior = config.joint_prior()?;
    let summary = BoundsSummary {
        thresholds,
        prior_averaged_y_variance: prior_averaged_y_variance(&prior)?,
        bound_table: bound_table(&prior, &b.n)?,
    };
    files.push(json("bounds", "bounds", config, &summary)?);
    Ok(files)
}

#[derive(Serialize)]
struct EnsembleCsvRow {
    #[serde(rename = "N_Z")]
    n_z: u64,
    repetitions: usize,
    mean_var_phi: f64,
    se: f64,
    vt_bound: f64,
    conditional_vt_bound: f64,
    mse_phi: f64,
}

impl From<&EnsembleRow> for EnsembleCsvRow {
    fn from(r: &EnsembleRow) -> Self {
        Self {
            n_z: r.n_z,
            repetitions: r.repetitions,
            mean_var_phi: r.mean_var_phi,
            se: r.se,
            vt_bound: r.vt_bound,
            conditional_vt_bound: r.conditional_vt_bound,
            mse_phi: r.mse_phi,
        }
    }
}

#[derive(Clone, Copy, Serialize)]
struct RateRow {
    #[serde(rename = "N_Y")]
    n_y: u64,
    #[serde(rename = "N_Z")]
    n_z: u64,
    repetitions: usize,
    mean_xi2: f64,
    #[serde(rename = "rate_0.05")]
    rate_05: f64,
    #[serde(rename = "rate_0.01")]
    rate_01: f64,
    #[serde(rename = "rate_0.005")]
    rate_005: f64,
}

#[derive(Serialize)]
struct SteeringReport<'a> {
    rates: RateRow,
    /// First repetition, shown in full.
    example: &'a ExperimentOutcome,
}

#[derive(Serialize)]
struct ExperimentSummary {
    ensemble: Vec<EnsembleRow>,
    steering: Vec<RateRow>,
}

fn pipeline_config(config: &RunConfig, n_y: u64, bootstrap_trials: usize) -> Result<PipelineConfig, CliError> {
    let e = &config.experiment;
    let mut p = PipelineConfig::new(config.model.visibility, config.model.phase, config.joint_prior()?, n_y);
    p.schedule = e.schedule;
    p.bootstrap_trials = bootstrap_trials;
    p.bootstrap_fraction = e.bootstrap_fraction;
    p.levels = CONFIDENCE_LEVELS.to_vec();
    p.generator_form = e.generator_form;
    Ok(p)
}

/// Variance-vs-bound ensemble over the `N_Z` sweep, then one steering test
/// ensemble per `N_Y`. All runs draw from the same root seed, so the
/// `N_Y` runs share their phase-branch data.
pub fn experiment(config: &RunConfig) -> Result<Vec<OutputFile>, CliError> {
    let e = &config.experiment;
    let mut files = Vec::new();

    let estimation = Pipeline::new(pipeline_config(config, 0, 0)?)?;
    let ensemble: Vec<EnsembleRow> = e
        .n_z
        .to_vec()
        .iter()
        .map(|&n_z| estimation.ensemble(n_z, e.repetitions, config.seed))
        .collect::<Result<_, _>>()?;
    let rows: Vec<EnsembleCsvRow> = ensemble.iter().map(EnsembleCsvRow::from).collect();
    files.push(csv("ensemble", "ensemble", config, &rows)?);

    let mut rates = Vec::new();
    for n_y in e.n_y.to_vec() {
        let pipeline = Pipeline::new(pipeline_config(config, n_y, e.bootstrap_trials)?)?;
        let outcomes = pipeline.repetitions(e.test_n_z, e.repetitions, config.seed)?;
        let summary = pipeline.summarize(e.test_n_z, &outcomes)?;
        let rate = RateRow {
            n_y,
            n_z: e.test_n_z,
            repetitions: summary.repetitions,
            mean_xi2: summary.mean_xi2.unwrap_or(f64::NAN),
            rate_05: summary.certified_rate[0],
            rate_01: summary.certified_rate[1],
            rate_005: summary.certified_rate[2],
        };
        rates.push(rate);
        let example = &outcomes[0];
        let test = example
            .test
            .as_ref()
            .ok_or_else(|| CliError::Numerical("steering test missing from a run with N_Y > 0".into()))?;
        let name = format!("steering_ny{n_y}");
        files.push(csv(&name, "steering_bootstrap", config, &test.bootstrap_rows()?)?);
        files.push(json(&name, "steering", config, &SteeringReport { rates: rate, example })?);
    }
    files.push(csv("steering_rates", "steering_rates", config, &rates)?);
    files.push(json("experiment", "experiment", config, &ExperimentSummary { ensemble, steering: rates })?);
    Ok(files)
}

#[derive(Serialize)]
struct ReportRow<'a> {
    id: &'a str,
    title: &'a str,
    passed: bool,
    metric: &'a str,
    value: f64,
    target: &'a str,
    ok: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    passed: bool,
    criteria: &'a [Criterion],
}

fn report_files(config: &RunConfig, criteria: &[Criterion]) -> Result<Vec<OutputFile>, CliError> {
    let rows: Vec<ReportRow> = criteria
        .iter()
        .flat_map(|c| {
            c.metrics.iter().map(move |m| ReportRow {
                id: &c.id,
                title: &c.title,
                passed: c.passed,
                metric: &m.name,
                value: m.value,
                target: &m.target,
                ok: m.ok,
            })
        })
        .collect();
    let report = Report { passed: criteria.iter().all(|c| c.passed), criteria };
    Ok(vec![csv("report", "acceptance_report", config, &rows)?, json("report", "acceptance_report", config, &report)?])
}

/// Result of `reproduce`: compared report files, the separate runtime file,
/// and the overall verdict including runtime budgets.
pub struct Reproduction {
    pub files: Vec<OutputFile>,
    pub runtime: OutputFile,
    pub criteria: Vec<Criterion>,
    pub timings: Vec<Timing>,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed) && self.timings.iter().all(Timing::within_budget)
    }
}

/// Runs the selected criteria twice from the same seed. The second run
/// checks determinism: its report files must match the first byte for byte.
pub fn reproduce(config: &RunConfig) -> Result<Reproduction, CliError> {
    let ids = config.selected_criteria();
    let targets = &config.acceptance.targets;
    let first: SuiteResult = run_selected(config.seed, targets, &ids)?;
    let second: SuiteResult = run_selected(config.seed, targets, &ids)?;
    let a = report_files(config, &first.criteria)?;
    let b = report_files(config, &second.criteria)?;
    let mismatched = a.iter().zip(&b).filter(|(x, y)| x != y).count();

    let mut criteria = first.criteria;
    criteria.push(Criterion {
        id: "AC-10".into(),
        title: "Determinism".into(),
        passed: mismatched == 0,
        metrics: vec![Metric {
            name: "mismatched report files between two runs".into(),
            value: mismatched as f64,
            target: "0".into(),
            ok: mismatched == 0,
        }],
    });
    let files = report_files(config, &criteria)?;
    let runtime = json("runtime", "runtime", config, &first.timings)?;
    Ok(Reproduction { files, runtime, criteria, timings: first.timings })
}
