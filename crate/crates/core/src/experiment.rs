//! End-to-end pipeline: simulate → estimate → reconstruct → test, for single
//! experiments and for ensembles over `N_Z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{van_trees_phase_bound, VanTreesTerms};
use crate::error::{domain, Result};
use crate::estimation::{reconstruct_generator_with, EstimationResult, Estimator, GeneratorEstimate, GeneratorVarianceForm};
use crate::priors::{phase_score_integral, JointPrior};
use crate::rng::{substream_seed, Stream};
use crate::simulator::{simulate, CountRecord, ExperimentConfig, SettingSchedule};
use crate::steering_test::{bootstrap_test_with_score, TestConfig, TestResult, CONFIDENCE_LEVELS, DEFAULT_BOOTSTRAP_FRACTION};

/// Everything except `N_Z` and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub visibility: f64,
    pub phase: f64,
    pub prior: JointPrior,
    pub n_y: u64,
    pub schedule: SettingSchedule,
    /// Bootstrap trials per experiment; 0 skips the steering test.
    pub bootstrap_trials: usize,
    pub bootstrap_fraction: f64,
    pub levels: Vec<f64>,
    pub generator_form: GeneratorVarianceForm,
}

impl PipelineConfig {
    pub fn new(visibility: f64, phase: f64, prior: JointPrior, n_y: u64) -> Self {
        Self {
            visibility,
            phase,
            prior,
            n_y,
            schedule: SettingSchedule::Stochastic,
            bootstrap_trials: 0,
            bootstrap_fraction: DEFAULT_BOOTSTRAP_FRACTION,
            levels: CONFIDENCE_LEVELS.to_vec(),
            generator_form: GeneratorVarianceForm::PerOutcome,
        }
    }
}

/// Seed of repetition `rep` at resource count `n_z`, derived from the run's root seed.
pub fn experiment_seed(root: u64, n_z: u64, rep: u64) -> u64 {
    substream_seed(substream_seed(root, Stream::Experiment, n_z), Stream::Experiment, rep)
}

/// One simulated experiment and everything derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub n_z: u64,
    pub seed: u64,
    pub counts: CountRecord,
    pub estimate: EstimationResult,
    pub generator: Option<GeneratorEstimate>,
    /// `(V⁻¹)_φφ / N_Z` of the record's conditional Van Trees matrix.
    pub conditional_vt_bound: f64,
    pub test: Option<TestResult>,
}

/// Summary of repeated experiments at one `N_Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    #[serde(rename = "N_Z")]
    pub n_z: u64,
    pub repetitions: usize,
    pub mean_var_phi: f64,
    /// Standard error of `mean_var_phi`.
    pub se: f64,
    /// Van Trees bound of the prior at `N_Z`.
    pub vt_bound: f64,
    /// Mean over records of the conditional Van Trees bound.
    pub conditional_vt_bound: f64,
    /// Sample variance of `φ̄_cond` about the true phase.
    pub mse_phi: f64,
    /// Certification rate at each configured level, in `levels` order.
    pub certified_rate: Vec<f64>,
    pub mean_xi2: Option<f64>,
}

/// Pipeline with its prior-dependent quantities computed once.
#[derive(Clone, Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    estimator: Estimator,
    terms: VanTreesTerms,
    phase_score: f64,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        ExperimentConfig {
            visibility: config.visibility,
            phase: config.phase,
            n_z: 0,
            n_y: config.n_y,
            seed: 0,
            schedule: config.schedule,
        }
        .validate()?;
        config.prior.phase.check_multiparameter()?;
        let estimator = Estimator::new(&config.prior)?;
        let terms = VanTreesTerms::compute(&config.prior)?;
        let phase_score = phase_score_integral(&config.prior, 1)?;
        Ok(Self { config, estimator, terms, phase_score })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn terms(&self) -> &VanTreesTerms {
        &self.terms
    }

    /// Van Trees bound of the prior at `n_z`.
    pub fn vt_bound(&self, n_z: u64) -> Result<f64> {
        van_trees_phase_bound(&self.terms.at(n_z)?, n_z)
    }

    pub fn run(&self, n_z: u64, seed: u64) -> Result<ExperimentOutcome> {
        if n_z == 0 {
            return Err(domain("N_Z must be at least 1"));
        }
        let c = &self.config;
        let counts = simulate(&ExperimentConfig {
            visibility: c.visibility,
            phase: c.phase,
            n_z,
            n_y: c.n_y,
            seed,
            schedule: c.schedule,
        })?;
        let estimate = self.estimator.conditional(&counts.phase)?;
        let conditional_vt_bound = van_trees_phase_bound(&self.terms.conditional(&counts.phase)?, n_z)?;
        let generator = if c.n_y > 0 {
            Some(reconstruct_generator_with(&counts.generator, c.generator_form)?)
        } else {
            None
        };
        let test = if c.bootstrap_trials > 0 && c.n_y > 0 {
            let cfg = TestConfig {
                trials: c.bootstrap_trials,
                seed,
                levels: c.levels.clone(),
                bootstrap_fraction: c.bootstrap_fraction,
                generator_form: c.generator_form,
            };
            Some(bootstrap_test_with_score(&counts, estimate.var_phi, self.phase_score, &cfg)?)
        } else {
            None
        };
        Ok(ExperimentOutcome { n_z, seed, counts, estimate, generator, conditional_vt_bound, test })
    }

    /// `repetitions` independent experiments at `n_z`, in repetition order.
    pub fn repetitions(&self, n_z: u64, repetitions: usize, root_seed: u64) -> Result<Vec<ExperimentOutcome>> {
        (0..repetitions)
            .into_par_iter()
            .map(|rep| self.run(n_z, experiment_seed(root_seed, n_z, rep as u64)))
            .collect()
    }

    pub fn ensemble(&self, n_z: u64, repetitions: usize, root_seed: u64) -> Result<EnsembleRow> {
        if repetitions < 2 {
            return Err(domain("an ensemble needs at least two repetitions"));
        }
        let outcomes = self.repetitions(n_z, repetitions, root_seed)?;
        self.summarize(n_z, &outcomes)
    }

    pub fn summarize(&self, n_z: u64, outcomes: &[ExperimentOutcome]) -> Result<EnsembleRow> {
        let k = outcomes.len() as f64;
        let vars: Vec<f64> = outcomes.iter().map(|o| o.estimate.var_phi).collect();
        let mean = vars.iter().sum::<f64>() / k;
        let sample_var = vars.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let mse_phi = outcomes.iter().map(|o| (o.estimate.phi - self.config.phase).powi(2)).sum::<f64>() / k;
        let conditional_vt_bound = outcomes.iter().map(|o| o.conditional_vt_bound).sum::<f64>() / k;
        let tests: Vec<&TestResult> = outcomes.iter().filter_map(|o| o.test.as_ref()).collect();
        let certified_rate = self
            .config
            .levels
            .iter()
            .map(|&p| {
                if tests.is_empty() {
                    0.0
                } else {
                    tests.iter().filter(|t| t.certified(p)).count() as f64 / tests.len() as f64
                }
            })
            .collect();
        let mean_xi2 = (!tests.is_empty()).then(|| tests.iter().map(|t| t.xi2).sum::<f64>() / tests.len() as f64);
        Ok(EnsembleRow {
            n_z,
            repetitions: outcomes.len(),
            mean_var_phi: mean,
            se: (sample_var / k).sqrt(),
            vt_bound: self.vt_bound(n_z)?,
            conditional_vt_bound,
            mse_phi,
            certified_rate,
            mean_xi2,
        })
    }
}
