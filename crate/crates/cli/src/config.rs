//! Run configuration: TOML file, then command-line overrides.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use steermetro::acceptance::{Targets, SUITE_IDS};
use steermetro::estimation::GeneratorVarianceForm;
use steermetro::information::VISIBILITY_CEILING;
use steermetro::priors::{JointPrior, PhasePrior, VisibilityPrior, DEFAULT_RESOLUTION};
use steermetro::simulator::SettingSchedule;

use crate::CliError;

/// Seed used when neither the file nor the command line gives one.
pub const DEFAULT_SEED: u64 = 20_241_018;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u64),
    Many(Vec<u64>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Self::One(n) => vec![*n],
            Self::Many(ns) => ns.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub visibility: f64,
    pub phase: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { visibility: 0.97, phase: FRAC_PI_4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mu: f64,
    pub sigma: f64,
    pub v0: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { mu: FRAC_PI_4, sigma: PI / 16.0, v0: 0.95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Sweep for the variance-vs-bound table.
    pub n_z: OneOrMany,
    /// One steering-test table per entry.
    pub n_y: OneOrMany,
    /// `N_Z` of the steering-test runs.
    pub test_n_z: u64,
    /// Simulated experiments per `N_Z` (and per `N_Y` for the test runs).
    pub repetitions: usize,
    pub bootstrap_trials: usize,
    pub bootstrap_fraction: f64,
    pub schedule: SettingSchedule,
    pub generator_form: GeneratorVarianceForm,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_z: OneOrMany::Many(vec![50, 100, 200, 500, 1000, 2000, 5000]),
            n_y: OneOrMany::Many(vec![200, 495]),
            test_n_z: 3000,
            repetitions: 200,
            bootstrap_trials: 50,
            bootstrap_fraction: 0.95,
            schedule: SettingSchedule::Stochastic,
            generator_form: GeneratorVarianceForm::PerOutcome,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    /// Resource counts of the VT-YFG tables.
    pub n: Vec<u64>,
    pub v0_sweep: Vec<f64>,
    pub sigma_sweep: Vec<f64>,
    /// Phase priors of the single-parameter table (known visibility).
    pub single_sigma_sweep: Vec<f64>,
    /// Visibilities of the Fisher-information-vs-φ tables.
    pub fisher_visibilities: Vec<f64>,
    pub phi_points: usize,
    pub v_points: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            n: vec![10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000],
            v0_sweep: vec![0.8, 0.9, 0.95, 0.97, 0.99],
            sigma_sweep: vec![PI / 16.0, PI / 24.0, PI / 32.0],
            single_sigma_sweep: vec![PI / 8.0, PI / 16.0, PI / 32.0],
            fisher_visibilities: vec![0.5, 0.8, 0.97],
            phi_points: 181,
            v_points: 201,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceSection {
    /// Criteria to evaluate; empty means all.
    pub criteria: Vec<String>,
    pub targets: Targets,
}

/// Fully resolved configuration. Serialized into every output file, except
/// for the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Filled in from the subcommand.
    pub mode: String,
    pub seed: u64,
    /// Quadrature intervals per prior axis.
    pub grid: usize,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub experiment: ExperimentSection,
    pub bounds: BoundsSection,
    pub acceptance: AcceptanceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: String::new(),
            seed: DEFAULT_SEED,
            grid: DEFAULT_RESOLUTION,
            out: PathBuf::from("out"),
            model: ModelConfig::default(),
            prior: PriorConfig::default(),
            experiment: ExperimentSection::default(),
            bounds: BoundsSection::default(),
            acceptance: AcceptanceSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: Option<usize>,
    pub trials: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies overrides, sets the mode and validates.
    pub fn resolve(mut self, mode: &str, overrides: &Overrides) -> Result<Self, CliError> {
        self.mode = mode.to_string();
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.out = out.clone();
        }
        if let Some(grid) = overrides.grid {
            self.grid = grid;
        }
        if let Some(trials) = overrides.trials {
            self.experiment.repetitions = trials;
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&mut self) -> Result<(), CliError> {
        let v = self.model.visibility;
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(format!("model.visibility {v} outside [0, 1]")));
        }
        if v > VISIBILITY_CEILING {
            log::warn!("model.visibility {v} clamped to {VISIBILITY_CEILING}");
            self.model.visibility = VISIBILITY_CEILING;
        }
        if !self.model.phase.is_finite() {
            return Err(invalid("model.phase must be finite"));
        }
        if self.grid < 8 || !self.grid.is_multiple_of(2) {
            return Err(invalid(format!("grid {} must be an even number of at least 8", self.grid)));
        }
        self.joint_prior()?
            .phase
            .check_multiparameter()
            .map_err(|e| invalid(format!("prior.sigma: {e}")))?;

        let e = &self.experiment;
        if e.n_z.to_vec().is_empty() || e.n_z.to_vec().contains(&0) {
            return Err(invalid("experiment.n_z must list positive resource counts"));
        }
        if e.n_y.to_vec().is_empty() || e.n_y.to_vec().contains(&0) {
            return Err(invalid("experiment.n_y must list positive resource counts"));
        }
        if e.test_n_z == 0 {
            return Err(invalid("experiment.test_n_z must be positive"));
        }
        if e.repetitions < 2 {
            return Err(invalid(format!("experiment.repetitions {} must be at least 2", e.repetitions)));
        }
        if e.bootstrap_trials == 0 {
            return Err(invalid("experiment.bootstrap_trials must be positive"));
        }
        if !(e.bootstrap_fraction > 0.0 && e.bootstrap_fraction <= 1.0) {
            return Err(invalid(format!("experiment.bootstrap_fraction {} outside (0, 1]", e.bootstrap_fraction)));
        }

        let b = &self.bounds;
        if b.n.is_empty() || b.n.contains(&0) {
            return Err(invalid("bounds.n must list positive resource counts"));
        }
        if b.phi_points < 2 || b.v_points < 2 {
            return Err(invalid("bounds.phi_points and bounds.v_points must be at least 2"));
        }
        for &fv in &b.fisher_visibilities {
            if !(0.0..=VISIBILITY_CEILING).contains(&fv) {
                return Err(invalid(format!("bounds.fisher_visibilities entry {fv} outside [0, 1)")));
            }
        }
        for &v0 in &b.v0_sweep {
            VisibilityPrior::new(v0).map_err(|e| invalid(format!("bounds.v0_sweep: {e}")))?;
        }
        for &s in &b.sigma_sweep {
            PhasePrior::new(self.prior.mu, s)
                .and_then(|p| p.check_multiparameter().map(|_| p))
                .map_err(|e| invalid(format!("bounds.sigma_sweep: {e}")))?;
        }
        for &s in &b.single_sigma_sweep {
            PhasePrior::new(self.prior.mu, s).map_err(|e| invalid(format!("bounds.single_sigma_sweep: {e}")))?;
        }

        for id in &self.acceptance.criteria {
            if !SUITE_IDS.contains(&id.as_str()) {
                return Err(invalid(format!("acceptance.criteria: unknown criterion {id}")));
            }
        }
        Ok(())
    }

    pub fn joint_prior(&self) -> Result<JointPrior, CliError> {
        self.prior_with(self.prior.sigma, self.prior.v0)
    }

    pub fn prior_with(&self, sigma: f64, v0: f64) -> Result<JointPrior, CliError> {
        let phase = PhasePrior::new(self.prior.mu, sigma).map_err(|e| invalid(format!("prior: {e}")))?;
        let visibility = VisibilityPrior::new(v0).map_err(|e| invalid(format!("prior: {e}")))?;
        Ok(JointPrior::new(phase, visibility).with_resolution(self.grid))
    }

    /// Criteria selected for `reproduce`, in suite order.
    pub fn selected_criteria(&self) -> Vec<&'static str> {
        SUITE_IDS
            .iter()
            .copied()
            .filter(|id| self.acceptance.criteria.is_empty() || self.acceptance.criteria.iter().any(|c| c == id))
            .collect()
    }
}
