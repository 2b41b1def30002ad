//! Van Trees matrices, the steering limit `L` and the visibility thresholds
//! above which an LHS model cannot reproduce the phase sensitivity.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::information::{conditional_fisher, conditional_fisher_matrix, FisherMatrix};
use crate::priors::{
    check_convergence, converged, integrate, phase_score_integral, Axis, JointPrior, PhasePrior, CONVERGENCE_TOLERANCE,
    DEFAULT_RESOLUTION,
};
use crate::qubit_model::AliceZ;
use crate::simulator::PhaseCounts;

/// `V = ∫P F + J/N` over `(φ, v)`, with the resource count it was built for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanTreesMatrix {
    pub entries: FisherMatrix,
    pub n: u64,
}

/// The two prior-dependent pieces of a Van Trees matrix: the prior-averaged
/// Fisher matrix and the prior score matrix `J = ∫ ∂P ∂Pᵀ / P`.
///
/// Both are independent of `N`, so a sweep over resources computes them once.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanTreesTerms {
    pub averaged_fisher: FisherMatrix,
    pub score: FisherMatrix,
}

impl VanTreesTerms {
    /// Evaluates both terms at the prior's resolution and at twice that.
    pub fn compute(prior: &JointPrior) -> Result<Self> {
        let coarse = Self::on_grid(prior)?;
        let fine = Self::on_grid(&prior.refined())?;
        check_matrix_convergence("prior-averaged Fisher matrix", &coarse.averaged_fisher, &fine.averaged_fisher)?;
        check_matrix_convergence("prior score matrix", &coarse.score, &fine.score)?;
        Ok(fine)
    }

    fn on_grid(prior: &JointPrior) -> Result<Self> {
        let grid = prior.grid()?;
        let element = |pick: fn(&FisherMatrix) -> f64| {
            integrate(
                |phi, v| match conditional_fisher_matrix(phi, v) {
                    Ok(f) => prior.density(phi, v) * pick(&f),
                    Err(_) => f64::NAN,
                },
                &grid,
            )
        };
        let averaged_fisher = FisherMatrix::new(element(|f| f.phi_phi)?, element(|f| f.phi_v)?, element(|f| f.v_v)?);

        let (phase, vis) = (&prior.phase, &prior.visibility);
        let j_pp = integrate(
            |phi, v| {
                let s = phase.log_density_derivative(phi);
                prior.density(phi, v) * s * s
            },
            &grid,
        )?;
        let j_pv = integrate(
            |phi, v| phase.density(phi) * phase.log_density_derivative(phi) * vis.density_derivative(v),
            &grid,
        )?;
        let j_vv = integrate(|phi, v| phase.density(phi) * vis.score_density(v), &grid)?;
        Ok(Self { averaged_fisher, score: FisherMatrix::new(j_pp, j_pv, j_vv) })
    }

    /// `∫P F + J/N`.
    pub fn at(&self, n: u64) -> Result<VanTreesMatrix> {
        if n == 0 {
            return Err(domain("resource count N must be at least 1"));
        }
        Ok(VanTreesMatrix { entries: self.averaged_fisher.add(&self.score.scaled(1.0 / n as f64)), n })
    }

    /// Per-outcome combination `Σ_a w_a (∫P F⁽ᵃ⁾ + J/n_a)` with `w_a = n_a/N_Z`.
    ///
    /// An outcome with `n_a = 0` has weight zero and an infinite score term; the
    /// product is taken as zero and a warning is logged.
    pub fn conditional(&self, counts: &PhaseCounts) -> Result<VanTreesMatrix> {
        let total = counts.total();
        if total == 0 {
            return Err(Error::Degenerate("conditional Van Trees matrix needs N_Z > 0".into()));
        }
        let mut entries = FisherMatrix::new(0.0, 0.0, 0.0);
        for a in AliceZ::ALL {
            let n_a = counts.alice_total(a);
            if n_a == 0 {
                warn!("no events heralded by Alice outcome {}; its Van Trees term is dropped", a.label());
                continue;
            }
            let w = n_a as f64 / total as f64;
            // Alice's outcomes are equiprobable and parameter free, so each
            // conditional Bob distribution carries the full conditional FIM.
            let per_outcome = self.averaged_fisher.add(&self.score.scaled(1.0 / n_a as f64));
            entries = entries.add(&per_outcome.scaled(w));
        }
        Ok(VanTreesMatrix { entries, n: total })
    }
}

fn check_matrix_convergence(what: &str, coarse: &FisherMatrix, fine: &FisherMatrix) -> Result<()> {
    // Off-diagonal entries may vanish by symmetry, so every entry is judged
    // against the diagonal scale.
    let scale = fine.phi_phi.abs().max(fine.v_v.abs());
    for (c, f) in [(coarse.phi_phi, fine.phi_phi), (coarse.phi_v, fine.phi_v), (coarse.v_v, fine.v_v)] {
        if (c - f).abs() > CONVERGENCE_TOLERANCE * scale {
            return Err(Error::Convergence(format!("{what}: entry changed from {c:e} to {f:e} on grid doubling")));
        }
    }
    Ok(())
}

/// Van Trees matrix of `prior` for `n` resources.
pub fn van_trees_matrix(prior: &JointPrior, n: u64) -> Result<VanTreesMatrix> {
    if n == 0 {
        return Err(domain("resource count N must be at least 1"));
    }
    VanTreesTerms::compute(prior)?.at(n)
}

/// `(V⁻¹)_φφ / N`.
pub fn van_trees_phase_bound(v: &VanTreesMatrix, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(domain("resource count N must be at least 1"));
    }
    Ok(v.entries.inverse()?[(0, 0)] / n as f64)
}

/// Van Trees matrix assembled from the per-Alice-outcome occurrences of a record.
pub fn conditional_van_trees(counts: &PhaseCounts, prior: &JointPrior) -> Result<VanTreesMatrix> {
    VanTreesTerms::compute(prior)?.conditional(counts)
}

/// Steering limit `L = 4Δ²G_cond + (1/N_Z) ∫(∂_φP)²/P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YfgLimit {
    pub value: f64,
    pub generator_term: f64,
    pub score_term: f64,
}

impl YfgLimit {
    /// Builds the limit from its two terms.
    pub fn from_terms(generator_term: f64, score_term: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&generator_term) {
            return Err(domain(format!("conditional Y variance {generator_term} outside [0, 1]")));
        }
        if !(score_term >= 0.0 && score_term.is_finite()) {
            return Err(domain(format!("score term {score_term} must be finite and nonnegative")));
        }
        Ok(Self { value: generator_term + score_term, generator_term, score_term })
    }
}

/// `L` for a measured (or modelled) `Δ²Y_cond` and `N_Z` phase-branch events.
pub fn yfg_limit(delta2_y_cond: f64, prior: &JointPrior, n_z: u64) -> Result<YfgLimit> {
    if n_z == 0 {
        return Err(domain("N_Z must be at least 1"));
    }
    if !(0.0..=1.0).contains(&delta2_y_cond) {
        return Err(domain(format!("conditional Y variance {delta2_y_cond} outside [0, 1]")));
    }
    YfgLimit::from_terms(delta2_y_cond, phase_score_integral(prior, n_z)?)
}

/// Which protocol the threshold refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// φ only, Bob measures Z: `f_max = v²`.
    Single,
    /// Joint (φ, v), Bob alternates X and Z: `f_max = v²/(2 − v²)`.
    Multi,
}

/// Best phase information available at visibility `v` for the given protocol.
pub fn max_phase_information(mode: ThresholdMode, v: f64) -> Result<f64> {
    match mode {
        ThresholdMode::Single => conditional_fisher(0.0, v),
        ThresholdMode::Multi => {
            let f = conditional_fisher_matrix(std::f64::consts::FRAC_PI_4, v)?;
            Ok(1.0 / f.inverse()?[(0, 0)])
        }
    }
}

/// Visibility at which `f_max(v) = 1 − v²`, by bisection to 1e−12.
pub fn violation_threshold(mode: ThresholdMode) -> Result<f64> {
    let gap = |v: f64| -> Result<f64> { Ok(max_phase_information(mode, v)? - (1.0 - v * v)) };
    let (mut lo, mut hi) = (1e-3, 0.999);
    if gap(lo)? >= 0.0 || gap(hi)? <= 0.0 {
        return Err(Error::Convergence("threshold is not bracketed in (0, 1)".into()));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of the pre-data VT-YFG comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VtYfgCheck {
    pub lhs: f64,
    pub violated: bool,
}

/// `(V⁻¹)_φφ · L`, violated when below one.
pub fn vt_yfg_check(v: &VanTreesMatrix, limit: &YfgLimit) -> Result<VtYfgCheck> {
    let lhs = v.entries.inverse()?[(0, 0)] * limit.value;
    Ok(VtYfgCheck { lhs, violated: lhs < 1.0 })
}

/// Prior average of the model's conditional Y variance, `1 − E[v²]`.
pub fn prior_averaged_y_variance(prior: &JointPrior) -> Result<f64> {
    let mean_v2 = converged(prior, "prior moment E[v²]", |p| {
        let grid = p.grid()?;
        integrate(|phi, v| p.density(phi, v) * v * v, &grid)
    })?;
    Ok((1.0 - mean_v2).clamp(0.0, 1.0))
}

/// One row of a theoretical bound table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    #[serde(rename = "N")]
    pub n: u64,
    pub bound: f64,
    pub generator_term: f64,
    pub score_term: f64,
    pub lhs: f64,
    pub violated: bool,
}

/// VT phase bound and VT-YFG check for each `N`, with the model's
/// prior-averaged `Δ²Y` as the generator term.
pub fn bound_table(prior: &JointPrior, ns: &[u64]) -> Result<Vec<BoundRow>> {
    let terms = VanTreesTerms::compute(prior)?;
    let dy = prior_averaged_y_variance(prior)?;
    let score = phase_score_integral(prior, 1)?;
    ns.iter()
        .map(|&n| {
            let v = terms.at(n)?;
            let limit = YfgLimit::from_terms(dy, score / n as f64)?;
            let check = vt_yfg_check(&v, &limit)?;
            Ok(BoundRow {
                n,
                bound: van_trees_phase_bound(&v, n)?,
                generator_term: limit.generator_term,
                score_term: limit.score_term,
                lhs: check.lhs,
                violated: check.violated,
            })
        })
        .collect()
}

/// Single-parameter VT-YFG ratio at known visibility `v`:
/// `L / (∫P_φ f + 1/(Nσ²))` with `L = 1 − v² + 1/(Nσ²)`.
pub fn single_parameter_vt_yfg(v: f64, phase: &PhasePrior, n: u64) -> Result<VtYfgCheck> {
    if n == 0 {
        return Err(domain("resource count N must be at least 1"));
    }
    let average = |intervals: usize| -> Result<f64> {
        let (lo, hi) = phase.window();
        let axis = Axis::simpson(lo, hi, intervals)?;
        let mut sum = 0.0;
        for (&phi, &w) in axis.nodes.iter().zip(&axis.weights) {
            sum += w * phase.density(phi) * conditional_fisher(phi, v)?;
        }
        Ok(sum)
    };
    let coarse = average(DEFAULT_RESOLUTION)?;
    let fine = average(2 * DEFAULT_RESOLUTION)?;
    check_convergence("prior-averaged conditional Fisher information", coarse, fine)?;
    let score = 1.0 / (n as f64 * phase.sigma() * phase.sigma());
    let lhs = (1.0 - v * v + score) / (fine + score);
    Ok(VtYfgCheck { lhs, violated: lhs < 1.0 })
}
