//! Factorized prior over `(φ, v)` and the tensor-product quadrature shared by
//! every Bayesian integral in the crate.
//!
//! The phase prior is a Gaussian; the visibility prior is a raised cosine on
//! `(2v₀ − 1, 1)`, which vanishes together with its derivative at both ends of
//! its support so that the Van Trees score integrals stay finite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{domain, Error, Result};

/// Half-width of the φ window, in prior standard deviations.
pub const PHASE_WINDOW_SIGMAS: f64 = 6.0;

/// Trimming applied at both ends of the visibility support.
pub const VISIBILITY_EPSILON: f64 = 1e-9;

/// Default number of Simpson intervals per axis.
pub const DEFAULT_RESOLUTION: usize = 512;

/// Largest relative change tolerated when the grid resolution is doubled.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-4;

/// Widest phase prior that still resolves the halved period of the Fisher matrix.
pub const MAX_SIGMA_MULTIPARAMETER: f64 = PI / 16.0;

/// Widest phase prior for the single-parameter analysis.
pub const MAX_SIGMA_SINGLE_PARAMETER: f64 = PI / 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePrior {
    center: f64,
    sigma: f64,
}

impl PhasePrior {
    pub fn new(center: f64, sigma: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(domain("phase prior center must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(domain(format!("phase prior sigma {sigma} must be positive")));
        }
        Ok(Self { center, sigma })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Rejects priors too wide to pick a single fringe of the two-parameter model.
    pub fn check_multiparameter(&self) -> Result<()> {
        if self.sigma > MAX_SIGMA_MULTIPARAMETER * (1.0 + 1e-12) {
            return Err(domain(format!(
                "phase prior sigma {} exceeds π/16 for joint (φ, v) estimation",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn density(&self, phi: f64) -> f64 {
        phase_density(phi, self)
    }

    /// `∂_φ log P_φ`.
    pub fn log_density_derivative(&self, phi: f64) -> f64 {
        -(phi - self.center) / (self.sigma * self.sigma)
    }

    pub fn window(&self) -> (f64, f64) {
        let half = PHASE_WINDOW_SIGMAS * self.sigma;
        (self.center - half, self.center + half)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPrior {
    expected: f64,
}

impl VisibilityPrior {
    pub fn new(expected: f64) -> Result<Self> {
        if !(expected > 0.5 && expected < 1.0) {
            return Err(domain(format!("expected visibility {expected} outside (1/2, 1)")));
        }
        Ok(Self { expected })
    }

    pub fn expected(&self) -> f64 {
        self.expected
    }

    fn half_width(&self) -> f64 {
        1.0 - self.expected
    }

    /// Open support `(2v₀ − 1, 1)`.
    pub fn support(&self) -> (f64, f64) {
        (2.0 * self.expected - 1.0, 1.0)
    }

    pub fn density(&self, v: f64) -> f64 {
        visibility_density(v, self)
    }

    pub fn density_derivative(&self, v: f64) -> f64 {
        let (lo, hi) = self.support();
        if v <= lo || v >= hi {
            return 0.0;
        }
        let s = self.half_width();
        -(PI * (PI * (v - self.expected) / s).sin()) / (2.0 * s * s)
    }

    /// `(P_v')² / P_v`, written as `π² (1 − cos u) / (2 s³)` to avoid the 0/0
    /// at the ends of the support.
    pub fn score_density(&self, v: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(v > lo && v < hi) {
            return 0.0;
        }
        let s = self.half_width();
        PI * PI * (1.0 - (PI * (v - self.expected) / s).cos()) / (2.0 * s * s * s)
    }

    /// Closed-form `∫ (P_v')² / P_v dv = π² / (1 − v₀)²`.
    pub fn score(&self) -> f64 {
        let s = self.half_width();
        PI * PI / (s * s)
    }
}

/// Gaussian phase density.
pub fn phase_density(phi: f64, prior: &PhasePrior) -> f64 {
    let z = (phi - prior.center) / prior.sigma;
    (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * prior.sigma)
}

/// Raised-cosine visibility density, zero outside `(2v₀ − 1, 1)`.
pub fn visibility_density(v: f64, prior: &VisibilityPrior) -> f64 {
    let (lo, hi) = prior.support();
    if !(v > lo && v < hi) {
        return 0.0;
    }
    let s = prior.half_width();
    (1.0 + (PI * (v - prior.expected) / s).cos()) / (2.0 * s)
}

/// Composite Simpson nodes and weights on one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Axis {
    /// `intervals` must be even; yields `intervals + 1` nodes.
    pub fn simpson(lo: f64, hi: f64, intervals: usize) -> Result<Self> {
        if intervals < 2 || !intervals.is_multiple_of(2) {
            return Err(domain(format!("Simpson needs an even interval count, got {intervals}")));
        }
        if !(hi > lo) {
            return Err(domain(format!("empty quadrature interval [{lo}, {hi}]")));
        }
        let h = (hi - lo) / intervals as f64;
        let nodes = (0..=intervals).map(|i| lo + h * i as f64).collect();
        let weights = (0..=intervals)
            .map(|i| {
                let k = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                k * h / 3.0
            })
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.nodes[self.nodes.len() - 1] - self.nodes[0]
    }
}

/// Tensor-product quadrature over the prior's φ window and visibility support.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub phi: Axis,
    pub v: Axis,
    pub resolution: usize,
}

impl QuadratureGrid {
    pub fn for_prior(prior: &JointPrior, resolution: usize) -> Result<Self> {
        let (plo, phi_hi) = prior.phase.window();
        let (vlo, vhi) = prior.visibility.support();
        Ok(Self {
            phi: Axis::simpson(plo, phi_hi, resolution)?,
            v: Axis::simpson(vlo + VISIBILITY_EPSILON, vhi - VISIBILITY_EPSILON, resolution)?,
            resolution,
        })
    }

    pub fn node_count(&self) -> usize {
        self.phi.len() * self.v.len()
    }

    /// Flat index of node `(i, j)`, φ-major.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.v.len() + j
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.phi.weights[i] * self.v.weights[j]
    }
}

/// `P(φ, v) = P_φ(φ) P_v(v)` together with the quadrature resolution used for it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPrior {
    pub phase: PhasePrior,
    pub visibility: VisibilityPrior,
    pub resolution: usize,
}

impl JointPrior {
    pub fn new(phase: PhasePrior, visibility: VisibilityPrior) -> Self {
        Self { phase, visibility, resolution: DEFAULT_RESOLUTION }
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    /// μ = π/4, σ = π/16, v₀ = 0.95.
    pub fn experiment_default() -> Self {
        Self::new(
            PhasePrior::new(FRAC_PI_4, PI / 16.0).expect("valid default"),
            VisibilityPrior::new(0.95).expect("valid default"),
        )
    }

    pub fn density(&self, phi: f64, v: f64) -> f64 {
        self.phase.density(phi) * self.visibility.density(v)
    }

    /// `(∂_φ P, ∂_v P)`.
    pub fn gradient(&self, phi: f64, v: f64) -> (f64, f64) {
        let pp = self.phase.density(phi);
        let pv = self.visibility.density(v);
        (pp * self.phase.log_density_derivative(phi) * pv, pp * self.visibility.density_derivative(v))
    }

    pub fn grid(&self) -> Result<QuadratureGrid> {
        QuadratureGrid::for_prior(self, self.resolution)
    }

    pub fn refined(&self) -> Self {
        self.with_resolution(2 * self.resolution)
    }

    /// Density on every grid node, renormalized to unit mass on the window.
    pub fn tabulate(&self) -> Result<TabulatedPrior> {
        let grid = self.grid()?;
        let pv: Vec<f64> = grid.v.nodes.iter().map(|&v| self.visibility.density(v)).collect();
        let mut density = Vec::with_capacity(grid.node_count());
        for &phi in &grid.phi.nodes {
            let pp = self.phase.density(phi);
            density.extend(pv.iter().map(|&x| pp * x));
        }
        let mass: f64 = (0..grid.phi.len())
            .map(|i| (0..grid.v.len()).map(|j| grid.weight(i, j) * density[grid.index(i, j)]).sum::<f64>())
            .sum();
        if !(mass > 0.0) {
            return Err(Error::Degenerate("prior has no mass on the grid".into()));
        }
        density.iter_mut().for_each(|d| *d /= mass);
        Ok(TabulatedPrior { grid, density, mass })
    }
}

/// Normalized prior density on a fixed grid.
#[derive(Clone, Debug)]
pub struct TabulatedPrior {
    pub grid: QuadratureGrid,
    /// φ-major, renormalized to integrate to one.
    pub density: Vec<f64>,
    /// Mass of the unnormalized density on the window.
    pub mass: f64,
}

/// Tensor-product composite Simpson integral of `f` over `grid`.
///
/// Rows are summed in parallel and combined in a fixed order, so the result is
/// bit-identical from run to run.
pub fn integrate<F>(f: F, grid: &QuadratureGrid) -> Result<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let rows: Vec<f64> = (0..grid.phi.len())
        .into_par_iter()
        .map(|i| {
            let phi = grid.phi.nodes[i];
            grid.v
                .nodes
                .iter()
                .zip(&grid.v.weights)
                .map(|(&v, &w)| w * f(phi, v))
                .sum::<f64>()
                * grid.phi.weights[i]
        })
        .collect();
    let total: f64 = rows.iter().sum();
    if !total.is_finite() {
        return Err(Error::NonFinite("integrand is not finite on the grid".into()));
    }
    Ok(total)
}

/// Runs `eval` at the prior's resolution and at twice that, failing if the
/// relative change exceeds [`CONVERGENCE_TOLERANCE`]. Returns the fine value.
pub fn converged<F>(prior: &JointPrior, what: &str, eval: F) -> Result<f64>
where
    F: Fn(&JointPrior) -> Result<f64>,
{
    let coarse = eval(prior)?;
    let fine = eval(&prior.refined())?;
    check_convergence(what, coarse, fine)?;
    Ok(fine)
}

pub(crate) fn check_convergence(what: &str, coarse: f64, fine: f64) -> Result<()> {
    let scale = fine.abs().max(1e-300);
    let rel = (fine - coarse).abs() / scale;
    if rel > CONVERGENCE_TOLERANCE {
        return Err(Error::Convergence(format!(
            "{what}: grid doubling changed the integral by {rel:.2e} (relative)"
        )));
    }
    Ok(())
}

/// `∫ (∂_φ P)² / P` on a single grid, without normalization to the window.
fn phase_score_on_grid(prior: &JointPrior) -> Result<f64> {
    let grid = prior.grid()?;
    integrate(
        |phi, v| {
            let s = prior.phase.log_density_derivative(phi);
            prior.density(phi, v) * s * s
        },
        &grid,
    )
}

/// `(1/N) ∫ (∂_φ P)² / P dφ dv` by quadrature, checked against a doubled grid.
pub fn phase_score_integral(prior: &JointPrior, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(domain("resource count N must be at least 1"));
    }
    Ok(converged(prior, "phase score integral", phase_score_on_grid)? / n as f64)
}

/// `∫ (∂_v P)² / P dφ dv` by quadrature, checked against a doubled grid.
pub fn visibility_score_integral(prior: &JointPrior) -> Result<f64> {
    converged(prior, "visibility score integral", |p| {
        let grid = p.grid()?;
        integrate(
            |phi, v| p.phase.density(phi) * p.visibility.score_density(v),
            &grid,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior(sigma: f64, v0: f64) -> JointPrior {
        JointPrior::new(PhasePrior::new(FRAC_PI_4, sigma).unwrap(), VisibilityPrior::new(v0).unwrap())
    }

    #[test]
    fn phase_density_values() {
        let p = PhasePrior::new(0.3, 0.2).unwrap();
        assert!((phase_density(0.3, &p) - 1.0 / (2.0 * PI * 0.04).sqrt()).abs() < 1e-14);
        let narrow = PhasePrior::new(FRAC_PI_4, PI / 16.0).unwrap();
        // 1/√(2π (π/16)²)
        assert!((phase_density(FRAC_PI_4, &narrow) - 2.031796).abs() < 1e-5);
    }

    #[test]
    fn phase_prior_validation() {
        assert!(PhasePrior::new(0.0, 0.0).is_err());
        assert!(PhasePrior::new(0.0, -1.0).is_err());
        assert!(PhasePrior::new(f64::NAN, 0.1).is_err());
        assert!(PhasePrior::new(0.0, PI / 16.0).unwrap().check_multiparameter().is_ok());
        assert!(PhasePrior::new(0.0, PI / 8.0).unwrap().check_multiparameter().is_err());
    }

    #[test]
    fn visibility_density_values() {
        let p = VisibilityPrior::new(0.95).unwrap();
        assert!((visibility_density(0.95, &p) - 20.0).abs() < 1e-12);
        assert_eq!(visibility_density(1.0, &p), 0.0);
        assert_eq!(visibility_density(0.9, &p), 0.0);
        assert_eq!(visibility_density(0.5, &p), 0.0);
        // Density and slope vanish approaching both ends.
        for v in [0.9 + 1e-9, 1.0 - 1e-9] {
            assert!(visibility_density(v, &p) < 1e-10);
            assert!(p.density_derivative(v).abs() < 1e-4);
        }
        let v = 0.93;
        let d = p.density_derivative(v);
        assert!((p.score_density(v) - d * d / visibility_density(v, &p)).abs() < 1e-9);
    }

    #[test]
    fn visibility_prior_validation() {
        for bad in [0.5, 1.0, 0.2, f64::NAN] {
            assert!(matches!(VisibilityPrior::new(bad), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn densities_are_nonnegative() {
        let p = prior(PI / 16.0, 0.8);
        for i in 0..200 {
            let x = -1.0 + 0.02 * i as f64;
            assert!(p.density(x, x.abs().min(1.2)) >= 0.0);
        }
    }

    #[test]
    fn simpson_weights() {
        let axis = Axis::simpson(0.0, 2.0, 8).unwrap();
        assert_eq!(axis.len(), 9);
        assert!(axis.weights.iter().all(|&w| w > 0.0));
        assert!((axis.weights.iter().sum::<f64>() - axis.span()).abs() < 1e-14);
        assert!(Axis::simpson(0.0, 1.0, 7).is_err());
        assert!(Axis::simpson(1.0, 1.0, 8).is_err());
    }

    #[test]
    fn grid_weights_cover_span() {
        let grid = prior(PI / 16.0, 0.95).grid().unwrap();
        let (lo, hi) = (grid.phi.nodes[0], *grid.phi.nodes.last().unwrap());
        assert!((hi - lo - 12.0 * PI / 16.0).abs() < 1e-12);
        assert!((grid.phi.weights.iter().sum::<f64>() - grid.phi.span()).abs() < 1e-12);
        assert!((grid.v.weights.iter().sum::<f64>() - grid.v.span()).abs() < 1e-12);
        assert_eq!(grid.node_count(), 513 * 513);
    }

    #[test]
    fn moments_on_grid() {
        let p = prior(PI / 16.0, 0.95);
        let grid = p.grid().unwrap();
        let mass = integrate(|phi, v| p.density(phi, v), &grid).unwrap();
        assert!((mass - 1.0).abs() < 1e-6);
        let mean_phi = integrate(|phi, v| phi * p.density(phi, v), &grid).unwrap();
        assert!((mean_phi - FRAC_PI_4).abs() < 1e-6);
        let mean_v = integrate(|phi, v| v * p.density(phi, v), &grid).unwrap();
        assert!((mean_v - 0.95).abs() < 1e-8);
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let grid = prior(0.1, 0.9).grid().unwrap();
        assert!(matches!(integrate(|_, _| f64::NAN, &grid), Err(Error::NonFinite(_))));
    }

    #[test]
    fn tabulated_prior_is_normalized() {
        let t = prior(PI / 16.0, 0.9).with_resolution(64).tabulate().unwrap();
        let total: f64 = (0..t.grid.phi.len())
            .flat_map(|i| (0..t.grid.v.len()).map(move |j| (i, j)))
            .map(|(i, j)| t.grid.weight(i, j) * t.density[t.grid.index(i, j)])
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((t.mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phase_score_matches_gaussian() {
        let sigma = PI / 16.0;
        let s = phase_score_integral(&prior(sigma, 0.95), 1).unwrap();
        assert!((s - 256.0 / (PI * PI)).abs() < 0.003);
        assert!((s * sigma * sigma - 1.0).abs() < 1e-4);
        let s100 = phase_score_integral(&prior(sigma, 0.95), 100).unwrap();
        assert!((s100 - 0.259368).abs() < 3e-4);
        let huge = phase_score_integral(&prior(sigma, 0.95), 1_000_000_000).unwrap();
        assert!(huge < 1e-7);
        assert!(phase_score_integral(&prior(sigma, 0.95), 0).is_err());
    }

    #[test]
    fn phase_score_ignores_visibility_prior() {
        let a = phase_score_integral(&prior(PI / 16.0, 0.95), 1).unwrap();
        let b = phase_score_integral(&prior(PI / 16.0, 0.7), 1).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn visibility_score_is_finite() {
        for v0 in [0.8, 0.95] {
            let p = prior(PI / 16.0, v0);
            let q = visibility_score_integral(&p).unwrap();
            assert!(q.is_finite());
            assert!((q - p.visibility.score()).abs() / p.visibility.score() < 1e-4);
        }
    }

    #[test]
    fn doubling_grid_is_stable() {
        let p = prior(PI / 16.0, 0.95);
        let coarse = integrate(|phi, v| phi * phi * p.density(phi, v), &p.grid().unwrap()).unwrap();
        let fine = integrate(|phi, v| phi * phi * p.density(phi, v), &p.refined().grid().unwrap()).unwrap();
        assert!((coarse - fine).abs() / fine < 1e-4);
    }
}
