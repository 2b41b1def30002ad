//! Bayesian estimation of `(φ, v)` from phase-branch counts, and the direct
//! reconstruction of Bob's conditional `Y` variance from generator-branch counts.
//!
//! Posterior moments are computed per Alice outcome by quadrature. A first pass
//! runs on the prior's grid, using a precomputed table of `log p(b|a)` per node.
//! Later passes zoom onto a box of ±[`ZOOM_SIGMAS`] posterior standard
//! deviations (clipped to the prior's support) until the box is resolved, so
//! that narrow posteriors at large `N_Z` are still sampled finely.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{Axis, JointPrior, QuadratureGrid};
use crate::qubit_model::{phase_conditional, AliceZ, BobXz, Circular};
use crate::simulator::{GeneratorCounts, PhaseCounts};

/// Half-width of the zoomed integration box, in posterior standard deviations.
pub const ZOOM_SIGMAS: f64 = 10.0;

/// Intervals per axis on the zoomed box.
pub const DEFAULT_ZOOM_RESOLUTION: usize = 128;

/// Probabilities below this make the log-likelihood `−∞`.
pub const MIN_LIKELIHOOD_PROBABILITY: f64 = 1e-300;

const MAX_ZOOM_PASSES: usize = 4;

/// Largest standard grid for which the log-probability table is cached.
const MAX_TABLE_NODES: usize = 1 << 21;

/// `log H_a(φ, v) = Σ_b n_ba log p(b|a)`.
pub fn log_conditional_likelihood(counts: &PhaseCounts, a: AliceZ, phi: f64, v: f64) -> f64 {
    let mut ll = 0.0;
    for b in BobXz::ALL {
        let n = counts.get(b, a);
        if n == 0 {
            continue;
        }
        let p = phase_conditional(a, b, phi, v);
        if p < MIN_LIKELIHOOD_PROBABILITY {
            return f64::NEG_INFINITY;
        }
        ll += n as f64 * p.ln();
    }
    ll
}

/// `H_a(φ, v) = Π_b p(b|a)^{n_ba}`. Underflows for large counts; prefer the log form.
pub fn conditional_likelihood(counts: &PhaseCounts, a: AliceZ, phi: f64, v: f64) -> f64 {
    log_conditional_likelihood(counts, a, phi, v).exp()
}

/// Posterior moments for one Alice outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomePosterior {
    pub alice: AliceZ,
    /// `n_a`.
    pub events: u64,
    pub phi_mean: f64,
    pub phi_var: f64,
    pub v_mean: f64,
    pub v_var: f64,
    /// `log ∫ P H_a`.
    pub log_evidence: f64,
}

/// Per-Alice-outcome posteriors, in `H, V` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub outcomes: [OutcomePosterior; 2],
}

impl PosteriorSummary {
    pub fn outcome(&self, a: AliceZ) -> &OutcomePosterior {
        &self.outcomes[a.index()]
    }
}

/// Occurrence-weighted combination of the per-outcome posteriors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    /// `φ̄_cond = Σ_a w_a φ̄_a`.
    pub phi: f64,
    /// `Δ²φ_cond = Σ_a w_a² Δ²_a φ`.
    pub var_phi: f64,
    /// `v̄_cond = Σ_a w_a v̄_a`.
    pub v: f64,
    /// `w_a = n_a / N_Z`.
    pub weights: [f64; 2],
    pub posterior: PosteriorSummary,
}

#[derive(Clone, Copy, Debug)]
struct Moments {
    phi_mean: f64,
    phi_var: f64,
    v_mean: f64,
    v_var: f64,
    log_evidence: f64,
}

/// Bayesian estimator bound to one prior and its quadrature grid.
#[derive(Clone, Debug)]
pub struct Estimator {
    prior: JointPrior,
    grid: QuadratureGrid,
    log_prior: Vec<f64>,
    /// Per node: `log p` for `(1 + v cos φ)`, `(1 − v cos φ)`, `(1 − v sin φ)`, `(1 + v sin φ)`, each over 4.
    table: Option<Vec<[f64; 4]>>,
    zoom_resolution: usize,
}

/// Index into the per-node table for `p(b|a)`. Alice's `V` row is Alice's `H`
/// row with `D↔A` and `H↔V` exchanged.
fn table_slot(a: AliceZ, b: BobXz) -> usize {
    let h = match b {
        BobXz::D => 0,
        BobXz::A => 1,
        BobXz::H => 2,
        BobXz::V => 3,
    };
    match a {
        AliceZ::H => h,
        AliceZ::V => h ^ 1,
    }
}

fn node_logs(phi: f64, v: f64) -> [f64; 4] {
    let (s, c) = phi.sin_cos();
    let log = |p: f64| if p < MIN_LIKELIHOOD_PROBABILITY { f64::NEG_INFINITY } else { p.ln() };
    [
        log(0.25 * (1.0 + v * c)),
        log(0.25 * (1.0 - v * c)),
        log(0.25 * (1.0 - v * s)),
        log(0.25 * (1.0 + v * s)),
    ]
}

fn log_density(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn dot(n: &[f64; 4], logs: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for k in 0..4 {
        if n[k] > 0.0 {
            s += n[k] * logs[k];
        }
    }
    s
}

impl Estimator {
    pub fn new(prior: &JointPrior) -> Result<Self> {
        let grid = prior.grid()?;
        let mut log_prior = Vec::with_capacity(grid.node_count());
        for &phi in &grid.phi.nodes {
            for &v in &grid.v.nodes {
                log_prior.push(log_density(prior.density(phi, v)));
            }
        }
        let table = (grid.node_count() <= MAX_TABLE_NODES).then(|| {
            let mut t = Vec::with_capacity(grid.node_count());
            for &phi in &grid.phi.nodes {
                for &v in &grid.v.nodes {
                    t.push(node_logs(phi, v));
                }
            }
            t
        });
        Ok(Self { prior: *prior, grid, log_prior, table, zoom_resolution: DEFAULT_ZOOM_RESOLUTION })
    }

    pub fn with_zoom_resolution(mut self, intervals: usize) -> Self {
        self.zoom_resolution = intervals;
        self
    }

    pub fn prior(&self) -> &JointPrior {
        &self.prior
    }

    /// Per-outcome posterior means and variances.
    pub fn posterior(&self, counts: &PhaseCounts) -> Result<PosteriorSummary> {
        let one = |a: AliceZ| -> Result<OutcomePosterior> {
            let m = self.outcome_moments(counts, a)?;
            Ok(OutcomePosterior {
                alice: a,
                events: counts.alice_total(a),
                phi_mean: m.phi_mean,
                phi_var: m.phi_var,
                v_mean: m.v_mean,
                v_var: m.v_var,
                log_evidence: m.log_evidence,
            })
        };
        Ok(PosteriorSummary { outcomes: [one(AliceZ::H)?, one(AliceZ::V)?] })
    }

    /// Conditional Bayes estimate combining both Alice outcomes.
    pub fn conditional(&self, counts: &PhaseCounts) -> Result<EstimationResult> {
        let total = counts.total();
        if total == 0 {
            return Err(Error::Degenerate("conditional estimate needs N_Z > 0".into()));
        }
        let posterior = self.posterior(counts)?;
        Ok(combine(posterior, total))
    }

    fn outcome_moments(&self, counts: &PhaseCounts, a: AliceZ) -> Result<Moments> {
        let mut n = [0.0; 4];
        for b in BobXz::ALL {
            n[table_slot(a, b)] = counts.get(b, a) as f64;
        }

        let first = match &self.table {
            Some(table) => moments(&self.grid.phi, &self.grid.v, |idx, _, _| {
                self.log_prior[idx] + dot(&n, &table[idx])
            }),
            None => moments(&self.grid.phi, &self.grid.v, |idx, phi, v| {
                self.log_prior[idx] + dot(&n, &node_logs(phi, v))
            }),
        }?;

        let (phi_lo, phi_hi) = (self.grid.phi.nodes[0], *self.grid.phi.nodes.last().unwrap());
        let (v_lo, v_hi) = (self.grid.v.nodes[0], *self.grid.v.nodes.last().unwrap());
        let (h_phi, h_v) = (
            self.grid.phi.span() / self.grid.phi.len() as f64,
            self.grid.v.span() / self.grid.v.len() as f64,
        );

        let mut current = first;
        let mut floor = (2.0 * h_phi, 2.0 * h_v);
        let mut last_box: Option<(f64, f64, f64, f64)> = None;
        for _ in 0..MAX_ZOOM_PASSES {
            let half_phi = ZOOM_SIGMAS * current.phi_var.sqrt().max(floor.0);
            let half_v = ZOOM_SIGMAS * current.v_var.sqrt().max(floor.1);
            let bx = (
                (current.phi_mean - half_phi).max(phi_lo),
                (current.phi_mean + half_phi).min(phi_hi),
                (current.v_mean - half_v).max(v_lo),
                (current.v_mean + half_v).min(v_hi),
            );
            if last_box == Some(bx) {
                break;
            }
            let phi_axis = Axis::simpson(bx.0, bx.1, self.zoom_resolution)?;
            let v_axis = Axis::simpson(bx.2, bx.3, self.zoom_resolution)?;
            let prior = &self.prior;
            let next = moments(&phi_axis, &v_axis, |_, phi, v| {
                log_density(prior.density(phi, v)) + dot(&n, &node_logs(phi, v))
            })?;
            let resolved = next.phi_var.sqrt() * ZOOM_SIGMAS * 1.5 >= 0.5 * (bx.1 - bx.0).min(half_phi)
                && next.v_var.sqrt() * ZOOM_SIGMAS * 1.5 >= 0.5 * (bx.3 - bx.2).min(half_v);
            current = next;
            last_box = Some(bx);
            floor = (phi_axis.span() / self.zoom_resolution as f64, v_axis.span() / self.zoom_resolution as f64);
            if resolved {
                break;
            }
        }
        Ok(current)
    }
}

/// Posterior moments on a tensor Simpson grid, given `log P + log H` per node.
fn moments<F>(phi: &Axis, v: &Axis, log_post: F) -> Result<Moments>
where
    F: Fn(usize, f64, f64) -> f64,
{
    let (np, nv) = (phi.len(), v.len());
    let mut lp = Vec::with_capacity(np * nv);
    let mut max = f64::NEG_INFINITY;
    for i in 0..np {
        for j in 0..nv {
            let x = log_post(i * nv + j, phi.nodes[i], v.nodes[j]);
            if x > max {
                max = x;
            }
            lp.push(x);
        }
    }
    if !max.is_finite() {
        return Err(Error::Degenerate("likelihood vanishes on the whole prior grid".into()));
    }
    let (mut z, mut s_phi, mut s_v) = (0.0, 0.0, 0.0);
    for i in 0..np {
        for j in 0..nv {
            let w = phi.weights[i] * v.weights[j] * (lp[i * nv + j] - max).exp();
            lp[i * nv + j] = w;
            z += w;
            s_phi += w * phi.nodes[i];
            s_v += w * v.nodes[j];
        }
    }
    if !(z > MIN_LIKELIHOOD_PROBABILITY) {
        return Err(Error::Degenerate(format!("normalized evidence {z:e} too small")));
    }
    let (phi_mean, v_mean) = (s_phi / z, s_v / z);
    let (mut q_phi, mut q_v) = (0.0, 0.0);
    for i in 0..np {
        let dp = phi.nodes[i] - phi_mean;
        for j in 0..nv {
            let w = lp[i * nv + j];
            let dv = v.nodes[j] - v_mean;
            q_phi += w * dp * dp;
            q_v += w * dv * dv;
        }
    }
    Ok(Moments {
        phi_mean,
        phi_var: q_phi / z,
        v_mean,
        v_var: q_v / z,
        log_evidence: max + z.ln(),
    })
}

fn combine(posterior: PosteriorSummary, total: u64) -> EstimationResult {
    let mut weights = [0.0; 2];
    let (mut phi, mut var_phi, mut v) = (0.0, 0.0, 0.0);
    for a in AliceZ::ALL {
        let o = posterior.outcome(a);
        let w = o.events as f64 / total as f64;
        weights[a.index()] = w;
        phi += w * o.phi_mean;
        var_phi += w * w * o.phi_var;
        v += w * o.v_mean;
    }
    EstimationResult { phi, var_phi, v, weights, posterior }
}

/// Per-outcome posterior moments for `counts` under `prior`.
pub fn bayes_estimate(counts: &PhaseCounts, prior: &JointPrior) -> Result<PosteriorSummary> {
    Estimator::new(prior)?.posterior(counts)
}

/// Conditional Bayes estimate of `φ` and its variance.
pub fn conditional_bayes_estimate(counts: &PhaseCounts, prior: &JointPrior) -> Result<EstimationResult> {
    Estimator::new(prior)?.conditional(counts)
}

/// How the conditional `Y` variance is formed from the per-outcome means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorVarianceForm {
    /// `Σ_a (m_a/N_Y)(1 − Ȳ_a²)`; reproduces `1 − v²` for the model state.
    #[default]
    PerOutcome,
    /// `1 − Y_cond²` with `Y_cond = Σ_a (m_a/N_Y) Ȳ_a`; equals one for a singlet.
    Literal,
}

/// Bob's `Y` statistics conditioned on Alice's `Y` outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEstimate {
    /// `Ȳ_L`, absent when Alice never saw `L`.
    pub y_l: Option<f64>,
    /// `Ȳ_R`, absent when Alice never saw `R`.
    pub y_r: Option<f64>,
    pub delta2_y_cond: f64,
    pub m_l: u64,
    pub m_r: u64,
}

/// `Ȳ_a` and `Δ²Y_cond` from generator-branch counts.
pub fn reconstruct_generator(counts: &GeneratorCounts) -> Result<GeneratorEstimate> {
    reconstruct_generator_with(counts, GeneratorVarianceForm::PerOutcome)
}

pub fn reconstruct_generator_with(counts: &GeneratorCounts, form: GeneratorVarianceForm) -> Result<GeneratorEstimate> {
    let n_y = counts.total();
    if n_y == 0 {
        return Err(Error::Degenerate("generator reconstruction needs N_Y > 0".into()));
    }
    let mean = |a: Circular| -> Option<f64> {
        let m = counts.alice_total(a);
        (m > 0).then(|| {
            (counts.get(Circular::L, a) as f64 - counts.get(Circular::R, a) as f64) / m as f64
        })
    };
    let (y_l, y_r) = (mean(Circular::L), mean(Circular::R));
    let (m_l, m_r) = (counts.alice_total(Circular::L), counts.alice_total(Circular::R));
    let w = |m: u64| m as f64 / n_y as f64;
    let delta2 = match form {
        GeneratorVarianceForm::PerOutcome => {
            let term = |y: Option<f64>, m: u64| y.map_or(0.0, |y| w(m) * (1.0 - y * y));
            term(y_l, m_l) + term(y_r, m_r)
        }
        GeneratorVarianceForm::Literal => {
            let y_cond = y_l.unwrap_or(0.0) * w(m_l) + y_r.unwrap_or(0.0) * w(m_r);
            1.0 - y_cond * y_cond
        }
    };
    if m_l == 0 || m_r == 0 {
        warn!("generator branch saw only one Alice outcome; the other contributes weight 0");
    }
    Ok(GeneratorEstimate { y_l, y_r, delta2_y_cond: delta2.clamp(0.0, 1.0), m_l, m_r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{PhasePrior, VisibilityPrior};
    use crate::simulator::{simulate, simulate_phase_branch, ExperimentConfig, SettingSchedule};
    use rayon::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn prior(sigma: f64, v0: f64) -> JointPrior {
        JointPrior::new(PhasePrior::new(FRAC_PI_4, sigma).unwrap(), VisibilityPrior::new(v0).unwrap())
    }

    fn config(v: f64, n_z: u64, n_y: u64, seed: u64) -> ExperimentConfig {
        ExperimentConfig { visibility: v, phase: FRAC_PI_4, n_z, n_y, seed, schedule: SettingSchedule::Stochastic }
    }

    #[test]
    fn likelihood_edge_cases() {
        let empty = PhaseCounts::default();
        assert_eq!(conditional_likelihood(&empty, AliceZ::H, 0.3, 0.7), 1.0);
        let mut one = PhaseCounts::default();
        one.set(BobXz::H, AliceZ::V, 1);
        let p = phase_conditional(AliceZ::V, BobXz::H, 0.3, 0.7);
        assert!((conditional_likelihood(&one, AliceZ::V, 0.3, 0.7) - p).abs() < 1e-15);
        // p(A|H) = (1 − cos φ)/4 vanishes at v = 1, φ = 0.
        let mut zero = PhaseCounts::default();
        zero.set(BobXz::A, AliceZ::H, 2);
        assert_eq!(log_conditional_likelihood(&zero, AliceZ::H, 0.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn table_slots_reproduce_model() {
        for a in AliceZ::ALL {
            for b in BobXz::ALL {
                let (phi, v) = (0.37, 0.83);
                let logs = node_logs(phi, v);
                assert!((logs[table_slot(a, b)] - phase_conditional(a, b, phi, v).ln()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_counts_return_prior() {
        let p = prior(PI / 16.0, 0.95);
        let s = bayes_estimate(&PhaseCounts::default(), &p).unwrap();
        let sigma2 = (PI / 16.0) * (PI / 16.0);
        for o in s.outcomes {
            assert!((o.phi_mean - FRAC_PI_4).abs() < 1e-10);
            assert!((o.phi_var - sigma2).abs() < 1e-8, "{}", o.phi_var - sigma2);
            assert!((o.v_mean - 0.95).abs() < 1e-8);
            assert!(o.log_evidence.abs() < 1e-7);
        }
        assert!(matches!(conditional_bayes_estimate(&PhaseCounts::default(), &p), Err(Error::Degenerate(_))));
    }

    /// Posterior mean of φ by a midpoint rule on a `m × m` grid over the full
    /// prior window, straight from the likelihood definition.
    #[allow(clippy::type_complexity)]
    fn dense_oracle(counts: &PhaseCounts, a: AliceZ, p: &JointPrior, m: usize) -> (f64, f64, (f64, f64)) {
        let (plo, phi_hi) = p.phase.window();
        let (vlo, vhi) = p.visibility.support();
        let (dphi, dv) = ((phi_hi - plo) / m as f64, (vhi - vlo) / m as f64);
        let rows: Vec<(f64, (f64, (f64, f64)), f64, f64)> = (0..m)
            .into_par_iter()
            .map(|i| {
                let phi = plo + (i as f64 + 0.5) * dphi;
                let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
                let lls: Vec<f64> = (0..m)
                    .map(|j| {
                        let v = vlo + (j as f64 + 0.5) * dv;
                        let ll = log_conditional_likelihood(counts, a, phi, v);
                        if ll > best.0 {
                            best = (ll, (phi, v));
                        }
                        ll + p.density(phi, v).ln()
                    })
                    .collect();
                let mx = lls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let (mut z, mut s) = (0.0, 0.0);
                for ll in lls {
                    let w = (ll - mx).exp();
                    z += w;
                    s += w * phi;
                }
                (mx, best, z, s)
            })
            .collect();
        let gmax = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut s) = (0.0, 0.0);
        let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
        for (mx, b, zr, sr) in rows {
            let k = (mx - gmax).exp();
            z += k * zr;
            s += k * sr;
            if b.0 > best.0 {
                best = b;
            }
        }
        (s / z, z, best.1)
    }

    #[test]
    fn matches_dense_grid_oracle() {
        let p = prior(PI / 16.0, 0.95);
        let counts = simulate_phase_branch(&config(0.97, 1000, 0, 2024)).unwrap();
        let summary = bayes_estimate(&counts, &p).unwrap();
        for a in AliceZ::ALL {
            let (mean, _, argmax) = dense_oracle(&counts, a, &p, 4096);
            let o = summary.outcome(a);
            assert!((o.phi_mean - mean).abs() < 1e-6, "{a:?}: {} vs {mean}", o.phi_mean);
            // Maximum-likelihood point of H_a is within 3 posterior SDs of the truth.
            assert!((argmax.0 - FRAC_PI_4).abs() < 3.0 * o.phi_var.sqrt());
        }
    }

    #[test]
    fn joint_likelihood_peak_near_truth() {
        let p = prior(PI / 16.0, 0.95);
        let counts = simulate_phase_branch(&config(0.97, 1000, 0, 7)).unwrap();
        let r = conditional_bayes_estimate(&counts, &p).unwrap();
        let (plo, phi_hi) = p.phase.window();
        let m = 4096;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..m {
            let phi = plo + (i as f64 + 0.5) * (phi_hi - plo) / m as f64;
            let ll = log_conditional_likelihood(&counts, AliceZ::H, phi, 0.97)
                + log_conditional_likelihood(&counts, AliceZ::V, phi, 0.97);
            if ll > best.0 {
                best = (ll, phi);
            }
        }
        assert!((best.1 - FRAC_PI_4).abs() < 3.0 * r.var_phi.sqrt());
    }

    #[test]
    fn stable_under_grid_refinement() {
        let p = prior(PI / 16.0, 0.95);
        for n_z in [100, 3000, 100_000] {
            let counts = simulate_phase_branch(&config(0.97, n_z, 0, 31)).unwrap();
            let coarse = Estimator::new(&p).unwrap().posterior(&counts).unwrap();
            let fine = Estimator::new(&p.with_resolution(4 * p.resolution))
                .unwrap()
                .with_zoom_resolution(4 * DEFAULT_ZOOM_RESOLUTION)
                .posterior(&counts)
                .unwrap();
            for a in AliceZ::ALL {
                let (c, f) = (coarse.outcome(a), fine.outcome(a));
                let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
                assert!(rel(c.phi_mean, f.phi_mean) < 1e-6, "N={n_z} mean");
                assert!(rel(c.phi_var, f.phi_var) < 1e-6, "N={n_z} var {} {}", c.phi_var, f.phi_var);
                assert!(rel(c.v_mean, f.v_mean) < 1e-6, "N={n_z} v");
            }
        }
    }

    #[test]
    fn posterior_variance_shrinks_on_average() {
        let p = prior(PI / 16.0, 0.95);
        let est = Estimator::new(&p).unwrap();
        let sigma2 = (PI / 16.0) * (PI / 16.0);
        let mean: f64 = (0..100)
            .map(|s| {
                let c = simulate_phase_branch(&config(0.97, 50, 0, s)).unwrap();
                est.posterior(&c).unwrap().outcomes.iter().map(|o| o.phi_var).sum::<f64>() / 2.0
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean < sigma2);
    }

    #[test]
    fn conditional_combination() {
        let p = prior(PI / 16.0, 0.95);
        let est = Estimator::new(&p).unwrap();
        let mut only_h = PhaseCounts::default();
        only_h.0[0] = [40, 3, 25, 20];
        let r = est.conditional(&only_h).unwrap();
        let h = r.posterior.outcome(AliceZ::H);
        assert_eq!(r.weights, [1.0, 0.0]);
        assert_eq!((r.phi, r.var_phi, r.v), (h.phi_mean, h.phi_var, h.v_mean));

        // Mirrored record: V sees the H counts with D↔A and H↔V swapped.
        let mut sym = PhaseCounts::default();
        sym.0[0] = [40, 3, 25, 20];
        sym.0[1] = [3, 40, 20, 25];
        let r = est.conditional(&sym).unwrap();
        let (h, v) = (r.posterior.outcome(AliceZ::H), r.posterior.outcome(AliceZ::V));
        assert!((h.phi_var - v.phi_var).abs() < 1e-12 * h.phi_var);
        assert!((r.var_phi - h.phi_var / 2.0).abs() < 1e-12 * h.phi_var);
        assert_eq!(r.weights[0] + r.weights[1], 1.0);
    }

    #[test]
    fn conditional_variance_not_above_outcome_variances() {
        let p = prior(PI / 16.0, 0.95);
        let est = Estimator::new(&p).unwrap();
        for s in 0..10 {
            let c = simulate_phase_branch(&config(0.9, 300, 0, s)).unwrap();
            let r = est.conditional(&c).unwrap();
            let max = r.posterior.outcomes.iter().map(|o| o.phi_var).fold(0.0, f64::max);
            assert!(r.var_phi <= max);
        }
    }

    #[test]
    fn generator_arithmetic() {
        let g = GeneratorCounts([[1, 49], [49, 1]]);
        let e = reconstruct_generator(&g).unwrap();
        assert!((e.y_l.unwrap() + 0.96).abs() < 1e-15);
        assert!((e.y_r.unwrap() - 0.96).abs() < 1e-15);
        assert!((e.delta2_y_cond - 0.0784).abs() < 1e-12);
        assert_eq!((e.m_l, e.m_r), (50, 50));

        let literal = reconstruct_generator_with(&g, GeneratorVarianceForm::Literal).unwrap();
        assert!((literal.delta2_y_cond - 1.0).abs() < 1e-12);

        let perfect = reconstruct_generator(&GeneratorCounts([[0, 30], [20, 0]])).unwrap();
        assert_eq!(perfect.delta2_y_cond, 0.0);

        let one_sided = reconstruct_generator(&GeneratorCounts([[5, 0], [15, 0]])).unwrap();
        assert_eq!(one_sided.y_r, None);
        assert!((one_sided.delta2_y_cond - 0.75).abs() < 1e-12);

        assert!(reconstruct_generator(&GeneratorCounts::default()).is_err());
    }

    #[test]
    fn generator_variance_tracks_model() {
        for v in [0.0, 0.5, 0.8, 0.97] {
            let n_y = if v == 0.0 { 100_000 } else { 495 };
            let reps = if v == 0.0 { 1 } else { 1000 };
            let vals: Vec<f64> = (0..reps)
                .map(|s| {
                    let r = simulate(&config(v, 0, n_y, s)).unwrap();
                    reconstruct_generator(&r.generator).unwrap().delta2_y_cond
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let target = 1.0 - v * v;
            if reps == 1 {
                assert!((mean - target).abs() < 0.01);
                continue;
            }
            let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            // The plug-in estimator is biased low by (1 − v²)·2/N_Y.
            assert!((mean - target).abs() < 4.0 * se + 2.0 * target / n_y as f64, "v={v}: {mean} vs {target}");
        }
    }
}
