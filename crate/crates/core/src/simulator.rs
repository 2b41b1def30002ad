//! Finite-resource count records for both protocol branches, and the Poisson
//! resampling used by the bootstrap.
//!
//! The phase branch draws exactly `N_Z` events from the eight-outcome joint
//! distribution (Alice H/V × Bob D/A/H/V); the generator branch draws exactly
//! `N_Y` events from the Y⊗Y table. Poisson noise enters only through
//! [`poisson_resample`].

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::qubit_model::{generator_joint, phase_joint, setting_conditional, AliceZ, BobXz, Circular};
use crate::rng::{substream, Stream};

/// How Bob's X/Z setting is chosen per phase-branch event.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingSchedule {
    /// Each event picks X or Z with probability ½.
    #[default]
    Stochastic,
    /// Exactly half of the events (X gets the odd one) use each setting.
    Interleaved,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub visibility: f64,
    pub phase: f64,
    pub n_z: u64,
    pub n_y: u64,
    pub seed: u64,
    #[serde(default)]
    pub schedule: SettingSchedule,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(domain(format!("visibility {} outside [0, 1]", self.visibility)));
        }
        if !self.phase.is_finite() {
            return Err(domain("true phase must be finite"));
        }
        Ok(())
    }
}

/// Phase-branch tallies `n_ba`, stored `[alice][bob]` (Alice H, V; Bob D, A, H, V).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseCounts(pub [[u64; 4]; 2]);

impl PhaseCounts {
    pub fn get(&self, b: BobXz, a: AliceZ) -> u64 {
        self.0[a.index()][b.index()]
    }

    pub fn set(&mut self, b: BobXz, a: AliceZ, n: u64) {
        self.0[a.index()][b.index()] = n;
    }

    /// `n_a = Σ_b n_ba`.
    pub fn alice_total(&self, a: AliceZ) -> u64 {
        self.0[a.index()].iter().sum()
    }

    /// `N_Z`.
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }
}

/// Generator-branch tallies `m_ba`, stored `[bob][alice]` in L, R order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GeneratorCounts(pub [[u64; 2]; 2]);

impl GeneratorCounts {
    pub fn get(&self, b: Circular, a: Circular) -> u64 {
        self.0[b.index()][a.index()]
    }

    /// `m_a = Σ_b m_ba`.
    pub fn alice_total(&self, a: Circular) -> u64 {
        self.0[0][a.index()] + self.0[1][a.index()]
    }

    /// `N_Y`.
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }
}

/// Both branches of one experiment. Serializes to a flat object with labels
/// `n_DH, n_DV, …, n_VV, m_LL, m_LR, m_RL, m_RR` (Bob's outcome first).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "FlatCounts", from = "FlatCounts")]
pub struct CountRecord {
    pub phase: PhaseCounts,
    pub generator: GeneratorCounts,
}

impl CountRecord {
    pub fn n_z(&self) -> u64 {
        self.phase.total()
    }

    pub fn n_y(&self) -> u64 {
        self.generator.total()
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct FlatCounts {
    n_DH: u64,
    n_DV: u64,
    n_AH: u64,
    n_AV: u64,
    n_HH: u64,
    n_HV: u64,
    n_VH: u64,
    n_VV: u64,
    m_LL: u64,
    m_LR: u64,
    m_RL: u64,
    m_RR: u64,
}

impl From<CountRecord> for FlatCounts {
    fn from(r: CountRecord) -> Self {
        use AliceZ as Az;
        use BobXz as B;
        use Circular::{L, R};
        let (p, g) = (r.phase, r.generator);
        FlatCounts {
            n_DH: p.get(B::D, Az::H),
            n_DV: p.get(B::D, Az::V),
            n_AH: p.get(B::A, Az::H),
            n_AV: p.get(B::A, Az::V),
            n_HH: p.get(B::H, Az::H),
            n_HV: p.get(B::H, Az::V),
            n_VH: p.get(B::V, Az::H),
            n_VV: p.get(B::V, Az::V),
            m_LL: g.get(L, L),
            m_LR: g.get(L, R),
            m_RL: g.get(R, L),
            m_RR: g.get(R, R),
        }
    }
}

impl From<FlatCounts> for CountRecord {
    fn from(f: FlatCounts) -> Self {
        CountRecord {
            phase: PhaseCounts([
                [f.n_DH, f.n_AH, f.n_HH, f.n_VH],
                [f.n_DV, f.n_AV, f.n_HV, f.n_VV],
            ]),
            generator: GeneratorCounts([[f.m_LL, f.m_LR], [f.m_RL, f.m_RR]]),
        }
    }
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, q).expect("probability clamped to [0, 1]").sample(rng);
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

/// Poisson draw with mean `lambda ≥ 0`.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive finite mean").sample(rng) as u64
}

fn phase_counts_with<R: Rng + ?Sized>(rng: &mut R, config: &ExperimentConfig) -> PhaseCounts {
    let (phi, v) = (config.phase, config.visibility);
    let mut counts = PhaseCounts::default();
    match config.schedule {
        SettingSchedule::Stochastic => {
            let probs: Vec<f64> = AliceZ::ALL
                .iter()
                .flat_map(|&a| BobXz::ALL.iter().map(move |&b| phase_joint(a, b, phi, v)))
                .collect();
            let draws = multinomial(rng, config.n_z, &probs);
            for (k, n) in draws.into_iter().enumerate() {
                counts.0[k / 4][k % 4] = n;
            }
        }
        SettingSchedule::Interleaved => {
            let n_x = config.n_z.div_ceil(2);
            for (bobs, n) in [([BobXz::D, BobXz::A], n_x), ([BobXz::H, BobXz::V], config.n_z - n_x)] {
                let cells: Vec<(AliceZ, BobXz)> = AliceZ::ALL
                    .iter()
                    .flat_map(|&a| bobs.iter().map(move |&b| (a, b)))
                    .collect();
                let probs: Vec<f64> = cells.iter().map(|&(a, b)| 0.5 * setting_conditional(a, b, phi, v)).collect();
                for ((a, b), k) in cells.into_iter().zip(multinomial(rng, n, &probs)) {
                    counts.set(b, a, k);
                }
            }
        }
    }
    counts
}

fn generator_counts_with<R: Rng + ?Sized>(rng: &mut R, config: &ExperimentConfig) -> GeneratorCounts {
    let table = generator_joint(config.visibility);
    let probs = [table[0][0], table[0][1], table[1][0], table[1][1]];
    let d = multinomial(rng, config.n_y, &probs);
    GeneratorCounts([[d[0], d[1]], [d[2], d[3]]])
}

/// `N_Z` phase-branch events at `(v, φ_true)`.
pub fn simulate_phase_branch(config: &ExperimentConfig) -> Result<PhaseCounts> {
    config.validate()?;
    let mut rng = substream(config.seed, Stream::PhaseBranch, 0);
    Ok(phase_counts_with(&mut rng, config))
}

/// `N_Y` generator-branch events (Alice Y, Bob Y) at visibility `v`.
pub fn simulate_generator_branch(config: &ExperimentConfig) -> Result<GeneratorCounts> {
    config.validate()?;
    let mut rng = substream(config.seed, Stream::GeneratorBranch, 0);
    Ok(generator_counts_with(&mut rng, config))
}

/// Both branches, on decorrelated substreams of `config.seed`.
pub fn simulate(config: &ExperimentConfig) -> Result<CountRecord> {
    Ok(CountRecord {
        phase: simulate_phase_branch(config)?,
        generator: simulate_generator_branch(config)?,
    })
}

/// Replaces every tally by a Poisson draw with that tally as its mean.
pub fn poisson_resample(counts: &CountRecord, seed: u64) -> CountRecord {
    let mut rng = substream(seed, Stream::Resample, 0);
    let mut out = *counts;
    for row in out.phase.0.iter_mut() {
        for n in row.iter_mut() {
            *n = poisson(&mut rng, *n as f64);
        }
    }
    for row in out.generator.0.iter_mut() {
        for n in row.iter_mut() {
            *n = poisson(&mut rng, *n as f64);
        }
    }
    out
}

/// Poisson resample of the generator branch only.
pub fn poisson_resample_generator<R: Rng + ?Sized>(rng: &mut R, counts: &GeneratorCounts) -> GeneratorCounts {
    let mut out = *counts;
    for row in out.0.iter_mut() {
        for n in row.iter_mut() {
            *n = poisson(rng, *n as f64);
        }
    }
    out
}
