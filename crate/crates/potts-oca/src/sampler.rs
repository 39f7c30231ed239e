//! Field samplers: direct joint draws from the ordered conditional
//! approximation, Swendsen-Wang cluster updates, and an exact
//! enumeration sampler for tiny grids.
//!
//! Reproducibility contract: each sampler consumes its generator in a
//! documented order. `oca_sample` draws one uniform per site in
//! ordering sequence. `swendsen_wang_step` draws one uniform per
//! agreeing neighbor pair in the lattice's canonical pair order, then
//! one label per cluster in first-encounter site order. Replicated
//! experiments put each replicate on its own RNG stream, so replicate
//! parallelism never changes any draw.

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::lattice::{Lattice, OcaPlan};
use crate::math::next_digits;
use crate::potts::{log_potential, oca_conditional, summary_stat, PottsParams};
use crate::rng::replicate_rng;

/// Exact enumeration samplers refuse once K^n exceeds this.
const SAMPLE_GUARD_LOG2: f64 = 20.0;

pub(crate) fn draw_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> u8 {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return k as u8;
        }
    }
    (probs.len() - 1) as u8
}

/// Draws one field from the OCA joint density in a single ordered pass:
/// site i is sampled from its ordered conditional given the labels
/// already drawn. No burn-in; every call is an independent draw.
pub fn oca_sample<R: Rng>(plan: &OcaPlan, params: PottsParams, rng: &mut R) -> Result<Vec<u8>> {
    let n = plan.lattice().len();
    let mut z = vec![0u8; n];
    for i in 0..n {
        let probs = oca_conditional(plan, params, &z, i)?;
        z[i] = draw_categorical(rng, &probs);
    }
    Ok(z)
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let grand = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = grand;
            i = grand;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins: keeps the representative deterministic
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi as usize] = lo;
        }
    }
}

/// One Swendsen-Wang cluster update. Each agreeing neighbor pair bonds
/// independently with probability 1 - exp(-beta); every connected
/// component is then relabeled uniformly over the K classes. Leaves the
/// exact Potts distribution invariant.
pub fn swendsen_wang_step<R: Rng>(
    lattice: Lattice,
    params: PottsParams,
    z: &mut [u8],
    rng: &mut R,
) {
    debug_assert_eq!(z.len(), lattice.len());
    let p_bond = 1.0 - (-params.beta()).exp();
    let mut sets = DisjointSets::new(z.len());
    for (i, j) in lattice.neighbor_pairs() {
        if z[i] == z[j] && rng.gen::<f64>() < p_bond {
            sets.union(i as u32, j as u32);
        }
    }
    const UNSET: u16 = u16::MAX;
    let mut root_label = vec![UNSET; z.len()];
    for i in 0..z.len() {
        let r = sets.find(i as u32) as usize;
        if root_label[r] == UNSET {
            root_label[r] = rng.gen_range(0..params.k() as u16);
        }
        z[i] = root_label[r] as u8;
    }
}

/// Uniform random field followed by `sweeps` Swendsen-Wang updates.
pub fn swendsen_wang_run<R: Rng>(
    lattice: Lattice,
    params: PottsParams,
    sweeps: usize,
    rng: &mut R,
) -> Vec<u8> {
    let mut z: Vec<u8> = (0..lattice.len())
        .map(|_| rng.gen_range(0..params.k() as u8))
        .collect();
    for _ in 0..sweeps {
        swendsen_wang_step(lattice, params, &mut z, rng);
    }
    z
}

/// Samples exactly from the Potts distribution by enumerating every
/// configuration once and inverting the CDF per draw. Configurations
/// are indexed with site 0 as the least significant base-K digit.
pub struct ExactSampler {
    lattice: Lattice,
    k: usize,
    cum: Vec<f64>,
}

impl ExactSampler {
    pub fn new(lattice: Lattice, params: PottsParams) -> Result<ExactSampler> {
        crate::potts::check_enumerable(params.k(), lattice.len(), SAMPLE_GUARD_LOG2)?;
        let count = (params.k() as u64).pow(lattice.len() as u32) as usize;
        let mut weights = Vec::with_capacity(count);
        let mut scratch = vec![0u8; lattice.len()];
        loop {
            weights.push(log_potential(lattice, &scratch, params.beta()).exp());
            if !next_digits(&mut scratch, params.k() as u8) {
                break;
            }
        }
        let total: f64 = weights.iter().sum();
        let mut cum = weights;
        let mut running = 0.0;
        for w in cum.iter_mut() {
            running += *w / total;
            *w = running;
        }
        Ok(ExactSampler {
            lattice,
            k: params.k(),
            cum,
        })
    }

    /// Probability of each configuration index.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut probs = self.cum.clone();
        for i in (1..probs.len()).rev() {
            probs[i] -= probs[i - 1];
        }
        probs
    }

    /// Index of a configuration in enumeration order.
    pub fn config_index(&self, labels: &[u8]) -> usize {
        debug_assert_eq!(labels.len(), self.lattice.len());
        let mut idx = 0usize;
        for &l in labels.iter().rev() {
            idx = idx * self.k + l as usize;
        }
        idx
    }

    pub fn config_count(&self) -> usize {
        self.cum.len()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<u8> {
        let u: f64 = rng.gen();
        let idx = self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1);
        let mut labels = vec![0u8; self.lattice.len()];
        let mut rest = idx;
        for l in labels.iter_mut() {
            *l = (rest % self.k) as u8;
            rest /= self.k;
        }
        labels
    }
}

/// Reference sampler for summary-statistic experiments.
pub enum FieldSampler<'a> {
    /// Single-pass OCA joint draw.
    Oca(&'a OcaPlan),
    /// Uniform init followed by this many Swendsen-Wang sweeps.
    SwendsenWang { sweeps: usize },
}

/// One replicate's agreement statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub beta: f64,
    pub replicate: u64,
    pub stat: u64,
}

/// Mean and standard deviation of S(z) per beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub beta: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Draws `replicates` independent fields per beta and records S(z) for
/// each. Replicate (b, r) runs on RNG stream b*replicates + r of
/// `seed`, so results do not depend on the parallel schedule.
pub fn summary_experiment(
    lattice: Lattice,
    k_states: usize,
    betas: &[f64],
    replicates: u64,
    sampler: &FieldSampler,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    let cases: Vec<(usize, u64)> = (0..betas.len())
        .flat_map(|b| (0..replicates).map(move |r| (b, r)))
        .collect();
    cases
        .into_par_iter()
        .map(|(b, r)| {
            let params = PottsParams::new(k_states, betas[b])?;
            let mut rng = replicate_rng(seed, b as u64 * replicates + r);
            let z = match sampler {
                FieldSampler::Oca(plan) => oca_sample(plan, params, &mut rng)?,
                FieldSampler::SwendsenWang { sweeps } => {
                    swendsen_wang_run(lattice, params, *sweeps, &mut rng)
                }
            };
            Ok(SampleRecord {
                beta: betas[b],
                replicate: r,
                stat: summary_stat(lattice, &z),
            })
        })
        .collect()
}

/// Groups records by beta (in first-appearance order) and reports the
/// sample mean and standard deviation (n-1 denominator) of S(z).
pub fn summarize(records: &[SampleRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for rec in records {
        match groups.iter_mut().find(|(b, _)| *b == rec.beta) {
            Some((_, stats)) => stats.push(rec.stat as f64),
            None => groups.push((rec.beta, vec![rec.stat as f64])),
        }
    }
    groups
        .into_iter()
        .map(|(beta, stats)| {
            let n = stats.len() as f64;
            let mean = stats.iter().sum::<f64>() / n;
            let var = if stats.len() > 1 {
                stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                beta,
                mean,
                sd: var.sqrt(),
            }
        })
        .collect()
}
