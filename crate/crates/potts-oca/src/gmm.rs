//! Gaussian mixture baseline and the deterministic k-means initializer.
//!
//! The mixture sampler shares the emission layer and its conjugate
//! updates with the hidden-field module but replaces spatial coupling
//! with Dirichlet-weighted independent labels, which makes it the
//! natural no-spatial-structure baseline.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::hidden::{
    update_emission_params, EmissionModel, ObservationField, PredictSpec, Priors,
};
use crate::math::log_sum_exp;
use crate::sampler::draw_categorical;

/// Smallest class sd reported by k-means; keeps degenerate clusters
/// usable as emission parameters.
const SD_FLOOR: f64 = 1e-6;

/// Result of Lloyd's algorithm on 1-D data. Classes are relabeled in
/// ascending order of their means. `wcss` records the within-cluster
/// sum of squares once per iteration; it is non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub labels: Vec<u8>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub wcss: Vec<f64>,
}

/// Lloyd's iterations from evenly spaced sample quantiles. The
/// quantile start makes the fit deterministic; empty clusters are
/// reseeded with the point farthest from its current center.
pub fn kmeans(y: &[f64], k: usize, max_iter: usize) -> Result<KmeansFit> {
    if k == 0 || k > 256 {
        return Err(Error::domain(format!("class count {k} outside 1..=256")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("data must be finite"));
    }
    if y.len() < k {
        return Err(Error::domain(format!(
            "{} points cannot seed {k} classes",
            y.len()
        )));
    }
    let n = y.len();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centers: Vec<f64> = (0..k)
        .map(|j| sorted[(((2 * j + 1) * n) / (2 * k)).min(n - 1)])
        .collect();
    let mut assign = vec![0usize; n];
    let mut counts = vec![0usize; k];
    let mut wcss = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..max_iter.max(1) {
        counts.fill(0);
        for (i, &v) in y.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = (v - centers[0]) * (v - centers[0]);
            for (c, &ctr) in centers.iter().enumerate().skip(1) {
                let d = (v - ctr) * (v - ctr);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            assign[i] = best;
            counts[best] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // steal the farthest point from a cluster that can spare one
            let far = (0..n)
                .filter(|&i| counts[assign[i]] >= 2)
                .max_by(|&a, &b| {
                    let da = (y[a] - centers[assign[a]]) * (y[a] - centers[assign[a]]);
                    let db = (y[b] - centers[assign[b]]) * (y[b] - centers[assign[b]]);
                    da.total_cmp(&db)
                })
                .expect("n >= k leaves a donor cluster");
            counts[assign[far]] -= 1;
            assign[far] = c;
            counts[c] = 1;
            centers[c] = y[far];
        }
        wcss.push(
            y.iter()
                .zip(&assign)
                .map(|(&v, &a)| (v - centers[a]) * (v - centers[a]))
                .sum(),
        );
        let mut sums = vec![0.0; k];
        for (i, &a) in assign.iter().enumerate() {
            sums[a] += y[i];
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
        if prev.as_ref() == Some(&assign) {
            break;
        }
        prev = Some(assign.clone());
    }
    // relabel ascending by center so class identities are stable
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let mut rank = vec![0usize; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let labels: Vec<u8> = assign.iter().map(|&a| rank[a] as u8).collect();
    let mut means = vec![0.0; k];
    let mut sds = vec![0.0; k];
    for (r, &c) in order.iter().enumerate() {
        means[r] = centers[c];
        if counts[c] >= 2 {
            let m = centers[c];
            let ss: f64 = y
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(&v, _)| (v - m) * (v - m))
                .sum();
            sds[r] = (ss / (counts[c] - 1) as f64).sqrt().max(SD_FLOOR);
        } else {
            sds[r] = SD_FLOOR;
        }
    }
    Ok(KmeansFit {
        labels,
        means,
        sds,
        wcss,
    })
}

/// Mixture sampler run lengths and the Dirichlet hyperparameter.
/// `dirichlet_alpha` of `None` means the symmetric default 1/K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    pub iterations: usize,
    pub burn_in: usize,
    pub dirichlet_alpha: Option<f64>,
}

impl GmmOptions {
    pub fn new(iterations: usize, burn_in: usize) -> Result<GmmOptions> {
        GmmOptions {
            iterations,
            burn_in,
            dirichlet_alpha: None,
        }
        .validated()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<GmmOptions> {
        self.dirichlet_alpha = Some(alpha);
        self.validated()
    }

    fn validated(self) -> Result<GmmOptions> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::domain(format!(
                "need burn-in < iterations, got {} and {}",
                self.burn_in, self.iterations
            )));
        }
        if let Some(a) = self.dirichlet_alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::domain(format!(
                    "Dirichlet hyperparameter must be positive, got {a}"
                )));
            }
        }
        Ok(self)
    }
}

/// Per-iteration record of the mixture sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmTraceRow {
    pub iteration: usize,
    pub pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Result of a mixture Gibbs run; mirrors the hidden-field run shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmRun {
    pub k_states: usize,
    pub class_counts: Vec<u32>,
    pub retained: usize,
    pub trace: Vec<GmmTraceRow>,
    pub final_labels: Vec<u8>,
    pub final_pi: Vec<f64>,
    pub final_emission: EmissionModel,
    pub predictive: Option<Vec<Vec<f64>>>,
}

impl GmmRun {
    /// Posterior class probabilities per site, row-major n by K.
    pub fn marginal_probs(&self) -> Vec<f64> {
        self.class_counts
            .iter()
            .map(|&c| c as f64 / self.retained as f64)
            .collect()
    }

    /// Per-site argmax of the tallies, ties toward the smaller class.
    pub fn hpp(&self) -> Vec<u8> {
        self.class_counts
            .chunks(self.k_states)
            .map(|row| {
                let mut best = 0usize;
                for (class, &count) in row.iter().enumerate() {
                    if count > row[best] {
                        best = class;
                    }
                }
                best as u8
            })
            .collect()
    }
}

/// Posterior Dirichlet parameters: hyperparameter plus class counts.
pub(crate) fn dirichlet_posterior(alpha: f64, counts: &[u32]) -> Vec<f64> {
    counts.iter().map(|&c| alpha + c as f64).collect()
}

/// Dirichlet draw by normalizing independent gamma variates.
pub(crate) fn draw_dirichlet<R: Rng>(params: &[f64], rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = params
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive Dirichlet parameter")
                .sample(rng)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|g| g / total).collect()
}

/// Gibbs sampler for the Dirichlet-weighted Gaussian mixture. Each
/// iteration draws the class probabilities from their Dirichlet
/// posterior, the emission parameters from the same conjugate updates
/// as the hidden-field sampler, and then every label independently
/// with probability proportional to pi_k times the emission density.
/// Labels start from an independent uniform draw. Label switching is
/// not corrected.
pub fn gmm_gibbs<R: Rng>(
    obs: &ObservationField,
    priors: &Priors,
    opts: GmmOptions,
    rng: &mut R,
    predict: Option<&PredictSpec>,
) -> Result<GmmRun> {
    let opts = opts.validated()?;
    let k = priors.k();
    let n = obs.len();
    let alpha = opts.dirichlet_alpha.unwrap_or(1.0 / k as f64);
    if let Some(spec) = predict {
        if spec.draws_per_site == 0 {
            return Err(Error::domain("need at least one draw per site"));
        }
        if spec.sites.iter().any(|&s| s >= n) {
            return Err(Error::domain("predict site outside the field"));
        }
    }
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k) as u8).collect();
    let mut pi = vec![1.0 / k as f64; k];
    let mut emission = EmissionModel::new(priors.c.clone(), vec![1.0; k])?;
    let mut class_counts = vec![0u32; n * k];
    let mut trace = Vec::with_capacity(opts.iterations);
    let mut retained = 0usize;
    let mut pools = predict.map(|spec| vec![Vec::new(); spec.sites.len()]);
    let mut counts = vec![0u32; k];
    let mut site_logs = vec![0.0; k];
    for iteration in 1..=opts.iterations {
        counts.fill(0);
        for &l in &labels {
            counts[l as usize] += 1;
        }
        pi = draw_dirichlet(&dirichlet_posterior(alpha, &counts), rng);
        emission = update_emission_params(&labels, obs, priors, rng)?;
        let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
        for site in 0..n {
            for class in 0..k {
                site_logs[class] = log_pi[class] + obs.log_emission(&emission, site, class);
            }
            let total = log_sum_exp(&site_logs);
            let probs: Vec<f64> = site_logs.iter().map(|l| (l - total).exp()).collect();
            labels[site] = draw_categorical(rng, &probs);
        }
        trace.push(GmmTraceRow {
            iteration,
            pi: pi.clone(),
            mu: emission.mu().to_vec(),
            sigma: emission.sigma().to_vec(),
        });
        if iteration > opts.burn_in {
            retained += 1;
            for (site, &l) in labels.iter().enumerate() {
                class_counts[site * k + l as usize] += 1;
            }
            if let (Some(spec), Some(pools)) = (predict, pools.as_mut()) {
                for (pool, &site) in pools.iter_mut().zip(&spec.sites) {
                    let class = labels[site] as usize;
                    let d = Normal::new(emission.mu()[class], emission.sigma()[class])
                        .expect("validated emission");
                    for _ in 0..spec.draws_per_site {
                        pool.push(d.sample(rng));
                    }
                }
            }
        }
    }
    Ok(GmmRun {
        k_states: k,
        class_counts,
        retained,
        trace,
        final_labels: labels,
        final_pi: pi,
        final_emission: emission,
        predictive: pools,
    })
}

/// Held-out prediction with the mixture baseline: same sd-override
/// mechanism and pooled predictive draws as the hidden-field version.
pub fn gmm_heldout_predict<R: Rng>(
    y: &[f64],
    heldout_sites: &[usize],
    priors: &Priors,
    opts: GmmOptions,
    draws_per_site: usize,
    rng: &mut R,
) -> Result<GmmRun> {
    let obs = ObservationField::heldout(y.to_vec(), heldout_sites)?;
    let spec = PredictSpec {
        sites: heldout_sites.to_vec(),
        draws_per_site,
    };
    let predict = if heldout_sites.is_empty() {
        None
    } else {
        Some(&spec)
    };
    gmm_gibbs(&obs, priors, opts, rng, predict)
}

/// Permutation sending each class to its rank under ascending means;
/// the optional post-hoc relabeling for cross-model comparisons.
pub fn mean_rank_permutation(mu: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu[a].total_cmp(&mu[b]));
    let mut rank = vec![0usize; mu.len()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    rank
}

/// Applies a class permutation to a row-major site-by-class table.
pub fn permute_classes(probs: &[f64], k: usize, rank: &[usize]) -> Vec<f64> {
    assert_eq!(rank.len(), k);
    let mut out = vec![0.0; probs.len()];
    for (row, chunk) in probs.chunks(k).enumerate() {
        for (class, &p) in chunk.iter().enumerate() {
            out[row * k + rank[class]] = p;
        }
    }
    out
}
