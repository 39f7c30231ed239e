//! Hidden label fields observed through Gaussian noise.
//!
//! Each site carries an observation y_i that is conditionally normal
//! given its latent class. The ordered conditional machinery extends in
//! two directions: an integrated (marginal) likelihood of y with the
//! latent labels summed out window by window, and an approximate
//! posterior over the latent field that can be sampled ancestrally in a
//! single pass. A Gibbs sampler alternates the field draw with
//! conjugate emission updates and a random-walk move on the coupling.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, OcaPlan};
use crate::math::{log_normal_pdf, log_sum_exp, next_digits, LogSumExp};
use crate::potts::{
    check_enumerable, exact_log_normalizer, oca_log_likelihood, summary_stat, PottsParams,
};
use crate::sampler::draw_categorical;

/// Joint enumeration limit for the exact marginal oracle.
const EXACT_GUARD_LOG2: f64 = 20.0;
/// Per-window enumeration limit for marginal conditionals.
const WINDOW_GUARD_LOG2: f64 = 24.0;

/// Known standard deviation assigned to held-out sites so their
/// observations are downweighted rather than removed.
pub const HELDOUT_SD: f64 = 100.0;

/// Per-class normal emission: y_i | z_i = k ~ N(mu_k, sigma_k^2).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionModel {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl EmissionModel {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<EmissionModel> {
        if mu.is_empty() || mu.len() != sigma.len() {
            return Err(Error::domain(format!(
                "need matching non-empty mean and sd lists, got {} and {}",
                mu.len(),
                sigma.len()
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("class means must be finite"));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::domain(
                "class standard deviations must be finite and positive",
            ));
        }
        Ok(EmissionModel { mu, sigma })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Log density of the observation y under class k.
    pub fn log_pdf(&self, y: f64, class: usize) -> f64 {
        log_normal_pdf(y, self.mu[class], self.sigma[class])
    }
}

/// Observations on the lattice, with optional per-site known-sd
/// overrides. An override replaces the class sd in every emission
/// density evaluation at that site, which is how held-out sites are
/// downweighted.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationField {
    y: Vec<f64>,
    sd_override: Vec<Option<f64>>,
}

impl ObservationField {
    pub fn new(y: Vec<f64>) -> Result<ObservationField> {
        let overrides = vec![None; y.len()];
        ObservationField::with_overrides(y, overrides)
    }

    pub fn with_overrides(y: Vec<f64>, sd_override: Vec<Option<f64>>) -> Result<ObservationField> {
        if y.is_empty() {
            return Err(Error::domain("observation field is empty"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("observations must be finite"));
        }
        if sd_override.len() != y.len() {
            return Err(Error::domain(format!(
                "{} observations but {} sd overrides",
                y.len(),
                sd_override.len()
            )));
        }
        if sd_override
            .iter()
            .flatten()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::domain(
                "sd overrides must be finite and positive",
            ));
        }
        Ok(ObservationField { y, sd_override })
    }

    /// Marks the listed sites as held out with the standard override sd.
    pub fn heldout(y: Vec<f64>, heldout_sites: &[usize]) -> Result<ObservationField> {
        let mut overrides = vec![None; y.len()];
        for &s in heldout_sites {
            if s >= y.len() {
                return Err(Error::domain(format!(
                    "held-out site {s} outside field of {} sites",
                    y.len()
                )));
            }
            overrides[s] = Some(HELDOUT_SD);
        }
        ObservationField::with_overrides(y, overrides)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sd_override(&self, site: usize) -> Option<f64> {
        self.sd_override[site]
    }

    /// Log emission density at one site under one class, honoring the
    /// site's sd override if present.
    pub fn log_emission(&self, emission: &EmissionModel, site: usize, class: usize) -> f64 {
        let sd = self.sd_override[site].unwrap_or(emission.sigma[class]);
        log_normal_pdf(self.y[site], emission.mu[class], sd)
    }
}

/// Site-by-class table of log emission densities, row-major. Built once
/// per (observations, emission) pair so inner enumeration loops index
/// instead of recomputing the density.
fn log_emission_table(obs: &ObservationField, emission: &EmissionModel) -> Vec<f64> {
    let k = emission.k();
    let mut table = Vec::with_capacity(obs.len() * k);
    for site in 0..obs.len() {
        for class in 0..k {
            table.push(obs.log_emission(emission, site, class));
        }
    }
    table
}

fn check_hidden_inputs(
    plan_sites: usize,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
) -> Result<()> {
    if obs.len() != plan_sites {
        return Err(Error::domain(format!(
            "{} observations on a lattice of {} sites",
            obs.len(),
            plan_sites
        )));
    }
    if emission.k() != params.k() {
        return Err(Error::domain(format!(
            "emission has {} classes, field has {}",
            emission.k(),
            params.k()
        )));
    }
    Ok(())
}

/// One term of the integrated likelihood: the conditional density of
/// y_i given the observations at the past window sites, with the latent
/// labels of the whole window summed out. Numerator and denominator
/// enumerate the same K^window labelings; only the numerator carries
/// the emission factor at the center, so the ratio is a proper
/// conditional density. Past-pair agreement does not cancel here and is
/// always counted.
fn marginal_term(plan: &OcaPlan, params: PottsParams, table: &[f64], i: usize) -> Result<f64> {
    let sp = plan.site(i);
    let k = params.k();
    let beta = params.beta();
    check_enumerable(k, sp.window_len(), WINDOW_GUARD_LOG2)?;
    let center = sp.center();
    let mut window = vec![0u8; sp.window_len()];
    let mut num = LogSumExp::new();
    let mut den = LogSumExp::new();
    loop {
        let mut agree = 0u32;
        for &(a, b) in &sp.pairs_past {
            if window[a as usize] == window[b as usize] {
                agree += 1;
            }
        }
        let center_label = window[center];
        for &l in &sp.pairs_center {
            if window[l as usize] == center_label {
                agree += 1;
            }
        }
        for &(a, b) in &sp.pairs_mixed {
            if window[a as usize] == window[b as usize] {
                agree += 1;
            }
        }
        let mut log_obs_past = 0.0;
        for (pos, &site) in sp.past.iter().enumerate() {
            log_obs_past += table[site as usize * k + window[pos] as usize];
        }
        let shared = beta * agree as f64 + log_obs_past;
        den.add(shared);
        num.add(shared + table[i * k + center_label as usize]);
        if !next_digits(&mut window, k as u8) {
            break;
        }
    }
    Ok(num.value() - den.value())
}

/// Log of the ordered conditional density of y_i given the past-window
/// observations, with latent labels summed out.
pub fn oca_marginal_log_conditional(
    plan: &OcaPlan,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
    i: usize,
) -> Result<f64> {
    check_hidden_inputs(plan.lattice().len(), params, emission, obs)?;
    let table = log_emission_table(obs, emission);
    marginal_term(plan, params, &table, i)
}

/// The conditional density itself; strictly positive.
pub fn oca_marginal_conditional(
    plan: &OcaPlan,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
    i: usize,
) -> Result<f64> {
    Ok(oca_marginal_log_conditional(plan, params, emission, obs, i)?.exp())
}

/// Integrated log-likelihood of the observations with latent labels
/// summed out window by window: the sum over sites of the log marginal
/// conditional. Terms are computed in parallel and reduced in site
/// order, so results are identical across thread counts.
pub fn oca_marginal_log_likelihood(
    plan: &OcaPlan,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
) -> Result<f64> {
    check_hidden_inputs(plan.lattice().len(), params, emission, obs)?;
    let table = log_emission_table(obs, emission);
    let terms: Result<Vec<f64>> = (0..obs.len())
        .into_par_iter()
        .map(|i| marginal_term(plan, params, &table, i))
        .collect();
    Ok(terms?.iter().sum())
}

/// Brute-force marginal likelihood of y: sums the joint over every
/// latent configuration. Only feasible on tiny grids; oracle for the
/// windowed marginal.
pub fn exact_marginal_log_likelihood(
    lattice: Lattice,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
) -> Result<f64> {
    check_hidden_inputs(lattice.len(), params, emission, obs)?;
    check_enumerable(params.k(), lattice.len(), EXACT_GUARD_LOG2)?;
    let k = params.k();
    let table = log_emission_table(obs, emission);
    let mut labels = vec![0u8; lattice.len()];
    let mut acc = LogSumExp::new();
    loop {
        let mut log_joint = params.beta() * summary_stat(lattice, &labels) as f64;
        for (i, &l) in labels.iter().enumerate() {
            log_joint += table[i * k + l as usize];
        }
        acc.add(log_joint);
        if !next_digits(&mut labels, k as u8) {
            break;
        }
    }
    Ok(acc.value() - exact_log_normalizer(lattice, params)?)
}

/// log p(z_i = k | z_0..i-1, y_i, y_f(i)) for all k: the posterior
/// ordered conditional. For each class the window Hamiltonian is summed
/// over future-label completions, each weighted by the emission
/// densities of the future observations; the center's own emission
/// factor multiplies per class. Only the `g(i)` entries of `labels` are
/// read.
fn latent_term(
    plan: &OcaPlan,
    params: PottsParams,
    table: &[f64],
    labels: &[u8],
    i: usize,
) -> Result<Vec<f64>> {
    let sp = plan.site(i);
    let k = params.k();
    let beta = params.beta();
    check_enumerable(k, sp.future.len(), WINDOW_GUARD_LOG2)?;
    let p = sp.past.len();
    let mut window = vec![0u8; sp.window_len()];
    for (l, &j) in sp.past.iter().enumerate() {
        window[l] = labels[j as usize];
    }
    // Past-only agreement is fixed by the conditioning labels, so with
    // pruning on it is skipped; it cancels in the normalization.
    let count_past = !plan.prune_past_pairs();
    let mut acc = vec![LogSumExp::new(); k];
    let mut tally = vec![0u32; k];
    loop {
        let mut base = 0u32;
        for &(a, b) in &sp.pairs_mixed {
            if window[a as usize] == window[b as usize] {
                base += 1;
            }
        }
        if count_past {
            for &(a, b) in &sp.pairs_past {
                if window[a as usize] == window[b as usize] {
                    base += 1;
                }
            }
        }
        tally.fill(0);
        for &l in &sp.pairs_center {
            tally[window[l as usize] as usize] += 1;
        }
        let mut log_obs_future = 0.0;
        for (pos, &site) in sp.future.iter().enumerate() {
            log_obs_future += table[site as usize * k + window[p + 1 + pos] as usize];
        }
        for (kk, a) in acc.iter_mut().enumerate() {
            a.add(beta * (base + tally[kk]) as f64 + log_obs_future);
        }
        if !next_digits(&mut window[p + 1..], k as u8) {
            break;
        }
    }
    let logs: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(kk, a)| a.value() + table[i * k + kk])
        .collect();
    let total = log_sum_exp(&logs);
    Ok(logs.iter().map(|l| l - total).collect())
}

/// Log posterior ordered conditional of the latent label at site i.
pub fn latent_log_conditional(
    plan: &OcaPlan,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
    labels: &[u8],
    i: usize,
) -> Result<Vec<f64>> {
    check_hidden_inputs(plan.lattice().len(), params, emission, obs)?;
    let table = log_emission_table(obs, emission);
    latent_term(plan, params, &table, labels, i)
}

/// Posterior ordered conditional probabilities; sums to one.
pub fn latent_conditional(
    plan: &OcaPlan,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
    labels: &[u8],
    i: usize,
) -> Result<Vec<f64>> {
    Ok(latent_log_conditional(plan, params, emission, obs, labels, i)?
        .iter()
        .map(|l| l.exp())
        .collect())
}

/// Draws a whole latent field from the approximate posterior in one
/// ordered ancestral pass: site i is drawn from its posterior ordered
/// conditional given the labels already drawn.
pub fn sample_hidden_field<R: Rng>(
    plan: &OcaPlan,
    params: PottsParams,
    emission: &EmissionModel,
    obs: &ObservationField,
    rng: &mut R,
) -> Result<Vec<u8>> {
    check_hidden_inputs(plan.lattice().len(), params, emission, obs)?;
    let table = log_emission_table(obs, emission);
    let n = obs.len();
    let mut labels = vec![0u8; n];
    let mut probs = vec![0.0; params.k()];
    for i in 0..n {
        let logs = latent_term(plan, params, &table, &labels, i)?;
        for (p, l) in probs.iter_mut().zip(&logs) {
            *p = l.exp();
        }
        labels[i] = draw_categorical(rng, &probs);
    }
    Ok(labels)
}

/// Draws observations from the emission model given a latent field.
pub fn simulate_observations<R: Rng>(
    labels: &[u8],
    emission: &EmissionModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if labels.iter().any(|&l| (l as usize) >= emission.k()) {
        return Err(Error::domain(format!(
            "label outside the {} emission classes",
            emission.k()
        )));
    }
    Ok(labels
        .iter()
        .map(|&l| {
            let d = Normal::new(emission.mu[l as usize], emission.sigma[l as usize])
                .expect("validated emission");
            d.sample(rng)
        })
        .collect())
}

/// Conjugate priors for the emission parameters plus the flat positive
/// prior on the coupling. Class means are a priori independent
/// N(c_j, sigma0^2); class variances are inverse-gamma with shape
/// `alpha` and scale `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub c: Vec<f64>,
    pub sigma0: f64,
    pub alpha: f64,
    pub eta: f64,
}

impl Priors {
    pub fn new(c: Vec<f64>, sigma0: f64, alpha: f64, eta: f64) -> Result<Priors> {
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("prior means must be finite, one per class"));
        }
        for (name, v) in [("sigma0", sigma0), ("alpha", alpha), ("eta", eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "prior {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(Priors {
            c,
            sigma0,
            alpha,
            eta,
        })
    }

    pub fn k(&self) -> usize {
        self.c.len()
    }
}

/// One conjugate update of all class means and sds given the current
/// latent labels. Per class j with n_j assigned sites: the variance is
/// drawn from IG(alpha + (n_j-1)/2, eta + half the centered sum of
/// squares), then the mean from its precision-weighted normal. Empty
/// classes draw straight from the prior. Sites with an sd override are
/// excluded from the sufficient statistics, since their noise scale is
/// fixed externally rather than governed by the class sd. Classes are
/// updated in ascending order, variance before mean, so draws are
/// reproducible.
pub fn update_emission_params<R: Rng>(
    labels: &[u8],
    obs: &ObservationField,
    priors: &Priors,
    rng: &mut R,
) -> Result<EmissionModel> {
    let k = priors.k();
    if labels.len() != obs.len() {
        return Err(Error::domain(format!(
            "{} labels for {} observations",
            labels.len(),
            obs.len()
        )));
    }
    if labels.iter().any(|&l| (l as usize) >= k) {
        return Err(Error::domain(format!("label outside the {k} prior classes")));
    }
    let s0sq = priors.sigma0 * priors.sigma0;
    let mut mu = Vec::with_capacity(k);
    let mut sigma = Vec::with_capacity(k);
    for j in 0..k {
        let class_obs: Vec<f64> = labels
            .iter()
            .zip(obs.y())
            .enumerate()
            .filter(|(site, (&l, _))| l as usize == j && obs.sd_override(*site).is_none())
            .map(|(_, (_, &y))| y)
            .collect();
        let n_j = class_obs.len();
        let (var, mean_post, var_post);
        if n_j == 0 {
            var = draw_inverse_gamma(priors.alpha, priors.eta, rng);
            mean_post = priors.c[j];
            var_post = s0sq;
        } else {
            let ybar = class_obs.iter().sum::<f64>() / n_j as f64;
            let ssd: f64 = class_obs.iter().map(|y| (y - ybar) * (y - ybar)).sum();
            let alpha_hat = priors.alpha + (n_j as f64 - 1.0) / 2.0;
            let eta_hat = priors.eta + 0.5 * ssd;
            var = draw_inverse_gamma(alpha_hat, eta_hat, rng);
            let precision = n_j as f64 / var + 1.0 / s0sq;
            mean_post = (n_j as f64 * ybar / var + priors.c[j] / s0sq) / precision;
            var_post = 1.0 / precision;
        }
        let mean = Normal::new(mean_post, var_post.sqrt())
            .expect("positive posterior sd")
            .sample(rng);
        mu.push(mean);
        sigma.push(var.sqrt());
    }
    EmissionModel::new(mu, sigma)
}

/// IG(shape, scale) draw as the reciprocal of a gamma variate.
fn draw_inverse_gamma<R: Rng>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// One Metropolis step on the coupling: a symmetric normal random-walk
/// proposal scored by the ordered conditional log-likelihood of the
/// labels under the flat positive prior. Negative proposals are
/// rejected outright. Returns the new value and whether it moved.
pub fn update_beta<R: Rng>(
    plan: &OcaPlan,
    k_states: usize,
    labels: &[u8],
    beta: f64,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if !(proposal_sd.is_finite() && proposal_sd > 0.0) {
        return Err(Error::domain(format!(
            "proposal sd must be positive, got {proposal_sd}"
        )));
    }
    let step: f64 = Normal::new(0.0, proposal_sd)
        .expect("positive proposal sd")
        .sample(rng);
    let proposal = beta + step;
    if proposal < 0.0 {
        return Ok((beta, false));
    }
    let current_ll = oca_log_likelihood(plan, PottsParams::new(k_states, beta)?, labels)?;
    let proposal_ll = oca_log_likelihood(plan, PottsParams::new(k_states, proposal)?, labels)?;
    let log_ratio = proposal_ll - current_ll;
    if log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio {
        Ok((proposal, true))
    } else {
        Ok((beta, false))
    }
}

/// Gibbs run lengths and the coupling proposal scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsOptions {
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_sd: f64,
}

impl GibbsOptions {
    pub fn new(iterations: usize, burn_in: usize) -> Result<GibbsOptions> {
        GibbsOptions {
            iterations,
            burn_in,
            proposal_sd: 0.05,
        }
        .validated()
    }

    pub fn with_proposal_sd(mut self, proposal_sd: f64) -> Result<GibbsOptions> {
        self.proposal_sd = proposal_sd;
        self.validated()
    }

    fn validated(self) -> Result<GibbsOptions> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::domain(format!(
                "need burn-in < iterations, got {} and {}",
                self.burn_in, self.iterations
            )));
        }
        if !(self.proposal_sd.is_finite() && self.proposal_sd > 0.0) {
            return Err(Error::domain(format!(
                "proposal sd must be positive, got {}",
                self.proposal_sd
            )));
        }
        Ok(self)
    }
}

/// Starting state for the Gibbs sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsInit {
    pub labels: Vec<u8>,
    pub beta: f64,
    pub emission: EmissionModel,
}

/// Data-driven start: k-means fixes the emission parameters, labels are
/// the per-site maximum-likelihood classes under that emission, and the
/// coupling starts at the best value on a coarse grid under the ordered
/// conditional log-likelihood of those labels.
pub fn default_init(plan: &OcaPlan, obs: &ObservationField, k: usize) -> Result<GibbsInit> {
    let fit = crate::gmm::kmeans(obs.y(), k, 100)?;
    let emission = EmissionModel::new(fit.means, fit.sds)?;
    let labels: Vec<u8> = (0..obs.len())
        .map(|site| {
            (0..k)
                .map(|class| (class, obs.log_emission(&emission, site, class)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(class, _)| class as u8)
                .unwrap()
        })
        .collect();
    let mut best = (0.0, f64::NEG_INFINITY);
    for step in 0..=15 {
        let beta = step as f64 * 0.1;
        let ll = oca_log_likelihood(plan, PottsParams::new(k, beta)?, &labels)?;
        if ll > best.1 {
            best = (beta, ll);
        }
    }
    Ok(GibbsInit {
        labels,
        beta: best.0,
        emission,
    })
}

/// Held-out sites to predict and how many normal draws to pool per
/// site per retained iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictSpec {
    pub sites: Vec<usize>,
    pub draws_per_site: usize,
}

/// Per-iteration record of the sampler state after its updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub beta: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub accepted: bool,
}

/// Result of a Gibbs run: post-burn-in class tallies per site, the full
/// parameter trace, the final state, and optional pooled predictive
/// samples for held-out sites.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsRun {
    pub k_states: usize,
    pub class_counts: Vec<u32>,
    pub retained: usize,
    pub trace: Vec<TraceRow>,
    pub beta_accepts: usize,
    pub final_labels: Vec<u8>,
    pub final_beta: f64,
    pub final_emission: EmissionModel,
    pub predictive: Option<Vec<Vec<f64>>>,
}

impl GibbsRun {
    /// Posterior class probabilities per site, row-major n by K. Rows
    /// are tallies divided by the retained iteration count, so each
    /// sums to one.
    pub fn marginal_probs(&self) -> Vec<f64> {
        self.class_counts
            .iter()
            .map(|&c| c as f64 / self.retained as f64)
            .collect()
    }

    /// Highest-posterior-probability map: per-site argmax of the
    /// tallies, ties broken toward the smaller class.
    pub fn hpp(&self) -> Vec<u8> {
        let k = self.k_states;
        self.class_counts
            .chunks(k)
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

/// Runs the Gibbs sampler: each iteration redraws the whole latent
/// field ancestrally, then the emission parameters, then the coupling.
/// Post-burn-in iterations feed the class tallies; when a predict spec
/// is given, each retained iteration draws the stated number of normal
/// samples per held-out site from the current (mu, sigma) of that
/// site's freshly drawn label.
pub fn run_gibbs<R: Rng>(
    plan: &OcaPlan,
    obs: &ObservationField,
    priors: &Priors,
    init: GibbsInit,
    opts: GibbsOptions,
    rng: &mut R,
    predict: Option<&PredictSpec>,
) -> Result<GibbsRun> {
    let opts = opts.validated()?;
    let n = plan.lattice().len();
    let k = priors.k();
    if init.emission.k() != k || init.labels.len() != n {
        return Err(Error::domain(
            "initial state does not match the priors and lattice",
        ));
    }
    if !(init.beta.is_finite() && init.beta >= 0.0) {
        return Err(Error::domain(format!(
            "initial coupling must be nonnegative, got {}",
            init.beta
        )));
    }
    if let Some(spec) = predict {
        if spec.draws_per_site == 0 {
            return Err(Error::domain("need at least one draw per site"));
        }
        if spec.sites.iter().any(|&s| s >= n) {
            return Err(Error::domain("predict site outside the lattice"));
        }
    }
    let mut labels = init.labels;
    let mut emission = init.emission;
    let mut beta = init.beta;
    let mut class_counts = vec![0u32; n * k];
    let mut trace = Vec::with_capacity(opts.iterations);
    let mut beta_accepts = 0usize;
    let mut retained = 0usize;
    let mut pools = predict.map(|spec| vec![Vec::new(); spec.sites.len()]);
    for iteration in 1..=opts.iterations {
        let params = PottsParams::new(k, beta)?;
        labels = sample_hidden_field(plan, params, &emission, obs, rng)?;
        emission = update_emission_params(&labels, obs, priors, rng)?;
        let (next_beta, accepted) = update_beta(plan, k, &labels, beta, opts.proposal_sd, rng)?;
        beta = next_beta;
        beta_accepts += accepted as usize;
        trace.push(TraceRow {
            iteration,
            beta,
            mu: emission.mu().to_vec(),
            sigma: emission.sigma().to_vec(),
            accepted,
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
    Ok(GibbsRun {
        k_states: k,
        class_counts,
        retained,
        trace,
        beta_accepts,
        final_labels: labels,
        final_beta: beta,
        final_emission: emission,
        predictive: pools,
    })
}

/// Held-out prediction: the listed sites keep their observations but
/// get the large known-sd override, the sampler runs from the
/// data-driven start, and each retained iteration contributes pooled
/// normal draws per held-out site. With no held-out sites this is a
/// plain run.
pub fn heldout_predict<R: Rng>(
    plan: &OcaPlan,
    y: &[f64],
    heldout_sites: &[usize],
    priors: &Priors,
    opts: GibbsOptions,
    draws_per_site: usize,
    rng: &mut R,
) -> Result<GibbsRun> {
    let obs = ObservationField::heldout(y.to_vec(), heldout_sites)?;
    let init = default_init(plan, &obs, priors.k())?;
    let spec = PredictSpec {
        sites: heldout_sites.to_vec(),
        draws_per_site,
    };
    let predict = if heldout_sites.is_empty() {
        None
    } else {
        Some(&spec)
    };
    run_gibbs(plan, &obs, priors, init, opts, rng, predict)
}
