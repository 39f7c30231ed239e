//! The observed Potts model: exact densities (enumeration oracles),
//! ordered conditional approximation (OCA) of the likelihood, the
//! pseudo-likelihood baseline, and maximum-likelihood estimation of the
//! inverse temperature.
//!
//! Convention: the density is p(z | beta) = exp(beta * S(z)) / N_beta
//! where S(z) counts agreeing first-order neighbor pairs, so positive
//! beta rewards agreement and fields cluster as beta grows.
//!
//! Labels are `u8` values in `0..K`. Functions here assume fields are
//! valid for their lattice and class count; validation happens at
//! construction ([`LabelField::new`]) and at the I/O boundary.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, OcaPlan};
use crate::math::{golden_section_max, log_sum_exp, next_digits, LogSumExp};

/// Enumeration oracles refuse once K^n exceeds this.
const ENUM_GUARD_LOG2: f64 = 24.0;

/// Inverse temperature and class count of a Potts model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PottsParams {
    k_states: usize,
    beta: f64,
}

impl PottsParams {
    pub fn new(k_states: usize, beta: f64) -> Result<PottsParams> {
        if k_states < 2 || k_states > u8::MAX as usize + 1 {
            return Err(Error::domain(format!(
                "class count must be in 2..=256, got {k_states}"
            )));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::domain(format!(
                "inverse temperature must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(PottsParams { k_states, beta })
    }

    pub fn k(&self) -> usize {
        self.k_states
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(&self, beta: f64) -> Result<PottsParams> {
        PottsParams::new(self.k_states, beta)
    }
}

/// A validated label configuration on a lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    lattice: Lattice,
    k_states: usize,
    labels: Vec<u8>,
}

impl LabelField {
    pub fn new(lattice: Lattice, k_states: usize, labels: Vec<u8>) -> Result<LabelField> {
        if labels.len() != lattice.len() {
            return Err(Error::domain(format!(
                "field has {} labels for a lattice of {} sites",
                labels.len(),
                lattice.len()
            )));
        }
        if k_states < 2 || k_states > u8::MAX as usize + 1 {
            return Err(Error::domain(format!(
                "class count must be in 2..=256, got {k_states}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k_states) {
            return Err(Error::domain(format!(
                "label {bad} out of range for {k_states} classes"
            )));
        }
        Ok(LabelField {
            lattice,
            k_states,
            labels,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn k(&self) -> usize {
        self.k_states
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }
}

/// S(z): the number of first-order neighbor pairs with equal labels.
pub fn summary_stat(lattice: Lattice, labels: &[u8]) -> u64 {
    debug_assert_eq!(labels.len(), lattice.len());
    lattice
        .neighbor_pairs()
        .filter(|&(i, j)| labels[i] == labels[j])
        .count() as u64
}

/// beta * S(z), the log of the unnormalized density.
pub fn log_potential(lattice: Lattice, labels: &[u8], beta: f64) -> f64 {
    beta * summary_stat(lattice, labels) as f64
}

/// Errors when K^sites exceeds 2^limit_log2.
pub(crate) fn check_enumerable(k: usize, sites: usize, limit_log2: f64) -> Result<()> {
    let states = (sites as f64) * (k as f64).log2();
    if states > limit_log2 {
        return Err(Error::Capacity {
            k_states: k,
            sites,
            states: (k as f64).powi(sites as i32),
            limit: limit_log2.exp2(),
        });
    }
    Ok(())
}

/// log N_beta: log of the partition function, by full enumeration.
/// Exponential cost; refuses when K^n > 2^24.
pub fn exact_log_normalizer(lattice: Lattice, params: PottsParams) -> Result<f64> {
    check_enumerable(params.k(), lattice.len(), ENUM_GUARD_LOG2)?;
    let mut scratch = vec![0u8; lattice.len()];
    let mut acc = LogSumExp::new();
    loop {
        acc.add(log_potential(lattice, &scratch, params.beta()));
        if !next_digits(&mut scratch, params.k() as u8) {
            break;
        }
    }
    Ok(acc.value())
}

/// Exact log density beta*S(z) - log N_beta. Enumeration oracle.
pub fn exact_log_density(lattice: Lattice, params: PottsParams, labels: &[u8]) -> Result<f64> {
    let log_n = exact_log_normalizer(lattice, params)?;
    Ok(log_potential(lattice, labels, params.beta()) - log_n)
}

/// Exact ordered conditional p(z_i = k | z_0..i-1) for k = 0..K,
/// marginalizing every site after `i` by enumeration. Only the first
/// `i` entries of `labels` are read. Enumeration oracle.
pub fn exact_conditional(
    lattice: Lattice,
    params: PottsParams,
    labels: &[u8],
    i: usize,
) -> Result<Vec<f64>> {
    let n = lattice.len();
    assert!(i < n, "site {i} out of range for {n} sites");
    check_enumerable(params.k(), n, ENUM_GUARD_LOG2)?;
    let k = params.k();
    let mut scratch = vec![0u8; n];
    scratch[..i].copy_from_slice(&labels[..i]);
    let mut acc = vec![LogSumExp::new(); k];
    loop {
        for (kk, a) in acc.iter_mut().enumerate() {
            scratch[i] = kk as u8;
            a.add(log_potential(lattice, &scratch, params.beta()));
        }
        if !next_digits(&mut scratch[i + 1..], k as u8) {
            break;
        }
    }
    let logs: Vec<f64> = acc.iter().map(|a| a.value()).collect();
    let total = log_sum_exp(&logs);
    Ok(logs.iter().map(|l| (l - total).exp()).collect())
}

/// Hamiltonian restricted to the window of site `i`: beta times the
/// number of agreeing neighbor pairs inside the window. `window_labels`
/// follows the plan's local layout `[past..., center, future...]`.
/// Honors the plan's pruning flag (pairs internal to the past set are
/// skipped when pruning is on; they cancel in every conditional).
pub fn modified_hamiltonian(
    plan: &OcaPlan,
    i: usize,
    window_labels: &[u8],
    beta: f64,
) -> Result<f64> {
    let sp = plan.site(i);
    if window_labels.len() != sp.window_len() {
        return Err(Error::domain(format!(
            "window of site {} has {} members, got {} labels",
            i,
            sp.window_len(),
            window_labels.len()
        )));
    }
    let mut agree = 0u64;
    for &(a, b) in &sp.pairs_mixed {
        if window_labels[a as usize] == window_labels[b as usize] {
            agree += 1;
        }
    }
    let center = window_labels[sp.center()];
    for &l in &sp.pairs_center {
        if window_labels[l as usize] == center {
            agree += 1;
        }
    }
    if !plan.prune_past_pairs() {
        for &(a, b) in &sp.pairs_past {
            if window_labels[a as usize] == window_labels[b as usize] {
                agree += 1;
            }
        }
    }
    Ok(beta * agree as f64)
}

/// log p(z_i = k | z_0..i-1) under the ordered conditional
/// approximation, for all k at once. The numerator for class k sums
/// exp of the window Hamiltonian over all K^{|f(i)|} labelings of the
/// future set with the center fixed at k; the shared denominator also
/// sums over the center class, so the probabilities sum to one exactly.
/// Only the `g(i)` entries of `labels` are read.
pub fn oca_log_conditional(
    plan: &OcaPlan,
    params: PottsParams,
    labels: &[u8],
    i: usize,
) -> Result<Vec<f64>> {
    let sp = plan.site(i);
    let k = params.k();
    let beta = params.beta();
    check_enumerable(k, sp.future.len(), ENUM_GUARD_LOG2)?;
    let p = sp.past.len();
    let mut window = vec![0u8; sp.window_len()];
    for (l, &j) in sp.past.iter().enumerate() {
        window[l] = labels[j as usize];
    }
    // Agreement among past-only pairs is constant over completions and
    // classes, so with pruning on it is simply never counted; the
    // normalization cancels it either way.
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
        for (kk, a) in acc.iter_mut().enumerate() {
            a.add(beta * (base + tally[kk]) as f64);
        }
        if !next_digits(&mut window[p + 1..], k as u8) {
            break;
        }
    }
    let logs: Vec<f64> = acc.iter().map(|a| a.value()).collect();
    let total = log_sum_exp(&logs);
    Ok(logs.iter().map(|l| l - total).collect())
}

/// p(z_i = · | z_0..i-1) under the ordered conditional approximation.
pub fn oca_conditional(
    plan: &OcaPlan,
    params: PottsParams,
    labels: &[u8],
    i: usize,
) -> Result<Vec<f64>> {
    Ok(oca_log_conditional(plan, params, labels, i)?
        .iter()
        .map(|l| l.exp())
        .collect())
}

/// OCA log-likelihood: the sum over sites of the log ordered
/// conditional at the observed label. Sites are evaluated in parallel;
/// the per-site terms are collected in site order and summed
/// sequentially, so the result is bit-identical across thread counts.
pub fn oca_log_likelihood(plan: &OcaPlan, params: PottsParams, labels: &[u8]) -> Result<f64> {
    debug_assert_eq!(labels.len(), plan.lattice().len());
    let terms: Result<Vec<f64>> = (0..labels.len())
        .into_par_iter()
        .map(|i| Ok(oca_log_conditional(plan, params, labels, i)?[labels[i] as usize]))
        .collect();
    Ok(terms?.iter().sum())
}

/// Besag pseudo-log-likelihood: the sum over sites of the log full
/// conditional p(z_i | neighbors), which needs no normalizing constant.
pub fn pseudo_log_likelihood(lattice: Lattice, params: PottsParams, labels: &[u8]) -> f64 {
    debug_assert_eq!(labels.len(), lattice.len());
    let beta = params.beta();
    let mut total = 0.0;
    let mut agree = vec![0u32; params.k()];
    for i in 0..labels.len() {
        agree.fill(0);
        for j in lattice.neighbors(i) {
            agree[labels[j] as usize] += 1;
        }
        let logs: Vec<f64> = agree.iter().map(|&a| beta * a as f64).collect();
        total += logs[labels[i] as usize] - log_sum_exp(&logs);
    }
    total
}

/// Which likelihood `fit_beta` maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitObjective {
    Oca,
    Pseudo,
}

/// Result of a 1-D maximum-likelihood search for beta.
#[derive(Debug, Clone, Copy)]
pub struct BetaFit {
    pub beta: f64,
    pub log_likelihood: f64,
    /// Estimate landed within tolerance of 0 or beta_max; on constant
    /// fields the objective increases without bound, so the flag warns
    /// that the reported value is a search limit, not an interior max.
    pub boundary: bool,
}

/// Maximizes the chosen log-likelihood over beta in [0, beta_max] by
/// golden-section search to absolute tolerance `tol`. Deterministic.
pub fn fit_beta(
    plan: &OcaPlan,
    k_states: usize,
    labels: &[u8],
    objective: FitObjective,
    beta_max: f64,
    tol: f64,
) -> Result<BetaFit> {
    if !(beta_max > 0.0) || !(tol > 0.0) {
        return Err(Error::domain(format!(
            "need beta_max > 0 and tol > 0, got {beta_max}, {tol}"
        )));
    }
    // Evaluation failures surface as NaN, which the line search reports
    // as a numerical error carrying the offending beta.
    let eval = |beta: f64| -> f64 {
        let params = match PottsParams::new(k_states, beta) {
            Ok(p) => p,
            Err(_) => return f64::NAN,
        };
        match objective {
            FitObjective::Oca => oca_log_likelihood(plan, params, labels).unwrap_or(f64::NAN),
            FitObjective::Pseudo => pseudo_log_likelihood(plan.lattice(), params, labels),
        }
    };
    let line = golden_section_max(eval, 0.0, beta_max, tol)?;
    Ok(BetaFit {
        beta: line.x,
        log_likelihood: line.value,
        boundary: line.boundary_hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn lat(n1: usize, n2: usize) -> Lattice {
        Lattice::new(n1, n2).unwrap()
    }

    fn full_plan(lattice: Lattice) -> OcaPlan {
        let n = lattice.len();
        OcaPlan::build(lattice, n, n, true)
    }

    fn random_field(rng: &mut impl Rng, n: usize, k: usize) -> Vec<u8> {
        (0..n).map(|_| rng.gen_range(0..k as u8)).collect()
    }

    #[test]
    fn summary_stat_hand_cases() {
        let l = lat(2, 2);
        assert_eq!(summary_stat(l, &[0, 0, 0, 0]), 4);
        assert_eq!(summary_stat(l, &[0, 1, 1, 0]), 0);
        assert_eq!(summary_stat(l, &[0, 1, 0, 1]), 2);
    }

    #[test]
    fn log_potential_hand_cases() {
        let l = lat(2, 2);
        assert_eq!(log_potential(l, &[0, 1, 1, 0], 0.9), 0.0);
        assert_abs_diff_eq!(log_potential(l, &[1, 1, 1, 1], 0.35), 1.4, epsilon = 1e-15);
        assert_eq!(log_potential(l, &[0, 1, 0, 1], 0.0), 0.0);
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(PottsParams::new(1, 0.5).is_err());
        assert!(PottsParams::new(2, -0.1).is_err());
        assert!(PottsParams::new(2, f64::NAN).is_err());
        assert!(PottsParams::new(2, 0.0).is_ok());
    }

    #[test]
    fn label_field_validates() {
        let l = lat(2, 2);
        assert!(LabelField::new(l, 2, vec![0, 1, 1, 0]).is_ok());
        assert!(LabelField::new(l, 2, vec![0, 1, 2, 0]).is_err());
        assert!(LabelField::new(l, 2, vec![0, 1, 1]).is_err());
    }

    #[test]
    fn exact_density_uniform_at_beta_zero() {
        let l = lat(1, 2);
        let params = PottsParams::new(2, 0.0).unwrap();
        for labels in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let d = exact_log_density(l, params, &labels).unwrap();
            assert_abs_diff_eq!(d.exp(), 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn exact_density_two_site_by_hand() {
        // 1x2 grid, K=2, beta=log 2: weights are 2,1,1,2 over the four
        // configurations, so p(0,0) = 2/6.
        let l = lat(1, 2);
        let params = PottsParams::new(2, 2.0f64.ln()).unwrap();
        let d = exact_log_density(l, params, &[0, 0]).unwrap();
        assert_abs_diff_eq!(d.exp(), 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_densities_sum_to_one() {
        let l = lat(3, 3);
        let params = PottsParams::new(2, 0.35).unwrap();
        let mut labels = vec![0u8; 9];
        let mut total = 0.0;
        loop {
            total += exact_log_density(l, params, &labels).unwrap().exp();
            if !next_digits(&mut labels, 2) {
                break;
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_conditional_guard_rejects_large_grids() {
        let l = lat(50, 50);
        let params = PottsParams::new(2, 0.5).unwrap();
        match exact_log_density(l, params, &vec![0u8; 2500]) {
            Err(Error::Capacity { .. }) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn exact_conditional_two_site_by_hand() {
        // Last site of a 1x2 grid: p(z_1 = 0 | z_0 = 0) = 2/3 at
        // beta = log 2.
        let l = lat(1, 2);
        let params = PottsParams::new(2, 2.0f64.ln()).unwrap();
        let probs = exact_conditional(l, params, &[0, 0], 1).unwrap();
        assert_abs_diff_eq!(probs[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(probs[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_conditional_uniform_at_beta_zero() {
        let l = lat(2, 3);
        let params = PottsParams::new(3, 0.0).unwrap();
        let labels = [0u8, 1, 2, 0, 1, 2];
        for i in 0..6 {
            for &p in &exact_conditional(l, params, &labels, i).unwrap() {
                assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn exact_conditional_last_site_is_local() {
        // With no future sites the conditional depends on the past
        // neighbors only: p(k) prop exp(beta * agreeing neighbors).
        let l = lat(2, 2);
        let beta = 0.7;
        let params = PottsParams::new(2, beta).unwrap();
        let labels = [0u8, 1, 1, 0];
        let probs = exact_conditional(l, params, &labels, 3).unwrap();
        // neighbors of site 3 are sites 1 and 2, both labeled 1
        let w = [1.0, (2.0 * beta).exp()];
        assert_abs_diff_eq!(probs[1], w[1] / (w[0] + w[1]), epsilon = 1e-12);
    }

    #[test]
    fn modified_hamiltonian_trivial_cases() {
        let l = lat(12, 12);
        let plan = OcaPlan::build(l, 0, 0, true);
        assert_eq!(modified_hamiltonian(&plan, 65, &[0], 0.8).unwrap(), 0.0);
        let plan = OcaPlan::build(l, 10, 6, false);
        let window = vec![3u8; plan.site(65).window_len()];
        assert_eq!(modified_hamiltonian(&plan, 65, &window, 0.0).unwrap(), 0.0);
        assert!(modified_hamiltonian(&plan, 65, &[0, 1], 0.5).is_err());
    }

    #[test]
    fn modified_hamiltonian_counts_all_window_pairs() {
        // All labels equal: the Hamiltonian is beta times the number of
        // pairs the evaluation may see, which depends on the pruning
        // flag. The expected counts come from the plan's own pair lists,
        // which are independently tested against brute force.
        let l = lat(12, 12);
        for prune in [false, true] {
            let plan = OcaPlan::build(l, 10, 6, prune);
            let sp = plan.site(65);
            let mut expect = sp.pairs_mixed.len() + sp.pairs_center.len();
            if !prune {
                expect += sp.pairs_past.len();
            }
            let window = vec![2u8; sp.window_len()];
            let h = modified_hamiltonian(&plan, 65, &window, 0.35).unwrap();
            assert_abs_diff_eq!(h, 0.35 * expect as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn oca_conditional_uniform_at_beta_zero() {
        let l = lat(3, 3);
        let plan = OcaPlan::build(l, 4, 2, true);
        let params = PottsParams::new(3, 0.0).unwrap();
        let labels = [0u8, 1, 2, 0, 1, 2, 0, 1, 2];
        for i in 0..9 {
            for &p in &oca_conditional(&plan, params, &labels, i).unwrap() {
                assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn oca_conditional_no_future_closed_form() {
        // m_f = 0: p(k) prop exp(beta * #past window members that are
        // lattice neighbors of i with label k).
        let l = lat(3, 3);
        let plan = OcaPlan::build(l, 4, 0, true);
        let beta = 0.6;
        let params = PottsParams::new(2, beta).unwrap();
        let mut rng = master_rng(5);
        for _ in 0..20 {
            let labels = random_field(&mut rng, 9, 2);
            for i in 0..9 {
                let sp = plan.site(i);
                let mut agree = [0u32; 2];
                for &l_idx in &sp.pairs_center {
                    agree[labels[sp.past[l_idx as usize] as usize] as usize] += 1;
                }
                let w = [
                    (beta * agree[0] as f64).exp(),
                    (beta * agree[1] as f64).exp(),
                ];
                let probs = oca_conditional(&plan, params, &labels, i).unwrap();
                assert_abs_diff_eq!(probs[0], w[0] / (w[0] + w[1]), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn full_sets_match_exact_conditional() {
        // The exactness property: with g(i) and f(i) covering the whole
        // grid the approximation collapses to the true ordered
        // conditional, site by site.
        let mut rng = master_rng(11);
        for (n1, n2, k) in [(1, 4, 2), (2, 2, 2), (2, 3, 2), (3, 3, 2), (1, 4, 3), (2, 3, 3)] {
            let l = lat(n1, n2);
            let plan = full_plan(l);
            for &beta in &[0.0, 0.35, 0.8] {
                let params = PottsParams::new(k, beta).unwrap();
                let labels = random_field(&mut rng, l.len(), k);
                for i in 0..l.len() {
                    let oca = oca_conditional(&plan, params, &labels, i).unwrap();
                    let exact = exact_conditional(l, params, &labels, i).unwrap();
                    for (a, b) in oca.iter().zip(&exact) {
                        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn full_sets_match_exact_log_density() {
        let mut rng = master_rng(12);
        let l = lat(3, 3);
        let plan = full_plan(l);
        let params = PottsParams::new(2, 0.35).unwrap();
        for _ in 0..5 {
            let labels = random_field(&mut rng, 9, 2);
            let oca = oca_log_likelihood(&plan, params, &labels).unwrap();
            let exact = exact_log_density(l, params, &labels).unwrap();
            assert_abs_diff_eq!(oca, exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn oca_log_likelihood_at_beta_zero() {
        let l = lat(12, 12);
        let plan = OcaPlan::build(l, 8, 4, true);
        let params = PottsParams::new(3, 0.0).unwrap();
        let labels = vec![1u8; 144];
        let ll = oca_log_likelihood(&plan, params, &labels).unwrap();
        assert_abs_diff_eq!(ll, 144.0 * (1.0f64 / 3.0).ln(), epsilon = 1e-9);
    }

    #[test]
    fn conditionals_normalize() {
        let mut rng = master_rng(13);
        for _ in 0..200 {
            let n1 = rng.gen_range(1..=5);
            let n2 = rng.gen_range(1..=5);
            let k = [2usize, 3, 5][rng.gen_range(0..3)];
            let l = lat(n1, n2);
            let m_g = rng.gen_range(0..=6);
            let m_f = rng.gen_range(0..=6);
            let plan = OcaPlan::build(l, m_g, m_f, rng.gen());
            let beta = rng.gen_range(0.0..1.2);
            let params = PottsParams::new(k, beta).unwrap();
            let labels = random_field(&mut rng, l.len(), k);
            let i = rng.gen_range(0..l.len());
            let probs = oca_conditional(&plan, params, &labels, i).unwrap();
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "sum {total}");
        }
    }

    #[test]
    fn pruning_does_not_change_conditionals() {
        let mut rng = master_rng(14);
        let l = lat(5, 6);
        let kept = OcaPlan::build(l, 6, 3, false);
        let pruned = OcaPlan::build(l, 6, 3, true);
        let params = PottsParams::new(3, 0.9).unwrap();
        for _ in 0..10 {
            let labels = random_field(&mut rng, 30, 3);
            for i in 0..30 {
                let a = oca_conditional(&kept, params, &labels, i).unwrap();
                let b = oca_conditional(&pruned, params, &labels, i).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert_abs_diff_eq!(x, y, epsilon = 1e-12);
                }
            }
            let la = oca_log_likelihood(&kept, params, &labels).unwrap();
            let lb = oca_log_likelihood(&pruned, params, &labels).unwrap();
            assert_abs_diff_eq!(la, lb, epsilon = 1e-10);
        }
    }

    #[test]
    fn parallel_equals_serial_bitwise() {
        let mut rng = master_rng(15);
        let l = lat(10, 10);
        let plan = OcaPlan::build(l, 8, 4, true);
        let params = PottsParams::new(3, 0.55).unwrap();
        let labels = random_field(&mut rng, 100, 3);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| oca_log_likelihood(&plan, params, &labels).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| oca_log_likelihood(&plan, params, &labels).unwrap());
        assert_eq!(one.to_bits(), four.to_bits());
    }

    #[test]
    fn label_permutation_leaves_everything_invariant() {
        let mut rng = master_rng(16);
        let l = lat(4, 5);
        let plan = OcaPlan::build(l, 5, 3, true);
        let params = PottsParams::new(3, 0.7).unwrap();
        let labels = random_field(&mut rng, 20, 3);
        let perm = [2u8, 0, 1];
        let relabeled: Vec<u8> = labels.iter().map(|&z| perm[z as usize]).collect();
        assert_eq!(summary_stat(l, &labels), summary_stat(l, &relabeled));
        assert_abs_diff_eq!(
            oca_log_likelihood(&plan, params, &labels).unwrap(),
            oca_log_likelihood(&plan, params, &relabeled).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pseudo_log_likelihood(l, params, &labels),
            pseudo_log_likelihood(l, params, &relabeled),
            epsilon = 1e-12
        );
        for i in [0, 7, 19] {
            let a = oca_conditional(&plan, params, &labels, i).unwrap();
            let b = oca_conditional(&plan, params, &relabeled, i).unwrap();
            for k in 0..3 {
                assert_abs_diff_eq!(a[k], b[perm[k] as usize], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn pseudo_likelihood_hand_cases() {
        let l = lat(2, 2);
        let params = PottsParams::new(2, 0.0).unwrap();
        assert_abs_diff_eq!(
            pseudo_log_likelihood(l, params, &[0, 1, 1, 0]),
            4.0 * 0.5f64.ln(),
            epsilon = 1e-14
        );
        let b = 0.45;
        let params = PottsParams::new(2, b).unwrap();
        let expect = 4.0 * ((2.0 * b).exp() / ((2.0 * b).exp() + 1.0)).ln();
        assert_abs_diff_eq!(
            pseudo_log_likelihood(l, params, &[1, 1, 1, 1]),
            expect,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pseudo_likelihood_matches_per_site_oracle() {
        let mut rng = master_rng(17);
        let l = lat(3, 3);
        let params = PottsParams::new(3, 0.65).unwrap();
        for _ in 0..20 {
            let labels = random_field(&mut rng, 9, 3);
            let mut expect = 0.0;
            for i in 0..9 {
                let mut weights = vec![0.0f64; 3];
                for (kk, w) in weights.iter_mut().enumerate() {
                    let agree = l
                        .neighbors(i)
                        .filter(|&j| labels[j] as usize == kk)
                        .count();
                    *w = (params.beta() * agree as f64).exp();
                }
                let total: f64 = weights.iter().sum();
                expect += (weights[labels[i] as usize] / total).ln();
            }
            assert_abs_diff_eq!(
                pseudo_log_likelihood(l, params, &labels),
                expect,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn fit_beta_flags_constant_field() {
        let l = lat(6, 6);
        let plan = OcaPlan::build(l, 6, 3, true);
        let labels = vec![0u8; 36];
        let fit = fit_beta(&plan, 2, &labels, FitObjective::Oca, 2.0, 1e-4).unwrap();
        assert!(fit.boundary);
        assert!(fit.beta > 2.0 - 1e-3);
        let fit = fit_beta(&plan, 2, &labels, FitObjective::Pseudo, 2.0, 1e-4).unwrap();
        assert!(fit.boundary);
    }

    #[test]
    fn fit_beta_near_zero_for_iid_field() {
        let mut rng = master_rng(18);
        let l = lat(32, 32);
        let labels = random_field(&mut rng, l.len(), 2);
        let plan = OcaPlan::build(l, 8, 4, true);
        for objective in [FitObjective::Oca, FitObjective::Pseudo] {
            let fit = fit_beta(&plan, 2, &labels, objective, 2.0, 1e-4).unwrap();
            assert!(fit.beta < 0.05, "{objective:?} gave {}", fit.beta);
        }
    }

    #[test]
    fn fit_beta_rejects_bad_interval() {
        let l = lat(2, 2);
        let plan = OcaPlan::build(l, 2, 2, true);
        assert!(fit_beta(&plan, 2, &[0, 1, 1, 0], FitObjective::Oca, 0.0, 1e-4).is_err());
    }
}
