//! Scoring rules: RMSE for point estimates, the Brier score for
//! per-site class forecasts, and the empirical CRPS for predictive
//! samples.

use crate::error::{Error, Result};

/// Root mean squared error of a batch of estimates of one true value.
pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::domain("rmse of an empty batch"));
    }
    let mse = estimates
        .iter()
        .map(|e| (e - truth) * (e - truth))
        .sum::<f64>()
        / estimates.len() as f64;
    Ok(mse.sqrt())
}

/// Brier score of per-site class-probability forecasts against
/// one-hot truth: the mean over sites of the squared distance between
/// the forecast vector and the indicator of the true class. Ranges
/// over [0, 2]. `forecasts` is row-major, one row of `k_states`
/// probabilities per site; each row must sum to 1 within 1e-9.
pub fn brier_score(forecasts: &[f64], k_states: usize, truth: &[u8]) -> Result<f64> {
    if k_states == 0 || truth.is_empty() || forecasts.len() != truth.len() * k_states {
        return Err(Error::domain(format!(
            "forecast matrix of {} entries does not match {} sites x {} classes",
            forecasts.len(),
            truth.len(),
            k_states
        )));
    }
    let mut total = 0.0;
    for (t, row) in forecasts.chunks_exact(k_states).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "forecast row {t} sums to {sum}, not 1"
            )));
        }
        let o = truth[t] as usize;
        if o >= k_states {
            return Err(Error::domain(format!(
                "true label {o} out of range for {k_states} classes"
            )));
        }
        for (j, &f) in row.iter().enumerate() {
            let obs = if j == o { 1.0 } else { 0.0 };
            total += (f - obs) * (f - obs);
        }
    }
    Ok(total / truth.len() as f64)
}

/// CRPS of the empirical predictive CDF of `sample` at outcome `y`,
/// via the pairwise identity mean|X - y| - mean|X - X'|/2 with the
/// pair sum computed exactly in O(m log m) from the sorted sample.
pub fn crps_empirical(sample: &[f64], y: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::domain("crps of an empty sample"));
    }
    let m = sample.len();
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite predictive sample"));
    let abs_err = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
    // sum over ordered pairs of |x_i - x_j| = 2 * sum_t x_(t) * (2t - m + 1)
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(t, x)| x * (2.0 * t as f64 - m as f64 + 1.0))
        .sum();
    Ok(abs_err - pair_sum / (m as f64 * m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn rmse_hand_cases() {
        assert_eq!(rmse(&[0.35, 0.35], 0.35).unwrap(), 0.0);
        assert_abs_diff_eq!(rmse(&[0.3, 0.4], 0.35).unwrap(), 0.05, epsilon = 1e-15);
        assert!(rmse(&[], 0.0).is_err());
    }

    #[test]
    fn rmse_matches_two_pass_reference() {
        let mut rng = master_rng(41);
        let xs: Vec<f64> = (0..257).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let truth = 0.3;
        let reference = {
            let sq: Vec<f64> = xs.iter().map(|x| (x - truth) * (x - truth)).collect();
            (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
        };
        assert_abs_diff_eq!(rmse(&xs, truth).unwrap(), reference, epsilon = 1e-14);
    }

    #[test]
    fn brier_hand_cases() {
        // perfect one-hot forecast
        let f = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(brier_score(&f, 3, &[0, 2]).unwrap(), 0.0);
        // uniform forecast over 3 classes scores 2/3 per site
        let f = [1.0 / 3.0; 6];
        assert_abs_diff_eq!(
            brier_score(&f, 3, &[1, 0]).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn brier_rejects_bad_rows() {
        assert!(brier_score(&[0.9, 0.2], 2, &[0]).is_err());
        assert!(brier_score(&[0.5, 0.5], 2, &[2]).is_err());
        assert!(brier_score(&[0.5, 0.5, 0.5], 2, &[0]).is_err());
    }

    #[test]
    fn brier_is_invariant_under_joint_class_permutation() {
        let mut rng = master_rng(42);
        let k = 3;
        let n = 40;
        let mut forecasts = Vec::with_capacity(n * k);
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            forecasts.extend(raw.iter().map(|r| r / s));
        }
        let truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
        let perm = [2usize, 0, 1];
        let mut permuted = vec![0.0; n * k];
        for t in 0..n {
            for j in 0..k {
                permuted[t * k + perm[j]] = forecasts[t * k + j];
            }
        }
        let truth_p: Vec<u8> = truth.iter().map(|&o| perm[o as usize] as u8).collect();
        assert_abs_diff_eq!(
            brier_score(&forecasts, k, &truth).unwrap(),
            brier_score(&permuted, k, &truth_p).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn brier_stays_in_range() {
        let mut rng = master_rng(43);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let row: Vec<f64> = raw.iter().map(|r| r / s).collect();
            let b = brier_score(&row, 4, &[rng.gen_range(0..4)]).unwrap();
            assert!((0.0..=2.0).contains(&b));
        }
    }

    #[test]
    fn crps_hand_cases() {
        assert_eq!(crps_empirical(&[1.0, 1.0, 1.0], 1.0).unwrap(), 0.0);
        // {0,2} at y=1: mean|X-1| = 1, mean|X-X'| = 1, so 1 - 1/2
        assert_abs_diff_eq!(crps_empirical(&[0.0, 2.0], 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(crps_empirical(&[], 1.0).is_err());
    }

    #[test]
    fn crps_matches_standard_normal_closed_form() {
        // CRPS of N(0,1) at 0 is 2*phi(0) - 1/sqrt(pi)
        let mut rng = master_rng(44);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                rand_distr::Distribution::sample(
                    &rand_distr::StandardNormal,
                    &mut rng,
                )
            })
            .collect();
        let closed = 2.0 * (-0.5f64 * 0.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
            - 1.0 / std::f64::consts::PI.sqrt();
        let got = crps_empirical(&draws, 0.0).unwrap();
        assert_abs_diff_eq!(got, closed, epsilon = 5e-3);
        assert_abs_diff_eq!(closed, 0.2337, epsilon = 5e-4);
    }

    #[test]
    fn crps_is_nonnegative_and_scale_equivariant() {
        let mut rng = master_rng(45);
        for _ in 0..100 {
            let m = rng.gen_range(1..12);
            let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y = rng.gen_range(-3.0..3.0);
            let a = rng.gen_range(-4.0..4.0);
            let base = crps_empirical(&xs, y).unwrap();
            assert!(base >= -1e-12);
            let scaled: Vec<f64> = xs.iter().map(|x| a * x).collect();
            let got = crps_empirical(&scaled, a * y).unwrap();
            assert_abs_diff_eq!(got, a.abs() * base, epsilon = 1e-10 * (1.0 + base));
        }
    }

    #[test]
    fn crps_matches_grid_integration_oracle() {
        // Riemann midpoint integration of (F(t) - 1{y <= t})^2 on a
        // fine grid; the integrand is piecewise constant so the error
        // is confined to cells containing a jump.
        let mut rng = master_rng(46);
        for _ in 0..5 {
            let m = rng.gen_range(1..8);
            let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let y = rng.gen_range(-1.5..1.5);
            let lo = xs.iter().cloned().fold(y, f64::min) - 1.0;
            let hi = xs.iter().cloned().fold(y, f64::max) + 1.0;
            let steps = 1_000_000usize;
            let h = (hi - lo) / steps as f64;
            let mut integral = 0.0;
            for s in 0..steps {
                let t = lo + (s as f64 + 0.5) * h;
                let f = xs.iter().filter(|&&x| x <= t).count() as f64 / m as f64;
                let step = if y <= t { 1.0 } else { 0.0 };
                integral += (f - step) * (f - step) * h;
            }
            let got = crps_empirical(&xs, y).unwrap();
            assert_abs_diff_eq!(got, integral, epsilon = 1e-4);
        }
    }
}
