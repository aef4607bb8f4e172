//! MAE, bootstrap standard errors, and the paired bootstrap test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::EvalError;

/// Arithmetic mean of absolute errors.
pub fn mae(errors: &[f64]) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

/// Unweighted mean of per-fold MAEs.
pub fn fold_avg_mae(fold_maes: &[f64]) -> Result<f64, EvalError> {
    if fold_maes.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(fold_maes.iter().sum::<f64>() / fold_maes.len() as f64)
}

/// Nonparametric bootstrap standard error of the MAE: the standard
/// deviation of `resamples` resampled-with-replacement means.
pub fn bootstrap_se(errors: &[f64], resamples: usize, seed: u64) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptySet);
    }
    if resamples == 0 {
        return Err(EvalError::EmptySet);
    }
    let n = errors.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += errors[rng.gen_range(0..n)].abs();
        }
        means.push(sum / n as f64);
    }
    Ok(crate::math::pop_std(&means))
}

/// One-sided paired bootstrap: the fraction of resamples in which method A
/// is at least as bad as method B (ties count toward non-rejection).
pub fn paired_bootstrap(
    err_a: &[f64],
    err_b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    if err_a.len() != err_b.len() {
        return Err(EvalError::LengthMismatch { a: err_a.len(), b: err_b.len() });
    }
    if err_a.is_empty() || resamples == 0 {
        return Err(EvalError::EmptySet);
    }
    let n = err_a.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worse = 0usize;
    for _ in 0..resamples {
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            sum_a += err_a[i].abs();
            sum_b += err_b[i].abs();
        }
        if sum_a >= sum_b {
            worse += 1;
        }
    }
    Ok(worse as f64 / resamples as f64)
}

/// Significance stars for a p-value: `***` < 0.001, `**` < 0.01, `*` < 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
