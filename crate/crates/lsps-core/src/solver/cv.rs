//! Cross-validated selection of the L1 penalty, with warm starts down the
//! λ path within each fold.

use crate::dataset::stratified_folds;
use crate::error::{LspsError, Result};
use crate::solver::logistic::{fit_masked, LassoConfig, LogisticFit};
use crate::sparse::MatrixView;
use crate::stats::sigmoid;

#[derive(Debug, Clone)]
pub struct CvResult {
    /// Descending λ grid.
    pub lambda_grid: Vec<f64>,
    /// Mean held-out log-likelihood per grid point (per-observation).
    pub mean_heldout_loglik: Vec<f64>,
    pub selected_lambda: f64,
    pub seed: u64,
}

/// Log-spaced grid of `n_points` values from `lambda_max` down to
/// `lambda_max * min_ratio`. Defaults in the pipeline: 20 points, 1e-4.
pub fn default_lambda_grid(lambda_max: f64, n_points: usize, min_ratio: f64) -> Vec<f64> {
    assert!(n_points >= 1 && min_ratio > 0.0 && min_ratio < 1.0);
    if n_points == 1 {
        return vec![lambda_max];
    }
    (0..n_points)
        .map(|i| lambda_max * min_ratio.powf(i as f64 / (n_points - 1) as f64))
        .collect()
}

/// Held-out mean log-likelihood of a fit on the rows where `heldout` is true.
fn heldout_loglik(x: &MatrixView<'_>, t: &[u8], fit: &LogisticFit, heldout: &[bool]) -> f64 {
    const EPS_P: f64 = 1e-10;
    let mut eta = vec![fit.intercept; x.n_rows()];
    for (j, &c) in fit.coefficients.iter().enumerate() {
        if c != 0.0 {
            x.col(j).axpy(c, &mut eta);
        }
    }
    let mut ll = 0.0;
    let mut count = 0usize;
    for i in 0..t.len() {
        if heldout[i] {
            let p = sigmoid(eta[i]).clamp(EPS_P, 1.0 - EPS_P);
            ll += if t[i] == 1 { p.ln() } else { (1.0 - p).ln() };
            count += 1;
        }
    }
    ll / count as f64
}

/// Selects λ by k-fold stratified cross-validation on held-out log-likelihood.
/// Ties break toward larger λ.
pub fn cv_select_lambda(
    x: &MatrixView<'_>,
    t: &[u8],
    grid: &[f64],
    k: usize,
    seed: u64,
    config: &LassoConfig,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(LspsError::Validation("lambda grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LspsError::Validation(
            "lambda grid must be strictly descending".into(),
        ));
    }
    let fold_of = stratified_folds(t, k, seed)?;
    let n = t.len();

    let mut total_ll = vec![0.0; grid.len()];
    for fold in 0..k as u32 {
        let train: Vec<bool> = (0..n).map(|i| fold_of[i] != fold).collect();
        let heldout: Vec<bool> = (0..n).map(|i| fold_of[i] == fold).collect();
        let mut warm: Option<LogisticFit> = None;
        for (g, &lambda) in grid.iter().enumerate() {
            let w = warm
                .as_ref()
                .map(|f| (f.coefficients.as_slice(), f.intercept));
            let fit = fit_masked(x, t, lambda, config, Some(&train), w)?;
            total_ll[g] += heldout_loglik(x, t, &fit, &heldout);
            warm = Some(fit);
        }
    }
    let mean_heldout_loglik: Vec<f64> = total_ll.iter().map(|s| s / k as f64).collect();

    let mut best = 0usize;
    for (g, &ll) in mean_heldout_loglik.iter().enumerate() {
        if ll > mean_heldout_loglik[best] {
            best = g;
        }
    }
    Ok(CvResult {
        lambda_grid: grid.to_vec(),
        mean_heldout_loglik,
        selected_lambda: grid[best],
        seed,
    })
}
