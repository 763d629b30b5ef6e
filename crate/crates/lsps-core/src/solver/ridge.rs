//! Ridge regression by conjugate gradient on the normal equations, with the
//! intercept handled through implicit column centering (which keeps the
//! covariate matrix sparse).
//!
//! Minimizes Σ(uᵢ − b − βᵀxᵢ)² + α·Σβⱼ², intercept unpenalized.

use crate::dataset::assign_folds;
use crate::error::{LspsError, Result};
use crate::sparse::MatrixView;

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct RidgeConfig {
    /// Relative residual tolerance for the conjugate-gradient solve.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            cg_tol: 1e-8,
            cg_max_iter: 2000,
        }
    }
}

struct CenteredOp<'a> {
    x: &'a MatrixView<'a>,
    mask: Option<&'a [bool]>,
    n_active: usize,
    col_means: Vec<f64>,
    alpha: f64,
    scratch: Vec<f64>,
}

impl<'a> CenteredOp<'a> {
    fn new(x: &'a MatrixView<'a>, mask: Option<&'a [bool]>, alpha: f64) -> Self {
        let n = x.n_rows();
        let n_active = mask.map_or(n, |m| m.iter().filter(|&&b| b).count());
        let col_means = match mask {
            None => (0..x.n_cols())
                .map(|j| x.col(j).sum() / n_active as f64)
                .collect(),
            Some(m) => x.col_means_masked(m, n_active),
        };
        CenteredOp {
            x,
            mask,
            n_active,
            col_means,
            alpha,
            scratch: vec![0.0; n],
        }
    }

    fn active(&self, i: usize) -> bool {
        self.mask.map_or(true, |m| m[i])
    }

    /// out = (X_cᵀ X_c + αI) v, where X_c is the column-centered design.
    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        let shift: f64 = self.col_means.iter().zip(v).map(|(&m, &vj)| m * vj).sum();
        self.scratch.fill(0.0);
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                match self.mask {
                    None => self.x.col(j).axpy(vj, &mut self.scratch),
                    Some(m) => self.x.col(j).axpy_masked(vj, &mut self.scratch, m),
                }
            }
        }
        let mut w_sum = 0.0;
        for i in 0..self.scratch.len() {
            if self.active(i) {
                self.scratch[i] -= shift;
                w_sum += self.scratch[i];
            }
        }
        for j in 0..self.x.n_cols() {
            let xtw = match self.mask {
                None => self.x.col(j).dot(&self.scratch),
                Some(m) => self.x.col(j).dot_masked(&self.scratch, m),
            };
            out[j] = xtw - self.col_means[j] * w_sum + self.alpha * v[j];
        }
    }

    /// rhs = X_cᵀ u_c
    fn rhs(&self, target: &[f64]) -> (Vec<f64>, f64) {
        let mut u_sum = 0.0;
        for (i, &u) in target.iter().enumerate() {
            if self.active(i) {
                u_sum += u;
            }
        }
        let u_mean = u_sum / self.n_active as f64;
        let mut centered = vec![0.0; target.len()];
        for (i, &u) in target.iter().enumerate() {
            if self.active(i) {
                centered[i] = u - u_mean;
            }
        }
        let rhs = (0..self.x.n_cols())
            .map(|j| match self.mask {
                None => self.x.col(j).dot(&centered),
                Some(m) => self.x.col(j).dot_masked(&centered, m),
            })
            .collect();
        (rhs, u_mean)
    }
}

pub(crate) fn fit_ridge_masked(
    x: &MatrixView<'_>,
    target: &[f64],
    alpha: f64,
    mask: Option<&[bool]>,
    warm: Option<&[f64]>,
    config: &RidgeConfig,
) -> Result<RidgeFit> {
    if x.n_rows() != target.len() {
        return Err(LspsError::Dimension(format!(
            "covariate rows {} != target length {}",
            x.n_rows(),
            target.len()
        )));
    }
    if alpha < 0.0 {
        return Err(LspsError::Validation("alpha must be nonnegative".into()));
    }
    let m = x.n_cols();
    let mut op = CenteredOp::new(x, mask, alpha);
    let (rhs, u_mean) = op.rhs(target);

    let mut beta = warm.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let mut r = vec![0.0; m];
    op.apply(&beta, &mut r);
    for j in 0..m {
        r[j] = rhs[j] - r[j];
    }
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        // target is (weighted-)orthogonal to every centered column
        let x_mean: f64 = op
            .col_means
            .iter()
            .zip(&beta)
            .map(|(&mj, &bj)| mj * bj)
            .sum();
        let _ = x_mean;
        return Ok(RidgeFit {
            coefficients: vec![0.0; m],
            intercept: u_mean,
            alpha,
        });
    }

    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = vec![0.0; m];
    let mut converged = rs_old.sqrt() <= config.cg_tol * rhs_norm;
    let mut iterations = 0usize;
    while !converged && iterations < config.cg_max_iter {
        iterations += 1;
        op.apply(&p, &mut ap);
        let p_ap: f64 = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
        if p_ap <= 0.0 {
            return Err(LspsError::Numerical(
                "ridge normal equations are not positive definite (alpha too small for a \
                 rank-deficient design)"
                    .into(),
            ));
        }
        let step = rs_old / p_ap;
        for j in 0..m {
            beta[j] += step * p[j];
            r[j] -= step * ap[j];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        if rs_new.sqrt() <= config.cg_tol * rhs_norm {
            converged = true;
            break;
        }
        let ratio = rs_new / rs_old;
        for j in 0..m {
            p[j] = r[j] + ratio * p[j];
        }
        rs_old = rs_new;
    }
    if !converged {
        return Err(LspsError::Numerical(format!(
            "ridge conjugate gradient did not converge in {} iterations",
            config.cg_max_iter
        )));
    }
    let x_dot_beta: f64 = op
        .col_means
        .iter()
        .zip(&beta)
        .map(|(&mj, &bj)| mj * bj)
        .sum();
    Ok(RidgeFit {
        coefficients: beta,
        intercept: u_mean - x_dot_beta,
        alpha,
    })
}

pub fn fit_ridge(x: &MatrixView<'_>, target: &[f64], alpha: f64) -> Result<RidgeFit> {
    fit_ridge_masked(x, target, alpha, None, None, &RidgeConfig::default())
}

fn sse_masked(fit: &RidgeFit, x: &MatrixView<'_>, target: &[f64], mask: Option<&[bool]>) -> f64 {
    let mut pred = vec![fit.intercept; x.n_rows()];
    for (j, &c) in fit.coefficients.iter().enumerate() {
        if c != 0.0 {
            x.col(j).axpy(c, &mut pred);
        }
    }
    let mut rss = 0.0;
    for i in 0..target.len() {
        if mask.map_or(true, |m| m[i]) {
            let e = target[i] - pred[i];
            rss += e * e;
        }
    }
    rss
}

/// 1 − RSS/TSS of the fit evaluated on the given data.
pub fn r_squared(fit: &RidgeFit, x: &MatrixView<'_>, target: &[f64]) -> Result<f64> {
    if x.n_cols() != fit.coefficients.len() || x.n_rows() != target.len() {
        return Err(LspsError::Dimension("r_squared: shape mismatch".into()));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let tss: f64 = target.iter().map(|&u| (u - mean) * (u - mean)).sum();
    if tss == 0.0 {
        return Err(LspsError::Validation(
            "r_squared undefined for a constant target".into(),
        ));
    }
    Ok(1.0 - sse_masked(fit, x, target, None) / tss)
}

/// Default penalty grid for the held-out R², log-spaced 1e-4..1e2.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..7).map(|i| 10f64.powi(i - 4)).collect()
}

/// Held-out R² of ridge predictions of `target` from `x`: 5 outer folds, with
/// the penalty chosen on an inner 80/20 split of each training set. Returns
/// the mean R² over outer test folds.
pub fn heldout_r_squared(x: &MatrixView<'_>, target: &[f64], seed: u64) -> Result<f64> {
    heldout_r_squared_with(x, target, seed, &default_alpha_grid(), &RidgeConfig {
        cg_tol: 1e-6,
        cg_max_iter: 300,
    })
}

pub(crate) fn heldout_r_squared_with(
    x: &MatrixView<'_>,
    target: &[f64],
    seed: u64,
    alphas: &[f64],
    config: &RidgeConfig,
) -> Result<f64> {
    let n = x.n_rows();
    let mean = target.iter().sum::<f64>() / n as f64;
    if target.iter().all(|&u| u == mean) {
        return Err(LspsError::Validation(
            "r_squared undefined for a constant target".into(),
        ));
    }
    let k = 5usize;
    let outer = assign_folds(n, k, seed ^ 0x0u64.wrapping_add(0x5EED))?;
    let mut total_r2 = 0.0;
    for fold in 0..k as u32 {
        let train: Vec<bool> = (0..n).map(|i| outer.fold_of[i] != fold).collect();
        let test: Vec<bool> = (0..n).map(|i| outer.fold_of[i] == fold).collect();
        let train_idx: Vec<usize> = (0..n).filter(|&i| train[i]).collect();

        // inner 80/20 split of the training rows for alpha selection
        let inner = assign_folds(train_idx.len(), 5, seed ^ 0xA1FA ^ fold as u64)?;
        let mut sel_train = vec![false; n];
        let mut sel_val = vec![false; n];
        for (local, &i) in train_idx.iter().enumerate() {
            if inner.fold_of[local] == 0 {
                sel_val[i] = true;
            } else {
                sel_train[i] = true;
            }
        }

        // alphas descending so warm starts carry between solves
        let mut order: Vec<f64> = alphas.to_vec();
        order.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut best: Option<(f64, f64)> = None; // (alpha, val sse)
        let mut warm: Option<Vec<f64>> = None;
        for &alpha in &order {
            let fit = fit_ridge_masked(x, target, alpha, Some(&sel_train), warm.as_deref(), config)?;
            let sse = sse_masked(&fit, x, target, Some(&sel_val));
            if best.map_or(true, |(_, b)| sse < b) {
                best = Some((alpha, sse));
            }
            warm = Some(fit.coefficients);
        }
        let (alpha, _) = best.unwrap();

        let fit = fit_ridge_masked(x, target, alpha, Some(&train), warm.as_deref(), config)?;
        let test_n = test.iter().filter(|&&b| b).count() as f64;
        let test_mean: f64 = (0..n).filter(|&i| test[i]).map(|i| target[i]).sum::<f64>() / test_n;
        let tss: f64 = (0..n)
            .filter(|&i| test[i])
            .map(|i| (target[i] - test_mean).powi(2))
            .sum();
        if tss == 0.0 {
            return Err(LspsError::Validation(
                "r_squared undefined: constant target in a test fold".into(),
            ));
        }
        let rss = sse_masked(&fit, x, target, Some(&test));
        total_r2 += 1.0 - rss / tss;
    }
    Ok(total_r2 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sparse::SparseMatrix;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_target_gives_zero_coefficients() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let x = SparseMatrix::from_rows(&rows, 2);
        let fit = fit_ridge(&x.view(), &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert!(fit.coefficients.iter().all(|&c| c.abs() < 1e-12));
        assert!(fit.intercept.abs() < 1e-12);
    }

    #[test]
    fn perfect_line_recovered() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let x = SparseMatrix::from_rows(&rows, 1);
        let fit = fit_ridge(&x.view(), &[0.0, 1.0, 2.0], 0.0).unwrap();
        assert_relative_eq!(fit.coefficients[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(fit.intercept, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn exact_linear_target_recovered_at_tiny_alpha() {
        let mut rng = rng::stream(2, &[0x41D]);
        let n = 500;
        let m = 8;
        let beta: Vec<f64> = (0..m).map(|j| (j as f64) - 3.0).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_bool(0.5) as u8 as f64).collect())
            .collect();
        let target: Vec<f64> = rows
            .iter()
            .map(|r| 0.7 + r.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>())
            .collect();
        let x = SparseMatrix::from_rows(&rows, m);
        let fit = fit_ridge(&x.view(), &target, 1e-8).unwrap();
        for j in 0..m {
            assert_relative_eq!(fit.coefficients[j], beta[j], epsilon = 1e-3);
        }
        assert_relative_eq!(fit.intercept, 0.7, epsilon = 1e-3);
    }

    #[test]
    fn large_alpha_shrinks_slopes_to_zero() {
        let mut rng = rng::stream(3, &[0x41D]);
        let n = 100;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let target: Vec<f64> = rows.iter().map(|r| 2.0 + r[0]).collect();
        let x = SparseMatrix::from_rows(&rows, 2);
        let fit = fit_ridge(&x.view(), &target, 1e9).unwrap();
        assert!(fit.coefficients.iter().all(|&c| c.abs() < 1e-4));
        let mean = target.iter().sum::<f64>() / n as f64;
        assert_relative_eq!(fit.intercept, mean, epsilon = 1e-3);
    }

    #[test]
    fn r_squared_perfect_fit() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let x = SparseMatrix::from_rows(&rows, 1);
        let target = [1.0, 3.0, 5.0, 7.0];
        let fit = fit_ridge(&x.view(), &target, 1e-10).unwrap();
        let r2 = r_squared(&fit, &x.view(), &target).unwrap();
        assert!(r2 >= 0.999, "r2 = {r2}");
    }

    #[test]
    fn r_squared_rejects_constant_target() {
        let rows = vec![vec![0.0], vec![1.0]];
        let x = SparseMatrix::from_rows(&rows, 1);
        let fit = RidgeFit {
            coefficients: vec![0.0],
            intercept: 1.0,
            alpha: 1.0,
        };
        assert!(r_squared(&fit, &x.view(), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn heldout_r2_null_target_near_zero() {
        // target independent of X: mean held-out R² over replicates ≈ 0
        let mut total = 0.0;
        let reps = 100;
        for rep in 0..reps {
            let mut rng = rng::stream(rep, &[0x0FF]);
            let n = 200;
            let m = 5;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.gen_bool(0.5) as u8 as f64).collect())
                .collect();
            let target: Vec<f64> = (0..n)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let x = SparseMatrix::from_rows(&rows, m);
            total += heldout_r_squared(&x.view(), &target, rep).unwrap();
        }
        let mean_r2 = total / reps as f64;
        assert!(mean_r2.abs() < 0.1, "mean held-out R² = {mean_r2}");
    }

    #[test]
    fn heldout_r2_half_signal() {
        // signal variance == noise variance → R² ≈ 0.5
        let mut total = 0.0;
        let reps = 30;
        for rep in 0..reps {
            let mut rng = rng::stream(rep, &[0x1FF]);
            let n = 400;
            let m = 4;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..m)
                        .map(|_| {
                            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                        })
                        .collect()
                })
                .collect();
            // signal = x0; Var(signal) = 1; noise sd 1
            let target: Vec<f64> = rows
                .iter()
                .map(|r| {
                    r[0] + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect();
            let x = SparseMatrix::from_rows(&rows, m);
            total += heldout_r_squared(&x.view(), &target, rep).unwrap();
        }
        let mean_r2 = total / reps as f64;
        assert!((mean_r2 - 0.5).abs() < 0.05, "mean held-out R² = {mean_r2}");
    }
}
