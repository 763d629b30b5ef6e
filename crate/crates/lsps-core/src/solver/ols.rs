//! Within-stratum linear regression of outcome on treatment. With a single
//! binary regressor this is the difference of group means; the standard error
//! comes from the classical pooled-variance two-group formula.

use crate::error::{LspsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StratumOls {
    /// Control-group mean.
    pub alpha_s: f64,
    /// Treatment effect (treated mean − control mean).
    pub nu_s: f64,
    pub se_nu_s: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

pub fn fit_ols_stratum(y: &[f64], t: &[u8]) -> Result<StratumOls> {
    if y.len() != t.len() {
        return Err(LspsError::Dimension(format!(
            "outcome length {} != treatment length {}",
            y.len(),
            t.len()
        )));
    }
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&yi, &ti) in y.iter().zip(t) {
        if ti == 1 {
            s1 += yi;
            n1 += 1;
        } else {
            s0 += yi;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(LspsError::Validation(format!(
            "stratum has {n1} treated and {n0} control subjects; OLS needs both"
        )));
    }
    let mean1 = s1 / n1 as f64;
    let mean0 = s0 / n0 as f64;
    let rss: f64 = y
        .iter()
        .zip(t)
        .map(|(&yi, &ti)| {
            let fitted = if ti == 1 { mean1 } else { mean0 };
            (yi - fitted) * (yi - fitted)
        })
        .sum();
    let n = n1 + n0;
    // residual df = n − 2; with one subject per group the fit is exact
    let se = if n > 2 {
        let s2 = rss / (n - 2) as f64;
        (s2 * (1.0 / n1 as f64 + 1.0 / n0 as f64)).sqrt()
    } else {
        0.0
    };
    Ok(StratumOls {
        alpha_s: mean0,
        nu_s: mean1 - mean0,
        se_nu_s: se,
        n_treated: n1,
        n_control: n0,
    })
}
