//! Covariate-balance diagnostics: stratum weights and weighted standardized
//! mean differences before and after stratification.

use serde::Serialize;

use crate::dataset::CohortDataset;
use crate::error::{LspsError, Result};
use crate::propensity::Stratification;

/// Reciprocal cell-count weights: wᵢ = 1 / n_s^t for subject i's stratum s
/// and treatment group t. Weights within each (stratum, group) cell sum to 1.
#[derive(Debug, Clone, Serialize)]
pub struct StratumWeights {
    pub w: Vec<f64>,
    /// Strata missing one treatment group; covariates are non-evaluable there.
    pub degenerate_strata: Vec<usize>,
}

pub fn stratum_weights(strat: &Stratification, treatment: &[u8]) -> Result<StratumWeights> {
    if strat.stratum_of.len() != treatment.len() {
        return Err(LspsError::Dimension(
            "stratification and treatment lengths differ".into(),
        ));
    }
    let counts = strat.counts(treatment);
    let degenerate_strata: Vec<usize> = counts
        .iter()
        .enumerate()
        .filter(|(_, &(nt, nc))| nt == 0 || nc == 0)
        .map(|(s, _)| s)
        .collect();
    let w = strat
        .stratum_of
        .iter()
        .zip(treatment)
        .map(|(&s, &t)| {
            let (nt, nc) = counts[s as usize];
            let n = if t == 1 { nt } else { nc };
            1.0 / n as f64
        })
        .collect();
    Ok(StratumWeights {
        w,
        degenerate_strata,
    })
}

/// Weighted SMD: (x̄₁ − x̄₀) / √((σ₁² + σ₀²)/2) with frequency-weight means
/// and variances. Zero pooled variance with equal means gives 0; with unequal
/// means the result is an infinite-imbalance sentinel.
pub fn weighted_smd(column: &[f64], treatment: &[u8], weights: &[f64]) -> Result<f64> {
    if column.len() != treatment.len() || column.len() != weights.len() {
        return Err(LspsError::Dimension("smd input lengths differ".into()));
    }
    let mut stats = [GroupStats::default(), GroupStats::default()];
    for ((&x, &t), &w) in column.iter().zip(treatment).zip(weights) {
        stats[t as usize].add(x, w);
    }
    if stats[0].w_sum <= 0.0 || stats[1].w_sum <= 0.0 {
        return Err(LspsError::Validation(
            "both treatment groups need positive total weight".into(),
        ));
    }
    let mean = [stats[0].mean(), stats[1].mean()];
    let var = [stats[0].variance(column, treatment, weights, 0, mean[0]),
               stats[1].variance(column, treatment, weights, 1, mean[1])];
    let pooled = (var[0] + var[1]) / 2.0;
    let diff = mean[1] - mean[0];
    if pooled <= 0.0 {
        if diff == 0.0 {
            return Ok(0.0);
        }
        return Ok(diff.signum() * f64::INFINITY);
    }
    Ok(diff / pooled.sqrt())
}

#[derive(Default)]
struct GroupStats {
    w_sum: f64,
    w_sq_sum: f64,
    wx_sum: f64,
}

impl GroupStats {
    fn add(&mut self, x: f64, w: f64) {
        self.w_sum += w;
        self.w_sq_sum += w * w;
        self.wx_sum += w * x;
    }

    fn mean(&self) -> f64 {
        self.wx_sum / self.w_sum
    }

    /// Frequency-weight variance: S/(S² − Σw²) · Σ wᵢ(xᵢ − x̄)², S = Σ wᵢ.
    fn variance(&self, column: &[f64], treatment: &[u8], weights: &[f64], t: u8, mean: f64) -> f64 {
        let denom = self.w_sum * self.w_sum - self.w_sq_sum;
        if denom <= 0.0 {
            // a single effective datapoint, variance undefined; treat as 0
            return 0.0;
        }
        let mut ss = 0.0;
        for ((&x, &ti), &w) in column.iter().zip(treatment).zip(weights) {
            if ti == t {
                let d = x - mean;
                ss += w * d * d;
            }
        }
        self.w_sum / denom * ss
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateBalance {
    pub covariate: usize,
    pub name: String,
    pub smd_before: f64,
    pub smd_after: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub rows: Vec<CovariateBalance>,
    pub max_abs_adjusted_smd: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Per-covariate SMDs unadjusted (single stratum, unit weights) and adjusted
/// (stratum weights). Pass ⇔ max |adjusted SMD| ≤ 0.1.
pub fn balance_report(data: &CohortDataset, strat: &Stratification) -> Result<BalanceReport> {
    balance_report_view(
        &data.covariates().view(),
        data.covariate_names(),
        data.treatment(),
        strat,
        None,
    )
}

/// As `balance_report` on a column view. `rows`, when given, maps subset
/// positions to original row indices; `treatment` and `strat` are then in
/// subset index space (used after trimming and for augmented matrices).
pub fn balance_report_view(
    x: &crate::sparse::MatrixView<'_>,
    names: &[String],
    treatment: &[u8],
    strat: &Stratification,
    rows: Option<&[usize]>,
) -> Result<BalanceReport> {
    let n_sub = treatment.len();
    if let Some(rows) = rows {
        if rows.len() != n_sub {
            return Err(LspsError::Dimension("row map and treatment lengths differ".into()));
        }
    }
    let unit = vec![1.0; n_sub];
    let weights = stratum_weights(strat, treatment)?;
    let mut warnings = Vec::new();
    for &s in &weights.degenerate_strata {
        warnings.push(format!(
            "stratum {s} has a single treatment group; covariates are non-evaluable there"
        ));
    }
    let mut rows_out = Vec::with_capacity(x.n_cols());
    let mut max_abs = 0.0f64;
    for j in 0..x.n_cols() {
        let full = x.col(j).to_dense(x.n_rows());
        let col: Vec<f64> = match rows {
            Some(rows) => rows.iter().map(|&i| full[i]).collect(),
            None => full,
        };
        let smd_before = weighted_smd(&col, treatment, &unit)?;
        let smd_after = weighted_smd(&col, treatment, &weights.w)?;
        if smd_after.abs() > max_abs {
            max_abs = smd_after.abs();
        }
        rows_out.push(CovariateBalance {
            covariate: j,
            name: names[j].clone(),
            smd_before,
            smd_after,
        });
    }
    Ok(BalanceReport {
        rows: rows_out,
        max_abs_adjusted_smd: max_abs,
        pass: max_abs <= 0.1,
        warnings,
    })
}

impl BalanceReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["covariate", "name", "smd_before", "smd_after"])
            .map_err(csv_err)?;
        for row in &self.rows {
            wtr.write_record([
                row.covariate.to_string(),
                row.name.clone(),
                row.smd_before.to_string(),
                row.smd_after.to_string(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| LspsError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> LspsError {
    LspsError::Parse {
        row: 0,
        column: String::new(),
        message: e.to_string(),
    }
}
