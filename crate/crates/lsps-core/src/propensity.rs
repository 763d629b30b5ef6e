//! Pipeline steps around the propensity model: instrument screening,
//! preference-score transform, equipoise diagnostic, and stratification with
//! equal treated counts.

use serde::Serialize;

use crate::dataset::CohortDataset;
use crate::error::{LspsError, Result};
use crate::stats::{logit, pearson, sigmoid};

/// Covariates that look like instruments: strongly correlated with treatment,
/// nearly uncorrelated with outcome. Reported, never removed automatically.
#[derive(Debug, Clone, Serialize)]
pub struct InstrumentReport {
    pub flagged: Vec<FlaggedInstrument>,
    /// Columns skipped because they are constant (correlation undefined).
    pub skipped_constant: Vec<usize>,
    pub treatment_threshold: f64,
    pub outcome_threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlaggedInstrument {
    pub covariate: usize,
    pub name: String,
    pub treatment_correlation: f64,
    pub outcome_correlation: f64,
}

/// Flags covariates with |corr(x, t)| ≥ `t_threshold` and
/// |corr(x, y)| ≤ `y_threshold`.
pub fn screen_instruments(
    data: &CohortDataset,
    t_threshold: f64,
    y_threshold: f64,
) -> Result<InstrumentReport> {
    screen_instruments_view(
        &data.covariates().view(),
        data.covariate_names(),
        data.treatment(),
        &data.outcome().screening_vector(),
        t_threshold,
        y_threshold,
    )
}

/// As `screen_instruments` on a column view, with the outcome already
/// reduced to its screening vector.
pub fn screen_instruments_view(
    x: &crate::sparse::MatrixView<'_>,
    names: &[String],
    treatment: &[u8],
    y: &[f64],
    t_threshold: f64,
    y_threshold: f64,
) -> Result<InstrumentReport> {
    for (name, v) in [("treatment", t_threshold), ("outcome", y_threshold)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(LspsError::Validation(format!(
                "{name} threshold must lie in (0, 1], got {v}"
            )));
        }
    }
    let n = x.n_rows();
    let t: Vec<f64> = treatment.iter().map(|&v| v as f64).collect();
    let mut flagged = Vec::new();
    let mut skipped_constant = Vec::new();
    for j in 0..x.n_cols() {
        let col = x.col(j).to_dense(n);
        let (ct, cy) = match (pearson(&col, &t), pearson(&col, y)) {
            (Some(ct), Some(cy)) => (ct, cy),
            _ => {
                // constant column, or constant screening vector
                if col.iter().all(|&v| v == col[0]) {
                    skipped_constant.push(j);
                    continue;
                }
                (pearson(&col, &t).unwrap_or(0.0), pearson(&col, y).unwrap_or(0.0))
            }
        };
        if ct.abs() >= t_threshold && cy.abs() <= y_threshold {
            flagged.push(FlaggedInstrument {
                covariate: j,
                name: names[j].clone(),
                treatment_correlation: ct,
                outcome_correlation: cy,
            });
        }
    }
    Ok(InstrumentReport {
        flagged,
        skipped_constant,
        treatment_threshold: t_threshold,
        outcome_threshold: y_threshold,
    })
}

/// Preference scores: the propensity score shifted on the logit scale by the
/// marginal treatment rate, logit(f) = logit(p) − logit(rate).
#[derive(Debug, Clone, Serialize)]
pub struct PreferenceScores {
    pub values: Vec<f64>,
    pub treated_fraction: f64,
}

pub fn compute_preference(propensity: &[f64], treated_fraction: f64) -> Result<PreferenceScores> {
    if !(treated_fraction > 0.0 && treated_fraction < 1.0) {
        return Err(LspsError::Validation(format!(
            "treated fraction must lie strictly inside (0, 1), got {treated_fraction}"
        )));
    }
    if let Some(&p) = propensity.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(LspsError::Validation(format!(
            "propensity scores must lie strictly inside (0, 1), got {p}"
        )));
    }
    let offset = logit(treated_fraction);
    let values = propensity
        .iter()
        .map(|&p| sigmoid(logit(p) - offset))
        .collect();
    Ok(PreferenceScores {
        values,
        treated_fraction,
    })
}

/// Walker-style equipoise diagnostic: pass when at least half the subjects
/// have preference scores in [0.3, 0.7].
#[derive(Debug, Clone, Serialize)]
pub struct EquipoiseReport {
    pub fraction_in_band: f64,
    pub band: (f64, f64),
    pub pass: bool,
}

pub fn check_equipoise(pref: &PreferenceScores) -> Result<EquipoiseReport> {
    if pref.values.is_empty() {
        return Err(LspsError::Validation("no preference scores".into()));
    }
    let band = (0.3, 0.7);
    let in_band = pref
        .values
        .iter()
        .filter(|&&f| f >= band.0 && f <= band.1)
        .count();
    let fraction_in_band = in_band as f64 / pref.values.len() as f64;
    Ok(EquipoiseReport {
        fraction_in_band,
        band,
        pass: fraction_in_band >= 0.5,
    })
}

/// Propensity-score strata holding equal numbers of treated subjects.
#[derive(Debug, Clone, Serialize)]
pub struct Stratification {
    pub k: usize,
    /// k−1 ascending cut points; a score equal to a boundary goes below it.
    pub boundaries: Vec<f64>,
    pub stratum_of: Vec<u32>,
    /// Set when all scores were identical and a single stratum was returned.
    pub collapsed: bool,
}

/// Cuts at the j/k quantiles of the *treated* scores; every subject is then
/// assigned by boundary comparison (ties go to the lower stratum).
pub fn stratify(propensity: &[f64], treatment: &[u8], k: usize) -> Result<Stratification> {
    if propensity.len() != treatment.len() {
        return Err(LspsError::Dimension(
            "propensity and treatment lengths differ".into(),
        ));
    }
    if k < 1 {
        return Err(LspsError::Validation("stratum count must be >= 1".into()));
    }
    let mut treated_scores: Vec<f64> = propensity
        .iter()
        .zip(treatment)
        .filter(|(_, &t)| t == 1)
        .map(|(&p, _)| p)
        .collect();
    if treated_scores.len() < k {
        return Err(LspsError::Validation(format!(
            "{} strata requested but only {} treated subjects",
            k,
            treated_scores.len()
        )));
    }
    if k == 1 {
        return Ok(Stratification {
            k: 1,
            boundaries: Vec::new(),
            stratum_of: vec![0; propensity.len()],
            collapsed: false,
        });
    }
    if propensity.windows(2).all(|w| w[0] == w[1]) {
        // degenerate scores: a single stratum, flagged for the caller
        return Ok(Stratification {
            k: 1,
            boundaries: Vec::new(),
            stratum_of: vec![0; propensity.len()],
            collapsed: true,
        });
    }
    treated_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_t = treated_scores.len();
    // boundaries at the j/k quantiles of the treated scores, linearly
    // interpolated between order statistics
    let mut boundaries = Vec::with_capacity(k - 1);
    for j in 1..k {
        let h = (n_t - 1) as f64 * j as f64 / k as f64;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        let q = if lo + 1 < n_t {
            treated_scores[lo] + frac * (treated_scores[lo + 1] - treated_scores[lo])
        } else {
            treated_scores[lo]
        };
        boundaries.push(q);
    }
    let stratum_of = propensity
        .iter()
        .map(|&p| boundaries.iter().filter(|&&b| b < p).count() as u32)
        .collect();
    Ok(Stratification {
        k,
        boundaries,
        stratum_of,
        collapsed: false,
    })
}

impl Stratification {
    /// Subjects whose score falls outside the treated score range, i.e. below
    /// the minimum or above the maximum treated score (used by `--trim`).
    pub fn outside_treated_range(propensity: &[f64], treatment: &[u8]) -> Vec<bool> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (&p, &t) in propensity.iter().zip(treatment) {
            if t == 1 {
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
        propensity.iter().map(|&p| p < lo || p > hi).collect()
    }

    pub fn counts(&self, treatment: &[u8]) -> Vec<(usize, usize)> {
        let mut counts = vec![(0usize, 0usize); self.k];
        for (&s, &t) in self.stratum_of.iter().zip(treatment) {
            if t == 1 {
                counts[s as usize].0 += 1;
            } else {
                counts[s as usize].1 += 1;
            }
        }
        counts
    }
}
