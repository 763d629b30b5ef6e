//! Effect estimation over propensity strata: pooled difference-in-means for
//! continuous outcomes, stratified proportional-hazards for time-to-event.

mod cox;

pub use cox::{fit_cox_stratified, partial_loglik, CoxConfig, HazardRatioEstimate};

use serde::Serialize;

use crate::dataset::Outcome;
use crate::error::{LspsError, Result};
use crate::propensity::Stratification;
use crate::solver::fit_ols_stratum;

#[derive(Debug, Clone, Serialize)]
pub struct StratumEffect {
    pub stratum: usize,
    pub nu_s: f64,
    pub se_s: f64,
    pub omega_s: f64,
    pub n_s: usize,
    pub n_treated: usize,
    pub n_control: usize,
}

/// Pooled stratified average treatment effect. Stratum weights are
/// proportional to stratum size and sum to 1 over the retained strata.
#[derive(Debug, Clone, Serialize)]
pub struct AteEstimate {
    pub nu_hat: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub per_stratum: Vec<StratumEffect>,
    pub warnings: Vec<String>,
}

pub fn estimate_ate(y: &[f64], treatment: &[u8], strat: &Stratification) -> Result<AteEstimate> {
    if y.len() != treatment.len() || y.len() != strat.stratum_of.len() {
        return Err(LspsError::Dimension("ate input lengths differ".into()));
    }
    let mut warnings = Vec::new();
    let mut per_stratum = Vec::new();
    let mut kept_total = 0usize;
    for s in 0..strat.k {
        let (ys, ts): (Vec<f64>, Vec<u8>) = strat
            .stratum_of
            .iter()
            .zip(y.iter().zip(treatment))
            .filter(|(&si, _)| si as usize == s)
            .map(|(_, (&yi, &ti))| (yi, ti))
            .unzip();
        let n_treated = ts.iter().filter(|&&t| t == 1).count();
        let n_control = ts.len() - n_treated;
        if n_treated == 0 || n_control == 0 {
            warnings.push(format!(
                "stratum {s} dropped: missing a treatment group ({n_treated} treated, {n_control} control)"
            ));
            continue;
        }
        let fit = fit_ols_stratum(&ys, &ts)?;
        kept_total += ts.len();
        per_stratum.push(StratumEffect {
            stratum: s,
            nu_s: fit.nu_s,
            se_s: fit.se_nu_s,
            omega_s: ts.len() as f64, // normalized below
            n_s: ts.len(),
            n_treated,
            n_control,
        });
    }
    if per_stratum.is_empty() {
        return Err(LspsError::NonIdentifiable(
            "every stratum is missing a treatment group".into(),
        ));
    }
    let mut nu_hat = 0.0;
    let mut var = 0.0;
    for se in &mut per_stratum {
        se.omega_s /= kept_total as f64;
        nu_hat += se.omega_s * se.nu_s;
        var += se.omega_s * se.omega_s * se.se_s * se.se_s;
    }
    let se = var.sqrt();
    Ok(AteEstimate {
        nu_hat,
        se,
        ci95: (nu_hat - 1.96 * se, nu_hat + 1.96 * se),
        per_stratum,
        warnings,
    })
}

/// Either estimator's output, for callers that dispatch on the outcome type.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectEstimate {
    Ate(AteEstimate),
    HazardRatio(HazardRatioEstimate),
}

impl EffectEstimate {
    /// The point estimate on the linear scale (ν̂ or ζ̂).
    pub fn point(&self) -> f64 {
        match self {
            EffectEstimate::Ate(a) => a.nu_hat,
            EffectEstimate::HazardRatio(h) => h.zeta_hat,
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            EffectEstimate::Ate(a) => &a.warnings,
            EffectEstimate::HazardRatio(h) => &h.warnings,
        }
    }
}

/// Runs the estimator matching the outcome type over the given strata.
pub fn estimate_effect(
    outcome: &Outcome,
    treatment: &[u8],
    strat: &Stratification,
) -> Result<EffectEstimate> {
    match outcome {
        Outcome::Continuous(y) => Ok(EffectEstimate::Ate(estimate_ate(y, treatment, strat)?)),
        Outcome::TimeToEvent { time, event } => Ok(EffectEstimate::HazardRatio(
            fit_cox_stratified(time, event, treatment, strat, &CoxConfig::default())?,
        )),
    }
}

/// No-adjustment baseline: a single stratum containing every subject.
pub fn estimate_unadjusted(outcome: &Outcome, treatment: &[u8]) -> Result<EffectEstimate> {
    let strat = Stratification {
        k: 1,
        boundaries: Vec::new(),
        stratum_of: vec![0; treatment.len()],
        collapsed: false,
    };
    estimate_effect(outcome, treatment, &strat)
}
