//! Stratified proportional-hazards fit with a single shared treatment
//! coefficient, Breslow tie handling, and stratum-specific risk sets.

use serde::Serialize;

use crate::error::{LspsError, Result};
use crate::propensity::Stratification;

#[derive(Debug, Clone)]
pub struct CoxConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// |ζ| beyond this is treated as a monotone likelihood (non-identifiable).
    pub divergence_bound: f64,
}

impl Default for CoxConfig {
    fn default() -> Self {
        CoxConfig {
            grad_tol: 1e-10,
            max_iter: 100,
            divergence_bound: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HazardRatioEstimate {
    pub zeta_hat: f64,
    pub hr: f64,
    pub se_zeta: f64,
    /// 95% interval on the hazard-ratio scale.
    pub ci95: (f64, f64),
    /// Stratum-specific coefficients where estimable, for inspection.
    pub per_stratum_zeta: Vec<Option<f64>>,
    pub n_events: usize,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// One stratum's subjects ordered by descending time, with tie groups.
struct StratumData {
    /// (time, event, treated) sorted by time descending.
    subjects: Vec<(f64, bool, f64)>,
    n_events: usize,
}

impl StratumData {
    fn build(time: &[f64], event: &[u8], treatment: &[u8], members: &[usize]) -> StratumData {
        let mut subjects: Vec<(f64, bool, f64)> = members
            .iter()
            .map(|&i| (time[i], event[i] == 1, treatment[i] as f64))
            .collect();
        subjects.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let n_events = subjects.iter().filter(|s| s.1).count();
        StratumData { subjects, n_events }
    }

    /// Adds this stratum's Breslow log partial likelihood, gradient, and
    /// observed information at ζ. Treatment is binary so E[t²] = E[t] on the
    /// risk set and the information is d·(μ − μ²) per event, μ = s1/s0.
    fn accumulate(&self, zeta: f64, ll: &mut f64, grad: &mut f64, info: &mut f64) {
        let e = zeta.exp();
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut i = 0;
        let n = self.subjects.len();
        while i < n {
            let t_time = self.subjects[i].0;
            let mut d = 0.0f64;
            let mut d_treated = 0.0f64;
            // fold the whole tie group into the risk set before its events
            while i < n && self.subjects[i].0 == t_time {
                let (_, ev, tr) = self.subjects[i];
                let w = if tr == 1.0 { e } else { 1.0 };
                s0 += w;
                s1 += tr * w;
                if ev {
                    d += 1.0;
                    d_treated += tr;
                }
                i += 1;
            }
            if d > 0.0 {
                let mu = s1 / s0;
                *ll += zeta * d_treated - d * s0.ln();
                *grad += d_treated - d * mu;
                *info += d * (mu - mu * mu);
            }
        }
    }
}

fn evaluate(strata: &[StratumData], zeta: f64) -> (f64, f64, f64) {
    let mut ll = 0.0;
    let mut grad = 0.0;
    let mut info = 0.0;
    for s in strata {
        s.accumulate(zeta, &mut ll, &mut grad, &mut info);
    }
    (ll, grad, info)
}

fn newton(strata: &[StratumData], config: &CoxConfig) -> Result<(f64, f64, usize)> {
    let mut zeta = 0.0;
    let (mut ll, mut grad, mut info) = evaluate(strata, zeta);
    if info <= 0.0 {
        return Err(LspsError::NonIdentifiable(
            "no treatment contrast within any event risk set".into(),
        ));
    }
    for iter in 0..config.max_iter {
        if grad.abs() < config.grad_tol {
            return Ok((zeta, info, iter));
        }
        let mut step = grad / info;
        // step halving keeps the log likelihood monotone
        let mut improved = false;
        for _ in 0..50 {
            let cand = zeta + step;
            let (cll, cg, ci) = evaluate(strata, cand);
            if cll >= ll {
                zeta = cand;
                ll = cll;
                grad = cg;
                info = ci;
                improved = true;
                break;
            }
            step /= 2.0;
        }
        if !improved {
            // cannot improve further: gradient tolerance limited by precision
            return Ok((zeta, info, iter));
        }
        if zeta.abs() > config.divergence_bound {
            return Err(LspsError::NonIdentifiable(format!(
                "coefficient diverged past |{}|: monotone partial likelihood",
                config.divergence_bound
            )));
        }
    }
    Err(LspsError::Numerical(format!(
        "proportional-hazards fit did not converge in {} iterations",
        config.max_iter
    )))
}

pub fn fit_cox_stratified(
    time: &[f64],
    event: &[u8],
    treatment: &[u8],
    strat: &Stratification,
    config: &CoxConfig,
) -> Result<HazardRatioEstimate> {
    let n = time.len();
    if event.len() != n || treatment.len() != n || strat.stratum_of.len() != n {
        return Err(LspsError::Dimension("cox input lengths differ".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); strat.k];
    for (i, &s) in strat.stratum_of.iter().enumerate() {
        members[s as usize].push(i);
    }
    let strata: Vec<StratumData> = members
        .iter()
        .map(|m| StratumData::build(time, event, treatment, m))
        .collect();
    let n_events: usize = strata.iter().map(|s| s.n_events).sum();
    if n_events == 0 {
        return Err(LspsError::Validation("no events in the cohort".into()));
    }
    let (zeta_hat, info, iterations) = newton(&strata, config)?;
    let se_zeta = (1.0 / info).sqrt();
    let mut warnings = Vec::new();
    let per_stratum_zeta: Vec<Option<f64>> = strata
        .iter()
        .enumerate()
        .map(|(s, sd)| match newton(std::slice::from_ref(sd), config) {
            Ok((z, _, _)) => Some(z),
            Err(_) => {
                if strat.k > 1 {
                    warnings.push(format!("stratum {s} coefficient not estimable on its own"));
                }
                None
            }
        })
        .collect();
    Ok(HazardRatioEstimate {
        zeta_hat,
        hr: zeta_hat.exp(),
        se_zeta,
        ci95: (
            (zeta_hat - 1.96 * se_zeta).exp(),
            (zeta_hat + 1.96 * se_zeta).exp(),
        ),
        per_stratum_zeta,
        n_events,
        iterations,
        warnings,
    })
}

/// Breslow log partial likelihood, gradient, and information at ζ. Exposed so
/// callers can cross-check the Newton solver against direct evaluation.
pub fn partial_loglik(
    time: &[f64],
    event: &[u8],
    treatment: &[u8],
    strat: &Stratification,
    zeta: f64,
) -> (f64, f64, f64) {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); strat.k];
    for (i, &s) in strat.stratum_of.iter().enumerate() {
        members[s as usize].push(i);
    }
    let strata: Vec<StratumData> = members
        .iter()
        .map(|m| StratumData::build(time, event, treatment, m))
        .collect();
    evaluate(&strata, zeta)
}
