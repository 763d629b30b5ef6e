//! End-to-end analysis: instrument screen, cross-validated propensity fit,
//! equipoise check, stratification, balance diagnostics, effect estimate.

use serde::Serialize;

use crate::balance::{balance_report_view, BalanceReport};
use crate::dataset::{CohortDataset, Outcome};
use crate::effect::{estimate_effect, estimate_unadjusted, EffectEstimate};
use crate::error::Result;
use crate::propensity::{
    check_equipoise, compute_preference, screen_instruments_view, stratify, EquipoiseReport,
    InstrumentReport, Stratification,
};
use crate::solver::{
    cv_select_lambda, default_lambda_grid, fit_logistic_l1, lambda_max, predict_proba, LassoConfig,
};
use crate::sparse::MatrixView;

#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub k_strata: usize,
    pub cv_folds: usize,
    pub lambda_points: usize,
    pub lambda_min_ratio: f64,
    pub instrument_t_threshold: f64,
    pub instrument_y_threshold: f64,
    /// Drop subjects whose score falls outside the treated score range.
    pub trim: bool,
    pub seed: u64,
    #[serde(skip)]
    pub lasso: LassoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_strata: 10,
            cv_folds: 10,
            lambda_points: 20,
            lambda_min_ratio: 1e-4,
            instrument_t_threshold: 0.5,
            instrument_y_threshold: 0.1,
            trim: false,
            seed: 0,
            lasso: LassoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvSummary {
    pub lambda_grid: Vec<f64>,
    pub mean_heldout_loglik: Vec<f64>,
    pub selected_lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub intercept: f64,
    pub lambda: f64,
    pub n_nonzero: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StratumCount {
    pub stratum: usize,
    pub n_treated: usize,
    pub n_control: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StratificationSummary {
    pub k: usize,
    pub boundaries: Vec<f64>,
    pub counts: Vec<StratumCount>,
    pub collapsed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub n_subjects: usize,
    pub n_treated: usize,
    pub screening: InstrumentReport,
    pub cv: CvSummary,
    pub model: ModelSummary,
    pub equipoise: EquipoiseReport,
    pub n_trimmed: usize,
    pub stratification: StratificationSummary,
    pub balance: BalanceReport,
    pub effect: EffectEstimate,
    pub unadjusted: EffectEstimate,
    pub warnings: Vec<String>,
    /// Propensity score per subject, full cohort order (not serialized).
    #[serde(skip)]
    pub propensity: Vec<f64>,
}

pub fn run_analysis(data: &CohortDataset, cfg: &PipelineConfig) -> Result<AnalysisReport> {
    run_analysis_view(
        &data.covariates().view(),
        data.covariate_names(),
        data.treatment(),
        data.outcome(),
        cfg,
    )
}

/// The same pipeline on a column view, so callers can augment the covariate
/// matrix (e.g. append an extra column) without copying it.
pub fn run_analysis_view(
    x: &MatrixView<'_>,
    names: &[String],
    treatment: &[u8],
    outcome: &Outcome,
    cfg: &PipelineConfig,
) -> Result<AnalysisReport> {
    let n = treatment.len();
    let n_treated = treatment.iter().filter(|&&t| t == 1).count();
    let mut warnings = Vec::new();

    let screening = screen_instruments_view(
        x,
        names,
        treatment,
        &outcome.screening_vector(),
        cfg.instrument_t_threshold,
        cfg.instrument_y_threshold,
    )?;
    if !screening.flagged.is_empty() {
        warnings.push(format!(
            "{} covariate(s) look like instruments; consider --exclude",
            screening.flagged.len()
        ));
    }

    let lmax = lambda_max(x, treatment);
    let (cv, fit) = if lmax > 0.0 {
        let grid = default_lambda_grid(lmax, cfg.lambda_points, cfg.lambda_min_ratio);
        let cv = cv_select_lambda(x, treatment, &grid, cfg.cv_folds, cfg.seed, &cfg.lasso)?;
        let fit = fit_logistic_l1(x, treatment, cv.selected_lambda, &cfg.lasso)?;
        (
            CvSummary {
                lambda_grid: cv.lambda_grid,
                mean_heldout_loglik: cv.mean_heldout_loglik,
                selected_lambda: cv.selected_lambda,
            },
            fit,
        )
    } else {
        // no covariate correlates with treatment: any λ>0 gives the null model
        warnings.push("no covariate correlates with treatment; null propensity model".into());
        let fit = fit_logistic_l1(x, treatment, 1.0, &cfg.lasso)?;
        (
            CvSummary {
                lambda_grid: vec![1.0],
                mean_heldout_loglik: Vec::new(),
                selected_lambda: 1.0,
            },
            fit,
        )
    };
    let propensity = predict_proba(&fit, x)?;

    let treated_fraction = n_treated as f64 / n as f64;
    let preference = compute_preference(&propensity, treated_fraction)?;
    let equipoise = check_equipoise(&preference)?;
    if !equipoise.pass {
        warnings.push(format!(
            "equipoise failed: only {:.3} of subjects in the preference band",
            equipoise.fraction_in_band
        ));
    }

    // trimming keeps subjects whose score lies within the treated score range
    let (rows, n_trimmed): (Option<Vec<usize>>, usize) = if cfg.trim {
        let outside = Stratification::outside_treated_range(&propensity, treatment);
        let kept: Vec<usize> = (0..n).filter(|&i| !outside[i]).collect();
        let dropped = n - kept.len();
        if dropped > 0 {
            warnings.push(format!("trimmed {dropped} subject(s) outside the treated score range"));
        }
        (Some(kept), dropped)
    } else {
        (None, 0)
    };
    let (p_sub, t_sub, outcome_sub) = match &rows {
        Some(rows) => (
            rows.iter().map(|&i| propensity[i]).collect::<Vec<_>>(),
            rows.iter().map(|&i| treatment[i]).collect::<Vec<_>>(),
            outcome.subset(rows),
        ),
        None => (propensity.clone(), treatment.to_vec(), outcome.clone()),
    };

    let strat = stratify(&p_sub, &t_sub, cfg.k_strata)?;
    if strat.collapsed {
        warnings.push("all propensity scores identical; analysis uses one stratum".into());
    }
    let counts = strat
        .counts(&t_sub)
        .into_iter()
        .enumerate()
        .map(|(s, (nt, nc))| StratumCount {
            stratum: s,
            n_treated: nt,
            n_control: nc,
        })
        .collect();

    let balance = balance_report_view(x, names, &t_sub, &strat, rows.as_deref())?;
    if !balance.pass {
        warnings.push(format!(
            "covariate balance failed: max |SMD| = {:.3}; interpret with caution",
            balance.max_abs_adjusted_smd
        ));
    }
    warnings.extend(balance.warnings.iter().cloned());

    let effect = estimate_effect(&outcome_sub, &t_sub, &strat)?;
    let unadjusted = estimate_unadjusted(outcome, treatment)?;
    warnings.extend(effect.warnings().iter().cloned());

    Ok(AnalysisReport {
        n_subjects: n,
        n_treated,
        screening,
        cv,
        model: ModelSummary {
            intercept: fit.intercept,
            lambda: fit.lambda,
            n_nonzero: fit.n_nonzero(),
            converged: fit.converged,
            iterations: fit.iterations,
        },
        equipoise,
        n_trimmed,
        stratification: StratificationSummary {
            k: strat.k,
            boundaries: strat.boundaries.clone(),
            counts,
            collapsed: strat.collapsed,
        },
        balance,
        effect,
        unadjusted,
        warnings,
        propensity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sparse::SparseMatrix;
    use crate::stats::sigmoid;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    // Confounded cohort: one strong binary confounder plus noise covariates.
    fn confounded(n: usize, m: usize, seed: u64) -> CohortDataset {
        let mut rng = rng::stream(seed, &[0x71]);
        let mut rows = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = vec![0.0; m];
            for v in row.iter_mut() {
                *v = rng.gen_bool(0.3) as u8 as f64;
            }
            let c = row[0];
            let ti = rng.gen_bool(sigmoid(2.0 * c - 1.0)) as u8;
            let noise: f64 = StandardNormal.sample(&mut rng);
            y.push(1.5 * c + 2.0 * ti as f64 + 0.3 * noise);
            rows.push(row);
            t.push(ti);
        }
        let names = (0..m).map(|j| format!("x{j}")).collect();
        CohortDataset::new(
            SparseMatrix::from_rows(&rows, m),
            names,
            t,
            Outcome::Continuous(y),
        )
        .unwrap()
    }

    #[test]
    fn recovers_effect_under_confounding() {
        let data = confounded(4000, 5, 41);
        let cfg = PipelineConfig {
            cv_folds: 5,
            lambda_points: 10,
            ..Default::default()
        };
        let report = run_analysis(&data, &cfg).unwrap();
        let adjusted = report.effect.point();
        let unadjusted = report.unadjusted.point();
        // confounding biases the raw contrast upward; adjustment removes most
        assert!(unadjusted > 2.1, "unadjusted {unadjusted}");
        assert!((adjusted - 2.0).abs() < 0.1, "adjusted {adjusted}");
        assert!(report.balance.pass);
        assert!(report.equipoise.pass);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let data = confounded(600, 4, 42);
        let cfg = PipelineConfig {
            cv_folds: 4,
            lambda_points: 8,
            k_strata: 5,
            seed: 7,
            ..Default::default()
        };
        let a = run_analysis(&data, &cfg).unwrap();
        let b = run_analysis(&data, &cfg).unwrap();
        assert_eq!(a.effect.point().to_bits(), b.effect.point().to_bits());
        assert_eq!(a.cv.selected_lambda.to_bits(), b.cv.selected_lambda.to_bits());
    }

    #[test]
    fn trim_keeps_scores_inside_treated_range() {
        let data = confounded(800, 4, 43);
        let cfg = PipelineConfig {
            cv_folds: 4,
            lambda_points: 8,
            k_strata: 5,
            trim: true,
            ..Default::default()
        };
        let report = run_analysis(&data, &cfg).unwrap();
        // trimming may drop zero or more subjects; estimates stay sane
        assert!(report.n_trimmed < report.n_subjects / 2);
        assert!((report.effect.point() - 2.0).abs() < 0.5);
    }

    #[test]
    fn view_path_matches_dataset_path() {
        let data = confounded(500, 3, 44);
        let cfg = PipelineConfig {
            cv_folds: 4,
            ..Default::default()
        };
        let a = run_analysis(&data, &cfg).unwrap();
        let b = run_analysis_view(
            &data.covariates().view(),
            data.covariate_names(),
            data.treatment(),
            data.outcome(),
            &cfg,
        )
        .unwrap();
        assert_eq!(a.effect.point().to_bits(), b.effect.point().to_bits());
    }

    #[test]
    fn augmented_view_changes_model() {
        let data = confounded(500, 3, 45);
        let mut rng = rng::stream(45, &[0x72]);
        let extra: Vec<f64> = data
            .treatment()
            .iter()
            .map(|&t| {
                let flip = rng.gen_bool(0.1);
                ((t == 1) != flip) as u8 as f64
            })
            .collect();
        let col = crate::sparse::Column::from_dense(&extra);
        let view = data.covariates().view().with_column(&col);
        let mut names: Vec<String> = data.covariate_names().to_vec();
        names.push("u".into());
        let cfg = PipelineConfig {
            cv_folds: 4,
            lambda_points: 8,
            k_strata: 5,
            ..Default::default()
        };
        let report =
            run_analysis_view(&view, &names, data.treatment(), data.outcome(), &cfg).unwrap();
        assert_eq!(report.screening.flagged.len(), 0);
        assert_relative_eq!(report.propensity.len() as f64, 500.0);
    }
}
