//! Regularized GLM fitting: L1 logistic regression (propensity model), ridge
//! regression (pinpointability R²), and per-stratum OLS.

mod cv;
mod logistic;
mod ols;
mod ridge;

pub use cv::{cv_select_lambda, default_lambda_grid, CvResult};
pub use logistic::{
    fit_logistic_l1, kkt_residual, lambda_max, predict_proba, LassoConfig, LogisticFit,
};
pub use ols::{fit_ols_stratum, StratumOls};
pub use ridge::{fit_ridge, heldout_r_squared, r_squared, RidgeConfig, RidgeFit};
