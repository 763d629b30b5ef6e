//! TOML study configuration. Every field has a default so a missing file or
//! section resolves to the documented defaults; the resolved form is embedded
//! in every report for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use lsps_core::pipeline::PipelineConfig;
use lsps_core::simbench::{Sim1Config, Sim2Config};

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub sim1: Sim1Section,
    #[serde(default)]
    pub sim2: Sim2Section,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub input: Option<InputSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn d_sim1_n() -> usize {
    2000
}
fn d_sim1_m() -> usize {
    1000
}
fn d_k_latent() -> usize {
    10
}
fn d_beta_x_sd() -> f64 {
    0.1
}
fn d_sparsity() -> f64 {
    0.99
}
fn d_one() -> f64 {
    1.0
}
fn d_nu() -> f64 {
    2.0
}
fn d_noise_var() -> f64 {
    0.1
}
fn d_sim1_reps() -> usize {
    100
}
fn d_sigma2_grid() -> Vec<f64> {
    vec![1e-4, 1e-2, 1.0, 1e2, 1e4]
}
fn d_sim2_n_grid() -> Vec<usize> {
    vec![10_000]
}
fn d_sim2_m_grid() -> Vec<usize> {
    vec![10, 100, 1000, 10_000]
}
fn d_sim2_reps() -> usize {
    20
}
fn d_n_confounders() -> usize {
    10
}
fn d_k_strata() -> usize {
    10
}
fn d_cv_folds() -> usize {
    10
}
fn d_lambda_points() -> usize {
    20
}
fn d_lambda_min_ratio() -> f64 {
    1e-4
}
fn d_t_threshold() -> f64 {
    0.5
}
fn d_y_threshold() -> f64 {
    0.1
}
fn d_out_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Sim1Section {
    #[serde(default = "d_sim1_n")]
    pub n: usize,
    #[serde(default = "d_sim1_m")]
    pub m: usize,
    #[serde(default = "d_k_latent")]
    pub k_latent: usize,
    #[serde(default = "d_beta_x_sd")]
    pub beta_x_sd: f64,
    #[serde(default = "d_sparsity")]
    pub sparsity_u: f64,
    #[serde(default = "d_sparsity")]
    pub sparsity_gamma: f64,
    #[serde(default = "d_one")]
    pub gamma_u: f64,
    #[serde(default = "d_one")]
    pub eta_u: f64,
    #[serde(default = "d_nu")]
    pub nu_true: f64,
    #[serde(default = "d_noise_var")]
    pub outcome_noise_var: f64,
    #[serde(default = "d_sim1_reps")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_sigma2_grid")]
    pub sigma2_grid: Vec<f64>,
}

impl Default for Sim1Section {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl Sim1Section {
    pub fn to_config(&self) -> Sim1Config {
        Sim1Config {
            n: self.n,
            m: self.m,
            k_latent: self.k_latent,
            beta_x_sd: self.beta_x_sd,
            sparsity_u: self.sparsity_u,
            sparsity_gamma: self.sparsity_gamma,
            gamma_u: self.gamma_u,
            eta_u: self.eta_u,
            nu_true: self.nu_true,
            outcome_noise_var: self.outcome_noise_var,
            sigma2: 0.0,
            replicates: self.replicates,
            master_seed: self.master_seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Sim2Section {
    #[serde(default = "d_sim2_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "d_sim2_m_grid")]
    pub m_grid: Vec<usize>,
    #[serde(default = "d_k_latent")]
    pub k_latent: usize,
    #[serde(default = "d_one")]
    pub gamma_u: f64,
    #[serde(default = "d_one")]
    pub eta_u: f64,
    #[serde(default = "d_nu")]
    pub nu_true: f64,
    #[serde(default = "d_n_confounders")]
    pub n_confounders: usize,
    #[serde(default = "d_sim2_reps")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for Sim2Section {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl Sim2Section {
    pub fn to_config(&self, n: usize) -> Sim2Config {
        Sim2Config {
            n,
            m: 0, // set by the sweep
            k_latent: self.k_latent,
            gamma_u: self.gamma_u,
            eta_u: self.eta_u,
            nu_true: self.nu_true,
            n_confounders: self.n_confounders,
            replicates: self.replicates,
            master_seed: self.master_seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default = "d_k_strata")]
    pub k_strata: usize,
    #[serde(default = "d_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "d_lambda_points")]
    pub lambda_points: usize,
    #[serde(default = "d_lambda_min_ratio")]
    pub lambda_min_ratio: f64,
    #[serde(default = "d_t_threshold")]
    pub instrument_t_threshold: f64,
    #[serde(default = "d_y_threshold")]
    pub instrument_y_threshold: f64,
    #[serde(default)]
    pub trim: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl PipelineSection {
    pub fn to_config(&self) -> PipelineConfig {
        PipelineConfig {
            k_strata: self.k_strata,
            cv_folds: self.cv_folds,
            lambda_points: self.lambda_points,
            lambda_min_ratio: self.lambda_min_ratio,
            instrument_t_threshold: self.instrument_t_threshold,
            instrument_y_threshold: self.instrument_y_threshold,
            trim: self.trim,
            seed: self.seed,
            ..PipelineConfig::default()
        }
    }
}

/// Where the cohort for `analyze`/`diagnose` comes from.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, tag = "format", rename_all = "snake_case")]
pub enum InputSection {
    /// One CSV with a header; named columns play the treatment/outcome roles.
    Dense {
        path: String,
        treatment: String,
        #[serde(default)]
        outcome: Option<String>,
        #[serde(default)]
        time: Option<String>,
        #[serde(default)]
        event: Option<String>,
    },
    /// Triplet file plus covariate dictionary plus subject table.
    Sparse {
        triplets: String,
        dictionary: String,
        subjects: String,
    },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "d_out_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: d_out_dir() }
    }
}

/// Reads the config file, or returns all defaults when no path is given.
pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))
        }
    }
}
