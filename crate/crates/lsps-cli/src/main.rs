//! `lsps`: simulation sweeps and cohort analysis for propensity-score
//! stratification studies.

mod config;
mod svg;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use lsps_core::dataset::{load_dense_csv, load_sparse, DenseSchema, OutcomeSchema};
use lsps_core::pipeline::{run_analysis, PipelineConfig};
use lsps_core::simbench::{run_sim1_sweep, run_sim2_sweep, SweepTable};
use lsps_core::{CohortDataset, LspsError};

use config::{FileConfig, InputSection};
use svg::Series;

const EXIT_EQUIPOISE: u8 = 2;
const EXIT_BALANCE: u8 = 3;
const EXIT_CONFIG: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NUMERICAL: u8 = 70;

#[derive(Parser)]
#[command(name = "lsps", version, about = "Propensity-score stratification engine", long_about = None)]
struct Cli {
    /// Study configuration (TOML). Omitted: documented defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Stratum count override.
    #[arg(long, global = true)]
    strata: Option<usize>,
    /// Drop subjects whose score falls outside the treated score range.
    #[arg(long, global = true)]
    trim: bool,
    /// File listing covariate names to exclude, one per line.
    #[arg(long, global = true)]
    exclude: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Confounder-noise sweep on the direct-pinpointability design.
    Sim1,
    /// Covariate-count sweep on the latent-variable design.
    Sim2,
    /// Full pipeline on a cohort file: diagnostics plus effect estimate.
    Analyze,
    /// Diagnostics only: screen, equipoise, balance; no effect estimate.
    Diagnose,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized; --threads ignored");
        }
    }
    let cfg = match config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let code = match cli.command {
        Command::Sim1 => cmd_sim1(&cli, cfg),
        Command::Sim2 => cmd_sim2(&cli, cfg),
        Command::Analyze => cmd_pipeline(&cli, cfg, true),
        Command::Diagnose => cmd_pipeline(&cli, cfg, false),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}

/// Maps library errors onto the exit-code contract.
fn classify(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<LspsError>() {
        Some(LspsError::Io { .. }) => EXIT_CONFIG,
        Some(LspsError::Parse { .. }) => EXIT_DATA,
        Some(LspsError::Validation(_)) | Some(LspsError::Dimension(_)) => EXIT_DATA,
        Some(LspsError::Numerical(_)) | Some(LspsError::NonIdentifiable(_)) => EXIT_NUMERICAL,
        None => EXIT_CONFIG,
    }
}

fn out_dir(cli: &Cli, cfg: &FileConfig) -> anyhow::Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn pipeline_config(cli: &Cli, cfg: &FileConfig) -> PipelineConfig {
    let mut pipe = cfg.pipeline.to_config();
    if let Some(k) = cli.strata {
        pipe.k_strata = k;
    }
    if cli.trim {
        pipe.trim = true;
    }
    if let Some(s) = cli.seed {
        pipe.seed = s;
    }
    pipe
}

fn write_meta(
    dir: &Path,
    command: &str,
    cfg: &FileConfig,
    master_seed: u64,
) -> anyhow::Result<()> {
    let meta = json!({
        "tool": "lsps",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "master_seed": master_seed,
        "resolved_config": cfg,
    });
    fs::write(dir.join("run_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Aggregate CSV with the propensity-error and pinpointability columns
/// appended after the core six.
fn write_extended_agg(table: &SweepTable, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "sweep_param",
        "value",
        "method",
        "bias",
        "variance",
        "rmse",
        "ps_rmse",
        "r2",
    ])?;
    for r in &table.agg {
        w.write_record([
            r.sweep_param.clone(),
            r.value.to_string(),
            r.method.to_string(),
            r.bias.to_string(),
            r.variance.to_string(),
            r.rmse.to_string(),
            r.ps_rmse.map(|v| v.to_string()).unwrap_or_default(),
            r.r2_pinpoint.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_raw(table: &SweepTable, path: &Path) -> anyhow::Result<()> {
    let file = fs::File::create(path)?;
    table.write_raw_csv(file)?;
    Ok(())
}

fn rmse_plot(table: &SweepTable, x_of: impl Fn(f64) -> f64) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for row in &table.agg {
        let name = match series.iter().position(|s| s.name == row.method) {
            Some(i) => i,
            None => {
                series.push(Series {
                    name: row.method.to_string(),
                    points: Vec::new(),
                });
                series.len() - 1
            }
        };
        series[name].points.push((x_of(row.value), row.rmse));
    }
    series
}

fn cmd_sim1(cli: &Cli, mut cfg: FileConfig) -> anyhow::Result<u8> {
    if let Some(s) = cli.seed {
        cfg.sim1.master_seed = s;
    }
    if cfg.sim1.replicates < 2 {
        eprintln!("error: aggregate requires >= 2 replicates");
        return Ok(EXIT_CONFIG);
    }
    if cfg.sim1.sigma2_grid.is_empty() {
        eprintln!("error: empty sigma2_grid");
        return Ok(EXIT_CONFIG);
    }
    let dir = out_dir(cli, &cfg)?;
    let mut pipe = pipeline_config(cli, &cfg);
    pipe.lasso = lsps_core::simbench::sweep_lasso();
    let table = run_sim1_sweep(&cfg.sim1.to_config(), &cfg.sim1.sigma2_grid, &pipe)?;
    write_raw(&table, &dir.join("sim1_raw.csv"))?;
    write_extended_agg(&table, &dir.join("sim1_agg.csv"))?;
    let plot = svg::line_plot(
        "Effect RMSE vs confounder noise",
        "log10 sigma2",
        "RMSE",
        &rmse_plot(&table, f64::log10),
    );
    fs::write(dir.join("sim1_rmse.svg"), plot)?;
    write_meta(&dir, "sim1", &cfg, cfg.sim1.master_seed)?;
    Ok(0)
}

fn cmd_sim2(cli: &Cli, mut cfg: FileConfig) -> anyhow::Result<u8> {
    if let Some(s) = cli.seed {
        cfg.sim2.master_seed = s;
    }
    if cfg.sim2.replicates < 2 {
        eprintln!("error: aggregate requires >= 2 replicates");
        return Ok(EXIT_CONFIG);
    }
    if cfg.sim2.n_grid.is_empty() || cfg.sim2.m_grid.is_empty() {
        eprintln!("error: empty n_grid or m_grid");
        return Ok(EXIT_CONFIG);
    }
    let dir = out_dir(cli, &cfg)?;
    let mut pipe = pipeline_config(cli, &cfg);
    pipe.lasso = lsps_core::simbench::sweep_lasso();
    let mut combined = SweepTable {
        raw: Vec::new(),
        agg: Vec::new(),
    };
    let mut series = Vec::new();
    for &n in &cfg.sim2.n_grid {
        let mut table = run_sim2_sweep(&cfg.sim2.to_config(n), &cfg.sim2.m_grid, &pipe)?;
        let tag = format!("m_n{n}");
        for r in &mut table.raw {
            r.sweep_param = tag.clone();
        }
        for r in &mut table.agg {
            r.sweep_param = tag.clone();
        }
        for s in rmse_plot(&table, f64::log10) {
            series.push(Series {
                name: format!("{} n={n}", s.name),
                points: s.points,
            });
        }
        combined.raw.extend(table.raw);
        combined.agg.extend(table.agg);
    }
    write_raw(&combined, &dir.join("sim2_raw.csv"))?;
    write_extended_agg(&combined, &dir.join("sim2_agg.csv"))?;
    let plot = svg::line_plot("Effect RMSE vs covariate count", "log10 m", "RMSE", &series);
    fs::write(dir.join("sim2_rmse.svg"), plot)?;
    write_meta(&dir, "sim2", &cfg, cfg.sim2.master_seed)?;
    Ok(0)
}

fn load_cohort(input: &InputSection) -> anyhow::Result<CohortDataset> {
    match input {
        InputSection::Dense {
            path,
            treatment,
            outcome,
            time,
            event,
        } => {
            let outcome = match (outcome, time, event) {
                (Some(y), None, None) => OutcomeSchema::Continuous(y.clone()),
                (None, Some(t), Some(e)) => OutcomeSchema::TimeToEvent {
                    time: t.clone(),
                    event: e.clone(),
                },
                _ => anyhow::bail!(
                    "input must name either `outcome` or both `time` and `event`"
                ),
            };
            let schema = DenseSchema {
                treatment: treatment.clone(),
                outcome,
            };
            Ok(load_dense_csv(path, &schema)?)
        }
        InputSection::Sparse {
            triplets,
            dictionary,
            subjects,
        } => Ok(load_sparse(triplets, dictionary, subjects)?),
    }
}

fn read_exclusions(path: &Path) -> anyhow::Result<HashSet<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read exclusion list {}: {e}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn cmd_pipeline(cli: &Cli, cfg: FileConfig, with_effect: bool) -> anyhow::Result<u8> {
    let input = match &cfg.input {
        Some(i) => i,
        None => {
            eprintln!("error: analyze/diagnose require an [input] config section");
            return Ok(EXIT_CONFIG);
        }
    };
    let mut data = load_cohort(input)?;
    if let Some(path) = &cli.exclude {
        let excluded = read_exclusions(path)?;
        data = data.without_covariates(&excluded)?;
    }
    let dir = out_dir(cli, &cfg)?;
    let pipe = pipeline_config(cli, &cfg);
    let report = run_analysis(&data, &pipe)?;

    let balance_file = fs::File::create(dir.join("balance.csv"))?;
    report.balance.write_csv(balance_file)?;

    let mut doc = serde_json::to_value(&report)?;
    if !with_effect {
        let obj = doc.as_object_mut().expect("report is an object");
        obj.remove("effect");
        obj.remove("unadjusted");
    }
    let full = json!({
        "tool": "lsps",
        "version": env!("CARGO_PKG_VERSION"),
        "command": if with_effect { "analyze" } else { "diagnose" },
        "master_seed": pipe.seed,
        "resolved_config": &cfg,
        "report": doc,
    });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&full)?)?;
    write_meta(&dir, if with_effect { "analyze" } else { "diagnose" }, &cfg, pipe.seed)?;

    // highest applicable diagnostic code wins
    let code = if !report.balance.pass {
        EXIT_BALANCE
    } else if !report.equipoise.pass {
        EXIT_EQUIPOISE
    } else {
        0
    };
    Ok(code)
}
