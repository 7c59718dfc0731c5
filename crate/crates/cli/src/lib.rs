//! Command-line adapter over the `rootcast` library.
//!
//! Every subcommand reads an experiment config (`--config`), applies
//! `--overrides`, echoes the effective config into the output directory and
//! calls one library entry point. Exit codes: 0 success, 1 configuration
//! error (reported before any computation), 2 runtime failure.

pub mod model_io;
pub mod overrides;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rootcast::data::generate_synthetic;
use rootcast::estimators::{rank_sweep, RankMethod};
use rootcast::harness::{
    execute, load_series, prepare_splits, run_study, spectrum_report, write_outputs, ChannelData, DatasetSpec,
    EstimatorKind, ExperimentConfig, PointResult, PointStatus,
};
use rootcast::roots::column_roots;
use serde_json::{json, Value};

pub use model_io::{load_model, save_model, ModelIoError};
pub use overrides::apply_override;

/// Environment variable that replaces the config's `outputs` directory.
pub const OUTPUT_DIR_ENV: &str = "ROOTCAST_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "rootcast",
    version,
    about = "Linear forecasters, rank reduction and Root Purge"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted-path overrides, e.g. `estimator_params.lambda=0.5`.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Concurrent grid points.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Do not print a summary to stdout.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// A saved model; when given, it is used instead of fitting one.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the configured estimator over the grid; writes records and models.
    Train(CommonArgs),
    /// Evaluate a saved model on the configured data splits.
    Eval(EvalArgs),
    /// Validation/test MSE for every rank (RRR unless the config says DWRR).
    SweepRank(CommonArgs),
    /// Train Root Purge over the configured λ grid.
    Purge(CommonArgs),
    /// Characteristic roots at the config's `horizon` index.
    Roots(ModelArgs),
    /// Write the configured synthetic series (one CSV per seed).
    Synth(CommonArgs),
    /// Singular values of fitted (or saved) weights.
    Spectrum(ModelArgs),
    /// Run the config's `study` section.
    Study(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<rootcast::Error> for CliError {
    fn from(e: rootcast::Error) -> Self {
        match e {
            rootcast::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Read, override and validate a config; `--workers` and the output-dir
/// environment variable are folded in so the echo shows what actually ran.
pub fn load_config(args: &CommonArgs, output_dir_env: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let path = &args.config;
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for o in &args.overrides {
        apply_override(&mut value, o).map_err(CliError::Config)?;
    }
    if let Some(n) = args.workers {
        value["workers"] = json!(n);
    }
    if let Some(dir) = output_dir_env.filter(|d| !d.is_empty()) {
        value["outputs"] = json!(dir);
    }
    ExperimentConfig::from_json(&value.to_string()).map_err(|e| {
        CliError::Config(format!(
            "{}: {}",
            path.display(),
            e.to_string().trim_start_matches("config: ")
        ))
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn echo_config(config: &ExperimentConfig) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(config).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    write(&config.outputs.join("config.json"), text)
}

fn report(quiet: bool, lines: impl IntoIterator<Item = String>) {
    if !quiet {
        for l in lines {
            println!("{l}");
        }
    }
}

fn record_lines(results: &[PointResult]) -> Vec<String> {
    results
        .iter()
        .map(|r| {
            let rec = &r.record;
            match rec.status {
                PointStatus::Ok => format!(
                    "point {} H={} seed={} {} {}: train {:.6} val {} test {}",
                    rec.point,
                    rec.horizon,
                    rec.seed,
                    rec.estimator,
                    rec.params,
                    rec.train_mse.unwrap_or(f64::NAN),
                    rec.val_mse.map_or("-".into(), |v| format!("{v:.6}")),
                    rec.test_mse.map_or("-".into(), |v| format!("{v:.6}")),
                ),
                PointStatus::Error => format!(
                    "point {} H={} seed={}: error: {}",
                    rec.point,
                    rec.horizon,
                    rec.seed,
                    rec.error.as_deref().unwrap_or("?")
                ),
            }
        })
        .collect()
}

/// Run the grid, write the standard outputs plus `models/`, and fail with
/// exit code 2 if every point failed.
fn train_like(config: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let results = execute(config)?;
    write_outputs(config, &results, &config.outputs)?;
    for r in &results {
        for (c, m) in r.models.iter().enumerate() {
            save_model(
                m,
                config.outputs.join(format!("models/p{:04}_c{c}.json", r.record.point)),
            )?;
        }
    }
    report(quiet, record_lines(&results));
    let failed = results.iter().filter(|r| r.record.status == PointStatus::Error).count();
    if failed == results.len() {
        return Err(CliError::Runtime(format!(
            "all {failed} grid points failed; see records.jsonl"
        )));
    }
    Ok(())
}

fn eval(config: &ExperimentConfig, model_path: &Path, quiet: bool) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    if model.lookback() != config.lookback {
        return Err(CliError::Config(format!(
            "model lookback {} differs from config lookback {}",
            model.lookback(),
            config.lookback
        )));
    }
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let series = load_series(&config.dataset, seed)?;
        let splits = prepare_splits(config, &series)?;
        for channel in 0..series.n_channels() {
            let data =
                ChannelData::from_splits(&splits, channel, model.lookback(), model.horizon(), config.segment_mode)?;
            let mse = |s: Option<&rootcast::SegmentSet>| -> Result<Option<f64>, CliError> {
                Ok(s.map(|s| rootcast::estimators::evaluate_mse(&model, s)).transpose()?)
            };
            rows.push(json!({
                "seed": seed,
                "channel": channel,
                "train_mse": mse(Some(&data.train))?,
                "val_mse": mse(data.val.as_ref())?,
                "test_mse": mse(data.test.as_ref())?,
            }));
        }
    }
    let text = serde_json::to_string_pretty(&rows).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    write(&config.outputs.join("eval.json"), &text)?;
    report(quiet, [text]);
    Ok(())
}

fn sweep_rank(config: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let method = if config.estimator == EstimatorKind::Dwrr {
        RankMethod::Dwrr
    } else {
        RankMethod::Rrr
    };
    let mut csv = String::from("horizon,seed,rank,val_mse,test_mse\n");
    let mut selections = Vec::new();
    for &seed in &config.seeds {
        let series = load_series(&config.dataset, seed)?;
        let splits = prepare_splits(config, &series)?;
        for &h in &config.horizons {
            let parts = (0..series.n_channels())
                .map(|c| ChannelData::from_splits(&splits, c, config.lookback, h, config.segment_mode))
                .collect::<Result<Vec<_>, _>>()?;
            let data = ChannelData::stack(&parts)?;
            let sweep = rank_sweep(&data.train, data.val()?, data.test()?, method, config.norm_policy)?;
            for (i, &r) in sweep.ranks.iter().enumerate() {
                csv.push_str(&format!("{h},{seed},{r},{},{}\n", sweep.val_mse[i], sweep.test_mse[i]));
            }
            selections.push(json!({ "horizon": h, "seed": seed, "sweep": sweep }));
        }
    }
    write(&config.outputs.join("rank_sweep.csv"), csv)?;
    let text = serde_json::to_string_pretty(&selections).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    write(&config.outputs.join("rank_sweep.json"), text)?;
    report(
        quiet,
        selections.iter().map(|s| {
            format!(
                "H={} seed={}: selected rank {} (top-3 best {})",
                s["horizon"], s["seed"], s["sweep"]["selected_rank"], s["sweep"]["top3_best_rank"]
            )
        }),
    );
    Ok(())
}

fn roots(config: &ExperimentConfig, model_path: Option<&Path>, quiet: bool) -> Result<(), CliError> {
    let entries = match model_path {
        Some(p) => {
            let model = load_model(p)?;
            let set = column_roots(&model.effective_time_weight(), config.horizon)?;
            vec![json!({ "model": p.display().to_string(), "roots": set })]
        }
        None => {
            let results = execute(config)?;
            results
                .iter()
                .filter_map(|r| {
                    r.roots.as_ref().map(|set| {
                        json!({ "point": r.record.point, "seed": r.record.seed, "H": r.record.horizon, "roots": set })
                    })
                })
                .collect()
        }
    };
    if entries.is_empty() {
        return Err(CliError::Runtime(format!(
            "no roots computed (horizon index {} exceeds every horizon, or all points failed)",
            config.horizon
        )));
    }
    let text = serde_json::to_string_pretty(&entries).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    write(&config.outputs.join("roots.json"), text)?;
    report(
        quiet,
        [format!(
            "wrote {} root set(s) to {}",
            entries.len(),
            config.outputs.join("roots.json").display()
        )],
    );
    Ok(())
}

fn synth(config: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let DatasetSpec::Synthetic(spec) = &config.dataset else {
        return Err(CliError::Config("synth needs a synthetic dataset".into()));
    };
    for &seed in &config.seeds {
        let s = rootcast::data::SyntheticSpec { seed, ..spec.clone() };
        let series = generate_synthetic(&s)?;
        let mut csv = String::from("t,y\n");
        for (t, y) in s.times().iter().zip(series.channel(0)?) {
            csv.push_str(&format!("{t},{y}\n"));
        }
        let path = config.outputs.join(format!("synthetic_seed{seed}.csv"));
        write(&path, csv)?;
        report(quiet, [format!("wrote {} ({} points)", path.display(), series.len())]);
    }
    Ok(())
}

fn spectrum(config: &ExperimentConfig, model_path: Option<&Path>, quiet: bool) -> Result<(), CliError> {
    let mut csv = String::from("source,index,singular_value\n");
    let mut push = |source: &str, values: &[f64]| {
        for (i, s) in values.iter().enumerate() {
            csv.push_str(&format!("{source},{},{s}\n", i + 1));
        }
    };
    match model_path {
        Some(p) => push(
            &p.display().to_string(),
            &spectrum_report(&load_model(p)?, config.top_n)?,
        ),
        None => {
            for r in execute(config)? {
                if let Some(s) = &r.spectrum {
                    push(&format!("point{}", r.record.point), s);
                }
            }
        }
    }
    let path = config.outputs.join("spectrum.csv");
    write(&path, &csv)?;
    report(quiet, [csv]);
    Ok(())
}

fn study(config: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let output = run_study(config, &config.outputs)?;
    report(quiet, [format!("{output:#?}")]);
    Ok(())
}

/// Dispatch a parsed command line. `output_dir_env` is the value of
/// [`OUTPUT_DIR_ENV`], passed in so tests need not touch the environment.
pub fn run(cli: &Cli, output_dir_env: Option<&str>) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Train(c) | Command::SweepRank(c) | Command::Purge(c) | Command::Synth(c) | Command::Study(c) => c,
        Command::Eval(e) => &e.common,
        Command::Roots(m) | Command::Spectrum(m) => &m.common,
    };
    let mut config = load_config(common, output_dir_env)?;
    if let Command::Purge(_) = cli.command {
        if !matches!(
            config.estimator,
            EstimatorKind::RootPurge | EstimatorKind::RootPurgeIrls
        ) {
            config.estimator = EstimatorKind::RootPurge;
        }
    }
    if matches!(cli.command, Command::Study(_)) && config.study.is_none() {
        return Err(CliError::Config("config has no `study` section".into()));
    }
    echo_config(&config)?;
    let quiet = common.quiet;
    match &cli.command {
        Command::Train(_) | Command::Purge(_) => train_like(&config, quiet),
        Command::Eval(e) => eval(&config, &e.model, quiet),
        Command::SweepRank(_) => sweep_rank(&config, quiet),
        Command::Roots(m) => roots(&config, m.model.as_deref(), quiet),
        Command::Synth(_) => synth(&config, quiet),
        Command::Spectrum(m) => spectrum(&config, m.model.as_deref(), quiet),
        Command::Study(_) => study(&config, quiet),
    }
}
