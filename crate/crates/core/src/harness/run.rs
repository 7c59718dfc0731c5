use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::config::{DatasetSpec, EstimatorKind, EstimatorSpec, ExperimentConfig, RankChoice};
use crate::data::{generate_synthetic, load_csv, split, Splits};
use crate::error::{Error, Result};
use crate::estimators::{
    evaluate_mse, fit_ols, sweep_with, ChannelStrategy, LinearModel, NormPolicy, RankFactors, RankMethod,
};
use crate::linalg::svd;
use crate::rootpurge::{fit_root_purge_irls, materialize_time_weight, train_plain_traced, train_root_purge_traced};
use crate::roots::{column_roots, RootSet};
use crate::series::{SegmentMode, SegmentSet, TimeSeries};

/// Train/validation/test windows of one channel (or of all channels stacked).
#[derive(Debug, Clone)]
pub struct ChannelData {
    pub train: SegmentSet,
    pub val: Option<SegmentSet>,
    pub test: Option<SegmentSet>,
}

impl ChannelData {
    /// Windows of `channel` from each split; empty splits become `None`.
    pub fn from_splits(
        splits: &Splits,
        channel: usize,
        lookback: usize,
        horizon: usize,
        mode: SegmentMode,
    ) -> Result<Self> {
        let optional = |view: &crate::data::SplitView| {
            if view.is_empty() {
                Ok(None)
            } else {
                view.segments(channel, lookback, horizon, mode).map(Some)
            }
        };
        Ok(Self {
            train: splits.train.segments(channel, lookback, horizon, mode)?,
            val: optional(&splits.val)?,
            test: optional(&splits.test)?,
        })
    }

    /// Pool several channels' windows (channel-independent fitting).
    pub fn stack(parts: &[ChannelData]) -> Result<Self> {
        let gather = |pick: fn(&ChannelData) -> Option<&SegmentSet>| -> Result<Option<SegmentSet>> {
            let sets: Option<Vec<SegmentSet>> = parts.iter().map(|p| pick(p).cloned()).collect();
            sets.map(|s| SegmentSet::stack(&s)).transpose()
        };
        Ok(Self {
            train: SegmentSet::stack(&parts.iter().map(|p| p.train.clone()).collect::<Vec<_>>())?,
            val: gather(|p| p.val.as_ref())?,
            test: gather(|p| p.test.as_ref())?,
        })
    }

    pub fn val(&self) -> Result<&SegmentSet> {
        self.val.as_ref().ok_or(Error::EmptySplit("val"))
    }

    pub fn test(&self) -> Result<&SegmentSet> {
        self.test.as_ref().ok_or(Error::EmptySplit("test"))
    }
}

/// A fitted model plus estimator-specific details (selected rank, epochs…).
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: LinearModel,
    pub details: Map<String, Value>,
}

/// Fit one estimator at one λ (ignored by estimators without a penalty).
pub fn fit_estimator(
    spec: &EstimatorSpec,
    lambda: f64,
    data: &ChannelData,
    norm_policy: NormPolicy,
    seed: u64,
) -> Result<Fitted> {
    let p = &spec.params;
    let mut details = Map::new();
    let model = match spec.kind {
        EstimatorKind::Ols => fit_ols(&data.train, norm_policy)?,
        EstimatorKind::Rrr | EstimatorKind::Dwrr => {
            let method = if spec.kind == EstimatorKind::Rrr {
                RankMethod::Rrr
            } else {
                RankMethod::Dwrr
            };
            let factors = RankFactors::new(&data.train, method, norm_policy)?;
            match p.rank {
                RankChoice::Fixed(r) => factors.model(r)?,
                RankChoice::Sweep => {
                    let sweep = sweep_with(&factors, data.val()?, data.test()?)?;
                    details.insert("selected_rank".into(), json!(sweep.selected_rank));
                    details.insert("top3_ranks".into(), json!(sweep.top3_ranks));
                    details.insert("top3_best_rank".into(), json!(sweep.top3_best_rank));
                    details.insert("top3_best_test_mse".into(), json!(sweep.top3_best_test_mse));
                    factors.model(sweep.selected_rank)?
                }
            }
        }
        EstimatorKind::RootPurge | EstimatorKind::GradientPlain => {
            let (model, trace) = if spec.kind == EstimatorKind::RootPurge {
                train_root_purge_traced(&data.train, data.val()?, &p.purge_config(lambda, seed), norm_policy)?
            } else {
                train_plain_traced(&data.train, data.val()?, &p.purge_config(0.0, seed), norm_policy)?
            };
            details.insert("best_epoch".into(), json!(trace.best_epoch));
            details.insert("epochs_run".into(), json!(trace.val_mse.len()));
            model
        }
        EstimatorKind::RootPurgeIrls => {
            let (model, trace) = fit_root_purge_irls(&data.train, &p.irls_config(lambda), norm_policy)?;
            details.insert("iterations".into(), json!(trace.step_fractions.len()));
            details.insert("converged".into(), json!(trace.converged));
            model
        }
    };
    Ok(Fitted { model, details })
}

/// The grid-identifying parameters of one point, as written to records.
pub fn grid_params(spec: &EstimatorSpec, lambda: f64) -> Value {
    match spec.kind {
        EstimatorKind::Ols | EstimatorKind::GradientPlain => json!({}),
        EstimatorKind::Rrr | EstimatorKind::Dwrr => json!({ "rank": spec.params.rank }),
        EstimatorKind::RootPurge | EstimatorKind::RootPurgeIrls => json!({ "lambda": lambda }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Error,
}

/// One grid point's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment_id: String,
    pub config_hash: String,
    pub point: usize,
    pub dataset: String,
    pub lookback: usize,
    pub horizon: usize,
    pub estimator: String,
    pub channel_strategy: ChannelStrategy,
    pub params: Value,
    pub seed: u64,
    pub status: PointStatus,
    pub train_mse: Option<f64>,
    pub val_mse: Option<f64>,
    pub test_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub details: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Paths relative to the output directory.
    #[serde(default)]
    pub artifacts: Vec<String>,
    /// Kept out of `records.jsonl` so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// A record plus the in-memory products behind it.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub record: ResultRecord,
    /// One model for CI, one per channel for INC; empty on error.
    pub models: Vec<LinearModel>,
    pub spectrum: Option<Vec<f64>>,
    pub roots: Option<RootSet>,
}

#[derive(Debug, Clone, Copy)]
struct GridPoint {
    index: usize,
    horizon: usize,
    seed: u64,
    lambda: f64,
}

fn grid(config: &ExperimentConfig) -> Vec<GridPoint> {
    let lambdas = match config.estimator {
        EstimatorKind::RootPurge | EstimatorKind::RootPurgeIrls => config.estimator_params.lambda_grid(),
        _ => vec![config.estimator_params.lambda],
    };
    let mut points = Vec::new();
    for &horizon in &config.horizons {
        for &seed in &config.seeds {
            for &lambda in &lambdas {
                points.push(GridPoint {
                    index: points.len(),
                    horizon,
                    seed,
                    lambda,
                });
            }
        }
    }
    points
}

/// The series for one seed (synthetic data is regenerated with that seed).
pub fn load_series(dataset: &DatasetSpec, seed: u64) -> Result<TimeSeries> {
    match dataset {
        DatasetSpec::Synthetic(spec) => generate_synthetic(&crate::data::SyntheticSpec { seed, ..spec.clone() }),
        DatasetSpec::Csv { path, date_column } => load_csv(path, date_column.as_deref()),
    }
}

/// Split (and optionally standardize) a series the way `config` asks.
pub fn prepare_splits(config: &ExperimentConfig, series: &TimeSeries) -> Result<Splits> {
    let splits = split(series, &config.split, config.lookback)?;
    if config.standardize() {
        Ok(splits.standardized()?.0)
    } else {
        Ok(splits)
    }
}

fn mse_on(models: &[LinearModel], sets: &[Option<&SegmentSet>]) -> Result<Option<f64>> {
    if sets.iter().any(Option::is_none) {
        return Ok(None);
    }
    let mut total = 0.0;
    for (m, s) in models.iter().zip(sets) {
        total += evaluate_mse(m, s.expect("checked above"))?;
    }
    Ok(Some(total / models.len() as f64))
}

struct PointOutput {
    models: Vec<LinearModel>,
    details: Map<String, Value>,
    train: f64,
    val: Option<f64>,
    test: Option<f64>,
    spectrum: Option<Vec<f64>>,
    roots: Option<RootSet>,
}

fn run_point(config: &ExperimentConfig, splits: &Splits, point: &GridPoint) -> Result<PointOutput> {
    let (l, h) = (config.lookback, point.horizon);
    let spec = config.estimator_spec();
    let channels = splits.train.series()?.n_channels();
    let per_channel = (0..channels)
        .map(|c| ChannelData::from_splits(splits, c, l, h, config.segment_mode))
        .collect::<Result<Vec<_>>>()?;
    let groups = match config.channel_strategy {
        ChannelStrategy::Ci => vec![ChannelData::stack(&per_channel)?],
        ChannelStrategy::Inc => per_channel,
    };

    let mut models = Vec::with_capacity(groups.len());
    let mut all_details = Vec::with_capacity(groups.len());
    for data in &groups {
        let fitted = fit_estimator(&spec, point.lambda, data, config.norm_policy, point.seed)?;
        models.push(fitted.model);
        all_details.push(fitted.details);
    }
    let details = if all_details.len() == 1 {
        all_details.pop().expect("one entry")
    } else if all_details.iter().all(Map::is_empty) {
        Map::new()
    } else {
        let mut m = Map::new();
        m.insert(
            "per_channel".into(),
            Value::Array(all_details.into_iter().map(Value::Object).collect()),
        );
        m
    };

    let train = mse_on(&models, &groups.iter().map(|g| Some(&g.train)).collect::<Vec<_>>())?.expect("train present");
    let val = mse_on(&models, &groups.iter().map(|g| g.val.as_ref()).collect::<Vec<_>>())?;
    let test = mse_on(&models, &groups.iter().map(|g| g.test.as_ref()).collect::<Vec<_>>())?;
    for (name, v) in [("train", Some(train)), ("val", val), ("test", test)] {
        if v.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFinite(match name {
                "train" => "train MSE",
                "val" => "validation MSE",
                _ => "test MSE",
            }));
        }
    }

    let first = &models[0];
    let spectrum = Some(spectrum_report(first, config.top_n)?);
    let roots = if config.horizon <= h {
        Some(column_roots(&first.effective_time_weight(), config.horizon)?)
    } else {
        None
    };
    Ok(PointOutput {
        models,
        details,
        train,
        val,
        test,
        spectrum,
        roots,
    })
}

/// The `top_n` largest singular values of the model's (materialized)
/// time-domain weight, in descending order.
pub fn spectrum_report(model: &LinearModel, top_n: usize) -> Result<Vec<f64>> {
    let s = svd(&materialize_time_weight(model))?;
    Ok(s.singular_values.iter().take(top_n).copied().collect())
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Run every (horizon × seed × λ) point without touching the filesystem
/// (except to read a CSV dataset). A failing point yields an error record;
/// it never aborts the others.
pub fn execute(config: &ExperimentConfig) -> Result<Vec<PointResult>> {
    config.validate()?;
    let experiment_id = config.experiment_id();
    let config_hash = config.hash();
    let pool = thread_pool(config.workers)?;

    pool.install(|| {
        // Data per seed; CSV data is the same for every seed, so load it once.
        let shared = config.dataset.is_csv().then(|| {
            load_series(&config.dataset, 0)
                .and_then(|s| prepare_splits(config, &s))
                .map_err(|e| e.to_string())
        });
        let splits: BTreeMap<u64, std::result::Result<Splits, String>> = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let s = match &shared {
                    Some(s) => s.clone(),
                    None => load_series(&config.dataset, seed)
                        .and_then(|s| prepare_splits(config, &s))
                        .map_err(|e| e.to_string()),
                };
                (seed, s)
            })
            .collect();

        let spec = config.estimator_spec();
        let results = grid(config)
            .par_iter()
            .map(|point| {
                let start = Instant::now();
                let outcome = splits[&point.seed]
                    .as_ref()
                    .map_err(|e| e.clone())
                    .and_then(|s| run_point(config, s, point).map_err(|e| e.to_string()));
                let mut record = ResultRecord {
                    experiment_id: experiment_id.clone(),
                    config_hash: config_hash.clone(),
                    point: point.index,
                    dataset: config.dataset.label(),
                    lookback: config.lookback,
                    horizon: point.horizon,
                    estimator: config.estimator.to_string(),
                    channel_strategy: config.channel_strategy,
                    params: grid_params(&spec, point.lambda),
                    seed: point.seed,
                    status: PointStatus::Ok,
                    train_mse: None,
                    val_mse: None,
                    test_mse: None,
                    details: Map::new(),
                    error: None,
                    artifacts: Vec::new(),
                    wall_clock_seconds: 0.0,
                };
                let (models, spectrum, roots) = match outcome {
                    Ok(out) => {
                        record.train_mse = Some(out.train);
                        record.val_mse = out.val;
                        record.test_mse = out.test;
                        record.details = out.details;
                        record
                            .artifacts
                            .push(format!("artifacts/p{:04}_spectrum.csv", point.index));
                        if out.roots.is_some() {
                            record
                                .artifacts
                                .push(format!("artifacts/p{:04}_roots.json", point.index));
                        }
                        (out.models, out.spectrum, out.roots)
                    }
                    Err(message) => {
                        record.status = PointStatus::Error;
                        record.error = Some(message);
                        (Vec::new(), None, None)
                    }
                };
                record.wall_clock_seconds = start.elapsed().as_secs_f64();
                PointResult {
                    record,
                    models,
                    spectrum,
                    roots,
                }
            })
            .collect();
        Ok(results)
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row of `summary.csv`: statistics over seeds of a (horizon, params) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub config_hash: String,
    pub horizon: usize,
    pub estimator: String,
    pub params: String,
    pub n_ok: usize,
    pub n_error: usize,
    pub train_mse_mean: Option<f64>,
    pub train_mse_std: Option<f64>,
    pub val_mse_mean: Option<f64>,
    pub val_mse_std: Option<f64>,
    pub test_mse_mean: Option<f64>,
    pub test_mse_std: Option<f64>,
}

/// Group records by horizon and grid parameters, in first-seen order.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, String), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.horizon, r.params.to_string());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let ok: Vec<&&ResultRecord> = rs.iter().filter(|r| r.status == PointStatus::Ok).collect();
            let stat = |pick: fn(&ResultRecord) -> Option<f64>| {
                let v: Option<Vec<f64>> = ok.iter().map(|r| pick(r)).collect();
                match v {
                    Some(v) if !v.is_empty() => {
                        let (m, s) = mean_std(&v);
                        (Some(m), Some(s))
                    }
                    _ => (None, None),
                }
            };
            let (train_mse_mean, train_mse_std) = stat(|r| r.train_mse);
            let (val_mse_mean, val_mse_std) = stat(|r| r.val_mse);
            let (test_mse_mean, test_mse_std) = stat(|r| r.test_mse);
            SummaryRow {
                experiment_id: rs[0].experiment_id.clone(),
                config_hash: rs[0].config_hash.clone(),
                horizon: key.0,
                estimator: rs[0].estimator.clone(),
                params: key.1,
                n_ok: ok.len(),
                n_error: rs.len() - ok.len(),
                train_mse_mean,
                train_mse_std,
                val_mse_mean,
                val_mse_std,
                test_mse_mean,
                test_mse_std,
            }
        })
        .collect()
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::CsvFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::CsvFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_file(path, bytes)
}

/// Write `config.json`, `records.jsonl`, `summary.csv`, `timings.json` and
/// the per-point artifacts into `dir`.
pub fn write_outputs(config: &ExperimentConfig, results: &[PointResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("config.json"), serde_json::to_string_pretty(config)? + "\n")?;

    let mut lines = String::new();
    for r in results {
        lines.push_str(&serde_json::to_string(&r.record)?);
        lines.push('\n');
    }
    write_file(&dir.join("records.jsonl"), lines)?;

    let records: Vec<ResultRecord> = results.iter().map(|r| r.record.clone()).collect();
    write_csv(&dir.join("summary.csv"), &summarize(&records))?;

    let timings = json!({
        "experiment_id": config.experiment_id(),
        "config_hash": config.hash(),
        // Validation/test windows borrow the preceding `lookback` points as history.
        "lookback_prefix": true,
        "points": results.iter().map(|r| json!({
            "point": r.record.point,
            "wall_clock_seconds": r.record.wall_clock_seconds,
        })).collect::<Vec<_>>(),
        "total_wall_clock_seconds": results.iter().map(|r| r.record.wall_clock_seconds).sum::<f64>(),
    });
    write_file(
        &dir.join("timings.json"),
        serde_json::to_string_pretty(&timings)? + "\n",
    )?;

    for r in results {
        if let Some(spectrum) = &r.spectrum {
            let mut text = String::from("index,singular_value\n");
            for (i, s) in spectrum.iter().enumerate() {
                text.push_str(&format!("{},{}\n", i + 1, s));
            }
            write_file(
                &dir.join(format!("artifacts/p{:04}_spectrum.csv", r.record.point)),
                text,
            )?;
        }
        if let Some(roots) = &r.roots {
            write_file(
                &dir.join(format!("artifacts/p{:04}_roots.json", r.record.point)),
                serde_json::to_string(roots)? + "\n",
            )?;
        }
    }
    Ok(())
}

/// [`execute`] then [`write_outputs`] into `config.outputs`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let results = execute(config)?;
    write_outputs(config, &results, &config.outputs)?;
    Ok(results.into_iter().map(|r| r.record).collect())
}
