//! The studies built on top of single fits: data scaling, root recovery,
//! channel strategies and λ sensitivity.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, EstimatorKind, EstimatorSpec, ExperimentConfig, StudySpec};
use super::run::{execute, fit_estimator, mean_std, write_csv, write_file, ChannelData, PointStatus};
use crate::data::{generate_synthetic, split, SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::estimators::{fit_ols, ChannelStrategy, NormPolicy};
use crate::rootpurge::materialize_time_weight;
use crate::roots::{column_roots, root_distance, RootSet};
use crate::series::SegmentMode;

/// Shared window/split/normalization settings of a synthetic study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySetup {
    pub lookback: usize,
    pub horizon: usize,
    pub split: SplitSpec,
    pub norm_policy: NormPolicy,
    pub segment_mode: SegmentMode,
    pub seeds: Vec<u64>,
    /// 1-based horizon index whose roots are compared.
    pub root_horizon: usize,
}

impl StudySetup {
    /// Settings of `config`, using its first horizon.
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            lookback: config.lookback,
            horizon: config.horizons[0],
            split: config.split.clone(),
            norm_policy: config.norm_policy,
            segment_mode: config.segment_mode,
            seeds: config.seeds.clone(),
            root_horizon: config.horizon,
        }
    }

    fn channel_data(&self, spec: &SyntheticSpec) -> Result<ChannelData> {
        let series = generate_synthetic(spec)?;
        let splits = split(&series, &self.split, self.lookback)?;
        ChannelData::from_splits(&splits, 0, self.lookback, self.horizon, self.segment_mode)
    }
}

fn first_lambda(spec: &EstimatorSpec) -> f64 {
    spec.params.lambda_grid()[0]
}

/// One cell of a scaling table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    /// `length` (varying series length) or `noise` (varying σ).
    pub table: String,
    pub estimator: String,
    pub series_length: usize,
    pub sigma: f64,
    pub n_seeds: usize,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
    /// Frobenius norm of the (materialized) weight.
    pub weight_norm_mean: f64,
    pub weight_norm_std: f64,
}

/// Test MSE against series length at `base.sigma`, and against σ at the
/// length of `base`, for every estimator. Lengths count all samples; the
/// training share is set by `setup.split`.
pub fn scaling_study(
    base: &SyntheticSpec,
    series_lengths: &[usize],
    noise_levels: &[f64],
    estimators: &[EstimatorSpec],
    setup: &StudySetup,
) -> Result<Vec<ScalingRow>> {
    if estimators.is_empty() || (series_lengths.is_empty() && noise_levels.is_empty()) {
        return Err(Error::InvalidArgument(
            "scaling study needs estimators and a grid".into(),
        ));
    }
    let mut cells = Vec::new();
    for &n in series_lengths {
        for est in estimators {
            cells.push(("length", n, base.sigma, est));
        }
    }
    for &sigma in noise_levels {
        for est in estimators {
            cells.push(("noise", base.len(), sigma, est));
        }
    }
    cells
        .par_iter()
        .map(|&(table, n, sigma, est)| {
            let mut mses = Vec::new();
            let mut norms = Vec::new();
            for &seed in &setup.seeds {
                let spec = SyntheticSpec {
                    t_end: base.t_start + n as f64 * base.dt,
                    sigma,
                    seed,
                    ..base.clone()
                };
                let data = setup.channel_data(&spec)?;
                let fit = fit_estimator(est, first_lambda(est), &data, setup.norm_policy, seed)?;
                mses.push(crate::estimators::evaluate_mse(&fit.model, data.test()?)?);
                norms.push(materialize_time_weight(&fit.model).norm());
            }
            let (test_mse_mean, test_mse_std) = mean_std(&mses);
            let (weight_norm_mean, weight_norm_std) = mean_std(&norms);
            Ok(ScalingRow {
                table: table.into(),
                estimator: est.label(),
                series_length: n,
                sigma,
                n_seeds: setup.seeds.len(),
                test_mse_mean,
                test_mse_std,
                weight_norm_mean,
                weight_norm_std,
            })
        })
        .collect()
}

/// Root distances of one estimator over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootRecoveryRow {
    pub estimator: String,
    pub mean_distance: f64,
    pub std_distance: f64,
    pub distances: Vec<f64>,
}

/// Ground-truth roots: the OLS fit on the noise-free training windows, with
/// the same lookback and normalization as the estimators under test.
pub fn reference_roots(spec: &SyntheticSpec, setup: &StudySetup) -> Result<RootSet> {
    let clean = SyntheticSpec {
        sigma: 0.0,
        ..spec.clone()
    };
    let data = setup.channel_data(&clean)?;
    let ols = fit_ols(&data.train, setup.norm_policy)?;
    column_roots(&ols.effective_time_weight(), setup.root_horizon)
}

/// Fit every estimator on the noisy signal for each seed and measure the
/// Hungarian-matched root distance to [`reference_roots`]. Roots are read
/// from the end-to-end weight, so instance normalization is included.
pub fn root_recovery_study(
    spec: &SyntheticSpec,
    setup: &StudySetup,
    estimators: &[EstimatorSpec],
) -> Result<Vec<RootRecoveryRow>> {
    let truth = reference_roots(spec, setup)?;
    estimators
        .par_iter()
        .map(|est| {
            let distances = setup
                .seeds
                .iter()
                .map(|&seed| {
                    let data = setup.channel_data(&SyntheticSpec { seed, ..spec.clone() })?;
                    let fit = fit_estimator(est, first_lambda(est), &data, setup.norm_policy, seed)?;
                    let roots = column_roots(&fit.model.effective_time_weight(), setup.root_horizon)?;
                    Ok(root_distance(&truth, &roots))
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean_distance, std_distance) = mean_std(&distances);
            Ok(RootRecoveryRow {
                estimator: est.label(),
                mean_distance,
                std_distance,
                distances,
            })
        })
        .collect()
}

/// Mean/std test MSE of one configuration variant at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub horizon: usize,
    pub strategy: ChannelStrategy,
    pub method: String,
    pub n_seeds: usize,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
}

fn test_mse_by_horizon(config: &ExperimentConfig) -> Result<Vec<(usize, Vec<f64>)>> {
    let results = execute(config)?;
    let mut out = Vec::new();
    for &h in &config.horizons {
        let mut values = Vec::new();
        for r in results.iter().filter(|r| r.record.horizon == h) {
            if r.record.status == PointStatus::Error {
                return Err(Error::InvalidArgument(format!(
                    "point {} failed: {}",
                    r.record.point,
                    r.record.error.as_deref().unwrap_or("unknown error")
                )));
            }
            values.push(r.record.test_mse.ok_or(Error::EmptySplit("test"))?);
        }
        out.push((h, values));
    }
    Ok(out)
}

/// {CI, INC} × {plain gradient descent, Root Purge at the configured λ}.
pub fn ci_inc_comparison(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for strategy in [ChannelStrategy::Ci, ChannelStrategy::Inc] {
        for kind in [EstimatorKind::GradientPlain, EstimatorKind::RootPurge] {
            let mut cfg = config.clone();
            cfg.channel_strategy = strategy;
            cfg.estimator = kind;
            cfg.estimator_params.lambdas.clear();
            cfg.study = None;
            for (horizon, values) in test_mse_by_horizon(&cfg)? {
                let (test_mse_mean, test_mse_std) = mean_std(&values);
                rows.push(ComparisonRow {
                    horizon,
                    strategy,
                    method: if kind == EstimatorKind::RootPurge {
                        format!("root_purge(lambda={})", cfg.estimator_params.lambda)
                    } else {
                        "plain".into()
                    },
                    n_seeds: values.len(),
                    test_mse_mean,
                    test_mse_std,
                });
            }
        }
    }
    rows.sort_by_key(|r| r.horizon);
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub horizon: usize,
    pub lambda: f64,
    pub n_seeds: usize,
    pub val_mse_mean: f64,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
}

/// Root Purge over a λ grid; one row per (horizon, λ), seeds averaged.
pub fn lambda_sensitivity(config: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<LambdaRow>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("λ grid is empty".into()));
    }
    let mut cfg = config.clone();
    cfg.estimator = EstimatorKind::RootPurge;
    cfg.estimator_params.lambdas = lambdas.to_vec();
    cfg.study = None;
    let results = execute(&cfg)?;
    let mut rows = Vec::new();
    for &horizon in &cfg.horizons {
        for &lambda in lambdas {
            let recs: Vec<_> = results
                .iter()
                .map(|r| &r.record)
                .filter(|r| r.horizon == horizon && r.params["lambda"].as_f64() == Some(lambda))
                .collect();
            if let Some(bad) = recs.iter().find(|r| r.status == PointStatus::Error) {
                return Err(Error::InvalidArgument(format!(
                    "λ={lambda}, seed {}: {}",
                    bad.seed,
                    bad.error.as_deref().unwrap_or("unknown error")
                )));
            }
            let vals: Vec<f64> = recs
                .iter()
                .map(|r| r.val_mse.ok_or(Error::EmptySplit("val")))
                .collect::<Result<_>>()?;
            let tests: Vec<f64> = recs
                .iter()
                .map(|r| r.test_mse.ok_or(Error::EmptySplit("test")))
                .collect::<Result<_>>()?;
            let (test_mse_mean, test_mse_std) = mean_std(&tests);
            rows.push(LambdaRow {
                horizon,
                lambda,
                n_seeds: recs.len(),
                val_mse_mean: mean_std(&vals).0,
                test_mse_mean,
                test_mse_std,
            });
        }
    }
    Ok(rows)
}

/// What [`run_study`] produced, by study kind.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyOutput {
    Scaling(Vec<ScalingRow>),
    RootRecovery(Vec<RootRecoveryRow>),
    CiInc(Vec<ComparisonRow>),
    LambdaSensitivity(Vec<LambdaRow>),
}

fn synthetic_base(config: &ExperimentConfig, study: &str) -> Result<SyntheticSpec> {
    match &config.dataset {
        DatasetSpec::Synthetic(s) => Ok(s.clone()),
        DatasetSpec::Csv { .. } => Err(Error::Config(format!("the {study} study needs a synthetic dataset"))),
    }
}

#[derive(Serialize)]
struct RootRecoveryCsvRow<'a> {
    estimator: &'a str,
    mean_distance: f64,
    std_distance: f64,
    distances: String,
}

/// Run `config.study` and write its table (plus a config echo) into `dir`.
pub fn run_study(config: &ExperimentConfig, dir: &Path) -> Result<StudyOutput> {
    config.validate()?;
    let study = config
        .study
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `study` section".into()))?;
    write_file(&dir.join("config.json"), serde_json::to_string_pretty(config)? + "\n")?;
    let setup = StudySetup::from_config(config);
    let output = match study {
        StudySpec::Scaling {
            series_lengths,
            noise_levels,
            estimators,
        } => {
            let base = synthetic_base(config, "scaling")?;
            let rows = scaling_study(&base, series_lengths, noise_levels, estimators, &setup)?;
            write_csv(&dir.join("scaling.csv"), &rows)?;
            StudyOutput::Scaling(rows)
        }
        StudySpec::RootRecovery { estimators } => {
            let base = synthetic_base(config, "root recovery")?;
            let rows = root_recovery_study(&base, &setup, estimators)?;
            let csv_rows: Vec<_> = rows
                .iter()
                .map(|r| RootRecoveryCsvRow {
                    estimator: &r.estimator,
                    mean_distance: r.mean_distance,
                    std_distance: r.std_distance,
                    distances: r.distances.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                })
                .collect();
            write_csv(&dir.join("root_recovery.csv"), &csv_rows)?;
            StudyOutput::RootRecovery(rows)
        }
        StudySpec::CiInc => {
            let rows = ci_inc_comparison(config)?;
            write_csv(&dir.join("ci_inc.csv"), &rows)?;
            StudyOutput::CiInc(rows)
        }
        StudySpec::LambdaSensitivity { lambdas } => {
            let rows = lambda_sensitivity(config, lambdas)?;
            write_csv(&dir.join("lambda_sensitivity.csv"), &rows)?;
            StudyOutput::LambdaSensitivity(rows)
        }
    };
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticKind;
    use crate::harness::config::{EstimatorParams, RankChoice};

    fn setup(l: usize, h: usize, seeds: Vec<u64>) -> StudySetup {
        StudySetup {
            lookback: l,
            horizon: h,
            split: SplitSpec::ratios(0.5, 0.25, 0.25),
            norm_policy: NormPolicy::None,
            segment_mode: SegmentMode::Hankel,
            seeds,
            root_horizon: 1,
        }
    }

    #[test]
    fn noise_free_recovery_is_exact_for_ols() {
        let spec = SyntheticSpec {
            dt: 0.2,
            ..SyntheticSpec::new(SyntheticKind::TrendPeriodic, 200.0)
        };
        let rows = root_recovery_study(
            &spec,
            &setup(8, 4, vec![0, 1]),
            &[EstimatorSpec::new(EstimatorKind::Ols)],
        )
        .unwrap();
        assert!(rows[0].mean_distance < 1e-6, "{rows:?}");
    }

    #[test]
    fn scaling_without_noise_is_near_zero() {
        let base = SyntheticSpec {
            dt: 0.2,
            ..SyntheticSpec::new(SyntheticKind::TrendPeriodic, 100.0)
        };
        let ests = [
            EstimatorSpec::new(EstimatorKind::Ols),
            EstimatorSpec {
                kind: EstimatorKind::Rrr,
                params: EstimatorParams {
                    rank: RankChoice::Fixed(4),
                    ..Default::default()
                },
            },
        ];
        let rows = scaling_study(&base, &[400, 800], &[0.0], &ests, &setup(8, 4, vec![0])).unwrap();
        assert_eq!(rows.len(), 6);
        for r in rows.iter().filter(|r| r.sigma == 0.0) {
            assert!(r.test_mse_mean < 1e-8, "{r:?}");
        }
    }
}
