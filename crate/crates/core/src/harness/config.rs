use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::estimators::{ChannelStrategy, Domain, NormPolicy};
use crate::rootpurge::{Init, IrlsConfig, PurgeConfig};
use crate::series::SegmentMode;

/// Where an experiment's series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated per seed; the experiment seed replaces `spec.seed`.
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        date_column: Option<String>,
    },
}

impl DatasetSpec {
    /// Short label used in records.
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Synthetic(s) => {
                let kind = serde_json::to_value(s.kind).expect("enum serializes");
                format!("synthetic:{}", kind.as_str().unwrap_or("?"))
            }
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }

    pub fn is_csv(&self) -> bool {
        matches!(self, DatasetSpec::Csv { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ols,
    Rrr,
    Dwrr,
    RootPurge,
    RootPurgeIrls,
    /// Gradient descent on the plain MSE with the Root Purge schedule.
    GradientPlain,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::Rrr => "rrr",
            EstimatorKind::Dwrr => "dwrr",
            EstimatorKind::RootPurge => "root_purge",
            EstimatorKind::RootPurgeIrls => "root_purge_irls",
            EstimatorKind::GradientPlain => "gradient_plain",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fixed rank or a full validation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankChoice {
    Fixed(usize),
    Sweep,
}

impl Serialize for RankChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RankChoice::Fixed(r) => s.serialize_u64(*r as u64),
            RankChoice::Sweep => s.serialize_str("sweep"),
        }
    }
}

impl<'de> Deserialize<'de> for RankChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(RankChoice::Fixed(r)),
            Raw::Text(t) if t == "sweep" => Ok(RankChoice::Sweep),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "rank must be a positive integer or \"sweep\", got \"{t}\""
            ))),
        }
    }
}

/// Estimator hyperparameters, flat so that `estimator_params.lambda=…`
/// style overrides reach every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorParams {
    /// RRR/DWRR rank.
    pub rank: RankChoice,
    /// λ grid; empty means the single `lambda`.
    pub lambdas: Vec<f64>,
    pub lambda: f64,
    pub order: usize,
    pub domain: Domain,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: Option<usize>,
    pub early_stop_patience: usize,
    pub init: Init,
    pub stop_gradient: bool,
    /// IRLS iteration cap and step tolerance.
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        let p = PurgeConfig::default();
        let i = IrlsConfig::default();
        Self {
            rank: RankChoice::Sweep,
            lambdas: Vec::new(),
            lambda: p.lambda,
            order: p.order,
            domain: p.domain,
            learning_rate: p.learning_rate,
            max_epochs: p.max_epochs,
            batch_size: p.batch_size,
            early_stop_patience: p.early_stop_patience,
            init: p.init,
            stop_gradient: p.stop_gradient,
            max_iters: i.max_iters,
            tol: i.tol,
        }
    }
}

impl EstimatorParams {
    /// The λ values a grid iterates over.
    pub fn lambda_grid(&self) -> Vec<f64> {
        if self.lambdas.is_empty() {
            vec![self.lambda]
        } else {
            self.lambdas.clone()
        }
    }

    pub fn purge_config(&self, lambda: f64, seed: u64) -> PurgeConfig {
        PurgeConfig {
            lambda,
            order: self.order,
            domain: self.domain,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            seed,
            early_stop_patience: self.early_stop_patience,
            init: self.init,
            stop_gradient: self.stop_gradient,
        }
    }

    pub fn irls_config(&self, lambda: f64) -> IrlsConfig {
        IrlsConfig {
            lambda,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

/// An estimator together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub params: EstimatorParams,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            params: EstimatorParams::default(),
        }
    }

    /// Human-readable label, e.g. `rrr(rank=2)` or `root_purge(λ=0.5)`.
    pub fn label(&self) -> String {
        let p = &self.params;
        match self.kind {
            EstimatorKind::Rrr | EstimatorKind::Dwrr => match p.rank {
                RankChoice::Fixed(r) => format!("{}(rank={r})", self.kind),
                RankChoice::Sweep => format!("{}(rank=sweep)", self.kind),
            },
            EstimatorKind::RootPurge | EstimatorKind::RootPurgeIrls => {
                let grid = p.lambda_grid();
                if grid.len() == 1 {
                    format!("{}(lambda={})", self.kind, grid[0])
                } else {
                    format!("{}(lambda grid)", self.kind)
                }
            }
            _ => self.kind.to_string(),
        }
    }
}

/// Optional study run by the `study` entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudySpec {
    /// Test MSE against series length (at the dataset's σ) and against σ
    /// (at the dataset's length). Needs a synthetic dataset.
    Scaling {
        series_lengths: Vec<usize>,
        noise_levels: Vec<f64>,
        estimators: Vec<EstimatorSpec>,
    },
    /// Root distance of each estimator's fit on the noisy signal to the
    /// OLS fit on the noise-free signal. Needs a synthetic dataset.
    RootRecovery { estimators: Vec<EstimatorSpec> },
    /// {CI, INC} × {plain, Root Purge} per horizon.
    CiInc,
    /// Mean validation/test MSE of Root Purge per λ.
    LambdaSensitivity { lambdas: Vec<f64> },
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_outputs() -> PathBuf {
    PathBuf::from("runs")
}

fn default_name() -> String {
    "experiment".into()
}

fn default_one() -> usize {
    1
}

fn default_top_n() -> usize {
    10
}

/// Everything one experiment run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: SplitSpec,
    pub lookback: usize,
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub channel_strategy: ChannelStrategy,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub estimator_params: EstimatorParams,
    #[serde(default)]
    pub norm_policy: NormPolicy,
    #[serde(default)]
    pub segment_mode: SegmentMode,
    /// Z-score channels with training statistics; defaults to true for CSV
    /// data and false for synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Concurrent grid points; defaults to the number of CPUs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// 1-based horizon index used for root artifacts.
    #[serde(default = "default_one")]
    pub horizon: usize,
    /// Number of singular values kept in spectrum artifacts.
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.horizons.is_empty() {
            return bad("horizons must not be empty".into());
        }
        if self.horizons.contains(&0) {
            return bad("horizons must be ≥ 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.lookback == 0 {
            return bad("lookback must be ≥ 1".into());
        }
        if self.horizon == 0 {
            return bad("root horizon index must be ≥ 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be ≥ 1".into());
        }
        if let DatasetSpec::Synthetic(s) = &self.dataset {
            s.validate().map_err(|e| Error::Config(format!("dataset: {e}")))?;
        }
        self.split
            .validate()
            .map_err(|e| Error::Config(format!("split: {e}")))?;
        let p = &self.estimator_params;
        if let RankChoice::Fixed(0) = p.rank {
            return bad("rank must be ≥ 1".into());
        }
        for &lambda in &p.lambda_grid() {
            p.purge_config(lambda, 0)
                .validate()
                .map_err(|e| Error::Config(format!("estimator_params: {e}")))?;
        }
        Ok(())
    }

    pub fn standardize(&self) -> bool {
        self.standardize.unwrap_or(self.dataset.is_csv())
    }

    /// SHA-256 of the canonical JSON form, hex encoded. `workers` and
    /// `outputs` do not affect results and are left out.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("workers");
            obj.remove("outputs");
        }
        let canonical = serde_json::to_vec(&value).expect("value serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `name-<first 12 hex digits of the hash>`.
    pub fn experiment_id(&self) -> String {
        format!("{}-{}", self.name, &self.hash()[..12])
    }

    pub fn estimator_spec(&self) -> EstimatorSpec {
        EstimatorSpec {
            kind: self.estimator,
            params: self.estimator_params.clone(),
        }
    }
}
