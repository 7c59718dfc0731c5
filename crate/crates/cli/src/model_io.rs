//! JSON model files.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "domain": "time",
//!   "lookback": 2,
//!   "horizon": 1,
//!   "norm_policy": "none",
//!   "weight": [0.5, 0.25]
//! }
//! ```
//!
//! Time weights are stored row-major as `lookback × horizon` reals;
//! frequency weights as `(lookback/2+1) × (horizon/2+1)` `[re, im]` pairs.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rootcast::rootpurge::freq::freq_shape;
use rootcast::{Domain, LinearModel, NormPolicy, Weights};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed model JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported format_version {found} (expected {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
    #[error(
        "{path}: weight has {found} entries, expected {expected} for L={lookback}, H={horizon} ({domain:?} domain)"
    )]
    WeightLength {
        path: PathBuf,
        expected: usize,
        found: usize,
        lookback: usize,
        horizon: usize,
        domain: Domain,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: rootcast::Error,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightValues {
    Real(Vec<f64>),
    Complex(Vec<[f64; 2]>),
}

impl WeightValues {
    fn len(&self) -> usize {
        match self {
            WeightValues::Real(v) => v.len(),
            WeightValues::Complex(v) => v.len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    format_version: u32,
    domain: Domain,
    lookback: usize,
    horizon: usize,
    norm_policy: NormPolicy,
    weight: WeightValues,
}

/// The model as pretty-printed JSON (with a trailing newline).
pub fn model_to_json(model: &LinearModel) -> String {
    let weight = match model.weights() {
        Weights::Time(w) => WeightValues::Real(w.transpose().as_slice().to_vec()),
        Weights::Frequency(w) => WeightValues::Complex(w.transpose().as_slice().iter().map(|z| [z.re, z.im]).collect()),
    };
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        domain: model.domain(),
        lookback: model.lookback(),
        horizon: model.horizon(),
        norm_policy: model.norm_policy(),
        weight,
    };
    serde_json::to_string_pretty(&envelope).expect("envelope serializes") + "\n"
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| ModelIoError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, model_to_json(model)).map_err(|source| ModelIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse a model file's contents; `path` is only used in messages.
pub fn model_from_json(text: &str, path: &Path) -> Result<LinearModel, ModelIoError> {
    let path_buf = || path.to_path_buf();
    // Check the version before the full schema so old files fail clearly.
    let probe: serde_json::Value = serde_json::from_str(text).map_err(|source| ModelIoError::Json {
        path: path_buf(),
        source,
    })?;
    if let Some(v) = probe.get("format_version").and_then(|v| v.as_u64()) {
        if v != u64::from(FORMAT_VERSION) {
            return Err(ModelIoError::Version {
                path: path_buf(),
                found: v as u32,
            });
        }
    }
    let env: Envelope = serde_json::from_value(probe).map_err(|source| ModelIoError::Json {
        path: path_buf(),
        source,
    })?;
    let (l, h) = (env.lookback, env.horizon);
    let (rows, cols) = match env.domain {
        Domain::Time => (l, h),
        Domain::Frequency => freq_shape(l, h),
    };
    let length_error = |found| ModelIoError::WeightLength {
        path: path_buf(),
        expected: rows * cols,
        found,
        lookback: l,
        horizon: h,
        domain: env.domain,
    };
    if env.weight.len() != rows * cols {
        return Err(length_error(env.weight.len()));
    }
    let model_err = |source| ModelIoError::Model {
        path: path_buf(),
        source,
    };
    match (env.domain, env.weight) {
        (Domain::Time, WeightValues::Real(v)) => {
            LinearModel::time(DMatrix::from_row_slice(rows, cols, &v), env.norm_policy).map_err(model_err)
        }
        (Domain::Frequency, WeightValues::Complex(v)) => {
            let z: Vec<Complex64> = v.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
            LinearModel::frequency(DMatrix::from_row_slice(rows, cols, &z), l, h, env.norm_policy).map_err(model_err)
        }
        // An empty array parses as real; it only fits a zero-size weight.
        (Domain::Frequency, WeightValues::Real(v)) if v.is_empty() => Err(length_error(0)),
        (domain, _) => Err(ModelIoError::Json {
            path: path_buf(),
            source: serde::de::Error::custom(format!(
                "weight entries do not match the {domain:?} domain (reals for time, [re, im] pairs for frequency)"
            )),
        }),
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel, ModelIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_json(&text, path)
}
