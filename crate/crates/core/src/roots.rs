//! Characteristic roots of fitted forecasters.
//!
//! Column `j` of a weight predicts `y_{t+j}` from `y_{t−L+1..t}`, i.e. it is
//! the recurrence `y_n = Σ_ℓ a_ℓ·y_{n−ℓ}` over lags `ℓ = j..L+j−1`, with the
//! first `j−1` lags absent. Its characteristic polynomial has degree
//! `L+j−1` and its roots are the eigenvalues of the companion matrix.
//!
//! Weight rows follow history columns, oldest first, so row `i` (0-based)
//! carries lag `L+j−1−i` for column `j`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{evaluate_mse, LinearModel};
use crate::linalg::{eigenvalues, hungarian_match};
use crate::series::{build_segments, SegmentMode, TimeSeries};

/// Where a root set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSource {
    WeightColumn,
    RecurrenceCoeffs,
}

/// Roots of one characteristic polynomial, repeated roots kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RootSetJson", try_from = "RootSetJson")]
pub struct RootSet {
    pub roots: Vec<Complex64>,
    /// 1-based forecasting horizon the roots belong to.
    pub horizon_index: usize,
    pub source: RootSource,
}

#[derive(Serialize, Deserialize)]
struct RootSetJson {
    horizon: usize,
    source: RootSource,
    roots: Vec<[f64; 2]>,
}

impl From<RootSet> for RootSetJson {
    fn from(r: RootSet) -> Self {
        Self {
            horizon: r.horizon_index,
            source: r.source,
            roots: r.roots.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<RootSetJson> for RootSet {
    type Error = String;

    fn try_from(j: RootSetJson) -> std::result::Result<Self, String> {
        if j.horizon == 0 {
            return Err("horizon index must be ≥ 1".into());
        }
        Ok(Self {
            roots: j.roots.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
            horizon_index: j.horizon,
            source: j.source,
        })
    }
}

impl RootSet {
    /// Roots of `r^p − a_1 r^{p−1} − … − a_p` for recurrence coefficients in lag order.
    pub fn from_coeffs(coeffs: &[f64]) -> Result<Self> {
        Ok(Self {
            roots: eigenvalues(&companion_matrix(coeffs)?)?,
            horizon_index: 1,
            source: RootSource::RecurrenceCoeffs,
        })
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Root moduli, largest first.
    pub fn moduli(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.roots.iter().map(|z| z.norm()).collect();
        m.sort_by(|a, b| b.total_cmp(a));
        m
    }
}

/// Companion matrix of the recurrence `y_n = a_1 y_{n−1} + … + a_p y_{n−p}`:
/// first row `[a_1 … a_p]`, ones on the subdiagonal.
pub fn companion_matrix(coeffs: &[f64]) -> Result<DMatrix<f64>> {
    let p = coeffs.len();
    if p == 0 {
        return Err(Error::InvalidArgument(
            "companion matrix needs at least one coefficient".into(),
        ));
    }
    let mut c = DMatrix::zeros(p, p);
    for (k, &a) in coeffs.iter().enumerate() {
        c[(0, k)] = a;
    }
    for i in 1..p {
        c[(i, i - 1)] = 1.0;
    }
    Ok(c)
}

/// Lag-ordered recurrence coefficients `[a_1 … a_{L+j−1}]` of column `j`.
pub fn column_coeffs(weight: &DMatrix<f64>, horizon_index: usize) -> Result<Vec<f64>> {
    let (l, h) = weight.shape();
    if horizon_index == 0 || horizon_index > h {
        return Err(Error::InvalidArgument(format!(
            "horizon index {horizon_index} out of range 1..={h}"
        )));
    }
    let j = horizon_index;
    let p = l + j - 1;
    let mut coeffs = vec![0.0; p];
    for lag in j..=p {
        coeffs[lag - 1] = weight[(p - lag, j - 1)];
    }
    Ok(coeffs)
}

/// Roots of the degree-`(L+j−1)` characteristic polynomial of column `j`.
pub fn column_roots(weight: &DMatrix<f64>, horizon_index: usize) -> Result<RootSet> {
    let coeffs = column_coeffs(weight, horizon_index)?;
    Ok(RootSet {
        roots: eigenvalues(&companion_matrix(&coeffs)?)?,
        horizon_index,
        source: RootSource::WeightColumn,
    })
}

/// Mean `|a_i − b_π(i)|` over the Hungarian-optimal pairing.
///
/// With unequal sizes, every root of the smaller set is matched to a
/// distinct root of the larger one and the mean is over those pairs.
pub fn root_distance(a: &RootSet, b: &RootSet) -> f64 {
    let (small, large) = if a.len() <= b.len() {
        (&a.roots, &b.roots)
    } else {
        (&b.roots, &a.roots)
    };
    if small.is_empty() {
        return 0.0;
    }
    let n = large.len();
    // Dummy rows cost nothing, so they absorb the unmatched large-set roots.
    let cost = DMatrix::from_fn(n, n, |i, j| {
        if i < small.len() {
            (small[i] - large[j]).norm()
        } else {
            0.0
        }
    });
    let assignment = hungarian_match(&cost).expect("root distances are finite");
    let total: f64 = (0..small.len()).map(|i| cost[(i, assignment[i])]).sum();
    total / small.len() as f64
}

/// Outcome of [`generalization_test`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Generalizes,
    Fails,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub verdict: Verdict,
    pub mse: f64,
    pub variance: f64,
    /// `mse / variance`.
    pub relative_mse: f64,
}

/// Forecast a probe series (first channel) with `model` and compare the
/// MSE against `tol · var(probe)`.
pub fn generalization_test(model: &LinearModel, probe: &TimeSeries, tol: f64) -> Result<GeneralizationReport> {
    let segments = build_segments(probe, 0, model.lookback(), model.horizon(), SegmentMode::Hankel)?;
    let mse = evaluate_mse(model, &segments)?;
    let values = probe.channel(0)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    let verdict = if mse < tol * variance {
        Verdict::Generalizes
    } else {
        Verdict::Fails
    };
    Ok(GeneralizationReport {
        verdict,
        mse,
        variance,
        relative_mse: mse / variance,
    })
}
