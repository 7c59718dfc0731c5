//! Observation tables, history/future segmentation and instance normalization.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default guard added to per-window standard deviations.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// A `T × m` table of real observations, one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    channel_names: Vec<String>,
    timestamps: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>, channel_names: Vec<String>, timestamps: Option<Vec<String>>) -> Result<Self> {
        let (t, m) = values.shape();
        if t == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "a time series needs T ≥ 1 and m ≥ 1, got {t}×{m}"
            )));
        }
        if channel_names.len() != m {
            return Err(Error::shape("channel names", m, channel_names.len()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = channel_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate channel name '{dup}'")));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != t {
                return Err(Error::shape("timestamps", t, ts.len()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time-series values"));
        }
        Ok(Self {
            values,
            channel_names,
            timestamps,
        })
    }

    /// Single-channel series named `y`.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        let t = values.len();
        Self::new(DMatrix::from_vec(t, 1, values), vec!["y".into()], None)
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    /// Contiguous view of one channel.
    pub fn channel(&self, index: usize) -> Result<&[f64]> {
        if index >= self.n_channels() {
            return Err(Error::InvalidArgument(format!(
                "channel {index} out of range for {} channels",
                self.n_channels()
            )));
        }
        let t = self.len();
        Ok(&self.values.as_slice()[index * t..(index + 1) * t])
    }

    /// Rows `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{end} invalid for T={}",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.rows(start, end - start).into_owned(),
            channel_names: self.channel_names.clone(),
            timestamps: self.timestamps.as_ref().map(|ts| ts[start..end].to_vec()),
        })
    }

    /// Apply `f(channel, value)` to every observation.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self> {
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.apply(|v| *v = f(j, *v));
        }
        Self::new(values, self.channel_names.clone(), self.timestamps.clone())
    }
}

/// How windows are cut from a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    /// Every sliding window (stride 1).
    #[default]
    Hankel,
    /// Non-overlapping `L+H` blocks; a trailing partial block is dropped.
    Stacked,
}

/// Paired history (N×L) and future (N×H) matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    history: DMatrix<f64>,
    future: DMatrix<f64>,
    mode: SegmentMode,
}

impl SegmentSet {
    pub fn new(history: DMatrix<f64>, future: DMatrix<f64>, mode: SegmentMode) -> Result<Self> {
        if history.nrows() != future.nrows() {
            return Err(Error::shape("segment rows", history.nrows(), future.nrows()));
        }
        if history.ncols() == 0 || future.ncols() == 0 {
            return Err(Error::InvalidArgument("lookback and horizon must be ≥ 1".into()));
        }
        Ok(Self { history, future, mode })
    }

    /// Windows over a single sequence; row `i` of `history` is
    /// `values[s..s+L]` and row `i` of `future` is `values[s+L..s+L+H]`,
    /// with `s = i` (hankel) or `s = i·(L+H)` (stacked).
    pub fn from_values(values: &[f64], lookback: usize, horizon: usize, mode: SegmentMode) -> Result<Self> {
        if lookback == 0 || horizon == 0 {
            return Err(Error::InvalidArgument("lookback and horizon must be ≥ 1".into()));
        }
        let width = lookback + horizon;
        let t = values.len();
        if t < width {
            return Err(Error::SeriesTooShort {
                context: format!("segmentation with L={lookback}, H={horizon}"),
                required: width,
                found: t,
            });
        }
        let (n, stride) = match mode {
            SegmentMode::Hankel => (t - width + 1, 1),
            SegmentMode::Stacked => (t / width, width),
        };
        let history = DMatrix::from_fn(n, lookback, |i, j| values[i * stride + j]);
        let future = DMatrix::from_fn(n, horizon, |i, j| values[i * stride + lookback + j]);
        Ok(Self { history, future, mode })
    }

    /// Vertically concatenate segment sets with matching `L` and `H`.
    pub fn stack(parts: &[SegmentSet]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
        let (l, h) = (first.lookback(), first.horizon());
        if let Some(bad) = parts.iter().find(|p| p.lookback() != l || p.horizon() != h) {
            return Err(Error::shape(
                "stacked segments",
                format!("L={l}, H={h}"),
                format!("L={}, H={}", bad.lookback(), bad.horizon()),
            ));
        }
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut history = DMatrix::zeros(n, l);
        let mut future = DMatrix::zeros(n, h);
        let mut row = 0;
        for p in parts {
            history.rows_mut(row, p.len()).copy_from(&p.history);
            future.rows_mut(row, p.len()).copy_from(&p.future);
            row += p.len();
        }
        Ok(Self {
            history,
            future,
            mode: first.mode,
        })
    }

    pub fn history(&self) -> &DMatrix<f64> {
        &self.history
    }

    pub fn future(&self) -> &DMatrix<f64> {
        &self.future
    }

    /// Number of windows `N`.
    pub fn len(&self) -> usize {
        self.history.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookback(&self) -> usize {
        self.history.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.future.ncols()
    }

    pub fn mode(&self) -> SegmentMode {
        self.mode
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.history, self.future)
    }
}

/// Cut one channel of `series` into history/future windows.
pub fn build_segments(
    series: &TimeSeries,
    channel: usize,
    lookback: usize,
    horizon: usize,
    mode: SegmentMode,
) -> Result<SegmentSet> {
    SegmentSet::from_values(series.channel(channel)?, lookback, horizon, mode)
}

/// Which per-window statistics instance normalization removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    #[default]
    MeanOnly,
    MeanAndStd,
}

/// Per-window statistics recorded by [`instance_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormState {
    pub means: DVector<f64>,
    pub scales: DVector<f64>,
    pub epsilon: f64,
}

impl NormState {
    /// Statistics of each row of `history`.
    pub fn from_history(history: &DMatrix<f64>, mode: ScaleMode, epsilon: f64) -> Self {
        let l = history.ncols() as f64;
        let means = DVector::from_iterator(history.nrows(), history.row_iter().map(|r| r.sum() / l));
        let scales = match mode {
            ScaleMode::MeanOnly => DVector::from_element(history.nrows(), 1.0),
            ScaleMode::MeanAndStd => DVector::from_iterator(
                history.nrows(),
                history.row_iter().zip(means.iter()).map(|(r, &mu)| {
                    let var = r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / l;
                    var.sqrt() + epsilon
                }),
            ),
        };
        Self { means, scales, epsilon }
    }

    /// `(m − μ_i)/s_i` row by row.
    pub fn normalize(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(m)?;
        let mut out = m.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            let (mu, s) = (self.means[i], self.scales[i]);
            row.apply(|v| *v = (*v - mu) / s);
        }
        Ok(out)
    }

    fn check_rows(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.nrows() != self.means.len() {
            return Err(Error::shape("normalization rows", self.means.len(), m.nrows()));
        }
        Ok(())
    }
}

/// Remove each window's own mean (and optionally scale) from its history
/// and the matching future row.
pub fn instance_normalize(segments: &SegmentSet, scale_mode: ScaleMode) -> (SegmentSet, NormState) {
    let state = NormState::from_history(&segments.history, scale_mode, DEFAULT_EPSILON);
    let history = state.normalize(&segments.history).expect("row counts agree");
    let future = state.normalize(&segments.future).expect("row counts agree");
    (
        SegmentSet {
            history,
            future,
            mode: segments.mode,
        },
        state,
    )
}

/// Inverse of the future-side transform: `ŷ_i·s_i + μ_i`.
pub fn denormalize(forecast: &DMatrix<f64>, state: &NormState) -> Result<DMatrix<f64>> {
    state.check_rows(forecast)?;
    let mut out = forecast.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let (mu, s) = (state.means[i], state.scales[i]);
        row.apply(|v| *v = *v * s + mu);
    }
    Ok(out)
}
