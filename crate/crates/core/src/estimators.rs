//! Closed-form linear forecasters: OLS, Reduced-Rank Regression (RRR),
//! Direct Weight Rank Reduction (DWRR), and validation-driven rank sweeps.
//!
//! Every model maps a history row `x` (oldest observation first) to a
//! forecast row `x·W`; there is no intercept. When instance normalization is
//! enabled the map is applied to the window with its own mean (and
//! optionally scale) removed, and the statistics are added back afterwards.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, right_singular, svd};
use crate::rootpurge::freq::{freq_shape, FreqOperator};
use crate::series::{NormState, ScaleMode, SegmentSet, DEFAULT_EPSILON};

/// Parameterisation of a model's weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    #[default]
    Time,
    Frequency,
}

/// Per-window normalization wrapped around the linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormPolicy {
    #[default]
    None,
    InstanceMean,
    InstanceMeanStd,
}

impl NormPolicy {
    pub fn scale_mode(self) -> Option<ScaleMode> {
        match self {
            NormPolicy::None => None,
            NormPolicy::InstanceMean => Some(ScaleMode::MeanOnly),
            NormPolicy::InstanceMeanStd => Some(ScaleMode::MeanAndStd),
        }
    }
}

/// How multi-channel data is pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelStrategy {
    /// One shared weight fitted on all channels' windows stacked together.
    #[default]
    Ci,
    /// One weight per channel.
    Inc,
}

/// A model weight, real `L×H` or complex `(⌊L/2⌋+1)×(⌊H/2⌋+1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Time(DMatrix<f64>),
    Frequency(DMatrix<Complex64>),
}

impl Weights {
    pub fn domain(&self) -> Domain {
        match self {
            Weights::Time(_) => Domain::Time,
            Weights::Frequency(_) => Domain::Frequency,
        }
    }
}

/// A trained forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Weights,
    lookback: usize,
    horizon: usize,
    norm_policy: NormPolicy,
}

impl LinearModel {
    /// Time-domain model; `L` and `H` are read from the weight's shape.
    pub fn time(weight: DMatrix<f64>, norm_policy: NormPolicy) -> Result<Self> {
        let (lookback, horizon) = weight.shape();
        if lookback == 0 || horizon == 0 {
            return Err(Error::InvalidArgument("weight must be at least 1×1".into()));
        }
        Ok(Self {
            weights: Weights::Time(weight),
            lookback,
            horizon,
            norm_policy,
        })
    }

    /// Frequency-domain model for the given `L` and `H`.
    pub fn frequency(
        weight: DMatrix<Complex64>,
        lookback: usize,
        horizon: usize,
        norm_policy: NormPolicy,
    ) -> Result<Self> {
        if lookback == 0 || horizon == 0 {
            return Err(Error::InvalidArgument("lookback and horizon must be ≥ 1".into()));
        }
        let expected = freq_shape(lookback, horizon);
        if weight.shape() != expected {
            return Err(Error::shape(
                "frequency weight",
                format!("{}×{}", expected.0, expected.1),
                format!("{}×{}", weight.nrows(), weight.ncols()),
            ));
        }
        Ok(Self {
            weights: Weights::Frequency(weight),
            lookback,
            horizon,
            norm_policy,
        })
    }

    pub fn domain(&self) -> Domain {
        self.weights.domain()
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn time_weight(&self) -> Option<&DMatrix<f64>> {
        match &self.weights {
            Weights::Time(w) => Some(w),
            Weights::Frequency(_) => None,
        }
    }

    pub fn freq_weight(&self) -> Option<&DMatrix<Complex64>> {
        match &self.weights {
            Weights::Frequency(w) => Some(w),
            Weights::Time(_) => None,
        }
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn norm_policy(&self) -> NormPolicy {
        self.norm_policy
    }

    /// The linear map on already-normalized rows.
    pub(crate) fn apply_raw(&self, history: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.weights {
            Weights::Time(w) => Ok(history * w),
            Weights::Frequency(w) => FreqOperator::new(self.lookback, self.horizon)?.apply(w, history),
        }
    }

    /// The time-domain matrix `W_eff` with `forecast(x) = x·W_eff` end to end.
    ///
    /// Without normalization this is the (materialized) weight. Instance
    /// normalization wraps the map as `g(x − μ) + μ`, which is again linear:
    /// `W_eff = W + (1/L)·1·(1 − 1ᵀW)`. The per-window scale cancels, so the
    /// same expression holds for the mean-and-std variant up to `δ`.
    pub fn effective_time_weight(&self) -> DMatrix<f64> {
        let mut w = crate::rootpurge::materialize_time_weight(self);
        if self.norm_policy != NormPolicy::None {
            let l = self.lookback as f64;
            let colsum = w.row_sum();
            for (j, mut col) in w.column_iter_mut().enumerate() {
                col.add_scalar_mut((1.0 - colsum[j]) / l);
            }
        }
        w
    }
}

/// Training data after the model's normalization policy has been applied.
pub(crate) struct Prepared {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Per-row scales (`None` means all ones).
    pub scales: Option<DVector<f64>>,
}

impl Prepared {
    pub fn new(segments: &SegmentSet, policy: NormPolicy) -> Self {
        match policy.scale_mode() {
            None => Self {
                x: segments.history().clone(),
                y: segments.future().clone(),
                scales: None,
            },
            Some(mode) => {
                let state = NormState::from_history(segments.history(), mode, DEFAULT_EPSILON);
                let x = state.normalize(segments.history()).expect("row counts agree");
                let y = state.normalize(segments.future()).expect("row counts agree");
                let scales = (mode == ScaleMode::MeanAndStd).then_some(state.scales);
                Self { x, y, scales }
            }
        }
    }

    /// Rows multiplied by their scale, so that `‖ys − xs·W‖²` is the squared
    /// error in the original units.
    pub fn error_space(self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self.scales {
            None => (self.x, self.y),
            Some(s) => {
                let (mut x, mut y) = (self.x, self.y);
                for i in 0..s.len() {
                    x.row_mut(i).scale_mut(s[i]);
                    y.row_mut(i).scale_mut(s[i]);
                }
                (x, y)
            }
        }
    }
}

/// Min-norm least-squares weight on (normalized) segments.
pub fn fit_ols(train: &SegmentSet, norm_policy: NormPolicy) -> Result<LinearModel> {
    let p = Prepared::new(train, norm_policy);
    LinearModel::time(least_squares(&p.x, &p.y)?, norm_policy)
}

/// Which rank-reduction scheme a sweep or fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    /// Project OLS outputs onto the top right singular vectors of `Ŷ = X·W_OLS`.
    Rrr,
    /// Truncated SVD of `W_OLS` itself.
    Dwrr,
}

/// Factorised OLS weight `W = C·Vᵀ` whose leading columns give every
/// rank-ρ model as `C_ρ·V_ρᵀ`. Computed once per training set.
#[derive(Debug, Clone)]
pub struct RankFactors {
    coeffs: DMatrix<f64>,
    directions: DMatrix<f64>,
    singular_values: DVector<f64>,
    norm_policy: NormPolicy,
    lookback: usize,
    horizon: usize,
}

impl RankFactors {
    pub fn new(train: &SegmentSet, method: RankMethod, norm_policy: NormPolicy) -> Result<Self> {
        let p = Prepared::new(train, norm_policy);
        let w = least_squares(&p.x, &p.y)?;
        let (coeffs, directions, singular_values) = match method {
            RankMethod::Rrr => {
                let (sigma, v) = right_singular(&(&p.x * &w))?;
                (&w * &v, v, sigma)
            }
            RankMethod::Dwrr => {
                let d = svd(&w)?;
                let mut c = d.left_vectors;
                for (j, mut col) in c.column_iter_mut().enumerate() {
                    col *= d.singular_values[j];
                }
                (c, d.right_vectors, d.singular_values)
            }
        };
        Ok(Self {
            coeffs,
            directions,
            singular_values,
            norm_policy,
            lookback: train.lookback(),
            horizon: train.horizon(),
        })
    }

    /// Largest admissible rank (number of singular directions).
    pub fn max_rank(&self) -> usize {
        self.directions.ncols()
    }

    /// Singular values of `Ŷ` (RRR) or of `W_OLS` (DWRR).
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn weight(&self, rank: usize) -> Result<DMatrix<f64>> {
        if rank == 0 || rank > self.max_rank() {
            return Err(Error::RankOutOfRange {
                rank,
                max: self.max_rank(),
            });
        }
        Ok(self.coeffs.columns(0, rank) * self.directions.columns(0, rank).transpose())
    }

    pub fn model(&self, rank: usize) -> Result<LinearModel> {
        LinearModel::time(self.weight(rank)?, self.norm_policy)
    }

    /// Original-scale MSE of every rank `1..=max` on `segments`, computed
    /// incrementally by adding one rank-one term at a time.
    pub fn mse_curve(&self, segments: &SegmentSet, max: usize) -> Result<Vec<f64>> {
        check_dims(segments, self.lookback, self.horizon)?;
        let (xs, mut err) = Prepared::new(segments, self.norm_policy).error_space();
        let projected = &xs * self.coeffs.columns(0, max);
        let denom = (err.nrows() * err.ncols()) as f64;
        let mut curve = Vec::with_capacity(max);
        for r in 0..max {
            err.ger(-1.0, &projected.column(r), &self.directions.column(r), 1.0);
            curve.push(err.norm_squared() / denom);
        }
        Ok(curve)
    }
}

fn check_dims(segments: &SegmentSet, lookback: usize, horizon: usize) -> Result<()> {
    if segments.lookback() != lookback || segments.horizon() != horizon {
        return Err(Error::shape(
            "segments",
            format!("L={lookback}, H={horizon}"),
            format!("L={}, H={}", segments.lookback(), segments.horizon()),
        ));
    }
    Ok(())
}

/// Reduced-Rank Regression: `W_OLS·V_ρV_ρᵀ` with `V` from the SVD of `X·W_OLS`.
pub fn fit_rrr(train: &SegmentSet, rank: usize, norm_policy: NormPolicy) -> Result<LinearModel> {
    RankFactors::new(train, RankMethod::Rrr, norm_policy)?.model(rank)
}

/// Direct Weight Rank Reduction: the rank-ρ truncated SVD of `W_OLS`.
pub fn fit_dwrr(train: &SegmentSet, rank: usize, norm_policy: NormPolicy) -> Result<LinearModel> {
    RankFactors::new(train, RankMethod::Dwrr, norm_policy)?.model(rank)
}

/// Validation/test MSE for every rank, plus both selection rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSweepResult {
    pub ranks: Vec<usize>,
    pub val_mse: Vec<f64>,
    pub test_mse: Vec<f64>,
    /// Rank with the lowest validation MSE (smallest rank on ties).
    pub selected_rank: usize,
    /// The three ranks with the lowest validation MSE, best first.
    pub top3_ranks: Vec<usize>,
    /// Among `top3_ranks`, the one with the lowest test MSE (the
    /// "best test among top-3 validated" reporting rule).
    pub top3_best_rank: usize,
    pub top3_best_test_mse: f64,
}

impl RankSweepResult {
    pub fn selected_test_mse(&self) -> f64 {
        self.test_mse[self.selected_rank - 1]
    }
}

/// Evaluate every rank `1..=min(L,H)` from a single factorisation.
pub fn rank_sweep(
    train: &SegmentSet,
    val: &SegmentSet,
    test: &SegmentSet,
    method: RankMethod,
    norm_policy: NormPolicy,
) -> Result<RankSweepResult> {
    let factors = RankFactors::new(train, method, norm_policy)?;
    sweep_with(&factors, val, test)
}

pub(crate) fn sweep_with(factors: &RankFactors, val: &SegmentSet, test: &SegmentSet) -> Result<RankSweepResult> {
    let max = factors.max_rank().min(factors.lookback).min(factors.horizon);
    let val_mse = factors.mse_curve(val, max)?;
    let test_mse = factors.mse_curve(test, max)?;
    let ranks: Vec<usize> = (1..=max).collect();

    let mut order: Vec<usize> = (0..max).collect();
    // Stable sort keeps the smaller rank first on ties.
    order.sort_by(|&a, &b| val_mse[a].total_cmp(&val_mse[b]));
    let selected_rank = order[0] + 1;
    let top3: Vec<usize> = order.iter().take(3).copied().collect();
    let best = *top3
        .iter()
        .min_by(|&&a, &&b| test_mse[a].total_cmp(&test_mse[b]).then(a.cmp(&b)))
        .expect("at least one rank");
    Ok(RankSweepResult {
        top3_ranks: top3.iter().map(|i| i + 1).collect(),
        top3_best_rank: best + 1,
        top3_best_test_mse: test_mse[best],
        ranks,
        val_mse,
        test_mse,
        selected_rank,
    })
}

/// Forecast `history` (n×L) in original units.
pub fn forecast(model: &LinearModel, history: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if history.ncols() != model.lookback {
        return Err(Error::shape("history columns", model.lookback, history.ncols()));
    }
    match model.norm_policy.scale_mode() {
        None => model.apply_raw(history),
        Some(mode) => {
            let state = NormState::from_history(history, mode, DEFAULT_EPSILON);
            let normalized = state.normalize(history)?;
            crate::series::denormalize(&model.apply_raw(&normalized)?, &state)
        }
    }
}

/// Mean squared error over all `N·H` forecast entries, original units.
pub fn evaluate_mse(model: &LinearModel, segments: &SegmentSet) -> Result<f64> {
    check_dims(segments, model.lookback, model.horizon)?;
    let pred = forecast(model, segments.history())?;
    Ok((pred - segments.future()).norm_squared() / (segments.len() * segments.horizon()) as f64)
}
