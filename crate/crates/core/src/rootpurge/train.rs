use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::freq::{freq_shape, FreqOperator};
use super::loss::{objective, GramStats};
use super::{Init, PurgeConfig};
use crate::error::{Error, Result};
use crate::estimators::{Domain, LinearModel, NormPolicy, Prepared};
use crate::linalg::least_squares;
use crate::series::SegmentSet;

/// Per-epoch history of a gradient-descent run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// Mean per-entry training objective, averaged over the epoch's batches.
    pub train_loss: Vec<f64>,
    /// Validation MSE (original units) after each epoch.
    pub val_mse: Vec<f64>,
    /// Validation MSE of the initial weights.
    pub initial_val_mse: f64,
    /// Epoch of the returned checkpoint; 0 means the initial weights.
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Gradient descent on the Root Purge objective; returns the checkpoint
/// with the lowest validation MSE.
pub fn train_root_purge(
    train: &SegmentSet,
    val: &SegmentSet,
    config: &PurgeConfig,
    norm_policy: NormPolicy,
) -> Result<LinearModel> {
    train_root_purge_traced(train, val, config, norm_policy).map(|(m, _)| m)
}

/// Parameters in whichever domain is being optimised.
#[derive(Clone)]
enum Param {
    Time(DMatrix<f64>),
    Freq(DMatrix<Complex64>, FreqOperator),
}

impl Param {
    fn time_weight(&self) -> Result<DMatrix<f64>> {
        match self {
            Param::Time(w) => Ok(w.clone()),
            Param::Freq(w, op) => op.materialize(w),
        }
    }

    /// Gradient step given `∂J/∂M` for the materialized time weight.
    fn step(&mut self, time_grad: &DMatrix<f64>, lr: f64) -> Result<()> {
        match self {
            Param::Time(w) => *w -= time_grad * lr,
            Param::Freq(w, op) => {
                let g = op.adjoint(time_grad)?;
                *w -= g * Complex64::new(lr, 0.0);
            }
        }
        Ok(())
    }

    fn into_model(self, lookback: usize, horizon: usize, policy: NormPolicy) -> Result<LinearModel> {
        match self {
            Param::Time(w) => LinearModel::time(w, policy),
            Param::Freq(w, _) => LinearModel::frequency(w, lookback, horizon, policy),
        }
    }
}

fn check_pair(train: &SegmentSet, val: &SegmentSet) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if train.lookback() != val.lookback() || train.horizon() != val.horizon() {
        return Err(Error::shape(
            "validation segments",
            format!("L={}, H={}", train.lookback(), train.horizon()),
            format!("L={}, H={}", val.lookback(), val.horizon()),
        ));
    }
    Ok(())
}

fn initial_param(config: &PurgeConfig, prepared: &Prepared, lookback: usize, horizon: usize) -> Result<Param> {
    Ok(match (config.domain, config.init) {
        (Domain::Time, Init::Zeros) => Param::Time(DMatrix::zeros(lookback, horizon)),
        (Domain::Time, Init::OlsWarmStart) => Param::Time(least_squares(&prepared.x, &prepared.y)?),
        (Domain::Frequency, _) => {
            let (bl, bh) = freq_shape(lookback, horizon);
            Param::Freq(DMatrix::zeros(bl, bh), FreqOperator::new(lookback, horizon)?)
        }
    })
}

/// Row index sets for one epoch. Full-batch runs use a single set holding
/// every row in order; mini-batch runs reshuffle each epoch.
pub(crate) struct BatchPlan {
    rows: usize,
    size: Option<usize>,
    rng: ChaCha8Rng,
}

impl BatchPlan {
    pub fn new(rows: usize, size: Option<usize>, seed: u64) -> Self {
        Self {
            rows,
            size: size.filter(|&b| b < rows),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_full(&self) -> bool {
        self.size.is_none()
    }

    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.rows).collect();
        match self.size {
            None => vec![order],
            Some(b) => {
                order.shuffle(&mut self.rng);
                order.chunks(b).map(<[usize]>::to_vec).collect()
            }
        }
    }
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    m.select_rows(rows)
}

/// Early-stopping bookkeeping shared by both trainers.
pub(crate) struct Checkpoint<T> {
    pub best: T,
    pub best_val: f64,
    pub best_epoch: usize,
    patience: usize,
    stale: usize,
}

impl<T: Clone> Checkpoint<T> {
    pub fn new(initial: T, val: f64, patience: usize) -> Self {
        Self {
            best: initial,
            best_val: val,
            best_epoch: 0,
            patience,
            stale: 0,
        }
    }

    /// Record an epoch; returns `true` when training should stop.
    pub fn observe(&mut self, epoch: usize, current: &T, val: f64) -> bool {
        if val < self.best_val {
            self.best = current.clone();
            self.best_val = val;
            self.best_epoch = epoch;
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            self.patience > 0 && self.stale > self.patience
        }
    }
}

/// [`train_root_purge`] that also returns the per-epoch trace.
pub fn train_root_purge_traced(
    train: &SegmentSet,
    val: &SegmentSet,
    config: &PurgeConfig,
    norm_policy: NormPolicy,
) -> Result<(LinearModel, TrainTrace)> {
    config.validate()?;
    check_pair(train, val)?;
    let (l, h) = (train.lookback(), train.horizon());
    let prepared = Prepared::new(train, norm_policy);
    let (vx, vy) = Prepared::new(val, norm_policy).error_space();
    let val_stats = GramStats::new(&vx, &vy);

    let mut param = initial_param(config, &prepared, l, h)?;
    let initial_val = val_stats.mse(&param.time_weight()?);
    let mut trace = TrainTrace {
        initial_val_mse: initial_val,
        ..Default::default()
    };
    let mut checkpoint = Checkpoint::new(param.clone(), initial_val, config.early_stop_patience);

    let mut plan = BatchPlan::new(train.len(), config.batch_size, config.seed);
    let full_stats = plan.is_full().then(|| GramStats::new(&prepared.x, &prepared.y));

    for epoch in 1..=config.max_epochs {
        let batches = plan.epoch();
        let mut epoch_loss = 0.0;
        for rows in &batches {
            let batch_stats;
            let stats = match &full_stats {
                Some(s) => s,
                None => {
                    batch_stats = GramStats::new(&select_rows(&prepared.x, rows), &select_rows(&prepared.y, rows));
                    &batch_stats
                }
            };
            let m = param.time_weight()?;
            let (loss, grad) = objective(
                &m,
                &stats.residual_stats(&m),
                config.lambda,
                config.order,
                config.stop_gradient,
            );
            let per_entry = 1.0 / (stats.rows * h) as f64;
            let loss = loss * per_entry;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss / batches.len() as f64;
            param.step(&(grad * per_entry), config.learning_rate)?;
        }
        let v = val_stats.mse(&param.time_weight()?);
        if !v.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        trace.train_loss.push(epoch_loss);
        trace.val_mse.push(v);
        if checkpoint.observe(epoch, &param, v) {
            break;
        }
    }

    trace.best_epoch = checkpoint.best_epoch;
    trace.best_val_mse = checkpoint.best_val;
    Ok((checkpoint.best.into_model(l, h, norm_policy)?, trace))
}

/// Gradient descent on the plain mean squared error, written directly
/// against the data matrices. Only `domain`, `learning_rate`, `max_epochs`,
/// `batch_size`, `seed`, `early_stop_patience` and `init` of `config` are
/// used; it is the "no penalty" baseline trained by the same schedule.
pub fn train_plain_traced(
    train: &SegmentSet,
    val: &SegmentSet,
    config: &PurgeConfig,
    norm_policy: NormPolicy,
) -> Result<(LinearModel, TrainTrace)> {
    config.validate()?;
    check_pair(train, val)?;
    let (l, h) = (train.lookback(), train.horizon());
    let prepared = Prepared::new(train, norm_policy);

    let mut param = initial_param(config, &prepared, l, h)?;
    let val_mse = |p: &Param| -> Result<f64> {
        let model = p.clone().into_model(l, h, norm_policy)?;
        crate::estimators::evaluate_mse(&model, val)
    };
    let initial_val = val_mse(&param)?;
    let mut trace = TrainTrace {
        initial_val_mse: initial_val,
        ..Default::default()
    };
    let mut checkpoint = Checkpoint::new(param.clone(), initial_val, config.early_stop_patience);
    let mut plan = BatchPlan::new(train.len(), config.batch_size, config.seed);

    for epoch in 1..=config.max_epochs {
        let batches = plan.epoch();
        let mut epoch_loss = 0.0;
        for rows in &batches {
            let batch;
            let (x, y) = if plan.is_full() {
                (&prepared.x, &prepared.y)
            } else {
                batch = (select_rows(&prepared.x, rows), select_rows(&prepared.y, rows));
                (&batch.0, &batch.1)
            };
            let m = param.time_weight()?;
            let r = y - x * &m;
            let per_entry = 1.0 / r.len() as f64;
            let loss = r.norm_squared() * per_entry;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss / batches.len() as f64;
            let grad = x.transpose() * r * (-2.0 * per_entry);
            param.step(&grad, config.learning_rate)?;
        }
        let v = val_mse(&param)?;
        if !v.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        trace.train_loss.push(epoch_loss);
        trace.val_mse.push(v);
        if checkpoint.observe(epoch, &param, v) {
            break;
        }
    }

    trace.best_epoch = checkpoint.best_epoch;
    trace.best_val_mse = checkpoint.best_val;
    Ok((checkpoint.best.into_model(l, h, norm_policy)?, trace))
}
