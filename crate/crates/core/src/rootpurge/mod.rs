//! The Root Purge objective and its solvers.
//!
//! For residuals `R = Y − G_W(X)` the objective is
//!
//! ```text
//! J(W) = ‖R‖²_F + λ·s·‖(G_W ∘ P)^k (R)‖²_F
//! ```
//!
//! where `P` zero-pads (H < L, `s = L/H`) or crops (H ≥ L, `s = 1`) each
//! residual row to length `L` so the model can be applied to it. The first
//! term seeks the signal's roots; the second pushes the noise left in the
//! residual into the null space of `W`, which shrinks spurious directions.
//!
//! Training is plain gradient descent with checkpoint-on-best validation
//! MSE, in either the time or frequency parameterisation. For the square
//! case (`H = L`, order 1) [`fit_root_purge_irls`] offers an iteratively
//! reweighted least-squares solver.

pub mod freq;
mod irls;
mod loss;
mod train;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Domain;

pub use freq::{freq_apply, materialize_time_weight, FreqOperator};
pub use irls::{fit_root_purge_irls, IrlsConfig, IrlsTrace};
pub use loss::{purge_loss, GramStats};
pub use train::{train_plain_traced, train_root_purge, train_root_purge_traced, TrainTrace};

/// Starting point for gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zeros,
    /// Start from the OLS weight (time domain only).
    OlsWarmStart,
}

/// Hyperparameters for [`train_root_purge`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurgeConfig {
    /// Penalty weight λ ≥ 0.
    pub lambda: f64,
    /// Composition depth k ≥ 1 of `(G_W ∘ P)`.
    pub order: usize,
    pub domain: Domain,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Rows per mini-batch; `None` (the default) is full-batch.
    pub batch_size: Option<usize>,
    /// Seeds the mini-batch shuffling.
    pub seed: u64,
    /// Stop after this many epochs without validation improvement; 0 disables.
    pub early_stop_patience: usize,
    pub init: Init,
    /// Treat the residual inside the purge term as a constant.
    pub stop_gradient: bool,
}

impl Default for PurgeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            order: 1,
            domain: Domain::Frequency,
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: None,
            seed: 0,
            early_stop_patience: 10,
            init: Init::Zeros,
            stop_gradient: false,
        }
    }
}

impl PurgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be ≥ 0, got {}",
                self.lambda
            )));
        }
        if self.order == 0 {
            return Err(Error::InvalidArgument("purge order must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be ≥ 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
        }
        if self.init == Init::OlsWarmStart && self.domain == Domain::Frequency {
            return Err(Error::InvalidArgument(
                "ols_warm_start is only available for the time domain".into(),
            ));
        }
        Ok(())
    }
}

/// Zero-pad (H < L) or crop (H ≥ L) each residual row to length `target_len`.
///
/// Returns the adjusted matrix and the factor by which λ is scaled so that the
/// penalty is comparable to the un-padded residual energy.
pub fn pad_or_crop(residual: &DMatrix<f64>, target_len: usize) -> (DMatrix<f64>, f64) {
    let (n, h) = residual.shape();
    if h < target_len {
        let mut out = DMatrix::zeros(n, target_len);
        out.columns_mut(0, h).copy_from(residual);
        (out, target_len as f64 / h as f64)
    } else {
        (residual.columns(0, target_len).into_owned(), 1.0)
    }
}
