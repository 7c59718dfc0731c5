//! Linear lookback-to-horizon forecasters and their characteristic roots.
//!
//! A forecaster here is a single weight matrix `W` (L×H) mapping the last
//! `L` observations to the next `H`: `ŷ = x·W`. The crate fits such maps by
//! ordinary least squares, by two rank-reduction schemes, and by gradient
//! descent on the Root Purge objective, which penalises the model for
//! forecasting its own residuals. Each column of `W` is also a linear
//! recurrence, so the fitted dynamics can be read off as the roots of a
//! characteristic polynomial.
//!
//! Module map:
//!
//! * [`series`] — time-series table, history/future segmentation, instance normalization
//! * [`linalg`] — SVD, least squares, eigenvalues, real FFT, Hungarian matching
//! * [`estimators`] — OLS, RRR, DWRR, rank sweeps, forecasting
//! * [`rootpurge`] — Root Purge loss, gradient-descent training, IRLS, frequency-domain weights
//! * [`roots`] — companion matrices, per-horizon roots, root distances
//! * [`data`] — synthetic generators, CSV ingestion, chronological splits
//! * [`harness`] — experiment configs, grid runs and the studies built on them

pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod rootpurge;
pub mod roots;
pub mod series;

pub use error::{Error, Result};
pub use estimators::{Domain, LinearModel, NormPolicy, Weights};
pub use series::{SegmentMode, SegmentSet, TimeSeries};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
