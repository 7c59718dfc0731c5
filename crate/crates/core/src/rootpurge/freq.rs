//! Frequency-domain linear map `x ↦ irfft(rfft(x)·W_F, H)·(H/L)`.
//!
//! `W_F` is a dense complex `(⌊L/2⌋+1)×(⌊H/2⌋+1)` matrix. Because the map is
//! real-linear in `x`, it is exactly some time-domain `L×H` matrix; that
//! matrix is recovered by pushing the identity through the pipeline.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::estimators::{LinearModel, Weights};
use crate::linalg::RealFft;

/// Shape of the complex weight for a given lookback and horizon.
pub fn freq_shape(lookback: usize, horizon: usize) -> (usize, usize) {
    (lookback / 2 + 1, horizon / 2 + 1)
}

/// Planned transforms for one `(L, H)` pair.
#[derive(Clone, Debug)]
pub struct FreqOperator {
    lookback: usize,
    horizon: usize,
    fft_l: RealFft,
    fft_h: RealFft,
    column_fft: ComplexFft,
}

#[derive(Clone)]
struct ComplexFft(Arc<dyn Fft<f64>>);

impl std::fmt::Debug for ComplexFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ComplexFft")
    }
}

impl FreqOperator {
    pub fn new(lookback: usize, horizon: usize) -> Result<Self> {
        Ok(Self {
            lookback,
            horizon,
            fft_l: RealFft::new(lookback)?,
            fft_h: RealFft::new(horizon)?,
            column_fft: ComplexFft(FftPlanner::new().plan_fft_forward(lookback)),
        })
    }

    fn check_weight(&self, weight: &DMatrix<Complex64>) -> Result<()> {
        let expected = freq_shape(self.lookback, self.horizon);
        if weight.shape() != expected {
            return Err(Error::shape(
                "frequency weight",
                format!("{}×{}", expected.0, expected.1),
                format!("{}×{}", weight.nrows(), weight.ncols()),
            ));
        }
        Ok(())
    }

    /// Run the pipeline on every row of `history` (n×L) → n×H.
    pub fn apply(&self, weight: &DMatrix<Complex64>, history: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_weight(weight)?;
        if history.ncols() != self.lookback {
            return Err(Error::shape("history columns", self.lookback, history.ncols()));
        }
        let rescale = self.horizon as f64 / self.lookback as f64;
        let (bl, bh) = weight.shape();
        let mut out = DMatrix::zeros(history.nrows(), self.horizon);
        let mut row_buf = vec![0.0; self.lookback];
        let mut mixed = vec![Complex64::new(0.0, 0.0); bh];
        for (i, row) in history.row_iter().enumerate() {
            row_buf.iter_mut().zip(row.iter()).for_each(|(d, s)| *d = *s);
            let spectrum = self.fft_l.forward(&row_buf)?;
            for (q, slot) in mixed.iter_mut().enumerate() {
                *slot = (0..bl).map(|k| spectrum[k] * weight[(k, q)]).sum();
            }
            let y = self.fft_h.inverse(&mixed)?;
            for (m, v) in y.into_iter().enumerate() {
                out[(i, m)] = v * rescale;
            }
        }
        Ok(out)
    }

    /// The equivalent `L×H` time-domain weight (pipeline applied to `I_L`).
    pub fn materialize(&self, weight: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
        self.apply(weight, &DMatrix::identity(self.lookback, self.lookback))
    }

    /// Pull a gradient with respect to the materialized time weight back to
    /// the complex weight, returned as `∂J/∂Re W_F + i·∂J/∂Im W_F`.
    pub fn adjoint(&self, time_grad: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
        let (l, h) = (self.lookback, self.horizon);
        if time_grad.shape() != (l, h) {
            return Err(Error::shape(
                "time-domain gradient",
                format!("{l}×{h}"),
                format!("{}×{}", time_grad.nrows(), time_grad.ncols()),
            ));
        }
        let (bl, bh) = freq_shape(l, h);

        // conj(rfft_H(g_i)) = Σ_m g_im e^{+2πi qm/H}, one row per lag.
        let mut t = vec![vec![Complex64::new(0.0, 0.0); l]; bh];
        let mut row_buf = vec![0.0; h];
        for (i, row) in time_grad.row_iter().enumerate() {
            row_buf.iter_mut().zip(row.iter()).for_each(|(d, s)| *d = *s);
            for (q, z) in self.fft_h.forward(&row_buf)?.into_iter().enumerate() {
                t[q][i] = z.conj();
            }
        }
        // Forward DFT over the lag axis, then the irfft bin multiplicities.
        let mut out = DMatrix::zeros(bl, bh);
        for (q, column) in t.iter_mut().enumerate() {
            self.column_fft.0.process(column);
            let multiplicity = if q == 0 || 2 * q == h { 1.0 } else { 2.0 };
            let c = multiplicity / l as f64;
            for k in 0..bl {
                out[(k, q)] = column[k].conj() * c;
            }
        }
        Ok(out)
    }
}

/// Apply a frequency-domain weight to each row of `history_rows`.
pub fn freq_apply(
    freq_weight: &DMatrix<Complex64>,
    history_rows: &DMatrix<f64>,
    horizon: usize,
) -> Result<DMatrix<f64>> {
    FreqOperator::new(history_rows.ncols(), horizon)?.apply(freq_weight, history_rows)
}

/// Time-domain weight of any model: frequency models are materialized by
/// feeding the identity through the pipeline, time models are returned as is.
pub fn materialize_time_weight(model: &LinearModel) -> DMatrix<f64> {
    match model.weights() {
        Weights::Time(w) => w.clone(),
        Weights::Frequency(w) => FreqOperator::new(model.lookback(), model.horizon())
            .and_then(|op| op.materialize(w))
            .expect("model invariants guarantee matching shapes"),
    }
}
