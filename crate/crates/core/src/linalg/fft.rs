use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Planned real-input FFT pair of a fixed length `n`.
///
/// Forward is unnormalised and returns the `⌊n/2⌋+1` non-negative
/// frequency bins; inverse divides by `n`. Reusing one instance across many
/// rows avoids re-planning.
#[derive(Clone)]
pub struct RealFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft").field("n", &self.n).finish()
    }
}

impl RealFft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("FFT length must be at least 1".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of bins in a half spectrum, `⌊n/2⌋+1`.
    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n {
            return Err(Error::shape("rfft", self.n, x.len()));
        }
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.truncate(self.bins());
        Ok(buf)
    }

    /// Inverse of [`forward`](Self::forward). As with any half-spectrum
    /// inverse, the imaginary parts of the DC bin (and of the Nyquist bin
    /// for even `n`) do not influence the real output and are ignored.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Result<Vec<f64>> {
        let bins = self.bins();
        if spectrum.len() != bins {
            return Err(Error::shape("irfft", bins, spectrum.len()));
        }
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(spectrum[0].re, 0.0);
        for k in 1..bins {
            if 2 * k == n {
                buf[k] = Complex64::new(spectrum[k].re, 0.0);
            } else {
                buf[k] = spectrum[k];
                buf[n - k] = spectrum[k].conj();
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(buf.iter().map(|z| z.re * scale).collect())
    }
}

/// One-shot real FFT; see [`RealFft`] for repeated use.
pub fn rfft(x: &[f64]) -> Result<Vec<Complex64>> {
    RealFft::new(x.len())?.forward(x)
}

/// One-shot inverse real FFT to length `n`; `spectrum` must hold `⌊n/2⌋+1` bins.
pub fn irfft(spectrum: &[Complex64], n: usize) -> Result<Vec<f64>> {
    RealFft::new(n)?.inverse(spectrum)
}
