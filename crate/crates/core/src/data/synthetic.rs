use serde::{Deserialize, Serialize};

use super::rng::GaussianStream;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Which signal [`generate_synthetic`] produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `sin 2t + cos 5t + 0.5t`.
    TrendPeriodic,
    /// `0.01t² + sin t`.
    ToyQuadratic,
    /// Zero signal; only the noise remains.
    PureNoise,
    /// `y_n = Σ a_ℓ y_{n−ℓ}` iterated from `init`.
    CustomRecurrence,
}

/// A sampled synthetic signal plus i.i.d. Gaussian observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Noise standard deviation σ ≥ 0.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Recurrence coefficients in lag order `[a_1 … a_p]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    /// First `p` values of the recurrence, oldest first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    0.01
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, t_end: f64) -> Self {
        Self {
            kind,
            t_start: 0.0,
            t_end,
            dt: default_dt(),
            sigma: 0.0,
            seed: 0,
            coeffs: None,
            init: None,
        }
    }

    /// Number of samples, `round((t_end − t_start)/dt)`.
    pub fn len(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample times `t_start + k·dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t_start + k as f64 * self.dt).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_start, self.t_end, self.dt, self.sigma]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("synthetic spec has non-finite fields".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.t_end <= self.t_start {
            return Err(Error::InvalidArgument(format!(
                "t_end ({}) must exceed t_start ({})",
                self.t_end, self.t_start
            )));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidArgument(format!("sigma must be ≥ 0, got {}", self.sigma)));
        }
        if self.is_empty() {
            return Err(Error::InvalidArgument("synthetic spec yields no samples".into()));
        }
        if self.kind == SyntheticKind::CustomRecurrence {
            let (coeffs, init) = self.recurrence()?;
            if coeffs.is_empty() {
                return Err(Error::InvalidArgument("custom_recurrence needs coefficients".into()));
            }
            if coeffs.len() != init.len() {
                return Err(Error::InvalidArgument(format!(
                    "custom_recurrence has {} coefficients but {} initial values",
                    coeffs.len(),
                    init.len()
                )));
            }
            if self.len() < init.len() {
                return Err(Error::SeriesTooShort {
                    context: "custom_recurrence initial values".into(),
                    required: init.len(),
                    found: self.len(),
                });
            }
        }
        Ok(())
    }

    fn recurrence(&self) -> Result<(&[f64], &[f64])> {
        match (&self.coeffs, &self.init) {
            (Some(c), Some(i)) => Ok((c, i)),
            _ => Err(Error::InvalidArgument(
                "custom_recurrence needs both `coeffs` and `init`".into(),
            )),
        }
    }

    /// The noise-free signal.
    pub fn clean_values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let values = match self.kind {
            SyntheticKind::TrendPeriodic => self
                .times()
                .into_iter()
                .map(|t| (2.0 * t).sin() + (5.0 * t).cos() + 0.5 * t)
                .collect(),
            SyntheticKind::ToyQuadratic => self.times().into_iter().map(|t| 0.01 * t * t + t.sin()).collect(),
            SyntheticKind::PureNoise => vec![0.0; self.len()],
            SyntheticKind::CustomRecurrence => {
                let (coeffs, init) = self.recurrence()?;
                let mut y = init.to_vec();
                y.reserve(self.len() - init.len());
                for n in init.len()..self.len() {
                    let next = coeffs.iter().enumerate().map(|(k, a)| a * y[n - 1 - k]).sum();
                    y.push(next);
                }
                y
            }
        };
        if values.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::NonFinite("synthetic signal (recurrence blew up)"));
        }
        Ok(values)
    }
}

/// Sample `spec`: the clean signal plus `σ·ε_t` with `ε_t` drawn from a
/// stream seeded by `spec.seed`. The noise is observational; it does not
/// feed back into recurrences.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeries> {
    let mut values = spec.clean_values()?;
    if spec.sigma > 0.0 {
        let mut noise = GaussianStream::new(spec.seed);
        for v in &mut values {
            *v += spec.sigma * noise.next_standard();
        }
    }
    TimeSeries::univariate(values)
}
