use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::loss::GramStats;
use crate::error::{Error, Result};
use crate::estimators::{LinearModel, NormPolicy, Prepared};
use crate::linalg::least_squares;
use crate::series::SegmentSet;

/// Settings for [`fit_root_purge_irls`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlsConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once `‖W_{k+1} − W_k‖_F < tol`.
    pub tol: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            max_iters: 100,
            tol: 1e-10,
        }
    }
}

/// Objective values and step sizes of an IRLS run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IrlsTrace {
    /// `J(W_k)` for every accepted iterate, starting with the OLS weight.
    pub objective: Vec<f64>,
    /// Damping factor α used for each accepted step.
    pub step_fractions: Vec<f64>,
    pub converged: bool,
    /// Whether the ridge guard had to be added to a normal matrix.
    pub ridge_used: bool,
}

const MAX_HALVINGS: usize = 30;

fn objective(stats: &GramStats, w: &DMatrix<f64>, lambda: f64) -> f64 {
    let r = stats.residual_stats(w);
    r.seek + lambda * w.dot(&(&r.c * w))
}

/// Solve `(A)·T = B` for symmetric positive (semi)definite `A`, falling back
/// to a trace-scaled ridge when the factorisation fails.
fn spd_solve(a: DMatrix<f64>, b: &DMatrix<f64>, ridge_used: &mut bool) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let n = a.nrows();
    let jitter = 1e-10 * a.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let guarded = a + DMatrix::identity(n, n) * jitter;
    *ridge_used = true;
    guarded.cholesky().map(|ch| ch.solve(b)).ok_or_else(|| {
        Error::Singular(format!(
            "normal matrix is not positive definite even with ridge jitter {jitter:e}; \
             consider adding more data or a larger ridge"
        ))
    })
}

/// Iteratively reweighted least squares for the square (H = L) first-order
/// Root Purge objective `J(W) = ‖R‖² + λ‖R·W‖²`.
///
/// Each iteration solves `(XᵀX + λR_kᵀR_k)·T = XᵀY` and moves from `W_k`
/// towards `T`, halving the step until `J` does not increase. The raw
/// fixed-point update alone can overshoot and slowly raise `J`; the guard
/// makes the objective sequence non-increasing by construction. Starting
/// point is the OLS weight, so `λ = 0` terminates after one iteration.
pub fn fit_root_purge_irls(
    train: &SegmentSet,
    config: &IrlsConfig,
    norm_policy: NormPolicy,
) -> Result<(LinearModel, IrlsTrace)> {
    let (l, h) = (train.lookback(), train.horizon());
    if l != h {
        return Err(Error::InvalidArgument(format!(
            "IRLS needs a square weight (H = L), got L={l}, H={h}"
        )));
    }
    if !(config.lambda >= 0.0 && config.lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be ≥ 0, got {}",
            config.lambda
        )));
    }
    let prepared = Prepared::new(train, norm_policy);
    let stats = GramStats::new(&prepared.x, &prepared.y);

    let mut w = least_squares(&prepared.x, &prepared.y)?;
    let mut j = objective(&stats, &w, config.lambda);
    let mut trace = IrlsTrace {
        objective: vec![j],
        ..Default::default()
    };

    for _ in 0..config.max_iters {
        let r = stats.residual_stats(&w);
        let normal = &stats.sxx + &r.c * config.lambda;
        let target = spd_solve(normal, &stats.sxy, &mut trace.ridge_used)?;
        let direction = target - &w;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &w + &direction * alpha;
            let jc = objective(&stats, &candidate, config.lambda);
            if jc <= j {
                accepted = Some((candidate, jc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, jn)) = accepted else {
            // No descent along the IRLS direction: stationary to working precision.
            trace.converged = true;
            break;
        };
        let step = (&next - &w).norm();
        w = next;
        j = jn;
        trace.objective.push(j);
        trace.step_fractions.push(alpha);
        if step < config.tol {
            trace.converged = true;
            break;
        }
    }

    Ok((LinearModel::time(w, norm_policy)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_ols;
    use crate::series::SegmentMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_square(seed: u64, n: usize, l: usize) -> SegmentSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, l, |_, _| rng.random_range(-1.0..1.0));
        let wt = DMatrix::from_fn(l, l, |_, _| rng.random_range(-0.5..0.5));
        let noise = DMatrix::from_fn(n, l, |_, _| rng.random_range(-0.5..0.5));
        SegmentSet::new(x.clone(), x * wt + noise, SegmentMode::Hankel).unwrap()
    }

    #[test]
    fn lambda_zero_is_ols_in_one_step() {
        let s = gaussian_square(1, 40, 4);
        let cfg = IrlsConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let (m, trace) = fit_root_purge_irls(&s, &cfg, NormPolicy::None).unwrap();
        let ols = fit_ols(&s, NormPolicy::None).unwrap();
        assert!((m.time_weight().unwrap() - ols.time_weight().unwrap()).amax() < 1e-10);
        assert!(trace.converged);
        assert!(trace.objective.len() <= 2);
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..10 {
            let s = gaussian_square(seed, 30 + seed as usize, 5);
            let cfg = IrlsConfig {
                lambda: 0.8,
                max_iters: 60,
                tol: 1e-12,
            };
            let (_, trace) = fit_root_purge_irls(&s, &cfg, NormPolicy::None).unwrap();
            for pair in trace.objective.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-10 * pair[0].abs().max(1.0));
            }
            assert!(trace.objective.last().unwrap() < &trace.objective[0]);
        }
    }

    #[test]
    fn rejects_non_square() {
        let s = SegmentSet::new(DMatrix::zeros(5, 3), DMatrix::zeros(5, 2), SegmentMode::Hankel).unwrap();
        assert!(fit_root_purge_irls(&s, &IrlsConfig::default(), NormPolicy::None).is_err());
    }

    #[test]
    fn ridge_guard_handles_degenerate_design() {
        // A zero column makes XᵀX singular.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = DMatrix::from_fn(20, 1, |_, _| rng.random_range(-1.0..1.0));
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { base[(i, 0)] } else { 0.0 });
        let y = DMatrix::from_fn(20, 2, |i, j| base[(i, 0)] * (j as f64 + 1.0));
        let s = SegmentSet::new(x, y, SegmentMode::Hankel).unwrap();
        let (_, trace) = fit_root_purge_irls(&s, &IrlsConfig::default(), NormPolicy::None).unwrap();
        assert!(trace.ridge_used);
    }
}
