use nalgebra::DMatrix;

use super::freq::FreqOperator;
use super::PurgeConfig;
use crate::error::{Error, Result};
use crate::estimators::{LinearModel, Weights};

/// Sufficient statistics `XᵀX`, `XᵀY`, `YᵀY` of a segment set.
///
/// Both terms of the objective are quadratic forms in the residual, so the
/// loss and its gradient for a time weight `M` only need these Gram blocks;
/// an epoch then costs O(L²H) regardless of the number of windows.
#[derive(Debug, Clone)]
pub struct GramStats {
    pub sxx: DMatrix<f64>,
    pub sxy: DMatrix<f64>,
    pub syy: DMatrix<f64>,
    pub rows: usize,
}

impl GramStats {
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let xt = x.transpose();
        Self {
            sxx: &xt * x,
            sxy: &xt * y,
            syy: y.transpose() * y,
            rows: x.nrows(),
        }
    }

    /// `‖Y − X·M‖²_F`.
    pub fn residual_energy(&self, m: &DMatrix<f64>) -> f64 {
        self.syy.trace() - 2.0 * m.dot(&self.sxy) + m.dot(&(&self.sxx * m))
    }

    /// Mean squared residual per entry.
    pub fn mse(&self, m: &DMatrix<f64>) -> f64 {
        self.residual_energy(m) / (self.rows * m.ncols()) as f64
    }

    pub(crate) fn residual_stats(&self, m: &DMatrix<f64>) -> ResidualStats {
        let sxxm = &self.sxx * m;
        let xtr = &self.sxy - &sxxm;
        let cross = self.sxy.transpose() * m;
        let mut c = &self.syy - &cross - cross.transpose() + m.transpose() * &sxxm;
        // Symmetrise away rounding so C stays a Gram matrix.
        c = (&c + c.transpose()) * 0.5;
        let seek = self.syy.trace() - 2.0 * m.dot(&self.sxy) + m.dot(&sxxm);
        ResidualStats { xtr, c, seek }
    }
}

/// `XᵀR`, `RᵀR` and `‖R‖²` for the residual `R = Y − X·M`.
pub(crate) struct ResidualStats {
    pub xtr: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub seek: f64,
}

impl ResidualStats {
    pub fn direct(x: &DMatrix<f64>, y: &DMatrix<f64>, m: &DMatrix<f64>) -> Self {
        let r = y - x * m;
        Self {
            xtr: x.transpose() * &r,
            c: r.transpose() * &r,
            seek: r.norm_squared(),
        }
    }
}

/// Loss and gradient with respect to a time weight `M` (L×H).
///
/// With `E` the H×L pad/crop selector (`R·E = P(R)`) and `A = E·M`, the
/// penalty is `tr(KᵀCK)` for `K = A^k`, `C = RᵀR`. Its gradient has a part
/// through `C` (the residual; dropped under stop-gradient) and a part
/// through `K`, `Σ_i Eᵀ (Aⁱ)ᵀ·2CK·(A^{k−1−i})ᵀ`.
pub(crate) fn objective(
    m: &DMatrix<f64>,
    stats: &ResidualStats,
    lambda: f64,
    order: usize,
    stop_gradient: bool,
) -> (f64, DMatrix<f64>) {
    let (l, h) = m.shape();
    let scale = if h < l { l as f64 / h as f64 } else { 1.0 };
    let lambda_eff = lambda * scale;
    let mut grad = &stats.xtr * -2.0;
    if lambda_eff == 0.0 {
        return (stats.seek, grad);
    }

    let mut a = DMatrix::zeros(h, h);
    let shared = l.min(h);
    a.rows_mut(0, shared).copy_from(&m.rows(0, shared));

    let mut powers = Vec::with_capacity(order + 1);
    powers.push(DMatrix::identity(h, h));
    for i in 0..order {
        let next = &powers[i] * &a;
        powers.push(next);
    }
    let k = &powers[order];
    let ck = &stats.c * k;
    let purge = k.dot(&ck);

    if !stop_gradient {
        grad -= (&stats.xtr * (k * k.transpose())) * (2.0 * lambda_eff);
    }
    let two_ck = ck * 2.0;
    let mut ga = DMatrix::zeros(h, h);
    for i in 0..order {
        ga += powers[i].transpose() * &two_ck * powers[order - 1 - i].transpose();
    }
    let mut rows = grad.rows_mut(0, shared);
    rows += ga.rows(0, shared) * lambda_eff;

    (stats.seek + lambda_eff * purge, grad)
}

/// Root Purge loss (summed over all entries) and its gradient for `model`
/// on the given matrices.
///
/// The matrices are taken as they are: no normalization is applied here,
/// the trainers normalize beforehand. The gradient has the weight's own
/// shape; for frequency weights it is `∂J/∂Re W_F + i·∂J/∂Im W_F`.
pub fn purge_loss(
    model: &LinearModel,
    history: &DMatrix<f64>,
    future: &DMatrix<f64>,
    config: &PurgeConfig,
) -> Result<(f64, Weights)> {
    let (l, h) = (model.lookback(), model.horizon());
    if history.ncols() != l || future.ncols() != h || history.nrows() != future.nrows() {
        return Err(Error::shape(
            "purge_loss inputs",
            format!("N×{l} history and N×{h} future"),
            format!(
                "{}×{} history and {}×{} future",
                history.nrows(),
                history.ncols(),
                future.nrows(),
                future.ncols()
            ),
        ));
    }
    config.validate()?;
    let m = super::materialize_time_weight(model);
    let stats = ResidualStats::direct(history, future, &m);
    let (loss, grad) = objective(&m, &stats, config.lambda, config.order, config.stop_gradient);
    if !loss.is_finite() {
        return Err(Error::NonFinite("purge loss"));
    }
    let grad = match model.weights() {
        Weights::Time(_) => Weights::Time(grad),
        Weights::Frequency(_) => Weights::Frequency(FreqOperator::new(l, h)?.adjoint(&grad)?),
    };
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::NormPolicy;
    use crate::rootpurge::freq::freq_shape;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Independent oracle: build the penalty literally by padding/cropping
    /// and applying the model `k` times.
    fn literal_loss(m: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64, order: usize) -> f64 {
        let l = m.nrows();
        let r = y - x * m;
        let mut z = r.clone();
        let mut scale = 1.0;
        for step in 0..order {
            let (p, s) = super::super::pad_or_crop(&z, l);
            if step == 0 {
                scale = s;
            }
            z = p * m;
        }
        r.norm_squared() + lambda * scale * z.norm_squared()
    }

    #[test]
    fn matches_literal_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (l, h, k) in [(4, 2, 1), (4, 2, 3), (3, 5, 2), (4, 4, 2)] {
            let x = random(7, l, &mut rng);
            let y = random(7, h, &mut rng);
            let m = random(l, h, &mut rng) * 0.5;
            let stats = ResidualStats::direct(&x, &y, &m);
            let (loss, _) = objective(&m, &stats, 0.7, k, false);
            assert_relative_eq!(loss, literal_loss(&m, &x, &y, 0.7, k), max_relative = 1e-12);
        }
    }

    #[test]
    fn gram_and_direct_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = (random(30, 6, &mut rng), random(30, 3, &mut rng));
        let m = random(6, 3, &mut rng);
        let g = GramStats::new(&x, &y);
        let (l1, g1) = objective(&m, &g.residual_stats(&m), 0.3, 2, false);
        let (l2, g2) = objective(&m, &ResidualStats::direct(&x, &y, &m), 0.3, 2, false);
        assert_relative_eq!(l1, l2, max_relative = 1e-10);
        assert!((g1 - g2).amax() < 1e-9);
    }

    #[test]
    fn lambda_zero_is_plain_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = (random(5, 4, &mut rng), random(5, 2, &mut rng));
        let w = random(4, 2, &mut rng);
        let model = LinearModel::time(w.clone(), NormPolicy::None).unwrap();
        let cfg = PurgeConfig {
            lambda: 0.0,
            domain: crate::Domain::Time,
            ..Default::default()
        };
        let (loss, grad) = purge_loss(&model, &x, &y, &cfg).unwrap();
        let r = &y - &x * &w;
        assert_relative_eq!(loss, r.norm_squared(), max_relative = 1e-14);
        let Weights::Time(g) = grad else { panic!() };
        assert!((g + x.transpose() * r * 2.0).amax() < 1e-12);
    }

    #[test]
    fn zero_weight_has_no_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = (random(5, 4, &mut rng), random(5, 2, &mut rng));
        let model = LinearModel::time(DMatrix::zeros(4, 2), NormPolicy::None).unwrap();
        let (loss, _) = purge_loss(&model, &x, &y, &PurgeConfig::default()).unwrap();
        assert_relative_eq!(loss, y.norm_squared(), max_relative = 1e-14);
    }

    fn fd_check(model: &LinearModel, x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &PurgeConfig) -> f64 {
        let (_, grad) = purge_loss(model, x, y, cfg).unwrap();
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        let loss_at = |m: &LinearModel| purge_loss(m, x, y, cfg).unwrap().0;
        match (model.weights(), &grad) {
            (Weights::Time(w), Weights::Time(g)) => {
                let scale = g.amax().max(1e-8);
                for idx in 0..w.len() {
                    let (mut p, mut q) = (w.clone(), w.clone());
                    p[idx] += eps;
                    q[idx] -= eps;
                    let fd = (loss_at(&LinearModel::time(p, NormPolicy::None).unwrap())
                        - loss_at(&LinearModel::time(q, NormPolicy::None).unwrap()))
                        / (2.0 * eps);
                    worst = worst.max((fd - g[idx]).abs() / scale);
                }
            }
            (Weights::Frequency(w), Weights::Frequency(g)) => {
                let scale = g.iter().map(|z| z.norm()).fold(1e-8, f64::max);
                let (l, h) = (model.lookback(), model.horizon());
                for idx in 0..w.len() {
                    for (dir, analytic) in [
                        (Complex64::new(eps, 0.0), g[idx].re),
                        (Complex64::new(0.0, eps), g[idx].im),
                    ] {
                        let (mut p, mut q) = (w.clone(), w.clone());
                        p[idx] += dir;
                        q[idx] -= dir;
                        let fd = (loss_at(&LinearModel::frequency(p, l, h, NormPolicy::None).unwrap())
                            - loss_at(&LinearModel::frequency(q, l, h, NormPolicy::None).unwrap()))
                            / (2.0 * eps);
                        worst = worst.max((fd - analytic).abs() / scale);
                    }
                }
            }
            _ => unreachable!(),
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = (random(3, 4, &mut rng), random(3, 2, &mut rng));
        let model = LinearModel::time(random(4, 2, &mut rng) * 0.5, NormPolicy::None).unwrap();
        for order in 1..=3 {
            let cfg = PurgeConfig {
                lambda: 0.8,
                order,
                domain: crate::Domain::Time,
                ..Default::default()
            };
            assert!(fd_check(&model, &x, &y, &cfg) < 1e-5, "k={order}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (l, h, k) in [(6, 4, 1), (5, 7, 2), (4, 4, 3)] {
            let (bl, bh) = freq_shape(l, h);
            let w = DMatrix::from_fn(bl, bh, |_, _| {
                Complex64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
            });
            let model = LinearModel::frequency(w, l, h, NormPolicy::None).unwrap();
            let (x, y) = (random(9, l, &mut rng), random(9, h, &mut rng));
            let cfg = PurgeConfig {
                lambda: 0.6,
                order: k,
                ..Default::default()
            };
            assert!(fd_check(&model, &x, &y, &cfg) < 1e-5, "L={l} H={h} k={k}");
        }
    }

    #[test]
    fn stop_gradient_drops_residual_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (x, y) = (random(6, 3, &mut rng), random(6, 3, &mut rng));
        let m = random(3, 3, &mut rng);
        let stats = ResidualStats::direct(&x, &y, &m);
        let (_, full) = objective(&m, &stats, 1.0, 1, false);
        let (_, stopped) = objective(&m, &stats, 1.0, 1, true);
        let through_c = -2.0 * &stats.xtr * (&m * m.transpose());
        assert!((full - stopped - through_c).amax() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = LinearModel::time(DMatrix::zeros(4, 2), NormPolicy::None).unwrap();
        let err = purge_loss(
            &model,
            &DMatrix::zeros(3, 3),
            &DMatrix::zeros(3, 2),
            &PurgeConfig::default(),
        );
        assert!(matches!(err, Err(Error::Shape { .. })));
    }
}
