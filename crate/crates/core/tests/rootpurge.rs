//! Integration tests for the Root Purge objective and its solvers.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rootcast::data::{generate_synthetic, SyntheticKind, SyntheticSpec};
use rootcast::estimators::{fit_ols, forecast};
use rootcast::linalg::{least_squares, svd};
use rootcast::rootpurge::freq::freq_shape;
use rootcast::rootpurge::{
    fit_root_purge_irls, freq_apply, materialize_time_weight, purge_loss, train_plain_traced, train_root_purge,
    train_root_purge_traced, IrlsConfig, PurgeConfig,
};
use rootcast::{Domain, LinearModel, NormPolicy, SegmentMode, SegmentSet, Weights};

fn random(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_freq(l: usize, h: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let (a, b) = freq_shape(l, h);
    DMatrix::from_fn(a, b, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn noisy_segments(seed: u64, l: usize, h: usize) -> (SegmentSet, SegmentSet) {
    let spec = SyntheticSpec {
        sigma: 0.5,
        dt: 0.2,
        seed,
        ..SyntheticSpec::new(SyntheticKind::TrendPeriodic, 800.0)
    };
    let y = generate_synthetic(&spec).unwrap();
    let v = y.channel(0).unwrap();
    let cut = v.len() * 7 / 10;
    let train = SegmentSet::from_values(&v[..cut], l, h, SegmentMode::Hankel).unwrap();
    let val = SegmentSet::from_values(&v[cut - l..], l, h, SegmentMode::Hankel).unwrap();
    (train, val)
}

#[test]
fn materialized_weight_matches_pipeline_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (l, h) in [(16, 8), (8, 16), (9, 5), (720, 96)] {
        let w = random_freq(l, h, &mut rng);
        let model = LinearModel::frequency(w.clone(), l, h, NormPolicy::None).unwrap();
        let wt = materialize_time_weight(&model);
        assert_eq!(wt.shape(), (l, h));
        let x = random(10, l, &mut rng);
        let direct = freq_apply(&w, &x, h).unwrap();
        assert!((x * wt - direct).amax() < 1e-10, "L={l}, H={h}");
    }
}

#[test]
fn materializing_a_time_model_is_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = random(6, 3, &mut rng);
    let model = LinearModel::time(w.clone(), NormPolicy::None).unwrap();
    assert_eq!(materialize_time_weight(&model), w);
}

/// Central finite differences against the analytic gradient, for both
/// domains, H < L and H ≥ L, orders 1–3.
#[test]
fn gradient_matches_finite_differences_across_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let step = 1e-6;
    for domain in [Domain::Time, Domain::Frequency] {
        for (l, h) in [(4, 2), (4, 4), (4, 6)] {
            for order in 1..=3 {
                let x = random(5, l, &mut rng);
                let y = random(5, h, &mut rng);
                let cfg = PurgeConfig {
                    lambda: 0.7,
                    order,
                    domain,
                    ..Default::default()
                };
                let mut worst: f64 = 0.0;
                match domain {
                    Domain::Time => {
                        let w = random(l, h, &mut rng) * 0.5;
                        let model = LinearModel::time(w.clone(), NormPolicy::None).unwrap();
                        let (_, Weights::Time(g)) = purge_loss(&model, &x, &y, &cfg).unwrap() else {
                            panic!("time gradient expected")
                        };
                        for i in 0..l {
                            for j in 0..h {
                                let eval = |d: f64| {
                                    let mut wd = w.clone();
                                    wd[(i, j)] += d;
                                    let m = LinearModel::time(wd, NormPolicy::None).unwrap();
                                    purge_loss(&m, &x, &y, &cfg).unwrap().0
                                };
                                let fd = (eval(step) - eval(-step)) / (2.0 * step);
                                worst = worst.max((fd - g[(i, j)]).abs() / (1.0 + fd.abs()));
                            }
                        }
                    }
                    Domain::Frequency => {
                        let w = random_freq(l, h, &mut rng) * Complex64::new(0.3, 0.0);
                        let model = LinearModel::frequency(w.clone(), l, h, NormPolicy::None).unwrap();
                        let (_, Weights::Frequency(g)) = purge_loss(&model, &x, &y, &cfg).unwrap() else {
                            panic!("frequency gradient expected")
                        };
                        for idx in 0..w.len() {
                            for (part, unit) in [(0, Complex64::new(1.0, 0.0)), (1, Complex64::new(0.0, 1.0))] {
                                let eval = |d: f64| {
                                    let mut wd = w.clone();
                                    wd[idx] += unit * d;
                                    let m = LinearModel::frequency(wd, l, h, NormPolicy::None).unwrap();
                                    purge_loss(&m, &x, &y, &cfg).unwrap().0
                                };
                                let fd = (eval(step) - eval(-step)) / (2.0 * step);
                                let analytic = if part == 0 { g[idx].re } else { g[idx].im };
                                worst = worst.max((fd - analytic).abs() / (1.0 + fd.abs()));
                            }
                        }
                    }
                }
                assert!(worst < 1e-5, "{domain:?} L={l} H={h} k={order}: {worst:e}");
            }
        }
    }
}

#[test]
fn lambda_zero_reproduces_plain_gradient_descent_trajectory() {
    let (train, val) = noisy_segments(3, 12, 6);
    for domain in [Domain::Time, Domain::Frequency] {
        let cfg = PurgeConfig {
            lambda: 0.0,
            domain,
            learning_rate: 0.01,
            max_epochs: 40,
            batch_size: Some(64),
            seed: 9,
            ..Default::default()
        };
        let (a, ta) = train_root_purge_traced(&train, &val, &cfg, NormPolicy::InstanceMean).unwrap();
        let (b, tb) = train_plain_traced(&train, &val, &cfg, NormPolicy::InstanceMean).unwrap();
        assert_eq!(ta.best_epoch, tb.best_epoch);
        for (x, y) in ta.val_mse.iter().zip(&tb.val_mse) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()), "{domain:?}: {x} vs {y}");
        }
        let diff = (materialize_time_weight(&a) - materialize_time_weight(&b)).amax();
        assert!(diff < 1e-10, "{domain:?}: {diff}");
    }
}

#[test]
fn training_is_bit_identical_given_seed() {
    let (train, val) = noisy_segments(1, 10, 5);
    let cfg = PurgeConfig {
        learning_rate: 0.02,
        max_epochs: 25,
        batch_size: Some(32),
        seed: 4,
        ..Default::default()
    };
    let a = train_root_purge(&train, &val, &cfg, NormPolicy::InstanceMean).unwrap();
    let b = train_root_purge(&train, &val, &cfg, NormPolicy::InstanceMean).unwrap();
    let bits = |m: &LinearModel| {
        materialize_time_weight(m)
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn irls_is_monotone_and_shrinks_singular_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..10 {
        let l = 3 + case % 4;
        let n = 20 + 5 * case;
        let x = random(n, l, &mut rng);
        let y = &x * random(l, l, &mut rng) + random(n, l, &mut rng) * 0.5;
        let seg = SegmentSet::new(x.clone(), y.clone(), SegmentMode::Hankel).unwrap();
        let cfg = IrlsConfig {
            lambda: 0.2 + 0.1 * case as f64,
            ..Default::default()
        };
        let (model, trace) = fit_root_purge_irls(&seg, &cfg, NormPolicy::None).unwrap();
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "case {case}: {} → {}", w[0], w[1]);
        }
        // Oracle for σ(W_OLS): an independent least-squares solve.
        let ols = svd(&least_squares(&x, &y).unwrap()).unwrap().singular_values;
        let purged = svd(model.time_weight().unwrap()).unwrap().singular_values;
        for (p, o) in purged.iter().zip(ols.iter()) {
            assert!(*p <= o + 1e-8, "case {case}: σ {p} > {o}");
        }
    }
}

/// Raising λ shrinks the small singular values of the learned weight while
/// leaving the dominant ones essentially unchanged.
#[test]
fn larger_lambda_shrinks_the_spectrum_tail() {
    let (l, h) = (48, 48);
    let (train, val) = noisy_segments(0, l, h);
    let spectra: Vec<Vec<f64>> = [0.125, 0.5, 2.0]
        .iter()
        .map(|&lambda| {
            let cfg = PurgeConfig {
                lambda,
                domain: Domain::Frequency,
                learning_rate: 0.02,
                max_epochs: 1000,
                early_stop_patience: 0,
                ..Default::default()
            };
            let m = train_root_purge(&train, &val, &cfg, NormPolicy::InstanceMean).unwrap();
            svd(&materialize_time_weight(&m))
                .unwrap()
                .singular_values
                .as_slice()
                .to_vec()
        })
        .collect();
    for pair in spectra.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        for (i, (a, b)) in lo.iter().zip(hi).enumerate().skip(30) {
            assert!(b <= a, "σ_{i}: {a} → {b}");
        }
        for (i, (a, b)) in lo.iter().zip(hi).enumerate().take(5) {
            let change = (b - a).abs() / a;
            assert!(change < 0.1, "σ_{i} changed by {change}");
        }
    }
}

#[test]
fn ols_warm_start_at_lambda_zero_stays_at_ols() {
    let (train, val) = noisy_segments(2, 8, 4);
    let ols = fit_ols(&train, NormPolicy::InstanceMean).unwrap();
    let cfg = PurgeConfig {
        lambda: 0.0,
        domain: Domain::Time,
        init: rootcast::rootpurge::Init::OlsWarmStart,
        learning_rate: 0.01,
        max_epochs: 20,
        ..Default::default()
    };
    let m = train_root_purge(&train, &val, &cfg, NormPolicy::InstanceMean).unwrap();
    let x = val.history();
    let diff = (forecast(&m, x).unwrap() - forecast(&ols, x).unwrap()).amax();
    assert!(diff < 1e-8, "{diff}");
}
