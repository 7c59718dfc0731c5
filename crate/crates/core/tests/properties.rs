//! Property tests for the numerical building blocks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rootcast::data::{generate_synthetic, split, SplitSpec, SyntheticKind, SyntheticSpec};
use rootcast::estimators::{evaluate_mse, fit_ols, forecast, NormPolicy};
use rootcast::linalg::{assignment_cost, eigenvalues, hungarian_match, svd, truncate_rank};
use rootcast::roots::{root_distance, RootSet, RootSource};
use rootcast::series::{denormalize, instance_normalize, ScaleMode, SegmentMode, SegmentSet};

fn matrix(
    rows: std::ops::RangeInclusive<usize>,
    cols: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

fn brute_force_cost(cost: &DMatrix<f64>) -> f64 {
    fn go(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.nrows() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.ncols() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.ncols()], 0.0, &mut best);
    best
}

fn roots_set(roots: Vec<Complex64>) -> RootSet {
    RootSet {
        roots,
        horizon_index: 1,
        source: RootSource::WeightColumn,
    }
}

/// Coefficients `[a_1..a_p]` of `r^p − a_1 r^{p−1} − … − a_p = Π (r − z_k)`.
fn recurrence_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &z in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * z;
        }
        poly = next;
    }
    poly[1..].iter().map(|c| -c.re).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hungarian_matches_brute_force(n in 1usize..=6, seed in prop::collection::vec(0.0f64..100.0, 36)) {
        let cost = DMatrix::from_fn(n, n, |i, j| seed[i * 6 + j]);
        let assignment = hungarian_match(&cost).unwrap();
        let mut seen = assignment.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let got = assignment_cost(&cost, &assignment);
        prop_assert!((got - brute_force_cost(&cost)).abs() < 1e-9);
    }

    #[test]
    fn svd_reconstructs_and_is_sorted(m in matrix(1..=7, 1..=7)) {
        let s = svd(&m).unwrap();
        prop_assert!((s.reconstruct() - &m).amax() < 1e-9 * (1.0 + m.amax()));
        for w in s.singular_values.as_slice().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(s.singular_values.iter().all(|v| *v >= 0.0));
        let k = s.len();
        let utu = s.left_vectors.transpose() * &s.left_vectors;
        prop_assert!((utu - DMatrix::identity(k, k)).amax() < 1e-9);
        let vtv = s.right_vectors.transpose() * &s.right_vectors;
        prop_assert!((vtv - DMatrix::identity(k, k)).amax() < 1e-9);
    }

    #[test]
    fn svd_reconstructs_rank_deficient_products(a in matrix(2..=8, 1..=3), b in matrix(3..=3, 2..=8)) {
        // a: n×r, b: 3×p; use the first r rows of b so the product has rank ≤ r.
        let r = a.ncols();
        let m = &a * b.rows(0, r);
        let s = svd(&m).unwrap();
        prop_assert!((s.reconstruct() - &m).amax() < 1e-9 * (1.0 + m.amax()));
        let k = s.len();
        prop_assert!((s.left_vectors.transpose() * &s.left_vectors - DMatrix::identity(k, k)).amax() < 1e-9);
        prop_assert!(s.singular_values.iter().skip(r).all(|v| *v < 1e-9 * (1.0 + s.singular_values[0])));
    }

    #[test]
    fn truncation_is_idempotent(m in matrix(2..=6, 2..=6), rank in 1usize..=2) {
        let once = truncate_rank(&svd(&m).unwrap(), rank).unwrap();
        let twice = truncate_rank(&svd(&once).unwrap(), rank).unwrap();
        prop_assert!((once - twice).amax() < 1e-8 * (1.0 + m.amax()));
    }

    #[test]
    fn normalize_round_trip(m in matrix(1..=5, 2..=6), std in any::<bool>()) {
        let mode = if std { ScaleMode::MeanAndStd } else { ScaleMode::MeanOnly };
        let seg = SegmentSet::new(m.clone(), m.clone(), SegmentMode::Hankel).unwrap();
        let (normed, state) = instance_normalize(&seg, mode);
        let back = denormalize(normed.future(), &state).unwrap();
        prop_assert!((back - &m).amax() < 1e-9 * (1.0 + m.amax()));
    }

    #[test]
    fn instance_mean_models_are_shift_equivariant(
        values in prop::collection::vec(-5.0f64..5.0, 40),
        shift in -100.0f64..100.0,
    ) {
        let seg = SegmentSet::from_values(&values, 6, 3, SegmentMode::Hankel).unwrap();
        let model = fit_ols(&seg, NormPolicy::InstanceMean).unwrap();
        let x = seg.history();
        let shifted = x.map(|v| v + shift);
        let a = forecast(&model, x).unwrap().map(|v| v + shift);
        let b = forecast(&model, &shifted).unwrap();
        prop_assert!((a - b).amax() < 1e-8 * (1.0 + shift.abs()));
    }

    #[test]
    fn companion_roots_match_constructed_roots(
        re in prop::collection::vec(-1.5f64..1.5, 2),
        im in 0.1f64..1.0,
        real_root in -1.5f64..1.5,
    ) {
        // Degree 4 polynomial from a conjugate pair and two real roots.
        let roots = vec![
            Complex64::new(re[0], im),
            Complex64::new(re[0], -im),
            Complex64::new(re[1], 0.0),
            Complex64::new(real_root + if (real_root - re[1]).abs() < 0.05 { 0.1 } else { 0.0 }, 0.0),
        ];
        let found = RootSet::from_coeffs(&recurrence_from_roots(&roots)).unwrap();
        prop_assert_eq!(found.len(), 4);
        prop_assert!(root_distance(&found, &roots_set(roots.clone())) < 1e-8, "{:?} vs {:?}", found.roots, roots);
    }

    #[test]
    fn root_distance_is_symmetric_and_permutation_invariant(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..6),
        rot in 0usize..6,
    ) {
        let a: Vec<Complex64> = pts.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        let mut b: Vec<Complex64> = a.iter().map(|z| z * Complex64::new(0.9, 0.1)).collect();
        let d = root_distance(&roots_set(a.clone()), &roots_set(b.clone()));
        let k = rot % b.len();
        b.rotate_left(k);
        let mut a_rev = a.clone();
        a_rev.reverse();
        prop_assert!((root_distance(&roots_set(a_rev), &roots_set(b.clone())) - d).abs() < 1e-12);
        prop_assert!((root_distance(&roots_set(b), &roots_set(a.clone())) - d).abs() < 1e-12);
        prop_assert_eq!(root_distance(&roots_set(a.clone()), &roots_set(a)), 0.0);
    }

    #[test]
    fn splits_never_share_targets(t in 20usize..300, r1 in 0.3f64..0.8, frac in 0.0f64..1.0, l in 1usize..6) {
        let r2 = (1.0 - r1) * frac;
        let r3 = 1.0 - r1 - r2;
        let series = rootcast::TimeSeries::univariate((0..t).map(|v| v as f64).collect()).unwrap();
        let spec = SplitSpec::ratios(r1, r2, r3);
        let Ok(s) = split(&series, &spec, l) else { return Ok(()); };
        let ranges: Vec<_> = s.views().iter().map(|v| v.target_range()).collect();
        prop_assert_eq!(ranges[0].start, 0);
        prop_assert!(ranges[0].end <= ranges[1].start || ranges[1].is_empty());
        prop_assert!(ranges[1].end <= ranges[2].start || ranges[2].is_empty());
        for view in s.views() {
            if view.is_empty() {
                continue;
            }
            // Targets in the windows are the source indices themselves (ramp data).
            if let Ok(seg) = view.segments(0, l, 1, SegmentMode::Hankel) {
                let range = view.target_range();
                prop_assert!(seg.future().iter().all(|v| range.contains(&(*v as usize))));
            }
        }
    }
}

#[test]
fn synthetic_generation_is_bit_identical() {
    for kind in [
        SyntheticKind::TrendPeriodic,
        SyntheticKind::PureNoise,
        SyntheticKind::ToyQuadratic,
    ] {
        let spec = SyntheticSpec {
            sigma: 0.7,
            seed: 11,
            ..SyntheticSpec::new(kind, 20.0)
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        let bits = |s: &rootcast::TimeSeries| s.channel(0).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn noise_free_recurrence_satisfies_itself() {
    let coeffs = [2.2, -1.9, 0.6];
    let spec = SyntheticSpec {
        dt: 1.0,
        coeffs: Some(coeffs.to_vec()),
        init: Some(vec![0.3, -1.0, 0.8]),
        ..SyntheticSpec::new(SyntheticKind::CustomRecurrence, 300.0)
    };
    let y = generate_synthetic(&spec).unwrap();
    let y = y.channel(0).unwrap();
    for n in 3..y.len() {
        let pred: f64 = coeffs.iter().enumerate().map(|(k, a)| a * y[n - 1 - k]).sum();
        assert!((pred - y[n]).abs() < 1e-12 * (1.0 + y[n].abs()));
    }
}

#[test]
fn eigenvalues_of_rotation_block() {
    let t: f64 = 0.3;
    let m = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
    let ev = eigenvalues(&m).unwrap();
    let expected = [Complex64::from_polar(1.0, t), Complex64::from_polar(1.0, -t)];
    assert!(root_distance(&roots_set(ev), &roots_set(expected.to_vec())) < 1e-12);
}

#[test]
fn ols_is_exact_on_its_own_recurrence_class() {
    // A model fit by least squares predicts any series obeying the same recurrence.
    let gen = |init: Vec<f64>| {
        let spec = SyntheticSpec {
            dt: 1.0,
            coeffs: Some(vec![1.0, 0.5, -0.5]),
            init: Some(init),
            ..SyntheticSpec::new(SyntheticKind::CustomRecurrence, 80.0)
        };
        generate_synthetic(&spec).unwrap().channel(0).unwrap().to_vec()
    };
    let train = SegmentSet::from_values(&gen(vec![1.0, 0.0, 2.0]), 3, 2, SegmentMode::Hankel).unwrap();
    let probe = SegmentSet::from_values(&gen(vec![-1.0, 4.0, 0.5]), 3, 2, SegmentMode::Hankel).unwrap();
    let m = fit_ols(&train, NormPolicy::None).unwrap();
    assert!(evaluate_mse(&m, &probe).unwrap() < 1e-16);
}
