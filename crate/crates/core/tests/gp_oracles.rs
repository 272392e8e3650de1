use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uupl_core::calibration::{default_uncertainty_factors, CalibrationCurve};
use uupl_core::gp::{
    laplace_mode, log_likelihood, neg_hessian, posterior_covariance, LaplaceObjective, LaplaceOptions, LikelihoodMode,
    PosteriorState, PreferenceDataset, UncertaintyFactors, UncertaintyLevel,
};
use uupl_core::math::normal::ln_cdf;
use uupl_core::math::{build_covariance, CovMatrix, KernelConfig};
use uupl_core::FeaturePoint;

fn factors() -> UncertaintyFactors {
    UncertaintyFactors::new([0.3, 0.8, 2.0, 6.0]).unwrap()
}

fn random_dataset(rng: &mut ChaCha8Rng, dim: usize, n_pts: usize, n_pairs: usize) -> PreferenceDataset {
    let pts: Vec<FeaturePoint> = (0..n_pts)
        .map(|_| FeaturePoint::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
        .collect();
    let mut d = PreferenceDataset::new();
    while d.num_pairs() < n_pairs {
        let i = rng.random_range(0..n_pts);
        let j = rng.random_range(0..n_pts);
        if i == j {
            continue;
        }
        let level = UncertaintyLevel::ALL[rng.random_range(0..4)];
        d.add_comparison(pts[i].clone(), pts[j].clone(), level).unwrap();
    }
    d
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n_pts = rng.random_range(2..=10);
        let n_pairs = rng.random_range(1..=15);
        let d = random_dataset(&mut rng, 2, n_pts, n_pairs);
        let k = build_covariance(d.points(), &KernelConfig::with_gamma(0.5).unwrap()).unwrap();
        let obj = LaplaceObjective::new(&d, &k, &factors(), LikelihoodMode::PerLevel).unwrap();
        let n = d.num_points();
        let f = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
        let g = obj.gradient(&f).unwrap();
        let h = 1e-5;
        for i in 0..n {
            let mut fp = f.clone();
            let mut fm = f.clone();
            fp[i] += h;
            fm[i] -= h;
            let fd = (obj.value(&fp).unwrap() - obj.value(&fm).unwrap()) / (2.0 * h);
            assert!(rel_err(g[i], fd) < 1e-5, "grad {i}: {} vs {fd}", g[i]);
        }
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let hv = obj.hessian_vec(&f, &v).unwrap();
        let fd = (obj.gradient(&(&f + &v * h)).unwrap() - obj.gradient(&(&f - &v * h)).unwrap()) / (2.0 * h);
        for i in 0..n {
            assert!(rel_err(hv[i], fd[i]) < 1e-5, "Hv {i}: {} vs {}", hv[i], fd[i]);
        }
    }
}

/// Maximizes `S` over a 2-D grid, zooming in around the best cell.
fn grid_search_gap(u: f64, rho: f64) -> f64 {
    let kinv = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]).try_inverse().unwrap();
    let s = |a: f64, b: f64| {
        let f = DVector::from_vec(vec![a, b]);
        ln_cdf((a - b) / u) - 0.5 * (f.transpose() * &kinv * &f)[0]
    };
    let (mut ca, mut cb, mut half) = (0.0, 0.0, 4.0);
    for _ in 0..12 {
        let steps = 100;
        let mut best = (f64::NEG_INFINITY, ca, cb);
        for i in 0..=steps {
            for j in 0..=steps {
                let a = ca - half + 2.0 * half * i as f64 / steps as f64;
                let b = cb - half + 2.0 * half * j as f64 / steps as f64;
                let v = s(a, b);
                if v > best.0 {
                    best = (v, a, b);
                }
            }
        }
        ca = best.1;
        cb = best.2;
        half *= 0.1;
    }
    ca - cb
}

fn single_pair(u: f64, rho: f64) -> (PreferenceDataset, CovMatrix, UncertaintyFactors) {
    let mut d = PreferenceDataset::new();
    d.add_comparison(FeaturePoint::scalar(0.0).unwrap(), FeaturePoint::scalar(1.0).unwrap(), UncertaintyLevel::L1)
        .unwrap();
    let k = CovMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
    (d, k, UncertaintyFactors::new([u, 2.0 * u, 3.0 * u, 4.0 * u]).unwrap())
}

#[test]
fn single_pair_mode_matches_grid_search() {
    for &rho in &[0.0, 0.5, 0.9] {
        for &u in &[0.1, 1.0, 10.0, 100.0] {
            let (d, k, f) = single_pair(u, rho);
            let fit = laplace_mode(&d, &k, &f, &LaplaceOptions::default()).unwrap();
            let got = fit.f_lap[0] - fit.f_lap[1];
            let want = grid_search_gap(u, rho);
            assert!((got - want).abs() < 1e-4, "u={u} rho={rho}: {got} vs {want}");
        }
    }
}

#[test]
fn posterior_covariance_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
    let k = &m * m.transpose() + DMatrix::identity(4, 4) * 0.5;
    let b = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
    let w = &b * b.transpose();
    let got = posterior_covariance(&CovMatrix::from_matrix(k.clone()).unwrap(), &w).unwrap();
    let want = (w + k.try_inverse().unwrap()).try_inverse().unwrap();
    assert!((got - want).amax() < 1e-8);
}

#[test]
fn prediction_matches_explicit_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = random_dataset(&mut rng, 1, 6, 5);
    let kern = KernelConfig::with_gamma(0.8).unwrap();
    let state =
        PosteriorState::fit(d.clone(), kern, factors(), LikelihoodMode::PerLevel, &LaplaceOptions::default()).unwrap();

    // explicit oracle: mu = k^T K^-1 f, Sigma = K_t - k^T K^-1 k + k^T K^-1 (W + K^-1)^-1 K^-1 k
    let k = build_covariance(d.points(), &kern).unwrap().into_inner();
    let kinv = k.clone().try_inverse().unwrap();
    let w = neg_hessian(&d, state.f_lap(), &factors()).unwrap();
    let post = (&w + &kinv).try_inverse().unwrap();
    let kval = |a: &FeaturePoint, b: &FeaturePoint| {
        let s: f64 = a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y) * (x - y)).sum();
        (-kern.gamma * s).exp() + if s == 0.0 { kern.jitter } else { 0.0 }
    };
    let grid: Vec<FeaturePoint> = (0..100).map(|i| FeaturePoint::scalar(-2.5 + 0.05 * i as f64).unwrap()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        let (a, b) = (&grid[i], &grid[(i * 37 + 11) % grid.len()]);
        let kt = DMatrix::from_row_slice(2, 2, &[kval(a, a), kval(a, b), kval(b, a), kval(b, b)]);
        let kx = DMatrix::from_fn(d.num_points(), 2, |r, c| kval(&d.points()[r], if c == 0 { a } else { b }));
        let mu = kx.transpose() * &kinv * state.f_lap();
        let sig = &kt - kx.transpose() * &kinv * &kx + kx.transpose() * &kinv * &post * &kinv * &kx;
        let pd = state.predict(a, b).unwrap();
        for r in 0..2 {
            worst = worst.max((pd.mu[r] - mu[r]).abs());
            for c in 0..2 {
                worst = worst.max((pd.sigma[r][c] - sig[(r, c)]).abs());
            }
        }
    }
    assert!(worst < 1e-8, "max abs diff {worst}");
}

#[test]
fn fitted_state_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..10 {
        let d = random_dataset(&mut rng, 2, 12, 25);
        let s = PosteriorState::fit(
            d,
            KernelConfig::with_gamma(0.4).unwrap(),
            factors(),
            LikelihoodMode::PerLevel,
            &LaplaceOptions::default(),
        )
        .unwrap();
        assert!(s.grad_norm() < 1e-8, "trial {trial}");
        let w = s.w();
        for i in 0..w.nrows() {
            assert!(w.row(i).sum().abs() < 1e-10);
        }
        let ev = w.clone().symmetric_eigen().eigenvalues;
        assert!(ev.min() > -1e-10);
        // Hessian of S is negative definite at the mode
        let kinv = s.k().matrix().clone().try_inverse().unwrap();
        let hs = -(w + kinv);
        let hs = (&hs + hs.transpose()) * 0.5;
        assert!(hs.symmetric_eigen().eigenvalues.max() < 0.0);
        // the mode beats the prior mean
        let ll = log_likelihood(s.dataset(), s.f_lap(), s.factors()).unwrap();
        let quad = 0.5 * s.f_lap().dot(&s.k().matrix().clone().cholesky().unwrap().solve(s.f_lap()));
        let s0 = log_likelihood(s.dataset(), &DVector::zeros(s.f_lap().len()), s.factors()).unwrap();
        assert!(ll - quad >= s0);
    }
}

#[test]
fn confident_large_dataset_converges() {
    // tiny factors and many close points stress conditioning
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let tiny = UncertaintyFactors::new([0.006, 0.018, 0.04, 7.0]).unwrap();
    let truth = |x: f64| (x * 0.7).sin();
    let mut d = PreferenceDataset::new();
    for _ in 0..100 {
        let a = rng.random_range(-5.0..5.0f64);
        let b = rng.random_range(-5.0..5.0f64);
        let (w, l) = if truth(a) > truth(b) { (a, b) } else { (b, a) };
        let level = UncertaintyLevel::ALL[rng.random_range(0..4)];
        d.add_comparison(FeaturePoint::scalar(w).unwrap(), FeaturePoint::scalar(l).unwrap(), level).unwrap();
    }
    let s = PosteriorState::fit(
        d,
        KernelConfig::with_gamma(0.3).unwrap(),
        tiny,
        LikelihoodMode::PerLevel,
        &LaplaceOptions::default(),
    )
    .unwrap();
    assert!(s.iterations() <= 100);
    assert!(s.grad_norm() < 1e-8);
}

fn arb_dataset() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..8, 1usize..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swapping_roles_preserves_mode((seed, n_pts, n_pairs) in arb_dataset()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(&mut rng, 1, n_pts, n_pairs);
        let kern = KernelConfig::with_gamma(0.6).unwrap();
        let k = build_covariance(d.points(), &kern).unwrap();
        let base = laplace_mode(&d, &k, &factors(), &LaplaceOptions::default()).unwrap();
        // reverse the point list, re-index every pair, and list pairs in reverse
        let n = d.num_points();
        let pts: Vec<_> = d.points().iter().rev().cloned().collect();
        let pairs: Vec<_> = d.pairs().iter().rev().map(|p| uupl_core::PreferencePair {
            winner_idx: n - 1 - p.winner_idx,
            loser_idx: n - 1 - p.loser_idx,
            level: p.level,
        }).collect();
        let d2 = PreferenceDataset::from_parts(pts, pairs).unwrap();
        let k2 = build_covariance(d2.points(), &kern).unwrap();
        let other = laplace_mode(&d2, &k2, &factors(), &LaplaceOptions::default()).unwrap();
        for i in 0..n {
            prop_assert!((base.f_lap[i] - other.f_lap[n - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gap_shrinks_with_level(x1 in -3.0f64..3.0, dx in 0.1f64..3.0, gamma in 0.1f64..2.0) {
        // calibrated factors: u1 sits at the peak of the gap curve, the rest on its tail
        let f = default_uncertainty_factors(CalibrationCurve::standard()).unwrap();
        let kern = KernelConfig::with_gamma(gamma).unwrap();
        let mut prev = f64::INFINITY;
        for level in UncertaintyLevel::ALL {
            let mut d = PreferenceDataset::new();
            d.add_comparison(FeaturePoint::scalar(x1).unwrap(), FeaturePoint::scalar(x1 + dx).unwrap(), level).unwrap();
            let k = build_covariance(d.points(), &kern).unwrap();
            let fit = laplace_mode(&d, &k, &f, &LaplaceOptions::default()).unwrap();
            let gap = fit.f_lap[0] - fit.f_lap[1];
            prop_assert!(gap > 0.0);
            prop_assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn consistent_level1_pairs_are_ordered(seed in any::<u64>(), n in 2usize..8) {
        // a chain of level-1 answers following a fixed ranking never conflicts
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.7 + rng.random_range(0.0..0.3)).collect();
        let mut d = PreferenceDataset::new();
        for _ in 0..2 * n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j { continue; }
            let (w, l) = if xs[i] > xs[j] { (i, j) } else { (j, i) };
            d.add_comparison(FeaturePoint::scalar(xs[w]).unwrap(), FeaturePoint::scalar(xs[l]).unwrap(), UncertaintyLevel::L1).unwrap();
        }
        prop_assume!(d.num_pairs() > 0);
        let s = PosteriorState::fit(d, KernelConfig::with_gamma(0.5).unwrap(), factors(), LikelihoodMode::PerLevel, &LaplaceOptions::default()).unwrap();
        for p in s.dataset().pairs() {
            prop_assert!(s.f_lap()[p.winner_idx] > s.f_lap()[p.loser_idx]);
        }
    }

    #[test]
    fn predictive_covariance_is_psd((seed, n_pts, n_pairs) in arb_dataset(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(&mut rng, 1, n_pts, n_pairs);
        let s = PosteriorState::fit(d, KernelConfig::with_gamma(0.9).unwrap(), factors(), LikelihoodMode::PerLevel, &LaplaceOptions::default()).unwrap();
        let pd = s.predict(&FeaturePoint::scalar(a).unwrap(), &FeaturePoint::scalar(b).unwrap()).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[pd.sigma[0][0], pd.sigma[0][1], pd.sigma[1][0], pd.sigma[1][1]]);
        prop_assert_eq!(pd.sigma[0][1], pd.sigma[1][0]);
        prop_assert!(m.symmetric_eigen().eigenvalues.min() > -1e-8);
        let corr = pd.sigma[0][1] / (pd.sigma[0][0] * pd.sigma[1][1]).sqrt();
        prop_assert!(!corr.is_finite() || corr.abs() <= 1.0 + 1e-8);
    }
}
