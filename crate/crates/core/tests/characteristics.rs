use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use jumpsym::characteristics::{
    chi_square_homogeneity, compare_estimates, estimate_characteristics, estimate_from_paths, kolmogorov_q,
    ks_two_sample, law_equality_test, levy_gauge_check, levy_time_check, summarize, transform_estimate,
    transformed_characteristics, CharError, EstimateConfig, LawTestConfig, LevyCheckConfig,
};
use jumpsym::group::LieGroupChart;
use jumpsym::noise::{
    alpha_stable_triplet, ensemble, sample_levy, AxisJumps, GaussianJumps, LevyTriplet, SemimartingalePath,
};
use jumpsym::transform::{apply_time_change, gauge_with_elements, GaugeAction, TimeAction};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn brownian(cov: &[f64]) -> LevyTriplet {
    LevyTriplet::brownian(2, DMatrix::from_row_slice(2, 2, cov)).unwrap()
}

fn jumpy() -> LevyTriplet {
    LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![0.3, -0.2],
        DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]),
        3.0,
        Some(Arc::new(GaussianJumps { mean: vec![0.2, 0.0], std: vec![0.5, 1.5] })),
    )
    .unwrap()
}

fn estimate(triplet: &LevyTriplet, seed: u64, paths: usize) -> jumpsym::characteristics::CharacteristicsEstimate {
    let t = triplet.clone();
    estimate_characteristics(seed, paths, &EstimateConfig::default(), move |rng, _| {
        Ok(sample_levy(&t, 1.0, 0.01, rng)?)
    })
    .unwrap()
}

fn within(x: f64, expect: f64, se: f64) -> bool {
    (x - expect).abs() <= 5.0 * se.max(1e-12)
}

#[test]
fn brownian_characteristics_are_recovered() {
    let est = estimate(&brownian(&[1.0, 0.4, 0.4, 0.7]), 11, 2000);
    let last = est.times.len() - 1;
    assert!((est.times[last] - 1.0).abs() < 1e-12);
    for (i, c) in [1.0, 0.4, 0.4, 0.7].iter().enumerate() {
        assert!(within(est.a_hat[last][i], *c, est.a_se[last][i]), "A[{i}] = {} +- {}", est.a_hat[last][i], est.a_se[last][i]);
    }
    for i in 0..2 {
        assert!(within(est.b_hat[last][i], 0.0, est.b_se[last][i]));
    }
    assert_eq!(est.jump_count(), 0);
    assert!(est.warnings.is_empty());
}

#[test]
fn drift_and_jump_intensity_are_recovered() {
    let est = estimate(&jumpy(), 12, 2000);
    let s = est.index_of(0.5);
    let t = est.times[s];
    for (i, b) in [0.3, -0.2].iter().enumerate() {
        assert!(within(est.b_hat[s][i], b * t, est.b_se[s][i]), "b[{i}] = {} vs {}", est.b_hat[s][i], b * t);
    }
    let expected = 3.0 * 2000.0;
    assert!(within(est.jump_count() as f64, expected, expected.sqrt()));
    assert_eq!(est.nu_hat.mass(), est.jump_count());
    assert_eq!(est.nu_hat.counts.len(), 4);
    assert_eq!(est.nu_hat.counts[0][0].len(), 32);
}

#[test]
fn estimates_are_deterministic_and_thread_independent() {
    let t = jumpy();
    let a = estimate(&t, 5, 300);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| estimate(&t, 5, 300));
    assert_eq!(a, b);
    let paths: Vec<SemimartingalePath> = ensemble(5, 300, |rng, _| sample_levy(&t, 1.0, 0.01, rng).unwrap());
    assert_eq!(estimate_from_paths(&paths, &EstimateConfig::default()).unwrap(), a);
}

#[test]
fn small_and_empty_ensembles() {
    let est = estimate(&brownian(&[1.0, 0.0, 0.0, 1.0]), 1, 50);
    assert_eq!(est.warnings.len(), 1);
    assert!(matches!(estimate_from_paths(&[], &EstimateConfig::default()), Err(CharError::Empty)));
}

#[test]
fn constant_rotation_transforms_the_triplet() {
    let rot = GaugeAction::planar_rotation(2).unwrap();
    let aniso = LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![1.0, 0.0],
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
        0.0,
        None,
    )
    .unwrap();
    let t = transformed_characteristics(&aniso, &rot, &[FRAC_PI_2], 1000).unwrap();
    assert!((t.triplet.b0[0]).abs() < 1e-15 && (t.triplet.b0[1] - 1.0).abs() < 1e-15);
    let a = &t.triplet.a0;
    assert!((a[(0, 0)] - 0.5).abs() < 1e-14 && (a[(1, 1)] - 2.0).abs() < 1e-14 && a[(0, 1)].abs() < 1e-14);
    assert!(t.converged);
    // Rotations preserve |z|, so the Hunt correction vanishes for every jump law.
    let t = transformed_characteristics(&jumpy(), &rot, &[0.7], 20_000).unwrap();
    assert!(t.drift_correction.iter().all(|c| c.abs() < 1e-12), "{:?}", t.drift_correction);
}

#[test]
fn gauge_check_on_levy_triplets() {
    let rot = GaugeAction::planar_rotation(2).unwrap();
    let cfg = LevyCheckConfig { samples: 40_000, ..Default::default() };
    let gs = vec![vec![0.3], vec![FRAC_PI_2], vec![2.0]];
    let iso = LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![0.0, 0.0],
        DMatrix::identity(2, 2),
        2.0,
        Some(Arc::new(GaussianJumps::isotropic(2, 0.8))),
    )
    .unwrap();
    let r = levy_gauge_check(&iso, &rot, &gs, &cfg).unwrap();
    assert!(r.pass, "{r:?}");
    let full = levy_gauge_check(&iso, &rot, &gs, &LevyCheckConfig { full: true, ..cfg.clone() }).unwrap();
    assert!(full.pass);

    let drifted = LevyTriplet::new(LieGroupChart::additive(2), vec![1.0, 0.0], DMatrix::zeros(2, 2), 0.0, None).unwrap();
    let r = levy_gauge_check(&drifted, &rot, &[vec![FRAC_PI_2]], &cfg).unwrap();
    assert!((r.results[0].residual - 2f64.sqrt()).abs() < 1e-12);
    assert!(!r.condition_passes("drift") && r.condition_passes("diffusion"));

    let axis = LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![0.0, 0.0],
        DMatrix::zeros(2, 2),
        2.0,
        Some(Arc::new(AxisJumps { dim: 2, axis: 0, std: 1.0 })),
    )
    .unwrap();
    let r = levy_gauge_check(&axis, &rot, &[vec![FRAC_PI_2]], &cfg).unwrap();
    assert!(r.condition_passes("drift") && !r.condition_passes("jump_measure"), "{r:?}");
}

#[test]
fn gauge_check_refuses_the_simplified_criterion_for_non_automorphisms() {
    let chart = LieGroupChart::additive(1);
    let shift = GaugeAction::new("shift", LieGroupChart::additive(1), chart.clone(), false, |g, z| vec![z[0] + g[0]], vec![
        Arc::new(|_: &[f64]| vec![1.0]),
    ])
    .unwrap();
    let t = LevyTriplet::brownian(1, DMatrix::identity(1, 1)).unwrap();
    assert!(matches!(levy_gauge_check(&t, &shift, &[vec![0.5]], &LevyCheckConfig::default()), Err(CharError::Config(_))));
}

#[test]
fn time_check_on_brownian_and_stable_triplets() {
    let cfg = LevyCheckConfig { samples: 40_000, ..Default::default() };
    let bm = brownian(&[1.0, 0.2, 0.2, 0.5]);
    assert!(levy_time_check(&bm, &TimeAction::brownian(2), &[0.5, 2.0], &cfg).unwrap().pass);
    let lin = levy_time_check(&bm, &TimeAction::power_scaling(2, 1.0), &[2.0], &cfg).unwrap();
    assert!(!lin.condition_passes("diffusion"));

    let cauchy = alpha_stable_triplet(1.0, 1, 0.05).unwrap();
    let r = levy_time_check(&cauchy, &TimeAction::stable(1, 1.0), &[0.5, 2.0], &cfg).unwrap();
    assert!(r.pass, "{r:?}");
    let r = levy_time_check(&cauchy, &TimeAction::brownian(1), &[4.0], &cfg).unwrap();
    assert!(!r.condition_passes("jump_measure"), "{r:?}");
}

#[test]
fn law_test_separates_drifted_brownian_motion() {
    let bm = brownian(&[1.0, 0.0, 0.0, 1.0]);
    let drifted = LevyTriplet::new(LieGroupChart::additive(2), vec![0.5, 0.0], DMatrix::identity(2, 2), 0.0, None).unwrap();
    let times = [0.5, 1.0];
    let draw = |t: &LevyTriplet, seed| -> Vec<_> {
        ensemble(seed, 1000, |rng, _| summarize(&sample_levy(t, 1.0, 0.01, rng).unwrap(), &times).unwrap())
    };
    let (a, b, c) = (draw(&bm, 100), draw(&bm, 200), draw(&drifted, 300));
    let same = law_equality_test(&a, &b, &times, &LawTestConfig::default()).unwrap();
    assert!(same.verdict, "{same:?}");
    assert!(same.warnings.is_empty());
    assert_eq!(same.tests, 4);
    let diff = law_equality_test(&a, &c, &times, &LawTestConfig::default()).unwrap();
    assert!(!diff.verdict);
    assert!(diff.ks.iter().any(|k| k.time == 1.0 && k.component == 0 && k.adjusted_p < 1e-6));
    let small = law_equality_test(&a[..100], &b[..100], &times, &LawTestConfig::default()).unwrap();
    assert_eq!(small.warnings.len(), 1);
}

#[test]
fn law_test_sees_jump_laws() {
    let make = |std: f64| {
        LevyTriplet::new(
            LieGroupChart::additive(2),
            vec![0.0, 0.0],
            DMatrix::zeros(2, 2),
            4.0,
            Some(Arc::new(GaussianJumps::isotropic(2, std))),
        )
        .unwrap()
    };
    let times = [1.0];
    let draw = |t: &LevyTriplet, seed| -> Vec<_> {
        ensemble(seed, 800, |rng, _| summarize(&sample_levy(t, 1.0, 0.05, rng).unwrap(), &times).unwrap())
    };
    let base = make(0.5);
    let same = law_equality_test(&draw(&base, 1), &draw(&base, 2), &times, &LawTestConfig::default()).unwrap();
    assert!(same.verdict, "{same:?}");
    assert_eq!(same.chi_square.len(), 3);
    let wide = law_equality_test(&draw(&base, 1), &draw(&make(0.8), 3), &times, &LawTestConfig::default()).unwrap();
    assert!(!wide.verdict);
    assert!(wide.chi_square.iter().any(|c| c.name.starts_with("jump_size") && c.adjusted_p < 0.01));
}

#[test]
fn time_changed_brownian_motion_has_rescaled_covariation() {
    let bm = brownian(&[1.0, 0.0, 0.0, 1.0]);
    let est = estimate_characteristics(9, 1000, &EstimateConfig { report_times: vec![1.0, 2.0], ..Default::default() }, |rng, _| {
        let p = sample_levy(&bm, 1.0, 0.01, rng)?;
        let steps = p.steps();
        Ok(apply_time_change(&p, &vec![2.0; steps], Some(0.02))?.0)
    })
    .unwrap();
    for (s, t) in est.times.iter().enumerate() {
        assert!(within(est.a_hat[s][0], t / 2.0, est.a_se[s][0]), "A({t}) = {}", est.a_hat[s][0]);
    }
}

#[test]
fn estimate_then_transform_matches_transform_then_estimate() {
    let rot = GaugeAction::planar_rotation(2).unwrap();
    let g = vec![0.6];
    let t = jumpy();
    let cfg = EstimateConfig::default();
    let original = estimate(&t, 21, 1500);
    let route_a = transform_estimate(&original, &rot, &t.chart, |_| g.clone(), &cfg).unwrap();
    let rotated = estimate_characteristics(22, 1500, &cfg, |rng, _| {
        let p = sample_levy(&t, 1.0, 0.01, rng)?;
        Ok(gauge_with_elements(&p, &rot, &vec![g.clone(); p.steps()])?)
    })
    .unwrap();
    let dev = compare_estimates(&route_a, &rotated).unwrap();
    assert!(dev < 5.0, "{dev}");
    assert_eq!(route_a.jump_count(), original.jump_count());
    // Against the unrotated estimate the anisotropy shows up.
    assert!(compare_estimates(&original, &rotated).unwrap() > 5.0);
}

#[test]
fn kolmogorov_series_reference_values() {
    // Values of the Kolmogorov survival function, from its defining series summed to convergence.
    for (x, q) in [(0.5, 0.963_945_243_664_875_1), (1.0, 0.269_999_671_677_354_5), (1.36, 0.049_485_876_755_377_9), (2.0, 6.709_252_557_797e-4)] {
        assert!((kolmogorov_q(x) - q).abs() < 1e-9, "Q({x}) = {}", kolmogorov_q(x));
    }
    assert!((kolmogorov_q(1.18 - 1e-12) - kolmogorov_q(1.18 + 1e-12)).abs() < 1e-10);
    assert_eq!(kolmogorov_q(0.0), 1.0);
}

#[test]
fn chi_square_on_identical_histograms() {
    let h = [30, 40, 50, 20];
    let (stat, dof, p) = chi_square_homogeneity(&h, &h).unwrap();
    assert_eq!((stat, dof), (0.0, 3));
    assert!((p - 1.0).abs() < 1e-12);
    assert!(chi_square_homogeneity(&[3], &[4]).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ks_is_symmetric_and_bounded(a in proptest::collection::vec(-5.0f64..5.0, 5..60), b in proptest::collection::vec(-5.0f64..5.0, 5..60)) {
        let (d1, p1) = ks_two_sample(&mut a.clone(), &mut b.clone());
        let (d2, p2) = ks_two_sample(&mut b.clone(), &mut a.clone());
        prop_assert!((d1 - d2).abs() < 1e-15 && (p1 - p2).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&d1) && (0.0..=1.0).contains(&p1));
        let (d0, _) = ks_two_sample(&mut a.clone(), &mut a.clone());
        prop_assert_eq!(d0, 0.0);
    }

    #[test]
    fn histogram_mass_equals_jump_count(seed in 0u64..1000) {
        let est = estimate(&jumpy(), seed, 20);
        prop_assert_eq!(est.nu_hat.mass(), est.jump_count());
        prop_assert_eq!(est.jumps.len() as u64, est.jump_count());
    }
}
