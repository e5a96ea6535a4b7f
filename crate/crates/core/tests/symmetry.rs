use std::collections::BTreeMap;

use jumpsym::group::LieGroupChart;
use jumpsym::models::{affine_gl2_sde, affine_noise_chart, dilation_field, rotation_generator, rotation_group};
use jumpsym::numeric;
use jumpsym::sde::CanonicalSdeMap;
use jumpsym::symmetry::{
    determining_residual, determining_residual_at, finite_symmetry_check, fit_symmetry, infinitesimal_via_flow,
    linear_ansatz, translation_ansatz, DerivativeMode, SymmetryGrid,
};
use jumpsym::transform::{
    lie_bracket, one_parameter, transformation_by_name, BracketVariant, GaugeAction, InfinitesimalTransformation,
    StochasticTransformation,
};
use proptest::prelude::*;

fn grid() -> SymmetryGrid {
    SymmetryGrid::default_for(2, &affine_noise_chart()).unwrap()
}

fn setup() -> (CanonicalSdeMap, GaugeAction, SymmetryGrid) {
    (affine_gl2_sde(), GaugeAction::conjugation_affine2(), grid())
}

#[test]
fn default_grid_shape() {
    let g = grid();
    assert_eq!(g.points.len(), 25 * 5 + 50);
    for (_, z) in &g.points {
        assert!(affine_noise_chart().in_domain(z));
    }
}

#[test]
fn zero_field_has_zero_residual() {
    let (sde, gauge, grid) = setup();
    let zero = InfinitesimalTransformation::new("0", 2, LieGroupChart::circle(), |_| vec![0.0; 2], |_| vec![0.0], |_| 0.0);
    let r = determining_residual(&sde, &zero, &gauge, None, &grid, false).unwrap();
    assert_eq!(r.sup_norm, 0.0);
    let f = infinitesimal_via_flow(&sde, &zero, &gauge, None, &grid, 1e-3, 1e-12).unwrap();
    assert_eq!(f.sup_norm, 0.0);
}

#[test]
fn rotation_solves_the_determining_equations() {
    let (sde, gauge, grid) = setup();
    let r = determining_residual(&sde, &rotation_generator(), &gauge, None, &grid, true).unwrap();
    assert_eq!(r.derivative_mode, DerivativeMode::Analytic);
    assert!(r.sup_norm < 1e-9, "analytic residual {}", r.sup_norm);
    assert_eq!(r.residuals.len(), grid.points.len());
    let fd = sde.clone().without_jacobians();
    let r = determining_residual(&fd, &rotation_generator(), &gauge, None, &grid, false).unwrap();
    assert_eq!(r.derivative_mode, DerivativeMode::FiniteDifference);
    assert!(r.sup_norm < 1e-5, "finite-difference residual {}", r.sup_norm);
}

#[test]
fn dilation_violates_the_determining_equations() {
    let (sde, gauge, grid) = setup();
    let r = determining_residual(&sde, &dilation_field(), &gauge, None, &grid, false).unwrap();
    assert!(r.sup_norm > 0.1);
    // At x = (1, 0) and z = (I, w) the residual is (x1 d1)(z1 x + z2) - z1 (1, 0) = (w1, 0).
    let z = [1.0, 0.0, 0.0, 1.0, 0.5, -0.25];
    let at = determining_residual_at(&sde, &dilation_field(), &gauge, None, &[1.0, 0.0], &z);
    assert!(numeric::max_abs_diff(&at, &[0.5, 0.0]) < 1e-15);
}

#[test]
fn finite_check_accepts_rotations_and_rejects_translation() {
    let (sde, gauge, grid) = setup();
    let id = StochasticTransformation::identity(2, LieGroupChart::circle());
    assert_eq!(finite_symmetry_check(&sde, &id, &gauge, None, &grid, 1e-8).unwrap().max_deviation, 0.0);
    for a in [0.3, 0.7, 1.5] {
        let r = finite_symmetry_check(&sde, &rotation_group(a), &gauge, None, &grid, 1e-8).unwrap();
        assert!(r.pass, "a = {a}: {}", r.max_deviation);
    }
    let shift = transformation_by_name("translation", 2, &LieGroupChart::circle(), &BTreeMap::new()).unwrap();
    let r = finite_symmetry_check(&sde, &shift, &gauge, None, &grid, 1e-8).unwrap();
    assert!(!r.pass && r.max_deviation > 0.1);
}

#[test]
fn flow_derivative_cross_checks_the_determining_residual() {
    let (sde, gauge, grid) = setup();
    let f = infinitesimal_via_flow(&sde, &rotation_generator(), &gauge, None, &grid, 1e-3, 1e-12).unwrap();
    assert!(f.sup_norm < 1e-6, "{}", f.sup_norm);
    let det = determining_residual(&sde, &dilation_field(), &gauge, None, &grid, true).unwrap();
    let flow = infinitesimal_via_flow(&sde, &dilation_field(), &gauge, None, &grid, 1e-3, 1e-12).unwrap();
    let (plus, minus) = (one_parameter(&dilation_field(), 1e-3, 1e-12), one_parameter(&dilation_field(), -1e-3, 1e-12));
    let ep = jumpsym::transform::e_action(&plus, &sde, &gauge, None).unwrap();
    let em = jumpsym::transform::e_action(&minus, &sde, &gauge, None).unwrap();
    for ((x, z), r) in grid.points.iter().zip(&det.residuals) {
        let d: Vec<f64> = ep.eval(x, z).iter().zip(em.eval(x, z)).map(|(a, b)| (a - b) / 2e-3).collect();
        assert!(numeric::max_abs_diff(&d, r) < 1e-4, "{x:?}: {d:?} vs {r:?}");
    }
    assert!((flow.sup_norm - det.sup_norm).abs() < 1e-4);
}

#[test]
fn fit_recovers_the_rotation_symmetry() {
    let (sde, gauge, grid) = setup();
    let ansatz = linear_ansatz(2, &LieGroupChart::circle(), false);
    let fit = fit_symmetry(&sde, &ansatz, &gauge, None, &grid, 1e-10).unwrap();
    assert_eq!(fit.null_directions.len(), 1, "{:?}", fit.singular_values);
    let s = 1.0 / 3f64.sqrt();
    let expect = [0.0, -s, s, 0.0, s];
    let got = &fit.null_directions[0];
    let sign = if got[4] < 0.0 { -1.0 } else { 1.0 };
    for (g, e) in got.iter().zip(expect) {
        assert!((sign * g - e).abs() < 1e-8, "{got:?}");
    }
    assert!(fit.residual < 1e-8);
}

#[test]
fn fit_finds_translations_of_the_additive_map() {
    let sde = CanonicalSdeMap::new("shift", 1, LieGroupChart::additive(1), |x, z| vec![x[0] + z[0]]);
    let gauge = GaugeAction::trivial(LieGroupChart::additive(1));
    let grid = SymmetryGrid::default_for(1, &LieGroupChart::additive(1)).unwrap();
    let trivial = LieGroupChart::additive(0);
    let mut ansatz = translation_ansatz(1, &trivial);
    ansatz.extend(linear_ansatz(1, &trivial, false));
    let fit = fit_symmetry(&sde, &ansatz, &gauge, None, &grid, 1e-6).unwrap();
    assert_eq!(fit.null_directions.len(), 1);
    assert!((fit.null_directions[0][0].abs() - 1.0).abs() < 1e-8);
}

#[test]
fn fit_on_an_ansatz_without_symmetries_leaves_a_residual() {
    let (sde, gauge, grid) = setup();
    let full = linear_ansatz(2, &LieGroupChart::circle(), false);
    // x0 d1, C and x0 d0: the rotation also needs the x1 d0 component.
    let ansatz = vec![full[2].clone(), full[4].clone(), full[0].clone()];
    let fit = fit_symmetry(&sde, &ansatz, &gauge, None, &grid, 1e-10).unwrap();
    assert!(fit.null_directions.is_empty());
    assert!(fit.residual > 1e-3, "{}", fit.residual);
}

#[test]
fn bracket_of_symmetries_is_a_symmetry() {
    let (sde, gauge, grid) = setup();
    let v = rotation_generator();
    let w = InfinitesimalTransformation::new("scaled", 2, LieGroupChart::circle(), |x| vec![-2.0 * x[1], 2.0 * x[0]], |_| vec![2.0], |_| 0.0);
    let br = lie_bracket(&v, &w, BracketVariant::Corrected).unwrap();
    let r = determining_residual(&sde, &br, &gauge, None, &grid, false).unwrap();
    assert!(r.sup_norm < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn residual_is_linear_in_the_field(m in proptest::collection::vec(-2.0f64..2.0, 5)) {
        let (sde, gauge, grid) = setup();
        let make = |s: f64| {
            let m = m.clone();
            let c = m[4];
            InfinitesimalTransformation::new(
                "lin",
                2,
                LieGroupChart::circle(),
                move |x| vec![s * (m[0] * x[0] + m[1] * x[1]), s * (m[2] * x[0] + m[3] * x[1])],
                move |_| vec![s * c],
                |_| 0.0,
            )
        };
        let one = determining_residual(&sde, &make(1.0), &gauge, None, &grid, true).unwrap();
        let two = determining_residual(&sde, &make(2.0), &gauge, None, &grid, true).unwrap();
        for (a, b) in one.residuals.iter().zip(&two.residuals) {
            for (p, q) in a.iter().zip(b) {
                prop_assert!((2.0 * p - q).abs() <= 1e-12 * (1.0 + q.abs()));
            }
        }
    }

    #[test]
    fn generated_groups_are_finite_symmetries(a in -1.0f64..1.0) {
        let (sde, gauge, grid) = setup();
        let t = one_parameter(&rotation_generator(), a, 1e-12);
        let r = finite_symmetry_check(&sde, &t, &gauge, None, &grid, 1e-6).unwrap();
        prop_assert!(r.pass, "a = {}: {}", a, r.max_deviation);
    }
}
