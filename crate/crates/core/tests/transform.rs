use std::collections::BTreeMap;

use jumpsym::group::LieGroupChart;
use jumpsym::models::{self, affine_gl2_sde, closed_form_rectifier, rotation_generator, rotation_group};
use jumpsym::noise::{ensemble, path_rng, sample_brownian, sample_discrete_iterated, PathRng, SemimartingalePath};
use jumpsym::numeric::{self, halton_box, wrap_angle};
use jumpsym::sde::{affine_canonical, solve_increment_map};
use jumpsym::transform::{
    apply_time_change, compose, e_action, flow_of, gauge_with_elements, invert, lie_bracket, one_parameter, p_action,
    push_forward, rectify_check, rectify_single, transformation_by_name, transformation_deviation, BracketVariant,
    GaugeAction, InfinitesimalTransformation, StochasticTransformation, TimeAction,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn sample_points(n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| halton_box(i + 3, dim, -2.0, 2.0)).collect()
}

fn off_origin(n: usize) -> Vec<Vec<f64>> {
    sample_points(n, 2).into_iter().filter(|x| numeric::norm(x) > 0.3).collect()
}

fn bent() -> StochasticTransformation {
    StochasticTransformation::new(
        "bent",
        2,
        LieGroupChart::circle(),
        |x| vec![x[0] + 0.1 * x[1] * x[1], x[1]],
        |x| vec![x[0] - 0.1 * x[1] * x[1], x[1]],
        |x| vec![0.2 * x[0] - 0.1 * x[1]],
        |x| (0.1 * x[1]).exp(),
    )
}

fn field(name: &str) -> InfinitesimalTransformation {
    match name {
        "a" => InfinitesimalTransformation::new("a", 2, LieGroupChart::circle(), |x| vec![-x[1], x[0]], |x| vec![x[0]], |_| 0.0),
        "b" => InfinitesimalTransformation::new("b", 2, LieGroupChart::circle(), |_| vec![1.0, 0.0], |x| vec![x[1] * x[1]], |x| 0.5 * x[1]),
        _ => InfinitesimalTransformation::new(
            "c",
            2,
            LieGroupChart::circle(),
            |x| vec![x[1], 0.0],
            |x| vec![1.0 + x[0]],
            |x| x[0] * x[1],
        ),
    }
}

fn triad_max(v: &InfinitesimalTransformation, x: &[f64]) -> f64 {
    numeric::max_abs(&v.y(x)).max(numeric::max_abs(&v.c(x))).max(v.tau(x).abs())
}

fn triad_diff(a: &InfinitesimalTransformation, b: &InfinitesimalTransformation, x: &[f64]) -> f64 {
    numeric::max_abs_diff(&a.y(x), &b.y(x))
        .max(numeric::max_abs_diff(&a.c(x), &b.c(x)))
        .max((a.tau(x) - b.tau(x)).abs())
}

#[test]
fn gauge_actions_satisfy_group_law_and_linearization() {
    let zs = [
        vec![1.1, 0.2, -0.3, 0.9, 0.4, -0.7],
        vec![0.8, -0.5, 0.1, 1.3, -1.0, 0.2],
    ];
    let act = GaugeAction::conjugation_affine2();
    for z in &zs {
        assert!(numeric::max_abs_diff(&act.xi(&[0.0], z), z) < 1e-15);
        for (g, h) in [(0.4, -1.3), (2.0, 2.5)] {
            let lhs = act.xi(&[wrap_angle(g + h)], z);
            let rhs = act.xi(&[g], &act.xi(&[h], z));
            assert!(numeric::max_abs_diff(&lhs, &rhs) < 1e-10);
        }
    }
    let planar = GaugeAction::planar_rotation(3).unwrap();
    for act in [&planar, &act] {
        let n = act.noise.dim();
        let id = act.noise.identity();
        for g in [0.3, -2.0] {
            let u = act.upsilon(&[g]);
            for b in 0..n {
                let h = 1e-6;
                let mut p = id.clone();
                p[b] += h;
                let mut q = id.clone();
                q[b] -= h;
                let col = numeric::scale(&numeric::sub(&act.xi(&[g], &p), &act.xi(&[g], &q)), 0.5 / h);
                for a in 0..n {
                    assert!((u[(a, b)] - col[a]).abs() < 1e-6, "{} upsilon[{a},{b}]", act.name);
                }
            }
        }
    }
}

#[test]
fn time_actions_compose_and_commute_with_rotations() {
    let gauge = GaugeAction::planar_rotation(2).unwrap();
    for t in [TimeAction::brownian(2), TimeAction::stable(2, 1.3)] {
        let z = [0.7, -1.2];
        let lhs = t.gamma(0.6 * 1.7, &z);
        let rhs = t.gamma(0.6, &t.gamma(1.7, &z));
        assert!(numeric::max_abs_diff(&lhs, &rhs) < 1e-10);
        let a = gauge.xi(&[0.9], &t.gamma(2.3, &z));
        let b = t.gamma(2.3, &gauge.xi(&[0.9], &z));
        assert!(numeric::max_abs_diff(&a, &b) < 1e-10);
    }
}

#[test]
fn constant_quarter_rotation_maps_paths_pointwise() {
    let mut rng = path_rng(11, 0);
    let z = sample_brownian(&DMatrix::identity(2, 2), 1.0, 0.01, &mut rng).unwrap();
    let gauge = GaugeAction::planar_rotation(2).unwrap();
    let gs = vec![vec![std::f64::consts::FRAC_PI_2]; z.steps()];
    let out = gauge_with_elements(&z, &gauge, &gs).unwrap();
    for (a, b) in z.values.iter().zip(&out.values) {
        assert!((b[0] + a[1]).abs() < 1e-12 && (b[1] - a[0]).abs() < 1e-12);
    }
}

#[test]
fn composition_and_inverse_laws() {
    let pts = off_origin(40);
    let ts = [rotation_group(0.7), closed_form_rectifier(), bent()];
    for t in &ts {
        let id = StochasticTransformation::identity(2, LieGroupChart::circle());
        let d1 = transformation_deviation(&compose(t, &invert(t)).unwrap(), &id, &pts);
        let d2 = transformation_deviation(&compose(&invert(t), t).unwrap(), &id, &pts);
        assert!(d1 < 1e-12 && d2 < 1e-12, "{}: {d1} {d2}", t.name);
    }
    let trivial = LieGroupChart::additive(0);
    let shift = StochasticTransformation::strong("shift", 1, trivial.clone(), |x| vec![x[0] + 1.0], |x| vec![x[0] - 1.0]);
    let double = StochasticTransformation::strong("double", 1, trivial, |x| vec![2.0 * x[0]], |x| vec![0.5 * x[0]]);
    let c = compose(&double, &shift).unwrap();
    for x in [-1.5, 0.0, 3.25] {
        assert_eq!(c.phi(&[x]), vec![2.0 * (x + 1.0)]);
    }
}

#[test]
fn flows_match_closed_forms() {
    let zero = InfinitesimalTransformation::new("0", 2, LieGroupChart::circle(), |_| vec![0.0; 2], |_| vec![0.0], |_| 0.0);
    let (x, g, eta) = flow_of(&zero, 1.7, &[0.3, -0.2], 1e-12).unwrap();
    assert_eq!((x, g, eta), (vec![0.3, -0.2], vec![0.0], 1.0));
    let rate = InfinitesimalTransformation::new("tau", 2, LieGroupChart::circle(), |_| vec![0.0; 2], |_| vec![0.0], |_| 1.0);
    let (_, _, eta) = flow_of(&rate, 0.8, &[1.0, 1.0], 1e-12).unwrap();
    assert!((eta - 0.8f64.exp()).abs() < 1e-10);
    let v = rotation_generator();
    for a in [0.3, 0.7, 1.5, -2.0] {
        let (x, g, eta) = flow_of(&v, a, &[1.2, -0.4], 1e-12).unwrap();
        let exact = rotation_group(a);
        assert!(numeric::max_abs_diff(&x, &exact.phi(&[1.2, -0.4])) < 1e-9);
        assert!(wrap_angle(g[0] - a).abs() < 1e-9);
        assert_eq!(eta, 1.0);
    }
}

#[test]
fn flows_form_one_parameter_groups() {
    let pts = sample_points(10, 2);
    for v in [field("a"), field("b"), field("c")] {
        let (a, b) = (0.35, -0.6);
        let whole = one_parameter(&v, a + b, 1e-12);
        let parts = compose(&one_parameter(&v, a, 1e-12), &one_parameter(&v, b, 1e-12)).unwrap();
        let d = transformation_deviation(&whole, &parts, &pts);
        assert!(d < 1e-8, "{}: {d}", v.name);
    }
}

#[test]
fn push_forward_is_functorial() {
    let pts = off_origin(20);
    let (t1, t2) = (bent(), closed_form_rectifier());
    for v in [field("a"), field("b"), rotation_generator()] {
        let lhs = push_forward(&compose(&t2, &t1).unwrap(), &v).unwrap();
        let rhs = push_forward(&t2, &push_forward(&t1, &v).unwrap()).unwrap();
        for x in &pts {
            let d = triad_diff(&lhs, &rhs, x);
            assert!(d < 1e-8 * (1.0 + triad_max(&lhs, x)), "{} at {x:?}: {d}", v.name);
        }
    }
}

#[test]
fn strong_push_forward_keeps_gauge_and_time_parts() {
    let t = StochasticTransformation::strong(
        "cubic",
        2,
        LieGroupChart::circle(),
        |x| vec![x[0] + x[1].powi(3), x[1]],
        |x| vec![x[0] - x[1].powi(3), x[1]],
    );
    let v = field("c");
    let p = push_forward(&t, &v).unwrap();
    for x in sample_points(15, 2) {
        let y = t.phi_inv(&x);
        assert!((p.c(&x)[0] - v.c(&y)[0]).abs() < 1e-12);
        assert!((p.tau(&x) - v.tau(&y)).abs() < 1e-12);
    }
}

#[test]
fn rectifier_pushes_rotation_to_a_strong_symmetry() {
    let v = rotation_generator();
    let t = closed_form_rectifier();
    let p = push_forward(&t, &v).unwrap();
    let pts = off_origin(40);
    for x in &pts {
        assert!(p.c(x)[0].abs() < 1e-6, "gauge component {} at {x:?}", p.c(x)[0]);
    }
    assert!(rectify_check(&t, &[v.clone()], &pts).unwrap() < 1e-6);
    assert!(rectify_check(&rotation_group(0.4), &[v], &pts).unwrap() > 0.5);
}

#[test]
fn rectify_single_matches_closed_form_up_to_a_constant() {
    let v = rotation_generator();
    let x0 = [1.0, 0.5];
    let t = rectify_single(&v, &x0, 1e-12).unwrap();
    let cf = closed_form_rectifier();
    let offset = wrap_angle(t.b(&x0)[0] - cf.b(&x0)[0]);
    for x in [[1.2, 0.9], [0.6, 0.2], [0.9, 1.4], [1.5, -0.3]] {
        let d = wrap_angle(t.b(&x)[0] - cf.b(&x)[0] - offset);
        assert!(d.abs() < 1e-7, "{x:?}: {d}");
    }
    assert!(rectify_check(&t, &[v.clone()], &[vec![1.1, 0.7], vec![0.8, 0.1]]).unwrap() < 1e-6);
    assert!(rectify_single(&v, &[0.0, 0.0], 1e-12).is_err());
}

#[test]
fn corrected_bracket_satisfies_jacobi_and_printed_does_not() {
    let (a, b, c) = (field("a"), field("b"), field("c"));
    let jacobi = |variant| {
        let br = |p: &InfinitesimalTransformation, q: &InfinitesimalTransformation| lie_bracket(p, q, variant).unwrap();
        let terms = [br(&a, &br(&b, &c)), br(&b, &br(&c, &a)), br(&c, &br(&a, &b))];
        sample_points(12, 2).iter().fold(0.0, |m: f64, x| {
            let y: Vec<f64> = (0..2).map(|i| terms.iter().map(|t| t.y(x)[i]).sum()).collect();
            let cc: f64 = terms.iter().map(|t| t.c(x)[0]).sum();
            let tt: f64 = terms.iter().map(|t| t.tau(x)).sum();
            m.max(numeric::max_abs(&y)).max(cc.abs()).max(tt.abs())
        })
    };
    let corrected = jacobi(BracketVariant::Corrected);
    let printed = jacobi(BracketVariant::AsPrinted);
    assert!(corrected < 1e-4, "corrected Jacobi defect {corrected}");
    assert!(printed > 1e-2, "printed Jacobi defect {printed}");
}

#[test]
fn bracket_of_commuting_strong_fields_vanishes() {
    let g = LieGroupChart::circle();
    let v1 = InfinitesimalTransformation::new("d0", 2, g.clone(), |_| vec![1.0, 0.0], |_| vec![0.0], |_| 0.0);
    let v2 = InfinitesimalTransformation::new("x0 d1", 2, g, |x| vec![0.0, x[0] * 0.0 + 1.0], |_| vec![0.0], |_| 0.0);
    for variant in [BracketVariant::AsPrinted, BracketVariant::Corrected] {
        let br = lie_bracket(&v1, &v2, variant).unwrap();
        for x in sample_points(8, 2) {
            assert!(triad_max(&br, &x) < 1e-9);
        }
    }
}

fn affine_noise(seed: u64, steps: usize) -> SemimartingalePath {
    let mut rng: PathRng = path_rng(seed, 0);
    sample_discrete_iterated(&models::affine_noise_chart(), steps, |r| {
        let mut z = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        for v in z.iter_mut() {
            let e: f64 = StandardNormal.sample(r);
            *v += 0.2 * e;
        }
        z
    }, &mut rng)
    .unwrap()
}

#[test]
fn e_action_of_the_rectifier_reduces_the_noise() {
    let sde = affine_gl2_sde();
    let gauge = GaugeAction::conjugation_affine2();
    let t = closed_form_rectifier();
    let reduced = e_action(&t, &sde, &gauge, None).unwrap();
    let closed = models::reduced_sde();
    for (i, x) in off_origin(30).iter().enumerate() {
        let z = numeric::add(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &halton_box(i + 5, 6, -0.4, 0.4));
        let base = reduced.eval(x, &z);
        assert!(numeric::max_abs_diff(&base, &closed.eval(x, &z)) < 1e-12);
        for idx in [1, 3] {
            let h = 1e-3;
            let mut p = z.clone();
            p[idx] += h;
            let mut q = z.clone();
            q[idx] -= h;
            let d = numeric::max_abs_diff(&reduced.eval(x, &p), &reduced.eval(x, &q)) / (2.0 * h);
            assert!(d < 1e-8, "dependence on z[{idx}]: {d}");
        }
        let back = e_action(&t, &e_action(&invert(&t), &sde, &gauge, None).unwrap(), &gauge, None).unwrap();
        assert!(numeric::max_abs_diff(&back.eval(x, &z), &sde.eval(x, &z)) < 1e-10);
    }
}

#[test]
fn p_action_of_identity_and_strong_transformations() {
    let noise = affine_noise(3, 40);
    let sde = affine_gl2_sde();
    let x = solve_increment_map(&sde, &[0.8, -0.3], &noise).unwrap();
    let gauge = GaugeAction::conjugation_affine2();
    let id = StochasticTransformation::identity(2, LieGroupChart::circle());
    let (x1, z1) = p_action(&id, &x, &noise, &gauge, None).unwrap();
    assert_eq!(x1, x);
    assert_eq!(z1, noise);
    let (fwd, back) = (rotation_group(0.9), rotation_group(0.9));
    let rot = StochasticTransformation::strong("rot", 2, LieGroupChart::circle(), move |y| fwd.phi(y), move |y| back.phi_inv(y));
    let quarter = transformation_by_name("quarter_turn", 2, &LieGroupChart::circle(), &BTreeMap::new()).unwrap();
    for t in [rot, quarter] {
        let (x2, z2) = p_action(&t, &x, &noise, &gauge, None).unwrap();
        assert_eq!(z2, noise);
        for (a, b) in x.values.iter().zip(&x2.values) {
            assert_eq!(t.phi(a), *b);
        }
    }
}

#[test]
fn p_action_rotates_the_translation_noise_by_b() {
    let noise = affine_noise(5, 30);
    let x = solve_increment_map(&affine_gl2_sde(), &[1.0, 0.4], &noise).unwrap();
    let t = closed_form_rectifier();
    let (_, z) = p_action(&t, &x, &noise, &GaugeAction::conjugation_affine2(), None).unwrap();
    for (k, (orig, new)) in noise.jumps.iter().zip(&z.jumps).enumerate() {
        let b = numeric::rotation2(t.b(&x.values[k])[0]);
        let expect = numeric::matvec(&b, &orig.value[4..6], 2);
        assert!(numeric::max_abs_diff(&expect, &new.value[4..6]) < 1e-14);
    }
}

#[test]
fn transformation_theorem_is_bitwise_without_time_change() {
    let sde = affine_canonical(2, 2, |x| vec![1.0 + 0.1 * x[1], 0.3, -0.2 * x[0], 0.5]);
    let gauge = GaugeAction::trivial(LieGroupChart::additive(2));
    let t = transformation_by_name("quarter_turn", 2, &LieGroupChart::additive(0), &BTreeMap::new()).unwrap();
    let transformed = e_action(&t, &sde, &gauge, None).unwrap();
    let worst = ensemble(21, 20, |rng, _| {
        let z = sample_brownian(&DMatrix::identity(2, 2), 1.0, 1e-3, rng).unwrap();
        let x = solve_increment_map(&sde, &[0.5, -1.0], &z).unwrap();
        let (xp, zp) = p_action(&t, &x, &z, &gauge, None).unwrap();
        let direct = solve_increment_map(&transformed, &t.phi(&[0.5, -1.0]), &zp).unwrap();
        xp.values.iter().zip(&direct.values).fold(0.0, |m: f64, (a, b)| m.max(numeric::max_abs_diff(a, b)))
    });
    assert!(worst.iter().all(|w| *w == 0.0), "{worst:?}");
}

#[test]
fn time_change_identity_and_doubling() {
    let mut rng = path_rng(8, 0);
    let z = sample_brownian(&DMatrix::identity(2, 2), 1.0, 0.01, &mut rng).unwrap();
    let (same, _) = apply_time_change(&z, &vec![1.0; z.steps()], None).unwrap();
    assert_eq!(same.times.len(), z.times.len());
    for (a, b) in same.values.iter().zip(&z.values) {
        assert!(numeric::max_abs_diff(a, b) < 1e-12);
    }
    let (slow, tc) = apply_time_change(&z, &vec![2.0; z.steps()], None).unwrap();
    assert!((tc.horizon() - 2.0).abs() < 1e-12);
    for (s, v) in slow.times.iter().zip(&slow.values) {
        let k = (s / 2.0 / 0.01).round() as usize;
        if (s / 2.0 - z.times[k]).abs() < 1e-9 {
            assert!(numeric::max_abs_diff(v, &z.values[k]) < 1e-12);
        }
    }
}

#[test]
fn time_change_round_trip_is_within_interpolation_error() {
    let mut rng = path_rng(9, 0);
    let z = sample_brownian(&DMatrix::identity(1, 1), 1.0, 0.01, &mut rng).unwrap();
    let eta: Vec<f64> = (0..z.steps()).map(|k| 1.0 + 0.5 * (k as f64 * 0.05).sin()).collect();
    let (fwd, tc) = apply_time_change(&z, &eta, None).unwrap();
    let back_eta: Vec<f64> = fwd.times[..fwd.steps()].iter().map(|s| 1.0 / eta[tc.locate(*s).0]).collect();
    let (back, _) = apply_time_change(&fwd, &back_eta, Some(0.01)).unwrap();
    let max_inc = z.increments.iter().fold(0.0, |m: f64, c| m.max(c[0].abs()));
    let n = back.values.len().min(z.values.len());
    let err = (0..n).fold(0.0, |m: f64, k| m.max((back.values[k][0] - z.values[k][0]).abs()));
    assert!(err <= 2.0 * max_inc + 1e-12, "round trip error {err} vs step bound {max_inc}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inverse_is_two_sided(a in -3.0f64..3.0, x0 in -2.0f64..2.0, x1 in 0.3f64..2.0) {
        let t = compose(&rotation_group(a), &bent()).unwrap();
        let x = vec![x0, x1];
        let id = StochasticTransformation::identity(2, LieGroupChart::circle());
        prop_assert!(transformation_deviation(&compose(&invert(&t), &t).unwrap(), &id, &[x]) < 1e-12);
    }

    #[test]
    fn gauge_elements_act_by_group_law(g in -3.0f64..3.0, h in -3.0f64..3.0, seed in 0u64..1000) {
        let z = affine_noise(seed, 5);
        let gauge = GaugeAction::conjugation_affine2();
        let once = gauge_with_elements(&z, &gauge, &vec![vec![wrap_angle(g + h)]; 5]).unwrap();
        let inner = gauge_with_elements(&z, &gauge, &vec![vec![h]; 5]).unwrap();
        let twice = gauge_with_elements(&inner, &gauge, &vec![vec![g]; 5]).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            prop_assert!(numeric::max_abs_diff(a, b) < 1e-10);
        }
    }
}
