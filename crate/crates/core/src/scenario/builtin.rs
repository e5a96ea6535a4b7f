//! The builtin scenarios.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::Comparison::{Above, AtMost, Below};
use super::{CheckInfo, Recorder, ResolvedConfig, ScenarioError, ScenarioInfo};
use crate::characteristics::{
    compare_estimates, estimate_characteristics, law_equality_test, levy_time_check, summarize, summarize_values,
    summarize_with_cut, EstimateConfig, LawTestConfig, LevyCheckConfig, LevyCheckReport, PathSummary,
};
use crate::group::LieGroupChart;
use crate::models::{
    affine_gl2_sde, affine_noise_chart, angle_mismatch, closed_form_rectifier, dilation_field, lift_translation_noise,
    marcus_example, marcus_example_pushed, polar_reduction, reduced_sde, rotation_generator, rotation_group,
};
use crate::noise::{
    alpha_stable_triplet, ensemble, path_rng, sample_brownian, sample_discrete_iterated, sample_levy, GaussianJumps,
    LevyTriplet, PathRng, PredictableControl, SemimartingalePath,
};
use crate::numeric::{self, wrap_angle};
use crate::sde::{solve_increment_map, StatePath};
use crate::symmetry::{default_finite_tolerance, determining_residual, finite_symmetry_check, SymmetryGrid};
use crate::transform::{
    apply_gauge_to_noise, apply_time_symmetry, gauge_by_name, p_action, rectify_check, rectify_single,
    time_action_by_name, transformation_by_name,
};

macro_rules! check {
    ($name:expr, $thr:expr, $cmp:expr, $desc:expr) => {
        CheckInfo { name: $name, threshold: $thr, comparison: $cmp, description: $desc }
    };
}

const KS: CheckInfo = check!("ks_min_p", 0.01, Above, "smallest raw two-sample KS p-value over marginals and test times");
const COV: CheckInfo = check!("covariance_max_se", 5.0, Below, "largest covariance difference in standard errors");
const ADJ: CheckInfo =
    check!("law_test_adjusted_p", 0.01, Above, "smallest Bonferroni-adjusted p-value over all law tests");

pub(super) const CATALOG: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "bm_rotation_gauge",
        summary: "Planar Brownian motion rotated by a history-dependent predictable control keeps its law.",
        description: "The control angle reads the current value of the first coordinate, the second coordinate a \
                      quarter time unit in the past, and the clock. The rotated ensemble is compared with an \
                      independent Brownian ensemble at half the horizon and at the horizon.",
        seed: 20_240_601,
        step: 1e-3,
        horizon: 1.0,
        paths: 10_000,
        noise_kinds: &["brownian"],
        noise_params: &[("sigma", 1.0)],
        sdes: &[],
        transformations: &[],
        gauges: &["planar_rotation"],
        time_actions: &[],
        transformation_params: &[("angle_gain", 2.0)],
        checks: &[KS, COV, ADJ],
    },
    ScenarioInfo {
        name: "alpha_stable_time",
        summary: "Time symmetry of stable noise: rescale increments by the matching power and run a random clock.",
        description: "The time density eta = mid + half * tanh(Z^1) is predictable and bounded in [eta_lo, eta_hi]. \
                      The transformed ensemble is compared with fresh noise, jump tests only use jumps beyond the \
                      truncation image. The Levy criterion is checked on the triplet, and a mismatched scaling \
                      must be rejected. With brownian noise the scaling is sqrt(r).",
        seed: 20_240_602,
        step: 1e-3,
        horizon: 1.0,
        paths: 2_000,
        noise_kinds: &["alpha_stable", "brownian"],
        noise_params: &[("alpha", 1.5), ("eps", 0.05), ("dim", 1.0)],
        sdes: &[],
        transformations: &[],
        gauges: &[],
        time_actions: &["stable_scaling", "brownian_scaling", "linear_scaling"],
        transformation_params: &[("eta_lo", 0.5), ("eta_hi", 2.0), ("levy_samples", 100_000.0)],
        checks: &[
            KS,
            COV,
            ADJ,
            check!("levy_drift_ratio", 1.0, AtMost, "drift residual over max(1e-6, 5 SE)"),
            check!("levy_diffusion_residual", 1e-6, AtMost, "largest entry of (1/r) gamma A gamma^T - A"),
            check!("levy_jump_max_se", 5.0, Below, "largest jump-measure bin deviation in standard errors"),
            check!("wrong_scaling_max_ratio", 1.0, Above, "a mismatched time action must violate some condition"),
        ],
    },
    ScenarioInfo {
        name: "marcus_pushforward",
        summary: "A Marcus SDE mapped by a diffeomorphism solves the Marcus SDE of the pushed-forward fields.",
        description: "Fields Y1 = x0 d0 and Y2 = d1 on R^2 driven by Brownian motion plus compound Poisson jumps; \
                      Phi = (exp x0, x1). Both equations use the adaptive flow with tolerance flow_tol. The \
                      closed-form solution (x0 exp Z^1, x1 + Z^2) is an independent check of the solver.",
        seed: 20_240_603,
        step: 1e-2,
        horizon: 1.0,
        paths: 10,
        noise_kinds: &["levy"],
        noise_params: &[("sigma", 0.3), ("intensity", 2.0), ("jump_std", 0.3)],
        sdes: &["marcus_exp_fields"],
        transformations: &["exp_first"],
        gauges: &[],
        time_actions: &[],
        transformation_params: &[("x0_1", 0.2), ("x0_2", 0.0), ("flow_tol", 1e-9)],
        checks: &[
            check!("pushforward_max_deviation", 1e-7, Below, "sup over paths and times of |Phi(X) - X'|"),
            check!("closed_form_max_deviation", 1e-7, Below, "sup of |X - closed form|"),
        ],
    },
    ScenarioInfo {
        name: "nonmarkov_gauge",
        summary: "Rotations are a gauge symmetry of (G dW^1, G dW^2, W^0) with G a functional of the W^0 path.",
        description: "G = 1 + gain (sin W^0_t + cos W^0_{t-lag}) / 2. The first two coordinates are rotated by a \
                      predictable angle reading the whole noise; the result is compared with fresh noise by law \
                      tests and by estimated characteristics.",
        seed: 20_240_604,
        step: 1e-3,
        horizon: 1.0,
        paths: 4_000,
        noise_kinds: &["nonmarkov_brownian"],
        noise_params: &[("gain", 0.5), ("lag", 0.2)],
        sdes: &[],
        transformations: &[],
        gauges: &["planar_rotation"],
        time_actions: &[],
        transformation_params: &[("angle_gain", 2.0)],
        checks: &[
            KS,
            COV,
            ADJ,
            check!("characteristics_max_se", 5.0, Below, "estimated (b, A, jumps) of both ensembles in standard errors"),
            check!("diffusion_invariance_residual", 1e-12, AtMost, "|Upsilon A Upsilon^T - A| for A = diag(G^2, G^2, 1)"),
        ],
    },
    ScenarioInfo {
        name: "iterated_map",
        summary: "Iterated random affine maps as a canonical SDE driven by pure-jump noise on GL(2) x R^2.",
        description: "X_n = A_n X_{n-1} + b_n with A_n = I + sigma N, b_n = sigma N. The law of the steps is \
                      invariant under rotation conjugation, so rotating a solution gives a solution from the \
                      rotated start; this is tested against an independent ensemble.",
        seed: 20_240_605,
        step: 1.0,
        horizon: 50.0,
        paths: 2_000,
        noise_kinds: &["discrete_iterated"],
        noise_params: &[("sigma", 0.1)],
        sdes: &["affine_gl2"],
        transformations: &["rotation"],
        gauges: &["conjugation_affine2"],
        time_actions: &[],
        transformation_params: &[("angle", 0.9), ("x0_1", 1.0), ("x0_2", 0.5)],
        checks: &[
            check!("iterated_recursion_max", 1e-12, AtMost, "solver vs recursion on steps recovered from path values"),
            check!("transformation_theorem_max", 1e-10, Below, "P_T(X) vs the solution driven by the transformed noise"),
            KS,
            COV,
            ADJ,
        ],
    },
    ScenarioInfo {
        name: "affine_gl2_example",
        summary: "psi(x, z) = z1 x + z2: rotation symmetry, rectification and the polar reduction.",
        description: "Determining equations and finite symmetries on the default grid, rectification against the \
                      closed form B = -arg(x), the reduced noise and the triangular (R, Theta) recursion on \
                      reduction_paths paths, a rotation law test on law_paths paths, and the squared-Bessel mean \
                      of R when Z_(1) = I and Z_(2) is planar Brownian motion (paths, step, horizon).",
        seed: 20_240_606,
        step: 1e-3,
        horizon: 1.0,
        paths: 10_000,
        noise_kinds: &["discrete_iterated", "lifted_brownian"],
        noise_params: &[("sigma", 0.1), ("iterated_steps", 50.0), ("reduction_paths", 100.0), ("law_paths", 2_000.0)],
        sdes: &["affine_gl2"],
        transformations: &["rotation"],
        gauges: &["conjugation_affine2"],
        time_actions: &[],
        transformation_params: &[("angle", 0.7), ("x0_1", 1.0), ("x0_2", 0.5)],
        checks: &[
            check!("determining_residual_analytic", 1e-9, Below, "sup-grid residual of the rotation, analytic Jacobians"),
            check!("determining_residual_fd", 1e-5, Below, "same with finite differences"),
            check!("nonsymmetry_residual", 0.1, Above, "sup-grid residual of x0 d0"),
            check!("finite_symmetry_max", 1e-8, Below, "max |E_T(psi) - psi| for rotations by 0.3, 0.7, 1.5"),
            check!("rectify_check_residual", 1e-6, Below, "push-forward of the rotation by the closed-form rectifier"),
            check!("rectify_single_deviation", 1e-7, Below, "numerical rectifier vs closed form up to a constant"),
            check!("reduced_equation_max", 1e-10, Below, "reduced SDE on the reduced noise vs X"),
            check!("reduction_identity_max", 1e-12, AtMost, "max |R - |X|^2|"),
            check!("triangular_angle_max", 1e-8, AtMost, "Theta from (R, noise) vs arg X modulo 2 pi"),
            KS,
            COV,
            ADJ,
            check!("cir_mean_max_se", 5.0, Below, "|mean R_t - R_0 - 2t| in standard errors at half horizon and horizon"),
        ],
    },
];

pub(super) fn default_time_action(scenario: &str, noise: &str) -> Option<String> {
    match (scenario, noise) {
        ("alpha_stable_time", "brownian") => Some("brownian_scaling".into()),
        ("alpha_stable_time", _) => Some("stable_scaling".into()),
        _ => None,
    }
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::Config(msg()))
    }
}

fn whole(v: f64) -> bool {
    v >= 1.0 && v.fract() == 0.0
}

pub(super) fn validate(c: &ResolvedConfig) -> Result<(), ScenarioError> {
    let p = |k: &str| c.noise_params.get(k).copied().unwrap_or(f64::NAN);
    let t = |k: &str| c.transformation_params.get(k).copied().unwrap_or(f64::NAN);
    let law_scenario = c.info().checks.iter().any(|k| k.name == "ks_min_p");
    if law_scenario && (c.wants("ks_min_p") || c.wants("covariance_max_se") || c.wants("law_test_adjusted_p")) {
        require(c.paths >= 2, || "law tests need at least 2 paths".into())?;
    }
    match c.scenario.as_str() {
        "bm_rotation_gauge" => require(p("sigma") > 0.0, || "sigma must be positive".into()),
        "alpha_stable_time" => {
            require(p("alpha") > 0.0 && p("alpha") < 2.0, || "alpha must lie in (0, 2)".into())?;
            require(p("eps") > 0.0, || "eps must be positive".into())?;
            require(whole(p("dim")) && p("dim") <= 3.0, || "dim must be 1, 2 or 3".into())?;
            require(t("eta_lo") > 0.0 && t("eta_lo") <= t("eta_hi"), || "need 0 < eta_lo <= eta_hi".into())?;
            require(whole(t("levy_samples")), || "levy_samples must be a positive integer".into())
        }
        "marcus_pushforward" => {
            require(p("sigma") >= 0.0 && p("intensity") >= 0.0 && p("jump_std") > 0.0, || {
                "sigma and intensity must be non-negative, jump_std positive".into()
            })?;
            require(t("flow_tol") > 0.0, || "flow_tol must be positive".into())
        }
        "nonmarkov_gauge" => {
            require(p("gain") >= 0.0 && p("gain") < 1.0, || "gain must lie in [0, 1) to keep G positive".into())?;
            require(p("lag") >= 0.0, || "lag must be non-negative".into())
        }
        "iterated_map" => {
            require(c.step == 1.0 && whole(c.horizon), || "iterated noise runs at integer times: step = 1, integer horizon".into())?;
            require(p("sigma") > 0.0 && p("sigma") < 0.5, || "sigma must lie in (0, 0.5)".into())
        }
        "affine_gl2_example" => {
            require(p("sigma") > 0.0 && p("sigma") < 0.5, || "sigma must lie in (0, 0.5)".into())?;
            for k in ["iterated_steps", "reduction_paths", "law_paths"] {
                require(whole(p(k)), || format!("{k} must be a positive integer"))?;
            }
            require(t("x0_1") != 0.0 || t("x0_2") != 0.0, || "the rectifier is singular at the origin".into())
        }
        _ => Ok(()),
    }
}

pub(super) fn run(rec: &mut Recorder<'_>) -> Result<(), ScenarioError> {
    match rec.config.scenario.as_str() {
        "bm_rotation_gauge" => bm_rotation_gauge(rec),
        "alpha_stable_time" => alpha_stable_time(rec),
        "marcus_pushforward" => marcus_pushforward(rec),
        "nonmarkov_gauge" => nonmarkov_gauge(rec),
        "iterated_map" => iterated_map(rec),
        "affine_gl2_example" => affine_gl2_example(rec),
        other => Err(ScenarioError::Config(format!("no runner for `{other}`"))),
    }
}

type Res<T> = Result<T, ScenarioError>;

fn collect<T>(v: Vec<Res<T>>) -> Res<Vec<T>> {
    v.into_iter().collect()
}

fn test_times(horizon: f64) -> Vec<f64> {
    vec![0.5 * horizon, horizon]
}

const LAW_CHECKS: [&str; 3] = ["ks_min_p", "covariance_max_se", "law_test_adjusted_p"];

fn law_checks(rec: &mut Recorder<'_>, a: &[PathSummary], b: &[PathSummary], times: &[f64]) -> Res<()> {
    let cfg = LawTestConfig {
        p_floor: rec.config.threshold("law_test_adjusted_p"),
        se_multiple: rec.config.threshold("covariance_max_se"),
        ..Default::default()
    };
    let r = law_equality_test(a, b, times, &cfg)?;
    rec.check("ks_min_p", r.min_ks_p);
    rec.check("covariance_max_se", r.covariance_deviation_se.iter().copied().fold(0.0, f64::max));
    let adj = r.ks.iter().map(|k| k.adjusted_p).chain(r.chi_square.iter().map(|c| c.adjusted_p)).fold(1.0, f64::min);
    rec.check("law_test_adjusted_p", adj);
    rec.json("law_test", &r);
    Ok(())
}

fn noise_csv(rec: &mut Recorder<'_>, label: &str, i: usize, p: &SemimartingalePath) {
    rec.csv(format!("{label}_{i:03}.csv"), p.to_csv());
}

fn state_csv(rec: &mut Recorder<'_>, label: &str, i: usize, p: &StatePath) {
    rec.csv(format!("{label}_{i:03}.csv"), p.to_csv());
}

/// Angle reading the present of coordinate 0, coordinate `lagged` a quarter unit back, and the clock.
fn history_rotation(gain: f64, lagged: usize) -> PredictableControl<Vec<f64>> {
    PredictableControl::new("history_rotation", None, move |h| {
        let t = h.now();
        let lag = h.times.partition_point(|s| *s <= t - 0.25 + 1e-12).saturating_sub(1);
        vec![gain * h.last()[0] + 3.0 * h.values[lag][lagged] + (5.0 * t).sin()]
    })
}

fn bm_rotation_gauge(rec: &mut Recorder<'_>) -> Res<()> {
    let c = rec.config;
    let sigma = c.noise_param("sigma");
    let cov = DMatrix::identity(2, 2) * (sigma * sigma);
    let gauge = gauge_by_name(c.gauge.as_deref().unwrap_or("planar_rotation"), &LieGroupChart::additive(2))?;
    let control = history_rotation(c.transformation_param("angle_gain"), 1);
    let times = test_times(c.horizon);
    let (sg, sr) = (rec.seed("gauged"), rec.seed("reference"));
    let gauged = |rng: &mut PathRng| -> Res<(SemimartingalePath, SemimartingalePath)> {
        let p = sample_brownian(&cov, c.horizon, c.step, rng)?;
        let g = apply_gauge_to_noise(&p, &gauge, &control)?;
        Ok((p, g))
    };
    if rec.any(&LAW_CHECKS) {
        let a = collect(ensemble(sg, c.paths, |rng, _| Ok(summarize(&gauged(rng)?.1, &times)?)))?;
        let b = collect(ensemble(sr, c.paths, |rng, _| Ok(summarize(&sample_brownian(&cov, c.horizon, c.step, rng)?, &times)?)))?;
        law_checks(rec, &a, &b, &times)?;
    }
    for i in 0..c.csv_paths.min(c.paths) {
        let (p, g) = gauged(&mut path_rng(sg, i as u64))?;
        noise_csv(rec, "noise", i, &p);
        noise_csv(rec, "gauged_noise", i, &g);
    }
    Ok(())
}

fn levy_ratio(report: &LevyCheckReport, condition: &str) -> f64 {
    report
        .results
        .iter()
        .filter(|r| r.condition == condition)
        .map(|r| if r.threshold > 0.0 { r.residual / r.threshold } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

fn levy_residual(report: &LevyCheckReport, condition: &str) -> f64 {
    report.results.iter().filter(|r| r.condition == condition).map(|r| r.residual).fold(0.0, f64::max)
}

fn alpha_stable_time(rec: &mut Recorder<'_>) -> Res<()> {
    let c = rec.config;
    let dim = c.noise_param("dim") as usize;
    let alpha = c.noise_param("alpha");
    let stable = c.noise == "alpha_stable";
    let triplet = if stable {
        alpha_stable_triplet(alpha, dim, c.noise_param("eps"))?
    } else {
        LevyTriplet::brownian(dim, DMatrix::identity(dim, dim))?
    };
    let action_name = c.time_action.clone().unwrap_or_else(|| "stable_scaling".into());
    let action = time_action_by_name(&action_name, dim, Some(alpha))?;
    let (lo, hi) = (c.transformation_param("eta_lo"), c.transformation_param("eta_hi"));
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let eta = PredictableControl::time_density("eta", lo, hi, move |h| mid + half * h.last()[0].tanh())?;
    let source_horizon = c.horizon / lo;
    let times = test_times(c.horizon);
    // Beyond this radius the truncated measure and its images under every Gamma_r with r in [lo, hi] agree.
    let cut = if stable { c.noise_param("eps") * hi.powf(1.0 / alpha).max(1.0) } else { 0.0 };
    let (st, sr) = (rec.seed("time_changed"), rec.seed("reference"));
    let changed = |rng: &mut PathRng| -> Res<(SemimartingalePath, SemimartingalePath)> {
        let p = sample_levy(&triplet, source_horizon, c.step, rng)?;
        let (z, _) = apply_time_symmetry(&p, &action, &eta, Some(c.step))?;
        Ok((p, z))
    };
    if rec.any(&LAW_CHECKS) {
        let a = collect(ensemble(st, c.paths, |rng, _| Ok(summarize_with_cut(&changed(rng)?.1, &times, cut)?)))?;
        let b = collect(ensemble(sr, c.paths, |rng, _| {
            Ok(summarize_with_cut(&sample_levy(&triplet, c.horizon, c.step, rng)?, &times, cut)?)
        }))?;
        law_checks(rec, &a, &b, &times)?;
    }
    let levy_cfg = LevyCheckConfig {
        samples: c.transformation_param("levy_samples") as usize,
        seed: rec.seed("levy_check"),
        se_multiple: c.threshold("levy_jump_max_se"),
        residual_tol: c.threshold("levy_diffusion_residual"),
        ..Default::default()
    };
    let rs = [0.5, 2.0];
    if rec.any(&["levy_drift_ratio", "levy_diffusion_residual", "levy_jump_max_se"]) {
        let report = levy_time_check(&triplet, &action, &rs, &levy_cfg)?;
        rec.check("levy_drift_ratio", levy_ratio(&report, "drift"));
        rec.check("levy_diffusion_residual", levy_residual(&report, "diffusion"));
        rec.check("levy_jump_max_se", levy_residual(&report, "jump_measure"));
        rec.json("levy_time_check", &report);
    }
    if rec.any(&["wrong_scaling_max_ratio"]) {
        let wrong = if action_name == "linear_scaling" || !stable { "linear_scaling" } else { "brownian_scaling" };
        let wrong = if wrong == action_name { "brownian_scaling" } else { wrong };
        let report = levy_time_check(&triplet, &time_action_by_name(wrong, dim, Some(alpha))?, &rs, &levy_cfg)?;
        let worst = ["drift", "diffusion", "jump_measure"].iter().map(|k| levy_ratio(&report, k)).fold(0.0, f64::max);
        rec.check("wrong_scaling_max_ratio", worst);
        rec.json("wrong_scaling_check", &report);
    }
    for i in 0..c.csv_paths.min(c.paths) {
        let (p, z) = changed(&mut path_rng(st, i as u64))?;
        noise_csv(rec, "noise", i, &p);
        noise_csv(rec, "time_changed_noise", i, &z);
    }
    Ok(())
}

fn marcus_pushforward(rec: &mut Recorder<'_>) -> Res<()> {
    let c = rec.config;
    let (sigma, lambda, jstd) = (c.noise_param("sigma"), c.noise_param("intensity"), c.noise_param("jump_std"));
    let triplet = LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![0.0, 0.0],
        DMatrix::identity(2, 2) * (sigma * sigma),
        lambda,
        Some(Arc::new(GaussianJumps::isotropic(2, jstd))),
    )?;
    let tol = c.transformation_param("flow_tol");
    let sde = marcus_example(tol).to_canonical();
    let pushed = marcus_example_pushed(tol).to_canonical();
    let phi = transformation_by_name(c.transformation.as_deref().unwrap_or("exp_first"), 2, &LieGroupChart::additive(0), &BTreeMap::new())?;
    let x0 = [c.transformation_param("x0_1"), c.transformation_param("x0_2")];
    let seed = rec.seed("noise");
    type Run = (SemimartingalePath, StatePath, StatePath, f64, f64);
    let runs: Vec<Run> = collect(ensemble(seed, c.paths, |rng, _| -> Res<Run> {
        let z = sample_levy(&triplet, c.horizon, c.step, rng)?;
        let x = solve_increment_map(&sde, &x0, &z)?;
        let y = solve_increment_map(&pushed, &phi.phi(&x0), &z)?;
        let mut push_dev: f64 = 0.0;
        for (a, b) in x.values.iter().zip(&y.values) {
            push_dev = push_dev.max(numeric::max_abs_diff(&phi.phi(a), b));
        }
        for (a, b) in x.jumps.iter().zip(&y.jumps) {
            push_dev = push_dev.max(numeric::max_abs_diff(&phi.phi(&a.after), &b.after));
        }
        let closed = x.values.iter().zip(&z.values).fold(0.0_f64, |m, (xv, zv)| {
            m.max(numeric::max_abs_diff(xv, &[x0[0] * zv[0].exp(), x0[1] + zv[1]]))
        });
        Ok((z, x, y, push_dev, closed))
    }))?;
    rec.check("pushforward_max_deviation", runs.iter().map(|r| r.3).fold(0.0, f64::max));
    rec.check("closed_form_max_deviation", runs.iter().map(|r| r.4).fold(0.0, f64::max));
    let per_path: Vec<[f64; 2]> = runs.iter().map(|r| [r.3, r.4]).collect();
    rec.json("marcus_deviations", &per_path);
    for (i, (z, x, y, ..)) in runs.iter().enumerate().take(c.csv_paths) {
        noise_csv(rec, "noise", i, z);
        state_csv(rec, "state", i, x);
        state_csv(rec, "pushed_state", i, y);
    }
    Ok(())
}

/// `(G dW^1, G dW^2, W^0)` with `G` read from the `W^0` path up to the left end of each step.
fn sample_nonmarkov(gain: f64, lag: f64, horizon: f64, step: f64, rng: &mut PathRng) -> Res<SemimartingalePath> {
    let w = sample_brownian(&DMatrix::identity(3, 3), horizon, step, rng)?;
    let incs: Vec<Vec<f64>> = (0..w.steps())
        .map(|k| {
            let t = w.times[k];
            let back = w.times.partition_point(|s| *s <= t - lag + 1e-12).saturating_sub(1);
            let g = 1.0 + 0.5 * gain * (w.values[k][2].sin() + w.values[back][2].cos());
            let d = &w.increments[k];
            vec![g * d[0], g * d[1], d[2]]
        })
        .collect();
    Ok(SemimartingalePath::from_increments(LieGroupChart::additive(3), w.times.clone(), vec![0.0; 3], incs, vec![])?)
}

fn nonmarkov_gauge(rec: &mut Recorder<'_>) -> Res<()> {
    let c = rec.config;
    let (gain, lag) = (c.noise_param("gain"), c.noise_param("lag"));
    let gauge = gauge_by_name(c.gauge.as_deref().unwrap_or("planar_rotation"), &LieGroupChart::additive(3))?;
    let control = history_rotation(c.transformation_param("angle_gain"), 2);
    let times = test_times(c.horizon);
    let (sg, sr) = (rec.seed("gauged"), rec.seed("reference"));
    let gauged = |rng: &mut PathRng| -> Res<(SemimartingalePath, SemimartingalePath)> {
        let p = sample_nonmarkov(gain, lag, c.horizon, c.step, rng)?;
        let g = apply_gauge_to_noise(&p, &gauge, &control)?;
        Ok((p, g))
    };
    let fresh = |rng: &mut PathRng| sample_nonmarkov(gain, lag, c.horizon, c.step, rng);
    if rec.any(&LAW_CHECKS) {
        let a = collect(ensemble(sg, c.paths, |rng, _| Ok(summarize(&gauged(rng)?.1, &times)?)))?;
        let b = collect(ensemble(sr, c.paths, |rng, _| Ok(summarize(&fresh(rng)?, &times)?)))?;
        law_checks(rec, &a, &b, &times)?;
    }
    if rec.any(&["characteristics_max_se"]) {
        let cfg = EstimateConfig { report_times: times.clone(), ..Default::default() };
        let ea = estimate_characteristics(sg, c.paths, &cfg, |rng, _| {
            gauged(rng).map(|r| r.1).map_err(|e| crate::characteristics::CharError::Config(e.to_string()))
        })?;
        let eb = estimate_characteristics(sr, c.paths, &cfg, |rng, _| {
            fresh(rng).map_err(|e| crate::characteristics::CharError::Config(e.to_string()))
        })?;
        rec.check("characteristics_max_se", compare_estimates(&ea, &eb)?);
        rec.json("characteristics_gauged", &ea);
        rec.json("characteristics_reference", &eb);
    }
    if rec.any(&["diffusion_invariance_residual"]) {
        let mut worst: f64 = 0.0;
        for g in [0.6, 1.0, 1.4] {
            let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![g * g, g * g, 1.0]));
            for angle in [0.3, 1.2, 2.5] {
                let u = gauge.upsilon(&[angle]);
                worst = worst.max((&u * &a * u.transpose() - &a).abs().max());
            }
        }
        rec.check("diffusion_invariance_residual", worst);
    }
    for i in 0..c.csv_paths.min(c.paths) {
        let (p, g) = gauged(&mut path_rng(sg, i as u64))?;
        noise_csv(rec, "noise", i, &p);
        noise_csv(rec, "gauged_noise", i, &g);
    }
    Ok(())
}

fn affine_step_law(sigma: f64) -> impl Fn(&mut PathRng) -> Vec<f64> + Sync {
    move |rng: &mut PathRng| {
        use rand_distr::{Distribution, StandardNormal};
        let mut v: Vec<f64> = (0..6).map(|_| { let n: f64 = StandardNormal.sample(rng); sigma * n }).collect();
        v[0] += 1.0;
        v[3] += 1.0;
        v
    }
}

/// Recomputes the solution from steps recovered as `Z_n Z_{n-1}^{-1}` and returns the largest deviation.
fn recursion_deviation(noise: &SemimartingalePath, x: &StatePath) -> Res<f64> {
    let sde = affine_gl2_sde();
    let mut y = x.values[0].clone();
    let mut worst: f64 = 0.0;
    for n in 1..noise.values.len() {
        let step = noise.chart.jump_of(&noise.values[n - 1], &noise.values[n]).map_err(crate::noise::NoiseError::from)?;
        y = sde.eval(&y, &step);
        worst = worst.max(numeric::max_abs_diff(&y, &x.values[n]));
    }
    Ok(worst)
}

fn iterated_map(rec: &mut Recorder<'_>) -> Res<()> {
    let c = rec.config;
    let chart = affine_noise_chart();
    let steps = c.horizon as usize;
    let law = affine_step_law(c.noise_param("sigma"));
    let sde = affine_gl2_sde();
    let gauge = gauge_by_name(c.gauge.as_deref().unwrap_or("conjugation_affine2"), &chart)?;
    let t = transformation_by_name(c.transformation.as_deref().unwrap_or("rotation"), 2, &LieGroupChart::circle(), &c.transformation_params)?;
    let x0 = [c.transformation_param("x0_1"), c.transformation_param("x0_2")];
    let y0 = t.phi(&x0);
    let times = test_times(c.horizon);
    let (so, sr) = (rec.seed("original"), rec.seed("reference"));
    type Run = (SemimartingalePath, StatePath, StatePath, f64, f64);
    let one = |rng: &mut PathRng| -> Res<Run> {
        let z = sample_discrete_iterated(&chart, steps, &law, rng)?;
        let x = solve_increment_map(&sde, &x0, &z)?;
        let rec_dev = recursion_deviation(&z, &x)?;
        let (xt, zt) = p_action(&t, &x, &z, &gauge, None)?;
        let direct = solve_increment_map(&sde, &y0, &zt)?;
        let thm = xt.values.iter().zip(&direct.values).fold(0.0_f64, |m, (a, b)| m.max(numeric::max_abs_diff(a, b)));
        Ok((z, x, xt, rec_dev, thm))
    };
    let runs = collect(ensemble(so, c.paths, |rng, _| {
        one(rng).map(|(_, x, xt, r, t)| (summarize_values(&x.times, &xt.values, &times), r, t))
    }))?;
    rec.check("iterated_recursion_max", runs.iter().map(|r| r.1).fold(0.0, f64::max));
    rec.check("transformation_theorem_max", runs.iter().map(|r| r.2).fold(0.0, f64::max));
    if rec.any(&LAW_CHECKS) {
        let a: Vec<PathSummary> = runs.into_iter().map(|r| r.0).collect();
        let b = collect(ensemble(sr, c.paths, |rng, _| {
            let z = sample_discrete_iterated(&chart, steps, &law, rng)?;
            let x = solve_increment_map(&sde, &y0, &z)?;
            Ok(summarize_values(&x.times, &x.values, &times))
        }))?;
        law_checks(rec, &a, &b, &times)?;
    }
    for i in 0..c.csv_paths.min(c.paths) {
        let (z, x, xt, ..) = one(&mut path_rng(so, i as u64))?;
        noise_csv(rec, "noise", i, &z);
        state_csv(rec, "state", i, &x);
        state_csv(rec, "rotated_state", i, &xt);
    }
    Ok(())
}

fn affine_gl2_example(rec: &mut Recorder<'_>) -> Res<()> {
    let c = rec.config;
    let chart = affine_noise_chart();
    let sde = affine_gl2_sde();
    let gauge = gauge_by_name(c.gauge.as_deref().unwrap_or("conjugation_affine2"), &chart)?;
    let grid = SymmetryGrid::default_for(2, &chart).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let v = rotation_generator();
    if rec.any(&["determining_residual_analytic", "determining_residual_fd", "nonsymmetry_residual"]) {
        let analytic = determining_residual(&sde, &v, &gauge, None, &grid, false)?;
        let fd = determining_residual(&sde.clone().without_jacobians(), &v, &gauge, None, &grid, false)?;
        let bad = determining_residual(&sde, &dilation_field(), &gauge, None, &grid, false)?;
        rec.check("determining_residual_analytic", analytic.sup_norm);
        rec.check("determining_residual_fd", fd.sup_norm);
        rec.check("nonsymmetry_residual", bad.sup_norm);
        rec.json("determining_residuals", &[analytic, fd, bad]);
    }
    if rec.any(&["finite_symmetry_max"]) {
        let reports = [0.3, 0.7, 1.5]
            .iter()
            .map(|a| finite_symmetry_check(&sde, &rotation_group(*a), &gauge, None, &grid, default_finite_tolerance(true)))
            .collect::<Result<Vec<_>, _>>()?;
        rec.check("finite_symmetry_max", reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max));
        rec.json("finite_symmetry", &reports);
    }
    let x0 = [c.transformation_param("x0_1"), c.transformation_param("x0_2")];
    if rec.any(&["rectify_check_residual", "rectify_single_deviation"]) {
        let pts: Vec<Vec<f64>> = grid.points.iter().map(|(x, _)| x.clone()).filter(|x| numeric::norm(x) > 0.3).collect();
        rec.check("rectify_check_residual", rectify_check(&closed_form_rectifier(), std::slice::from_ref(&v), &pts)?);
        let num = rectify_single(&v, &x0, 1e-12)?;
        let cf = closed_form_rectifier();
        let offset = wrap_angle(num.b(&x0)[0] - cf.b(&x0)[0]);
        let r0 = numeric::norm(&x0);
        // A flow box around x0: points at comparable radius and nearby angle.
        let near: Vec<Vec<f64>> = (0..16)
            .map(|i| {
                let th = x0[1].atan2(x0[0]) + 0.6 * (i as f64 / 15.0 - 0.5);
                let r = r0 * (0.8 + 0.4 * ((i * 7) % 16) as f64 / 15.0);
                vec![r * th.cos(), r * th.sin()]
            })
            .collect();
        let dev = near.iter().fold(0.0_f64, |m, x| m.max(wrap_angle(num.b(x)[0] - cf.b(x)[0] - offset).abs()));
        rec.check("rectify_single_deviation", dev);
    }
    let sigma = c.noise_param("sigma");
    let law = affine_step_law(sigma);
    let iter_steps = c.noise_param("iterated_steps") as usize;
    let lifted = c.noise == "lifted_brownian";
    let sample_noise = |rng: &mut PathRng| -> Res<SemimartingalePath> {
        if lifted {
            let w = sample_brownian(&DMatrix::identity(2, 2), c.horizon, c.step, rng)?;
            Ok(lift_translation_noise(&w)?)
        } else {
            Ok(sample_discrete_iterated(&chart, iter_steps, &law, rng)?)
        }
    };
    let rectifier = closed_form_rectifier();
    let reduced = reduced_sde();
    let reduce = |z: &SemimartingalePath| -> Res<(StatePath, SemimartingalePath)> {
        let x = solve_increment_map(&sde, &x0, z)?;
        let (_, zr) = p_action(&rectifier, &x, z, &gauge, None)?;
        Ok((x, zr))
    };
    let sr = rec.seed("reduction");
    if rec.any(&["reduced_equation_max", "reduction_identity_max", "triangular_angle_max"]) {
        let n = c.noise_param("reduction_paths") as usize;
        let stats = collect(ensemble(sr, n, |rng, _| -> Res<[f64; 3]> {
            let z = sample_noise(rng)?;
            let (x, zr) = reduce(&z)?;
            let xr = solve_increment_map(&reduced, &x0, &zr)?;
            let eq = x.values.iter().zip(&xr.values).fold(0.0_f64, |m, (a, b)| m.max(numeric::max_abs_diff(a, b)));
            let polar = polar_reduction(&x0, &zr);
            let ident = polar.radius.iter().zip(&x.values).fold(0.0_f64, |m, (r, p)| m.max((r - (p[0] * p[0] + p[1] * p[1])).abs()));
            Ok([eq, ident, angle_mismatch(&polar, &x.values)])
        }))?;
        let worst = |i: usize| stats.iter().map(|s| s[i]).fold(0.0, f64::max);
        rec.check("reduced_equation_max", worst(0));
        rec.check("reduction_identity_max", worst(1));
        rec.check("triangular_angle_max", worst(2));
    }
    if rec.any(&LAW_CHECKS) {
        let t = transformation_by_name(c.transformation.as_deref().unwrap_or("rotation"), 2, &LieGroupChart::circle(), &c.transformation_params)?;
        let y0 = t.phi(&x0);
        let n = c.noise_param("law_paths") as usize;
        let horizon = if lifted { c.horizon } else { iter_steps as f64 };
        let times = test_times(horizon);
        let (so, sf) = (rec.seed("law_original"), rec.seed("law_reference"));
        let a = collect(ensemble(so, n, |rng, _| {
            let z = sample_noise(rng)?;
            let x = solve_increment_map(&sde, &x0, &z)?;
            let (xt, _) = p_action(&t, &x, &z, &gauge, None)?;
            Ok(summarize_values(&xt.times, &xt.values, &times))
        }))?;
        let b = collect(ensemble(sf, n, |rng, _| {
            let x = solve_increment_map(&sde, &y0, &sample_noise(rng)?)?;
            Ok(summarize_values(&x.times, &x.values, &times))
        }))?;
        law_checks(rec, &a, &b, &times)?;
    }
    if rec.any(&["cir_mean_max_se"]) {
        let sc = rec.seed("bessel");
        let times = test_times(c.horizon);
        let r0 = x0[0] * x0[0] + x0[1] * x0[1];
        let samples = collect(ensemble(sc, c.paths, |rng, _| -> Res<Vec<f64>> {
            let w = sample_brownian(&DMatrix::identity(2, 2), c.horizon, c.step, rng)?;
            let z = lift_translation_noise(&w)?;
            let (_, zr) = reduce(&z)?;
            let polar = polar_reduction(&x0, &zr);
            Ok(times.iter().map(|t| polar.radius[zr.index_at(*t)]).collect())
        }))?;
        let mut worst: f64 = 0.0;
        let mut rows = Vec::new();
        for (j, t) in times.iter().enumerate() {
            let v: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let se = (var / n).sqrt();
            let dev = (mean - r0 - 2.0 * t).abs() / se;
            worst = worst.max(dev);
            rows.push(serde_json::json!({"time": t, "mean": mean, "se": se, "expected": r0 + 2.0 * t, "deviation_se": dev}));
        }
        rec.check("cir_mean_max_se", worst);
        rec.json("bessel_mean", &rows);
    }
    for i in 0..c.csv_paths.min(c.noise_param("reduction_paths") as usize) {
        let z = sample_noise(&mut path_rng(sr, i as u64))?;
        let (x, zr) = reduce(&z)?;
        noise_csv(rec, "noise", i, &z);
        noise_csv(rec, "reduced_noise", i, &zr);
        state_csv(rec, "state", i, &x);
    }
    Ok(())
}
