//! Symmetry decisions for canonical SDEs: determining equations, finite checks and fitting.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::group::LieGroupChart;
use crate::numeric::{self, halton_ball, halton_box};
use crate::sde::CanonicalSdeMap;
use crate::transform::{
    e_action, one_parameter, GaugeAction, InfinitesimalTransformation, StochasticTransformation, TimeAction,
    TransformError,
};

/// Sample points `(x, z)` for the symmetry checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryGrid {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SymmetryGrid {
    /// Tensor grid of 5 points per state axis in `[-2, 2]` times 5 noise points `exp(a)` with `|a| <= 0.5`,
    /// plus 50 quasi-random pairs. Above four state dimensions only the quasi-random part is kept.
    pub fn default_for(state_dim: usize, chart: &LieGroupChart) -> Result<Self, TransformError> {
        let axis = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let n = chart.dim();
        let noise: Vec<Vec<f64>> = (0..5).map(|i| chart.exp(&halton_ball(i + 1, n, 0.5), 1e-13)).collect::<Result<_, _>>()?;
        let mut points = Vec::new();
        if state_dim <= 4 {
            let total = 5usize.pow(state_dim as u32);
            for idx in 0..total {
                let mut rest = idx;
                let x: Vec<f64> = (0..state_dim)
                    .map(|_| {
                        let v = axis[rest % 5];
                        rest /= 5;
                        v
                    })
                    .collect();
                for z in &noise {
                    points.push((x.clone(), z.clone()));
                }
            }
        }
        for i in 0..50 {
            let x = halton_box(i + 7, state_dim, -2.0, 2.0);
            let z = chart.exp(&halton_ball(i + 11, n, 0.5), 1e-13)?;
            points.push((x, z));
        }
        Ok(Self { points })
    }

    /// Drops points where `keep` is false, e.g. the singular set of a transformation.
    pub fn filtered<F: Fn(&[f64]) -> bool>(mut self, keep: F) -> Self {
        self.points.retain(|(x, _)| keep(x));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterminingResidualReport {
    /// Per-point residual vectors; empty unless requested.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<Vec<f64>>,
    pub point_count: usize,
    /// Indices of points where the residual was not finite.
    pub flagged: Vec<usize>,
    pub sup_norm: f64,
    pub derivative_mode: DerivativeMode,
    /// Equivalence with `E_T(psi) = psi` holds only for noise with jumps of arbitrary size.
    pub assumes_unrestricted_jumps: bool,
}

impl DeterminingResidualReport {
    fn from_residuals(residuals: Vec<Vec<f64>>, mode: DerivativeMode, keep: bool) -> Self {
        let mut flagged = Vec::new();
        let mut sup: f64 = 0.0;
        for (i, r) in residuals.iter().enumerate() {
            if r.iter().all(|v| v.is_finite()) {
                sup = sup.max(numeric::max_abs(r));
            } else {
                flagged.push(i);
            }
        }
        Self {
            point_count: residuals.len(),
            residuals: if keep { residuals } else { Vec::new() },
            flagged,
            sup_norm: sup,
            derivative_mode: mode,
            assumes_unrestricted_jumps: true,
        }
    }
}

fn check_actions(sde: &CanonicalSdeMap, gauge: &GaugeAction, time: Option<&TimeAction>) -> Result<(), TransformError> {
    if gauge.noise != sde.noise_chart {
        return Err(TransformError::Config(format!("gauge `{}` does not act on {}", gauge.name, sde.noise_chart.name())));
    }
    if let Some(t) = time {
        if t.noise != sde.noise_chart {
            return Err(TransformError::Config(format!("time action `{}` does not act on {}", t.name, sde.noise_chart.name())));
        }
    }
    Ok(())
}

/// `Y(psi) - D_x psi Y - tau D_z psi H - C^l D_z psi K_l` at one point.
pub fn determining_residual_at(
    sde: &CanonicalSdeMap,
    v: &InfinitesimalTransformation,
    gauge: &GaugeAction,
    time: Option<&TimeAction>,
    x: &[f64],
    z: &[f64],
) -> Vec<f64> {
    let psi = sde.eval(x, z);
    let mut res = numeric::sub(&v.y(&psi), &sde.directional_x(x, z, &v.y(x)));
    let mut w = gauge.generator_field(&v.c(x), z);
    if let Some(t) = time {
        let tau = v.tau(x);
        if tau != 0.0 {
            w = numeric::axpy(&w, tau, &t.generator(z));
        }
    }
    if w.iter().any(|c| *c != 0.0) {
        res = numeric::sub(&res, &sde.directional_z(x, z, &w));
    }
    res
}

pub fn determining_residual(
    sde: &CanonicalSdeMap,
    v: &InfinitesimalTransformation,
    gauge: &GaugeAction,
    time: Option<&TimeAction>,
    grid: &SymmetryGrid,
    keep_points: bool,
) -> Result<DeterminingResidualReport, TransformError> {
    check_actions(sde, gauge, time)?;
    let residuals: Vec<Vec<f64>> =
        grid.points.par_iter().map(|(x, z)| determining_residual_at(sde, v, gauge, time, x, z)).collect();
    let mode = if sde.has_analytic_jacobians() { DerivativeMode::Analytic } else { DerivativeMode::FiniteDifference };
    Ok(DeterminingResidualReport::from_residuals(residuals, mode, keep_points))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteSymmetryReport {
    pub transformation: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub point_count: usize,
    pub flagged: Vec<usize>,
}

/// Default tolerance of the finite check: `1e-8` with analytic ingredients, `1e-5` otherwise.
pub fn default_finite_tolerance(analytic: bool) -> f64 {
    if analytic {
        1e-8
    } else {
        1e-5
    }
}

/// `max |E_T(psi)(x, z) - psi(x, z)|` over the grid.
pub fn finite_symmetry_check(
    sde: &CanonicalSdeMap,
    t: &StochasticTransformation,
    gauge: &GaugeAction,
    time: Option<&TimeAction>,
    grid: &SymmetryGrid,
    tolerance: f64,
) -> Result<FiniteSymmetryReport, TransformError> {
    check_actions(sde, gauge, time)?;
    let transformed = e_action(t, sde, gauge, time)?;
    let devs: Vec<f64> = grid
        .points
        .par_iter()
        .map(|(x, z)| numeric::max_abs_diff(&transformed.eval(x, z), &sde.eval(x, z)))
        .collect();
    let flagged: Vec<usize> = devs.iter().enumerate().filter(|(_, d)| !d.is_finite()).map(|(i, _)| i).collect();
    let max = devs.iter().filter(|d| d.is_finite()).fold(0.0, |m: f64, d| m.max(*d));
    Ok(FiniteSymmetryReport {
        transformation: t.name.clone(),
        max_deviation: max,
        tolerance,
        pass: max < tolerance && flagged.is_empty(),
        point_count: devs.len(),
        flagged,
    })
}

/// Central difference in `a` of `E_{T_a}(psi)` at `a = 0`, with `T_a` integrated from `V`.
pub fn infinitesimal_via_flow(
    sde: &CanonicalSdeMap,
    v: &InfinitesimalTransformation,
    gauge: &GaugeAction,
    time: Option<&TimeAction>,
    grid: &SymmetryGrid,
    a_step: f64,
    flow_tol: f64,
) -> Result<DeterminingResidualReport, TransformError> {
    check_actions(sde, gauge, time)?;
    let plus = e_action(&one_parameter(v, a_step, flow_tol), sde, gauge, time)?;
    let minus = e_action(&one_parameter(v, -a_step, flow_tol), sde, gauge, time)?;
    let residuals: Vec<Vec<f64>> = grid
        .points
        .par_iter()
        .map(|(x, z)| {
            let p = plus.eval(x, z);
            let q = minus.eval(x, z);
            p.iter().zip(&q).map(|(a, b)| (a - b) / (2.0 * a_step)).collect()
        })
        .collect();
    Ok(DeterminingResidualReport::from_residuals(residuals, DerivativeMode::FiniteDifference, false))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryFit {
    pub ansatz: Vec<String>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Unit coefficient vectors spanning the numerical null space.
    pub null_directions: Vec<Vec<f64>>,
    /// Best unit coefficient vector and its RMS residual over the grid equations.
    pub best: Vec<f64>,
    pub residual: f64,
    pub rank_deficient: bool,
    pub equations: usize,
}

/// Least squares on the determining equations over a linear ansatz `V = sum_j c_j V_j`.
///
/// The system is homogeneous, so the solution set is the null space of the residual matrix.
/// Singular values below `rank_tol * sigma_max` count as zero.
pub fn fit_symmetry(
    sde: &CanonicalSdeMap,
    ansatz: &[InfinitesimalTransformation],
    gauge: &GaugeAction,
    time: Option<&TimeAction>,
    grid: &SymmetryGrid,
    rank_tol: f64,
) -> Result<SymmetryFit, TransformError> {
    check_actions(sde, gauge, time)?;
    let p = ansatz.len();
    if p == 0 {
        return Err(TransformError::Config("empty ansatz".into()));
    }
    let rows = grid.points.len() * sde.state_dim;
    if rows < p {
        return Err(TransformError::Config(format!("{rows} equations for {p} unknowns")));
    }
    let columns: Vec<Vec<f64>> = ansatz
        .iter()
        .map(|v| {
            grid.points
                .par_iter()
                .flat_map_iter(|(x, z)| determining_residual_at(sde, v, gauge, time, x, z))
                .collect()
        })
        .collect();
    let a = DMatrix::from_fn(rows, p, |i, j| columns[j][i]);
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sigma.iter().fold(0.0, |m: f64, s| m.max(*s));
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let threshold = rank_tol * smax;
    let rank = sigma.iter().filter(|s| **s > threshold).count();
    let direction = |i: usize| -> Vec<f64> { normalize_sign(v_t.row(i).iter().copied().collect()) };
    let null_directions: Vec<Vec<f64>> = order.iter().filter(|&&i| sigma[i] <= threshold).map(|&i| direction(i)).collect();
    let smallest = *order.last().unwrap();
    let best = direction(smallest);
    let residual = (&a * DMatrix::from_column_slice(p, 1, &best)).norm() / (rows as f64).sqrt();
    let mut sorted = sigma.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(SymmetryFit {
        ansatz: ansatz.iter().map(|v| v.name.clone()).collect(),
        singular_values: sorted,
        rank,
        null_directions,
        best,
        residual,
        rank_deficient: rank < p,
        equations: rows,
    })
}

/// Scales to unit norm with the largest-magnitude entry positive.
fn normalize_sign(mut v: Vec<f64>) -> Vec<f64> {
    let n = numeric::norm(&v);
    let lead = v.iter().copied().fold(0.0, |m: f64, c| if c.abs() > m.abs() { c } else { m });
    let s = if lead < 0.0 { -1.0 / n } else { 1.0 / n };
    v.iter_mut().for_each(|c| *c *= s);
    v
}

/// Ansatz of linear fields `Y = M x` (one unknown per entry of `M`, row-major),
/// constant `C` per gauge generator and, when `with_tau`, a constant `tau`.
pub fn linear_ansatz(state_dim: usize, gauge: &LieGroupChart, with_tau: bool) -> Vec<InfinitesimalTransformation> {
    let m = state_dim;
    let r = gauge.dim();
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            out.push(InfinitesimalTransformation::new(
                format!("x{j} d{i}"),
                m,
                gauge.clone(),
                move |x| {
                    let mut y = vec![0.0; m];
                    y[i] = x[j];
                    y
                },
                move |_| vec![0.0; r],
                |_| 0.0,
            ));
        }
    }
    for l in 0..r {
        out.push(InfinitesimalTransformation::new(
            format!("C{l}"),
            m,
            gauge.clone(),
            move |_| vec![0.0; m],
            move |_| {
                let mut c = vec![0.0; r];
                c[l] = 1.0;
                c
            },
            |_| 0.0,
        ));
    }
    if with_tau {
        out.push(InfinitesimalTransformation::new("tau", m, gauge.clone(), move |_| vec![0.0; m], move |_| vec![0.0; r], |_| 1.0));
    }
    out
}

/// Constant fields `Y = e_i`, one per state axis.
pub fn translation_ansatz(state_dim: usize, gauge: &LieGroupChart) -> Vec<InfinitesimalTransformation> {
    let r = gauge.dim();
    (0..state_dim)
        .map(|i| {
            InfinitesimalTransformation::new(
                format!("d{i}"),
                state_dim,
                gauge.clone(),
                move |_| {
                    let mut y = vec![0.0; state_dim];
                    y[i] = 1.0;
                    y
                },
                move |_| vec![0.0; r],
                |_| 0.0,
            )
        })
        .collect()
}
