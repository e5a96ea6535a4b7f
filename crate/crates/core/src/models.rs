//! The affine SDE on `GL(2) x R^2` noise, its rotation symmetry and the polar reduction,
//! plus the Marcus example used for push-forwards.
//!
//! Matrix noise `z1` is stored row-major, so `z = (z11, z12, z21, z22, z2_1, z2_2)`.

use crate::group::LieGroupChart;
use crate::noise::{JumpMark, SemimartingalePath};
use crate::numeric::{self, rotation2, wrap_angle};
use std::sync::Arc;

use crate::sde::{CanonicalSdeMap, MarcusSde, StateFn};
use crate::transform::{InfinitesimalTransformation, StochasticTransformation, TransformError};

/// `R = [[0, -1], [1, 0]]`.
pub const GENERATOR: [f64; 4] = [0.0, -1.0, 1.0, 0.0];

pub fn affine_noise_chart() -> LieGroupChart {
    LieGroupChart::affine_product(2, 2)
}

/// `psi(x, z) = z1 x + z2` with analytic Jacobians.
pub fn affine_gl2_sde() -> CanonicalSdeMap {
    CanonicalSdeMap::new("affine_gl2", 2, affine_noise_chart(), |x, z| {
        vec![z[0] * x[0] + z[1] * x[1] + z[4], z[2] * x[0] + z[3] * x[1] + z[5]]
    })
    .with_jacobians(
        |_, z| z[..4].to_vec(),
        |x, _| {
            let mut j = vec![0.0; 12];
            for i in 0..2 {
                j[i * 6 + 2 * i] = x[0];
                j[i * 6 + 2 * i + 1] = x[1];
                j[i * 6 + 4 + i] = 1.0;
            }
            j
        },
    )
}

/// `V = (R x, 1, 0)`.
pub fn rotation_generator() -> InfinitesimalTransformation {
    InfinitesimalTransformation::new(
        "rotation",
        2,
        LieGroupChart::circle(),
        |x| numeric::matvec(&GENERATOR, x, 2),
        |_| vec![1.0],
        |_| 0.0,
    )
}

/// `V' = (x1 d_1, 0, 0)`, not a symmetry.
pub fn dilation_field() -> InfinitesimalTransformation {
    InfinitesimalTransformation::new("dilation_x1", 2, LieGroupChart::circle(), |x| vec![x[0], 0.0], |_| vec![0.0], |_| 0.0)
}

/// Closed form of the one-parameter group generated by [`rotation_generator`].
pub fn rotation_group(a: f64) -> StochasticTransformation {
    let rot = move |x: &[f64], s: f64| numeric::matvec(&rotation2(s), x, 2);
    StochasticTransformation::new(
        format!("rotation({a})"),
        2,
        LieGroupChart::circle(),
        move |x| rot(x, a),
        move |x| rot(x, -a),
        move |_| vec![a],
        |_| 1.0,
    )
}

/// `T = (id, B(x), 1)` with `B(x)` the rotation taking `x` to the positive first axis.
pub fn closed_form_rectifier() -> StochasticTransformation {
    StochasticTransformation::new(
        "polar_rectifier",
        2,
        LieGroupChart::circle(),
        |x| x.to_vec(),
        |x| x.to_vec(),
        |x| vec![-x[1].atan2(x[0])],
        |_| 1.0,
    )
}

/// The reduced map `E_T(psi)` written out: `[[x1, -x2], [x2, x1]] z1 e_1 + B(x)^T z2`.
pub fn reduced_sde() -> CanonicalSdeMap {
    CanonicalSdeMap::new("affine_gl2_reduced", 2, affine_noise_chart(), |x, z| {
        let r = numeric::norm(x);
        let (c, s) = (x[0] / r, x[1] / r);
        vec![
            x[0] * z[0] - x[1] * z[2] + c * z[4] - s * z[5],
            x[1] * z[0] + x[0] * z[2] + s * z[4] + c * z[5],
        ]
    })
}

/// `R' = (sqrt(R) z11 + z2_1)^2 + (sqrt(R) z21 + z2_2)^2` on a reduced-noise increment.
pub fn radius_step(r: f64, z: &[f64]) -> f64 {
    let (u, v) = reduced_point(r, z);
    u * u + v * v
}

/// `Theta' = Theta + arg(sqrt(R) z11 + z2_1, sqrt(R) z21 + z2_2)`.
pub fn angle_step(r: f64, theta: f64, z: &[f64]) -> f64 {
    let (u, v) = reduced_point(r, z);
    theta + v.atan2(u)
}

fn reduced_point(r: f64, z: &[f64]) -> (f64, f64) {
    let s = r.sqrt();
    (s * z[0] + z[4], s * z[2] + z[5])
}

/// `(R, Theta)` along a path driven by the reduced noise, with `Theta` unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPath {
    pub radius: Vec<f64>,
    pub angle: Vec<f64>,
}

/// Runs the triangular polar recursion on every group increment of `reduced_noise`.
///
/// `R` uses only its own past and the noise; `Theta` is then a running sum.
pub fn polar_reduction(x0: &[f64], reduced_noise: &SemimartingalePath) -> PolarPath {
    let mut r = x0[0] * x0[0] + x0[1] * x0[1];
    let mut theta = x0[1].atan2(x0[0]);
    let mut radius = vec![r];
    let mut angle = vec![theta];
    for k in 0..reduced_noise.steps() {
        let mut step = |z: &[f64]| {
            theta = angle_step(r, theta, z);
            r = radius_step(r, z);
        };
        if reduced_noise.increments[k].iter().any(|c| *c != 0.0) {
            step(&reduced_noise.continuous_element(k));
        }
        for j in reduced_noise.jumps_in_step(k) {
            step(&j.value);
        }
        radius.push(r);
        angle.push(theta);
    }
    PolarPath { radius, angle }
}

/// Largest `|Theta_k - arg(X_k)|` modulo `2 pi`.
pub fn angle_mismatch(polar: &PolarPath, x: &[Vec<f64>]) -> f64 {
    polar.angle.iter().zip(x).fold(0.0, |m: f64, (th, p)| m.max(wrap_angle(th - p[1].atan2(p[0])).abs()))
}

/// Lifts an `R^2` noise path to `GL(2) x R^2` with `Z_(1) = I`.
pub fn lift_translation_noise(path: &SemimartingalePath) -> Result<SemimartingalePath, TransformError> {
    if path.dim() != 2 || !path.chart.is_additive() {
        return Err(TransformError::Config("lift needs an R^2 noise path".into()));
    }
    let pad = |v: &[f64]| vec![0.0, 0.0, 0.0, 0.0, v[0], v[1]];
    let chart = affine_noise_chart();
    let increments = path.increments.iter().map(|c| pad(c)).collect();
    let jumps = path
        .jumps
        .iter()
        .map(|j| {
            let mut v = pad(&j.value);
            v[0] = 1.0;
            v[3] = 1.0;
            JumpMark { step: j.step, time: j.time, value: v }
        })
        .collect();
    let mut start = pad(&path.values[0]);
    start[0] = 1.0;
    start[3] = 1.0;
    Ok(SemimartingalePath::from_increments(chart, path.times.clone(), start, increments, jumps)?)
}

/// Marcus SDE on `R^2` with `Y_1 = x0 d_0`, `Y_2 = d_1`; solved exactly by `(x0 e^{Z^1}, x1 + Z^2)`.
pub fn marcus_example(tol: f64) -> MarcusSde {
    let y1: StateFn = Arc::new(|x: &[f64]| vec![x[0], 0.0]);
    let y2: StateFn = Arc::new(|_: &[f64]| vec![0.0, 1.0]);
    MarcusSde::new(2, vec![y1, y2], tol)
}

/// The fields of [`marcus_example`] pushed forward by `(exp x0, x1)`: `y0 ln(y0) d_0` and `d_1`.
pub fn marcus_example_pushed(tol: f64) -> MarcusSde {
    let y1: StateFn = Arc::new(|y: &[f64]| vec![y[0] * y[0].ln(), 0.0]);
    let y2: StateFn = Arc::new(|_: &[f64]| vec![0.0, 1.0]);
    MarcusSde::new(2, vec![y1, y2], tol)
}
