//! Named transformations and actions usable from scenario configurations.

use std::collections::BTreeMap;

use super::actions::{GaugeAction, TimeAction};
use super::calculus::StochasticTransformation;
use super::TransformError;
use crate::group::LieGroupChart;
use crate::numeric::rotation2;

pub const TRANSFORMATION_NAMES: &[&str] =
    &["identity", "quarter_turn", "rotation", "translation", "exp_first", "angle_rectifier", "time_scaling"];

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Builds a transformation of `R^state_dim` by name. `gauge` fixes the gauge group it takes values in.
///
/// * `identity`: `(id, e, 1)`.
/// * `quarter_turn`: `Phi(x) = (-x1, x0, ...)`, strong.
/// * `rotation`: `Phi = R_angle` on the first two coordinates, `B = angle` (needs a circle gauge).
/// * `translation`: `Phi(x) = x + shift e_0`, `B = e`.
/// * `exp_first`: `Phi(x) = (exp x0, x1, ...)`, strong, defined onto `x0 > 0`.
/// * `angle_rectifier`: `(id, -arg(x0, x1), 1)` (circle gauge).
/// * `time_scaling`: `(id, e, eta)` with constant `eta`.
pub fn transformation_by_name(
    name: &str,
    state_dim: usize,
    gauge: &LieGroupChart,
    params: &BTreeMap<String, f64>,
) -> Result<StochasticTransformation, TransformError> {
    let need_plane = || {
        if state_dim < 2 {
            Err(TransformError::Config(format!("`{name}` needs a state dimension of at least 2")))
        } else {
            Ok(())
        }
    };
    let need_circle = || {
        if gauge != &LieGroupChart::circle() {
            Err(TransformError::Config(format!("`{name}` takes values in SO(2), not {}", gauge.name())))
        } else {
            Ok(())
        }
    };
    let t = match name {
        "identity" => StochasticTransformation::identity(state_dim, gauge.clone()),
        "quarter_turn" => {
            need_plane()?;
            StochasticTransformation::strong(
                name,
                state_dim,
                gauge.clone(),
                |x| {
                    let mut y = x.to_vec();
                    y[0] = -x[1];
                    y[1] = x[0];
                    y
                },
                |x| {
                    let mut y = x.to_vec();
                    y[0] = x[1];
                    y[1] = -x[0];
                    y
                },
            )
        }
        "rotation" => {
            need_plane()?;
            need_circle()?;
            let a = param(params, "angle", 0.0);
            StochasticTransformation::new(
                name,
                state_dim,
                gauge.clone(),
                move |x| rotate(x, a),
                move |x| rotate(x, -a),
                move |_| vec![a],
                |_| 1.0,
            )
        }
        "translation" => {
            let s = param(params, "shift", 1.0);
            StochasticTransformation::strong(
                name,
                state_dim,
                gauge.clone(),
                move |x| {
                    let mut y = x.to_vec();
                    y[0] += s;
                    y
                },
                move |x| {
                    let mut y = x.to_vec();
                    y[0] -= s;
                    y
                },
            )
        }
        "exp_first" => StochasticTransformation::strong(
            name,
            state_dim,
            gauge.clone(),
            |x| {
                let mut y = x.to_vec();
                y[0] = x[0].exp();
                y
            },
            |x| {
                let mut y = x.to_vec();
                y[0] = if x[0] > 0.0 { x[0].ln() } else { f64::NAN };
                y
            },
        ),
        "angle_rectifier" => {
            need_plane()?;
            need_circle()?;
            StochasticTransformation::new(name, state_dim, gauge.clone(), |x| x.to_vec(), |x| x.to_vec(), |x| vec![-x[1].atan2(x[0])], |_| 1.0)
        }
        "time_scaling" => {
            let eta = param(params, "eta", 1.0);
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(TransformError::Config(format!("time density {eta} must be positive")));
            }
            let id = gauge.identity();
            StochasticTransformation::new(name, state_dim, gauge.clone(), |x| x.to_vec(), |x| x.to_vec(), move |_| id.clone(), move |_| eta)
        }
        other => {
            return Err(TransformError::Config(format!(
                "unknown transformation `{other}`; known: {}",
                TRANSFORMATION_NAMES.join(", ")
            )))
        }
    };
    Ok(t)
}

fn rotate(x: &[f64], a: f64) -> Vec<f64> {
    let r = rotation2(a);
    let mut y = x.to_vec();
    y[0] = r[0] * x[0] + r[1] * x[1];
    y[1] = r[2] * x[0] + r[3] * x[1];
    y
}

pub const GAUGE_NAMES: &[&str] = &["trivial", "planar_rotation", "conjugation_affine2"];

/// Gauge action by name acting on `noise`.
pub fn gauge_by_name(name: &str, noise: &LieGroupChart) -> Result<GaugeAction, TransformError> {
    match name {
        "trivial" => Ok(GaugeAction::trivial(noise.clone())),
        "planar_rotation" if noise.is_additive() => GaugeAction::planar_rotation(noise.dim()),
        "conjugation_affine2" if noise == &LieGroupChart::affine_product(2, 2) => Ok(GaugeAction::conjugation_affine2()),
        "planar_rotation" | "conjugation_affine2" => {
            Err(TransformError::Config(format!("gauge `{name}` does not act on {}", noise.name())))
        }
        other => Err(TransformError::Config(format!("unknown gauge `{other}`; known: {}", GAUGE_NAMES.join(", ")))),
    }
}

pub const TIME_ACTION_NAMES: &[&str] = &["brownian_scaling", "stable_scaling", "linear_scaling"];

/// Time action by name on `R^n`; `alpha` is read for `stable_scaling`.
pub fn time_action_by_name(name: &str, n: usize, alpha: Option<f64>) -> Result<TimeAction, TransformError> {
    match name {
        "brownian_scaling" => Ok(TimeAction::brownian(n)),
        "stable_scaling" => match alpha {
            Some(a) if a > 0.0 && a < 2.0 => Ok(TimeAction::stable(n, a)),
            _ => Err(TransformError::Config("stable_scaling needs alpha in (0, 2)".into())),
        },
        "linear_scaling" => {
            let mut t = TimeAction::power_scaling(n, 1.0);
            t.name = "linear_scaling".into();
            Ok(t)
        }
        other => Err(TransformError::Config(format!(
            "unknown time action `{other}`; known: {}",
            TIME_ACTION_NAMES.join(", ")
        ))),
    }
}
