//! Gauge and time actions on noise, stochastic transformations and their calculus.

mod actions;
mod calculus;
mod catalog;
mod time_change;

use thiserror::Error;

pub use actions::{GaugeAction, TimeAction};
pub use calculus::{
    compose, e_action, flow_of, invert, lie_bracket, one_parameter, p_action, push_forward, rectify_check,
    rectify_single, transformation_deviation, BracketVariant, InfinitesimalTransformation, StochasticTransformation,
};
pub use catalog::{
    gauge_by_name, time_action_by_name, transformation_by_name, GAUGE_NAMES, TIME_ACTION_NAMES, TRANSFORMATION_NAMES,
};
pub use time_change::{apply_time_change, time_change_state, TimeChange};

use crate::group::GroupError;
use crate::noise::{NoiseError, PredictableControl, SemimartingalePath};
use crate::numeric;
use crate::ode::OdeError;
use crate::sde::SolveError;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular transformation: {0}")]
    Singular(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// `dZ~ = Xi_{G_t}(dZ_t)` with a predictable gauge control read from the noise history.
pub fn apply_gauge_to_noise(
    noise: &SemimartingalePath,
    action: &GaugeAction,
    control: &PredictableControl<Vec<f64>>,
) -> Result<SemimartingalePath, TransformError> {
    let gs = (0..noise.steps())
        .map(|k| control.evaluate(&noise.history(k)))
        .collect::<Result<Vec<_>, _>>()?;
    gauge_with_elements(noise, action, &gs)
}

/// Gauge transformation with the gauge element of each step given explicitly.
///
/// On additive noise the continuous increments go through `Upsilon_g` plus the `O_g` correction;
/// on other groups the continuous group increment is mapped by `Xi_g`. Jumps are mapped by `Xi_g`.
pub fn gauge_with_elements(
    noise: &SemimartingalePath,
    action: &GaugeAction,
    gs: &[Vec<f64>],
) -> Result<SemimartingalePath, TransformError> {
    step_map_noise(noise, gs.len(), |k| {
        let g = &gs[k];
        Ok(StepMap {
            lin: action.upsilon(g),
            second: if noise.chart.is_additive() { action.o_second(g)? } else { Vec::new() },
            full: Box::new(move |z: &[f64]| action.xi(g, z)),
        })
    }, action)
}

/// Time symmetry on noise: increment `k` goes through `Gamma_{eta_k}`, then time runs on `beta = int eta`.
///
/// `eta` is evaluated on the history up to the left end of each step.
pub fn apply_time_symmetry(
    noise: &SemimartingalePath,
    action: &TimeAction,
    eta: &PredictableControl<f64>,
    out_step: Option<f64>,
) -> Result<(SemimartingalePath, TimeChange), TransformError> {
    let rs = (0..noise.steps()).map(|k| eta.evaluate(&noise.history(k))).collect::<Result<Vec<_>, _>>()?;
    time_symmetry_with_densities(noise, action, &rs, out_step)
}

/// [`apply_time_symmetry`] with the densities given per step.
pub fn time_symmetry_with_densities(
    noise: &SemimartingalePath,
    action: &TimeAction,
    rs: &[f64],
    out_step: Option<f64>,
) -> Result<(SemimartingalePath, TimeChange), TransformError> {
    if action.noise != noise.chart {
        return Err(TransformError::Config(format!("time action `{}` does not act on {}", action.name, noise.chart.name())));
    }
    let trivial = GaugeAction::trivial(noise.chart.clone());
    let scaled = step_map_noise(noise, rs.len(), |k| {
        let r = rs[k];
        Ok(StepMap {
            lin: action.gamma_lin(r),
            second: if noise.chart.is_additive() { action.q_second(r) } else { Vec::new() },
            full: Box::new(move |z: &[f64]| action.gamma(r, z)),
        })
    }, &trivial)?;
    apply_time_change(&scaled, rs, out_step)
}

pub(crate) struct StepMap<'a> {
    pub lin: nalgebra::DMatrix<f64>,
    pub second: Vec<f64>,
    pub full: Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>,
}

pub(crate) fn step_map_noise<'a, F>(
    noise: &SemimartingalePath,
    steps: usize,
    map_of: F,
    action: &GaugeAction,
) -> Result<SemimartingalePath, TransformError>
where
    F: Fn(usize) -> Result<StepMap<'a>, TransformError>,
{
    if noise.chart != action.noise {
        return Err(TransformError::Config(format!(
            "action `{}` acts on {}, noise lives on {}",
            action.name,
            action.noise.name(),
            noise.chart.name()
        )));
    }
    if steps != noise.steps() {
        return Err(TransformError::Config(format!("{steps} controls for {} steps", noise.steps())));
    }
    let chart = &noise.chart;
    let id = chart.identity();
    let mut increments = Vec::with_capacity(steps);
    let mut jumps = Vec::with_capacity(noise.jumps.len());
    let mut start = noise.values[0].clone();
    for k in 0..steps {
        let map = map_of(k)?;
        if k == 0 {
            start = (map.full)(&noise.values[0]);
        }
        let c = &noise.increments[k];
        let mapped = if chart.is_additive() {
            actions::second_order_map(&map.lin, &map.second, c)
        } else {
            numeric::sub(&(map.full)(&noise.continuous_element(k)), &id)
        };
        increments.push(mapped);
        for j in noise.jumps_in_step(k) {
            let mut jm = j.clone();
            jm.value = (map.full)(&j.value);
            jumps.push(jm);
        }
    }
    Ok(SemimartingalePath::from_increments(chart.clone(), noise.times.clone(), start, increments, jumps)?)
}
