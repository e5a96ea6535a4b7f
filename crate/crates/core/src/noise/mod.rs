//! Sampled semimartingales, Lévy triplets and predictable controls.

mod laws;
mod path;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

pub use laws::{
    law_expectation, psd_factor, sphere_area, AxisJumps, GaussianJumps, JumpLaw, LevyTriplet, PointMass,
    PushforwardLaw, RadialPower, COMPENSATOR_SAMPLES,
};
pub use path::{uniform_grid, JumpMark, PathHistory, SemimartingalePath};

use crate::group::{GroupError, LieGroupChart};

pub type PathRng = ChaCha8Rng;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("diffusion matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("control `{name}` left its bounds [{lo}, {hi}] at t = {t}")]
    ControlBounds { name: String, lo: f64, hi: f64, t: f64 },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Independent stream `path_index` of the generator seeded by `master`.
pub fn path_rng(master: u64, path_index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(path_index);
    rng
}

/// Runs `f` for each path index in parallel; results keep index order.
pub fn ensemble<T, F>(master: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut PathRng, usize) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master, i as u64);
            f(&mut rng, i)
        })
        .collect()
}

pub trait ControlValue: Clone + Send + Sync {
    fn within(&self, lo: f64, hi: f64) -> bool;
}

impl ControlValue for f64 {
    fn within(&self, lo: f64, hi: f64) -> bool {
        (lo..=hi).contains(self)
    }
}

impl ControlValue for Vec<f64> {
    fn within(&self, lo: f64, hi: f64) -> bool {
        self.iter().all(|v| (lo..=hi).contains(v))
    }
}

/// A control whose value at step `k` may only read the history up to `times[k]`.
#[derive(Clone)]
pub struct PredictableControl<T> {
    pub name: String,
    pub bounds: Option<(f64, f64)>,
    eval: Arc<dyn Fn(&PathHistory<'_>) -> T + Send + Sync>,
}

impl<T> fmt::Debug for PredictableControl<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PredictableControl({}, bounds {:?})", self.name, self.bounds)
    }
}

impl<T: ControlValue + 'static> PredictableControl<T> {
    pub fn new<F>(name: impl Into<String>, bounds: Option<(f64, f64)>, f: F) -> Self
    where
        F: Fn(&PathHistory<'_>) -> T + Send + Sync + 'static,
    {
        Self { name: name.into(), bounds, eval: Arc::new(f) }
    }

    pub fn constant(name: impl Into<String>, value: T) -> Self {
        Self::new(name, None, move |_| value.clone())
    }

    pub fn evaluate(&self, history: &PathHistory<'_>) -> Result<T, NoiseError> {
        let v = (self.eval)(history);
        if let Some((lo, hi)) = self.bounds {
            if !v.within(lo, hi) {
                return Err(NoiseError::ControlBounds { name: self.name.clone(), lo, hi, t: history.now() });
            }
        }
        Ok(v)
    }
}

impl PredictableControl<f64> {
    /// A positive density bounded in `[lo, hi]` with `0 < lo <= hi < inf`.
    pub fn time_density<F>(name: impl Into<String>, lo: f64, hi: f64, f: F) -> Result<Self, NoiseError>
    where
        F: Fn(&PathHistory<'_>) -> f64 + Send + Sync + 'static,
    {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(NoiseError::Config(format!("time density bounds [{lo}, {hi}] must satisfy 0 < lo <= hi < inf")));
        }
        Ok(Self::new(name, Some((lo, hi)), f))
    }
}

fn gaussian_vec(n: usize, rng: &mut PathRng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Lévy path on `[0, horizon]` with characteristics `triplet` relative to the chart's Hunt functions.
pub fn sample_levy(triplet: &LevyTriplet, horizon: f64, step: f64, rng: &mut PathRng) -> Result<SemimartingalePath, NoiseError> {
    let times = uniform_grid(horizon, step)?;
    let chart = triplet.chart.clone();
    let n = chart.dim();
    let factor = triplet.diffusion_factor();
    let has_diffusion = factor.iter().any(|v| *v != 0.0);
    let comp = triplet.hunt_compensator();
    let drift: Vec<f64> = triplet.b0.iter().zip(comp).map(|(b, c)| b - c).collect();
    let id = chart.identity();
    let mut increments = Vec::with_capacity(times.len() - 1);
    let mut jumps = Vec::new();
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let mut xi: Vec<f64> = drift.iter().map(|b| b * dt).collect();
        if has_diffusion {
            let g = nalgebra::DVector::from_vec(gaussian_vec(n, rng));
            let w = factor * g * dt.sqrt();
            for (x, v) in xi.iter_mut().zip(w.iter()) {
                *x += v;
            }
        }
        let c = if chart.is_additive() {
            xi
        } else {
            let e = chart.exp(&xi, 1e-13)?;
            crate::numeric::sub(&e, &id)
        };
        increments.push(c);
        if triplet.intensity > 0.0 {
            let law = triplet.law.as_ref().expect("checked at construction");
            let count = Poisson::new(triplet.intensity * dt)
                .map_err(|e| NoiseError::Config(e.to_string()))?
                .sample(rng) as usize;
            for _ in 0..count {
                jumps.push(JumpMark { step: k, time: times[k + 1], value: law.sample(rng) });
            }
        }
    }
    SemimartingalePath::from_increments(chart, times, id, increments, jumps)
}

/// Brownian motion on `R^n` with covariance `cov` per unit time.
pub fn sample_brownian(cov: &DMatrix<f64>, horizon: f64, step: f64, rng: &mut PathRng) -> Result<SemimartingalePath, NoiseError> {
    let triplet = LevyTriplet::brownian(cov.nrows(), cov.clone())?;
    sample_levy(&triplet, horizon, step, rng)
}

/// Symmetric alpha-stable triplet on `R^n` with small jumps below `eps` removed.
pub fn alpha_stable_triplet(alpha: f64, dim: usize, eps: f64) -> Result<LevyTriplet, NoiseError> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(NoiseError::Config(format!("stability index {alpha} outside (0, 2)")));
    }
    if !(eps > 0.0) {
        return Err(NoiseError::Config(format!("truncation {eps} must be positive")));
    }
    let law = RadialPower { dim, alpha, eps };
    LevyTriplet::new(
        LieGroupChart::additive(dim),
        vec![0.0; dim],
        DMatrix::zeros(dim, dim),
        law.intensity(),
        Some(Arc::new(law)),
    )
}

/// Default truncation of the stable jump measure.
pub const STABLE_TRUNCATION: f64 = 1e-2;

pub fn sample_alpha_stable(
    alpha: f64,
    dim: usize,
    eps: f64,
    horizon: f64,
    step: f64,
    rng: &mut PathRng,
) -> Result<SemimartingalePath, NoiseError> {
    sample_levy(&alpha_stable_triplet(alpha, dim, eps)?, horizon, step, rng)
}

/// Pure-jump path at integer times with `Z_n = J_n * Z_{n-1}` and `J_n` drawn by `step_law`.
pub fn sample_discrete_iterated<F>(
    chart: &LieGroupChart,
    steps: usize,
    step_law: F,
    rng: &mut PathRng,
) -> Result<SemimartingalePath, NoiseError>
where
    F: Fn(&mut PathRng) -> Vec<f64>,
{
    if steps == 0 {
        return Err(NoiseError::Config("iterated noise needs at least one step".into()));
    }
    let n = chart.dim();
    let times: Vec<f64> = (0..=steps).map(|i| i as f64).collect();
    let mut jumps = Vec::with_capacity(steps);
    for k in 0..steps {
        let value = step_law(rng);
        if !chart.in_domain(&value) {
            return Err(NoiseError::Group(GroupError::Domain(format!("step {k} outside the group"))));
        }
        jumps.push(JumpMark { step: k, time: times[k + 1], value });
    }
    SemimartingalePath::from_increments(chart.clone(), times, chart.identity(), vec![vec![0.0; n]; steps], jumps)
}

/// Standard Chambers–Mallows–Stuck draw of a symmetric alpha-stable variable with unit scale.
pub fn chambers_mallows_stuck(alpha: f64, rng: &mut PathRng) -> f64 {
    use rand::Rng;
    let v = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
    let w = -(1.0 - rng.random::<f64>()).ln();
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * ((v * (1.0 - alpha)).cos() / w).powf((1.0 - alpha) / alpha)
}
