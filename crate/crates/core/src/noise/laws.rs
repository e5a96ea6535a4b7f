//! Jump laws and Lévy triplets.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{NoiseError, PathRng};
use crate::group::LieGroupChart;
use crate::numeric;

/// Law of a single jump, returned as a group element in chart coordinates.
pub trait JumpLaw: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut PathRng) -> Vec<f64>;
    /// True when `J` and `J^{-1}` have the same law.
    fn symmetric(&self) -> bool {
        false
    }
    /// Finite support with weights, when the law is atomic.
    fn atoms(&self) -> Option<Vec<(f64, Vec<f64>)>> {
        None
    }
    /// Lebesgue density, when one exists.
    fn density(&self, _z: &[f64]) -> Option<f64> {
        None
    }
    /// Radii where the density is discontinuous.
    fn radial_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    fn describe(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct PointMass {
    pub at: Vec<f64>,
}

impl JumpLaw for PointMass {
    fn dim(&self) -> usize {
        self.at.len()
    }
    fn sample(&self, _rng: &mut PathRng) -> Vec<f64> {
        self.at.clone()
    }
    fn atoms(&self) -> Option<Vec<(f64, Vec<f64>)>> {
        Some(vec![(1.0, self.at.clone())])
    }
    fn describe(&self) -> String {
        format!("point mass at {:?}", self.at)
    }
}

/// Independent Gaussian coordinates with the given means and standard deviations.
#[derive(Debug, Clone)]
pub struct GaussianJumps {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianJumps {
    pub fn isotropic(dim: usize, std: f64) -> Self {
        Self { mean: vec![0.0; dim], std: vec![std; dim] }
    }
}

impl JumpLaw for GaussianJumps {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn sample(&self, rng: &mut PathRng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                let g: f64 = StandardNormal.sample(rng);
                m + s * g
            })
            .collect()
    }
    fn symmetric(&self) -> bool {
        self.mean.iter().all(|m| *m == 0.0)
    }
    fn density(&self, z: &[f64]) -> Option<f64> {
        let mut p = 1.0;
        for ((x, m), s) in z.iter().zip(&self.mean).zip(&self.std) {
            if *s <= 0.0 {
                return None;
            }
            let u = (x - m) / s;
            p *= (-0.5 * u * u).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        }
        Some(p)
    }
    fn describe(&self) -> String {
        format!("gaussian mean {:?} std {:?}", self.mean, self.std)
    }
}

/// Centered Gaussian jumps supported on one coordinate axis.
#[derive(Debug, Clone)]
pub struct AxisJumps {
    pub dim: usize,
    pub axis: usize,
    pub std: f64,
}

impl JumpLaw for AxisJumps {
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample(&self, rng: &mut PathRng) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        let g: f64 = StandardNormal.sample(rng);
        z[self.axis] = self.std * g;
        z
    }
    fn symmetric(&self) -> bool {
        true
    }
    fn describe(&self) -> String {
        format!("gaussian jumps of std {} on axis {} of R^{}", self.std, self.axis, self.dim)
    }
}

/// Isotropic jumps with Lévy density proportional to `|z|^{-(n+alpha)}` on `|z| >= eps`.
#[derive(Debug, Clone)]
pub struct RadialPower {
    pub dim: usize,
    pub alpha: f64,
    pub eps: f64,
}

impl RadialPower {
    /// Total mass of `|z|^{-(n+alpha)} dz` over `|z| >= eps`.
    pub fn intensity(&self) -> f64 {
        sphere_area(self.dim) * self.eps.powf(-self.alpha) / self.alpha
    }
}

/// Surface area of the unit sphere in `R^n` (2 for `n = 1`).
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => {
            let half = n as f64 / 2.0;
            2.0 * std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half)
        }
    }
}

fn uniform_direction(dim: usize, rng: &mut PathRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = numeric::norm(&v);
        if n > 1e-300 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

impl JumpLaw for RadialPower {
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample(&self, rng: &mut PathRng) -> Vec<f64> {
        let u: f64 = 1.0 - rng.random::<f64>();
        let r = self.eps * u.powf(-1.0 / self.alpha);
        uniform_direction(self.dim, rng).into_iter().map(|d| r * d).collect()
    }
    fn symmetric(&self) -> bool {
        true
    }
    fn density(&self, z: &[f64]) -> Option<f64> {
        let r = numeric::norm(z);
        Some(if r < self.eps { 0.0 } else { r.powf(-(self.dim as f64 + self.alpha)) / self.intensity() })
    }
    fn radial_breakpoints(&self) -> Vec<f64> {
        vec![self.eps]
    }
    fn describe(&self) -> String {
        format!("radial power law alpha {} truncated at {} in R^{}", self.alpha, self.eps, self.dim)
    }
}

/// Image of a base law under a fixed map.
#[derive(Clone)]
pub struct PushforwardLaw {
    pub base: Arc<dyn JumpLaw>,
    pub map: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub label: String,
    pub preserves_symmetry: bool,
}

impl fmt::Debug for PushforwardLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PushforwardLaw({})", self.label)
    }
}

impl JumpLaw for PushforwardLaw {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn sample(&self, rng: &mut PathRng) -> Vec<f64> {
        (self.map)(&self.base.sample(rng))
    }
    fn symmetric(&self) -> bool {
        self.preserves_symmetry && self.base.symmetric()
    }
    fn atoms(&self) -> Option<Vec<(f64, Vec<f64>)>> {
        self.base.atoms().map(|a| a.into_iter().map(|(w, z)| (w, (self.map)(&z))).collect())
    }
    fn describe(&self) -> String {
        format!("{} of [{}]", self.label, self.base.describe())
    }
}

/// Characteristics `(b0, A0, nu0)` of a Lévy process; `nu0 = intensity * law`.
#[derive(Clone)]
pub struct LevyTriplet {
    pub chart: LieGroupChart,
    pub b0: Vec<f64>,
    pub a0: DMatrix<f64>,
    pub intensity: f64,
    pub law: Option<Arc<dyn JumpLaw>>,
    factor: OnceLock<DMatrix<f64>>,
    compensator: OnceLock<Vec<f64>>,
}

impl fmt::Debug for LevyTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyTriplet")
            .field("chart", &self.chart.name())
            .field("b0", &self.b0)
            .field("a0", &self.a0.as_slice())
            .field("intensity", &self.intensity)
            .field("law", &self.law.as_ref().map(|l| l.describe()))
            .finish()
    }
}

/// Samples used for Monte Carlo estimates of jump-law expectations.
pub const COMPENSATOR_SAMPLES: usize = 200_000;

impl LevyTriplet {
    pub fn new(
        chart: LieGroupChart,
        b0: Vec<f64>,
        a0: DMatrix<f64>,
        intensity: f64,
        law: Option<Arc<dyn JumpLaw>>,
    ) -> Result<Self, NoiseError> {
        let n = chart.dim();
        if b0.len() != n || a0.nrows() != n || a0.ncols() != n {
            return Err(NoiseError::Config(format!("triplet dimensions do not match chart dimension {n}")));
        }
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(NoiseError::Config(format!("jump intensity {intensity} must be finite and non-negative")));
        }
        if intensity > 0.0 && law.as_ref().map(|l| l.dim()) != Some(n) {
            return Err(NoiseError::Config("positive intensity needs a jump law of matching dimension".into()));
        }
        psd_factor(&a0)?;
        Ok(Self { chart, b0, a0, intensity, law, factor: OnceLock::new(), compensator: OnceLock::new() })
    }

    pub fn brownian(dim: usize, cov: DMatrix<f64>) -> Result<Self, NoiseError> {
        Self::new(LieGroupChart::additive(dim), vec![0.0; dim], cov, 0.0, None)
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// `L` with `L L^T = A0`.
    pub fn diffusion_factor(&self) -> &DMatrix<f64> {
        self.factor.get_or_init(|| psd_factor(&self.a0).expect("checked at construction"))
    }

    /// `intensity * E[h(J)]`, zero for symmetric laws on additive charts.
    pub fn hunt_compensator(&self) -> &[f64] {
        self.compensator.get_or_init(|| {
            let n = self.dim();
            let Some(law) = self.law.as_ref().filter(|_| self.intensity > 0.0) else {
                return vec![0.0; n];
            };
            if law.symmetric() && self.chart.is_additive() {
                return vec![0.0; n];
            }
            let mean = law_expectation(law.as_ref(), 0x5eed_c0de, COMPENSATOR_SAMPLES, |z| self.chart.hunt(z)).0;
            numeric::scale(&mean, self.intensity)
        })
    }
}

/// Mean and standard error of `f(J)`; exact for atomic laws.
pub fn law_expectation<F>(law: &dyn JumpLaw, seed: u64, samples: usize, f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if let Some(atoms) = law.atoms() {
        let mut mean: Vec<f64> = Vec::new();
        for (w, z) in atoms {
            let v = f(&z);
            if mean.is_empty() {
                mean = vec![0.0; v.len()];
            }
            for (m, x) in mean.iter_mut().zip(v) {
                *m += w * x;
            }
        }
        let zeros = vec![0.0; mean.len()];
        return (mean, zeros);
    }
    let mut rng = super::path_rng(seed, 0);
    let mut sum: Vec<f64> = Vec::new();
    let mut sq: Vec<f64> = Vec::new();
    for _ in 0..samples {
        let v = f(&law.sample(&mut rng));
        if sum.is_empty() {
            sum = vec![0.0; v.len()];
            sq = vec![0.0; v.len()];
        }
        for i in 0..v.len() {
            sum[i] += v[i];
            sq[i] += v[i] * v[i];
        }
    }
    let s = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|x| x / s).collect();
    let se = sq.iter().zip(&mean).map(|(q, m)| ((q / s - m * m).max(0.0) / s).sqrt()).collect();
    (mean, se)
}

/// Symmetric square root factor of a positive semidefinite matrix.
pub fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>, NoiseError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let off_diagonal = (0..n).any(|i| (0..n).any(|j| i != j && a[(i, j)] != 0.0));
    if !off_diagonal {
        if let Some(v) = a.diagonal().iter().find(|v| **v < -1e-12) {
            return Err(NoiseError::NotPsd { min_eigenvalue: *v });
        }
        return Ok(DMatrix::from_diagonal(&a.diagonal().map(|v| v.max(0.0).sqrt())));
    }
    let asym = (a - a.transpose()).abs().max();
    if asym > 1e-12 * (1.0 + a.abs().max()) {
        return Err(NoiseError::Config("diffusion matrix is not symmetric".into()));
    }
    let eig = a.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-12 {
        return Err(NoiseError::NotPsd { min_eigenvalue: min });
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&sqrt_vals) * v.transpose())
}
