//! Geometrical, canonical and Marcus SDEs and their pathwise solvers.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupError, LieGroupChart};
use crate::noise::{JumpLaw, NoiseError, PredictableControl, SemimartingalePath};
use crate::numeric::{self, fd_step, fd_step2};
use crate::ode::{self, OdeError, OdeOptions};

pub type StateFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// `(x, z, k) -> psi(x, z, k)` for a canonical map.
pub type CanonicalFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(x, z', z, k) -> psi_bar(x, z', z, k)` for a geometrical map.
pub type GeometricalFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(x, z) -> ` row-major matrix.
pub type MatrixFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Components beyond this size abort the solve.
pub const EXPLOSION_BOUND: f64 = 1e8;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("solution left |x| <= {EXPLOSION_BOUND:e} at t = {time}")]
    Explosion { time: f64, partial: Box<StatePath> },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Jump of the solution at the end of grid step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJump {
    pub step: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

/// Solution path on `R^m`, sampled on the noise grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub jumps: Vec<StateJump>,
}

impl StatePath {
    pub fn last(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Same column layout as noise paths: time, state, jump flag, jump size.
    pub fn to_csv(&self) -> String {
        let m = self.dim();
        let mut out = String::from("time");
        for i in 0..m {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",jump");
        for i in 0..m {
            out.push_str(&format!(",j{i}"));
        }
        out.push('\n');
        let mut ji = 0;
        for k in 0..self.times.len() {
            let mut delta = vec![0.0; m];
            let mut flagged = false;
            while k > 0 && ji < self.jumps.len() && self.jumps[ji].step == k - 1 {
                for (d, (a, b)) in delta.iter_mut().zip(self.jumps[ji].after.iter().zip(&self.jumps[ji].before)) {
                    *d += a - b;
                }
                flagged = true;
                ji += 1;
            }
            out.push_str(&format!("{}", self.times[k]));
            for v in &self.values[k] {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(if flagged { ",1" } else { ",0" });
            for v in &delta {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn exploded(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > EXPLOSION_BOUND)
}

/// Canonical SDE map `psi(x, z)`; the geometrical map is `psi(x, z' z^{-1})`.
#[derive(Clone)]
pub struct CanonicalSdeMap {
    pub name: String,
    pub state_dim: usize,
    pub noise_chart: LieGroupChart,
    psi: CanonicalFn,
    pub parameter: Option<PredictableControl<Vec<f64>>>,
    jac_x: Option<MatrixFn>,
    jac_z: Option<MatrixFn>,
}

impl fmt::Debug for CanonicalSdeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalSdeMap({}, R^{} driven by {})", self.name, self.state_dim, self.noise_chart.name())
    }
}

impl CanonicalSdeMap {
    pub fn new<F>(name: impl Into<String>, state_dim: usize, noise_chart: LieGroupChart, psi: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::with_parameter(name, state_dim, noise_chart, None, move |x, z, _| psi(x, z))
    }

    pub fn with_parameter<F>(
        name: impl Into<String>,
        state_dim: usize,
        noise_chart: LieGroupChart,
        parameter: Option<PredictableControl<Vec<f64>>>,
        psi: F,
    ) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { name: name.into(), state_dim, noise_chart, psi: Arc::new(psi), parameter, jac_x: None, jac_z: None }
    }

    /// Registers analytic Jacobians `d psi / dx` (`m x m`) and `d psi / dz` (`m x n`).
    pub fn with_jacobians<A, B>(mut self, jac_x: A, jac_z: B) -> Self
    where
        A: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        B: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.jac_x = Some(Arc::new(jac_x));
        self.jac_z = Some(Arc::new(jac_z));
        self
    }

    pub fn without_jacobians(mut self) -> Self {
        self.jac_x = None;
        self.jac_z = None;
        self
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.jac_x.is_some() && self.jac_z.is_some()
    }

    pub fn psi_fn(&self) -> CanonicalFn {
        self.psi.clone()
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        (self.psi)(x, z, &[])
    }

    pub fn eval_k(&self, x: &[f64], z: &[f64], k: &[f64]) -> Vec<f64> {
        (self.psi)(x, z, k)
    }

    /// `d psi(x, z) [v]` in the state direction `v`.
    pub fn directional_x(&self, x: &[f64], z: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.state_dim;
        if let Some(j) = &self.jac_x {
            return numeric_matvec(&j(x, z), v, m, m);
        }
        let h = fd_step(numeric::max_abs(x)) / numeric::max_abs(v).max(1.0);
        let p = self.eval(&numeric::axpy(x, h, v), z);
        let q = self.eval(&numeric::axpy(x, -h, v), z);
        p.iter().zip(&q).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    /// `d psi(x, z) [w]` in the noise direction `w` (chart coordinates).
    pub fn directional_z(&self, x: &[f64], z: &[f64], w: &[f64]) -> Vec<f64> {
        let m = self.state_dim;
        if let Some(j) = &self.jac_z {
            return numeric_matvec(&j(x, z), w, m, self.noise_chart.dim());
        }
        let h = fd_step(numeric::max_abs(z)) / numeric::max_abs(w).max(1.0);
        let p = self.eval(x, &numeric::axpy(z, h, w));
        let q = self.eval(x, &numeric::axpy(z, -h, w));
        p.iter().zip(&q).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    /// The geometrical form `psi_bar(x, z', z) = psi(x, z' z^{-1})`.
    pub fn to_geometrical(&self) -> GeometricalSdeMap {
        let psi = self.psi.clone();
        let chart = self.noise_chart.clone();
        let bar: GeometricalFn = Arc::new(move |x, zp, z, k| {
            let d = chart.jump_of(z, zp).expect("noise values lie in the group");
            psi(x, &d, k)
        });
        GeometricalSdeMap {
            name: self.name.clone(),
            state_dim: self.state_dim,
            noise_chart: self.noise_chart.clone(),
            psi_bar: bar,
            canonical: Some(self.psi.clone()),
            parameter: self.parameter.clone(),
            d1: None,
            d2: None,
        }
    }
}

fn numeric_matvec(a: &[f64], v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows).map(|i| (0..cols).map(|j| a[i * cols + j] * v[j]).sum()).collect()
}

/// Geometrical SDE map `psi_bar(x, z', z)` with `psi_bar(x, z, z) = x`.
#[derive(Clone)]
pub struct GeometricalSdeMap {
    pub name: String,
    pub state_dim: usize,
    pub noise_chart: LieGroupChart,
    psi_bar: GeometricalFn,
    canonical: Option<CanonicalFn>,
    pub parameter: Option<PredictableControl<Vec<f64>>>,
    d1: Option<MatrixFn>,
    d2: Option<MatrixFn>,
}

impl fmt::Debug for GeometricalSdeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GeometricalSdeMap({}, R^{} driven by {})", self.name, self.state_dim, self.noise_chart.name())
    }
}

impl GeometricalSdeMap {
    pub fn new<F>(name: impl Into<String>, state_dim: usize, noise_chart: LieGroupChart, psi_bar: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            state_dim,
            noise_chart,
            psi_bar: Arc::new(psi_bar),
            canonical: None,
            parameter: None,
            d1: None,
            d2: None,
        }
    }

    /// Registers `d_{z'} psi_bar(x, z, z)` (`m x n`) and `d^2_{z'z'} psi_bar(x, z, z)` (`m x n x n`).
    pub fn with_derivatives<A, B>(mut self, d1: A, d2: B) -> Self
    where
        A: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        B: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.d1 = Some(Arc::new(d1));
        self.d2 = Some(Arc::new(d2));
        self
    }

    pub fn eval(&self, x: &[f64], zp: &[f64], z: &[f64], k: &[f64]) -> Vec<f64> {
        (self.psi_bar)(x, zp, z, k)
    }

    /// First `z'` derivative at `z' = z`, row-major `m x n`.
    pub fn first_derivative(&self, x: &[f64], z: &[f64], k: &[f64]) -> Vec<f64> {
        if let Some(d) = &self.d1 {
            return d(x, z);
        }
        let (m, n) = (self.state_dim, self.noise_chart.dim());
        let mut out = vec![0.0; m * n];
        for a in 0..n {
            let h = fd_step(z[a]);
            let mut zp = z.to_vec();
            zp[a] += h;
            let p = self.eval(x, &zp, z, k);
            zp[a] = z[a] - h;
            let q = self.eval(x, &zp, z, k);
            for i in 0..m {
                out[i * n + a] = (p[i] - q[i]) / (2.0 * h);
            }
        }
        out
    }

    /// Second `z'` derivative at `z' = z`, indexed `[i][a][b]`.
    pub fn second_derivative(&self, x: &[f64], z: &[f64], k: &[f64]) -> Vec<f64> {
        if let Some(d) = &self.d2 {
            return d(x, z);
        }
        let (m, n) = (self.state_dim, self.noise_chart.dim());
        let mut out = vec![0.0; m * n * n];
        let f = |zp: &[f64]| self.eval(x, zp, z, k);
        let f0 = f(z);
        for a in 0..n {
            for b in a..n {
                let ha = fd_step2(z[a]);
                let hb = fd_step2(z[b]);
                let shift = |da: f64, db: f64| {
                    let mut zp = z.to_vec();
                    zp[a] += da;
                    zp[b] += db;
                    f(&zp)
                };
                let v: Vec<f64> = if a == b {
                    let p = shift(ha, 0.0);
                    let q = shift(-ha, 0.0);
                    (0..m).map(|i| (p[i] - 2.0 * f0[i] + q[i]) / (ha * ha)).collect()
                } else {
                    let pp = shift(ha, hb);
                    let pm = shift(ha, -hb);
                    let mp = shift(-ha, hb);
                    let mm = shift(-ha, -hb);
                    (0..m).map(|i| (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * ha * hb)).collect()
                };
                for i in 0..m {
                    out[(i * n + a) * n + b] = v[i];
                    out[(i * n + b) * n + a] = v[i];
                }
            }
        }
        out
    }
}

/// Marcus SDE `dX = Y_alpha(X) <> dZ^alpha` on `R^m` driven by `R^n` noise.
#[derive(Clone)]
pub struct MarcusSde {
    pub fields: Vec<StateFn>,
    pub state_dim: usize,
    pub tol: f64,
}

impl MarcusSde {
    pub fn new(state_dim: usize, fields: Vec<StateFn>, tol: f64) -> Self {
        Self { fields, state_dim, tol }
    }

    /// `psi(x, z) = exp(z^alpha Y_alpha)(x)` by adaptive integration.
    pub fn to_canonical(&self) -> CanonicalSdeMap {
        let fields = self.fields.clone();
        let tol = self.tol;
        let n = fields.len();
        CanonicalSdeMap::new("marcus", self.state_dim, LieGroupChart::additive(n), move |x, z| {
            if z.iter().all(|v| *v == 0.0) {
                return x.to_vec();
            }
            let field = |y: &[f64]| {
                let mut acc = vec![0.0; y.len()];
                for (f, a) in fields.iter().zip(z) {
                    if *a != 0.0 {
                        for (s, v) in acc.iter_mut().zip(f(y)) {
                            *s += a * v;
                        }
                    }
                }
                acc
            };
            ode::integrate(field, 0.0, 1.0, x, OdeOptions { tol, max_steps: 1_000_000 })
                .unwrap_or_else(|_| vec![f64::NAN; x.len()])
        })
    }
}

fn parameter_at(param: &Option<PredictableControl<Vec<f64>>>, noise: &SemimartingalePath, k: usize) -> Result<Vec<f64>, SolveError> {
    match param {
        Some(p) => Ok(p.evaluate(&noise.history(k))?),
        None => Ok(Vec::new()),
    }
}

fn check_inputs(state_dim: usize, chart: &LieGroupChart, x0: &[f64], noise: &SemimartingalePath) -> Result<(), SolveError> {
    if x0.len() != state_dim {
        return Err(SolveError::Config(format!("initial state has dimension {}, expected {state_dim}", x0.len())));
    }
    if &noise.chart != chart {
        return Err(SolveError::Config(format!("noise lives on {}, map expects {}", noise.chart.name(), chart.name())));
    }
    Ok(())
}

struct PathBuilder {
    path: StatePath,
}

impl PathBuilder {
    fn new(noise: &SemimartingalePath, x0: &[f64]) -> Self {
        let mut values = Vec::with_capacity(noise.times.len());
        values.push(x0.to_vec());
        Self { path: StatePath { times: vec![noise.times[0]], values, jumps: Vec::new() } }
    }

    fn push(&mut self, t: f64, x: Vec<f64>) {
        self.path.times.push(t);
        self.path.values.push(x);
    }

    fn explode(self, t: f64) -> SolveError {
        SolveError::Explosion { time: t, partial: Box::new(self.path) }
    }
}

/// `X_{k+1} = psi(X_k, Z_{k+1} Z_k^{-1}, K_k)` with each jump applied as its own sub-step.
pub fn solve_increment_map(sde: &CanonicalSdeMap, x0: &[f64], noise: &SemimartingalePath) -> Result<StatePath, SolveError> {
    check_inputs(sde.state_dim, &sde.noise_chart, x0, noise)?;
    let mut out = PathBuilder::new(noise, x0);
    let mut x = x0.to_vec();
    for k in 0..noise.steps() {
        let kv = parameter_at(&sde.parameter, noise, k)?;
        x = sde.eval_k(&x, &noise.continuous_element(k), &kv);
        if exploded(&x) {
            return Err(out.explode(noise.times[k + 1]));
        }
        for j in noise.jumps_in_step(k) {
            let before = x.clone();
            x = sde.eval_k(&x, &j.value, &kv);
            if exploded(&x) {
                return Err(out.explode(j.time));
            }
            out.path.jumps.push(StateJump { step: k, before, after: x.clone() });
        }
        out.push(noise.times[k + 1], x.clone());
    }
    Ok(out.path)
}

/// Euler scheme on the three-term integral equation; jumps use `psi_bar` exactly.
pub fn solve_ito_taylor(sde: &GeometricalSdeMap, x0: &[f64], noise: &SemimartingalePath) -> Result<StatePath, SolveError> {
    check_inputs(sde.state_dim, &sde.noise_chart, x0, noise)?;
    let (m, n) = (sde.state_dim, noise.dim());
    let additive = noise.chart.is_additive();
    let mut out = PathBuilder::new(noise, x0);
    let mut x = x0.to_vec();
    for k in 0..noise.steps() {
        let kv = parameter_at(&sde.parameter, noise, k)?;
        let z = &noise.values[k];
        let dz = if additive { noise.increments[k].clone() } else { numeric::sub(&noise.pre_jump_value(k), z) };
        if dz.iter().any(|v| *v != 0.0) {
            let d1 = sde.first_derivative(&x, z, &kv);
            let d2 = sde.second_derivative(&x, z, &kv);
            for i in 0..m {
                let mut acc = 0.0;
                for a in 0..n {
                    acc += d1[i * n + a] * dz[a];
                    for b in 0..n {
                        acc += 0.5 * d2[(i * n + a) * n + b] * dz[a] * dz[b];
                    }
                }
                x[i] += acc;
            }
            if exploded(&x) {
                return Err(out.explode(noise.times[k + 1]));
            }
        }
        let mut z_minus = noise.pre_jump_value(k);
        for j in noise.jumps_in_step(k) {
            let before = x.clone();
            let z_plus = noise.chart.multiply(&j.value, &z_minus);
            x = match &sde.canonical {
                Some(psi) => psi(&x, &j.value, &kv),
                None => sde.eval(&x, &z_plus, &z_minus, &kv),
            };
            if exploded(&x) {
                return Err(out.explode(j.time));
            }
            out.path.jumps.push(StateJump { step: k, before, after: x.clone() });
            z_minus = z_plus;
        }
        out.push(noise.times[k + 1], x.clone());
    }
    Ok(out.path)
}

/// Affine map `psi_bar(x, z', z) = x + sigma(x)(z' - z)` on `R^n` noise; `sigma` returns row-major `m x n`.
pub fn as_affine<F>(state_dim: usize, noise_dim: usize, sigma: F) -> GeometricalSdeMap
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    let sigma = Arc::new(sigma);
    let (m, n) = (state_dim, noise_dim);
    let s1 = sigma.clone();
    let s2 = sigma.clone();
    let s3 = sigma.clone();
    let mut g = GeometricalSdeMap::new("affine", m, LieGroupChart::additive(n), move |x, zp, z, _| {
        let dz = numeric::sub(zp, z);
        let s = s1(x);
        (0..m).map(|i| x[i] + (0..n).map(|a| s[i * n + a] * dz[a]).sum::<f64>()).collect()
    })
    .with_derivatives(move |x, _| s2(x), move |_, _| vec![0.0; m * n * n]);
    g.canonical = Some(Arc::new(move |x, dz, _| {
        let s = s3(x);
        (0..m).map(|i| x[i] + (0..n).map(|a| s[i * n + a] * dz[a]).sum::<f64>()).collect()
    }));
    g
}

/// Canonical form of the affine map on `R^n` noise, with analytic Jacobians.
pub fn affine_canonical<F>(state_dim: usize, noise_dim: usize, sigma: F) -> CanonicalSdeMap
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    let g = as_affine(state_dim, noise_dim, sigma);
    let psi = g.canonical.clone().expect("affine maps are canonical");
    CanonicalSdeMap::with_parameter("affine", state_dim, LieGroupChart::additive(noise_dim), None, move |x, z, k| psi(x, z, k))
}

/// Specification of the jump part of a smooth Lévy SDE.
#[derive(Clone)]
pub struct JumpPart {
    pub intensity: f64,
    pub law: Arc<dyn JumpLaw>,
    /// `F(x, z)` with `F(x, 0) = 0`.
    pub f: Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>,
}

/// Weighted nodes integrating `nu0` over the unit ball `|z| <= 1`.
pub fn truncated_quadrature(intensity: f64, law: &dyn JumpLaw) -> Result<Vec<(f64, Vec<f64>)>, SolveError> {
    if let Some(atoms) = law.atoms() {
        return Ok(atoms
            .into_iter()
            .filter(|(_, z)| numeric::norm(z) <= 1.0)
            .map(|(w, z)| (w * intensity, z))
            .collect());
    }
    let dim = law.dim();
    let mut breaks = law.radial_breakpoints();
    breaks.retain(|b| *b > 0.0 && *b < 1.0);
    breaks.insert(0, 0.0);
    breaks.push(1.0);
    let (gx, gw) = gauss_legendre(24);
    let mut radial = Vec::new();
    for w in breaks.windows(2) {
        let panels = 16;
        for p in 0..panels {
            let a = w[0] + (w[1] - w[0]) * p as f64 / panels as f64;
            let b = w[0] + (w[1] - w[0]) * (p + 1) as f64 / panels as f64;
            for (x, wt) in gx.iter().zip(&gw) {
                radial.push((a + 0.5 * (b - a) * (x + 1.0), 0.5 * (b - a) * wt));
            }
        }
    }
    let mut nodes = Vec::new();
    match dim {
        1 => {
            for (r, w) in &radial {
                for s in [-1.0, 1.0] {
                    let z = vec![s * r];
                    let d = law.density(&z).ok_or_else(|| quad_err(law))?;
                    nodes.push((intensity * w * d, z));
                }
            }
        }
        2 => {
            let k = 64;
            for (r, w) in &radial {
                for j in 0..k {
                    let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / k as f64;
                    let z = vec![r * phi.cos(), r * phi.sin()];
                    let d = law.density(&z).ok_or_else(|| quad_err(law))?;
                    nodes.push((intensity * w * r * d * 2.0 * std::f64::consts::PI / k as f64, z));
                }
            }
        }
        _ => return Err(quad_err(law)),
    }
    Ok(nodes)
}

fn quad_err(law: &dyn JumpLaw) -> SolveError {
    SolveError::Config(format!("no deterministic quadrature for {}", law.describe()))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Smooth Lévy SDE `dX = mu dt + sigma_i dW^i + int F(X-, z) (N - 1_{|z|<=1} nu0 dt)(dz)`
/// as a canonical map on `R^{1 + b + j}` with coordinates `(t, W, jump process)`.
///
/// The drift is replaced by `mu - int_{|z|<=1} (F(x, z) - dF(x, 0) z) nu0(dz)`.
pub fn as_smooth_levy(
    state_dim: usize,
    mu: StateFn,
    sigma: Vec<StateFn>,
    jumps: Option<JumpPart>,
) -> Result<CanonicalSdeMap, SolveError> {
    let m = state_dim;
    let nb = sigma.len();
    let (nj, nodes) = match &jumps {
        Some(j) => (j.law.dim(), truncated_quadrature(j.intensity, j.law.as_ref())?),
        None => (0, Vec::new()),
    };
    let f = jumps.as_ref().map(|j| j.f.clone());
    let f_for_drift = f.clone();
    let corrected = Arc::new(move |x: &[f64]| -> Vec<f64> {
        let mut out = mu(x);
        if let Some(f) = &f_for_drift {
            let zero = vec![0.0; nj];
            let mut jac = vec![vec![0.0; m]; nj];
            for (a, col) in jac.iter_mut().enumerate() {
                let h = fd_step(0.0);
                let mut zp = zero.clone();
                zp[a] = h;
                let p = f(x, &zp);
                zp[a] = -h;
                let q = f(x, &zp);
                for i in 0..m {
                    col[i] = (p[i] - q[i]) / (2.0 * h);
                }
            }
            for (w, z) in &nodes {
                let fz = f(x, z);
                for i in 0..m {
                    let lin: f64 = (0..nj).map(|a| jac[a][i] * z[a]).sum();
                    out[i] -= w * (fz[i] - lin);
                }
            }
        }
        out
    });
    let n = 1 + nb + nj;
    Ok(CanonicalSdeMap::new("smooth_levy", m, LieGroupChart::additive(n), move |x, dz| {
        let mut out = x.to_vec();
        if dz[0] != 0.0 {
            for (o, v) in out.iter_mut().zip(corrected(x)) {
                *o += v * dz[0];
            }
        }
        for (b, s) in sigma.iter().enumerate() {
            let w = dz[1 + b];
            if w != 0.0 {
                for (o, v) in out.iter_mut().zip(s(x)) {
                    *o += v * w;
                }
            }
        }
        if let Some(f) = &f {
            let zj = &dz[1 + nb..];
            if zj.iter().any(|v| *v != 0.0) {
                for (o, v) in out.iter_mut().zip(f(x, zj)) {
                    *o += v;
                }
            }
        }
        out
    }))
}

/// Corrected drift `mu_tilde(x)` of [`as_smooth_levy`].
pub fn smooth_levy_drift(sde: &CanonicalSdeMap, x: &[f64]) -> Vec<f64> {
    let mut dz = vec![0.0; sde.noise_chart.dim()];
    dz[0] = 1.0;
    numeric::sub(&sde.eval(x, &dz), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{path_rng, sample_brownian, sample_discrete_iterated, PointMass};
    use nalgebra::DMatrix;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((s - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn gl2_doubling_iterates() {
        let chart = LieGroupChart::affine_product(2, 2);
        let sde = CanonicalSdeMap::new("affine_gl2", 2, chart.clone(), |x, z| {
            vec![z[0] * x[0] + z[1] * x[1] + z[4], z[2] * x[0] + z[3] * x[1] + z[5]]
        });
        let noise = sample_discrete_iterated(&chart, 5, |_| vec![2.0, 0.0, 0.0, 2.0, 0.0, 0.0], &mut path_rng(0, 0)).unwrap();
        let x = solve_increment_map(&sde, &[1.0, 0.0], &noise).unwrap();
        for (n, v) in x.values.iter().enumerate() {
            assert_eq!(v, &vec![2f64.powi(n as i32), 0.0]);
        }
    }

    #[test]
    fn affine_on_time_gives_exponential() {
        let sde = as_affine(1, 1, |x| vec![x[0]]);
        let chart = LieGroupChart::additive(1);
        let step = 1e-3;
        let times = crate::noise::uniform_grid(1.0, step).unwrap();
        let incs: Vec<Vec<f64>> = times.windows(2).map(|w| vec![w[1] - w[0]]).collect();
        let noise = SemimartingalePath::from_increments(chart, times, vec![0.0], incs, vec![]).unwrap();
        let x = solve_ito_taylor(&sde, &[1.0], &noise).unwrap();
        let exact = 1f64.exp();
        assert!((x.last()[0] - exact).abs() / exact < 2.0 * step);
    }

    #[test]
    fn smooth_levy_linear_jump_has_no_correction() {
        let jumps = JumpPart {
            intensity: 3.0,
            law: Arc::new(PointMass { at: vec![0.5] }),
            f: Arc::new(|x: &[f64], z: &[f64]| vec![x[0] * z[0]]),
        };
        let sde = as_smooth_levy(1, Arc::new(|_: &[f64]| vec![0.0]), vec![], Some(jumps)).unwrap();
        assert!(smooth_levy_drift(&sde, &[1.7])[0].abs() < 1e-9);
    }

    #[test]
    fn smooth_levy_quadratic_jump_correction() {
        // F = z^2 with nu0 = 2 delta_{1/2}: correction -2 * 1/4.
        let jumps = JumpPart {
            intensity: 2.0,
            law: Arc::new(PointMass { at: vec![0.5] }),
            f: Arc::new(|_: &[f64], z: &[f64]| vec![z[0] * z[0]]),
        };
        let sde = as_smooth_levy(1, Arc::new(|_: &[f64]| vec![1.0]), vec![], Some(jumps)).unwrap();
        assert!((smooth_levy_drift(&sde, &[0.0])[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn explosion_returns_partial_path() {
        let sde = CanonicalSdeMap::new("blowup", 1, LieGroupChart::additive(1), |x, z| vec![x[0] * (1.0 + 1e3 * z[0].abs() + 1.0)]);
        let noise = sample_brownian(&DMatrix::identity(1, 1), 1.0, 0.01, &mut path_rng(3, 0)).unwrap();
        match solve_increment_map(&sde, &[1.0], &noise) {
            Err(SolveError::Explosion { time, partial }) => {
                assert!(time < 1.0);
                assert!(partial.values.iter().all(|v| v[0].abs() <= EXPLOSION_BOUND));
                assert_eq!(partial.times.len(), partial.values.len());
            }
            other => panic!("expected explosion, got {other:?}"),
        }
    }
}
