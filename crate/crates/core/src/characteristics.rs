//! Empirical semimartingale characteristics, their transformation rules and law-level tests.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::group::{GroupError, LieGroupChart};
use crate::noise::{law_expectation, path_rng, JumpLaw, LevyTriplet, NoiseError, PathRng, PushforwardLaw, SemimartingalePath};
use crate::numeric;
use crate::transform::{GaugeAction, TimeAction, TransformError};

#[derive(Debug, Error)]
pub enum CharError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty ensemble")]
    Empty,
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

const CHUNK: usize = 128;
const LOG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    /// Times where cumulative characteristics are reported; empty picks about 50 grid times.
    pub report_times: Vec<f64>,
    pub time_bins: usize,
    pub jump_bins: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { report_times: Vec::new(), time_bins: 4, jump_bins: 32 }
    }
}

/// Marginal histograms of jump log-coordinates, `counts[time_bin][axis][bin]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpHistogram {
    pub time_edges: Vec<f64>,
    pub axis_edges: Vec<Vec<f64>>,
    pub counts: Vec<Vec<Vec<u64>>>,
    pub total: u64,
}

impl JumpHistogram {
    fn build(jumps: &[(f64, Vec<f64>)], dim: usize, t0: f64, t1: f64, time_bins: usize, bins: usize) -> Self {
        let time_edges: Vec<f64> = (0..=time_bins).map(|i| t0 + (t1 - t0) * i as f64 / time_bins as f64).collect();
        let axis_edges: Vec<Vec<f64>> = (0..dim)
            .map(|a| {
                let (lo, hi) = jumps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, v)| (l.min(v[a]), h.max(v[a])));
                if !lo.is_finite() {
                    return vec![-1.0, 1.0];
                }
                let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
                (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
            })
            .collect();
        let mut counts = vec![vec![vec![0u64; bins]; dim]; time_bins];
        for (t, v) in jumps {
            let tb = bin_index(&time_edges, *t);
            for a in 0..dim {
                counts[tb][a][bin_index(&axis_edges[a], v[a])] += 1;
            }
        }
        Self { time_edges, axis_edges, counts, total: jumps.len() as u64 }
    }

    /// Jumps counted on axis 0 over all bins; equals `total`.
    pub fn mass(&self) -> u64 {
        self.counts.iter().map(|t| t.first().map_or(0, |c| c.iter().sum::<u64>())).sum()
    }
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].partition_point(|e| *e <= x).min(bins - 1)
}

/// Ensemble estimate of cumulative `(b, A)` at report times plus the observed jumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacteristicsEstimate {
    pub dim: usize,
    pub times: Vec<f64>,
    pub b_hat: Vec<Vec<f64>>,
    pub b_se: Vec<Vec<f64>>,
    /// Row-major `n x n` per report time.
    pub a_hat: Vec<Vec<f64>>,
    pub a_se: Vec<Vec<f64>>,
    pub nu_hat: JumpHistogram,
    /// `(time, log-coordinates)` of every observed jump.
    #[serde(skip)]
    pub jumps: Vec<(f64, Vec<f64>)>,
    pub sample_count: usize,
    pub hunt_convention: String,
    pub warnings: Vec<String>,
}

impl CharacteristicsEstimate {
    pub fn jump_count(&self) -> u64 {
        self.nu_hat.total
    }

    /// Index of the report time closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        (0..self.times.len()).min_by(|&i, &j| (self.times[i] - t).abs().total_cmp(&(self.times[j] - t).abs())).unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    b: Vec<f64>,
    bb: Vec<f64>,
    a: Vec<f64>,
    aa: Vec<f64>,
    jumps: Vec<(f64, Vec<f64>)>,
    paths: usize,
}

impl Accumulator {
    fn new(slots: usize, n: usize) -> Self {
        Self {
            b: vec![0.0; slots * n],
            bb: vec![0.0; slots * n],
            a: vec![0.0; slots * n * n],
            aa: vec![0.0; slots * n * n],
            jumps: Vec::new(),
            paths: 0,
        }
    }

    fn merge(&mut self, other: Accumulator) {
        for (x, y) in [(&mut self.b, &other.b), (&mut self.bb, &other.bb), (&mut self.a, &other.a), (&mut self.aa, &other.aa)] {
            x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
        }
        self.jumps.extend(other.jumps);
        self.paths += other.paths;
    }
}

struct Layout {
    times: Vec<f64>,
    indices: Vec<usize>,
    chart: LieGroupChart,
}

impl Layout {
    fn new(first: &SemimartingalePath, config: &EstimateConfig) -> Self {
        let grid = &first.times;
        let indices: Vec<usize> = if config.report_times.is_empty() {
            let steps = grid.len() - 1;
            let every = steps.div_ceil(50).max(1);
            let mut v: Vec<usize> = (every..=steps).step_by(every).collect();
            if v.last() != Some(&steps) {
                v.push(steps);
            }
            v
        } else {
            config.report_times.iter().map(|t| first.index_at(*t)).collect()
        };
        Self { times: indices.iter().map(|i| grid[*i]).collect(), indices, chart: first.chart.clone() }
    }

    fn add(&self, acc: &mut Accumulator, path: &SemimartingalePath) -> Result<(), CharError> {
        if path.chart != self.chart || path.times.len() <= *self.indices.last().unwrap() {
            return Err(CharError::Config("ensemble paths use different charts or grids".into()));
        }
        let n = self.chart.dim();
        let mut b = vec![0.0; n];
        let mut a = vec![0.0; n * n];
        let mut slot = 0;
        let mut k = 0;
        while slot < self.indices.len() {
            while k < self.indices[slot] {
                let xi = if self.chart.is_additive() {
                    path.increments[k].clone()
                } else {
                    self.chart.log_coords(&path.continuous_element(k), LOG_TOL)?
                };
                for i in 0..n {
                    b[i] += xi[i];
                    for j in 0..n {
                        a[i * n + j] += xi[i] * xi[j];
                    }
                }
                for jm in path.jumps_in_step(k) {
                    let h = self.chart.hunt(&jm.value);
                    for i in 0..n {
                        b[i] += h[i];
                    }
                    let log = if self.chart.is_additive() { jm.value.clone() } else { self.chart.log_coords(&jm.value, LOG_TOL)? };
                    acc.jumps.push((jm.time, log));
                }
                k += 1;
            }
            for i in 0..n {
                acc.b[slot * n + i] += b[i];
                acc.bb[slot * n + i] += b[i] * b[i];
            }
            for i in 0..n * n {
                acc.a[slot * n * n + i] += a[i];
                acc.aa[slot * n * n + i] += a[i] * a[i];
            }
            slot += 1;
        }
        acc.paths += 1;
        Ok(())
    }

    fn finish(self, acc: Accumulator, config: &EstimateConfig, horizon: f64, t0: f64) -> CharacteristicsEstimate {
        let n = self.chart.dim();
        let p = acc.paths as f64;
        let stats = |s: &[f64], q: &[f64], w: usize| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let mean: Vec<Vec<f64>> = (0..self.times.len()).map(|t| (0..w).map(|i| s[t * w + i] / p).collect()).collect();
            let se = (0..self.times.len())
                .map(|t| {
                    (0..w)
                        .map(|i| {
                            let m = mean[t][i];
                            let var = (q[t * w + i] / p - m * m).max(0.0) * p / (p - 1.0).max(1.0);
                            (var / p).sqrt()
                        })
                        .collect()
                })
                .collect();
            (mean, se)
        };
        let (b_hat, b_se) = stats(&acc.b, &acc.bb, n);
        let (a_hat, a_se) = stats(&acc.a, &acc.aa, n * n);
        let mut warnings = Vec::new();
        if acc.paths < 100 {
            warnings.push(format!("only {} paths; at least 100 are recommended", acc.paths));
        }
        let nu_hat = JumpHistogram::build(&acc.jumps, n, t0, horizon, config.time_bins, config.jump_bins);
        CharacteristicsEstimate {
            dim: n,
            times: self.times,
            b_hat,
            b_se,
            a_hat,
            a_se,
            nu_hat,
            jumps: acc.jumps,
            sample_count: acc.paths,
            hunt_convention: format!("h = log * chi(|log|), chi = 1 below {} and 0 beyond {}", 0.5 * self.chart.hunt_radius, self.chart.hunt_radius),
            warnings,
        }
    }
}

/// Streams `count` paths from `make` (path `i` gets stream `i` of `master`) into an estimate.
///
/// Paths are processed in fixed chunks and merged in index order, so results do not depend on
/// the thread count.
pub fn estimate_characteristics<F>(
    master: u64,
    count: usize,
    config: &EstimateConfig,
    make: F,
) -> Result<CharacteristicsEstimate, CharError>
where
    F: Fn(&mut PathRng, usize) -> Result<SemimartingalePath, CharError> + Sync,
{
    if count == 0 {
        return Err(CharError::Empty);
    }
    let first = make(&mut path_rng(master, 0), 0)?;
    let layout = Layout::new(&first, config);
    let n = first.chart.dim();
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Result<Accumulator, CharError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(layout.times.len(), n);
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                let path = if i == 0 { first.clone() } else { make(&mut path_rng(master, i as u64), i)? };
                layout.add(&mut acc, &path)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::new(layout.times.len(), n);
    for p in parts {
        total.merge(p?);
    }
    let horizon = first.horizon();
    let t0 = first.times[0];
    Ok(layout.finish(total, config, horizon, t0))
}

/// Estimate over paths already in memory.
pub fn estimate_from_paths(paths: &[SemimartingalePath], config: &EstimateConfig) -> Result<CharacteristicsEstimate, CharError> {
    if paths.is_empty() {
        return Err(CharError::Empty);
    }
    let layout = Layout::new(&paths[0], config);
    let n = paths[0].chart.dim();
    let parts: Vec<Result<Accumulator, CharError>> = paths
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accumulator::new(layout.times.len(), n);
            for p in chunk {
                layout.add(&mut acc, p)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::new(layout.times.len(), n);
    for p in parts {
        total.merge(p?);
    }
    let (h, t0) = (paths[0].horizon(), paths[0].times[0]);
    Ok(layout.finish(total, config, h, t0))
}

fn half_o_contract(o: &[f64], a: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|al| {
            let mut s = 0.0;
            for b in 0..n {
                for c in 0..n {
                    s += o[(al * n + b) * n + c] * a[b * n + c];
                }
            }
            0.5 * s
        })
        .collect()
}

fn conjugate(u: &DMatrix<f64>, a: &[f64], n: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, a);
    let out = u * m * u.transpose();
    (0..n * n).map(|k| out[(k / n, k % n)]).collect()
}

/// Result of the constant-`g` transformation rule applied to a triplet.
#[derive(Debug, Clone)]
pub struct TransformedTriplet {
    pub triplet: LevyTriplet,
    /// `int (h(Xi_g z) - Upsilon_g h(z)) nu(dz)` and its Monte Carlo standard error.
    pub drift_correction: Vec<f64>,
    pub correction_se: Vec<f64>,
    /// Whether the standard error is below `1e-3` relative to `max(1, |b~|)`.
    pub converged: bool,
}

/// `b~ = Upsilon b + 1/2 O(A) + int (h(Xi_g z) - Upsilon h(z)) nu(dz)`, `A~ = Upsilon A Upsilon^T`, `nu~ = Xi_g* nu`.
pub fn transformed_characteristics(
    triplet: &LevyTriplet,
    action: &GaugeAction,
    g: &[f64],
    samples: usize,
) -> Result<TransformedTriplet, CharError> {
    if action.noise != triplet.chart {
        return Err(CharError::Config(format!("action `{}` does not act on {}", action.name, triplet.chart.name())));
    }
    let n = triplet.dim();
    let u = action.upsilon(g);
    let a_vec: Vec<f64> = (0..n * n).map(|k| triplet.a0[(k / n, k % n)]).collect();
    let a_new = DMatrix::from_row_slice(n, n, &conjugate(&u, &a_vec, n));
    let ub = &u * nalgebra::DVector::from_column_slice(&triplet.b0);
    let mut b_new: Vec<f64> = ub.iter().copied().collect();
    if triplet.chart.is_additive() {
        let o = action.o_second(g)?;
        b_new = numeric::add(&b_new, &half_o_contract(&o, &a_vec, n));
    }
    let (mut corr, mut se) = (vec![0.0; n], vec![0.0; n]);
    let mut law: Option<Arc<dyn JumpLaw>> = None;
    if let Some(base) = triplet.law.as_ref().filter(|_| triplet.intensity > 0.0) {
        let chart = triplet.chart.clone();
        let (gc, act, uc) = (g.to_vec(), action.clone(), u.clone());
        let (m, s) = law_expectation(base.as_ref(), 0x7a11_5eed, samples, |z| {
            let hz = nalgebra::DVector::from_vec(chart.hunt(z));
            let uh = &uc * hz;
            numeric::sub(&chart.hunt(&act.xi(&gc, z)), uh.as_slice())
        });
        corr = numeric::scale(&m, triplet.intensity);
        se = numeric::scale(&s, triplet.intensity);
        b_new = numeric::add(&b_new, &corr);
        let (gm, am) = (g.to_vec(), action.clone());
        law = Some(Arc::new(PushforwardLaw {
            base: base.clone(),
            map: Arc::new(move |z| am.xi(&gm, z)),
            label: format!("{}({:?})", action.name, g),
            preserves_symmetry: action.automorphism,
        }));
    }
    let scale = numeric::max_abs(&b_new).max(1.0);
    let converged = numeric::max_abs(&se) <= 1e-3 * scale;
    Ok(TransformedTriplet {
        triplet: LevyTriplet::new(triplet.chart.clone(), b_new, a_new, triplet.intensity, law)?,
        drift_correction: corr,
        correction_se: se,
        converged,
    })
}

/// Applies the transformation rules to an estimate with a deterministic gauge control `g(t)`,
/// frozen on each interval between report times at its left end.
pub fn transform_estimate<G>(
    est: &CharacteristicsEstimate,
    action: &GaugeAction,
    chart: &LieGroupChart,
    g_of_time: G,
    config: &EstimateConfig,
) -> Result<CharacteristicsEstimate, CharError>
where
    G: Fn(f64) -> Vec<f64>,
{
    if &action.noise != chart || chart.dim() != est.dim {
        return Err(CharError::Config("estimate and action live on different groups".into()));
    }
    let n = est.dim;
    let p = est.sample_count as f64;
    let t0 = est.nu_hat.time_edges[0];
    let mut out = est.clone();
    let mut jumps = Vec::with_capacity(est.jumps.len());
    let (mut b_acc, mut a_acc) = (vec![0.0; n], vec![0.0; n * n]);
    let (mut b_prev, mut a_prev) = (vec![0.0; n], vec![0.0; n * n]);
    let (mut bse_prev, mut ase_prev) = (vec![0.0; n], vec![0.0; n * n]);
    let (mut bvar, mut avar) = (vec![0.0; n], vec![0.0; n * n]);
    let mut left = t0;
    for (s, t) in est.times.iter().enumerate() {
        let g = g_of_time(left);
        let u = action.upsilon(&g);
        let db = numeric::sub(&est.b_hat[s], &b_prev);
        let da = numeric::sub(&est.a_hat[s], &a_prev);
        let mut nb: Vec<f64> = (&u * nalgebra::DVector::from_vec(db)).iter().copied().collect();
        if chart.is_additive() {
            nb = numeric::add(&nb, &half_o_contract(&action.o_second(&g)?, &da, n));
        }
        for (time, log) in est.jumps.iter().filter(|(tj, _)| *tj > left && *tj <= *t) {
            let z = if chart.is_additive() { log.clone() } else { chart.exp(log, 1e-13)? };
            let zt = action.xi(&g, &z);
            let hz = nalgebra::DVector::from_vec(chart.hunt(&z));
            let d = numeric::sub(&chart.hunt(&zt), (&u * hz).as_slice());
            nb = numeric::axpy(&nb, 1.0 / p, &d);
            let log_t = if chart.is_additive() { zt } else { chart.log_coords(&zt, LOG_TOL)? };
            jumps.push((*time, log_t));
        }
        b_acc = numeric::add(&b_acc, &nb);
        a_acc = numeric::add(&a_acc, &conjugate(&u, &da, n));
        // Standard errors of increments combine in quadrature, ignoring correlations between components.
        for i in 0..n {
            let dv = (est.b_se[s][i].powi(2) - bse_prev[i]).max(0.0);
            bvar[i] += (0..n).map(|j| u[(i, j)].powi(2) * dv).sum::<f64>();
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        let dv = (est.a_se[s][k * n + l].powi(2) - ase_prev[k * n + l]).max(0.0);
                        acc += (u[(i, k)] * u[(j, l)]).powi(2) * dv;
                    }
                }
                avar[i * n + j] += acc;
            }
        }
        out.b_hat[s] = b_acc.clone();
        out.a_hat[s] = a_acc.clone();
        out.b_se[s] = bvar.iter().map(|v| v.sqrt()).collect();
        out.a_se[s] = avar.iter().map(|v| v.sqrt()).collect();
        b_prev = est.b_hat[s].clone();
        a_prev = est.a_hat[s].clone();
        bse_prev = est.b_se[s].iter().map(|v| v * v).collect();
        ase_prev = est.a_se[s].iter().map(|v| v * v).collect();
        left = *t;
    }
    let horizon = *est.nu_hat.time_edges.last().unwrap();
    out.nu_hat = JumpHistogram::build(&jumps, n, t0, horizon, config.time_bins, config.jump_bins);
    out.jumps = jumps;
    Ok(out)
}

/// Largest deviation between two estimates in units of their combined standard error,
/// over `b`, `A` and jump counts at every report time.
pub fn compare_estimates(a: &CharacteristicsEstimate, b: &CharacteristicsEstimate) -> Result<f64, CharError> {
    if a.times.len() != b.times.len() || a.dim != b.dim {
        return Err(CharError::Config("estimates have different layouts".into()));
    }
    let mut worst: f64 = 0.0;
    let mut dev = |x: f64, y: f64, sx: f64, sy: f64| {
        let se = (sx * sx + sy * sy).sqrt();
        let d = (x - y).abs();
        worst = worst.max(if se > 0.0 { d / se } else if d > 1e-12 { f64::INFINITY } else { 0.0 });
    };
    for s in 0..a.times.len() {
        for i in 0..a.dim {
            dev(a.b_hat[s][i], b.b_hat[s][i], a.b_se[s][i], b.b_se[s][i]);
        }
        for i in 0..a.dim * a.dim {
            dev(a.a_hat[s][i], b.a_hat[s][i], a.a_se[s][i], b.a_se[s][i]);
        }
    }
    let (ja, jb) = (a.jump_count() as f64, b.jump_count() as f64);
    dev(ja / a.sample_count as f64, jb / b.sample_count as f64, ja.sqrt() / a.sample_count as f64, jb.sqrt() / b.sample_count as f64);
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub condition: String,
    pub parameter: Vec<f64>,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyCheckReport {
    pub action: String,
    pub results: Vec<ConditionResult>,
    pub pass: bool,
}

impl LevyCheckReport {
    fn new(action: String, results: Vec<ConditionResult>) -> Self {
        let pass = results.iter().all(|r| r.pass);
        Self { action, results, pass }
    }

    /// Whether every result of the named condition passed.
    pub fn condition_passes(&self, name: &str) -> bool {
        self.results.iter().filter(|r| r.condition == name).all(|r| r.pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyCheckConfig {
    /// Run the full drift rule with the Hunt correction integral even for automorphisms.
    pub full: bool,
    pub samples: usize,
    pub residual_tol: f64,
    pub se_multiple: f64,
    pub bins: usize,
    pub seed: u64,
}

impl Default for LevyCheckConfig {
    fn default() -> Self {
        Self { full: false, samples: 100_000, residual_tol: 1e-6, se_multiple: 5.0, bins: 32, seed: 0x1e55 }
    }
}

/// `b0 = Upsilon b0`, `A0 = Upsilon A0 Upsilon^T`, `nu0 = Xi_g* nu0` for each sampled `g`.
pub fn levy_gauge_check(
    triplet: &LevyTriplet,
    action: &GaugeAction,
    gs: &[Vec<f64>],
    config: &LevyCheckConfig,
) -> Result<LevyCheckReport, CharError> {
    if !action.automorphism && !config.full {
        return Err(CharError::Config(format!(
            "`{}` is not an action by automorphisms; the simplified criterion does not apply, request the full check",
            action.name
        )));
    }
    let n = triplet.dim();
    let mut results = Vec::new();
    for g in gs {
        let (drift, drift_se) = if config.full {
            let t = transformed_characteristics(triplet, action, g, config.samples)?;
            (numeric::norm(&numeric::sub(&t.triplet.b0, &triplet.b0)), numeric::norm(&t.correction_se))
        } else {
            let u = action.upsilon(g);
            let ub = &u * nalgebra::DVector::from_column_slice(&triplet.b0);
            (numeric::norm(&numeric::sub(ub.as_slice(), &triplet.b0)), 0.0)
        };
        let thr = config.residual_tol.max(config.se_multiple * drift_se);
        results.push(ConditionResult { condition: "drift".into(), parameter: g.clone(), residual: drift, threshold: thr, pass: drift <= thr });
        let u = action.upsilon(g);
        let a_vec: Vec<f64> = (0..n * n).map(|k| triplet.a0[(k / n, k % n)]).collect();
        let diff = numeric::max_abs_diff(&conjugate(&u, &a_vec, n), &a_vec);
        results.push(ConditionResult {
            condition: "diffusion".into(),
            parameter: g.clone(),
            residual: diff,
            threshold: config.residual_tol,
            pass: diff <= config.residual_tol,
        });
        if let Some(law) = triplet.law.as_ref().filter(|_| triplet.intensity > 0.0) {
            let chart = &triplet.chart;
            let (act, gc) = (action.clone(), g.clone());
            let dev = compare_jump_measures(
                chart,
                law.as_ref(),
                triplet.intensity,
                &|z: &[f64]| z.to_vec(),
                triplet.intensity,
                &move |z: &[f64]| act.xi(&gc, z),
                None,
                config,
            )?;
            results.push(ConditionResult {
                condition: "jump_measure".into(),
                parameter: g.clone(),
                residual: dev,
                threshold: config.se_multiple,
                pass: dev <= config.se_multiple,
            });
        }
    }
    Ok(LevyCheckReport::new(action.name.clone(), results))
}

/// `b0 = (1/r)(gamma b0 + 1/2 Q(A0) + int (h(Gamma_r z) - gamma h(z)) nu0(dz))`, `A0 = (1/r) gamma A0 gamma^T`,
/// `nu0 = (1/r) Gamma_r* nu0`.
///
/// The jump condition is compared on `|z| >= c max(1, r)` when the law has a radial breakpoint `c`,
/// where the truncated measure and its image overlap.
pub fn levy_time_check(
    triplet: &LevyTriplet,
    action: &TimeAction,
    rs: &[f64],
    config: &LevyCheckConfig,
) -> Result<LevyCheckReport, CharError> {
    if action.noise != triplet.chart {
        return Err(CharError::Config(format!("time action `{}` does not act on {}", action.name, triplet.chart.name())));
    }
    let n = triplet.dim();
    let a_vec: Vec<f64> = (0..n * n).map(|k| triplet.a0[(k / n, k % n)]).collect();
    let mut results = Vec::new();
    for &r in rs {
        if r.is_nan() || r <= 0.0 {
            return Err(CharError::Config(format!("time scale {r} must be positive")));
        }
        let gam = action.gamma_lin(r);
        let q = action.q_second(r);
        let gb = &gam * nalgebra::DVector::from_column_slice(&triplet.b0);
        let mut b_new = numeric::add(gb.as_slice(), &half_o_contract(&q, &a_vec, n));
        let mut se = vec![0.0; n];
        if let Some(law) = triplet.law.as_ref().filter(|_| triplet.intensity > 0.0) {
            let chart = triplet.chart.clone();
            let (act, gl) = (action.clone(), gam.clone());
            let (m, s) = law_expectation(law.as_ref(), config.seed ^ 0x7157, config.samples, |z| {
                let hz = nalgebra::DVector::from_vec(chart.hunt(z));
                numeric::sub(&chart.hunt(&act.gamma(r, z)), (&gl * hz).as_slice())
            });
            b_new = numeric::axpy(&b_new, triplet.intensity, &m);
            se = numeric::scale(&s, triplet.intensity / r);
        }
        let b_new = numeric::scale(&b_new, 1.0 / r);
        let drift = numeric::norm(&numeric::sub(&b_new, &triplet.b0));
        let thr = config.residual_tol.max(config.se_multiple * numeric::norm(&se));
        results.push(ConditionResult { condition: "drift".into(), parameter: vec![r], residual: drift, threshold: thr, pass: drift <= thr });
        let a_new: Vec<f64> = conjugate(&gam, &a_vec, n).iter().map(|v| v / r).collect();
        let diff = numeric::max_abs_diff(&a_new, &a_vec);
        results.push(ConditionResult {
            condition: "diffusion".into(),
            parameter: vec![r],
            residual: diff,
            threshold: config.residual_tol,
            pass: diff <= config.residual_tol,
        });
        if let Some(law) = triplet.law.as_ref().filter(|_| triplet.intensity > 0.0) {
            let cut = law.radial_breakpoints().into_iter().fold(0.0, f64::max) * r.max(1.0);
            let act = action.clone();
            let dev = compare_jump_measures(
                &triplet.chart,
                law.as_ref(),
                triplet.intensity,
                &|z: &[f64]| z.to_vec(),
                triplet.intensity / r,
                &move |z: &[f64]| act.gamma(r, z),
                if cut > 0.0 { Some(cut) } else { None },
                config,
            )?;
            results.push(ConditionResult {
                condition: "jump_measure".into(),
                parameter: vec![r],
                residual: dev,
                threshold: config.se_multiple,
                pass: dev <= config.se_multiple,
            });
        }
    }
    Ok(LevyCheckReport::new(action.name.clone(), results))
}

/// Largest per-bin deviation, in standard errors, between the measures `mass_a * (map_a)_* law`
/// and `mass_b * (map_b)_* law`, each estimated from its own sample stream.
///
/// Bins are equal-frequency marginal bins of the pooled log-coordinates, restricted to `|log| >= cut`.
#[allow(clippy::too_many_arguments)]
fn compare_jump_measures(
    chart: &LieGroupChart,
    law: &dyn JumpLaw,
    mass_a: f64,
    map_a: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    mass_b: f64,
    map_b: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    cut: Option<f64>,
    config: &LevyCheckConfig,
) -> Result<f64, CharError> {
    let draw = |seed: u64, map: &(dyn Fn(&[f64]) -> Vec<f64> + Sync)| -> Result<Vec<Vec<f64>>, CharError> {
        let mut rng = path_rng(seed, 0);
        (0..config.samples)
            .map(|_| {
                let z = map(&law.sample(&mut rng));
                Ok(if chart.is_additive() { z } else { chart.log_coords(&z, LOG_TOL)? })
            })
            .collect()
    };
    let keep = |v: &Vec<f64>| cut.is_none_or(|c| numeric::norm(v) >= c);
    let sa: Vec<Vec<f64>> = draw(config.seed, map_a)?.into_iter().filter(keep).collect();
    let sb: Vec<Vec<f64>> = draw(config.seed.wrapping_add(1), map_b)?.into_iter().filter(keep).collect();
    let s = config.samples as f64;
    let mut worst: f64 = 0.0;
    for axis in 0..chart.dim() {
        let mut pooled: Vec<f64> = sa.iter().chain(&sb).map(|v| v[axis]).collect();
        pooled.sort_by(f64::total_cmp);
        let edges = quantile_edges(&pooled, config.bins);
        let count = |set: &[Vec<f64>]| {
            let mut c = vec![0u64; edges.len() + 1];
            for v in set {
                c[edges.partition_point(|e| *e < v[axis])] += 1;
            }
            c
        };
        let (ca, cb) = (count(&sa), count(&sb));
        for (x, y) in ca.iter().zip(&cb) {
            let (pa, pb) = (*x as f64 / s, *y as f64 / s);
            let (ma, mb) = (mass_a * pa, mass_b * pb);
            let se = (mass_a * mass_a * pa * (1.0 - pa) / s + mass_b * mass_b * pb * (1.0 - pb) / s).sqrt();
            let d = (ma - mb).abs();
            let dev = if se > 0.0 {
                d / se
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

/// Distinct interior cut points splitting sorted data into about `bins` equal-frequency bins.
fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let mut edges: Vec<f64> = (1..bins).map(|i| sorted[(i * sorted.len() / bins).min(sorted.len() - 1)]).collect();
    edges.dedup();
    edges
}

/// Path features used by the two-sample law tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub values: Vec<Vec<f64>>,
    pub jump_count: usize,
    pub jump_logs: Vec<Vec<f64>>,
}

/// Coordinates at `times` plus count and log-coordinates of the jumps up to the last test time.
pub fn summarize(path: &SemimartingalePath, times: &[f64]) -> Result<PathSummary, CharError> {
    summarize_with_cut(path, times, 0.0)
}

/// [`summarize`] keeping only jumps with `|log| >= cut`, for laws that agree only away from a truncation.
pub fn summarize_with_cut(path: &SemimartingalePath, times: &[f64], cut: f64) -> Result<PathSummary, CharError> {
    let values = times.iter().map(|t| path.value_at(*t).to_vec()).collect();
    let last = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut jump_logs = Vec::new();
    for j in path.jumps.iter().filter(|j| j.time <= last + 1e-12) {
        let log = if path.chart.is_additive() { j.value.clone() } else { path.chart.log_coords(&j.value, LOG_TOL)? };
        if numeric::norm(&log) >= cut {
            jump_logs.push(log);
        }
    }
    Ok(PathSummary { values, jump_count: jump_logs.len(), jump_logs })
}

/// Same as [`summarize`] for a plain state path.
pub fn summarize_values(times_grid: &[f64], values: &[Vec<f64>], times: &[f64]) -> PathSummary {
    let at = |t: f64| {
        let i = times_grid.partition_point(|s| *s <= t + 1e-12).saturating_sub(1);
        values[i].clone()
    };
    PathSummary { values: times.iter().map(|t| at(*t)).collect(), jump_count: 0, jump_logs: Vec::new() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawTestConfig {
    pub p_floor: f64,
    pub se_multiple: f64,
    pub min_paths: usize,
    pub bins: usize,
}

impl Default for LawTestConfig {
    fn default() -> Self {
        Self { p_floor: 0.01, se_multiple: 5.0, min_paths: 500, bins: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub time: f64,
    pub component: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub adjusted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub name: String,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub adjusted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawTestReport {
    pub test_times: Vec<f64>,
    pub ks: Vec<KsResult>,
    /// Per time, the largest `|cov_a - cov_b| / se` over entries.
    pub covariance_deviation_se: Vec<f64>,
    pub chi_square: Vec<ChiSquareResult>,
    pub min_ks_p: f64,
    pub tests: usize,
    pub verdict: bool,
    pub warnings: Vec<String>,
}

/// Two-sample comparison: per-marginal KS at each time, covariances in SE units and
/// chi-square tests on jump counts and jump sizes; Bonferroni over all p-values.
pub fn law_equality_test(
    a: &[PathSummary],
    b: &[PathSummary],
    times: &[f64],
    config: &LawTestConfig,
) -> Result<LawTestReport, CharError> {
    if a.is_empty() || b.is_empty() {
        return Err(CharError::Empty);
    }
    let n = a[0].values.first().map_or(0, |v| v.len());
    if a[0].values.len() != times.len() || b[0].values.len() != times.len() {
        return Err(CharError::Config("summaries do not match the test times".into()));
    }
    let mut warnings = Vec::new();
    if a.len().min(b.len()) < config.min_paths {
        warnings.push(format!("underpowered: {} and {} paths (< {})", a.len(), b.len(), config.min_paths));
    }
    let mut ks = Vec::new();
    let mut cov_dev = Vec::new();
    for (ti, t) in times.iter().enumerate() {
        for c in 0..n {
            let mut xa: Vec<f64> = a.iter().map(|s| s.values[ti][c]).collect();
            let mut xb: Vec<f64> = b.iter().map(|s| s.values[ti][c]).collect();
            let (d, p) = ks_two_sample(&mut xa, &mut xb);
            ks.push(KsResult { time: *t, component: c, statistic: d, p_value: p, adjusted_p: p });
        }
        let ca: Vec<Vec<f64>> = a.iter().map(|s| s.values[ti].clone()).collect();
        let cb: Vec<Vec<f64>> = b.iter().map(|s| s.values[ti].clone()).collect();
        cov_dev.push(covariance_deviation(&ca, &cb));
    }
    let mut chi = Vec::new();
    let total_jumps: usize = a.iter().chain(b).map(|s| s.jump_count).sum();
    if total_jumps > 0 {
        let top = a.iter().chain(b).map(|s| s.jump_count).max().unwrap_or(0);
        let mut ha = vec![0u64; top + 1];
        let mut hb = vec![0u64; top + 1];
        a.iter().for_each(|s| ha[s.jump_count] += 1);
        b.iter().for_each(|s| hb[s.jump_count] += 1);
        if let Some((stat, dof, p)) = chi_square_homogeneity(&ha, &hb) {
            chi.push(ChiSquareResult { name: "jump_count".into(), statistic: stat, dof, p_value: p, adjusted_p: p });
        }
        let dim = a.iter().chain(b).find_map(|s| s.jump_logs.first().map(|v| v.len())).unwrap_or(0);
        for axis in 0..dim {
            let va: Vec<f64> = a.iter().flat_map(|s| s.jump_logs.iter().map(move |v| v[axis])).collect();
            let vb: Vec<f64> = b.iter().flat_map(|s| s.jump_logs.iter().map(move |v| v[axis])).collect();
            let mut pooled: Vec<f64> = va.iter().chain(&vb).copied().collect();
            pooled.sort_by(f64::total_cmp);
            let edges = quantile_edges(&pooled, config.bins);
            let hist = |v: &[f64]| {
                let mut h = vec![0u64; edges.len() + 1];
                v.iter().for_each(|x| h[edges.partition_point(|e| e < x)] += 1);
                h
            };
            if let Some((stat, dof, p)) = chi_square_homogeneity(&hist(&va), &hist(&vb)) {
                chi.push(ChiSquareResult { name: format!("jump_size_axis_{axis}"), statistic: stat, dof, p_value: p, adjusted_p: p });
            }
        }
    }
    let tests = ks.len() + chi.len();
    let m = tests as f64;
    ks.iter_mut().for_each(|k| k.adjusted_p = (k.p_value * m).min(1.0));
    chi.iter_mut().for_each(|c| c.adjusted_p = (c.p_value * m).min(1.0));
    let min_ks_p = ks.iter().map(|k| k.p_value).fold(1.0, f64::min);
    let verdict = ks.iter().all(|k| k.adjusted_p > config.p_floor)
        && chi.iter().all(|c| c.adjusted_p > config.p_floor)
        && cov_dev.iter().all(|d| *d < config.se_multiple);
    Ok(LawTestReport {
        test_times: times.to_vec(),
        ks,
        covariance_deviation_se: cov_dev,
        chi_square: chi,
        min_ks_p,
        tests,
        verdict,
        warnings,
    })
}

/// Largest `|cov_a - cov_b|` over entries in units of the combined standard error of the sample covariances.
pub fn covariance_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n = a[0].len();
    let stats = |s: &[Vec<f64>]| {
        let p = s.len() as f64;
        let mean: Vec<f64> = (0..n).map(|i| s.iter().map(|v| v[i]).sum::<f64>() / p).collect();
        let mut cov = vec![0.0; n * n];
        let mut var = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let prods: Vec<f64> = s.iter().map(|v| (v[i] - mean[i]) * (v[j] - mean[j])).collect();
                let m = prods.iter().sum::<f64>() / p;
                let v = prods.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (p - 1.0).max(1.0);
                cov[i * n + j] = m;
                var[i * n + j] = v / p;
            }
        }
        (cov, var)
    };
    let (ca, va) = stats(a);
    let (cb, vb) = stats(b);
    (0..n * n).fold(0.0, |w: f64, k| {
        let se = (va[k] + vb[k]).sqrt();
        let d = (ca[k] - cb[k]).abs();
        w.max(if se > 0.0 { d / se } else if d > 0.0 { f64::INFINITY } else { 0.0 })
    })
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value with the
/// `sqrt(n_e) + 0.12 + 0.11 / sqrt(n_e)` small-sample adjustment.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let s = ne.sqrt();
    (d, kolmogorov_q((s + 0.12 + 0.11 / s) * d))
}

/// `Q(lambda) = 2 sum_{k >= 1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Complementary series converges faster for small arguments.
        let y = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda)).exp();
        let c = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let s: f64 = (0..20).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        return (1.0 - c * s).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Chi-square test of homogeneity on two histograms over the same bins; bins are merged
/// left to right until every merged bin holds at least 10 pooled counts.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Option<(f64, usize, f64)> {
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cur.0 += *x as f64;
        cur.1 += *y as f64;
        if cur.0 + cur.1 >= 10.0 {
            merged.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if cur.0 + cur.1 > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => merged.push(cur),
        }
    }
    if merged.len() < 2 {
        return None;
    }
    let (ta, tb): (f64, f64) = merged.iter().fold((0.0, 0.0), |s, m| (s.0 + m.0, s.1 + m.1));
    if ta == 0.0 || tb == 0.0 {
        return Some((f64::INFINITY, merged.len() - 1, 0.0));
    }
    let total = ta + tb;
    let mut stat = 0.0;
    for (x, y) in &merged {
        let col = x + y;
        let (ea, eb) = (col * ta / total, col * tb / total);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = merged.len() - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).ok()?.cdf(stat);
    Some((stat, dof, p))
}
