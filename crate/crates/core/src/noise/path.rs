use serde::{Deserialize, Serialize};

use super::NoiseError;
use crate::group::LieGroupChart;

/// A jump at `time`, applied at the end of grid step `step`: `Z_t = value * Z_{t-}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMark {
    pub step: usize,
    pub time: f64,
    pub value: Vec<f64>,
}

/// A sampled semimartingale on a noise group.
///
/// Step `k` moves from `times[k]` to `times[k+1]`: first the continuous element
/// `identity + increments[k]` multiplies from the left, then every jump of the step
/// in order. `values` always equals a replay of `(increments, jumps)` from `values[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemimartingalePath {
    pub chart: LieGroupChart,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub increments: Vec<Vec<f64>>,
    pub jumps: Vec<JumpMark>,
}

/// The observable past of a path: every datum up to and including `times[last]`.
#[derive(Debug, Clone, Copy)]
pub struct PathHistory<'a> {
    pub times: &'a [f64],
    pub values: &'a [Vec<f64>],
}

impl<'a> PathHistory<'a> {
    pub fn new(times: &'a [f64], values: &'a [Vec<f64>]) -> Self {
        debug_assert_eq!(times.len(), values.len());
        Self { times, values }
    }

    pub fn now(&self) -> f64 {
        *self.times.last().expect("non-empty history")
    }

    pub fn last(&self) -> &'a [f64] {
        self.values.last().expect("non-empty history")
    }
}

/// Uniform grid on `[0, horizon]`; the last step is shortened to land on `horizon`.
pub fn uniform_grid(horizon: f64, step: f64) -> Result<Vec<f64>, NoiseError> {
    if !(step > 0.0) || !(horizon > 0.0) || !step.is_finite() || !horizon.is_finite() {
        return Err(NoiseError::Config(format!("invalid grid: horizon {horizon}, step {step}")));
    }
    let k = ((horizon / step) - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..k).map(|i| i as f64 * step).collect();
    times.push(horizon);
    Ok(times)
}

impl SemimartingalePath {
    /// Builds a path by replaying increments and jumps from `start`.
    pub fn from_increments(
        chart: LieGroupChart,
        times: Vec<f64>,
        start: Vec<f64>,
        increments: Vec<Vec<f64>>,
        mut jumps: Vec<JumpMark>,
    ) -> Result<Self, NoiseError> {
        let n = chart.dim();
        chart.check_dim(&start)?;
        if times.len() != increments.len() + 1 {
            return Err(NoiseError::Config(format!(
                "{} grid times for {} increments",
                times.len(),
                increments.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NoiseError::Config("grid times must be strictly increasing".into()));
        }
        jumps.sort_by_key(|j| j.step);
        for j in &jumps {
            if j.step >= increments.len() || j.value.len() != n {
                return Err(NoiseError::Config(format!("malformed jump mark at step {}", j.step)));
            }
        }
        let mut path = Self { chart, times, values: Vec::with_capacity(increments.len() + 1), increments, jumps };
        path.values.push(start);
        for k in 0..path.increments.len() {
            let next = path.advance(k, &path.values[k]);
            path.values.push(next);
        }
        Ok(path)
    }

    fn advance(&self, k: usize, from: &[f64]) -> Vec<f64> {
        let mut z = self.chart.multiply(&self.continuous_element(k), from);
        for j in self.jumps_in_step(k) {
            z = self.chart.multiply(&j.value, &z);
        }
        z
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// `identity + increments[k]`, the continuous group increment of step `k`.
    pub fn continuous_element(&self, k: usize) -> Vec<f64> {
        let mut e = self.chart.identity();
        for (a, c) in e.iter_mut().zip(&self.increments[k]) {
            *a += c;
        }
        e
    }

    pub fn jumps_in_step(&self, k: usize) -> &[JumpMark] {
        let lo = self.jumps.partition_point(|j| j.step < k);
        let hi = self.jumps.partition_point(|j| j.step <= k);
        &self.jumps[lo..hi]
    }

    /// `Z_{t_{k+1}-}`: the value before the jumps of step `k`.
    pub fn pre_jump_value(&self, k: usize) -> Vec<f64> {
        self.chart.multiply(&self.continuous_element(k), &self.values[k])
    }

    /// History visible to a control acting on step `k`.
    pub fn history(&self, k: usize) -> PathHistory<'_> {
        PathHistory::new(&self.times[..=k], &self.values[..=k])
    }

    /// Index of the last grid time not exceeding `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let i = self.times.partition_point(|s| *s <= t + 1e-12);
        i.saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.index_at(t)]
    }

    /// Replays the path and reports the largest coordinate mismatch with `values`.
    pub fn replay_mismatch(&self) -> f64 {
        let mut z = self.values[0].clone();
        let mut worst: f64 = 0.0;
        for k in 0..self.steps() {
            z = self.advance(k, &z);
            worst = worst.max(crate::numeric::max_abs_diff(&z, &self.values[k + 1]));
        }
        worst
    }

    /// Product of all jumps of step `k`, identity if none.
    pub fn step_jump(&self, k: usize) -> Option<Vec<f64>> {
        let js = self.jumps_in_step(k);
        if js.is_empty() {
            return None;
        }
        let mut acc = self.chart.identity();
        for j in js {
            acc = self.chart.multiply(&j.value, &acc);
        }
        Some(acc)
    }

    /// CSV with columns `time, z_0.., jump, j_0..`; jump columns hold identity coordinates when no jump occurred.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("time");
        for i in 0..n {
            out.push_str(&format!(",z{i}"));
        }
        out.push_str(",jump");
        for i in 0..n {
            out.push_str(&format!(",j{i}"));
        }
        out.push('\n');
        let id = self.chart.identity();
        for k in 0..self.times.len() {
            let jump = if k == 0 { None } else { self.step_jump(k - 1) };
            out.push_str(&format!("{}", self.times[k]));
            for v in &self.values[k] {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(if jump.is_some() { ",1" } else { ",0" });
            for v in jump.as_ref().unwrap_or(&id) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV layout of [`Self::to_csv`]; jumps of a step are merged into one mark.
    pub fn from_csv(chart: LieGroupChart, text: &str) -> Result<Self, NoiseError> {
        let n = chart.dim();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| NoiseError::Csv("empty file".into()))?;
        if header.split(',').count() != 2 * n + 2 {
            return Err(NoiseError::Csv(format!("header has wrong column count for dimension {n}")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut jumps = Vec::new();
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let cols = cols.map_err(|e| NoiseError::Csv(format!("row {row}: {e}")))?;
            if cols.len() != 2 * n + 2 {
                return Err(NoiseError::Csv(format!("row {row}: expected {} columns", 2 * n + 2)));
            }
            times.push(cols[0]);
            values.push(cols[1..=n].to_vec());
            if cols[n + 1] != 0.0 {
                if row == 0 {
                    return Err(NoiseError::Csv("jump flagged at the initial time".into()));
                }
                jumps.push(JumpMark { step: row - 1, time: cols[0], value: cols[n + 2..].to_vec() });
            }
        }
        if values.len() < 2 {
            return Err(NoiseError::Csv("need at least two rows".into()));
        }
        let id = chart.identity();
        let mut increments = Vec::with_capacity(values.len() - 1);
        let mut ji = 0;
        for k in 0..values.len() - 1 {
            let mut pre = values[k + 1].clone();
            if ji < jumps.len() && jumps[ji].step == k {
                pre = chart.multiply(&chart.inverse(&jumps[ji].value)?, &pre);
                ji += 1;
            }
            let d = chart.jump_of(&values[k], &pre)?;
            increments.push(crate::numeric::sub(&d, &id));
        }
        Self::from_increments(chart, times, values[0].clone(), increments, jumps)
    }
}
