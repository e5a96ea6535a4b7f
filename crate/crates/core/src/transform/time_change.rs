use super::TransformError;
use crate::noise::{uniform_grid, JumpMark, SemimartingalePath};
use crate::numeric;
use crate::sde::{StateJump, StatePath};

/// `beta_t = int_0^t eta` on the original grid and its piecewise-linear inverse `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    pub times: Vec<f64>,
    pub beta: Vec<f64>,
}

impl TimeChange {
    /// `eta[k]` is the (predictable) density on step `k`.
    pub fn new(times: &[f64], eta: &[f64]) -> Result<Self, TransformError> {
        if eta.len() + 1 != times.len() {
            return Err(TransformError::Config(format!("{} densities for {} steps", eta.len(), times.len() - 1)));
        }
        if let Some(bad) = eta.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(TransformError::Config(format!("time density {bad} is not positive and finite")));
        }
        let mut beta = Vec::with_capacity(times.len());
        beta.push(times[0]);
        for k in 0..eta.len() {
            beta.push(beta[k] + eta[k] * (times[k + 1] - times[k]));
        }
        Ok(Self { times: times.to_vec(), beta })
    }

    pub fn horizon(&self) -> f64 {
        *self.beta.last().unwrap()
    }

    pub fn beta_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.beta, t)
    }

    pub fn alpha_at(&self, s: f64) -> f64 {
        interpolate(&self.beta, &self.times, s)
    }

    /// Step `k` and fraction `u` with `s = beta_k + u (beta_{k+1} - beta_k)`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let last = self.beta.len() - 1;
        if s >= self.beta[last] {
            return (last - 1, 1.0);
        }
        let i = self.beta.partition_point(|b| *b <= s).max(1) - 1;
        let u = (s - self.beta[i]) / (self.beta[i + 1] - self.beta[i]);
        (i, u)
    }

    /// New step holding a jump that sat at the end of original step `k`.
    fn relocated_step(&self, new_times: &[f64], k: usize) -> usize {
        let tau = self.beta[k + 1];
        let tol = 1e-12 * tau.abs().max(1.0);
        let j = new_times.partition_point(|s| *s < tau - tol);
        j.clamp(1, new_times.len() - 1) - 1
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|v| *v <= x) - 1;
    let u = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + u * (ys[i + 1] - ys[i])
}

/// `H_beta(Z)_s = Z_{alpha_s}` resampled on a uniform grid of `out_step` (default: the first input step).
pub fn apply_time_change(
    path: &SemimartingalePath,
    eta: &[f64],
    out_step: Option<f64>,
) -> Result<(SemimartingalePath, TimeChange), TransformError> {
    let tc = TimeChange::new(&path.times, eta)?;
    let step = out_step.unwrap_or(path.times[1] - path.times[0]);
    let new_times = shifted_grid(path.times[0], tc.horizon(), step)?;
    let chart = &path.chart;
    let id = chart.identity();
    let mut jumps = Vec::with_capacity(path.jumps.len());
    for j in &path.jumps {
        let step = tc.relocated_step(&new_times, j.step);
        jumps.push(JumpMark { step, time: tc.beta[j.step + 1], value: j.value.clone() });
    }
    let increments = if chart.is_additive() {
        let n = chart.dim();
        let mut prefix = vec![vec![0.0; n]];
        for c in &path.increments {
            prefix.push(numeric::add(prefix.last().unwrap(), c));
        }
        let cont = |s: f64| -> Vec<f64> {
            let (k, u) = tc.locate(s);
            numeric::axpy(&prefix[k], u, &path.increments[k])
        };
        new_times.windows(2).map(|w| numeric::sub(&cont(w[1]), &cont(w[0]))).collect()
    } else {
        let value = |s: f64| -> Vec<f64> {
            let (k, u) = tc.locate(s);
            if u == 0.0 {
                return path.values[k].clone();
            }
            if u == 1.0 {
                return path.values[k + 1].clone();
            }
            let d: Vec<f64> = id.iter().zip(&path.increments[k]).map(|(a, c)| a + u * c).collect();
            chart.multiply(&d, &path.values[k])
        };
        let mut out = Vec::with_capacity(new_times.len() - 1);
        let mut ji = 0;
        for (j, w) in new_times.windows(2).enumerate() {
            let v0 = value(w[0]);
            let v1 = value(w[1]);
            let mut total = id.clone();
            while ji < jumps.len() && jumps[ji].step == j {
                total = chart.multiply(&jumps[ji].value, &total);
                ji += 1;
            }
            let d = chart.multiply(&chart.inverse(&total)?, &chart.jump_of(&v0, &v1)?);
            out.push(numeric::sub(&d, &id));
        }
        out
    };
    let out = SemimartingalePath::from_increments(chart.clone(), new_times, path.values[0].clone(), increments, jumps)?;
    Ok((out, tc))
}

fn shifted_grid(t0: f64, horizon: f64, step: f64) -> Result<Vec<f64>, TransformError> {
    let g = uniform_grid(horizon - t0, step)?;
    Ok(g.into_iter().map(|t| t + t0).collect())
}

/// Time change of a solution path onto `out_times`, interpolating its continuous part linearly.
pub fn time_change_state(x: &StatePath, tc: &TimeChange, out_times: &[f64]) -> StatePath {
    let mut pre: Vec<Option<&[f64]>> = vec![None; x.times.len() - 1];
    for j in x.jumps.iter().rev() {
        pre[j.step] = Some(&j.before);
    }
    let value = |s: f64| -> Vec<f64> {
        let (k, u) = tc.locate(s);
        if u == 0.0 {
            return x.values[k].clone();
        }
        if u == 1.0 {
            return x.values[k + 1].clone();
        }
        let end = pre[k].unwrap_or(&x.values[k + 1]);
        x.values[k].iter().zip(end).map(|(a, b)| a + u * (b - a)).collect()
    };
    let values = out_times.iter().map(|s| value(*s)).collect();
    let jumps = x
        .jumps
        .iter()
        .map(|j| StateJump { step: tc.relocated_step(out_times, j.step), before: j.before.clone(), after: j.after.clone() })
        .collect();
    StatePath { times: out_times.to_vec(), values, jumps }
}
