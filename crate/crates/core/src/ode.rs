//! Adaptive Dormand–Prince 5(4) integration for autonomous vector fields.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("exceeded {max_steps} steps")]
    TooManySteps { max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    /// Bound on the mixed absolute/relative local error per accepted step.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_steps: 100_000 }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Integrates `y' = f(y)` from `t0` to `t1` (either direction).
pub fn integrate<F>(f: F, t0: f64, t1: f64, y0: &[f64], opts: OdeOptions) -> Result<Vec<f64>, OdeError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let span = t1 - t0;
    let mut y = y0.to_vec();
    if span == 0.0 || y.is_empty() {
        return Ok(y);
    }
    let dir = span.signum();
    let total = span.abs();
    let n = y.len();
    let mut t = 0.0;
    let mut h = total;
    let mut tmp = vec![0.0; n];
    let mut k1 = f(&y);
    let mut steps = 0usize;
    while t < total {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps { max_steps: opts.max_steps });
        }
        steps += 1;
        if total - t <= 4.0 * f64::EPSILON * total {
            break;
        }
        if t + h > total {
            h = total - t;
        }
        let hs = dir * h;
        axpy(&mut tmp, &y, hs, &[(A21, &k1)]);
        let k2 = f(&tmp);
        axpy(&mut tmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(&tmp);
        axpy(&mut tmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(&tmp);
        axpy(&mut tmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(&tmp);
        axpy(&mut tmp, &y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(&tmp);
        let mut y_new = vec![0.0; n];
        axpy(&mut y_new, &y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(&y_new);
        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.tol * (1.0 + y[i].abs().max(y_new[i].abs()));
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            if h < 1e-14 * total.max(1.0) {
                return Err(OdeError::NonFinite { t: t0 + dir * t });
            }
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k1 = k7;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t: t0 + dir * t });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * total.max(1.0) && t < total {
            return Err(OdeError::StepUnderflow { t: t0 + dir * t });
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_matches_closed_form() {
        let y = integrate(|y| vec![y[0]], 0.0, 1.0, &[1.0], OdeOptions { tol: 1e-12, ..Default::default() }).unwrap();
        assert!((y[0] - 1f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let f = |y: &[f64]| vec![-y[1], y[0]];
        let opts = OdeOptions { tol: 1e-12, ..Default::default() };
        let fwd = integrate(f, 0.0, 2.0, &[1.0, 0.5], opts).unwrap();
        let back = integrate(f, 2.0, 0.0, &fwd, opts).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-9 && (back[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rotation_field_gives_cos_sin() {
        let y = integrate(|y| vec![-y[1], y[0]], 0.0, 1.2, &[1.0, 0.0], OdeOptions { tol: 1e-12, ..Default::default() }).unwrap();
        assert!((y[0] - 1.2f64.cos()).abs() < 1e-10);
        assert!((y[1] - 1.2f64.sin()).abs() < 1e-10);
    }
}
