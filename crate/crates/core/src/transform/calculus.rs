use std::fmt;
use std::sync::Arc;

use super::actions::{GaugeAction, TimeAction};
use super::time_change::{apply_time_change, time_change_state};
use super::{step_map_noise, StepMap, TransformError};
use crate::group::LieGroupChart;
use crate::noise::SemimartingalePath;
use crate::numeric::{self, fd_step};
use crate::ode::{self, OdeOptions};
use crate::sde::{CanonicalSdeMap, StateFn, StateJump, StatePath};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `T = (Phi, B, eta)`: a diffeomorphism of the state space, a gauge field and a time density.
#[derive(Clone)]
pub struct StochasticTransformation {
    pub name: String,
    pub state_dim: usize,
    pub gauge: LieGroupChart,
    phi: StateFn,
    phi_inv: StateFn,
    b: StateFn,
    eta: ScalarFn,
}

impl fmt::Debug for StochasticTransformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StochasticTransformation({} on R^{}, gauge {})", self.name, self.state_dim, self.gauge.name())
    }
}

impl StochasticTransformation {
    pub fn new<P, Q, B, E>(name: impl Into<String>, state_dim: usize, gauge: LieGroupChart, phi: P, phi_inv: Q, b: B, eta: E) -> Self
    where
        P: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        Q: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        B: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        E: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            state_dim,
            gauge,
            phi: Arc::new(phi),
            phi_inv: Arc::new(phi_inv),
            b: Arc::new(b),
            eta: Arc::new(eta),
        }
    }

    pub fn identity(state_dim: usize, gauge: LieGroupChart) -> Self {
        let id = gauge.identity();
        Self::new("identity", state_dim, gauge, |x| x.to_vec(), |x| x.to_vec(), move |_| id.clone(), |_| 1.0)
    }

    /// A strong transformation `(Phi, 1, 1)`.
    pub fn strong<P, Q>(name: impl Into<String>, state_dim: usize, gauge: LieGroupChart, phi: P, phi_inv: Q) -> Self
    where
        P: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        Q: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let id = gauge.identity();
        Self::new(name, state_dim, gauge, phi, phi_inv, move |_| id.clone(), |_| 1.0)
    }

    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        (self.phi)(x)
    }

    pub fn phi_inv(&self, x: &[f64]) -> Vec<f64> {
        (self.phi_inv)(x)
    }

    pub fn b(&self, x: &[f64]) -> Vec<f64> {
        self.gauge.normalize(&(self.b)(x))
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        (self.eta)(x)
    }
}

/// `V = (Y, C, tau)`: a vector field, a gauge-algebra valued function and a time rate.
#[derive(Clone)]
pub struct InfinitesimalTransformation {
    pub name: String,
    pub state_dim: usize,
    pub gauge: LieGroupChart,
    y: StateFn,
    c: StateFn,
    tau: ScalarFn,
}

impl fmt::Debug for InfinitesimalTransformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InfinitesimalTransformation({} on R^{}, gauge {})", self.name, self.state_dim, self.gauge.name())
    }
}

impl InfinitesimalTransformation {
    pub fn new<Y, C, T>(name: impl Into<String>, state_dim: usize, gauge: LieGroupChart, y: Y, c: C, tau: T) -> Self
    where
        Y: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        C: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        T: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), state_dim, gauge, y: Arc::new(y), c: Arc::new(c), tau: Arc::new(tau) }
    }

    pub fn y(&self, x: &[f64]) -> Vec<f64> {
        (self.y)(x)
    }

    pub fn c(&self, x: &[f64]) -> Vec<f64> {
        (self.c)(x)
    }

    pub fn tau(&self, x: &[f64]) -> f64 {
        (self.tau)(x)
    }

    /// Linear combination `sum_j w_j V_j` of transformations sharing a gauge group.
    pub fn combination(parts: &[InfinitesimalTransformation], weights: &[f64]) -> Self {
        let parts: Vec<_> = parts.to_vec();
        let w = weights.to_vec();
        let (m, gauge) = (parts[0].state_dim, parts[0].gauge.clone());
        let r = gauge.dim();
        let (p1, w1) = (parts.clone(), w.clone());
        let (p2, w2) = (parts.clone(), w.clone());
        Self::new(
            "combination",
            m,
            gauge,
            move |x| weighted(&p1, &w1, m, |v| v.y(x)),
            move |x| weighted(&p2, &w2, r, |v| v.c(x)),
            move |x| parts.iter().zip(&w).map(|(v, wi)| wi * v.tau(x)).sum(),
        )
    }
}

fn weighted<F>(parts: &[InfinitesimalTransformation], w: &[f64], len: usize, f: F) -> Vec<f64>
where
    F: Fn(&InfinitesimalTransformation) -> Vec<f64>,
{
    let mut out = vec![0.0; len];
    for (v, wi) in parts.iter().zip(w) {
        if *wi != 0.0 {
            for (o, a) in out.iter_mut().zip(f(v)) {
                *o += wi * a;
            }
        }
    }
    out
}

fn directional<F>(f: F, x: &[f64], v: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let h = fd_step(numeric::max_abs(x)) / numeric::max_abs(v).max(1.0);
    let p = f(&numeric::axpy(x, h, v));
    let q = f(&numeric::axpy(x, -h, v));
    p.iter().zip(&q).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

fn directional_scalar<F>(f: F, x: &[f64], v: &[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    directional(|y| vec![f(y)], x, v)[0]
}

/// `R_{B(x)^{-1}*}` of the derivative of `B` along `v`: an element of the gauge algebra.
fn right_trivial_derivative<F>(chart: &LieGroupChart, b: F, x: &[f64], v: &[f64]) -> Result<Vec<f64>, TransformError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let h = fd_step(numeric::max_abs(x)) / numeric::max_abs(v).max(1.0);
    let bi = chart.inverse(&b(x))?;
    let id = chart.identity();
    let wp = chart.normalize(&numeric::sub(&chart.multiply(&b(&numeric::axpy(x, h, v)), &bi), &id));
    let wm = chart.normalize(&numeric::sub(&chart.multiply(&b(&numeric::axpy(x, -h, v)), &bi), &id));
    Ok(wp.iter().zip(&wm).map(|(a, c)| (a - c) / (2.0 * h)).collect())
}

/// `T2 o T1 = (Phi2 o Phi1, (B2 o Phi1) B1, (eta2 o Phi1) eta1)`.
pub fn compose(t2: &StochasticTransformation, t1: &StochasticTransformation) -> Result<StochasticTransformation, TransformError> {
    if t1.gauge != t2.gauge || t1.state_dim != t2.state_dim {
        return Err(TransformError::Config("composed transformations must share state space and gauge group".into()));
    }
    let (a, b, c, d) = (t1.clone(), t2.clone(), t1.clone(), t2.clone());
    let (e, f) = (t1.clone(), t2.clone());
    let chart = t1.gauge.clone();
    Ok(StochasticTransformation::new(
        format!("{} o {}", t2.name, t1.name),
        t1.state_dim,
        t1.gauge.clone(),
        move |x| b.phi(&a.phi(x)),
        move |x| c.phi_inv(&d.phi_inv(x)),
        {
            let (t1, t2) = (t1.clone(), t2.clone());
            move |x| chart.multiply(&t2.b(&t1.phi(x)), &t1.b(x))
        },
        move |x| f.eta(&e.phi(x)) * e.eta(x),
    ))
}

/// `T^{-1} = (Phi^{-1}, (B o Phi^{-1})^{-1}, 1 / (eta o Phi^{-1}))`.
pub fn invert(t: &StochasticTransformation) -> StochasticTransformation {
    let (a, b, c, d) = (t.clone(), t.clone(), t.clone(), t.clone());
    StochasticTransformation::new(
        format!("{}^-1", t.name),
        t.state_dim,
        t.gauge.clone(),
        move |x| a.phi_inv(x),
        move |x| b.phi(x),
        move |x| {
            let y = c.phi_inv(x);
            c.gauge.inverse(&c.b(&y)).unwrap_or_else(|_| vec![f64::NAN; c.gauge.dim()])
        },
        move |x| 1.0 / d.eta(&d.phi_inv(x)),
    )
}

/// Largest deviation of `(Phi, B, eta)` between two transformations over `points`.
pub fn transformation_deviation(a: &StochasticTransformation, b: &StochasticTransformation, points: &[Vec<f64>]) -> f64 {
    points.iter().fold(0.0, |m: f64, x| {
        m.max(numeric::max_abs_diff(&a.phi(x), &b.phi(x)))
            .max(a.gauge.coord_distance(&a.b(x), &b.b(x)))
            .max((a.eta(x) - b.eta(x)).abs())
    })
}

/// Flow `(Phi_a(x), B_a(x), eta_a(x))` of `V` solving `dPhi = Y(Phi)`, `dB = R_{B*} C(Phi)`, `deta = tau(Phi) eta`.
pub fn flow_of(v: &InfinitesimalTransformation, a: f64, x: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>, f64), TransformError> {
    let m = v.state_dim;
    let r = v.gauge.dim();
    let mut y0 = x.to_vec();
    y0.extend(v.gauge.identity());
    y0.push(1.0);
    let field = |s: &[f64]| {
        let (xs, rest) = s.split_at(m);
        let (g, eta) = rest.split_at(r);
        let mut out = v.y(xs);
        out.extend(v.gauge.right_translate(g, &v.c(xs)));
        out.push(v.tau(xs) * eta[0]);
        out
    };
    let end = ode::integrate(field, 0.0, a, &y0, OdeOptions { tol, max_steps: 1_000_000 })?;
    let phi = end[..m].to_vec();
    let g = v.gauge.normalize(&end[m..m + r]);
    Ok((phi, g, end[m + r]))
}

/// `T_a`, the time-`a` flow of `V` as a transformation.
pub fn one_parameter(v: &InfinitesimalTransformation, a: f64, tol: f64) -> StochasticTransformation {
    let nan = |n: usize| vec![f64::NAN; n];
    let m = v.state_dim;
    let r = v.gauge.dim();
    let (v1, v2, v3, v4) = (v.clone(), v.clone(), v.clone(), v.clone());
    StochasticTransformation::new(
        format!("flow({}, {a})", v.name),
        m,
        v.gauge.clone(),
        move |x| flow_of(&v1, a, x, tol).map(|f| f.0).unwrap_or_else(|_| nan(m)),
        move |x| flow_of(&v2, -a, x, tol).map(|f| f.0).unwrap_or_else(|_| nan(m)),
        move |x| flow_of(&v3, a, x, tol).map(|f| f.1).unwrap_or_else(|_| nan(r)),
        move |x| flow_of(&v4, a, x, tol).map(|f| f.2).unwrap_or(f64::NAN),
    )
}

/// `T_* V = (Phi_* Y, (Ad_B C + R_{B^{-1}*} Y(B)) o Phi^{-1}, (tau + Y(eta)/eta) o Phi^{-1})`.
pub fn push_forward(t: &StochasticTransformation, v: &InfinitesimalTransformation) -> Result<InfinitesimalTransformation, TransformError> {
    if t.gauge != v.gauge || t.state_dim != v.state_dim {
        return Err(TransformError::Config("push-forward needs a shared state space and gauge group".into()));
    }
    let (t1, v1) = (t.clone(), v.clone());
    let (t2, v2) = (t.clone(), v.clone());
    let (t3, v3) = (t.clone(), v.clone());
    Ok(InfinitesimalTransformation::new(
        format!("push({}, {})", t.name, v.name),
        v.state_dim,
        v.gauge.clone(),
        move |xp| {
            let x = t1.phi_inv(xp);
            directional(|y| t1.phi(y), &x, &v1.y(&x))
        },
        move |xp| {
            let x = t2.phi_inv(xp);
            let b = t2.b(&x);
            let ad = t2.gauge.adjoint(&b, &v2.c(&x)).unwrap_or_else(|_| vec![f64::NAN; t2.gauge.dim()]);
            let yb = right_trivial_derivative(&t2.gauge, |y| t2.b(y), &x, &v2.y(&x))
                .unwrap_or_else(|_| vec![f64::NAN; t2.gauge.dim()]);
            numeric::add(&ad, &yb)
        },
        move |xp| {
            let x = t3.phi_inv(xp);
            v3.tau(&x) + directional_scalar(|y| t3.eta(y), &x, &v3.y(&x)) / t3.eta(&x)
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketVariant {
    /// Gauge component `Y1(C2) - Y2(C2) - {C1, C2}`.
    AsPrinted,
    /// Gauge component `Y1(C2) - Y2(C1) - {C1, C2}`.
    Corrected,
}

/// Bracket `([Y1, Y2], ..., Y1(tau2) - Y2(tau1))` with `[Y1, Y2] = DY2 Y1 - DY1 Y2`.
pub fn lie_bracket(
    v1: &InfinitesimalTransformation,
    v2: &InfinitesimalTransformation,
    variant: BracketVariant,
) -> Result<InfinitesimalTransformation, TransformError> {
    if v1.gauge != v2.gauge || v1.state_dim != v2.state_dim {
        return Err(TransformError::Config("bracket needs a shared state space and gauge group".into()));
    }
    let (a1, a2) = (v1.clone(), v2.clone());
    let (b1, b2) = (v1.clone(), v2.clone());
    let (c1, c2) = (v1.clone(), v2.clone());
    Ok(InfinitesimalTransformation::new(
        format!("[{}, {}]", v1.name, v2.name),
        v1.state_dim,
        v1.gauge.clone(),
        move |x| {
            let p = directional(|y| a2.y(y), x, &a1.y(x));
            let q = directional(|y| a1.y(y), x, &a2.y(x));
            numeric::sub(&p, &q)
        },
        move |x| {
            let y1c2 = directional(|y| b2.c(y), x, &b1.y(x));
            let second = match variant {
                BracketVariant::AsPrinted => directional(|y| b2.c(y), x, &b2.y(x)),
                BracketVariant::Corrected => directional(|y| b1.c(y), x, &b2.y(x)),
            };
            let comm = b1.gauge.algebra_bracket(&b1.c(x), &b2.c(x));
            y1c2.iter().zip(&second).zip(&comm).map(|((a, b), c)| a - b - c).collect()
        },
        move |x| directional_scalar(|y| c2.tau(y), x, &c1.y(x)) - directional_scalar(|y| c1.tau(y), x, &c2.y(x)),
    ))
}

/// Largest residual of `Y_i(B) + L_{B*} C_i = 0` and `Y_i(eta) + tau_i eta = 0` over `points`.
pub fn rectify_check(
    t: &StochasticTransformation,
    vs: &[InfinitesimalTransformation],
    points: &[Vec<f64>],
) -> Result<f64, TransformError> {
    let mut worst: f64 = 0.0;
    for v in vs {
        if v.gauge != t.gauge {
            return Err(TransformError::Config("rectifier and generators use different gauge groups".into()));
        }
        for x in points {
            let y = v.y(x);
            let rho = right_trivial_derivative(&t.gauge, |p| t.b(p), x, &y)?;
            let ad = t.gauge.adjoint(&t.b(x), &v.c(x))?;
            worst = worst.max(numeric::max_abs(&numeric::add(&rho, &ad)));
            let eta = t.eta(x);
            worst = worst.max((directional_scalar(|p| t.eta(p), x, &y) + v.tau(x) * eta).abs());
        }
    }
    Ok(worst)
}

/// Rectifying transformation `(id, B, eta)` for one `V` on a flow box around `x0`.
///
/// `B` and `eta` equal the identity on the hyperplane through `x0` orthogonal to `Y(x0)` and
/// are transported along the flow of `Y` by `dB = -L_{B*} C` and `deta = -tau eta`.
pub fn rectify_single(v: &InfinitesimalTransformation, x0: &[f64], tol: f64) -> Result<StochasticTransformation, TransformError> {
    let y0 = v.y(x0);
    let speed = numeric::norm(&y0);
    if speed < 1e-12 {
        return Err(TransformError::Singular(format!("Y vanishes at {x0:?}")));
    }
    let normal: Vec<f64> = y0.iter().map(|c| c / speed).collect();
    let vv = v.clone();
    let base = x0.to_vec();
    let m = v.state_dim;
    let r = v.gauge.dim();
    let transport = Arc::new(move |x: &[f64]| -> Result<(Vec<f64>, f64), TransformError> {
        let opts = OdeOptions { tol, max_steps: 1_000_000 };
        let flow_y = |s: &[f64]| vv.y(s);
        let offset = |p: &[f64]| numeric::sub(p, &base).iter().zip(&normal).map(|(a, b)| a * b).sum::<f64>();
        let mut a = 0.0;
        let mut p = x.to_vec();
        for _ in 0..60 {
            let f = offset(&p);
            if f.abs() < 1e-13 * (1.0 + numeric::max_abs(x)) {
                break;
            }
            let slope = -vv.y(&p).iter().zip(&normal).map(|(a, b)| a * b).sum::<f64>();
            if slope.abs() < 1e-14 {
                return Err(TransformError::Singular("flow line tangent to the section".into()));
            }
            a -= f / slope;
            p = ode::integrate(flow_y, 0.0, -a, x, opts)?;
        }
        let mut s0 = p.clone();
        s0.extend(vv.gauge.identity());
        s0.push(1.0);
        let field = |s: &[f64]| {
            let (xs, rest) = s.split_at(m);
            let (g, eta) = rest.split_at(r);
            let mut out = vv.y(xs);
            out.extend(vv.gauge.left_translate(g, &vv.c(xs)).into_iter().map(|c| -c));
            out.push(-vv.tau(xs) * eta[0]);
            out
        };
        let end = ode::integrate(field, 0.0, a, &s0, opts)?;
        Ok((vv.gauge.normalize(&end[m..m + r]), end[m + r]))
    });
    let (tb, te) = (transport.clone(), transport);
    Ok(StochasticTransformation::new(
        format!("rectify({})", v.name),
        m,
        v.gauge.clone(),
        |x| x.to_vec(),
        |x| x.to_vec(),
        move |x| tb(x).map(|t| t.0).unwrap_or_else(|_| vec![f64::NAN; r]),
        move |x| te(x).map(|t| t.1).unwrap_or(f64::NAN),
    ))
}

/// `E_T(psi)(x, z) = Phi(psi(y, Gamma_{1/eta(y)} Xi_{B(y)^{-1}} z))` with `y = Phi^{-1}(x)`.
pub fn e_action(
    t: &StochasticTransformation,
    sde: &CanonicalSdeMap,
    gauge: &GaugeAction,
    time: Option<&TimeAction>,
) -> Result<CanonicalSdeMap, TransformError> {
    check_compat(t, gauge, &sde.noise_chart)?;
    let psi = sde.psi_fn();
    let (t, gauge, time) = (t.clone(), gauge.clone(), time.cloned());
    let name = format!("E[{}]({})", t.name, sde.name);
    Ok(CanonicalSdeMap::with_parameter(name, sde.state_dim, sde.noise_chart.clone(), sde.parameter.clone(), move |x, z, k| {
        let y = t.phi_inv(x);
        let g = t.b(&y);
        let mut w = gauge.xi_inverse(&g, z).unwrap_or_else(|_| vec![f64::NAN; z.len()]);
        if let Some(ta) = &time {
            let r = t.eta(&y);
            if r != 1.0 {
                w = ta.gamma(1.0 / r, &w);
            }
        }
        t.phi(&psi(&y, &w, k))
    }))
}

fn check_compat(t: &StochasticTransformation, gauge: &GaugeAction, noise: &LieGroupChart) -> Result<(), TransformError> {
    if t.gauge != gauge.group {
        return Err(TransformError::Config(format!(
            "transformation gauge {} differs from action group {}",
            t.gauge.name(),
            gauge.group.name()
        )));
    }
    if &gauge.noise != noise {
        return Err(TransformError::Config(format!("action `{}` does not act on {}", gauge.name, noise.name())));
    }
    Ok(())
}

/// `P_T(X, Z) = (Phi[H_beta(X)], H_beta{Xi_{B(X-)}[Gamma_{eta(X-)}(dZ)]})`.
pub fn p_action(
    t: &StochasticTransformation,
    x: &StatePath,
    noise: &SemimartingalePath,
    gauge: &GaugeAction,
    time: Option<&TimeAction>,
) -> Result<(StatePath, SemimartingalePath), TransformError> {
    check_compat(t, gauge, &noise.chart)?;
    if x.times.len() != noise.times.len() {
        return Err(TransformError::Config("solution and noise grids differ".into()));
    }
    let steps = noise.steps();
    let gs: Vec<Vec<f64>> = (0..steps).map(|k| t.b(&x.values[k])).collect();
    let rs: Vec<f64> = (0..steps).map(|k| t.eta(&x.values[k])).collect();
    let scaled = rs.iter().any(|r| *r != 1.0);
    if scaled && time.is_none() {
        return Err(TransformError::Config("non-trivial time density needs a time action".into()));
    }
    let n = noise.dim();
    let mapped = step_map_noise(noise, steps, |k| {
        let g = &gs[k];
        let r = rs[k];
        let ups = gauge.upsilon(g);
        let o = if noise.chart.is_additive() { gauge.o_second(g)? } else { Vec::new() };
        let (lin, second) = match (time, r != 1.0) {
            (Some(ta), true) => {
                let gam = ta.gamma_lin(r);
                let q = ta.q_second(r);
                let lin = &ups * &gam;
                let mut second = vec![0.0; n * n * n];
                if noise.chart.is_additive() {
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                let mut acc = 0.0;
                                for d in 0..n {
                                    acc += ups[(a, d)] * q[(d * n + b) * n + c];
                                    for e in 0..n {
                                        acc += o[(a * n + d) * n + e] * gam[(d, b)] * gam[(e, c)];
                                    }
                                }
                                second[(a * n + b) * n + c] = acc;
                            }
                        }
                    }
                }
                (lin, second)
            }
            _ => (ups, o),
        };
        Ok(StepMap {
            lin,
            second,
            full: Box::new(move |z: &[f64]| match time {
                Some(ta) if r != 1.0 => gauge.xi(g, &ta.gamma(r, z)),
                _ => gauge.xi(g, z),
            }),
        })
    }, gauge)?;
    let map_state = |p: &StatePath| StatePath {
        times: p.times.clone(),
        values: p.values.iter().map(|v| t.phi(v)).collect(),
        jumps: p
            .jumps
            .iter()
            .map(|j| StateJump { step: j.step, before: t.phi(&j.before), after: t.phi(&j.after) })
            .collect(),
    };
    if !scaled {
        return Ok((map_state(x), mapped));
    }
    let (z_new, tc) = apply_time_change(&mapped, &rs, None)?;
    let x_new = time_change_state(x, &tc, &z_new.times);
    Ok((map_state(&x_new), z_new))
}
