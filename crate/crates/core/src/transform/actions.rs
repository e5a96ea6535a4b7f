use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::TransformError;
use crate::group::LieGroupChart;
use crate::numeric::{self, fd_step, fd_step2, rotation2};
use crate::sde::StateFn;

type XiFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type MatrixOfElement = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type TensorOfElement = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Left action `Xi` of a gauge group on the noise group.
#[derive(Clone)]
pub struct GaugeAction {
    pub name: String,
    pub group: LieGroupChart,
    pub noise: LieGroupChart,
    /// Whether each `Xi_g` is a group automorphism of the noise group.
    pub automorphism: bool,
    xi: XiFn,
    generators: Vec<StateFn>,
    upsilon: Option<MatrixOfElement>,
    o_second: Option<TensorOfElement>,
}

impl fmt::Debug for GaugeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GaugeAction({}: {} on {})", self.name, self.group.name(), self.noise.name())
    }
}

impl GaugeAction {
    /// Generic action; `generators[l](z)` is the fundamental field of the `l`-th algebra basis vector.
    pub fn new<F>(
        name: impl Into<String>,
        group: LieGroupChart,
        noise: LieGroupChart,
        automorphism: bool,
        xi: F,
        generators: Vec<StateFn>,
    ) -> Result<Self, TransformError>
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if generators.len() != group.dim() {
            return Err(TransformError::Config(format!(
                "{} generators for a gauge group of dimension {}",
                generators.len(),
                group.dim()
            )));
        }
        Ok(Self {
            name: name.into(),
            group,
            noise,
            automorphism,
            xi: Arc::new(xi),
            generators,
            upsilon: None,
            o_second: None,
        })
    }

    /// Registers analytic `Upsilon_g` (`n x n`) and `O_g` (`n x n x n`, indexed `[alpha][beta][gamma]`).
    pub fn with_linearization<A, B>(mut self, upsilon: A, o_second: B) -> Self
    where
        A: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        B: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.upsilon = Some(Arc::new(upsilon));
        self.o_second = Some(Arc::new(o_second));
        self
    }

    pub fn xi(&self, g: &[f64], z: &[f64]) -> Vec<f64> {
        (self.xi)(g, z)
    }

    pub fn xi_inverse(&self, g: &[f64], z: &[f64]) -> Result<Vec<f64>, TransformError> {
        Ok(self.xi(&self.group.inverse(g)?, z))
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// `sum_l c^l K_l(z)`.
    pub fn generator_field(&self, c: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.noise.dim()];
        for (k, cl) in self.generators.iter().zip(c) {
            if *cl != 0.0 {
                for (o, v) in out.iter_mut().zip(k(z)) {
                    *o += cl * v;
                }
            }
        }
        out
    }

    /// Linearization of `Xi_g` at the identity in the frame basis.
    pub fn upsilon(&self, g: &[f64]) -> DMatrix<f64> {
        if let Some(u) = &self.upsilon {
            return u(g);
        }
        let n = self.noise.dim();
        let id = self.noise.identity();
        let mut out = DMatrix::zeros(n, n);
        for b in 0..n {
            let h = fd_step(1.0);
            let mut p = id.clone();
            p[b] += h;
            let mut q = id.clone();
            q[b] -= h;
            let dp = self.xi(g, &p);
            let dq = self.xi(g, &q);
            for a in 0..n {
                out[(a, b)] = (dp[a] - dq[a]) / (2.0 * h);
            }
        }
        out
    }

    /// Second-order coefficients `O_g`; zero for automorphisms.
    pub fn o_second(&self, g: &[f64]) -> Result<Vec<f64>, TransformError> {
        let n = self.noise.dim();
        if let Some(o) = &self.o_second {
            return Ok(o(g));
        }
        if self.automorphism {
            return Ok(vec![0.0; n * n * n]);
        }
        if !self.noise.is_additive() {
            return Err(TransformError::Config(format!(
                "second-order coefficients of `{}` need an analytic registration on non-additive noise",
                self.name
            )));
        }
        let mut out = vec![0.0; n * n * n];
        let z0 = vec![0.0; n];
        let f0 = self.xi(g, &z0);
        let h = fd_step2(1.0);
        for b in 0..n {
            for c in b..n {
                let shifted = |db: f64, dc: f64| {
                    let mut z = z0.clone();
                    z[b] += db;
                    z[c] += dc;
                    self.xi(g, &z)
                };
                let v: Vec<f64> = if b == c {
                    let p = shifted(h, 0.0);
                    let q = shifted(-h, 0.0);
                    (0..n).map(|a| (p[a] - 2.0 * f0[a] + q[a]) / (h * h)).collect()
                } else {
                    let pp = shifted(h, h);
                    let pm = shifted(h, -h);
                    let mp = shifted(-h, h);
                    let mm = shifted(-h, -h);
                    (0..n).map(|a| (pp[a] - pm[a] - mp[a] + mm[a]) / (4.0 * h * h)).collect()
                };
                for a in 0..n {
                    out[(a * n + b) * n + c] = v[a];
                    out[(a * n + c) * n + b] = v[a];
                }
            }
        }
        Ok(out)
    }

    /// The trivial gauge group acting by the identity.
    pub fn trivial(noise: LieGroupChart) -> Self {
        let n = noise.dim();
        Self::new("trivial", LieGroupChart::additive(0), noise, true, |_, z| z.to_vec(), vec![])
            .expect("no generators for the trivial group")
            .with_linearization(move |_| DMatrix::identity(n, n), move |_| vec![0.0; n * n * n])
    }

    /// `SO(2)` rotating the first two coordinates of `R^n`.
    pub fn planar_rotation(n: usize) -> Result<Self, TransformError> {
        if n < 2 {
            return Err(TransformError::Config("planar rotation needs noise dimension >= 2".into()));
        }
        let k: StateFn = Arc::new(move |z: &[f64]| {
            let mut v = vec![0.0; z.len()];
            v[0] = -z[1];
            v[1] = z[0];
            v
        });
        Ok(Self::new("planar_rotation", LieGroupChart::circle(), LieGroupChart::additive(n), true, rotate_first_two, vec![k])?
            .with_linearization(
                move |g| {
                    let r = rotation2(g[0]);
                    let mut u = DMatrix::identity(n, n);
                    u[(0, 0)] = r[0];
                    u[(0, 1)] = r[1];
                    u[(1, 0)] = r[2];
                    u[(1, 1)] = r[3];
                    u
                },
                move |_| vec![0.0; n * n * n],
            ))
    }

    /// `SO(2)` acting on `GL(2) x R^2` by `(z1, z2) -> (B z1 B^T, B z2)`.
    pub fn conjugation_affine2() -> Self {
        let k: StateFn = Arc::new(|z: &[f64]| {
            let r0 = [0.0, -1.0, 1.0, 0.0];
            let a = numeric::matmul(&r0, &z[..4], 2);
            let b = numeric::matmul(&z[..4], &r0, 2);
            vec![a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3], -z[5], z[4]]
        });
        Self::new(
            "conjugation_affine2",
            LieGroupChart::circle(),
            LieGroupChart::affine_product(2, 2),
            true,
            conjugate_affine2,
            vec![k],
        )
        .expect("one generator for SO(2)")
        .with_linearization(
            |g| {
                let b = rotation2(g[0]);
                let bm = DMatrix::from_row_slice(2, 2, &b);
                let kron = bm.kronecker(&bm);
                let mut u = DMatrix::zeros(6, 6);
                u.view_mut((0, 0), (4, 4)).copy_from(&kron);
                u.view_mut((4, 4), (2, 2)).copy_from(&bm);
                u
            },
            |_| vec![0.0; 216],
        )
    }
}

fn rotate_first_two(g: &[f64], z: &[f64]) -> Vec<f64> {
    let r = rotation2(g[0]);
    let mut out = z.to_vec();
    out[0] = r[0] * z[0] + r[1] * z[1];
    out[1] = r[2] * z[0] + r[3] * z[1];
    out
}

fn conjugate_affine2(g: &[f64], z: &[f64]) -> Vec<f64> {
    let b = rotation2(g[0]);
    let bt = numeric::transpose(&b, 2);
    let mut out = numeric::matmul(&numeric::matmul(&b, &z[..4], 2), &bt, 2);
    out.extend(numeric::matvec(&b, &z[4..6], 2));
    out
}

/// Action `Gamma` of the positive reals on the noise group, used for time changes.
#[derive(Clone)]
pub struct TimeAction {
    pub name: String,
    pub noise: LieGroupChart,
    gamma: Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>,
    generator: StateFn,
    gamma_lin: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    q_second: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    /// `p` when `Gamma_r(z) = r^p z`.
    pub power: Option<f64>,
}

impl fmt::Debug for TimeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeAction({} on {})", self.name, self.noise.name())
    }
}

impl TimeAction {
    /// `Gamma_r(z) = r^p z` on `R^n`.
    pub fn power_scaling(n: usize, p: f64) -> Self {
        Self {
            name: format!("power_scaling({p})"),
            noise: LieGroupChart::additive(n),
            gamma: Arc::new(move |r, z| {
                let s = r.powf(p);
                z.iter().map(|v| s * v).collect()
            }),
            generator: Arc::new(move |z| z.iter().map(|v| p * v).collect()),
            gamma_lin: Arc::new(move |r| DMatrix::identity(n, n) * r.powf(p)),
            q_second: Arc::new(move |_| vec![0.0; n * n * n]),
            power: Some(p),
        }
    }

    /// Brownian scaling `sqrt(r) z`.
    pub fn brownian(n: usize) -> Self {
        let mut t = Self::power_scaling(n, 0.5);
        t.name = "brownian_scaling".into();
        t
    }

    /// Stable scaling `r^{1/alpha} z`.
    pub fn stable(n: usize, alpha: f64) -> Self {
        let mut t = Self::power_scaling(n, 1.0 / alpha);
        t.name = format!("stable_scaling({alpha})");
        t
    }

    pub fn gamma(&self, r: f64, z: &[f64]) -> Vec<f64> {
        (self.gamma)(r, z)
    }

    /// Generator `H(z) = d/dr Gamma_r(z)` at `r = 1`.
    pub fn generator(&self, z: &[f64]) -> Vec<f64> {
        (self.generator)(z)
    }

    pub fn gamma_lin(&self, r: f64) -> DMatrix<f64> {
        (self.gamma_lin)(r)
    }

    pub fn q_second(&self, r: f64) -> Vec<f64> {
        (self.q_second)(r)
    }
}

/// Applies a linear map plus half a quadratic form: `L y + 1/2 Q(y, y)`.
pub(crate) fn second_order_map(lin: &DMatrix<f64>, q: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    for a in 0..n {
        let mut acc = 0.0;
        for b in 0..n {
            acc += lin[(a, b)] * y[b];
        }
        out[a] = acc;
    }
    if q.iter().any(|v| *v != 0.0) {
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                for c in 0..n {
                    acc += q[(a * n + b) * n + c] * y[b] * y[c];
                }
            }
            out[a] += 0.5 * acc;
        }
    }
    out
}
