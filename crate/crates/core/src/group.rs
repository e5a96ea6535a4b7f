//! Lie group charts for the noise and gauge groups.
//!
//! Elements are plain coordinate vectors. Matrix groups store entries row-major.
//! The frame `Y_alpha` is right-invariant, so for a matrix group `Y_alpha(z) = E_alpha z`;
//! at the identity the frame is the coordinate basis in every supported chart.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, fd_step, matmul, smooth_cutoff, wrap_angle};
use crate::ode::{self, OdeOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("element outside the chart domain: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("logarithm did not converge: {0}")]
    Log(String),
    #[error("flow integration failed: {0}")]
    Flow(#[from] ode::OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKind {
    /// `(R^n, +)`
    Additive { dim: usize },
    /// `SO(2)` in the angle chart, values in `(-pi, pi]`.
    Circle,
    /// `GL(m)`
    GeneralLinear { m: usize },
    /// Direct product `GL(m) x R^k`.
    AffineProduct { m: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieGroupChart {
    pub kind: GroupKind,
    /// Radius of the cutoff in the Hunt functions; must not exceed the injectivity radius.
    pub hunt_radius: f64,
}

const DET_FLOOR: f64 = 1e-12;

impl LieGroupChart {
    pub fn additive(dim: usize) -> Self {
        Self { kind: GroupKind::Additive { dim }, hunt_radius: 2.0 }
    }

    pub fn circle() -> Self {
        Self { kind: GroupKind::Circle, hunt_radius: 2.0 }
    }

    pub fn general_linear(m: usize) -> Self {
        Self { kind: GroupKind::GeneralLinear { m }, hunt_radius: 1.0 }
    }

    pub fn affine_product(m: usize, k: usize) -> Self {
        Self { kind: GroupKind::AffineProduct { m, k }, hunt_radius: 1.0 }
    }

    pub fn with_hunt_radius(mut self, r: f64) -> Self {
        self.hunt_radius = r;
        self
    }

    pub fn name(&self) -> String {
        match self.kind {
            GroupKind::Additive { dim } => format!("R^{dim}"),
            GroupKind::Circle => "SO(2)".into(),
            GroupKind::GeneralLinear { m } => format!("GL({m})"),
            GroupKind::AffineProduct { m, k } => format!("GL({m})xR^{k}"),
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            GroupKind::Additive { dim } => dim,
            GroupKind::Circle => 1,
            GroupKind::GeneralLinear { m } => m * m,
            GroupKind::AffineProduct { m, k } => m * m + k,
        }
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self.kind, GroupKind::Additive { .. } | GroupKind::Circle)
            || matches!(self.kind, GroupKind::GeneralLinear { m: 1 } | GroupKind::AffineProduct { m: 1, .. })
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.kind, GroupKind::Additive { .. })
    }

    /// Matrix block size and vector block size for matrix charts.
    fn blocks(&self) -> Option<(usize, usize)> {
        match self.kind {
            GroupKind::GeneralLinear { m } => Some((m, 0)),
            GroupKind::AffineProduct { m, k } => Some((m, k)),
            _ => None,
        }
    }

    pub fn identity(&self) -> Vec<f64> {
        match self.blocks() {
            Some((m, k)) => {
                let mut z = vec![0.0; m * m + k];
                for i in 0..m {
                    z[i * m + i] = 1.0;
                }
                z
            }
            None => vec![0.0; self.dim()],
        }
    }

    pub fn check_dim(&self, z: &[f64]) -> Result<(), GroupError> {
        if z.len() != self.dim() {
            return Err(GroupError::Dimension { expected: self.dim(), got: z.len() });
        }
        Ok(())
    }

    pub fn in_domain(&self, z: &[f64]) -> bool {
        if z.len() != self.dim() || z.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.blocks() {
            Some((m, _)) => det(&z[..m * m], m).abs() > DET_FLOOR,
            None => true,
        }
    }

    pub fn multiply(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match self.kind {
            GroupKind::Additive { .. } => a.iter().zip(b).map(|(x, y)| x + y).collect(),
            GroupKind::Circle => vec![wrap_angle(a[0] + b[0])],
            GroupKind::GeneralLinear { m } => matmul(a, b, m),
            GroupKind::AffineProduct { m, .. } => {
                let mm = m * m;
                let mut out = matmul(&a[..mm], &b[..mm], m);
                out.extend(a[mm..].iter().zip(&b[mm..]).map(|(x, y)| x + y));
                out
            }
        }
    }

    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.check_dim(z)?;
        match self.kind {
            GroupKind::Additive { .. } => Ok(z.iter().map(|x| -x).collect()),
            GroupKind::Circle => Ok(vec![wrap_angle(-z[0])]),
            GroupKind::GeneralLinear { m } => mat_inverse(z, m),
            GroupKind::AffineProduct { m, .. } => {
                let mm = m * m;
                let mut out = mat_inverse(&z[..mm], m)?;
                out.extend(z[mm..].iter().map(|x| -x));
                Ok(out)
            }
        }
    }

    /// `after * before^{-1}`, the group increment between two values.
    pub fn jump_of(&self, before: &[f64], after: &[f64]) -> Result<Vec<f64>, GroupError> {
        Ok(self.multiply(after, &self.inverse(before)?))
    }

    /// Canonical representative of `z` (angles wrapped for `SO(2)`).
    pub fn normalize(&self, z: &[f64]) -> Vec<f64> {
        match self.kind {
            GroupKind::Circle => vec![wrap_angle(z[0])],
            _ => z.to_vec(),
        }
    }

    /// Distance between two elements in coordinates, measured along the circle for `SO(2)`.
    pub fn coord_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            GroupKind::Circle => wrap_angle(a[0] - b[0]).abs(),
            _ => numeric::max_abs_diff(a, b),
        }
    }

    /// Coefficients of the frame field `Y_alpha` at `z`.
    pub fn frame(&self, alpha: usize, z: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[alpha] = 1.0;
        self.right_translate(z, &e)
    }

    /// `sum_alpha xi^alpha Y_alpha(z)`, the right translate of `xi` to `z`.
    pub fn right_translate(&self, z: &[f64], xi: &[f64]) -> Vec<f64> {
        match self.blocks() {
            Some((m, _)) => {
                let mm = m * m;
                let mut out = matmul(&xi[..mm], &z[..mm], m);
                out.extend_from_slice(&xi[mm..]);
                out
            }
            None => xi.to_vec(),
        }
    }

    /// Tangent vector of `t -> z exp(t xi)` at `t = 0`.
    pub fn left_translate(&self, z: &[f64], xi: &[f64]) -> Vec<f64> {
        match self.blocks() {
            Some((m, _)) => {
                let mm = m * m;
                let mut out = matmul(&z[..mm], &xi[..mm], m);
                out.extend_from_slice(&xi[mm..]);
                out
            }
            None => xi.to_vec(),
        }
    }

    /// Maps a tangent vector at `z` back to the Lie algebra by right translation with `z^{-1}`.
    pub fn right_trivialize(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>, GroupError> {
        match self.blocks() {
            Some((m, _)) => {
                let mm = m * m;
                let zi = mat_inverse(&z[..mm], m)?;
                let mut out = matmul(&v[..mm], &zi, m);
                out.extend_from_slice(&v[mm..]);
                Ok(out)
            }
            None => Ok(v.to_vec()),
        }
    }

    /// `Ad_g(xi) = g xi g^{-1}`.
    pub fn adjoint(&self, g: &[f64], xi: &[f64]) -> Result<Vec<f64>, GroupError> {
        let v = self.left_translate(g, xi);
        self.right_trivialize(g, &v)
    }

    /// Algebra commutator `xi zeta - zeta xi`.
    pub fn algebra_bracket(&self, xi: &[f64], zeta: &[f64]) -> Vec<f64> {
        match self.blocks() {
            Some((m, k)) => {
                let mm = m * m;
                let a = matmul(&xi[..mm], &zeta[..mm], m);
                let b = matmul(&zeta[..mm], &xi[..mm], m);
                let mut out: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                out.extend(std::iter::repeat(0.0).take(k));
                out
            }
            None => vec![0.0; self.dim()],
        }
    }

    /// Time-one flow of `sum_alpha a^alpha Y_alpha` from `start`, with local error below `tol`.
    pub fn exp_flow(&self, a: &[f64], start: &[f64], tol: f64) -> Result<Vec<f64>, GroupError> {
        self.check_dim(a)?;
        self.check_dim(start)?;
        match self.kind {
            GroupKind::Additive { .. } => Ok(numeric::add(start, a)),
            GroupKind::Circle => Ok(vec![wrap_angle(start[0] + a[0])]),
            _ => {
                let field = |z: &[f64]| self.right_translate(z, a);
                Ok(ode::integrate(field, 0.0, 1.0, start, OdeOptions { tol, ..Default::default() })?)
            }
        }
    }

    pub fn exp(&self, a: &[f64], tol: f64) -> Result<Vec<f64>, GroupError> {
        self.exp_flow(a, &self.identity(), tol)
    }

    /// Largest radius on which `log_coords` is guaranteed to be single valued.
    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            GroupKind::Additive { .. } => f64::INFINITY,
            GroupKind::Circle => std::f64::consts::PI,
            GroupKind::GeneralLinear { m: 1 } | GroupKind::AffineProduct { m: 1, .. } => f64::INFINITY,
            _ => std::f64::consts::PI,
        }
    }

    /// Exponential coordinates of `z`: the `a` with `exp_flow(a, 1) = z`.
    pub fn log_coords(&self, z: &[f64], tol: f64) -> Result<Vec<f64>, GroupError> {
        self.check_dim(z)?;
        match self.kind {
            GroupKind::Additive { .. } => return Ok(z.to_vec()),
            GroupKind::Circle => return Ok(vec![wrap_angle(z[0])]),
            _ => {}
        }
        if !self.in_domain(z) {
            return Err(GroupError::Domain("singular matrix block".into()));
        }
        let (m, _) = self.blocks().expect("matrix chart");
        if m == 1 && z[0] <= 0.0 {
            return Err(GroupError::Log("negative scalar has no real logarithm".into()));
        }
        let n = self.dim();
        let id = self.identity();
        let mut a = numeric::sub(z, &id);
        let flow_tol = (tol * 1e-2).max(1e-14);
        let residual = |a: &[f64]| -> Result<Vec<f64>, GroupError> {
            Ok(numeric::sub(&self.exp_flow(a, &id, flow_tol)?, z))
        };
        let mut r = residual(&a)?;
        let mut rn = numeric::max_abs(&r);
        for _ in 0..60 {
            if rn <= tol {
                if numeric::norm(&a) > self.injectivity_radius() {
                    return Err(GroupError::Log("outside the injectivity radius".into()));
                }
                return Ok(a);
            }
            let mut jac = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                let h = fd_step(a[j]);
                let mut ap = a.clone();
                ap[j] += h;
                let mut am = a.clone();
                am[j] -= h;
                let rp = residual(&ap)?;
                let rm = residual(&am)?;
                for i in 0..n {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let rhs = nalgebra::DVector::from_column_slice(&r);
            let step = jac
                .lu()
                .solve(&rhs)
                .ok_or_else(|| GroupError::Log("singular Jacobian".into()))?;
            let mut damp = 1.0;
            loop {
                let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, s)| x - damp * s).collect();
                let rt = residual(&trial)?;
                let tn = numeric::max_abs(&rt);
                if tn < rn || damp < 1e-4 {
                    a = trial;
                    r = rt;
                    rn = tn;
                    break;
                }
                damp *= 0.5;
            }
        }
        Err(GroupError::Log(format!("residual {rn:e} above {tol:e}")))
    }

    /// Hunt functions `h = log_coords * chi(|log_coords|)`; zero where the logarithm is unavailable.
    pub fn hunt(&self, z: &[f64]) -> Vec<f64> {
        match self.log_coords(z, 1e-12) {
            Ok(a) => {
                let c = smooth_cutoff(numeric::norm(&a), self.hunt_radius);
                a.iter().map(|x| x * c).collect()
            }
            Err(_) => vec![0.0; self.dim()],
        }
    }
}

pub fn det(a: &[f64], m: usize) -> f64 {
    match m {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => DMatrix::from_row_slice(m, m, a).determinant(),
    }
}

pub fn mat_inverse(a: &[f64], m: usize) -> Result<Vec<f64>, GroupError> {
    let d = det(a, m);
    if !(d.abs() > DET_FLOOR) {
        return Err(GroupError::Domain(format!("|det| = {:e} below {DET_FLOOR:e}", d.abs())));
    }
    match m {
        1 => Ok(vec![1.0 / a[0]]),
        2 => Ok(vec![a[3] / d, -a[1] / d, -a[2] / d, a[0] / d]),
        _ => {
            let inv = DMatrix::from_row_slice(m, m, a)
                .try_inverse()
                .ok_or_else(|| GroupError::Domain("singular matrix".into()))?;
            Ok(inv.transpose().as_slice().to_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_identity_and_inverse() {
        let g = LieGroupChart::additive(3);
        assert_eq!(g.identity(), vec![0.0; 3]);
        assert_eq!(g.multiply(&[1.0, 2.0, 3.0], &g.inverse(&[1.0, 2.0, 3.0]).unwrap()), vec![0.0; 3]);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let g = LieGroupChart::general_linear(2);
        assert!(matches!(g.inverse(&[1.0, 2.0, 2.0, 4.0]), Err(GroupError::Domain(_))));
        assert!(!g.in_domain(&[1.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn circle_quarter_turn_flow() {
        let g = LieGroupChart::circle();
        let z = g.exp_flow(&[std::f64::consts::FRAC_PI_2], &[0.0], 1e-12).unwrap();
        assert!((z[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn gl2_log_of_diagonal() {
        let g = LieGroupChart::general_linear(2);
        let e = 1f64.exp();
        let a = g.log_coords(&[e, 0.0, 0.0, 1.0], 1e-10).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-8);
        assert!(a[1].abs() < 1e-8 && a[2].abs() < 1e-8 && a[3].abs() < 1e-8);
    }

    #[test]
    fn gl3_inverse_round_trip() {
        let g = LieGroupChart::general_linear(3);
        let z = [2.0, 0.5, 0.1, -0.3, 1.5, 0.2, 0.0, 0.4, 1.1];
        let p = g.multiply(&z, &g.inverse(&z).unwrap());
        assert!(numeric::max_abs_diff(&p, &g.identity()) < 1e-14);
    }

    #[test]
    fn adjoint_of_commuting_elements_is_trivial() {
        let g = LieGroupChart::general_linear(2);
        let r = numeric::rotation2(0.7);
        let xi = [0.0, -1.0, 1.0, 0.0];
        let ad = g.adjoint(&r, &xi).unwrap();
        assert!(numeric::max_abs_diff(&ad, &xi) < 1e-15);
    }
}
