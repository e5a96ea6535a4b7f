//! Small numeric helpers shared across modules.

/// Finite-difference step `cbrt(eps) * max(1, scale)` used for first derivatives.
pub fn fd_step(scale: f64) -> f64 {
    f64::EPSILON.cbrt() * scale.abs().max(1.0)
}

/// Step for second derivatives, `eps^(1/4) * max(1, scale)`.
pub fn fd_step2(scale: f64) -> f64 {
    f64::EPSILON.powf(0.25) * scale.abs().max(1.0)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `x + s * v`
pub fn axpy(x: &[f64], s: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(a, b)| a + s * b).collect()
}

/// Row-major `m x m` product.
pub fn matmul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

/// Row-major `m x m` matrix times vector.
pub fn matvec(a: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    (0..m).map(|i| (0..m).map(|j| a[i * m + j] * x[j]).sum()).collect()
}

pub fn transpose(a: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[j * m + i] = a[i * m + j];
        }
    }
    out
}

pub fn rotation2(theta: f64) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    [c, -s, s, c]
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = x.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Radical-inverse Halton coordinate of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `i` of the `dim`-dimensional Halton sequence in `[0, 1)^dim`, skipping index 0.
pub fn halton_point(i: usize, dim: usize) -> Vec<f64> {
    (0..dim).map(|d| halton(i as u64 + 1, PRIMES[d % PRIMES.len()] + 60 * (d / PRIMES.len()) as u64)).collect()
}

/// Halton point mapped into the box `[lo, hi]^dim`.
pub fn halton_box(i: usize, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    halton_point(i, dim).into_iter().map(|u| lo + (hi - lo) * u).collect()
}

/// Halton point mapped into the ball of radius `radius`.
pub fn halton_ball(i: usize, dim: usize, radius: f64) -> Vec<f64> {
    let u = halton_box(i, dim, -1.0, 1.0);
    let n = max_abs(&u);
    if n == 0.0 {
        return u;
    }
    let e = norm(&u);
    // Cube-to-ball radial map keeps the low-discrepancy ordering.
    u.iter().map(|x| x / e * n * radius).collect()
}

/// Smooth cutoff equal to one on `[0, r/2]` and zero beyond `r`.
pub fn smooth_cutoff(s: f64, r: f64) -> f64 {
    let half = 0.5 * r;
    if s <= half {
        return 1.0;
    }
    if s >= r {
        return 0.0;
    }
    let u = (s - half) / half;
    let bump = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
    let a = bump(1.0 - u);
    a / (a + bump(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two_prefix() {
        let v: Vec<f64> = (1..5).map(|i| halton(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn cutoff_is_monotone_and_bounded() {
        let mut prev = 1.0;
        for k in 0..=200 {
            let c = smooth_cutoff(k as f64 * 0.01, 2.0);
            assert!(c <= prev + 1e-15 && (0.0..=1.0).contains(&c));
            prev = c;
        }
        assert_eq!(smooth_cutoff(1.0, 2.0), 1.0);
        assert_eq!(smooth_cutoff(2.0, 2.0), 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ball_points_stay_inside() {
        for i in 0..200 {
            assert!(norm(&halton_ball(i, 3, 0.5)) <= 0.5 + 1e-12);
        }
    }
}
