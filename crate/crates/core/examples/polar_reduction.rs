//! Rectifies the affine equation by B = -arg(x) and runs the triangular (R, Theta) recursion.

use jumpsym::models::{
    affine_gl2_sde, angle_mismatch, closed_form_rectifier, lift_translation_noise, polar_reduction,
};
use jumpsym::noise::{path_rng, sample_brownian};
use jumpsym::sde::solve_increment_map;
use jumpsym::transform::{p_action, GaugeAction};
use nalgebra::DMatrix;

fn main() {
    let x0 = [1.0, 0.5];
    let w = sample_brownian(&DMatrix::identity(2, 2), 1.0, 1e-3, &mut path_rng(11, 0)).unwrap();
    // Z_(1) = I and Z_(2) = W: X is planar Brownian motion started at x0.
    let z = lift_translation_noise(&w).unwrap();
    let x = solve_increment_map(&affine_gl2_sde(), &x0, &z).unwrap();
    let (_, reduced) = p_action(&closed_form_rectifier(), &x, &z, &GaugeAction::conjugation_affine2(), None).unwrap();
    let polar = polar_reduction(&x0, &reduced);
    let ident = polar
        .radius
        .iter()
        .zip(&x.values)
        .fold(0.0_f64, |m, (r, p)| m.max((r - p[0] * p[0] - p[1] * p[1]).abs()));
    println!("R_1 = {:.6}, |X_1|^2 = {:.6}", polar.radius.last().unwrap(), x.last()[0].powi(2) + x.last()[1].powi(2));
    println!("max |R - |X|^2| = {ident:.2e}");
    println!("max angle mismatch modulo 2 pi = {:.2e}", angle_mismatch(&polar, &x.values));
}
