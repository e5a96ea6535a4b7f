//! Solves a Marcus SDE with jumps and compares it with its closed-form solution.

use std::sync::Arc;

use jumpsym::group::LieGroupChart;
use jumpsym::models::marcus_example;
use jumpsym::noise::{path_rng, sample_levy, GaussianJumps, LevyTriplet};
use jumpsym::numeric;
use jumpsym::sde::solve_increment_map;
use nalgebra::DMatrix;

fn main() {
    let triplet = LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![0.0, 0.0],
        DMatrix::identity(2, 2) * 0.09,
        2.0,
        Some(Arc::new(GaussianJumps::isotropic(2, 0.3))),
    )
    .unwrap();
    let z = sample_levy(&triplet, 1.0, 0.01, &mut path_rng(3, 0)).unwrap();
    // dX = X^0 d0 <> dZ^1 + d1 <> dZ^2, solved exactly by (x0 exp Z^1, x1 + Z^2).
    let sde = marcus_example(1e-10).to_canonical();
    let x0 = [0.2, 0.0];
    let x = solve_increment_map(&sde, &x0, &z).unwrap();
    let worst = x.values.iter().zip(&z.values).fold(0.0_f64, |m, (xv, zv)| {
        m.max(numeric::max_abs_diff(xv, &[x0[0] * zv[0].exp(), x0[1] + zv[1]]))
    });
    println!("{} jumps, X_1 = {:.6?}", z.jumps.len(), x.last());
    println!("max deviation from the closed form: {worst:.2e}");
}
