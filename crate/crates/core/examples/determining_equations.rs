//! Determining equations, finite symmetries and a least-squares symmetry search for psi(x, z) = z1 x + z2.

use jumpsym::group::LieGroupChart;
use jumpsym::models::{affine_gl2_sde, affine_noise_chart, dilation_field, rotation_generator, rotation_group};
use jumpsym::symmetry::{determining_residual, finite_symmetry_check, fit_symmetry, linear_ansatz, SymmetryGrid};
use jumpsym::transform::GaugeAction;

fn main() {
    let sde = affine_gl2_sde();
    let gauge = GaugeAction::conjugation_affine2();
    let grid = SymmetryGrid::default_for(2, &affine_noise_chart()).unwrap();
    for v in [rotation_generator(), dilation_field()] {
        let r = determining_residual(&sde, &v, &gauge, None, &grid, false).unwrap();
        println!("{:<10} sup residual {:.2e} over {} points", v.name, r.sup_norm, grid.points.len());
    }
    for a in [0.3, 0.7, 1.5] {
        let r = finite_symmetry_check(&sde, &rotation_group(a), &gauge, None, &grid, 1e-8).unwrap();
        println!("rotation by {a}: max |E_T(psi) - psi| = {:.2e}", r.max_deviation);
    }
    let ansatz = linear_ansatz(2, &LieGroupChart::circle(), false);
    let fit = fit_symmetry(&sde, &ansatz, &gauge, None, &grid, 1e-10).unwrap();
    println!("ansatz {:?}", fit.ansatz);
    let sv: Vec<String> = fit.singular_values.iter().map(|s| format!("{s:.2e}")).collect();
    println!("singular values {}", sv.join(" "));
    for d in &fit.null_directions {
        println!("symmetry direction {d:.4?}");
    }
}
