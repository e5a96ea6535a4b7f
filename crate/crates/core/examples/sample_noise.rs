//! Samples Levy, truncated stable and discrete iterated noise and prints path summaries.

use std::sync::Arc;

use jumpsym::group::LieGroupChart;
use jumpsym::models::affine_noise_chart;
use jumpsym::noise::{alpha_stable_triplet, path_rng, sample_discrete_iterated, sample_levy, GaussianJumps, LevyTriplet};
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let mut rng = path_rng(1, 0);
    let levy = LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![0.5, 0.0],
        DMatrix::identity(2, 2),
        3.0,
        Some(Arc::new(GaussianJumps::isotropic(2, 0.5))),
    )
    .unwrap();
    let p = sample_levy(&levy, 1.0, 0.01, &mut rng).unwrap();
    println!("levy: {} steps, {} jumps, Z_1 = {:.4?}", p.steps(), p.jumps.len(), p.values.last().unwrap());

    let stable = alpha_stable_triplet(1.5, 1, 0.05).unwrap();
    let p = sample_levy(&stable, 1.0, 0.01, &mut rng).unwrap();
    println!("1.5-stable (jumps beyond 0.05): {} jumps, Z_1 = {:.4?}", p.jumps.len(), p.values.last().unwrap());

    let p = sample_discrete_iterated(&affine_noise_chart(), 10, |r| {
        let mut z = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        for v in z.iter_mut() {
            let e: f64 = StandardNormal.sample(r);
            *v += 0.1 * e;
        }
        z
    }, &mut rng)
    .unwrap();
    println!("iterated affine maps: Z_10 = {:.4?}", p.values.last().unwrap());
    println!("\nfirst CSV rows of the iterated path:");
    for line in p.to_csv().lines().take(3) {
        println!("  {line}");
    }
}
