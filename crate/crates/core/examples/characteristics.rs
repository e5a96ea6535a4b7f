//! Estimates characteristics of a Levy ensemble, checks the Levy gauge criterion and runs a law test.

use std::sync::Arc;

use jumpsym::characteristics::{
    estimate_characteristics, law_equality_test, levy_gauge_check, summarize, EstimateConfig, LawTestConfig,
    LevyCheckConfig,
};
use jumpsym::group::LieGroupChart;
use jumpsym::noise::{ensemble, sample_levy, GaussianJumps, LevyTriplet};
use jumpsym::transform::{gauge_with_elements, GaugeAction};
use nalgebra::DMatrix;

fn main() {
    let triplet = LevyTriplet::new(
        LieGroupChart::additive(2),
        vec![0.0, 0.0],
        DMatrix::identity(2, 2),
        2.0,
        Some(Arc::new(GaussianJumps::isotropic(2, 0.8))),
    )
    .unwrap();
    let est = estimate_characteristics(7, 2000, &EstimateConfig::default(), |rng, _| Ok(sample_levy(&triplet, 1.0, 0.01, rng)?))
        .unwrap();
    let last = est.times.len() - 1;
    println!("b_hat(1) = {:.3?} +- {:.3?}", est.b_hat[last], est.b_se[last]);
    println!("A_hat(1) = {:.3?}", est.a_hat[last]);
    println!("jumps per path = {:.3}", est.jump_count() as f64 / est.sample_count as f64);

    let rot = GaugeAction::planar_rotation(2).unwrap();
    let report = levy_gauge_check(&triplet, &rot, &[vec![0.4], vec![2.0]], &LevyCheckConfig::default()).unwrap();
    for r in &report.results {
        println!("{:<13} g = {:?}: residual {:.2e} (threshold {:.2e})", r.condition, r.parameter, r.residual, r.threshold);
    }

    let times = [0.5, 1.0];
    let rotated = ensemble(8, 2000, |rng, _| {
        let p = sample_levy(&triplet, 1.0, 0.01, rng).unwrap();
        summarize(&gauge_with_elements(&p, &rot, &vec![vec![1.1]; p.steps()]).unwrap(), &times).unwrap()
    });
    let fresh = ensemble(9, 2000, |rng, _| summarize(&sample_levy(&triplet, 1.0, 0.01, rng).unwrap(), &times).unwrap());
    let t = law_equality_test(&rotated, &fresh, &times, &LawTestConfig::default()).unwrap();
    println!("law test: min KS p = {:.3}, verdict {:?}", t.min_ks_p, t.verdict);
}
