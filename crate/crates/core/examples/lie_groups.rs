//! Group laws, exponential and logarithm, and Hunt coordinates on the builtin charts.

use jumpsym::group::LieGroupChart;
use jumpsym::models::affine_noise_chart;

fn main() {
    for chart in [LieGroupChart::additive(2), LieGroupChart::circle(), LieGroupChart::general_linear(2), affine_noise_chart()] {
        let xi: Vec<f64> = (0..chart.dim()).map(|i| 0.1 * (i as f64 + 1.0)).collect();
        let z = chart.exp(&xi, 1e-12).unwrap();
        let back = chart.log_coords(&z, 1e-12).unwrap();
        let inv = chart.inverse(&z).unwrap();
        let e = chart.multiply(&z, &inv);
        println!("{}", chart.name());
        println!("  exp(xi)        = {z:.6?}");
        println!("  log(exp(xi))   = {back:.6?}");
        println!("  z z^-1 vs e    = {:.1e}", chart.coord_distance(&e, &chart.identity()));
        println!("  hunt(z)        = {:.6?}", chart.hunt(&z));
    }
}
