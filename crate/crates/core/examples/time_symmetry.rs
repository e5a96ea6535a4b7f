//! Random time change of planar Brownian motion by a bounded predictable density.

use jumpsym::noise::{path_rng, sample_brownian, PredictableControl};
use jumpsym::transform::{apply_time_symmetry, TimeAction};
use nalgebra::DMatrix;

fn main() {
    let eta = PredictableControl::time_density("eta", 0.5, 2.0, |h| 1.25 + 0.75 * h.last()[0].tanh()).unwrap();
    let action = TimeAction::brownian(2);
    let n = 2000;
    let mut qv = [0.0; 2];
    for i in 0..n {
        let z = sample_brownian(&DMatrix::identity(2, 2), 2.0, 1e-3, &mut path_rng(5, i)).unwrap();
        let (w, tc) = apply_time_symmetry(&z, &action, &eta, Some(1e-3)).unwrap();
        if i == 0 {
            println!("first path: source horizon {}, transformed horizon {:.3}", z.horizon(), tc.horizon());
        }
        let v = w.value_at(1.0);
        qv[0] += v[0] * v[0] / n as f64;
        qv[1] += v[1] * v[1] / n as f64;
    }
    println!("E[W_1^2] per coordinate: {qv:.3?} (Brownian motion: 1)");
}
