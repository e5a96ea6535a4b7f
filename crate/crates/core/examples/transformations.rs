//! Composition, inversion, push-forward and rectification of stochastic transformations.

use jumpsym::group::LieGroupChart;
use jumpsym::models::{closed_form_rectifier, rotation_generator, rotation_group};
use jumpsym::numeric::halton_box;
use jumpsym::transform::{
    compose, flow_of, invert, lie_bracket, push_forward, rectify_check, rectify_single, transformation_deviation,
    BracketVariant, StochasticTransformation,
};

fn main() {
    let pts: Vec<Vec<f64>> = (1..40).map(|i| halton_box(i, 2, -2.0, 2.0)).filter(|x| x[0].hypot(x[1]) > 0.3).collect();
    let t = closed_form_rectifier();
    let id = StochasticTransformation::identity(2, LieGroupChart::circle());
    let d = transformation_deviation(&compose(&t, &invert(&t)).unwrap(), &id, &pts);
    println!("T o T^-1 vs identity: {d:.1e}");

    let v = rotation_generator();
    let (x, g, eta) = flow_of(&v, 0.7, &[1.0, 0.5], 1e-12).unwrap();
    println!("flow of the rotation field for 0.7: x = {x:.6?}, B = {g:.6?}, eta = {eta}");
    println!("closed form:                       x = {:.6?}", rotation_group(0.7).phi(&[1.0, 0.5]));

    let pushed = push_forward(&t, &v).unwrap();
    println!("rectified field at (1, 0.5): Y = {:.6?}, C = {:.2e}", pushed.y(&[1.0, 0.5]), pushed.c(&[1.0, 0.5])[0]);
    println!("rectify_check of the closed-form rectifier: {:.1e}", rectify_check(&t, std::slice::from_ref(&v), &pts).unwrap());
    let numeric = rectify_single(&v, &[1.0, 0.5], 1e-12).unwrap();
    // The numerical rectifier vanishes at its base point; it agrees with the closed form up to that constant.
    let shift = numeric.b(&[1.0, 0.5])[0] - t.b(&[1.0, 0.5])[0];
    for x in [[1.2, 0.9], [0.6, 0.2]] {
        println!("B at {x:?}: numerical {:.6}, closed form + shift {:.6}", numeric.b(&x)[0], t.b(&x)[0] + shift);
    }

    let br = lie_bracket(&v, &pushed, BracketVariant::Corrected).unwrap();
    println!("[V, T_* V] at (1, 0.5): Y = {:.4?}", br.y(&[1.0, 0.5]));
}
