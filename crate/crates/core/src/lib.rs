//! Symmetries of stochastic differential equations driven by Lie-group-valued
//! semimartingales with jumps.

pub mod characteristics;
pub mod group;
pub mod models;
pub mod noise;
pub mod numeric;
pub mod ode;
pub mod scenario;
pub mod sde;
pub mod symmetry;
pub mod transform;
