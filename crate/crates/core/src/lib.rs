//! Forward solver for electrical impedance tomography on the unit ball:
//! a stochastic path-integral engine (walk-on-spheres with reflection and
//! boundary local time) and a dense boundary-element reference, sharing
//! one description of the domain and its boundary data.

pub mod bem;
pub mod feynman_kac;
pub mod geometry;
pub mod oracle;
pub mod presets;
pub mod stochastic;
pub mod vec3;
