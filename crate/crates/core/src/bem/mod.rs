//! Deterministic boundary-integral reference solver on the outer sphere.
//!
//! A graded polar mesh covers each electrode cap, a subdivided icosphere
//! covers the rest of the sphere, and a collocation system with the
//! image-corrected Green's function produces boundary potentials, interior
//! values, and per-electrode reference currents.

pub mod kernel;
pub mod mesh;
pub mod system;
