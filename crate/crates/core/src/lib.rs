//! Construction, certification and continuation of bounded orbits for
//! lattice systems ε·Z + V = 0 driven by skew-product base dynamics.
//!
//! The crate is organised around the life of one model instance:
//!
//! * [`model`] wires a coupling Z, a potential V and base dynamics θ_k into
//!   a [`model::ModelInstance`] and probes the standing conditions.
//! * [`levelset`] scans a fiber's zero set f_θ⁻¹(0), traces its connected
//!   components and classifies the almost-horizontal ones.
//! * [`orbits`] builds finite-window solutions by backward root recursion
//!   and damped Newton with complete multistart seeding.
//! * [`cantor`] pulls the working interval back through component graphs
//!   into a refinement tree and certifies Cantor structure at finite depth.
//! * [`rotation`] prescribes fibered rotation numbers through the integer
//!   staircase shift of the coupling.
//! * [`fhim`] continues the smooth invariant graph K(ε, θ) on a torus grid,
//!   detects its breakdown, and measures Lyapunov exponents.
//!
//! Everything is deterministic: no random numbers anywhere, and data-parallel
//! paths (behind the `parallel` feature) reduce in a fixed order.

pub mod cantor;
pub mod error;
pub mod fhim;
pub mod levelset;
pub mod model;
pub mod numerics;
pub mod orbits;
pub mod rotation;

pub use error::{Error, Result};
pub use model::{builtin_model, BuiltinParams, ModelInstance};
