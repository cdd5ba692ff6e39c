//! Finite element approximation of anisotropic Allen–Cahn and Cahn–Hilliard
//! equations with a double obstacle potential.
//!
//! The anisotropy is a sum of ellipsoidal norms, `γ(p) = Σ_ℓ (p·G_ℓ p)^{1/2}`,
//! discretized so that every time step satisfies a discrete energy inequality
//! without a restriction on the step size.
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anisotropy;
pub mod diagnostics;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod schemes;
pub mod solver;
