//! Exact-diagonalization laboratory for Bose-Hubbard lattice dynamics.
//!
//! The crate builds finite torus lattices, bosonic Fock bases in fixed-number
//! or capped sectors, sparse Hamiltonians, and Krylov propagators, and uses
//! them to audit closed-form propagation bounds (light-cone envelopes, moment
//! bounds, truncation errors, operator inequalities) by direct simulation at
//! desk scale.

pub mod bounds;
pub mod config;
pub mod experiments;
pub mod fock;
pub mod hamiltonian;
pub mod lattice;
pub mod output;
pub mod par;
pub mod propagator;
pub mod states;

pub use num_complex::Complex64;

/// Prelude re-exporting the types most callers need.
pub mod prelude {
    pub use crate::bounds::{BoundMode, BoundParams, Schedule};
    pub use crate::fock::{FockBasis, Sector, SparseOperator};
    pub use crate::hamiltonian::{Interaction, ModelSpec};
    pub use crate::lattice::{Lattice, Translation};
    pub use crate::propagator::{PropagatorSettings, StateEnsemble};
    pub use crate::Complex64;
}
