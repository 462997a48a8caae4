//! Classification of singular orbits of integrable Hamiltonian systems by
//! constructive symplectic linear algebra, plus a numerical toolkit for the
//! hidden circle-action generators (action functions) and their persistence
//! under small integrable perturbations.
//!
//! Modules:
//! - [`symplectic`]: form checks, skew-orthogonal complements, symplectic
//!   Gram-Schmidt, Hamiltonian/symplectic operator constructors.
//! - [`classify`]: joint invariant decomposition of a commuting family,
//!   refinement by symplectic involutions, and normal-basis assembly.
//! - [`resonance`]: exact-rational canonical forms for resonance data.
//! - [`poly`] / [`dynamics`]: polynomial momentum maps, Poisson brackets,
//!   adaptive flow integration (real and complexified).
//! - [`action`]: periodic-orbit shooting, loop-integral actions, time-2π
//!   monodromy actions, periodicity witnesses.
//! - [`persist`]: integrable perturbation experiments.
//! - [`zoo`]: executable model systems with expected classification rows.
//! - [`descriptor`]: JSON wire formats shared by the CLI and the demo.

pub mod action;
pub mod classify;
pub mod descriptor;
pub mod dynamics;
pub mod exact;
pub mod persist;
pub mod poly;
pub mod resonance;
pub mod symplectic;
pub mod testkit;
pub mod zoo;
