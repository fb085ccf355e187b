//! Dual formulations of compact lattice QED with dynamical matter.
//!
//! The crate builds the lattice calculus, Green's functions, Helmholtz
//! decomposition and dual-variable maps on square and cubic lattices, the
//! truncated Hilbert spaces and Hamiltonians of the original and dual
//! formulations, and the eigenvalue harness used to compare them.

pub mod config;
pub mod dualmap;
pub mod error;
pub mod exact;
pub mod greens;
pub mod hamiltonian;
pub mod helmholtz;
pub mod hilbert;
pub mod lattice;
pub mod linmap;
pub mod spectrum;
pub mod verify;

pub use config::{Cutoffs, ModelConfig};
pub use dualmap::{constraint_set, d_matrix, dual_embedding, modified_greens, Formulation};
pub use error::{Error, Result};
pub use greens::{greens_plaquettes_obc, greens_sites, poisson_solve, GreensKind, GreensTable};
pub use hamiltonian::{h_dual_thetam, h_original, physical_sector, ModelParams};
pub use helmholtz::{helmholtz_decompose, link_shift_table, transverse_projector, Decomposition, ShiftTable};
pub use hilbert::{Basis, HilbertSpec, MatterKind, Operator};
pub use lattice::{build_lattice, Boundary, Cell, CellKind, FieldVector, Lattice, LinkRef};
pub use linmap::{IntMap, LinearMap, RealMap, Space};
pub use spectrum::{compare_formulations, lowest_eigenvalues, ComparisonReport, SpectrumReport};
pub use sprs;
pub use verify::{verify_all, Check, Status, VerifyOptions, VerifyReport};
