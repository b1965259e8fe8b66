//! Single-excitation simulator for quantum emitters coupled to the edges of
//! Harper-Hofstadter photonic lattices.
//!
//! The crate is organized around the pipeline used by the experiments:
//!
//! * [`lattice`] — assemble the bath Hamiltonian in real space or in its
//!   Bloch-reduced (Harper) form, including disorder, on-site losses and
//!   carved defects.
//! * [`spectrum`] — diagonalization, localization indices, DoS/LDoS with
//!   Gaussian smoothing, and Chern numbers from the Diophantine equation.
//! * [`edge_model`] — the effective multi-mode waveguide description of the
//!   chiral edge channels: per-channel dispersion fits, localization lengths,
//!   group velocities and resonant momenta.
//! * [`emitter`] — emitter-bath couplings (local and giant-atom), golden-rule
//!   and per-channel decay rates, momentum-space coupling functions and
//!   multi-momentum cancellation couplings.
//! * [`dynamics`] — wavepacket propagation in the single-excitation sector
//!   (Hermitian or lossy) and the derived observables: edge profiles,
//!   momentum profiles, time-bin amplitudes, defect transmission.
//! * [`propagator`] — the Chebyshev and Krylov propagation kernels behind
//!   [`dynamics`].
//!
//! Energies are measured in units of the hopping `J` with the cavity energy
//! `omega_a = 0` as the reference; lengths are in lattice constants.

// Link the system BLAS/LAPACK backend.
extern crate openblas_src;

pub mod edge_model;
pub mod dynamics;
pub mod emitter;
pub mod error;
pub mod lattice;
pub mod op;
pub mod propagator;
pub mod spectrum;

pub use edge_model::EdgeModeModel;
pub use dynamics::{SingleExcitationState, Trajectory};
pub use emitter::EmitterSpec;
pub use error::{Error, Result};
pub use lattice::{BathOperator, Boundary, Flux, LatticeSpec};
pub use op::SparseOp;
pub use spectrum::{BandStructure, ChernData, EigenSolution};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
