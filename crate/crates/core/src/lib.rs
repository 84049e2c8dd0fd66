//! Matrix-free solver for all-at-once space-time linear systems from
//! backward-difference discretizations of evolutionary PDEs.
//!
//! The all-at-once operator is `L = R ⊗ M + τ I_N ⊗ K`, where R holds the
//! backward-difference stencil, M and K are the spatial mass and stiffness
//! matrices, and τ the time step. The library solves `L u = f` with restarted
//! GMRES under the block ε-circulant preconditioner
//! `P_ε = R_ε ⊗ M + τ I_N ⊗ K`: the time direction diagonalizes through a
//! scaled FFT, the resulting complex spatial blocks `λ_k M + τ K` are solved
//! exactly by a fast sine transform (uniform-grid constant-coefficient
//! operators) or approximately by one geometric multigrid V-cycle, and
//! conjugate-pair symmetry halves the block-solve count for real data.
//!
//! The `analysis` module assembles small instances densely and verifies the
//! preconditioner's structure numerically: the rank-J identity defect, the
//! unit-eigenvalue count, the eigenvalue map of the non-unit cluster, the
//! diagonalizability construction, the `ε·c₀·√N/(1−η)` norm bound, and the
//! GMRES convergence envelope. The `cli` module drives experiments and these
//! checks from the `becsolve` binary (`run`, `sweep`, `verify`).

pub mod analysis;
pub mod cli;
pub mod discretization;
pub mod error;
pub mod krylov;
pub mod multigrid;
pub mod operators;
pub mod preconditioner;
pub mod problems;
pub mod transforms;

pub use error::{Error, Result};
