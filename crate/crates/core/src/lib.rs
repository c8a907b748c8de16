//! Structure-preserving P1 finite element scheme for the nonisothermal
//! Cahn-Hilliard-Navier-Stokes system on the periodic unit square.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. The
//! companion `chnst` crate provides the command line, config files and
//! output formats.
//!
//! Module map:
//!
//! * [`mesh`]: uniform periodic triangulations and nested refinement.
//! * [`fem`]: quadrature, P1 fields, integration, norms, the skew
//!   convection form.
//! * [`linsolve`]: compressed sparse matrices and a sparse direct LU.
//! * [`model`]: pointwise thermodynamic closures and parameter checks.
//! * [`scheme`]: the coupled discrete residual, its Jacobian, Newton and
//!   time stepping.
//! * [`diagnostics`]: conserved quantities, dissipation and the per-step
//!   entropy ledger.
//! * [`harness`]: presets and the two-grid convergence study.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod ad;
pub mod diagnostics;
mod error;
pub mod fem;
pub mod harness;
pub mod linsolve;
pub(crate) mod math;
pub mod mesh;
pub mod model;
pub mod scheme;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;
