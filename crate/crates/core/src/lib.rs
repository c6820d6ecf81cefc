//! Numerical toolkit for anisotropic minimal graphs.
//!
//! The crate is organised around the integrand `Φ` (the support function of a
//! smooth uniformly convex Wulff shape `K`):
//!
//! - [`wulff`]: closed-form integrand families and their differential identities.
//! - [`elliptic`]: the minimal Pucci operator, radial barriers and vertical sliding.
//! - [`grid`] / [`graph_pde`]: discrete graphs and the Dirichlet solver for
//!   `tr(D²φ(∇w) D²w) = 0` with `φ(z) = Φ(−z, 1)`.
//! - [`calibration`]: anisotropic area, calibration field and competitor energies.
//! - [`contact`]: sliding copies of `rK` under a graph and the resulting measure estimate.
//! - [`rigidity`]: extremal slopes, Hopf-type slope improvement and truncated
//!   half-space / slab / wedge experiments.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod contact;
pub mod elliptic;
pub mod error;
pub mod graph_pde;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod rigidity;
pub mod wulff;

pub use error::{Error, Result};
