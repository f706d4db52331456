//! zetalab-core: a numerical laboratory for dynamical Fredholm determinants
//! of hyperbolic torus diffeomorphisms.
//!
//! The pipeline runs from periodic-orbit data to spectra and back:
//!
//! * [`dynamics`] — torus maps T(x) = Ax + eps v(x) mod Z^2, weights g,
//!   Jacobians, inverses and hyperbolicity estimates;
//! * [`orbits`] — exact enumeration of Fix T^n for toral automorphisms and
//!   Newton continuation for perturbed maps, with on-disk caching;
//! * [`traces`] — weighted periodic-orbit sums tr_n and quadrature checks of
//!   the transfer-operator duality and power identities;
//! * [`mollifier`] — smoothed delta-kernel traces converging to the orbit
//!   sums, with Richardson extrapolation in the mollifier width;
//! * [`determinant`] — Taylor coefficients of the dynamical determinant,
//!   certified disk radius, zero extraction and factorization checks;
//! * [`spectral`] — Fourier-Galerkin discretization of the transfer operator
//!   as the independent eigenvalue oracle.

pub mod determinant;
pub mod digest;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod mollifier;
pub mod numeric;
pub mod orbits;
pub mod roots;
pub mod spectral;
pub mod traces;

mod lapack;

pub use error::{Error, Result};
