//! C² quartic box-spline quasi-interpolation of gridded volume data.
//!
//! The spline space is spanned by scaled translates of the seven-direction
//! box spline on the uniform type-6 tetrahedral partition of a box
//! `[0, m1 h] x [0, m2 h] x [0, m3 h]`. Coefficients are computed by local
//! linear functionals of the data that make the operator exact on cubic
//! polynomials; the functionals attached to generators near the boundary
//! only touch data inside the box or on its faces.
//!
//! Module map:
//!
//! * [`partition`]: cubes, the 24-tetrahedron split, point location.
//! * [`bernstein`]: quartic Bernstein–Bézier polynomials on tetrahedra.
//! * [`boxspline`]: the box spline itself, as a table of Bézier patches,
//!   plus a recurrence-based oracle used to build and audit the table.
//! * [`domain`]: index sets, data points, boundary symmetry classes.
//! * [`stencils`]: the library of coefficient functionals.
//! * [`nearbest`]: derivation of l1-minimal functionals by exact simplex.
//! * [`qi`]: assembling and evaluating the quasi-interpolant.
//! * [`volume`]: raw volume I/O and analytic test functions.
//! * [`isosurface`]: marching tetrahedra and mesh export.

pub mod bernstein;
pub mod boxspline;
pub mod domain;
mod error;
pub mod isosurface;
pub mod lp;
pub mod nearbest;
pub mod par;
pub mod partition;
pub mod qi;
pub mod rational;
pub mod stencils;
pub mod volume;

pub use error::{Error, Result};
pub use partition::DomainGrid;
pub use qi::{approximate, QiSpline, SampleField};

/// Integer triple indexing translates, data points or cubes.
pub type MultiIndex = [i64; 3];

/// Point in R³.
pub type Point = [f64; 3];
