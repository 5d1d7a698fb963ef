//! Transfer-matrix eigenvalue formulas in dressed vacuum form for the
//! quantum-affine superalgebra family sl(r+1|s+1).
//!
//! The crate builds eigenvalue candidates as sums over admissible super
//! tableaux or as Jacobi-Trudi style determinants, supports a one-parameter
//! deformed family obtained by inflating the first r+1 rows of a diagram,
//! and provides numerical machinery (Bethe-root solving, contour residues)
//! to check that the constructions are free of spurious poles.

pub mod analytic;
pub mod bae;
pub mod cli;
mod dd;
pub mod diagrams;
pub mod dvf;
pub mod fixtures;
pub mod model;
pub mod report;

pub use num_complex::Complex64;
