//! Numerical verification lab for Gaussian correlation inequalities over
//! centered symmetric convex bodies.
//!
//! The crate provides membership oracles and affine operations on convex
//! bodies, exact and Monte Carlo Gaussian measure estimators with common
//! random numbers, one statistical checker per correlation inequality, and a
//! Givens-rotation descent over the orthogonal group that exhibits the
//! permutation extremality of ellipsoid intersections.

pub mod bodies;
pub mod error;
pub mod measure;
pub mod orthogonal;
pub mod randomness;

pub use error::{Error, Result};
