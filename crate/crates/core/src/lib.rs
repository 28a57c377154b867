//! Solver library for optimal control of convection-diffusion-reaction
//! equations with limited observation, discretized with tensor-product
//! B-splines and solved by preconditioned MINRES with Schur-complement
//! block preconditioning (exact sparse factorizations or a multigrid /
//! Kronecker realization).

pub mod assembly;
pub mod error;
pub mod geometry;
pub mod minres;
pub mod multigrid;
pub mod problems;
pub mod sparse;
pub mod spline;
pub mod studies;
pub mod system;
pub mod tensor;

pub use error::{Error, Result};
