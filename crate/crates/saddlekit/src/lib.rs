//! Saddle-point preconditioning toolkit with an exact physical-unit algebra.
//!
//! The crate builds four classic saddle-point model problems (Stokes flow,
//! nearly incompressible elasticity, and distributed optimal control of the
//! Poisson and Stokes equations) on structured tetrahedral box meshes,
//! attaches physical dimensions to every space, operator, and parameter, and
//! solves the systems with preconditioned MINRES using block-diagonal
//! preconditioners whose scalings are fixed by dimensional consistency.
//! Every shipped preconditioner is machine-checked for consistency, and the
//! `bench` module reproduces the parameter-robustness iteration tables.

pub mod bench;
pub mod fem;
pub mod krylov;
pub mod linalg;
pub mod mesh;
pub mod precond;
pub mod problems;
pub mod units;
