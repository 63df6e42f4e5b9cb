//! Discretized Wiener space: grids, increments, smooth functionals, the
//! divergence operator and a quadrature oracle.

pub mod divergence;
pub mod functional;
pub mod grid;
pub mod quadrature;

pub use divergence::{skorohod, skorohod_functional, wiener_integral};
pub use functional::{
    inner_functional, malliavin_inner, Functional, FunctionalState, GradientField, HessianField, Shape, ThirdField,
};
pub use grid::{coarsen, sample_increments, IncrementMatrix, TimeGrid};
pub use quadrature::gh_expectation;
