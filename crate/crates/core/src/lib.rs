//! Numerical toolkit for complex-field Gamma-function integrals: the **Γ**
//! function of the complex field, propagators, the Mellin-Barnes measure,
//! residue-series machinery, two-dimensional plane integrals and a batch
//! verifier for the associated integral identities.

pub mod error;
pub mod gamma_core;
pub mod propagators;
pub mod mb_quadrature;
pub mod residue_engine;
pub mod identity_suite;
pub mod plane_integrals;

pub use error::{Error, Result};
pub mod cli_report;
