//! C⁰ interior penalty finite elements for a smectic-A density coupled to a
//! two-dimensional Landau–de Gennes Q-tensor, with a manufactured-solution
//! convergence harness.
//!
//! The pipeline is [`mesh`] → [`space`] → [`forms`] (residual and Jacobian)
//! → [`newton`] (driving [`linalg`]) → [`norms`], orchestrated by [`driver`].

pub mod basis;
pub mod driver;
pub mod error;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod newton;
pub mod norms;
pub mod quadrature;
pub mod space;

pub use error::{Error, Result};
pub use forms::{Discretization, FormVariant, ModelParams, ProblemKind};
pub use newton::{newton_solve, NewtonOptions, NewtonReport};
