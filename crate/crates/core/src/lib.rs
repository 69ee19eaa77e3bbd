//! Complete one-dimensional allowable ranges for parameters of 2D geometric
//! constraint systems, and the sequential editing session built on them.
//!
//! Pipeline for one target parameter:
//!
//! 1. [`model`] turns entities and constraints into residual equations.
//! 2. [`separation`] writes the target as `p = f(X)` subject to `G(X) = 0`.
//! 3. [`lagrange`] builds the stationarity system of `f` on `G = 0` and its
//!    sum-of-squares merit function.
//! 4. [`nichepso`] samples every zero of the merit function.
//! 5. [`endpoints`] maps roots to closed endpoint candidates and adds the
//!    limits of degenerate line configurations as open candidates.
//! 6. [`ranges`] validates the candidate intervals by feasibility sampling.
//!
//! [`session`] drives the multi-parameter editing loop on top of this.

pub mod config;
pub mod endpoints;
pub mod expr;
pub mod faure;
pub mod lagrange;
pub mod lsq;
pub mod model;
pub mod nichepso;
pub mod ranges;
pub mod separation;
pub mod session;

pub use config::Config;
pub use expr::Expr;
pub use model::ConstraintSystem;
pub use ranges::ParameterRange;
pub use session::EditingSession;
