//! Geodesics of Godel-type product spacetimes M0 x R^2.
//!
//! The metric on the product of a Riemannian base (M0, <.,.>_R) with two
//! fiber coordinates (y, t) is
//!
//! ```text
//!   <.,.>_R + A(x) dy^2 + 2 B(x) dy dt - C(x) dt^2,
//! ```
//!
//! Lorentzian wherever H(x) = B(x)^2 + A(x) C(x) > 0. Because y and t are
//! Killing directions, the two-point geodesic problem reduces to a
//! functional of the spatial component alone; this crate minimises that
//! reduced functional over discrete paths, reconstructs the fiber
//! components in closed form, cross-validates candidates against an
//! independent geodesic-equation shooting solver, and audits the
//! hypotheses under which the reduction guarantees existence.

pub mod error;
pub mod exprdsl;
pub mod spacetime;
pub mod pathspace;
pub mod reduction;
pub mod optimizer;
pub mod oracle;
pub mod hypocheck;
pub mod cli;

pub use error::{Error, Result};
