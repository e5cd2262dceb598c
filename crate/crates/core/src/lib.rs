//! Reverse-mode automatic differentiation over dense arrays.
//!
//! - [`array`]: row-major n-d arrays, broadcasting, precision policy.
//! - [`graph`]: dynamic computation graph with parameter/constant leaves.
//! - [`ops`]: the elementary functions and their backward rules.
//! - [`gradcheck`]: central-difference gradient oracle.
//! - [`optim`]: EMA-direction descent with an adaptive step size.
//! - [`demos`]: catenary, histogram classifier and ODE boundary-value solver.

pub mod array;
pub mod demos;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod ops;
pub mod optim;
pub mod precision;
pub mod rng;

pub use array::{broadcast_shapes, Array};
pub use error::{Error, Result};
pub use graph::{
    evaluate, is_recording, no_grad, set_recording, with_recording, IntoNode, Node, NodeKind,
};
pub use ops::Op;
pub use precision::{default_precision, set_default_precision, with_precision, Precision};
pub use rng::Rng;
