//! Numerical toolkit for distance functions, curvature and Levi-form
//! computations on implicitly defined domains.

pub mod complex;
pub mod curvature;
pub mod dist;
pub mod domain;
pub mod error;
pub mod expr;
pub mod grid;
pub mod linalg;
pub mod potential;
pub mod sampling;

pub use domain::{boundary_frame, builtin, builtin_with, BoundaryFrame, ImplicitDomain};
pub use error::{Error, Result};
pub use expr::{eval_jet2, parse_expression, Expr, Jet2, Node, GRAMMAR};
pub use grid::GridSpec;
