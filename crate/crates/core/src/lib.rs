//! Numerical verification engine for Einstein–Weyl 3-spaces, selfdual conformal
//! 4-manifolds and the Jones–Tod correspondence between them.
//!
//! Everything is computed pointwise from exact jets of symbolic chart data.

pub mod chart;
pub mod congruence;
pub mod error;
pub mod expr;
pub mod families;
pub mod forms;
pub mod jet;
pub mod jones_tod;
pub mod linalg;
pub mod weyl;

pub use chart::{Chart, Point};
pub use error::{GeomError, Result};
pub use expr::{Expr, Symbols};
pub use forms::StarConvention;
pub use jet::Jet;
