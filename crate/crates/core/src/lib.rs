//! Torus-invariant compactly supported perturbations of Euclidean space built
//! from skew-symmetric brackets, with tools to certify isospectrality of the
//! brackets, intertwine the Laplacians, and compute the `a2` heat invariant.

pub mod bracket;
pub mod error;
pub mod fit;
pub mod frame;
pub mod heat;
pub mod intertwine;
pub mod jet;
pub mod metric;
pub mod oracle;

pub use bracket::{example_bracket, Bracket, ExampleBracket};
pub use error::{Error, Result};
pub use frame::FrameCurvature;
pub use metric::{CutoffProfile, MetricMatrix, Point};
