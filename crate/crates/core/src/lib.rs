//! A_p-weight calculus on finite truncations of trees with root at infinity.

pub mod error;
pub mod maps;
pub mod maximal;
pub mod measure;
pub mod numeric;
pub mod prefix;
pub mod scenario;
pub mod trapezoid;
pub mod tree;
pub mod weights;

pub use error::{FlowError, Result};
pub use measure::FlowMeasure;
pub use numeric::{ConstantValue, Interval, Rational};
pub use tree::{Shape, SuccCounts, TruncatedTree, VertexId};
