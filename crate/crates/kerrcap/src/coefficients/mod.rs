//! Perturbative coupling coefficients.

pub mod build;
pub mod cache;
pub mod first_order;
pub mod gauss_hermite;
pub mod lattice;
pub mod nine;
pub mod tensor4;
pub mod zero_beta;

pub use first_order::{a1, b1, FirstOrderWeight};
pub use tensor4::{index_tuples, SymmetryClass, Tensor4, TensorKind, TensorMeta};
pub use zero_beta::ZeroBeta;
pub use build::{build_coefficients, cached_coefficients, CoefficientSet, Coverage};
pub use gauss_hermite::QuadratureSpec;
