//! Exact l2 robustness certification for polynomial neural networks.
//!
//! The pipeline: expand a classifier's decision boundary into a sparse
//! polynomial ([`pnn`]), build the critical-point systems of the metric
//! projection problem ([`critsys`]), solve them completely by homotopy
//! continuation ([`homotopy`]), and certify robustness margins
//! ([`verifier`]). Verification complexity is analyzed through ED degrees
//! and discriminants ([`edanalysis`], [`quadric`]) and through Kac-Rice
//! expectations for the number of real critical points ([`kacrice`]).
//! [`bench`] implements a soundness benchmark with planted counterexamples.

pub mod bench;
pub mod critsys;
pub mod edanalysis;
pub mod homotopy;
pub mod kacrice;
pub mod pnn;
pub mod poly;
pub mod quadric;
pub mod verifier;

pub use poly::{Monomial, PolySystem, Polynomial};
