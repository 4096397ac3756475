//! Generalised Randles circuits: parameter maps, structural
//! identifiability, multisine excitation, simulation, transfer-function
//! estimation and Monte Carlo studies.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod estimate;
pub mod excitation;
pub mod identifiability;
pub mod lm;
pub mod montecarlo;
pub mod poly;
pub mod presets;
pub mod scalar;
pub mod simulate;

pub use circuit::{CircuitError, CircuitParams, ModalParams, RationalTf, StateSpaceModel};
pub use identifiability::{Classification, CoefficientVector, IdentError, IdentifiabilityVerdict, SolutionCount};
pub use scalar::Scalar;

pub type Circuit = CircuitParams<f64>;
pub type Modal = ModalParams<f64>;
pub type Tf = RationalTf<f64>;
pub type StateSpace = StateSpaceModel<f64>;

pub type ExactCircuit = CircuitParams<num_rational::BigRational>;
pub type ExactModal = ModalParams<num_rational::BigRational>;
pub type ExactTf = RationalTf<num_rational::BigRational>;
