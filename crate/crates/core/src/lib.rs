//! Local robustness verification for ReLU feedforward classifiers.
//!
//! The verifier combines two layers of reasoning:
//!
//! * [`deeppoly`] propagates, per neuron, a symbolic linear lower/upper bound
//!   over earlier neurons together with a concrete interval (the DeepPoly
//!   abstract domain). This is fast but loses precision at uncertain ReLUs.
//! * [`refine`] intersects the abstract results with one candidate
//!   misclassification region at a time and uses exact LP queries over the
//!   triangle relaxation ([`lp`]) to tighten input and pre-activation bounds,
//!   re-running the analysis with the tightened facts forced. A region that
//!   becomes infeasible or dominated is ruled out; if every candidate region
//!   is ruled out the property holds.
//!
//! [`quant`] extends the same machinery to a measure-based guarantee: the
//! input box is split into equal-volume parts and the unresolved leftover
//! volume bounds the mass of potential violations. [`oracle`] provides an
//! independent exact verifier (activation-pattern enumeration) and a Monte
//! Carlo estimator used to validate the main path in tests.

pub mod deeppoly;
mod error;
pub mod lp;
pub mod network;
pub mod oracle;
pub mod quant;
pub mod refine;

pub use error::{Error, Result};
pub use network::{InputBox, Layer, NetFormat, Network};
