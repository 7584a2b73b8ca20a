//! Adaptive observer for the physical state of an overparameterized
//! single-input single-output LTI plant driven by a disturbance from an
//! exosystem with unknown parameters.
//!
//! Pipeline: [`plant`] (ground truth) → [`filters`] (measurable regressor)
//! → [`drem`] (scalar regressions) → [`cascade`] (division-free regression
//! for `κ`) → [`observer`] (gradient flow and state reconstruction).
//! [`example`] wires in the third-order worked example.

pub mod cascade;
pub mod drem;
pub mod example;
pub mod filters;
pub mod hetero;
pub mod matrix;
pub mod observer;
pub mod plant;

pub use matrix::Mat;
