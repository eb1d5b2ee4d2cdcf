//! Modelling and recognition of bimanual gestures from dual-wrist tri-axial
//! accelerometer recordings.
//!
//! The pipeline separates each wrist stream into gravity and body
//! acceleration, assembles the features of one of two modelling layouts
//! (implicit `4x4d` or explicit `2x7d` inter-hand correlation), fits a
//! Gaussian mixture per feature, and conditions it on time (GMR) to obtain a
//! gesture model as an expected curve with a covariance envelope. Recognition
//! scores sliding windows against every model by Mahalanobis distance or
//! likelihood and rejects unmatched windows as `N.A.`.

pub mod comparison;
pub mod error;
pub mod evaluation;
pub mod features;
mod gauss;
pub mod mixture;
pub mod pipeline;
pub mod preprocess;
pub mod recognizer;
pub mod regression;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
