//! Cross-correlations of Mackey sections on finite group actions, with
//! stabilizer-aware filters, orbitwise integral transforms and the
//! passage between the two.

pub mod battery;
pub mod bundle;
pub mod codec;
pub mod demo;
pub mod error;
pub mod group;
pub mod linalg;
pub mod measures;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod transform;
pub mod xcorr;

pub use error::{Error, Result};
