//! Certified reduced-basis toolkit for single-phase compressible Darcy flow with
//! an average multi-point flux discretization.

pub mod artifact;
pub mod config;
pub mod eim;
pub mod energy;
pub mod error;
pub mod estimators;
pub mod hf;
pub mod linalg;
pub mod mesh;
pub mod mpfa;
pub mod offline;
pub mod online;
pub mod par;
pub mod persistence;
pub mod reduction;
pub mod scm;

pub use error::{Error, Result};
