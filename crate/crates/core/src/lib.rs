//! Work extraction under thermal operations for finite and truncated quantum systems.
//!
//! Modules follow the pipeline: dense linear algebra (`qmat`), Schur-Weyl
//! decomposition (`schur`), pinching channels (`pinching`), method of types
//! (`typeclass`), sampling and estimation (`estimation`), protocol synthesis and
//! simulation (`extraction`), truncated infinite-dimensional systems (`infdim`)
//! and experiment orchestration (`experiment`, `acceptance`).

pub mod acceptance;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod extraction;
pub mod infdim;
pub mod pinching;
pub mod qmat;
pub mod schur;
pub mod typeclass;

pub use error::{Error, Result};
pub use qmat::{DensityMatrix, SubnormalizedState, ThermalContext};
