//! Land-cover classification and urban tree carbon assessment.
//!
//! The crate covers the whole pipeline: coordinate conversion
//! ([`geodesy`]), raster and point preparation ([`geodata`]), sample
//! extraction and splitting ([`sampling`]), Random Forest and SVM
//! classifiers ([`classify`]), accuracy evaluation ([`evaluate`]), IPCC
//! Tier 2a carbon removal ([`carbon`]), a synthetic scene generator
//! ([`synthscene`]) and the typed-DAG executor that wires the steps together
//! with provenance and content-addressed caching ([`workflow`]).

pub mod digest;
pub mod geodata;
pub mod geodesy;
pub mod parallel;
pub mod rng;
pub mod classify;
pub mod sampling;
pub mod evaluate;
pub mod carbon;
pub mod synthscene;
pub mod workflow;
