//! Self-re-labeling time-series classification under label noise.
//!
//! The crate bundles a small reverse-mode differentiation engine
//! ([`tensor`]), the convolutional autoencoder/classifier network and its
//! optimizer ([`nn`]), the re-labeling training loop ([`srea`]), label-noise
//! injection ([`noise`]), dataset handling ([`data`]) and the statistical
//! comparison tools used to evaluate runs ([`eval`]).

pub mod data;
pub mod eval;
pub mod nn;
pub mod noise;
pub mod records;
pub mod rng;
pub mod srea;
pub mod tensor;
