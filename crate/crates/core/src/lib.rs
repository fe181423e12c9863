//! Inverse layout design with a variational autoencoder.
//!
//! The crate covers the whole workflow: physics datasets (surface-diffusion
//! morphology evolution and lithographic pattern transfer), a dense VAE
//! trained on paired initial/final images, and bound-constrained search in
//! the VAE latent space for a layout whose predicted outcome matches a target.

pub mod config;
pub mod datagen;
pub mod design;
pub mod error;
pub mod eval;
pub mod field;
pub mod io;
pub mod litho;
pub mod morphology;
pub mod nn;
pub mod optim;
pub mod phase;

pub use error::{Error, Result};
pub use field::{BinaryImage, Field2D, Half, PairedSample};
