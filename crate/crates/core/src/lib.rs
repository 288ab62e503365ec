//! SO(3)-equivariant hourglass autoencoder for all-atom protein fragments,
//! with a denoising-diffusion sampler over the learned latent features.
//!
//! The crate is organized around the pipeline:
//!
//! * [`irreps`] - exact representation algebra (spherical harmonics, Wigner
//!   matrices, Clebsch-Gordan tensor products, norms, gates);
//! * [`graddiff`] - a minimal reverse-mode gradient engine and optimizer
//!   covering exactly the operation set the model uses;
//! * [`protein_io`] - PDB ingestion, residue canonicalization, fragment
//!   extraction and emission;
//! * [`layers`] - the equivariant layer set (atom codec, self-interaction,
//!   sequence/spatial convolutions) composed into the hourglass model;
//! * [`losses`] - reconstruction, chemical, clash and latent objectives;
//! * [`diffusion`] - noise schedule, denoiser and samplers over latents;
//! * [`metrics`] - Kabsch alignment, RMSD, GDT, recovery and validity scans;
//! * [`train`] - training loops shared by the CLI and the test suites.

pub mod config;
pub mod diffusion;
pub mod error;
pub mod geom;
pub mod graddiff;
pub mod irreps;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod protein_io;
pub mod train;

pub use error::{Error, Result};
