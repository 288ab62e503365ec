//! Minimal reverse-mode gradient engine: a tape with hand-written adjoints
//! for exactly the operation set the model uses, a parameter store, an
//! adaptive-moment optimizer, checkpoint i/o and finite-difference
//! verification.

pub mod adam;
pub mod checkpoint;
pub mod fdcheck;
pub mod mlp;
pub mod params;
pub mod real;
pub mod tape;

pub use adam::{OptimizerConfig, OptimizerState};
pub use checkpoint::{load_file, save_file, CheckpointHeader};
pub use fdcheck::{finite_difference_check, FdReport};
pub use mlp::MlpSpec;
pub use params::ParameterStore;
pub use real::Real;
pub use tape::{CgCast, Tape, Var};
