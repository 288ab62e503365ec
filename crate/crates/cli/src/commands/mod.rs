pub mod eval;
pub mod interpolate;
pub mod reconstruct;
pub mod sample;
pub mod train;
