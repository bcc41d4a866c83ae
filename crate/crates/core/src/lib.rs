pub mod adam;
pub mod alignment;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod nn;
pub mod objective;
pub mod params;
pub mod synth;
pub mod tensor;
pub mod train;
