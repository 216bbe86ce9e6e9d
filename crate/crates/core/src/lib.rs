pub mod audio;
pub mod binarize;
pub mod classifier;
pub mod config;
pub mod detector;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod grid;
pub mod pipeline;
pub mod synth;
