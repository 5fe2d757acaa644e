pub mod asymmetry;
pub mod dataset;
pub mod fusion;
pub mod ga;
pub mod geometry;
pub mod report;
pub mod scoring;
pub mod synth;
