//! Windowed Kullback-Leibler divergence filter for anomaly detection in
//! proximity-sensor scans.

pub mod baseline;
pub mod cli;
pub mod detect;
pub mod grid;
pub mod hist;
pub mod kld;
pub mod render;
pub mod synth;
