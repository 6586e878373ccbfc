pub mod analyze;
pub mod classify;
pub mod fit;
pub mod report;
pub mod sample;
pub mod stats;
pub mod synth;
