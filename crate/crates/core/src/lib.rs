//! Trip-demand prediction between counties: a calibrated gravity baseline,
//! tree ensembles and a multilayer perceptron trained on county features,
//! with the metrics and analyses used to compare them.

pub mod analysis;
pub mod gravity;
pub mod importance;
pub mod ingest;
pub mod metrics;
pub mod ml;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tuning;
