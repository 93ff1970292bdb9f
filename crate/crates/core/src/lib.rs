//! Robust mean estimation under adversarial contamination, driven by a
//! packing/covering SDP whose solutions either certify a weighted mean or point
//! from the current guess toward the true mean.

pub mod baseline;
pub mod contamination;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod sdp;
pub mod solver;

pub use error::{Error, Result};
pub use estimator::{
    estimate_bounded_cov, estimate_bounded_cov_with, estimate_subgaussian, estimate_subgaussian_with,
    update_guess, EstimatorOptions, GuessState, NuUpdate,
};
pub use model::{
    build_constants, ConstantOverrides, ConstantSchedule, EstimationReport, GroundTruth, Regime, SampleSet,
    TerminalCase, WeightVector,
};
