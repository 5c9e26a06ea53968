//! Inverse design of crank-rocker four-bar linkages.
//!
//! The crate covers the whole pipeline: position analysis of the linkage,
//! the two performance conditions used as design targets (the largest
//! reachable distance `d_max` of the end-effector path and the torque per
//! force ratio `eta_min`), Latin hypercube dataset generation, a small
//! dense neural network toolkit, the conditional GAN that maps target
//! conditions to linkages, an NSGA-II baseline and the evaluation metrics
//! used to compare them.

pub mod cgan;
pub mod conditions;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod kinematics;
pub mod knn;
pub mod neuralnet;
pub mod nsga2;

pub use conditions::{evaluate, ConditionPair};
pub use dataset::{Dataset, LengthRanges, MechanismSample, Normalizer};
pub use error::{Error, Result};
pub use kinematics::{Branch, Linkage};

/// Crank resolution used when labelling the training set.
pub const DEFAULT_STEPS: usize = 360;
