//! Analysis of multi-arm randomized experiments and capacity-constrained
//! treatment targeting.

pub mod cate;
pub mod counterfactual;
pub mod dataset;
pub mod dr;
pub mod error;
pub mod matrix;
pub mod mht;
pub mod nuisance;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod seed;
pub mod sim;
pub mod stats;

pub use cate::{CateMethod, CatePredictions};
pub use counterfactual::{GroupValueMatrix, PolicyComparison};
pub use dataset::{ArmSet, ExperimentTable, Schema, TableParts};
pub use dr::{DrScores, GroupLabels};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nuisance::{CrossFitPlan, LearnerKind, LearnerSpec, Propensities};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport};
pub use policy::{AssignmentPlan, Capacities, PolicyTree, PriorityRule};
pub use sim::{DgpSpec, GroundTruth};
pub use stats::Estimate;
