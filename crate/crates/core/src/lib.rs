//! Daily patient-state modeling of clinical ordering decisions.
//!
//! Event streams are cut into 08:00 patient-state instances, each instance is
//! featurized into a fixed catalog of temporal slots per variable, and the
//! resulting matrix drives univariate AUC feature ranking and a top-k linear
//! SVM protocol. `synthgen` produces synthetic cohorts with known structure.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod catalog;
pub mod dataset;
pub mod decision;
pub mod featurizer;
pub mod importance;
pub mod record;
pub mod scalar;
pub mod segmentation;
pub mod svm;
pub mod synthgen;
pub mod time;

pub use decision::{DecisionId, DecisionKind};
pub use record::PatientRecord;
pub use scalar::Scalar;
pub use segmentation::{PatientStateInstance, Schedule};

pub type FeatureMatrix = featurizer::FeatureMatrix<f64>;
pub type Dataset = dataset::Dataset<f64>;
pub type AucScore = importance::AucScore<f64>;
pub type RankedList = importance::RankedList<f64>;
pub type HistogramReport = importance::HistogramReport<f64>;
pub type LinearModel = svm::LinearModel<f64>;
pub type Evaluation = svm::Evaluation<f64>;

pub use synthgen::SynthConfig;
