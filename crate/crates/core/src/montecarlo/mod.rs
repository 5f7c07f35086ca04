//! Finite-size simulator for the block data model: sampling, random-feature
//! maps, ridge and logistic students, and the empirical counterparts of the
//! theory's errors and order parameters.

mod data;
mod features;
mod fit;
mod get;
mod measure;
pub mod rng;
mod simulate;

pub use data::{block_sizes, block_variances, sample_dataset, sample_teacher, sample_test_set, SyntheticDataset};
pub use features::FeatureMap;
pub use fit::{logistic_fit, ridge_fit, OptimizerReport, TrainedStudent};
pub use get::{get_covariance_check, GetReport};
pub use measure::{empirical_errors, empirical_errors_with, empirical_order_params, score_moments, EmpiricalErrors, TestTarget};
pub use simulate::{mean_se, run_seed, seed_range, simulate, McSummary, SeedOutcome, SimulationSpec};

pub(crate) use measure::{generalization, train_loss};
