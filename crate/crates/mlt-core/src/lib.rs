//! Maximum-likelihood estimation of conditional transformation models.
//!
//! A transformation model describes a conditional distribution through
//! F(y | x) = F_Z(h(y | x)) where F_Z is a fixed error distribution and
//! the transformation h is a monotone linear combination of basis
//! functions, h(y | x) = c(y, x)^T theta.  Estimation maximizes the
//! exact likelihood of censored and truncated observations subject to
//! linear inequality constraints that keep h monotone in y.

pub mod basis;
pub mod data;
pub mod dist;
pub mod likelihood;
pub mod inference;
pub mod models;
pub mod optim;
pub mod predict;
pub mod sim;

pub use basis::{BasisSpec, ConstraintSystem, Support};
pub use data::{Bound, CsvSchema, Dataset, LevelMap, Observation, Response, ResponseSchema};
pub use dist::ErrorDist;
pub use inference::{confidence_band, wald, Band, WaldRow};
pub use likelihood::{ResponseKind, TransformationModel};
pub use models::{fit, FitArtifact, FitResult, ModelSpec};
pub use optim::{OptimResult, OptimizerConfig};
pub use predict::{predict, quantile, sample, PredictWhat};
