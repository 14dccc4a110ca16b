//! Shared fixtures for the criterion benchmarks: a censored
//! proportional-hazards dataset and its model.

use mlt_core::models::ModelSpec;
use mlt_core::Dataset;

/// Censored survival data with one binary covariate.
pub fn survival_data(n: usize) -> Dataset {
    mlt_core::sim::ph_generate(n, &[0.8], 4.0, 42)
}

/// Bernstein-basis proportional-hazards model for [`survival_data`].
pub fn survival_spec() -> ModelSpec {
    ModelSpec::CoxPh {
        order: 6,
        support: None,
        shift: 1,
    }
}
