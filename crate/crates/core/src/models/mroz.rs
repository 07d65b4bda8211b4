//! Column map for the Mroz (1987) labor force participation data.
//!
//! The data are not bundled; point [`load`] at a CSV with the standard
//! column names (`inlf`, `nwifeinc`, `educ`, `exper`, `age`, `kidslt6`,
//! `kidsge6`).

use std::path::Path;

use super::{make_probit, Probit};
use crate::data::{read_csv, CsvSpec, Dataset};
use crate::error::Result;

pub const OUTCOME: &str = "inlf";

/// Regressors in coefficient order.
pub const REGRESSORS: [&str; 8] = [
    "nwifeinc", "educ", "exper", "exper^2", "age", "kidslt6", "kidsge6", "const",
];

pub fn csv_spec() -> CsvSpec {
    CsvSpec {
        outcome: OUTCOME.into(),
        regressors: REGRESSORS.iter().map(|s| s.to_string()).collect(),
        ..CsvSpec::default()
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(path, &csv_spec())
}

pub fn model() -> Probit {
    make_probit(REGRESSORS.len())
}
