//! Benchmark problems: a manufactured solution on a deformed cube with a
//! full permeability tensor, and the SPE10 reservoir layer model.

mod spe10;
mod wheeler;

use std::fmt;
use std::str::FromStr;

pub use spe10::{
    spe10_case, synthetic_field, Decomposition, PermeabilityField, SPE10_BLOCK_COUNT, SPE10_BLOCK_SIZE_FT, SPE10_DIMS,
    SPE10_TARBERT_LAYERS,
};
pub use wheeler::{check_source_consistency, wheeler_case, wheeler_decomposition, wheeler_exact};

use crate::error::{Error, Result};
use crate::postproc::ExactSolution;
use crate::solver::DarcyProblem;

/// A problem together with its exact solution, when one is known.
#[derive(Clone, Debug)]
pub struct ProblemDefinition {
    pub problem: DarcyProblem,
    pub exact: Option<ExactSolution>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    Manufactured,
    Spe10,
    Spe10Crop,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Manufactured => "manufactured",
            CaseKind::Spe10 => "spe10",
            CaseKind::Spe10Crop => "spe10-crop",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manufactured" | "wheeler" => Ok(CaseKind::Manufactured),
            "spe10" => Ok(CaseKind::Spe10),
            "spe10-crop" | "spe10_crop" => Ok(CaseKind::Spe10Crop),
            other => Err(Error::Config(format!(
                "unknown case '{other}' (expected manufactured, spe10 or spe10-crop)"
            ))),
        }
    }
}
