//! Experiment orchestration: configuration, gate suites, statistics and
//! report emission.

pub mod config;
pub mod convergence;
pub mod identity;
pub mod ks;
pub mod report;

pub use config::{ExperimentConfig, OutputFormat};
pub use convergence::run_convergence;
pub use identity::run_identity_suite;
pub use report::{emit_report, ConvergenceReport, Gate, GateStatus, IdentityReport, Report, VerifyReport};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::weight_model::WeightModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Identity,
    Convergence,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Identity => "identity",
            Suite::Convergence => "convergence",
            Suite::All => "all",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Suite::Identity),
            "convergence" => Ok(Suite::Convergence),
            "all" => Ok(Suite::All),
            other => Err(Error::param("suite", format!("`{other}` is not identity, convergence or all"))),
        }
    }
}

/// Run the requested suites. Configuration errors in the convergence grid
/// are returned; gate failures are report entries. A model that fails
/// validation gets the identity report (validation failed, rest skipped)
/// whatever the suite, and no convergence report.
pub fn verify(model: &WeightModel, config: &ExperimentConfig, suite: Suite, exec: Execution) -> Result<VerifyReport> {
    let valid = model.validate().is_ok();
    let identity =
        (!valid || matches!(suite, Suite::Identity | Suite::All)).then(|| run_identity_suite(model, config, exec));
    let convergence = if valid && matches!(suite, Suite::Convergence | Suite::All) {
        Some(run_convergence(model, config, exec)?)
    } else {
        None
    };
    Ok(VerifyReport {
        preset: model.name.clone(),
        seed: config.seed,
        suite: suite.as_str().into(),
        identity,
        convergence,
    })
}
