//! Power-system case model: schema types, file ingestion, validation, and the
//! Newton-Raphson base-case power flow.

mod powerflow;
mod types;
mod validate;

pub use powerflow::{solve_powerflow, BranchFlow, BusVoltageSolution, PowerflowError};
pub use types::{
    Block, BlockKind, Branch, Bus, BusId, Controller, ControllerKind, CtrlId, GenId, Generator,
    InputPath, Limits, Load, PowerSystemCase, SignalKind, Zone,
};
pub use validate::{validate_case, ValidationReport, Violation};

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("case validation failed with {} violation(s):\n{}", .0.len(), format_violations(.0))]
    Validation(Vec<Violation>),
    #[error("base-case power flow failed: {0}")]
    Powerflow(#[from] PowerflowError),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Loads and fully validates a case file. Validation warnings (over-rated
/// dispatch, ignored limits) are emitted through the `log` facade; use
/// [`load_case_report`] to capture them programmatically.
pub fn load_case(path: impl AsRef<Path>) -> Result<PowerSystemCase, ModelError> {
    let (case, report) = load_case_report(path)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(case)
}

/// [`load_case`] variant returning the validation report alongside the case.
pub fn load_case_report(
    path: impl AsRef<Path>,
) -> Result<(PowerSystemCase, ValidationReport), ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let case: PowerSystemCase =
        serde_json::from_str(&text).map_err(|e| ModelError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let report = validate_case(&case)?;
    Ok((case, report))
}
