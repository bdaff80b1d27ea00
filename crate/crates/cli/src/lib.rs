//! Experiment runner behind the `nlgate` binary.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure.

pub mod commands;
pub mod config;
pub mod format;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::Parser;
use cqed_nonlocal::Error as CoreError;

pub use commands::{run, Report};
pub use config::{resolve, Cli, FileConfig, Resolved};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Numerical(_) => 2,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::LabelCollision(_)
            | CoreError::UnknownLabel(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::InvalidBasis(_)
            | CoreError::InvalidParameter(_)
            | CoreError::ContractViolation(_) => Self::Validation(e.to_string()),
            CoreError::NotNormalized { .. }
            | CoreError::NotHermitian { .. }
            | CoreError::NotUnitary { .. }
            | CoreError::Stiffness { .. }
            | CoreError::Quadrature { .. }
            | CoreError::Truncation { .. }
            | CoreError::Locality(_) => Self::Numerical(e.to_string()),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

/// Runs one invocation and writes its outputs. Returns the process exit code.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match resolve(cli).and_then(|r| emit(&r)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(r: &Resolved) -> Result<i32, CliError> {
    let report = run(r)?;
    match &r.global.out {
        Some(p) => write_file(p, &report.csv)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.csv.as_bytes())
                .map_err(|e| CliError::Validation(format!("cannot write to stdout: {e}")))?;
        }
    }
    if let (Some(trace), config::Command::Protocol(a)) = (&report.trace, &r.command) {
        let path = a.trace.clone().or_else(|| {
            r.global.out.as_ref().map(|p| {
                let mut s = p.clone().into_os_string();
                s.push(".trace");
                s.into()
            })
        });
        if let Some(p) = path {
            write_file(&p, trace)?;
        }
    }
    Ok(report.exit_code)
}
