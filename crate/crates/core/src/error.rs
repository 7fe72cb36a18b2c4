use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One problem found while validating an input file.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub file: String,
    /// 1-based data row (header excluded), when the problem is tied to a row.
    pub row: Option<usize>,
    pub column: Option<String>,
    pub message: String,
}

impl Violation {
    pub fn new(file: impl Into<String>, message: impl Into<String>) -> Self {
        Self { file: file.into(), row: None, column: None, message: message.into() }
    }

    pub fn at(mut self, row: usize, column: impl Into<String>) -> Self {
        self.row = Some(row);
        self.column = Some(column.into());
        self
    }

    pub fn row(mut self, row: usize) -> Self {
        self.row = Some(row);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(row) = self.row {
            write!(f, ", row {row}")?;
        }
        if let Some(col) = &self.column {
            write!(f, ", column `{col}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Every violation found in one validation pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport(pub Vec<Violation>);

impl ValidationReport {
    pub fn push(&mut self, v: Violation) {
        self.0.push(v);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_result<T>(self, value: T) -> Result<T> {
        if self.is_empty() {
            Ok(value)
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0.len();
        write!(f, "{n} validation error{}", if n == 1 { "" } else { "s" })?;
        for v in &self.0 {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Validation(ValidationReport),

    #[error("infeasible calibration target: {0}")]
    Infeasible(String),

    #[error("IPF did not converge after {iterations} iterations (max marginal deviation {deviation:e})")]
    NonConvergence { iterations: usize, deviation: f64 },

    #[error("{date} is outside the life of {scheme}")]
    OutOfSchedule { scheme: &'static str, date: NaiveDate },

    #[error("model `{model}`: {message}")]
    Model { model: String, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn model(model: &str, message: impl Into<String>) -> Self {
        Error::Model { model: model.to_string(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn single(file: &str, message: impl Into<String>) -> Self {
        Error::Validation(ValidationReport(vec![Violation::new(file, message)]))
    }
}
