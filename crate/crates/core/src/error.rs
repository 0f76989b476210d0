use std::fmt;

use thiserror::Error;

/// A single failed input constraint, addressed by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self { field: field.into(), constraint: constraint.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("no sign change for {what} on [{lo:e}, {hi:e}] (f(lo)={f_lo:e}, f(hi)={f_hi:e})")]
    NoSignChange { what: &'static str, lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("{what} evaluated to NaN at x={x:e}")]
    NotANumber { what: &'static str, x: f64 },

    #[error("valuation density vanishes inside the support at {at:e} while the survival is {survival:e}")]
    ZeroDensity { at: f64, survival: f64 },

    #[error("valuation model is not regular (virtual value decreases near {at:e})")]
    Irregular { at: f64 },

    #[error("operation requires a uniform valuation model")]
    NotUniform,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("closed form is degenerate: {0}")]
    Degenerate(String),

    #[error("{programs} programs give 2^{programs} caching subsets, above the enumeration limit of 2^{limit}; reduce the catalog size")]
    TooManySubsets { programs: usize, limit: usize },

    #[error("weight of item {index} is {scaled} storage units after scaling, which is not a positive integer")]
    NonIntegerWeight { index: usize, scaled: f64 },

    #[error("duplicate knapsack item index {0}")]
    DuplicateItem(usize),

    #[error("knapsack table of {cells} cells exceeds the limit of {limit}")]
    KnapsackTooLarge { cells: u128, limit: u128 },

    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {field}: {message}")]
    Parse { path: std::path::PathBuf, field: String, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Invalid(vec![Violation::new(field, constraint)])
    }

    /// Wraps a list of violations, `Ok` when empty.
    pub fn check(violations: Vec<Violation>) -> Result<()> {
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(violations))
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
