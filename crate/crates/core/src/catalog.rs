use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Tolerance on `sum(popularity) == 1`. Catalogs outside it are rejected, not renormalized.
pub const POPULARITY_SUM_TOLERANCE: f64 = 1e-12;

/// One service program the base station may cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Program {
    /// Probability that a device's task needs this program.
    pub popularity: f64,
    /// CPU cycles per task.
    pub workload: f64,
    /// Storage units occupied when cached.
    pub size: f64,
    /// Cost of acquiring the program, in profit units.
    pub acquisition_cost: f64,
}

fn default_granularity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramCatalog {
    pub programs: Vec<Program>,
    /// Caching capacity, in storage units.
    pub capacity: f64,
    /// Sizes and capacity are divided by this to get integer knapsack weights.
    #[serde(default = "default_granularity")]
    pub storage_granularity: f64,
}

impl ProgramCatalog {
    pub fn new(programs: Vec<Program>, capacity: f64) -> Self {
        Self { programs, capacity, storage_granularity: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn popularities(&self) -> impl Iterator<Item = f64> + '_ {
        self.programs.iter().map(|p| p.popularity)
    }

    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.programs.is_empty() {
            out.push(Violation::new(format!("{path}.programs"), "at least one program is required"));
        }
        for (j, p) in self.programs.iter().enumerate() {
            let at = |field: &str| format!("{path}.programs[{j}].{field}");
            if !(p.popularity.is_finite() && p.popularity >= 0.0) {
                out.push(Violation::new(at("popularity"), format!("must be >= 0 (got {:e})", p.popularity)));
            }
            if !(p.workload.is_finite() && p.workload > 0.0) {
                out.push(Violation::new(at("workload"), format!("must be > 0 cycles (got {:e})", p.workload)));
            }
            if !(p.size.is_finite() && p.size > 0.0) {
                out.push(Violation::new(at("size"), format!("must be > 0 storage units (got {:e})", p.size)));
            }
            if !(p.acquisition_cost.is_finite() && p.acquisition_cost >= 0.0) {
                out.push(Violation::new(
                    at("acquisition_cost"),
                    format!("must be >= 0 (got {:e})", p.acquisition_cost),
                ));
            }
        }
        let total: f64 = self.popularities().sum();
        if !self.programs.is_empty() && (total - 1.0).abs() > POPULARITY_SUM_TOLERANCE {
            out.push(Violation::new(
                format!("{path}.programs[*].popularity"),
                format!("must sum to 1 within {POPULARITY_SUM_TOLERANCE:e} (sum is {total})"),
            ));
        }
        if !(self.capacity.is_finite() && self.capacity >= 0.0) {
            out.push(Violation::new(format!("{path}.capacity"), format!("must be >= 0 (got {:e})", self.capacity)));
        }
        if !(self.storage_granularity.is_finite() && self.storage_granularity > 0.0) {
            out.push(Violation::new(
                format!("{path}.storage_granularity"),
                format!("must be > 0 (got {:e})", self.storage_granularity),
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        Error::check(self.violations("catalog"))
    }

    /// Program sizes as integer multiples of the storage granularity.
    pub fn scaled_weights(&self) -> Result<Vec<u64>> {
        self.programs.iter().enumerate().map(|(index, p)| to_units(p.size / self.storage_granularity, index)).collect()
    }

    /// Capacity in whole granularity units (rounded down).
    pub fn scaled_capacity(&self, capacity: f64) -> u64 {
        let units = capacity / self.storage_granularity;
        (units + 1e-9 * units.abs().max(1.0)).floor().max(0.0) as u64
    }
}

fn to_units(scaled: f64, index: usize) -> Result<u64> {
    let rounded = scaled.round();
    if rounded < 1.0 || (scaled - rounded).abs() > 1e-9 * rounded || rounded > u64::MAX as f64 {
        return Err(Error::NonIntegerWeight { index, scaled });
    }
    Ok(rounded as u64)
}
