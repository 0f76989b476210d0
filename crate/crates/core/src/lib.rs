//! Caching and pricing of edge-computing service programs under a
//! congestion game between wireless devices.

pub mod caching;
pub mod catalog;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod pricing_differentiated;
pub mod pricing_uniform;
pub mod roots;
pub mod simulator;
pub mod valuation;

pub use caching::CacheSet;
pub use catalog::{Program, ProgramCatalog};
pub use equilibrium::{EquilibriumOutcome, PriceVector, SystemConfig};
pub use error::{Error, Result};
pub use valuation::{ValuationModel, ValuationPrior};
