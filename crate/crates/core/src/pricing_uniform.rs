//! One price for every program.
//!
//! With a shared price every program has the same offload probability, so
//! the price only has to maximize `(1 - F(delta*(p) + p)) p` and the cache is
//! then a knapsack over per-program net revenue. The first-order condition is
//!
//! ```text
//! omega_u(p) = p - (1 - F(x)) / f(x) - (M - 1)(1 - F(x)) / f_c,   x = delta*(p) + p
//! ```
//!
//! which is increasing in `p` for regular priors.

use serde::{Deserialize, Serialize};

use crate::caching::{knapsack_01, CacheSet, KnapsackItem};
use crate::equilibrium::{solve_delta_default, SystemConfig};
use crate::error::{Error, Result};
use crate::roots::{bisect_increasing, Stop};
use crate::valuation::{ensure_regular, ValuationModel, ValuationPrior};

/// Grid used for the regularity guard in front of every price search.
pub const REGULARITY_GRID: usize = 1000;
pub const PRICE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRoot {
    pub price: f64,
    /// Value of the price condition at `price`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformPricingResult {
    pub price: f64,
    pub delta: f64,
    /// Offload probability shared by all programs.
    pub offload_prob: f64,
    pub cache: CacheSet,
    pub expected_profit: f64,
    /// `omega_u(price)`.
    pub residual: f64,
}

/// Uniform-price first-order condition, with delta* solved for every program at `price`.
pub fn omega_u(config: &SystemConfig, price: f64) -> Result<f64> {
    let prices = vec![price; config.num_programs()];
    let eq = solve_delta_default(config, &prices)?;
    let x = eq.delta + price;
    let survival = config.valuation.survival(x);
    let inverse_hazard = config.valuation.inverse_hazard(x)?;
    Ok(price - inverse_hazard - (config.devices() - 1.0) * survival / config.edge_frequency)
}

/// Bisects `omega_u` over `[0, sentinel]` until `|omega_u| <= tol`.
///
/// Above the sentinel nobody offloads and `omega_u(p) = p > 0`, so the
/// sentinel is a valid upper bracket.
pub fn solve_uniform_price(config: &SystemConfig, tol: f64) -> Result<PriceRoot> {
    config.validate()?;
    ensure_regular(&config.valuation, REGULARITY_GRID)?;
    let hi = config.sentinel_price().max(0.0);
    let root = bisect_increasing("omega_u", |p| omega_u(config, p), 0.0, hi, Stop::residual(tol, PRICE_MAX_ITER))?;
    Ok(PriceRoot { price: root.x, residual: root.residual, iterations: root.iterations })
}

/// `ub/2 - 1/(2 f_c)`, the optimal uniform price for a uniform valuation.
/// Requires `ub > 1/f_c`; otherwise no device would ever offload.
pub fn uniform_price_closed_form(upper: f64, edge_frequency: f64) -> Result<f64> {
    if upper.is_nan() || edge_frequency.is_nan() || upper <= 1.0 / edge_frequency {
        return Err(Error::Precondition(format!(
            "upper valuation bound {upper:e} must exceed 1/f_c = {:e}",
            1.0 / edge_frequency
        )));
    }
    Ok(0.5 * upper - 0.5 / edge_frequency)
}

/// [`uniform_price_closed_form`] taking the bound from a uniform model.
pub fn uniform_price_closed_form_for(config: &SystemConfig) -> Result<f64> {
    match config.valuation {
        ValuationModel::Uniform { upper, .. } => uniform_price_closed_form(upper, config.edge_frequency),
        _ => Err(Error::NotUniform),
    }
}

/// Gross expected revenue of each program at a shared price,
/// `(1 - F(delta* + p)) p L_j q_j M`.
pub fn program_revenues(config: &SystemConfig, price: f64) -> Result<(f64, f64, Vec<f64>)> {
    let prices = vec![price; config.num_programs()];
    let eq = solve_delta_default(config, &prices)?;
    let offload = config.valuation.survival(eq.delta + price);
    let revenues = config
        .catalog
        .programs
        .iter()
        .map(|p| offload * price * p.workload * p.popularity * config.devices())
        .collect();
    Ok((eq.delta, offload, revenues))
}

/// Uniform-pricing expected profit of a given cache.
pub fn p2_objective(config: &SystemConfig, price: f64, cache: &CacheSet) -> Result<f64> {
    let (_, _, revenues) = program_revenues(config, price)?;
    Ok(cache.indices().fold(0.0, |acc, j| acc + revenues[j] - config.catalog.programs[j].acquisition_cost))
}

/// Optimal uniform price, then the revenue-maximizing cache under it.
pub fn solve_p2(config: &SystemConfig, tol: f64) -> Result<UniformPricingResult> {
    let root = solve_uniform_price(config, tol)?;
    let (delta, offload_prob, revenues) = program_revenues(config, root.price)?;
    let weights = config.catalog.scaled_weights()?;
    let items: Vec<KnapsackItem> = config
        .catalog
        .programs
        .iter()
        .enumerate()
        .map(|(index, p)| KnapsackItem { index, value: revenues[index] - p.acquisition_cost, weight: weights[index] })
        .collect();
    let capacity = config.catalog.scaled_capacity(config.catalog.capacity);
    let cache = knapsack_01(&items, capacity, config.num_programs())?;
    Ok(UniformPricingResult {
        price: root.price,
        delta,
        offload_prob,
        expected_profit: cache.total_value(),
        cache,
        residual: root.residual,
    })
}
