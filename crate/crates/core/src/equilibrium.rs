//! Offloading equilibrium among devices for announced prices.
//!
//! Each device offloads iff its valuation clears `price + delta`, where the
//! common congestion term `delta` is the expected per-cycle edge latency
//! `(E[m'] + 1) / f_c` with `m' ~ Binomial(M - 1, 1 - G(delta))` competing
//! offloaders. `delta` is the unique zero of
//!
//! ```text
//! phi(delta) = delta - ((M - 1) (1 - G(delta)) + 1) / f_c
//! ```
//!
//! on `[1/f_c, M/f_c]`, found here by bisection.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::caching::CacheSet;
use crate::catalog::ProgramCatalog;
use crate::error::{Error, Result, Violation};
use crate::roots::{bisect_increasing, Stop};
use crate::valuation::{mixture_pdf, mixture_survival, ValuationModel, ValuationPrior};

/// Iteration cap for the congestion bisection.
pub const DELTA_MAX_ITER: usize = 200;
/// Default residual tolerance on `phi`, relative to the bracket top `M / f_c`.
pub const DELTA_RELATIVE_TOLERANCE: f64 = 1e-14;
/// Finite-difference step for the comparative statics, relative to the valuation spread.
pub const PRICE_STEP_RELATIVE: f64 = 1e-4;

/// Exogenous parameters of the market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of wireless devices, M.
    pub wds: u32,
    /// Edge server CPU frequency f_c in cycles/s, shared equally by offloaders.
    pub edge_frequency: f64,
    pub catalog: ProgramCatalog,
    pub valuation: ValuationModel,
}

impl SystemConfig {
    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.wds < 1 {
            out.push(Violation::new(format!("{path}.wds"), "at least one device is required"));
        }
        if !(self.edge_frequency.is_finite() && self.edge_frequency > 0.0) {
            out.push(Violation::new(
                format!("{path}.edge_frequency"),
                format!("must be > 0 cycles/s (got {:e})", self.edge_frequency),
            ));
        }
        out.extend(self.catalog.violations(&format!("{path}.catalog")));
        out.extend(self.valuation.violations(&format!("{path}.valuation")));
        out
    }

    pub fn validate(&self) -> Result<()> {
        Error::check(self.violations("system"))
    }

    pub fn num_programs(&self) -> usize {
        self.catalog.len()
    }

    /// M as a float.
    pub fn devices(&self) -> f64 {
        f64::from(self.wds)
    }

    pub fn sentinel_price(&self) -> f64 {
        self.valuation.sentinel_price()
    }

    pub fn default_delta_tolerance(&self) -> f64 {
        DELTA_RELATIVE_TOLERANCE * self.devices() / self.edge_frequency
    }

    /// Default price tolerance, relative to the width of the valuation support.
    pub fn default_price_tolerance(&self) -> f64 {
        1e-14 * self.valuation.support_width()
    }

    pub(crate) fn check_prices(&self, prices: &[f64]) -> Result<()> {
        if prices.len() != self.num_programs() {
            return Err(Error::invalid(
                "prices",
                format!("expected {} entries, got {}", self.num_programs(), prices.len()),
            ));
        }
        if let Some(j) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("prices[{j}]"), "must be finite"));
        }
        Ok(())
    }
}

/// Per-cycle price of every program, in s/cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceVector(pub Vec<f64>);

impl PriceVector {
    pub fn uniform(programs: usize, price: f64) -> Self {
        Self(vec![price; programs])
    }

    /// Uncached programs get the sentinel price so their devices never offload
    /// while their popularity still enters the congestion mixture.
    pub fn with_sentinel(config: &SystemConfig, cache: &CacheSet, mut price_of: impl FnMut(usize) -> f64) -> Self {
        let sentinel = config.sentinel_price();
        Self((0..config.num_programs()).map(|j| if cache.contains(j) { price_of(j) } else { sentinel }).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PriceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for PriceVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for PriceVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Solved offloading equilibrium for one price vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOutcome {
    /// Congestion term delta*, s/cycle.
    pub delta: f64,
    /// `1 - F(delta* + price_j)` per program.
    pub offload_prob: Vec<f64>,
    /// `phi(delta*)`.
    pub residual: f64,
    /// `M * sum_j q_j * offload_prob_j`.
    pub expected_offloaders: f64,
    pub iterations: usize,
}

/// The Bayesian threshold rule: offload iff `valuation >= price + delta`.
pub fn offloads(valuation: f64, price: f64, delta: f64) -> bool {
    valuation >= price + delta
}

/// `phi(delta) = delta - ((M - 1)(1 - G(delta)) + 1) / f_c`.
pub fn phi(config: &SystemConfig, prices: &[f64], delta: f64) -> f64 {
    let survival = mixture_survival(&config.valuation, &config.catalog, prices, delta);
    delta - ((config.devices() - 1.0) * survival + 1.0) / config.edge_frequency
}

/// Bisects `phi` on `[1/f_c, M/f_c]` until `|phi| <= tol`.
pub fn solve_delta(config: &SystemConfig, prices: &[f64], tol: f64) -> Result<EquilibriumOutcome> {
    config.check_prices(prices)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let lo = 1.0 / config.edge_frequency;
    let hi = config.devices() / config.edge_frequency;
    let root = bisect_increasing("phi", |d| Ok(phi(config, prices, d)), lo, hi, Stop::residual(tol, DELTA_MAX_ITER))?;
    Ok(outcome_at(config, prices, root.x, root.residual, root.iterations))
}

/// [`solve_delta`] at the config's default tolerance.
pub fn solve_delta_default(config: &SystemConfig, prices: &[f64]) -> Result<EquilibriumOutcome> {
    solve_delta(config, prices, config.default_delta_tolerance())
}

fn outcome_at(
    config: &SystemConfig,
    prices: &[f64],
    delta: f64,
    residual: f64,
    iterations: usize,
) -> EquilibriumOutcome {
    let offload_prob: Vec<f64> = prices.iter().map(|&p| config.valuation.survival(delta + p)).collect();
    let expected_offloaders =
        config.devices() * config.catalog.popularities().zip(&offload_prob).map(|(q, p)| q * p).sum::<f64>();
    EquilibriumOutcome { delta, offload_prob, residual, expected_offloaders, iterations }
}

/// Three-branch closed form of delta* for a uniform valuation and one price
/// shared by all programs, clamped to `[1/f_c, M/f_c]`.
pub fn delta_closed_form_uniform(config: &SystemConfig, price: f64) -> Result<f64> {
    let ValuationModel::Uniform { lower, upper } = config.valuation else {
        return Err(Error::NotUniform);
    };
    let m = config.devices();
    let fc = config.edge_frequency;
    let width = upper - lower;
    let delta = if price < lower - m / fc {
        m / fc
    } else if price > upper - 1.0 / fc {
        1.0 / fc
    } else {
        ((m - 1.0) * (upper - price) + width) / (width * fc + (m - 1.0))
    };
    Ok(delta.clamp(1.0 / fc, m / fc))
}

/// Implicit-function derivative `d delta* / d price_j`:
///
/// ```text
/// -(M - 1) q_j f(delta* + price_j) / (f_c + (M - 1) sum_k q_k f(delta* + price_k))
/// ```
pub fn delta_price_sensitivity(config: &SystemConfig, prices: &[f64], j: usize) -> Result<f64> {
    if j >= config.num_programs() {
        return Err(Error::invalid("program", format!("index {j} out of range")));
    }
    let eq = solve_delta_default(config, prices)?;
    Ok(sensitivity_at(config, prices, j, eq.delta))
}

pub(crate) fn sensitivity_at(config: &SystemConfig, prices: &[f64], j: usize, delta: f64) -> f64 {
    let competitors = config.devices() - 1.0;
    let q_j = config.catalog.programs[j].popularity;
    let density = mixture_pdf(&config.valuation, &config.catalog, prices, delta);
    let numerator = competitors * q_j * config.valuation.pdf(delta + prices[j]);
    if numerator == 0.0 {
        return 0.0;
    }
    -numerator / (config.edge_frequency + competitors * density)
}

/// Finite-difference estimates of how thresholds respond to prices, server
/// capacity and population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub delta: f64,
    /// `d(delta* + price_j) / d price_j`, expected > 0.
    pub own_price: Vec<f64>,
    /// `d delta* / d price_k`, which is `d(delta* + price_j) / d price_k` for
    /// every `j != k`; expected < 0 where program k interacts.
    pub cross_price: Vec<f64>,
    /// Whether program k moves the congestion at all (`q_k f(delta* + price_k) > 0`).
    pub interacting: Vec<bool>,
    /// `d delta* / d f_c`, expected < 0.
    pub frequency: f64,
    /// `delta*(M + 1) - delta*(M)`, expected > 0.
    pub device_increment: f64,
}

impl MonotonicityReport {
    pub fn own_price_holds(&self) -> bool {
        self.own_price.iter().all(|&d| d > 0.0)
    }

    /// Cross effects are only required of interacting programs, and only
    /// when there is some other program to be affected.
    pub fn cross_price_holds(&self) -> bool {
        self.cross_price.len() < 2
            || self.cross_price.iter().zip(&self.interacting).all(|(&d, &active)| !active || d < 0.0)
    }

    pub fn all_hold(&self) -> bool {
        self.own_price_holds() && self.cross_price_holds() && self.frequency < 0.0 && self.device_increment > 0.0
    }
}

/// Central differences of delta* in each price and in f_c, plus the discrete
/// increment in M.
pub fn threshold_monotonicity_report(config: &SystemConfig, prices: &[f64]) -> Result<MonotonicityReport> {
    let tol = config.default_delta_tolerance() * 1e-2;
    let base = solve_delta(config, prices, tol)?;
    let h = PRICE_STEP_RELATIVE * config.valuation.spread();

    let mut own_price = Vec::with_capacity(prices.len());
    let mut cross_price = Vec::with_capacity(prices.len());
    let mut interacting = Vec::with_capacity(prices.len());
    let mut shifted = prices.to_vec();
    for k in 0..prices.len() {
        shifted[k] = prices[k] + h;
        let up = solve_delta(config, &shifted, tol)?.delta;
        shifted[k] = prices[k] - h;
        let down = solve_delta(config, &shifted, tol)?.delta;
        shifted[k] = prices[k];
        let slope = (up - down) / (2.0 * h);
        own_price.push(slope + 1.0);
        cross_price.push(slope);
        let q = config.catalog.programs[k].popularity;
        interacting.push(config.wds > 1 && q * config.valuation.pdf(base.delta + prices[k]) > 0.0);
    }

    let hf = PRICE_STEP_RELATIVE * config.edge_frequency;
    let at_frequency = |fc: f64| -> Result<f64> {
        let mut c = config.clone();
        c.edge_frequency = fc;
        Ok(solve_delta(&c, prices, DELTA_RELATIVE_TOLERANCE * 1e-2 * c.devices() / fc)?.delta)
    };
    let frequency =
        (at_frequency(config.edge_frequency + hf)? - at_frequency(config.edge_frequency - hf)?) / (2.0 * hf);

    let mut more = config.clone();
    more.wds += 1;
    let device_increment = solve_delta(&more, prices, tol)?.delta - base.delta;

    Ok(MonotonicityReport { delta: base.delta, own_price, cross_price, interacting, frequency, device_increment })
}
