//! A separate price per cached program.
//!
//! Prices are found by alternating best responses: each cached program's
//! price solves its own first-order condition `omega_d = 0` with the other
//! prices and the congestion term taken from the previous sweep. The caching
//! decision is then an exhaustive search over feasible subsets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caching::{enumerate_feasible_subsets, CacheSet};
use crate::equilibrium::{solve_delta, PriceVector, SystemConfig};
use crate::error::{Error, Result};
use crate::pricing_uniform::{solve_uniform_price, PRICE_MAX_ITER, REGULARITY_GRID};
use crate::roots::{bisect_decreasing, bisect_increasing, Stop};
use crate::valuation::{ensure_regular, ValuationPrior};

pub const DEFAULT_MAX_ITER: usize = 500;

/// Tolerance handed to the inner delta* solve: run to the end of the float bracket.
const EXHAUST: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffPricingResult {
    pub cache: CacheSet,
    /// Cached programs at their solved price, the rest at the sentinel.
    pub prices: PriceVector,
    pub delta: f64,
    pub offload_prob: Vec<f64>,
    pub expected_profit: f64,
    pub iterations: usize,
    /// Worst normalized `|omega_d|` over the cached set, delta* recomputed at the final prices.
    pub max_residual: f64,
    pub converged: bool,
}

/// `omega_d` for program `j` at a given congestion term `delta`.
///
/// ```text
/// q_j M L_j { (f_c + (M-1) sum_{k != j} q_k f_k) [(1 - F_j)/f_j - pi_j] + (M-1) q_j (1 - F_j) }
///   + (M-1) q_j sum_{k != j} f_k q_k M pi_k L_k
/// ```
///
/// with `F_k = F(delta + pi_k)` and sums over the cached set.
pub fn omega_d_at(config: &SystemConfig, cache: &CacheSet, prices: &[f64], j: usize, delta: f64) -> Result<f64> {
    let v = &config.valuation;
    let m = config.devices();
    let programs = &config.catalog.programs;
    let (q_j, l_j) = (programs[j].popularity, programs[j].workload);

    let mut others_density = 0.0;
    let mut others_revenue_slope = 0.0;
    for k in cache.indices().filter(|&k| k != j) {
        let f_k = v.pdf(delta + prices[k]);
        others_density += programs[k].popularity * f_k;
        others_revenue_slope += f_k * programs[k].popularity * m * prices[k] * programs[k].workload;
    }
    let x = delta + prices[j];
    let bracket = v.inverse_hazard(x)? - prices[j];
    let own = (config.edge_frequency + (m - 1.0) * others_density) * bracket + (m - 1.0) * q_j * v.survival(x);
    Ok(q_j * m * l_j * own + (m - 1.0) * q_j * others_revenue_slope)
}

/// [`omega_d_at`] divided by `q_j M L_j (f_c + (M-1) sum_k q_k f_k)`, which
/// puts it in price units. Zero for a program nobody requests.
pub fn normalized_omega_d_at(
    config: &SystemConfig,
    cache: &CacheSet,
    prices: &[f64],
    j: usize,
    delta: f64,
) -> Result<f64> {
    let program = &config.catalog.programs[j];
    if program.popularity == 0.0 {
        return Ok(0.0);
    }
    let density: f64 =
        cache.indices().map(|k| config.catalog.programs[k].popularity * config.valuation.pdf(delta + prices[k])).sum();
    let scale = program.popularity
        * config.devices()
        * program.workload
        * (config.edge_frequency + (config.devices() - 1.0) * density);
    Ok(omega_d_at(config, cache, prices, j, delta)? / scale)
}

/// `omega_d` with delta* solved at `prices`.
pub fn omega_d(config: &SystemConfig, cache: &CacheSet, prices: &[f64], j: usize) -> Result<f64> {
    check_member(cache, j)?;
    let eq = solve_delta(config, prices, EXHAUST)?;
    omega_d_at(config, cache, prices, j, eq.delta)
}

fn check_member(cache: &CacheSet, j: usize) -> Result<()> {
    if cache.contains(j) {
        Ok(())
    } else {
        Err(Error::invalid("program", format!("{j} is not in the cached set")))
    }
}

fn check_cache(config: &SystemConfig, cache: &CacheSet) -> Result<()> {
    if cache.num_programs() != config.num_programs() {
        return Err(Error::invalid(
            "cache",
            format!("covers {} programs, catalog has {}", cache.num_programs(), config.num_programs()),
        ));
    }
    Ok(())
}

/// Price of `j` solving `omega_d = 0` with the other prices and `delta` held fixed.
///
/// `omega_d` decreases in the own price, so this bisects on `[0, sentinel]`.
/// If the condition is still positive at the sentinel the program is priced
/// out and the sentinel is returned.
pub fn best_response_price(
    config: &SystemConfig,
    cache: &CacheSet,
    prices: &[f64],
    j: usize,
    delta: f64,
    tol: f64,
) -> Result<f64> {
    check_member(cache, j)?;
    config.check_prices(prices)?;
    if config.catalog.programs[j].popularity == 0.0 {
        return Ok(prices[j]);
    }
    let mut trial = prices.to_vec();
    let mut residual = |p: f64| {
        trial[j] = p;
        normalized_omega_d_at(config, cache, &trial, j, delta)
    };
    let sentinel = config.sentinel_price();
    if residual(sentinel)? >= 0.0 {
        return Ok(sentinel);
    }
    let stop = Stop { f_tol: 0.0, x_tol: 0.01 * tol, max_iter: PRICE_MAX_ITER };
    Ok(bisect_decreasing("omega_d", residual, 0.0, sentinel, stop)?.x)
}

/// Alternating best responses over the cached set.
///
/// Every sweep computes all cached prices from the previous iterate, then
/// refreshes delta*. Stops when no price moved by more than `tol`. Without
/// `init` the sweep starts from the optimal uniform price.
pub fn solve_algorithm2(
    config: &SystemConfig,
    cache: &CacheSet,
    init: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<DiffPricingResult> {
    config.validate()?;
    check_cache(config, cache)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    if cache.is_empty() {
        let prices = PriceVector::with_sentinel(config, cache, |_| 0.0);
        return finish(config, cache, prices, 0, true);
    }
    ensure_regular(&config.valuation, REGULARITY_GRID)?;

    let mut prices = match init {
        Some(init) => {
            config.check_prices(init)?;
            PriceVector::with_sentinel(config, cache, |j| init[j])
        }
        None => {
            let start = solve_uniform_price(config, config.default_price_tolerance())?.price;
            PriceVector::with_sentinel(config, cache, |_| start)
        }
    };

    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let delta = solve_delta(config, &prices, EXHAUST)?.delta;
        let mut next = prices.clone();
        for j in cache.indices() {
            next[j] = best_response_price(config, cache, &prices, j, delta, tol)?;
        }
        let change = cache.indices().map(|j| (next[j] - prices[j]).abs()).fold(0.0, f64::max);
        prices = next;
        if change <= tol {
            converged = true;
            break;
        }
    }
    finish(config, cache, prices, iterations, converged)
}

fn finish(
    config: &SystemConfig,
    cache: &CacheSet,
    prices: PriceVector,
    iterations: usize,
    converged: bool,
) -> Result<DiffPricingResult> {
    let eq = solve_delta(config, &prices, EXHAUST)?;
    let mut max_residual: f64 = 0.0;
    for j in cache.indices() {
        let r = normalized_omega_d_at(config, cache, &prices, j, eq.delta)?;
        max_residual = max_residual.max(r.abs());
    }
    let expected_profit = profit_at(config, cache, &prices, &eq.offload_prob);
    Ok(DiffPricingResult {
        cache: cache.clone(),
        prices,
        delta: eq.delta,
        offload_prob: eq.offload_prob,
        expected_profit,
        iterations,
        max_residual,
        converged,
    })
}

fn profit_at(config: &SystemConfig, cache: &CacheSet, prices: &[f64], offload: &[f64]) -> f64 {
    let m = config.devices();
    cache
        .indices()
        .map(|j| {
            let p = &config.catalog.programs[j];
            offload[j] * p.popularity * m * prices[j] * p.workload - p.acquisition_cost
        })
        .fold(0.0, |acc, v| acc + v)
}

/// Expected profit of a cache and price vector, with delta* solved at `prices`:
/// `sum_{j cached} (1 - F(delta* + pi_j)) q_j M pi_j L_j - r_j`.
pub fn p3_objective(config: &SystemConfig, cache: &CacheSet, prices: &[f64]) -> Result<f64> {
    check_cache(config, cache)?;
    let eq = solve_delta(config, prices, EXHAUST)?;
    Ok(profit_at(config, cache, prices, &eq.offload_prob))
}

/// Common price of a cached set whose programs all have the same workload:
/// the root of
///
/// ```text
/// pi - (1 - F(x)) / f(x) - (M - 1) Q (1 - F(x)) / f_c,   x = delta*(pi) + pi
/// ```
///
/// where `Q` is the popularity mass of the cached set.
pub fn equal_workload_price(config: &SystemConfig, cache: &CacheSet, tol: f64) -> Result<f64> {
    config.validate()?;
    check_cache(config, cache)?;
    let mut cached = cache.indices().map(|j| config.catalog.programs[j].workload);
    let Some(workload) = cached.next() else {
        return Err(Error::Precondition("cached set is empty".into()));
    };
    if cached.any(|l| l != workload) {
        return Err(Error::Precondition("cached programs have different workloads".into()));
    }
    ensure_regular(&config.valuation, REGULARITY_GRID)?;

    let mass: f64 = cache.indices().map(|j| config.catalog.programs[j].popularity).sum();
    let condition = |p: f64| -> Result<f64> {
        let prices = PriceVector::with_sentinel(config, cache, |_| p);
        let delta = solve_delta(config, &prices, EXHAUST)?.delta;
        let x = delta + p;
        let survival = config.valuation.survival(x);
        Ok(p - config.valuation.inverse_hazard(x)? - (config.devices() - 1.0) * mass * survival / config.edge_frequency)
    };
    let hi = config.sentinel_price().max(0.0);
    Ok(bisect_increasing("equal-workload price", condition, 0.0, hi, Stop::residual(tol, PRICE_MAX_ITER))?.x)
}

/// Two cached programs `j` and `k` under a uniform valuation on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoProgramParams {
    pub lower: f64,
    pub upper: f64,
    pub edge_frequency: f64,
    pub wds: f64,
    pub q_j: f64,
    pub q_k: f64,
    pub l_j: f64,
    pub l_k: f64,
}

impl TwoProgramParams {
    fn swapped(&self) -> Self {
        Self { q_j: self.q_k, q_k: self.q_j, l_j: self.l_k, l_k: self.l_j, ..*self }
    }

    fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn constant_a(&self) -> f64 {
        let w = self.width();
        let mq = (self.wds - 1.0) * (self.q_j + self.q_k);
        self.edge_frequency * self.upper * w + mq * w - (mq + 1.0) * w
    }

    fn denominator(&self) -> Result<f64> {
        let (m1, fw) = (self.wds - 1.0, self.edge_frequency * self.width());
        let (q_j, q_k, l_j, l_k) = (self.q_j, self.q_k, self.l_j, self.l_k);
        let positive = 4.0 * l_j * l_k * (q_j * q_k * m1 * m1 + fw * m1 * (q_j + q_k) + fw * fw);
        let den = positive - q_j * q_k * m1 * m1 * (l_j + l_k).powi(2);
        if !(den.is_finite() && den > 1e-12 * positive) {
            return Err(Error::Degenerate(format!("closed-form denominator {den:e} (positive part {positive:e})")));
        }
        Ok(den)
    }

    fn price_j(&self) -> Result<f64> {
        let (m1, fw) = (self.wds - 1.0, self.edge_frequency * self.width());
        let numerator = self.l_k
            * (2.0 * self.l_j * self.q_j * m1 + 2.0 * self.l_j * fw + self.q_k * m1 * (self.l_j + self.l_k))
            * self.constant_a();
        Ok(numerator / self.denominator()?)
    }

    /// `q_k` at which `d pi_j / d q_j` changes sign when `L_j < L_k`.
    pub fn popularity_threshold(&self) -> Option<f64> {
        (self.l_j < self.l_k)
            .then(|| 2.0 * self.edge_frequency * self.width() * self.l_j / ((self.l_k - self.l_j) * (self.wds - 1.0)))
    }
}

/// Interior optimal prices `(pi_j, pi_k)` of the two-program game.
pub fn two_program_closed_form(params: &TwoProgramParams) -> Result<(f64, f64)> {
    Ok((params.price_j()?, params.swapped().price_j()?))
}

/// Analytic `d pi_j / d q_j` of [`two_program_closed_form`]:
///
/// ```text
/// A (M-1)^2 L_k (L_j - L_k)(L_j + L_k) q_k [2 L_j f_c w + (M-1)(L_j - L_k) q_k] / den^2
/// ```
pub fn popularity_derivative(params: &TwoProgramParams) -> Result<f64> {
    let p = params;
    let m1 = p.wds - 1.0;
    let den = p.denominator()?;
    let bracket = 2.0 * p.l_j * p.edge_frequency * p.width() + m1 * (p.l_j - p.l_k) * p.q_k;
    Ok(p.constant_a() * m1 * m1 * p.l_k * (p.l_j - p.l_k) * (p.l_j + p.l_k) * p.q_k * bracket / (den * den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// Sign of `d pi_j / d q_j`: positive when `L_j > L_k`; when `L_j < L_k`,
/// negative below the popularity threshold and positive above it.
pub fn popularity_sensitivity(params: &TwoProgramParams) -> Sign {
    if params.q_k == 0.0 || params.l_j == params.l_k {
        return Sign::Zero;
    }
    match params.popularity_threshold() {
        None => Sign::Positive,
        Some(t) => Sign::of(params.q_k - t),
    }
}

/// Best cache and differentiated prices over every capacity-feasible subset.
///
/// Subsets are solved in parallel; the winner is the highest profit, ties
/// going to the smaller and then lexicographically smaller subset.
pub fn solve_p3(config: &SystemConfig, tol: f64, max_iter: usize) -> Result<DiffPricingResult> {
    config.validate()?;
    let subsets: Vec<CacheSet> = enumerate_feasible_subsets(&config.catalog, config.catalog.capacity)?.collect();
    let solved: Vec<Result<DiffPricingResult>> =
        subsets.par_iter().map(|cache| solve_algorithm2(config, cache, None, tol, max_iter)).collect();

    let mut best: Option<DiffPricingResult> = None;
    for result in solved {
        let result = result?;
        if best.as_ref().is_none_or(|b| result.expected_profit > b.expected_profit) {
            best = Some(result);
        }
    }
    let mut best = best.expect("the empty cache is always feasible");
    let weights = config.catalog.scaled_weights()?;
    let weight = best.cache.indices().map(|j| weights[j]).sum();
    best.cache = best.cache.clone().with_totals(weight, best.expected_profit);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Program, ProgramCatalog};
    use crate::pricing_uniform::solve_p2;
    use crate::valuation::ValuationModel;

    fn config(q: &[f64], l: &[f64], fc: f64) -> SystemConfig {
        SystemConfig {
            wds: 100,
            edge_frequency: fc,
            catalog: ProgramCatalog::new(
                q.iter()
                    .zip(l)
                    .map(|(&popularity, &workload)| Program { popularity, workload, size: 1.0, acquisition_cost: 1.0 })
                    .collect(),
                q.len() as f64,
            ),
            valuation: ValuationModel::Uniform { lower: -1e-7, upper: 1e-7 },
        }
    }

    fn params(c: &SystemConfig) -> TwoProgramParams {
        let ValuationModel::Uniform { lower, upper } = c.valuation else { unreachable!() };
        let p = &c.catalog.programs;
        TwoProgramParams {
            lower,
            upper,
            edge_frequency: c.edge_frequency,
            wds: c.devices(),
            q_j: p[0].popularity,
            q_k: p[1].popularity,
            l_j: p[0].workload,
            l_k: p[1].workload,
        }
    }

    fn run(c: &SystemConfig) -> DiffPricingResult {
        let r =
            solve_algorithm2(c, &CacheSet::full(c.num_programs()), None, c.default_price_tolerance(), DEFAULT_MAX_ITER)
                .unwrap();
        assert!(r.converged, "{r:?}");
        r
    }

    #[test]
    fn single_program_condition_reduces_to_uniform() {
        let c = config(&[1.0], &[3e8], 1e8);
        let cache = CacheSet::full(1);
        let r = omega_d(&c, &cache, &[4.5e-8], 0).unwrap();
        let scale = 1.0 * 100.0 * 3e8 * 1e8 * 1e-7;
        assert!(r.abs() <= 1e-12 * scale, "{r}");
    }

    #[test]
    fn condition_is_positive_at_zero_and_negative_at_sentinel() {
        let c = config(&[0.5, 0.5], &[2e8, 3e8], 1e8);
        let cache = CacheSet::full(2);
        assert!(omega_d(&c, &cache, &[0.0, 5e-8], 0).unwrap() > 0.0);
        assert!(omega_d(&c, &cache, &[1e-7, 5e-8], 0).unwrap() < 0.0);
        assert!(omega_d(&c, &cache, &[2e-7, 5e-8], 0).unwrap() < 0.0);
    }

    #[test]
    fn equal_workloads_collapse_to_the_uniform_price() {
        let c = config(&[0.5, 0.5], &[3e8, 3e8], 1e8);
        let r = run(&c);
        assert!((r.prices[0] - 4.5e-8).abs() < 1e-17);
        assert!((r.prices[1] - 4.5e-8).abs() < 1e-17);
        assert!(r.max_residual <= 1e-12 * 1e-7);
    }

    #[test]
    fn best_response_fixed_point_is_stable() {
        let c = config(&[0.5, 0.5], &[3e8, 3e8], 1e8);
        let cache = CacheSet::full(2);
        let prices = [4.5e-8, 4.5e-8];
        let delta = solve_delta(&c, &prices, EXHAUST).unwrap().delta;
        let p = best_response_price(&c, &cache, &prices, 0, delta, c.default_price_tolerance()).unwrap();
        assert!((p - 4.5e-8).abs() < 1e-20, "{p}");
    }

    #[test]
    fn single_program_best_response_is_the_uniform_price() {
        let c = config(&[1.0], &[3e8], 1e8);
        let r = run(&c);
        assert!((r.prices[0] / 4.5e-8 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unequal_workloads_match_closed_form() {
        let c = config(&[0.5, 0.5], &[2e8, 3e8], 1e8);
        let r = run(&c);
        let (pj, pk) = two_program_closed_form(&params(&c)).unwrap();
        assert!(r.prices[0] > r.prices[1]);
        assert!((r.prices[0] / pj - 1.0).abs() < 1e-9, "{} vs {pj}", r.prices[0]);
        assert!((r.prices[1] / pk - 1.0).abs() < 1e-9, "{} vs {pk}", r.prices[1]);
    }

    #[test]
    fn closed_form_substitutes_back() {
        let c = config(&[0.3, 0.7], &[2e8, 3e8], 1e8);
        let (pj, pk) = two_program_closed_form(&params(&c)).unwrap();
        let cache = CacheSet::full(2);
        for j in 0..2 {
            let delta = solve_delta(&c, &[pj, pk], EXHAUST).unwrap().delta;
            let r = normalized_omega_d_at(&c, &cache, &[pj, pk], j, delta).unwrap();
            assert!(r.abs() <= 1e-9 * 1e-7, "{j}: {r}");
        }
    }

    #[test]
    fn huge_server_prices_at_half_the_upper_bound() {
        let c = config(&[0.2, 0.3, 0.5], &[1e8, 2e8, 3e8], 1e14);
        let r = run(&c);
        for p in r.prices.iter() {
            assert!((p - 5e-8).abs() <= 1e-10, "{p}");
            assert!((p / 5e-8 - 1.0).abs() <= 1e-5, "{p}");
        }
    }

    #[test]
    fn equal_workload_price_full_catalog_is_uniform() {
        let c = config(&[0.5, 0.5], &[3e8, 3e8], 1e8);
        let p = equal_workload_price(&c, &CacheSet::full(2), c.default_price_tolerance()).unwrap();
        let u = solve_uniform_price(&c, c.default_price_tolerance()).unwrap().price;
        assert!((p - u).abs() < 1e-20);
        assert!(equal_workload_price(&config(&[0.5, 0.5], &[2e8, 3e8], 1e8), &CacheSet::full(2), 1e-20).is_err());
    }

    #[test]
    fn equal_workload_price_agrees_with_algorithm2_on_partial_cache() {
        let mut c = config(&[0.25, 0.25, 0.5], &[3e8, 3e8, 3e8], 1e8);
        c.valuation = ValuationModel::Normal { mean: 0.0, std_dev: 5e-8 };
        let cache = CacheSet::from_indices(3, &[0, 1]);
        let tol = c.default_price_tolerance();
        let p = equal_workload_price(&c, &cache, tol).unwrap();
        let r = solve_algorithm2(&c, &cache, None, tol, DEFAULT_MAX_ITER).unwrap();
        let u = solve_uniform_price(&c, tol).unwrap().price;
        assert!(r.converged);
        assert!((r.prices[0] - p).abs() < 1e-8 * p, "{} vs {p}", r.prices[0]);
        assert!((p - u).abs() > 1e-4 * u, "{p} vs {u}");
        assert_eq!(r.prices[2], c.sentinel_price());
    }

    #[test]
    fn popularity_derivative_signs() {
        let mut p = params(&config(&[0.5, 0.5], &[3e8, 2e8], 1e8));
        assert_eq!(popularity_sensitivity(&p), Sign::Positive);
        assert!(popularity_derivative(&p).unwrap() > 0.0);
        p.l_j = 1e8;
        p.l_k = 3e8;
        p.q_k = 1e-3;
        assert_eq!(popularity_sensitivity(&p), Sign::Negative);
        assert!(popularity_derivative(&p).unwrap() < 0.0);
        let t = p.popularity_threshold().unwrap();
        p.q_k = 2.0 * t;
        assert_eq!(popularity_sensitivity(&p), Sign::Positive);
        assert!(popularity_derivative(&p).unwrap() > 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = params(&config(&[0.3, 0.6], &[2e8, 3e8], 1e8));
        let h = 1e-6;
        let hi = two_program_closed_form(&TwoProgramParams { q_j: p.q_j + h, ..p }).unwrap().0;
        let lo = two_program_closed_form(&TwoProgramParams { q_j: p.q_j - h, ..p }).unwrap().0;
        let fd = (hi - lo) / (2.0 * h);
        let exact = popularity_derivative(&p).unwrap();
        assert!((fd / exact - 1.0).abs() < 1e-5, "{fd} vs {exact}");
    }

    #[test]
    fn degenerate_denominator_is_rejected() {
        let p = TwoProgramParams {
            lower: -1e-7,
            upper: 1e-7,
            edge_frequency: 1.0,
            wds: 1e6,
            q_j: 0.5,
            q_k: 0.5,
            l_j: 1.0,
            l_k: 1e6,
        };
        assert!(matches!(two_program_closed_form(&p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_capacity_gives_empty_cache() {
        let mut c = config(&[0.5, 0.5], &[2e8, 3e8], 1e8);
        c.catalog.capacity = 0.0;
        let r = solve_p3(&c, c.default_price_tolerance(), DEFAULT_MAX_ITER).unwrap();
        assert!(r.cache.is_empty());
        assert_eq!(r.expected_profit, 0.0);
        assert!(r.prices.iter().all(|&p| p == c.sentinel_price()));
    }

    #[test]
    fn p3_beats_p2_on_three_programs() {
        let mut c = config(&[0.2, 0.4, 0.4], &[3e8, 2e8, 1e8], 1e8);
        c.catalog.capacity = 2.0;
        let tol = c.default_price_tolerance();
        let d = solve_p3(&c, tol, DEFAULT_MAX_ITER).unwrap();
        let u = solve_p2(&c, tol).unwrap();
        assert!(d.expected_profit >= u.expected_profit - 1e-12);
        assert_eq!(d.cache.len(), 2);
        let recomputed = p3_objective(&c, &d.cache, &d.prices).unwrap();
        assert!((recomputed / d.expected_profit - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_cache_wins_when_everything_is_profitable() {
        // at f_c = 1e8 the light program is priced nearly out of the market
        let c = config(&[0.3, 0.3, 0.4], &[2e8, 2.5e8, 3e8], 1e9);
        let r = solve_p3(&c, c.default_price_tolerance(), DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.cache.len(), 3);
    }

    #[test]
    fn initializations_agree() {
        let c = config(&[0.4, 0.6], &[2e8, 3e8], 1e8);
        let cache = CacheSet::full(2);
        let tol = c.default_price_tolerance();
        let a = solve_algorithm2(&c, &cache, None, tol, DEFAULT_MAX_ITER).unwrap();
        let b = solve_algorithm2(&c, &cache, Some(&[0.0, 0.0]), tol, DEFAULT_MAX_ITER).unwrap();
        assert!(a.converged && b.converged);
        for j in 0..2 {
            assert!((a.prices[j] - b.prices[j]).abs() <= 100.0 * tol);
        }
    }
}
