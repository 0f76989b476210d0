//! Monte Carlo device populations.
//!
//! Each replication draws `M` devices, lets them follow the equilibrium
//! threshold rule and books the realized costs and payments. Replication `r`
//! of seed `s` always uses ChaCha stream `r` of key `s`, so results do not
//! depend on how replications are spread over threads.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caching::CacheSet;
use crate::equilibrium::{offloads, solve_delta_default, SystemConfig};
use crate::error::{Error, Result, Violation};
use crate::valuation::{mixture_survival, ValuationPrior};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Points per program in the deviation grid.
pub const DEVIATION_GRID: usize = 100;

/// Streams at or above this offset are reserved for the deviation check.
const DEVIATION_STREAM: u64 = 1 << 63;

/// Physical quantities behind a device's valuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalBlock {
    /// Local execution time `L / f_l`, in s.
    pub local_time: f64,
    /// Upload time `I / (W log2(1 + p h / sigma^2))`, in s.
    pub upload_time: f64,
    pub workload: f64,
    pub input_bits: f64,
    pub bandwidth: f64,
    pub power: f64,
    pub channel_gain: f64,
    pub noise_power: f64,
    pub local_frequency: f64,
}

impl PhysicalBlock {
    pub fn new(
        workload: f64,
        input_bits: f64,
        bandwidth: f64,
        power: f64,
        channel_gain: f64,
        noise_power: f64,
        local_frequency: f64,
    ) -> Self {
        let rate = bandwidth * (power * channel_gain / noise_power).ln_1p() / std::f64::consts::LN_2;
        Self {
            local_time: workload / local_frequency,
            upload_time: input_bits / rate,
            workload,
            input_bits,
            bandwidth,
            power,
            channel_gain,
            noise_power,
            local_frequency,
        }
    }

    /// `(local_time - upload_time) / workload`.
    pub fn valuation(&self) -> f64 {
        (self.local_time - self.upload_time) / self.workload
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WdSample {
    /// Per-cycle time saving, in s/cycle.
    pub valuation: f64,
    /// Program the device's task needs.
    pub program: usize,
    pub physical: Option<PhysicalBlock>,
}

impl WdSample {
    /// Local and upload times. Without a physical block the valuation is
    /// split as `local = max(0, theta L)`, `upload = max(0, -theta L)`.
    pub fn times(&self, workload: f64) -> (f64, f64) {
        match self.physical {
            Some(p) => (p.local_time, p.upload_time),
            None => {
                let saving = self.valuation * workload;
                (saving.max(0.0), (-saving).max(0.0))
            }
        }
    }
}

/// Distribution of one physical parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamDist {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl ParamDist {
    fn violations(&self, path: &str) -> Vec<Violation> {
        match *self {
            ParamDist::Constant { value } if !(value.is_finite() && value > 0.0) => {
                vec![Violation::new(format!("{path}.value"), format!("must be > 0 (got {value:e})"))]
            }
            ParamDist::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low > 0.0 && high >= low) => {
                vec![Violation::new(path, format!("need 0 < low <= high (got [{low:e}, {high:e}])"))]
            }
            _ => Vec::new(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ParamDist::Constant { value } => value,
            ParamDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }
}

/// Per-device physical parameter distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub input_bits: ParamDist,
    pub bandwidth: ParamDist,
    pub power: ParamDist,
    pub channel_gain: ParamDist,
    pub noise_power: ParamDist,
    pub local_frequency: ParamDist,
}

impl PhysicalParams {
    pub fn violations(&self, path: &str) -> Vec<Violation> {
        [
            ("input_bits", &self.input_bits),
            ("bandwidth", &self.bandwidth),
            ("power", &self.power),
            ("channel_gain", &self.channel_gain),
            ("noise_power", &self.noise_power),
            ("local_frequency", &self.local_frequency),
        ]
        .iter()
        .flat_map(|(name, d)| d.violations(&format!("{path}.{name}")))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SampleMode {
    /// Valuations drawn from the configured prior.
    #[default]
    Prior,
    /// Valuations computed from sampled physical parameters.
    Physical(PhysicalParams),
}

impl SampleMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            SampleMode::Prior => Ok(()),
            SampleMode::Physical(p) => Error::check(p.violations("physical")),
        }
    }
}

fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn type_distribution(config: &SystemConfig) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(config.catalog.popularities())
        .map_err(|e| Error::invalid("catalog.programs[*].popularity", e.to_string()))
}

fn draw(
    config: &SystemConfig,
    mode: &SampleMode,
    types: &WeightedIndex<f64>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<WdSample> {
    (0..count)
        .map(|_| {
            let program = types.sample(rng);
            match mode {
                SampleMode::Prior => WdSample { valuation: config.valuation.sample(rng), program, physical: None },
                SampleMode::Physical(p) => {
                    let block = PhysicalBlock::new(
                        config.catalog.programs[program].workload,
                        p.input_bits.sample(rng),
                        p.bandwidth.sample(rng),
                        p.power.sample(rng),
                        p.channel_gain.sample(rng),
                        p.noise_power.sample(rng),
                        p.local_frequency.sample(rng),
                    );
                    WdSample { valuation: block.valuation(), program, physical: Some(block) }
                }
            }
        })
        .collect()
}

/// `M` devices with i.i.d. program types and valuations, drawn from stream
/// `replication` of `seed`.
pub fn sample_population(
    config: &SystemConfig,
    mode: &SampleMode,
    seed: u64,
    replication: u64,
) -> Result<Vec<WdSample>> {
    config.validate()?;
    mode.validate()?;
    let types = type_distribution(config)?;
    let mut rng = replication_rng(seed, replication);
    Ok(draw(config, mode, &types, config.wds as usize, &mut rng))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decisions {
    pub offload: Vec<bool>,
    /// Realized number of offloaders `m`.
    pub offloaders: usize,
}

/// Threshold rule: offload iff the program is cached and `theta >= price + delta`.
pub fn play_threshold_policy(population: &[WdSample], prices: &[f64], delta: f64, cache: &CacheSet) -> Decisions {
    let offload: Vec<bool> = population
        .iter()
        .map(|wd| cache.contains(wd.program) && offloads(wd.valuation, prices[wd.program], delta))
        .collect();
    let offloaders = offload.iter().filter(|&&a| a).count();
    Decisions { offload, offloaders }
}

/// Realized total cost of one device: local time, or upload plus shared edge
/// time plus payment.
pub fn realized_cost(
    config: &SystemConfig,
    prices: &[f64],
    sample: &WdSample,
    offload: bool,
    offloaders: usize,
) -> Result<f64> {
    let workload = config.catalog.programs[sample.program].workload;
    let (local, upload) = sample.times(workload);
    if !offload {
        return Ok(local);
    }
    if offloaders == 0 {
        return Err(Error::Precondition("an offloading device implies m >= 1".into()));
    }
    Ok(upload + workload * offloaders as f64 / config.edge_frequency + workload * prices[sample.program])
}

/// Expected cost when the number of other offloaders has mean `competitors`.
pub fn expected_cost(config: &SystemConfig, prices: &[f64], sample: &WdSample, offload: bool, competitors: f64) -> f64 {
    let workload = config.catalog.programs[sample.program].workload;
    let (local, upload) = sample.times(workload);
    if offload {
        upload + workload * (competitors + 1.0) / config.edge_frequency + workload * prices[sample.program]
    } else {
        local
    }
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Mean, unbiased variance and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// 95% normal half-width.
    pub half_width: f64,
}

impl Estimate {
    pub fn from_values(values: impl Iterator<Item = f64> + Clone) -> Self {
        let mut n = 0usize;
        let mut total = Kahan::default();
        for v in values.clone() {
            total.add(v);
            n += 1;
        }
        let mean = if n > 0 { total.sum / n as f64 } else { 0.0 };
        let mut squares = Kahan::default();
        for v in values {
            squares.add((v - mean) * (v - mean));
        }
        let variance = if n > 1 { squares.sum / (n - 1) as f64 } else { 0.0 };
        let std_error = if n > 0 { (variance / n as f64).sqrt() } else { 0.0 };
        Self { mean, variance, std_error, half_width: Z95 * std_error }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffloadFrequency {
    pub devices: u64,
    pub offloaded: u64,
    pub frequency: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub std_error: f64,
    pub half_width: f64,
    /// `1 - F(delta* + pi_j)`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replications: u64,
    pub seed: u64,
    pub delta: f64,
    pub offload: Vec<OffloadFrequency>,
    /// Per-replication base station profit.
    pub profit: Estimate,
    /// Analytic expected profit for the same prices and cache.
    pub predicted_profit: f64,
    /// Realized offloader count `m` per replication.
    pub offloaders: Estimate,
    pub predicted_offloaders_mean: f64,
    pub predicted_offloaders_variance: f64,
    /// Mean realized cost per device, in s.
    pub mean_cost: Estimate,
    /// Largest expected-cost reduction from flipping a threshold decision, in s.
    pub max_deviation_gain: f64,
}

struct Replication {
    devices: Vec<u64>,
    offloaded: Vec<u64>,
    offloaders: usize,
    profit: f64,
    mean_cost: f64,
}

fn check_inputs(config: &SystemConfig, prices: &[f64], cache: &CacheSet, replications: u64) -> Result<()> {
    config.validate()?;
    config.check_prices(prices)?;
    if cache.num_programs() != config.num_programs() {
        return Err(Error::invalid("cache", "must cover every program"));
    }
    if replications == 0 {
        return Err(Error::invalid("replications", "must be >= 1"));
    }
    Ok(())
}

/// Simulates `replications` independent populations at fixed prices and cache.
pub fn estimate_profit(
    config: &SystemConfig,
    prices: &[f64],
    cache: &CacheSet,
    mode: &SampleMode,
    replications: u64,
    seed: u64,
) -> Result<SimulationReport> {
    check_inputs(config, prices, cache, replications)?;
    mode.validate()?;
    let eq = solve_delta_default(config, prices)?;
    let types = type_distribution(config)?;
    let n = config.num_programs();
    let acquisition: f64 = cache.indices().map(|j| config.catalog.programs[j].acquisition_cost).sum();

    let runs: Vec<Result<Replication>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, r);
            let population = draw(config, mode, &types, config.wds as usize, &mut rng);
            let decisions = play_threshold_policy(&population, prices, eq.delta, cache);
            let mut devices = vec![0u64; n];
            let mut offloaded = vec![0u64; n];
            let mut revenue = Kahan::default();
            let mut cost = Kahan::default();
            for (wd, &a) in population.iter().zip(&decisions.offload) {
                devices[wd.program] += 1;
                if a {
                    offloaded[wd.program] += 1;
                    revenue.add(config.catalog.programs[wd.program].workload * prices[wd.program]);
                }
                cost.add(realized_cost(config, prices, wd, a, decisions.offloaders)?);
            }
            Ok(Replication {
                devices,
                offloaded,
                offloaders: decisions.offloaders,
                profit: revenue.sum - acquisition,
                mean_cost: cost.sum / config.devices(),
            })
        })
        .collect();
    let runs: Vec<Replication> = runs.into_iter().collect::<Result<_>>()?;

    let offload = (0..n)
        .map(|j| {
            let devices: u64 = runs.iter().map(|r| r.devices[j]).sum();
            let offloaded: u64 = runs.iter().map(|r| r.offloaded[j]).sum();
            let frequency = if devices > 0 { offloaded as f64 / devices as f64 } else { 0.0 };
            let std_error = if devices > 0 { (frequency * (1.0 - frequency) / devices as f64).sqrt() } else { 0.0 };
            let predicted = if cache.contains(j) { eq.offload_prob[j] } else { 0.0 };
            OffloadFrequency { devices, offloaded, frequency, std_error, half_width: Z95 * std_error, predicted }
        })
        .collect::<Vec<_>>();

    let p_offload: f64 = config.catalog.popularities().zip(&offload).map(|(q, o)| q * o.predicted).sum();
    let predicted_profit = cache
        .indices()
        .map(|j| {
            let p = &config.catalog.programs[j];
            offload[j].predicted * p.popularity * config.devices() * prices[j] * p.workload - p.acquisition_cost
        })
        .fold(0.0, |acc, v| acc + v);

    Ok(SimulationReport {
        replications,
        seed,
        delta: eq.delta,
        offload,
        profit: Estimate::from_values(runs.iter().map(|r| r.profit)),
        predicted_profit,
        offloaders: Estimate::from_values(runs.iter().map(|r| r.offloaders as f64)),
        predicted_offloaders_mean: config.devices() * p_offload,
        predicted_offloaders_variance: config.devices() * p_offload * (1.0 - p_offload),
        mean_cost: Estimate::from_values(runs.iter().map(|r| r.mean_cost)),
        max_deviation_gain: exact_deviation_gain(config, prices, cache, eq.delta),
    })
}

fn deviation_grid(config: &SystemConfig) -> Vec<f64> {
    let (lo, hi) = config.valuation.effective_support();
    let step = (hi - lo) / (DEVIATION_GRID - 1) as f64;
    (0..DEVIATION_GRID).map(|i| lo + step * i as f64).collect()
}

/// Gain from flipping the threshold decision at valuation `theta`, given the
/// mean number of other offloaders. Positive means the rule is not a best reply.
fn flip_gain(config: &SystemConfig, prices: &[f64], program: usize, theta: f64, delta: f64, competitors: f64) -> f64 {
    let wd = WdSample { valuation: theta, program, physical: None };
    let rule = offloads(theta, prices[program], delta);
    expected_cost(config, prices, &wd, rule, competitors) - expected_cost(config, prices, &wd, !rule, competitors)
}

fn exact_deviation_gain(config: &SystemConfig, prices: &[f64], cache: &CacheSet, delta: f64) -> f64 {
    let competitors = (config.devices() - 1.0) * mixture_survival(&config.valuation, &config.catalog, prices, delta);
    let grid = deviation_grid(config);
    cache
        .indices()
        .flat_map(|j| grid.iter().map(move |&theta| (j, theta)))
        .map(|(j, theta)| flip_gain(config, prices, j, theta, delta, competitors))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Grid size per cached program.
    pub grid_points: usize,
    /// Largest gain with `E[m'] = (M - 1)(1 - G(delta))` exactly.
    pub max_gain: f64,
    /// Largest gain with `E[m']` replaced by its Monte Carlo estimate.
    pub max_gain_mc: f64,
    /// Standard error of the Monte Carlo gain (same for every grid point).
    pub std_error: f64,
    pub expected_competitors: f64,
    pub competitors: Estimate,
    /// Program and valuation where `max_gain_mc` is attained.
    pub worst_program: usize,
    pub worst_valuation: f64,
}

/// Checks that no device on a valuation grid gains by deviating from the
/// threshold rule. The number of other offloaders is both computed exactly
/// and estimated by simulating the other `M - 1` devices.
pub fn deviation_check(
    config: &SystemConfig,
    prices: &[f64],
    cache: &CacheSet,
    delta: f64,
    replications: u64,
    seed: u64,
) -> Result<DeviationReport> {
    check_inputs(config, prices, cache, replications)?;
    let types = type_distribution(config)?;
    let others = config.wds as usize - 1;
    let counts: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, DEVIATION_STREAM | r);
            let population = draw(config, &SampleMode::Prior, &types, others, &mut rng);
            play_threshold_policy(&population, prices, delta, cache).offloaders as f64
        })
        .collect();
    let competitors = Estimate::from_values(counts.iter().copied());
    let expected = (config.devices() - 1.0) * mixture_survival(&config.valuation, &config.catalog, prices, delta);

    let grid = deviation_grid(config);
    let mut worst = (f64::NEG_INFINITY, 0, f64::NAN);
    let mut std_error: f64 = 0.0;
    for j in cache.indices() {
        let workload = config.catalog.programs[j].workload;
        std_error = std_error.max(workload * competitors.std_error / config.edge_frequency);
        for &theta in &grid {
            let gain = flip_gain(config, prices, j, theta, delta, competitors.mean);
            if gain > worst.0 {
                worst = (gain, j, theta);
            }
        }
    }
    Ok(DeviationReport {
        grid_points: grid.len(),
        max_gain: exact_deviation_gain(config, prices, cache, delta),
        max_gain_mc: worst.0,
        std_error,
        expected_competitors: expected,
        competitors,
        worst_program: worst.1,
        worst_valuation: worst.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Program, ProgramCatalog};
    use crate::valuation::ValuationModel;

    fn config(q: &[f64], wds: u32) -> SystemConfig {
        SystemConfig {
            wds,
            edge_frequency: 1e8,
            catalog: ProgramCatalog::new(
                q.iter()
                    .map(|&popularity| Program { popularity, workload: 3e8, size: 1.0, acquisition_cost: 1.0 })
                    .collect(),
                q.len() as f64,
            ),
            valuation: ValuationModel::Uniform { lower: -1e-7, upper: 1e-7 },
        }
    }

    #[test]
    fn population_is_deterministic() {
        let c = config(&[0.5, 0.5], 4);
        let a = sample_population(&c, &SampleMode::Prior, 7, 0).unwrap();
        let b = sample_population(&c, &SampleMode::Prior, 7, 0).unwrap();
        let other = sample_population(&c, &SampleMode::Prior, 7, 1).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn unit_snr_upload_takes_one_second() {
        let block = PhysicalBlock::new(1e8, 1.0, 1.0, 1.0, 2.0, 2.0, 1e9);
        assert!((block.upload_time - 1.0).abs() < 1e-15);
        assert!((block.local_time - 0.1).abs() < 1e-15);
        assert!((block.valuation() - (0.1 - 1.0) / 1e8).abs() < 1e-12 * 0.9 / 1e8);
    }

    #[test]
    fn rejects_nonpositive_physical_parameters() {
        let constant = ParamDist::Constant { value: 1.0 };
        let params = PhysicalParams {
            input_bits: constant,
            bandwidth: ParamDist::Constant { value: 0.0 },
            power: ParamDist::Uniform { low: -1.0, high: 1.0 },
            channel_gain: constant,
            noise_power: constant,
            local_frequency: constant,
        };
        let err = sample_population(&config(&[1.0], 4), &SampleMode::Physical(params), 1, 0).unwrap_err();
        let Error::Invalid(v) = err else { panic!() };
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].field, "physical.bandwidth.value");
        assert_eq!(v[1].field, "physical.power");
    }

    #[test]
    fn policy_edges() {
        let cache = CacheSet::full(2);
        let wd = |valuation, program| WdSample { valuation, program, physical: None };
        let pop = [wd(-1e-7, 0), wd(0.0, 1)];
        assert_eq!(play_threshold_policy(&pop, &[5e-8, 5e-8], 4e-8, &cache).offloaders, 0);
        let d = play_threshold_policy(&[wd(9e-8, 0)], &[5e-8, 5e-8], 4e-8, &cache);
        assert_eq!(d.offload, vec![true]);
        let partial = CacheSet::from_indices(2, &[0]);
        assert_eq!(play_threshold_policy(&[wd(1e-7, 1)], &[5e-8, 0.0], 1e-8, &partial).offloaders, 0);
    }

    #[test]
    fn realized_cost_cases() {
        let c = config(&[1.0], 4);
        let wd = WdSample { valuation: 5e-8, program: 0, physical: None };
        assert_eq!(realized_cost(&c, &[0.0], &wd, false, 3).unwrap(), 5e-8 * 3e8);
        assert_eq!(realized_cost(&c, &[0.0], &wd, true, 1).unwrap(), 3e8 / 1e8);
        assert!(realized_cost(&c, &[0.0], &wd, true, 0).is_err());
    }

    #[test]
    fn indifference_at_the_threshold() {
        let c = config(&[1.0], 100);
        let eq = solve_delta_default(&c, &[5e-8]).unwrap();
        let wd = WdSample { valuation: 5e-8 + eq.delta, program: 0, physical: None };
        let competitors = 99.0 * eq.offload_prob[0];
        let a = expected_cost(&c, &[5e-8], &wd, true, competitors);
        let b = expected_cost(&c, &[5e-8], &wd, false, competitors);
        assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
    }

    #[test]
    fn physical_decisions_match_threshold_rule() {
        let c = config(&[0.5, 0.5], 200);
        let params = PhysicalParams {
            input_bits: ParamDist::Uniform { low: 1e5, high: 1e6 },
            bandwidth: ParamDist::Constant { value: 1e6 },
            power: ParamDist::Constant { value: 0.1 },
            channel_gain: ParamDist::Uniform { low: 1e-6, high: 1e-4 },
            noise_power: ParamDist::Constant { value: 1e-9 },
            local_frequency: ParamDist::Uniform { low: 3e6, high: 1e8 },
        };
        let prices = [1e-9, 2e-9];
        let eq = solve_delta_default(&c, &prices).unwrap();
        let competitors = 199.0 * (0.5 * eq.offload_prob[0] + 0.5 * eq.offload_prob[1]);
        let pop = sample_population(&c, &SampleMode::Physical(params), 3, 0).unwrap();
        let rule = play_threshold_policy(&pop, &prices, eq.delta, &CacheSet::full(2));
        let mut offloaded = 0;
        for (wd, &a) in pop.iter().zip(&rule.offload) {
            let block = wd.physical.unwrap();
            assert!(
                (wd.valuation - (block.local_time - block.upload_time) / block.workload).abs()
                    <= 1e-12 * wd.valuation.abs()
            );
            let by_cost =
                expected_cost(&c, &prices, wd, true, competitors) <= expected_cost(&c, &prices, wd, false, competitors);
            if (wd.valuation - prices[wd.program] - eq.delta).abs() > 1e-12 * eq.delta {
                assert_eq!(by_cost, a);
            }
            offloaded += a as usize;
        }
        assert!(offloaded > 0 && offloaded < 200);
    }

    #[test]
    fn empty_cache_earns_nothing() {
        let c = config(&[0.5, 0.5], 20);
        let prices = [c.sentinel_price(); 2];
        let r = estimate_profit(&c, &prices, &CacheSet::empty(2), &SampleMode::Prior, 200, 1).unwrap();
        assert_eq!(r.profit.mean, 0.0);
        assert_eq!(r.profit.variance, 0.0);
        assert_eq!(r.offloaders.mean, 0.0);
    }

    #[test]
    fn single_program_profit_matches_analytic() {
        let c = config(&[1.0], 100);
        let r = estimate_profit(&c, &[5e-8], &CacheSet::full(1), &SampleMode::Prior, 20_000, 11).unwrap();
        let o = &r.offload[0];
        assert!((o.frequency - o.predicted).abs() <= 4.0 * o.std_error, "{o:?}");
        assert!((r.profit.mean - r.predicted_profit).abs() <= 4.0 * r.profit.std_error);
        assert!((r.offloaders.mean - 100.0 * o.predicted).abs() <= 4.0 * r.offloaders.std_error);
        assert!(r.max_deviation_gain <= 1e-12);
    }

    #[test]
    fn deviation_gain_vanishes() {
        let c = config(&[0.5, 0.5], 100);
        let prices = [5e-8, 4e-8];
        let eq = solve_delta_default(&c, &prices).unwrap();
        let r = deviation_check(&c, &prices, &CacheSet::full(2), eq.delta, 5_000, 3).unwrap();
        assert!(r.max_gain <= 1e-9, "{r:?}");
        assert!(r.max_gain_mc <= 3.0 * r.std_error, "{r:?}");
        assert!((r.competitors.mean - r.expected_competitors).abs() <= 4.0 * r.competitors.std_error);
    }
}
